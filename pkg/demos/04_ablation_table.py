"""The four methods side by side on a small grid of seeds.

Baseline admits every pseudo-label at once, naive-SPL* admits them in
proportion to predicted class sizes, naive-SPL admits a class-balanced
share, and norm-VAE-SPL adds synthetic cross-domain features on top.
A reduced norm-VAE keeps the run to a few minutes on one core.
"""
from spl_uda import BenchmarkSpec, NormVaeConfig, PipelineConfig, generate_benchmark, run_ablation

spec = BenchmarkSpec(cov_shift=1.0, target_per_class=30)
source, target, truth = generate_benchmark(spec)
config = PipelineConfig(vae=NormVaeConfig(epochs=10, hidden=128))
report = run_ablation(source, target, ["baseline", "naive_spl_star", "naive_spl", "norm_vae_spl"],
                      seeds=[0, 1], T_values=[10], config=config, truth=truth, task="cov-shift")
print(report.to_markdown())
