"""Selective pseudo-labelling loops: Baseline, naive-SPL*, naive-SPL and norm-VAE-SPL.

All four share one loop::

    train on source; pseudo-label every target sample
    for k in 1..T:
        pick S_k class-wise by confidence under the method's quota rule
        [norm-VAE-SPL: train the norm-VAE on source + S_k and synthesise]
        retrain from scratch on source + S_k [+ synthetic]
        pseudo-label every target sample again

They differ only in the quota rule and in whether synthetic data is added.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

from .classifier import ClassifierParams, TrainConfig, train_classifier
from .dataio import as_arrays
from .norm_vae import NormVaeConfig, TrainingSkipped, augment, train_norm_vae
from .pseudo_label import (assign_pseudo_labels, compute_quotas, predicted_counts, select_subset,
                           selected_samples)
from .report import ExperimentReport, ExperimentRow
from .tensor_core import RngStream, ShapeError

METHODS = ("baseline", "naive_spl_star", "naive_spl", "norm_vae_spl")
QUOTA_RULE = {"baseline": "all", "naive_spl_star": "star", "naive_spl": "naive", "norm_vae_spl": "naive"}


def normalize_method(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    return key


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "naive_spl"
    T: int = 10
    classifier: TrainConfig = TrainConfig()
    vae: NormVaeConfig = NormVaeConfig()
    augment: str = "cross"
    seed: int = 0
    quota_rule: str | None = None  # overrides the method's rule ("naive", "star", "all")

    def __post_init__(self):
        object.__setattr__(self, "method", normalize_method(self.method))
        if self.T < 1:
            raise ValueError("T must be at least 1")

    @property
    def rule(self) -> str:
        return self.quota_rule or QUOTA_RULE[self.method]


@dataclass
class IterationTrace:
    iteration: int
    selected_counts: list
    selected_total: int
    pseudo_label_accuracy: float | None  # of the selected set, against ground truth
    target_accuracy: float | None  # all target samples, against ground truth
    synthetic_count: int = 0
    vae_skipped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    classifier: ClassifierParams
    predictions: dict  # target sample id -> predicted class from the final classifier
    traces: list
    selections: list = field(default_factory=list)  # PseudoLabelRecord lists, one per iteration
    synthetic: list = field(default_factory=list)  # synthetic samples of the last iteration

    @property
    def initial_accuracy(self):
        return self.traces[0].target_accuracy

    @property
    def final_accuracy(self):
        return self.traces[-1].target_accuracy


def _accuracy(records, truth) -> float | None:
    if truth is None or not records:
        return None
    hits = [truth[r.sample_id] == r.predicted_class for r in records if r.sample_id in truth]
    return sum(hits) / len(hits) if hits else None


def _check_inputs(source_set, target_set) -> int:
    if not source_set or not target_set:
        raise ValueError("source and target sets must be non-empty")
    dims = {s.features.shape[0] for s in source_set} | {s.features.shape[0] for s in target_set}
    if len(dims) != 1:
        raise ShapeError(f"source and target feature dims differ: {sorted(dims)}")
    if any(s.label is None for s in source_set):
        raise ValueError("every source sample needs a label")
    if any(s.label is not None for s in target_set):
        raise ValueError("target samples must be unlabelled (see dataio.strip_labels)")
    ids = [s.sample_id for s in target_set]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate target sample ids")
    _, y = as_arrays(source_set)
    return int(y.max()) + 1


def run(source_set, target_set, config: PipelineConfig, truth: dict | None = None,
        class_count: int | None = None,
        on_trace: Callable[[IterationTrace], None] | None = None) -> RunResult:
    """Run ``config.method``; ``truth`` (id -> class) is only used for the traces."""
    inferred = _check_inputs(source_set, target_set)
    C = max(2, class_count or inferred)
    clf_cfg = replace(config.classifier, seed=config.seed)
    vae_cfg = replace(config.vae, seed=config.seed)
    use_vae = config.method == "norm_vae_spl" and config.augment != "off"

    clf = train_classifier(source_set, clf_cfg, C, stream_tag="classifier/0")
    records = assign_pseudo_labels(clf, target_set, 0)
    traces = [IterationTrace(0, [0] * C, 0, None, _accuracy(records, truth))]
    if on_trace:
        on_trace(traces[0])
    selections, synthetic = [], []

    for k in range(1, config.T + 1):
        quotas = compute_quotas(records, config.rule, k, config.T, C)
        chosen = select_subset(records, quotas)
        chosen = [replace(r, iteration=k) for r in chosen]
        selections.append(chosen)
        s_k = selected_samples(target_set, chosen)

        synthetic, skipped = [], False
        if use_vae:
            try:
                vae = train_norm_vae(source_set, s_k, vae_cfg, stream_tag=f"norm_vae/{k}")
            except TrainingSkipped:
                skipped = True
            else:
                synthetic = augment(vae, source_set, s_k, config.augment,
                                    RngStream(config.seed, f"generate/{k}"))

        clf = train_classifier(list(source_set) + s_k + synthetic, clf_cfg, C,
                               stream_tag=f"classifier/{k}")
        records = assign_pseudo_labels(clf, target_set, k)
        trace = IterationTrace(k, predicted_counts(chosen, C), len(chosen), _accuracy(chosen, truth),
                               _accuracy(records, truth), len(synthetic), skipped)
        traces.append(trace)
        if on_trace:
            on_trace(trace)

    predictions = {r.sample_id: r.predicted_class for r in records}
    return RunResult(clf, predictions, traces, selections, synthetic)


def run_naive_spl(source_set, target_set, config: PipelineConfig = PipelineConfig(), **kw) -> RunResult:
    return run(source_set, target_set, replace(config, method="naive_spl"), **kw)


def run_naive_spl_star(source_set, target_set, config: PipelineConfig = PipelineConfig(), **kw) -> RunResult:
    return run(source_set, target_set, replace(config, method="naive_spl_star"), **kw)


def run_baseline(source_set, target_set, config: PipelineConfig = PipelineConfig(), **kw) -> RunResult:
    return run(source_set, target_set, replace(config, method="baseline"), **kw)


def run_norm_vae_spl(source_set, target_set, config: PipelineConfig = PipelineConfig(), **kw) -> RunResult:
    return run(source_set, target_set, replace(config, method="norm_vae_spl"), **kw)


def run_ablation(source_set, target_set, methods, seeds, T_values, config: PipelineConfig = PipelineConfig(),
                 truth: dict | None = None, task: str = "task", class_count: int | None = None,
                 trace_sink: Callable[[dict], None] | None = None) -> ExperimentReport:
    """Every (method, T, seed) cell of the grid, in input order."""
    methods = [normalize_method(m) for m in methods]
    seeds, T_values = list(seeds), list(T_values)
    if not methods or not seeds or not T_values:
        raise ValueError("methods, seeds and T values must be non-empty")
    report = ExperimentReport()
    for method in methods:
        for T in T_values:
            for seed in seeds:
                cfg = replace(config, method=method, T=T, seed=seed)
                result = run(source_set, target_set, cfg, truth, class_count,
                             on_trace=_tagged_sink(trace_sink, task, method, seed, T))
                report.add(ExperimentRow(task, method, seed, T, result.initial_accuracy, result.final_accuracy))
    return report


def _tagged_sink(trace_sink, task, method, seed, T):
    if trace_sink is None:
        return None

    def sink(trace: IterationTrace) -> None:
        trace_sink({"task": task, "method": method, "seed": seed, "T": T, **trace.to_dict()})
    return sink


def trace_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)
