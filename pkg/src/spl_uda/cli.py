"""Command-line driver: ``run``, ``benchgen``, ``ablate`` and ``project``.

Every command is deterministic for a fixed flag set. ``--config FILE`` reads
flat ``key = value`` lines (keys are long flag names, ``#`` starts a comment);
explicit flags win over the file, the file wins over built-in defaults.

Exit status: 0 on success, 2 for bad flags or an invalid grid/spec, 1 for
data errors (unreadable or malformed datasets).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .classifier import TrainConfig
from .dataio import (BenchmarkSpec, DatasetParseError, generate_benchmark, imbalance_ratios, l2_normalize,
                     load_feature_dataset, save_feature_dataset)
from .norm_vae import DegenerateEncodingError, NormVaeConfig
from .pipeline import METHODS, PipelineConfig, normalize_method, run, run_ablation, trace_line
from .pseudo_label import write_selection_csv
from .report import (DegenerateProjectionError, ExperimentReport, ExperimentRow, pca_project,
                     projection_csv)
from .tensor_core import ShapeError

METHOD_FLAGS = tuple(m.replace("_", "-") for m in METHODS)
AUGMENT_MODES = ("cross", "cross+recon", "off")
QUOTA_RULES = ("method", "naive", "star", "all")
_SPEC = BenchmarkSpec()


class UsageFailure(Exception):
    """Bad flag value found after parsing; maps to exit status 2."""


def read_config(path) -> dict:
    """Flat ``key = value`` file -> dict with dashes turned into underscores."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageFailure(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageFailure(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageFailure(f"expected comma-separated integers, got {text!r}") from None


def _add_data_flags(p):
    p.add_argument("--source", required=False, help="labelled source CSV")
    p.add_argument("--target", required=False, help="target CSV (labels, if any, only score the run)")
    p.add_argument("--l2-normalize", nargs="?", const="true", default="false",
                   help="L2-normalize every feature vector first")
    p.add_argument("--out", default=".", help="output directory")


def _add_train_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100, help="classifier epochs per iteration")
    p.add_argument("--lr", type=float, default=1e-3, help="classifier learning rate")
    p.add_argument("--batch", type=int, default=64, help="classifier batch size")
    p.add_argument("--vae-epochs", type=int, default=50)
    p.add_argument("--vae-lr", type=float, default=1e-3)
    p.add_argument("--vae-batch", type=int, default=64)
    p.add_argument("--latent-dim", type=int, default=64)
    p.add_argument("--hidden", type=int, default=512, help="norm-VAE hidden width")
    p.add_argument("--augment", default="cross", help="|".join(AUGMENT_MODES))
    p.add_argument("--quota", default="method",
                   help="quota rule override: method (the method's own), naive, star or all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spl-uda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one method, one seed")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--method", default="naive-spl", help="|".join(METHOD_FLAGS))
    p.add_argument("--iterations", type=int, default=10, help="T")
    p.add_argument("--task", default="task", help="column name in report.md")

    p = sub.add_parser("ablate", help="grid over methods x T values x seeds")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--methods", default=",".join(METHOD_FLAGS[:3]), help="comma-separated methods")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--iterations", default="10", help="comma-separated T values")
    p.add_argument("--task", default="task")

    p = sub.add_parser("benchgen", help="write a synthetic source/target pair")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--per-class", type=int, default=100, help="samples per class in each domain")
    p.add_argument("--centroid-scale", type=float, default=_SPEC.centroid_scale)
    p.add_argument("--spread", type=float, default=_SPEC.spread)
    p.add_argument("--translation", type=float, default=_SPEC.translation)
    p.add_argument("--rotation", type=float, default=_SPEC.rotation, help="radians")
    p.add_argument("--cov-shift", type=float, default=_SPEC.cov_shift)
    p.add_argument("--imbalance", type=float, default=1.0,
                   help="target ratio between the first and second half of the classes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")

    p = sub.add_parser("project", help="2-D PCA coordinates of real and synthetic features")
    p.add_argument("--source", help="dataset CSV")
    p.add_argument("--target", help="dataset CSV")
    p.add_argument("--synthetic", help="dataset CSV of generated samples (marked synthetic)")
    p.add_argument("--out", default=".")

    for command in sub.choices.values():
        command.add_argument("--config", help="flat key = value file; flags override it")
    parser.commands = sub.choices
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config(args.config)
        except OSError as exc:
            parser.error(f"cannot read config: {exc}")
        except UsageFailure as exc:
            parser.error(str(exc))
        sub = parser.commands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"config", "command"})
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)  # re-parse so explicit flags still win
    return args


def _load_pair(args):
    if not args.source or not args.target:
        raise UsageFailure("--source and --target are required")
    source, smeta = load_feature_dataset(args.source, role="S")
    target, tmeta = load_feature_dataset(args.target, role="T")
    if smeta.dim != tmeta.dim:
        raise ShapeError(f"source dim {smeta.dim} != target dim {tmeta.dim}")
    if any(s.label is None for s in source):
        raise ValueError("source rows must all be labelled")
    if _bool(args.l2_normalize):
        source, target = l2_normalize(source), l2_normalize(target)
    classes = max(smeta.classes, tmeta.classes)
    return source, target, tmeta.truth or None, classes


def _pipeline_config(args, method: str, T: int) -> PipelineConfig:
    if args.augment not in AUGMENT_MODES:
        raise UsageFailure(f"--augment must be one of {', '.join(AUGMENT_MODES)}")
    if args.quota not in QUOTA_RULES:
        raise UsageFailure(f"--quota must be one of {', '.join(QUOTA_RULES)}")
    try:
        return PipelineConfig(
            method=method, T=T, seed=args.seed, augment=args.augment,
            quota_rule=None if args.quota == "method" else args.quota,
            classifier=TrainConfig(args.epochs, args.batch, args.lr),
            vae=NormVaeConfig(args.vae_epochs, args.vae_batch, args.vae_lr, latent_dim=args.latent_dim,
                              hidden=args.hidden))
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None


def _methods(text) -> list[str]:
    try:
        return [normalize_method(m) for m in str(text).split(",") if m.strip()]
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def cmd_run(args) -> int:
    method = _methods(args.method)
    if len(method) != 1:
        raise UsageFailure("--method takes exactly one method")
    config = _pipeline_config(args, method[0], args.iterations)
    source, target, truth, classes = _load_pair(args)
    out = Path(args.out)
    traces = []
    result = run(source, target, config, truth, classes,
                 on_trace=lambda tr: traces.append(trace_line(
                     {"task": args.task, "method": config.method, "seed": config.seed, "T": config.T,
                      **tr.to_dict()})))
    report = ExperimentReport([ExperimentRow(args.task, config.method, config.seed, config.T,
                                             result.initial_accuracy, result.final_accuracy)])
    _write(out, "report.csv", report.to_csv())
    _write(out, "report.md", report.to_markdown())
    _write(out, "trace.jsonl", "".join(line + "\n" for line in traces))
    write_selection_csv(out / "selected.csv", result.selections)
    mixed = list(source) + list(target)
    if result.synthetic:
        # generated samples keep the id of the real sample they came from, so renumber for the file
        renumbered = [replace(s, sample_id=i) for i, s in enumerate(result.synthetic)]
        save_feature_dataset(out / "synthetic.csv", renumbered, classes)
        mixed += result.synthetic
    _write(out, "projection.csv", projection_csv(pca_project(mixed)))
    final = "n/a" if result.final_accuracy is None else f"{100 * result.final_accuracy:.1f}%"
    print(f"{config.method}: final target accuracy {final}; outputs in {out}")
    return 0


def cmd_ablate(args) -> int:
    methods = _methods(args.methods)
    seeds, T_values = _int_list(args.seeds), _int_list(args.iterations)
    if not methods or not seeds or not T_values:
        raise UsageFailure("empty grid: need at least one method, seed and T value")
    base = _pipeline_config(args, methods[0], T_values[0])
    source, target, truth, classes = _load_pair(args)
    lines = []
    report = run_ablation(source, target, methods, seeds, T_values, base, truth, args.task, classes,
                          trace_sink=lambda rec: lines.append(trace_line(rec)))
    out = Path(args.out)
    _write(out, "report.csv", report.to_csv())
    _write(out, "report.md", report.to_markdown())
    _write(out, "trace.jsonl", "".join(line + "\n" for line in lines))
    print(report.to_markdown(), end="")
    return 0


def cmd_benchgen(args) -> int:
    ratios = imbalance_ratios(args.classes, args.imbalance) if args.imbalance != 1.0 else ()
    spec = BenchmarkSpec(classes=args.classes, dim=args.dim, source_per_class=args.per_class,
                         target_per_class=args.per_class, centroid_scale=args.centroid_scale,
                         spread=args.spread, translation=args.translation, rotation=args.rotation,
                         cov_shift=args.cov_shift, target_class_ratios=ratios, seed=args.seed)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None
    source, target, truth = generate_benchmark(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # the target file keeps its labels so runs can be scored; loading it as a target strips them
    labelled = [replace(s, label=truth[s.sample_id]) for s in target]
    save_feature_dataset(out / "source.csv", source, args.classes)
    save_feature_dataset(out / "target.csv", labelled, args.classes)
    print(f"wrote {len(source)} source and {len(target)} target samples to {out}")
    return 0


def cmd_project(args) -> int:
    samples = []
    for path, synthetic in ((args.source, False), (args.target, False), (args.synthetic, True)):
        if path:
            rows, _ = load_feature_dataset(path)
            samples += [replace(s, synthetic=True) for s in rows] if synthetic else rows
    if not samples:
        raise UsageFailure("give at least one of --source, --target, --synthetic")
    _write(Path(args.out), "projection.csv", projection_csv(pca_project(samples)))
    return 0


COMMANDS = {"run": cmd_run, "ablate": cmd_ablate, "benchgen": cmd_benchgen, "project": cmd_project}


def main(argv=None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return COMMANDS[args.command](args)
    except UsageFailure as exc:
        print(f"spl-uda {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetParseError, ShapeError, DegenerateEncodingError, DegenerateProjectionError,
            ValueError, OSError) as exc:
        print(f"spl-uda {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
