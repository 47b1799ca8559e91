"""A two-domain benchmark and what a source-only classifier makes of it.

The target domain is the source rotated in random planes and translated,
so a classifier fit on source labels alone loses much of its accuracy
when applied to target features.
"""
from spl_uda import BenchmarkSpec, TrainConfig, evaluate, generate_benchmark, train_classifier
from spl_uda.dataio import attach_labels

for name, spec in [("no shift", BenchmarkSpec(translation=0.0, rotation=0.0)),
                   ("default shift", BenchmarkSpec())]:
    source, target, truth = generate_benchmark(spec)
    clf = train_classifier(source, TrainConfig())
    on_source = evaluate(clf, source)
    on_target = evaluate(clf, attach_labels(target, truth))
    print(f"{name:>13}: source {100 * on_source:.1f}%  target {100 * on_target:.1f}%")
