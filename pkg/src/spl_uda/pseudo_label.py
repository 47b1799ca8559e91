"""Pseudo-label assignment and class-wise selection of confident target samples."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, replace

from .classifier import ClassifierParams, predict_arrays
from .dataio import as_arrays


@dataclass(frozen=True)
class PseudoLabelRecord:
    sample_id: int
    predicted_class: int
    confidence: float
    iteration: int = 0


def assign_pseudo_labels(classifier: ClassifierParams, target_set, iteration: int = 0
                         ) -> list[PseudoLabelRecord]:
    if not target_set:
        raise ValueError("empty target set")
    X, _ = as_arrays(target_set)
    cls, conf = predict_arrays(classifier, X)
    return [PseudoLabelRecord(s.sample_id, int(c), float(p), iteration)
            for s, c, p in zip(target_set, cls, conf)]


def _check_k(k: int, T: int) -> None:
    if T < 1 or not 1 <= k <= T:
        raise ValueError(f"iteration k={k} outside [1, T={T}]")


def quota_naive(c: int, k: int, T: int, n_t: int, C: int, n_hat: int) -> int:
    """Balanced quota ``min(floor(k n_t / (T C)), n_hat)``.

    A class with at least one prediction always gets at least one slot.
    ``c`` is accepted for symmetry with per-class callers; the law does not
    depend on it.
    """
    _check_k(k, T)
    if n_t < 1 or C < 1 or n_hat < 0:
        raise ValueError("n_t and C must be positive and n_hat non-negative")
    q = min((k * n_t) // (T * C), n_hat)
    if q == 0 and n_hat >= 1:
        q = 1
    return q


def quota_star(k: int, T: int, n_hat: int) -> int:
    """Proportional quota ``floor(k n_hat / T)``."""
    _check_k(k, T)
    if n_hat < 0:
        raise ValueError("n_hat must be non-negative")
    return (k * n_hat) // T


def quota_all(n_hat: int) -> int:
    return n_hat


def predicted_counts(records, class_count: int) -> list[int]:
    counts = Counter(r.predicted_class for r in records)
    return [counts.get(c, 0) for c in range(class_count)]


def compute_quotas(records, rule: str, k: int, T: int, class_count: int) -> dict[int, int]:
    """Per-class quotas for ``rule`` in {"naive", "star", "all"}."""
    n_t = len(records)
    n_hat = predicted_counts(records, class_count)
    if rule == "naive":
        return {c: quota_naive(c, k, T, n_t, class_count, n_hat[c]) for c in range(class_count)}
    if rule == "star":
        return {c: quota_star(k, T, n_hat[c]) for c in range(class_count)}
    if rule == "all":
        return {c: quota_all(n_hat[c]) for c in range(class_count)}
    raise ValueError(f"unknown quota rule {rule!r}")


def select_subset(records, quotas: dict[int, int]) -> list[PseudoLabelRecord]:
    """Top-confidence records per class, ties broken by ascending sample id.

    The result is ordered by (class, confidence desc, id) and does not depend
    on the order of ``records``.
    """
    by_class: dict[int, list] = {}
    for r in records:
        by_class.setdefault(r.predicted_class, []).append(r)
    missing = set(by_class) - set(quotas)
    if missing:
        raise ValueError(f"no quota given for classes {sorted(missing)}")
    selected = []
    for c in sorted(by_class):
        ranked = sorted(by_class[c], key=lambda r: (-r.confidence, r.sample_id))
        selected.extend(ranked[:max(0, quotas[c])])
    return selected


def selected_samples(target_set, selected) -> list:
    """Target samples of a selection, carrying their pseudo-labels as labels."""
    by_id = {s.sample_id: s for s in target_set}
    return [replace(by_id[r.sample_id], label=r.predicted_class) for r in selected]


def write_selection_csv(path, selections) -> None:
    """``selections``: iterable of record lists, one per iteration."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "pseudo_class", "confidence", "iteration"])
        for records in selections:
            for r in records:
                w.writerow([r.sample_id, r.predicted_class, repr(r.confidence), r.iteration])


def read_selection_csv(path) -> list[PseudoLabelRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [PseudoLabelRecord(int(r["sample_id"]), int(r["pseudo_class"]),
                              float(r["confidence"]), int(r["iteration"])) for r in rows]
