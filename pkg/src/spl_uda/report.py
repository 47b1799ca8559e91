"""Experiment reports (CSV / markdown tables) and the 2-D PCA export."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dataio import as_arrays


@dataclass(frozen=True)
class ExperimentRow:
    task: str
    method: str
    seed: int
    T: int
    initial_accuracy: float | None
    final_accuracy: float | None


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def add(self, row: ExperimentRow) -> None:
        self.rows.append(row)

    def _groups(self) -> dict:
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.task, r.method, r.T), []).append(r)
        return groups

    def aggregates(self) -> dict:
        """``(task, method, T) -> (mean initial accuracy, mean final accuracy, n seeds)``."""
        out = {}
        for key, rows in self._groups().items():
            out[key] = (_mean([r.initial_accuracy for r in rows]),
                        _mean([r.final_accuracy for r in rows]), len(rows))
        return out

    def mean_final(self, method: str, T: int | None = None, task: str | None = None) -> float:
        vals = [r.final_accuracy for r in self.rows
                if r.method == method and (T is None or r.T == T) and (task is None or r.task == task)]
        return _mean(vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "method", "seed", "T", "initial_accuracy", "final_accuracy"])
        for r in self.rows:
            w.writerow([r.task, r.method, r.seed, r.T, _fmt(r.initial_accuracy), _fmt(r.final_accuracy)])
        for (task, method, T), (init, final, n) in self.aggregates().items():
            w.writerow([task, method, "mean", T, _fmt(init), _fmt(final)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Methods as rows, tasks as columns plus an average column (accuracy in %)."""
        agg = self.aggregates()
        tasks = list(dict.fromkeys(k[0] for k in agg))
        row_keys = list(dict.fromkeys((k[1], k[2]) for k in agg))
        multi_T = len({k[1] for k in row_keys}) > 1
        lines = ["| Method | " + " | ".join(tasks) + " | Average |",
                 "|---" * (len(tasks) + 2) + "|"]
        for method, T in row_keys:
            label = f"{method} (T={T})" if multi_T else method
            vals = [agg[(t, method, T)][1] if (t, method, T) in agg else None for t in tasks]
            cells = [_pct(v) for v in vals]
            present = [v for v in vals if v is not None]
            cells.append(_pct(_mean(present)) if present else "-")
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _mean(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return sum(vals) / len(vals)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _pct(v) -> str:
    return "-" if v is None else f"{100.0 * v:.1f}"


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

class DegenerateProjectionError(ValueError):
    pass


def pca_axes(X: np.ndarray, n_components: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, top principal axes (columns) and all eigenvalues in descending order.

    Each axis is signed so that its largest-magnitude loading is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3 or X.shape[1] < 2:
        raise DegenerateProjectionError("need at least 3 samples of dimension >= 2")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / X.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 1e-12 * max(1.0, np.abs(X).max() ** 2):
        raise DegenerateProjectionError("data has rank 0 after centring")
    axes = evecs[:, :n_components].copy()
    for j in range(axes.shape[1]):
        i = np.argmax(np.abs(axes[:, j]))
        if axes[i, j] < 0:
            axes[:, j] = -axes[:, j]
    return mean, axes, np.clip(evals, 0.0, None)


def pca_project(samples) -> list[tuple]:
    """Rows ``(id, domain, label, synthetic, pc1, pc2)`` for real and synthetic samples."""
    X, _ = as_arrays(samples)
    mean, axes, _ = pca_axes(X, 2)
    coords = (X - mean) @ axes
    return [(s.sample_id, s.domain, s.label, s.synthetic, float(c[0]), float(c[1]))
            for s, c in zip(samples, coords)]


def projection_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "domain", "label", "synthetic", "pc1", "pc2"])
    for sid, dom, lab, syn, p1, p2 in rows:
        w.writerow([sid, dom, "-" if lab is None else lab, int(syn), repr(p1), repr(p2)])
    return buf.getvalue()
