"""Feature datasets: the CSV format, the synthetic two-domain benchmark, splits.

CSV layout (one sample per row)::

    #dim=<d>,classes=<C>
    id,domain,label,f_1,...,f_d

``domain`` is ``S`` or ``T``; ``label`` is an integer or ``-`` when unlabelled.
An empty ``id`` field means "use the row index".
"""
from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .tensor_core import RngStream

SOURCE = "S"
TARGET = "T"
DOMAINS = (SOURCE, TARGET)


@dataclass(frozen=True)
class FeatureSample:
    sample_id: int
    features: np.ndarray = field(repr=False)
    domain: str
    label: int | None = None
    synthetic: bool = False
    origin: str | None = None  # domain of the real sample a synthetic one was generated from

    @property
    def sort_key(self) -> tuple:
        return (self.synthetic, DOMAINS.index(self.domain), self.origin or "", self.sample_id)


def as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into ``(X, y)``; unlabelled rows get label -1."""
    if not samples:
        return np.zeros((0, 0)), np.zeros(0, dtype=int)
    X = np.vstack([s.features for s in samples])
    y = np.array([-1 if s.label is None else s.label for s in samples], dtype=int)
    return X, y


def strip_labels(samples) -> tuple[list[FeatureSample], dict[int, int]]:
    """Hide target ground truth: return label-free samples plus an id -> label map."""
    truth = {s.sample_id: s.label for s in samples if s.label is not None}
    return [replace(s, label=None) for s in samples], truth


def attach_labels(samples, truth: dict[int, int]) -> list[FeatureSample]:
    return [replace(s, label=truth[s.sample_id]) for s in samples if s.sample_id in truth]


def l2_normalize(samples) -> list[FeatureSample]:
    out = []
    for s in samples:
        n = np.linalg.norm(s.features)
        out.append(replace(s, features=s.features / n if n > 0 else s.features))
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

class DatasetParseError(ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class RaggedRowError(DatasetParseError):
    pass


class NonNumericFieldError(DatasetParseError):
    pass


class UnknownDomainError(DatasetParseError):
    pass


class InconsistentDimensionError(DatasetParseError):
    pass


class HeaderError(DatasetParseError):
    pass


_HEADER = re.compile(r"^#\s*dim\s*=\s*(\d+)\s*,\s*classes\s*=\s*(\d+)\s*$")


@dataclass
class DatasetMeta:
    dim: int
    classes: int
    truth: dict = field(default_factory=dict)  # labels held back when loading with role="T"


def load_feature_dataset(path, role: str | None = None) -> tuple[list[FeatureSample], DatasetMeta]:
    """Parse a dataset CSV. ``role`` (``S``/``T``) overrides the per-row domain tag.

    Loading with ``role="T"`` strips every label from the samples; any that
    were present end up in ``meta.truth`` for evaluation only.
    """
    text = Path(path).read_text()
    return parse_feature_dataset(text, role)


def parse_feature_dataset(text: str, role: str | None = None):
    lines = text.splitlines()
    if not lines:
        raise HeaderError(1, "empty file")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise HeaderError(1, f"expected '#dim=<d>,classes=<C>', got {lines[0]!r}")
    dim, classes = int(m.group(1)), int(m.group(2))
    if role is not None and role not in DOMAINS:
        raise ValueError(f"role must be one of {DOMAINS}")
    samples = []
    seen_ids = set()
    for rowno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != dim + 3:
            # the first data row is checked against the header, later ones against each other
            if samples:
                raise RaggedRowError(rowno, f"expected {dim + 3} fields like the rows above, got {len(row)}")
            raise InconsistentDimensionError(rowno, f"header says dim={dim} but row has {len(row) - 3} features")
        raw_id, dom, lab = (c.strip() for c in row[:3])
        try:
            sid = int(raw_id) if raw_id else len(samples)
        except ValueError:
            raise NonNumericFieldError(rowno, f"non-integer id {raw_id!r}") from None
        if dom not in DOMAINS:
            raise UnknownDomainError(rowno, f"unknown domain tag {dom!r}")
        if lab == "-":
            label = None
        else:
            try:
                label = int(lab)
            except ValueError:
                raise NonNumericFieldError(rowno, f"non-integer label {lab!r}") from None
            if not 0 <= label < classes:
                raise DatasetParseError(rowno, f"label {label} outside [0, {classes})")
        try:
            feats = np.array([float(c) for c in row[3:]], dtype=np.float64)
        except ValueError:
            raise NonNumericFieldError(rowno, "non-numeric feature value") from None
        if not np.all(np.isfinite(feats)):
            raise NonNumericFieldError(rowno, "non-finite feature value")
        if sid in seen_ids:
            raise DatasetParseError(rowno, f"duplicate id {sid}")
        seen_ids.add(sid)
        samples.append(FeatureSample(sid, feats, role or dom, label))
    meta = DatasetMeta(dim, classes)
    if role == TARGET:
        samples, meta.truth = strip_labels(samples)
    return samples, meta


def format_feature_dataset(samples, classes: int) -> str:
    if not samples:
        raise ValueError("nothing to write")
    dim = samples[0].features.shape[0]
    buf = io.StringIO()
    buf.write(f"#dim={dim},classes={classes}\n")
    for s in samples:
        if s.features.shape[0] != dim:
            raise ValueError(f"sample {s.sample_id} has dim {s.features.shape[0]}, expected {dim}")
        lab = "-" if s.label is None else str(int(s.label))
        # repr() is the shortest string that round-trips exactly
        buf.write(",".join([str(s.sample_id), s.domain, lab, *map(repr, map(float, s.features))]))
        buf.write("\n")
    return buf.getvalue()


def save_feature_dataset(path, samples, classes: int) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Path(path).write_text(format_feature_dataset(samples, classes))


# ---------------------------------------------------------------------------
# Synthetic benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkSpec:
    """Gaussian class clusters in ``dim`` dimensions plus a fixed domain shift.

    Target samples are ``R @ centroid + translation + A_c @ noise`` where ``R``
    rotates by ``rotation`` radians in ``dim // 2`` random planes, the
    translation has norm ``translation * spread * sqrt(dim)`` and ``A_c`` is
    the identity scaled by ``target_spread`` (times a random anisotropic
    factor when ``cov_shift > 0``).

    The defaults give a shift under which a source-only classifier reaches
    roughly 55% on the target while the target stays learnable.
    """
    classes: int = 10
    dim: int = 64
    source_per_class: int = 100
    target_per_class: int = 100
    centroid_scale: float = 1.0
    spread: float = 2.0
    translation: float = 1.0
    rotation: float = 0.8
    target_spread: float = 1.0
    cov_shift: float = 0.0
    target_class_ratios: tuple = ()  # relative class sizes in the target, empty = balanced
    source_class_ratios: tuple = ()
    seed: int = 0

    def validate(self) -> None:
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.source_per_class < 1 or self.target_per_class < 1:
            raise ValueError("per-class counts must be positive")
        for name in ("centroid_scale", "spread", "target_spread"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("translation", "rotation", "cov_shift"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("target_class_ratios", "source_class_ratios"):
            ratios = getattr(self, name)
            if ratios and (len(ratios) != self.classes or min(ratios) <= 0):
                raise ValueError(f"{name} needs one positive entry per class")

    @staticmethod
    def _counts(per_class: int, ratios, classes: int) -> list[int]:
        if not ratios:
            return [per_class] * classes
        r = np.asarray(ratios, dtype=np.float64)
        # per_class is the size of the largest class
        return [max(1, int(round(per_class * x / r.max()))) for x in r]

    def target_counts(self) -> list[int]:
        return self._counts(self.target_per_class, self.target_class_ratios, self.classes)

    def source_counts(self) -> list[int]:
        return self._counts(self.source_per_class, self.source_class_ratios, self.classes)


def imbalance_ratios(classes: int, ratio: float) -> tuple:
    """First half of the classes ``ratio`` times larger than the second half."""
    return tuple(float(ratio) if c < (classes + 1) // 2 else 1.0 for c in range(classes))


def _rotation_matrix(dim: int, angle: float, rng: RngStream) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    block = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    for i in range(0, dim - 1, 2):
        block[i:i + 2, i:i + 2] = [[c, -s], [s, c]]
    return q @ block @ q.T


def generate_benchmark(spec: BenchmarkSpec):
    """Return ``(source_set, target_set, target_truth)``.

    ``target_set`` carries no labels; ``target_truth`` maps sample id -> class.
    """
    spec.validate()
    root = RngStream(spec.seed, "benchmark")
    C, d = spec.classes, spec.dim
    centroids = spec.centroid_scale * root.child("centroids").normal((C, d))
    rot = _rotation_matrix(d, spec.rotation, root.child("rotation"))
    direction = root.child("translation").normal(d)
    shift = spec.translation * spec.spread * np.sqrt(d) * direction / np.linalg.norm(direction)

    cov_rng = root.child("covariance")
    factors = []
    for _ in range(C):
        if spec.cov_shift > 0:
            basis, _ = np.linalg.qr(cov_rng.normal((d, d)))
            scales = np.exp(spec.cov_shift * cov_rng.uniform(-1.0, 1.0, d))
            factors.append(spec.target_spread * spec.spread * (basis * scales) @ basis.T)
        else:
            factors.append(spec.target_spread * spec.spread * np.eye(d))

    src_noise = root.child("source_noise")
    source = []
    for c, n in enumerate(spec.source_counts()):
        x = centroids[c] + spec.spread * src_noise.normal((n, d))
        source.extend(FeatureSample(len(source), row, SOURCE, c) for row in x)

    tgt_noise = root.child("target_noise")
    rows, labels = [], []
    for c, n in enumerate(spec.target_counts()):
        x = rot @ centroids[c] + shift + tgt_noise.normal((n, d)) @ factors[c].T
        rows.append(x)
        labels.extend([c] * n)
    rows = np.vstack(rows)
    # interleave classes so ids carry no class information
    order = root.child("target_order").permutation(len(labels))
    target, truth = [], {}
    for new_id, idx in enumerate(order):
        target.append(FeatureSample(new_id, rows[idx], TARGET, None))
        truth[new_id] = labels[idx]
    return source, target, truth


def split(samples, fraction: float, rng: RngStream):
    """Random disjoint split; ``fraction`` of the samples (at least one) go to the first part."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples to split")
    n_a = min(max(1, int(round(fraction * n))), n - 1)
    order = rng.permutation(n)
    a = sorted(order[:n_a])
    b = sorted(order[n_a:])
    return [samples[i] for i in a], [samples[i] for i in b]
