"""Domain-conditioned VAE whose latent mean and scale vectors are L2-normalised.

There is no KL term: the encoder's mean head and (absolute-valued) scale head
are projected onto the unit sphere, and training uses same-class pairs from
the two domains with two in-domain and two cross-domain reconstruction errors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import SOURCE, TARGET, DOMAINS, FeatureSample, as_arrays
from .tensor_core import (DenseNet, OptimizerState, RngStream, ShapeError, UsageError, adam_step,
                          net_backward, net_forward)

CHECKPOINT_VERSION = 1
AUGMENT_MODES = ("cross", "cross+recon", "off")


class DegenerateEncodingError(ArithmeticError):
    """A raw latent head came out as the exact zero vector."""


class TrainingSkipped(Exception):
    """No same-class source/target pair could be formed."""


@dataclass(frozen=True)
class NormVaeConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    latent_dim: int = 64
    hidden: int = 512
    dropout: float = 0.5

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.latent_dim, self.hidden) < 1 or not self.learning_rate > 0:
            raise ValueError("epochs, batch_size, latent_dim, hidden and learning_rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class NormVaeParams:
    encoder: DenseNet  # d+2 -> hidden -> 2*latent (mean head | scale head)
    decoder: DenseNet  # latent+2 -> hidden -> d
    latent_dim: int
    feature_dim: int
    trained: bool = False
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.encoder.in_dim != self.feature_dim + 2 or self.encoder.out_dim != 2 * self.latent_dim:
            raise ShapeError("encoder must map d+2 -> 2*latent_dim")
        if self.decoder.in_dim != self.latent_dim + 2 or self.decoder.out_dim != self.feature_dim:
            raise ShapeError("decoder must map latent_dim+2 -> d")

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def touch(self) -> None:
        self.encoder.touch()
        self.decoder.touch()


@dataclass(frozen=True)
class CrossDomainPair:
    x_s: FeatureSample
    x_t: FeatureSample
    label: int

    def __post_init__(self):
        if self.x_s.label != self.label or self.x_t.label != self.label:
            raise UsageError(f"pair members must both carry class {self.label}, "
                             f"got {self.x_s.label} and {self.x_t.label}")


def init_norm_vae(feature_dim: int, config: NormVaeConfig, rng: RngStream) -> NormVaeParams:
    h, dz = config.hidden, config.latent_dim
    enc = DenseNet.init([feature_dim + 2, h, 2 * dz], ["relu", "identity"], rng.child("encoder"),
                        config.dropout)
    dec = DenseNet.init([dz + 2, h, feature_dim], ["relu", "identity"], rng.child("decoder"),
                        config.dropout)
    return NormVaeParams(enc, dec, dz, feature_dim)


def domain_code(domain: str, n: int) -> np.ndarray:
    code = np.zeros((n, 2))
    code[:, DOMAINS.index(domain)] = 1.0
    return code


def _with_code(x: np.ndarray, domain: str) -> np.ndarray:
    return np.hstack([x, domain_code(domain, x.shape[0])])


# ---------------------------------------------------------------------------
# Sphere projections and their backward passes
# ---------------------------------------------------------------------------

def _unit_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateEncodingError("raw latent head is the zero vector")
    return v / norms, norms


def _unit_rows_backward(u, norms, g):
    return (g - u * np.sum(u * g, axis=1, keepdims=True)) / norms


def _split_heads(raw: np.ndarray, dz: int):
    raw_mu, raw_sigma = raw[:, :dz], raw[:, dz:]
    mu, n_mu = _unit_rows(raw_mu)
    sigma, n_sigma = _unit_rows(np.abs(raw_sigma))
    return mu, sigma, (raw_sigma, n_mu, n_sigma)


def _heads_backward(mu, sigma, cache, g_mu, g_sigma):
    raw_sigma, n_mu, n_sigma = cache
    g_raw_mu = _unit_rows_backward(mu, n_mu, g_mu)
    g_raw_sigma = _unit_rows_backward(sigma, n_sigma, g_sigma) * np.sign(raw_sigma)
    return np.hstack([g_raw_mu, g_raw_sigma])


# ---------------------------------------------------------------------------
# Encode / sample / decode
# ---------------------------------------------------------------------------

def encode(params: NormVaeParams, x, domain: str) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm mean and scale vectors for each row of ``x`` (eval mode)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.feature_dim:
        raise ShapeError(f"feature dim {x.shape[1]} != {params.feature_dim}")
    raw, _ = net_forward(params.encoder, _with_code(x, domain))
    mu, sigma, _ = _split_heads(raw, params.latent_dim)
    return mu, sigma


def reparameterize(mu: np.ndarray, sigma: np.ndarray, rng: RngStream | None = None,
                   eps: np.ndarray | None = None) -> np.ndarray:
    if eps is None:
        if rng is None:
            raise UsageError("reparameterize needs an rng or explicit noise")
        eps = rng.normal(np.shape(mu))
    return mu + sigma * eps


def decode(params: NormVaeParams, z, domain: str) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != params.latent_dim:
        raise ShapeError(f"latent dim {z.shape[1]} != {params.latent_dim}")
    out, _ = net_forward(params.decoder, _with_code(z, domain))
    return out


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

TERMS = ("recon_s", "recon_t", "cross_ts", "cross_st")


def loss_arrays(params: NormVaeParams, xs: np.ndarray, xt: np.ndarray, rng: RngStream | None,
                train_mode: bool = True, eps: np.ndarray | None = None):
    """Paired loss on row-aligned source/target batches.

    Returns ``(loss, grads, terms)`` with grads in ``params.parameters()``
    order and ``terms`` the four reconstruction errors:

    - ``recon_s``: x_s vs decode(z_s, S)
    - ``recon_t``: x_t vs decode(z_t, T)
    - ``cross_ts``: x_s vs decode(z_t, S)
    - ``cross_st``: x_t vs decode(z_s, T)

    ``eps`` (shape ``(2B, latent)``, source rows first) fixes the noise.
    """
    B = xs.shape[0]
    if B == 0 or xt.shape != xs.shape:
        raise ShapeError("need equally shaped, non-empty source and target batches")
    dz = params.latent_dim
    drop_rng = rng.child("dropout") if (rng is not None and train_mode) else None

    enc_in = np.vstack([_with_code(xs, SOURCE), _with_code(xt, TARGET)])
    raw, tape_e = net_forward(params.encoder, enc_in, train_mode, drop_rng)
    mu, sigma, cache = _split_heads(raw, dz)
    if eps is None:
        eps = rng.normal((2 * B, dz))
    z = mu + sigma * eps
    zs, zt = z[:B], z[B:]

    dec_in = np.vstack([_with_code(zs, SOURCE), _with_code(zs, TARGET),
                        _with_code(zt, TARGET), _with_code(zt, SOURCE)])
    out, tape_d = net_forward(params.decoder, dec_in, train_mode, drop_rng)
    target = np.vstack([xs, xt, xt, xs])
    diff = out - target
    sq = np.sum(diff * diff, axis=1)
    terms = {
        "recon_s": float(sq[:B].sum() / B),
        "cross_st": float(sq[B:2 * B].sum() / B),
        "recon_t": float(sq[2 * B:3 * B].sum() / B),
        "cross_ts": float(sq[3 * B:].sum() / B),
    }
    loss = float(sq.sum() / B)

    grads_d, g_in = net_backward(params.decoder, tape_d, 2.0 * diff / B)
    g_z = g_in[:, :dz]
    g_z = np.vstack([g_z[:B] + g_z[B:2 * B], g_z[2 * B:3 * B] + g_z[3 * B:]])
    g_raw = _heads_backward(mu, sigma, cache, g_z, g_z * eps)
    grads_e, _ = net_backward(params.encoder, tape_e, g_raw)
    return loss, grads_e + grads_d, terms


def norm_vae_loss(params: NormVaeParams, pairs, rng: RngStream | None, train_mode: bool = True,
                  eps: np.ndarray | None = None):
    """Loss and gradients over a batch of :class:`CrossDomainPair`."""
    if not pairs:
        raise UsageError("empty pair batch")
    for p in pairs:
        if not isinstance(p, CrossDomainPair):
            raise UsageError("norm_vae_loss expects CrossDomainPair items")
    xs = np.vstack([p.x_s.features for p in pairs])
    xt = np.vstack([p.x_t.features for p in pairs])
    return loss_arrays(params, xs, xt, rng, train_mode, eps)


# ---------------------------------------------------------------------------
# Pairing and training
# ---------------------------------------------------------------------------

def _pair_indices(y_src: np.ndarray, tgt_by_class: dict[int, np.ndarray], rng: RngStream):
    src_idx, tgt_idx = [], []
    for c in sorted(tgt_by_class):
        members = np.flatnonzero(y_src == c)
        if members.size == 0:
            continue
        pool = tgt_by_class[c]
        src_idx.append(members)
        tgt_idx.append(pool[rng.integers(0, pool.size, members.size)])
    if not src_idx:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    src_idx = np.concatenate(src_idx)
    tgt_idx = np.concatenate(tgt_idx)
    order = np.argsort(src_idx, kind="stable")
    return src_idx[order], tgt_idx[order]


def _group_by_class(y: np.ndarray) -> dict[int, np.ndarray]:
    return {int(c): np.flatnonzero(y == c) for c in np.unique(y)}


def pair_samples(source_set, selected_target, rng: RngStream) -> list[CrossDomainPair]:
    """Pair each source sample with a uniformly drawn selected target sample of its class.

    Source samples whose class has no selected target sample are skipped.
    """
    if not source_set or not selected_target:
        return []
    src = sorted(source_set, key=lambda s: s.sort_key)
    tgt = sorted(selected_target, key=lambda s: s.sort_key)
    _, y_s = as_arrays(src)
    _, y_t = as_arrays(tgt)
    si, ti = _pair_indices(y_s, _group_by_class(y_t), rng)
    return [CrossDomainPair(src[i], tgt[j], src[i].label) for i, j in zip(si, ti)]


def train_norm_vae(source_set, selected_target, config: NormVaeConfig = NormVaeConfig(),
                   stream_tag: str = "norm_vae") -> NormVaeParams:
    """Fresh norm-VAE trained with Adam on pairs re-drawn every epoch.

    Raises :class:`TrainingSkipped` when no same-class pair exists.
    """
    src = sorted(source_set, key=lambda s: s.sort_key)
    tgt = sorted(selected_target, key=lambda s: s.sort_key)
    if not src or not tgt:
        raise TrainingSkipped("need source samples and selected target samples")
    Xs, ys = as_arrays(src)
    Xt, yt = as_arrays(tgt)
    tgt_by_class = _group_by_class(yt)
    if not np.any(np.isin(ys, list(tgt_by_class))):
        raise TrainingSkipped("no class shared by source and selected target samples")

    rng = RngStream(config.seed, stream_tag)
    params = init_norm_vae(Xs.shape[1], config, rng.child("init"))
    state = OptimizerState.for_params(params.parameters(), learning_rate=config.learning_rate)
    pair_rng, shuffle_rng, step_rng = rng.child("pairing"), rng.child("shuffle"), rng.child("step")
    bs = config.batch_size
    step = 0
    for _ in range(config.epochs):
        si, ti = _pair_indices(ys, tgt_by_class, pair_rng)
        order = shuffle_rng.permutation(si.size)
        total = 0.0
        for start in range(0, si.size, bs):
            idx = order[start:start + bs]
            loss, grads, _ = loss_arrays(params, Xs[si[idx]], Xt[ti[idx]], step_rng.child(step))
            step += 1
            total += loss * idx.size
            adam_step(params.parameters(), grads, state)
            params.touch()
        params.loss_history.append(total / si.size)
    params.trained = True
    return params


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def generate_arrays(params: NormVaeParams, X: np.ndarray, from_domain: str, to_domain: str,
                    rng: RngStream) -> np.ndarray:
    """Cross-domain (or same-domain) reconstructions; dropout is off."""
    if not params.trained:
        raise UsageError("norm-VAE has not been trained")
    mu, sigma = encode(params, X, from_domain)
    return decode(params, reparameterize(mu, sigma, rng), to_domain)


def generate_cross_domain(params: NormVaeParams, x: FeatureSample, from_domain: str, to_domain: str,
                          rng: RngStream) -> FeatureSample:
    out = generate_arrays(params, x.features[None, :], from_domain, to_domain, rng)[0]
    return FeatureSample(x.sample_id, out, to_domain, x.label, synthetic=True, origin=from_domain)


def _generate_set(params, samples, from_domain, to_domain, rng) -> list[FeatureSample]:
    if not samples:
        return []
    X, _ = as_arrays(samples)
    out = generate_arrays(params, X, from_domain, to_domain, rng)
    return [FeatureSample(s.sample_id, row, to_domain, s.label, synthetic=True, origin=from_domain)
            for s, row in zip(samples, out)]


def augment(params: NormVaeParams, source_set, selected_target, mode: str, rng: RngStream
            ) -> list[FeatureSample]:
    """Synthetic training samples for the classifier.

    ``cross``: a target-domain copy of every source sample and a source-domain
    copy of every selected target sample. ``cross+recon`` adds the same-domain
    reconstructions. ``off`` returns nothing.
    """
    if mode not in AUGMENT_MODES:
        raise ValueError(f"unknown augmentation mode {mode!r}")
    if mode == "off":
        return []
    src = sorted(source_set, key=lambda s: s.sort_key)
    tgt = sorted(selected_target, key=lambda s: s.sort_key)
    out = _generate_set(params, src, SOURCE, TARGET, rng.child("st"))
    out += _generate_set(params, tgt, TARGET, SOURCE, rng.child("ts"))
    if mode == "cross+recon":
        out += _generate_set(params, src, SOURCE, SOURCE, rng.child("ss"))
        out += _generate_set(params, tgt, TARGET, TARGET, rng.child("tt"))
    return out


def save_norm_vae(params: NormVaeParams, path) -> None:
    doc = {"format": "spl_uda.norm_vae", "version": CHECKPOINT_VERSION,
           "feature_dim": params.feature_dim, "latent_dim": params.latent_dim,
           "trained": params.trained,
           "encoder": params.encoder.to_dict(), "decoder": params.decoder.to_dict()}
    Path(path).write_text(json.dumps(doc))


def load_norm_vae(path) -> NormVaeParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "spl_uda.norm_vae" or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} norm-VAE checkpoint")
    return NormVaeParams(DenseNet.from_dict(doc["encoder"]), DenseNet.from_dict(doc["decoder"]),
                         doc["latent_dim"], doc["feature_dim"], doc.get("trained", True))
