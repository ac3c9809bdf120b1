"""Embedding network and metric-learning losses with exact gradients.

The network is a small fully connected stack (tanh hidden units, linear
output) followed by L2 normalisation, so every embedding lies on the unit
sphere. Three losses are provided:

* ratio triplet loss   ``max(0, 1 - |a-n| / (|a-p| + m))``
* global loss          ``var(d+) + var(d-) + lam * max(0, mean(d+) - mean(d-) + t)``
  with ``d+ = |a-p|^2 / 4`` and ``d- = |a-n|^2 / 4``
* combined loss        ``global + alpha * sum(triplet)``

Each loss returns its value and the gradient with respect to every network
parameter, as a list aligned with :meth:`EmbeddingNet.params`. At a hinge
kink the zero branch is taken.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyBatch
from .raster import load_json, save_json

NET_FORMAT = "segmeld-net/1"


class EmbeddingNet:
    """Fully connected tanh network with a unit-norm output."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise DimensionMismatch("need one bias vector per weight matrix")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"layer {k}: weight {w.shape} / bias {b.shape}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise DimensionMismatch(f"layer {k} input does not chain with layer {k - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite parameters")

    @classmethod
    def init(cls, dims, seed=0) -> "EmbeddingNet":
        """Glorot-uniform weights, zero biases. ``dims = [D, h1, ..., d]``."""
        if len(dims) < 2:
            raise ConfigError("need at least input and output dimensions")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "EmbeddingNet":
        return EmbeddingNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params()]

    # -- batched forward / backward ----------------------------------------

    def embed(self, x, cache=False):
        """Embed rows of ``x``; returns ``(y, cache)`` when ``cache`` is set."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.input_dim:
            raise DimensionMismatch(f"input has dimension {h.shape[1]}, net expects {self.input_dim}")
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if k == last else np.tanh(z)
            acts.append(h)
        z = acts[-1]
        norm = np.sqrt(np.sum(z * z, axis=1))
        zero = norm == 0.0
        y = np.empty_like(z)
        y[~zero] = z[~zero] / norm[~zero, None]
        # degenerate output maps to the first basis vector
        y[zero] = 0.0
        y[zero, 0] = 1.0
        if cache:
            return y, (acts, norm, zero, y)
        return y

    def backward(self, cache, dy) -> list[np.ndarray]:
        acts, norm, zero, y = cache
        dy = np.asarray(dy, dtype=np.float64)
        safe = np.where(zero, 1.0, norm)
        dz = (dy - y * np.sum(y * dy, axis=1, keepdims=True)) / safe[:, None]
        dz[zero] = 0.0
        grads = [None] * (2 * len(self.weights))
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            if k != last:
                dz = dz * (1.0 - acts[k + 1] ** 2)
            grads[2 * k] = dz.T @ acts[k]
            grads[2 * k + 1] = dz.sum(axis=0)
            dz = dz @ self.weights[k]
        return grads

    # -- serialisation -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format": NET_FORMAT,
            "activation": "tanh",
            "dims": self.dims,
            "layers": [
                {"rows": w.shape[0], "cols": w.shape[1], "weights": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_json(cls, doc) -> "EmbeddingNet":
        if doc.get("format") != NET_FORMAT:
            raise ConfigError(f"unsupported network format {doc.get('format')!r}")
        try:
            weights = [np.array(l["weights"], dtype=np.float64).reshape(l["rows"], l["cols"]) for l in doc["layers"]]
            biases = [np.array(l["bias"], dtype=np.float64) for l in doc["layers"]]
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"malformed network document: {exc}") from exc
        return cls(weights, biases)


def save_net(net: EmbeddingNet, path):
    save_json(net.to_json(), path)


def load_net(path) -> EmbeddingNet:
    return EmbeddingNet.from_json(load_json(path))


def forward(net: EmbeddingNet, x) -> np.ndarray:
    """Unit-norm embedding of a single descriptor."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("forward takes a single descriptor vector")
    return net.embed(x)[0]


# -- loss configuration and batch bookkeeping ----------------------------------

@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2          # triplet margin m
    global_margin: float = 0.01  # mean-separation margin t
    lam: float = 1.0             # weight of the mean hinge
    alpha: float = 0.8           # weight of the summed triplet loss

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("triplet margin must be positive")
        if self.global_margin < 0 or self.lam < 0 or self.alpha < 0:
            raise ConfigError("global margin, lambda and alpha must be non-negative")


@dataclass(frozen=True)
class Triplet:
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    anchor_class: int = 1
    negative_class: int = 2

    def __post_init__(self):
        if self.anchor_class == self.negative_class:
            raise ValueError("negative must come from a different class than the anchor")


@dataclass(frozen=True)
class BatchStats:
    d_plus: np.ndarray
    d_minus: np.ndarray
    mu_plus: float
    mu_minus: float
    var_plus: float
    var_minus: float
    n: int


def batch_stats(fa, fp, fn) -> BatchStats:
    d_plus = np.sum((fa - fp) ** 2, axis=1) / 4.0
    d_minus = np.sum((fa - fn) ** 2, axis=1) / 4.0
    return BatchStats(
        d_plus, d_minus,
        float(d_plus.mean()), float(d_minus.mean()),
        float(d_plus.var()), float(d_minus.var()),
        d_plus.size,
    )


# -- losses on embeddings ------------------------------------------------------

def triplet_terms(fa, fp, fn, margin):
    """Per-row triplet losses and their gradients w.r.t. the three embeddings."""
    fa, fp, fn = (np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (fa, fp, fn))
    if not fa.shape == fp.shape == fn.shape:
        raise DimensionMismatch("anchor, positive and negative embeddings differ in shape")
    ap, an = fa - fp, fa - fn
    dp = np.sqrt(np.sum(ap * ap, axis=1))
    dn = np.sqrt(np.sum(an * an, axis=1))
    denom = dp + margin
    slack = 1.0 - dn / denom
    active = slack > 0.0
    values = np.where(active, slack, 0.0)

    # unit directions; a zero-length difference contributes no gradient
    up = np.divide(ap, dp[:, None], out=np.zeros_like(ap), where=dp[:, None] > 0)
    un = np.divide(an, dn[:, None], out=np.zeros_like(an), where=dn[:, None] > 0)
    coef_n = np.where(active, -1.0 / denom, 0.0)[:, None]
    coef_p = np.where(active, dn / denom**2, 0.0)[:, None]
    ga = coef_n * un + coef_p * up
    gp = -coef_p * up
    gn = -coef_n * un
    return values, (ga, gp, gn)


def global_terms(fa, fp, fn, global_margin, lam):
    """Global loss value and gradients w.r.t. the three embedding batches."""
    fa, fp, fn = (np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (fa, fp, fn))
    if fa.shape[0] == 0:
        raise EmptyBatch("global loss needs at least one triplet")
    if not fa.shape == fp.shape == fn.shape:
        raise DimensionMismatch("anchor, positive and negative embeddings differ in shape")
    st = batch_stats(fa, fp, fn)
    n = st.n
    gap = st.mu_plus - st.mu_minus + global_margin
    active = gap > 0.0
    value = st.var_plus + st.var_minus + (lam * gap if active else 0.0)

    hinge = lam / n if active else 0.0
    g_plus = 2.0 * (st.d_plus - st.mu_plus) / n + hinge
    g_minus = 2.0 * (st.d_minus - st.mu_minus) / n - hinge
    # d(|u|^2 / 4)/du = u / 2
    ap = (fa - fp) / 2.0
    an = (fa - fn) / 2.0
    ga = g_plus[:, None] * ap + g_minus[:, None] * an
    gp = -g_plus[:, None] * ap
    gn = -g_minus[:, None] * an
    return float(value), (ga, gp, gn)


def combined_terms(fa, fp, fn, cfg: LossConfig):
    gval, (ga, gp, gn) = global_terms(fa, fp, fn, cfg.global_margin, cfg.lam)
    tvals, (ta, tp, tn) = triplet_terms(fa, fp, fn, cfg.margin)
    value = gval + cfg.alpha * float(tvals.sum())
    return value, (ga + cfg.alpha * ta, gp + cfg.alpha * tp, gn + cfg.alpha * tn)


# -- losses through the network ------------------------------------------------

def _stack(batch):
    if not batch:
        raise EmptyBatch("batch is empty")
    a = np.stack([np.asarray(t.anchor, dtype=np.float64) for t in batch])
    p = np.stack([np.asarray(t.positive, dtype=np.float64) for t in batch])
    n = np.stack([np.asarray(t.negative, dtype=np.float64) for t in batch])
    return a, p, n


def loss_and_grad(net: EmbeddingNet, a, p, n, terms):
    """Evaluate ``terms(fa, fp, fn) -> (value, (ga, gp, gn))`` through ``net``.

    The three branches share weights, so they are run as one stacked batch and
    their gradients summed by a single backward pass.
    """
    b = a.shape[0]
    y, cache = net.embed(np.concatenate([a, p, n]), cache=True)
    value, (ga, gp, gn) = terms(y[:b], y[b:2 * b], y[2 * b:])
    grads = net.backward(cache, np.concatenate([ga, gp, gn]))
    return value, grads


def triplet_loss(net: EmbeddingNet, trip: Triplet, margin=0.2):
    a, p, n = _stack([trip])

    def terms(fa, fp, fn):
        v, g = triplet_terms(fa, fp, fn, margin)
        return float(v[0]), g

    return loss_and_grad(net, a, p, n, terms)


def global_loss(net: EmbeddingNet, batch, cfg: LossConfig | None = None):
    cfg = cfg or LossConfig()
    a, p, n = _stack(batch)
    return loss_and_grad(net, a, p, n, lambda fa, fp, fn: global_terms(fa, fp, fn, cfg.global_margin, cfg.lam))


def combined_loss(net: EmbeddingNet, batch, cfg: LossConfig | None = None):
    cfg = cfg or LossConfig()
    a, p, n = _stack(batch)
    return loss_and_grad(net, a, p, n, lambda fa, fp, fn: combined_terms(fa, fp, fn, cfg))
