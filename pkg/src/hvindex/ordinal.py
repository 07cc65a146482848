"""Ordinal filter numerics and embedding losses as pure functions.

Covers dilobe kernel generation, a fixed-weight forward pass of the
patch-level ordinal network over normalized iris strips, the triplet hinge
loss with its hard-triplet predicate and margin schedule, and the
substring-balance loss over relaxed hash vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hvindex.bitcode import BitCode, substring_width
from hvindex.errors import DegenerateInputError, DimensionError, DomainError
from hvindex.rng import Stream

KERNEL_SHAPE = (3, 5)
EMBEDDING_DIM = 512


@dataclass(frozen=True)
class DilobeKernel:
    height: int
    width: int
    mu_p: tuple[float, float]
    mu_n: tuple[float, float]
    delta_p: float
    delta_n: float
    c_p: float
    c_n: float
    weights: np.ndarray = field(repr=False, compare=False)


def _lobe(height: int, width: int, mu: tuple[float, float], delta: float) -> np.ndarray:
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    sq = (rows - mu[0]) ** 2 + (cols - mu[1]) ** 2
    return np.exp(-sq / (2.0 * delta**2)) / (math.sqrt(2.0 * math.pi) * delta)


def make_dilobe(
    height: int = KERNEL_SHAPE[0],
    width: int = KERNEL_SHAPE[1],
    mu_p: tuple[float, float] = (1.0, 1.0),
    mu_n: tuple[float, float] = (1.0, 3.0),
    delta_p: float = 0.8,
    delta_n: float = 0.8,
    c_p: float = 1.0,
) -> DilobeKernel:
    """Sample a positive-minus-negative Gaussian pair on the pixel grid.

    Pixel ``(i, j)`` sits at integer coordinates (row ``i``, column ``j``)
    counted from 0.  The negative coefficient is solved for so that the
    discrete weights sum to zero.
    """
    if height < 1 or width < 1:
        raise DomainError("kernel extent must be positive")
    if delta_p <= 0 or delta_n <= 0:
        raise DomainError("lobe scales must be positive")
    if not 0 < c_p <= 1:
        raise DomainError(f"c_p must lie in (0, 1], got {c_p}")
    for mu in (mu_p, mu_n):
        if not (0 <= mu[0] <= height - 1 and 0 <= mu[1] <= width - 1):
            raise DomainError(f"lobe center {mu} lies outside the {height}x{width} kernel")
    pos = _lobe(height, width, mu_p, delta_p)
    neg = _lobe(height, width, mu_n, delta_n)
    c_n = c_p * pos.sum() / neg.sum()
    weights = c_p * pos - c_n * neg
    weights.setflags(write=False)
    return DilobeKernel(height, width, tuple(mu_p), tuple(mu_n), delta_p, delta_n, c_p, c_n, weights)


def oriented_dilobe(theta: float, delta: float, distance: float = 2.0, shape=KERNEL_SHAPE) -> DilobeKernel:
    """Lobes placed symmetrically about the kernel center along direction ``theta``.

    ``theta = 0`` separates the lobes horizontally (along the angular axis of
    a normalized strip); ``theta = pi/2`` vertically.
    """
    h, w = shape
    cy, cx = (h - 1) / 2, (w - 1) / 2
    dy, dx = math.sin(theta) * distance / 2, math.cos(theta) * distance / 2
    return make_dilobe(h, w, (cy - dy, cx - dx), (cy + dy, cx + dx), delta, delta)


@dataclass(frozen=True)
class LayerSpec:
    orientations: tuple[float, ...]
    scales: tuple[float, ...]
    polarities: tuple[int, ...] = (1,)
    pool: bool = False
    lobe_distance: float = 2.0

    @property
    def n_filters(self) -> int:
        return len(self.orientations) * len(self.scales) * len(self.polarities)

    def kernels(self, shape=KERNEL_SHAPE) -> np.ndarray:
        """``(n_filters, kh, kw)`` weights, polarity-major then scale then orientation."""
        out = []
        for sign in self.polarities:
            for delta in self.scales:
                for theta in self.orientations:
                    out.append(sign * oriented_dilobe(theta, delta, self.lobe_distance, shape).weights)
        return np.stack(out)


_QUARTER_TURNS = tuple(i * math.pi / 4 for i in range(4))


@dataclass(frozen=True)
class FilterBankSpec:
    """Three fixed dilobe layers (8, 16, 32 filters) over an ``input_shape`` strip."""

    input_shape: tuple[int, int] = (48, 432)
    layers: tuple[LayerSpec, ...] = (
        LayerSpec(_QUARTER_TURNS, (0.8, 1.2)),
        LayerSpec(_QUARTER_TURNS, (0.8, 1.2), (1, -1), pool=True),
        LayerSpec(_QUARTER_TURNS, (0.6, 0.8, 1.0, 1.2), (1, -1), pool=True),
    )
    embedding_dim: int = EMBEDDING_DIM
    seed: int = 0

    def __post_init__(self):
        h, w = self.input_shape
        if h < 1 or w < 1:
            raise DomainError("input shape must be positive")
        n_pool = sum(layer.pool for layer in self.layers)
        if h % (1 << n_pool) or w % (1 << n_pool):
            raise DomainError(f"input shape {self.input_shape} is not divisible by the pooling factor")

    @property
    def filter_counts(self) -> list[int]:
        return [layer.n_filters for layer in self.layers]

    def flat_dim(self) -> int:
        h, w = self.input_shape
        for layer in self.layers:
            if layer.pool:
                h, w = h // 2, w // 2
        return h * w


# Normalized strip sizes (height, width) per dataset preset.
STRIP_SHAPES = {
    "iitd": (48, 432),
    "interval": (64, 256),
    "iitk": (64, 256),
    "lamp": (80, 512),
}


def default_weights(bank: FilterBankSpec) -> list[np.ndarray]:
    """Uniform averaging over each layer's filter responses."""
    return [np.full(n, 1.0 / n) for n in bank.filter_counts]


def _same_correlate(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Correlate ``x`` with every kernel; output ``(H, W, F)``.

    Rows are edge-padded and columns wrap around, since the column axis of a
    normalized strip is angular.  Neither padding introduces an artificial
    step, so a constant strip stays exactly flat.
    """
    _, kh, kw = kernels.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((ph, ph), (0, 0)), mode="edge")
    padded = np.pad(padded, ((0, 0), (pw, pw)), mode="wrap")
    windows = sliding_window_view(padded, (kh, kw))
    return np.einsum("hwij,fij->hwf", windows, kernels, optimize=True)


def _maxpool2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return x.reshape(h // 2, 2, w // 2, 2).max(axis=(1, 3))


# variance floor, as in a batch-normalization layer (Keras default)
BN_EPSILON = 1e-3


def _standardize(x: np.ndarray) -> np.ndarray:
    centered = x - x.mean()
    return centered / np.sqrt(centered.var() + BN_EPSILON)


def _projection(bank: FilterBankSpec) -> np.ndarray:
    n_in = bank.flat_dim()
    signs = Stream(bank.seed).signs((bank.embedding_dim, n_in)).astype(np.float64)
    return signs / math.sqrt(n_in)


def forward_pofnet(
    strip,
    bank: FilterBankSpec | None = None,
    combiner_weights: Sequence[Sequence[float]] | None = None,
    trace: list | None = None,
) -> np.ndarray:
    """Map a normalized strip to a fixed-length real embedding.

    Per layer: dilobe correlation, ReLU, 1x1 weighted channel sum, ReLU,
    optional 2x2/2 max-pool, then per-map standardization.  The flattened
    final map is projected to ``bank.embedding_dim`` by a seeded random
    matrix.  When ``trace`` is a list, ``(name, shape)`` pairs are appended
    for every stage.
    """
    bank = bank or FilterBankSpec()
    x = np.asarray(strip, dtype=np.float64)
    if x.shape != bank.input_shape:
        raise DimensionError(f"strip shape {x.shape} does not match configured {bank.input_shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("strip values must be finite")
    if combiner_weights is None:
        combiner_weights = default_weights(bank)
    if len(combiner_weights) != len(bank.layers):
        raise DimensionError(f"expected {len(bank.layers)} weight vectors, got {len(combiner_weights)}")

    def note(name, arr):
        if trace is not None:
            trace.append((name, tuple(arr.shape)))

    note("input", x[..., None])
    for layer, w in zip(bank.layers, combiner_weights):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (layer.n_filters,):
            raise DimensionError(f"layer with {layer.n_filters} filters got {w.size} weights")
        if not np.all(np.isfinite(w)):
            raise DomainError("combiner weights must be finite")
        maps = np.maximum(_same_correlate(x, layer.kernels()), 0.0)
        note("dilobe_conv_relu", maps)
        x = np.maximum(maps @ w, 0.0)
        note("conv1x1_relu", x[..., None])
        if layer.pool:
            x = _maxpool2(x)
            note("maxpool", x[..., None])
        x = _standardize(x)
        note("standardize", x[..., None])
    out = _projection(bank) @ x.ravel()
    note("projection", out)
    return out


def layer_shapes(bank: FilterBankSpec | None = None) -> list[tuple[str, tuple[int, ...]]]:
    """Stage names and output shapes for a zero strip of the configured size."""
    bank = bank or FilterBankSpec()
    trace: list = []
    forward_pofnet(np.zeros(bank.input_shape), bank, trace=trace)
    return trace


# --- embedding losses -------------------------------------------------------


def _vectors(*vs) -> list[np.ndarray]:
    arrs = [np.asarray(v, dtype=np.float64) for v in vs]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise DimensionError("embeddings must share one shape")
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise DomainError("embeddings must be finite")
    return arrs


def triplet_distances(anchor, positive, negative) -> tuple[np.ndarray, np.ndarray]:
    """Squared Euclidean anchor-positive and anchor-negative distances (last axis)."""
    a, p, n = _vectors(anchor, positive, negative)
    return ((a - p) ** 2).sum(axis=-1), ((a - n) ** 2).sum(axis=-1)


def triplet_loss(anchor, positive, negative, alpha: float):
    """``max(0, d_p - d_n + alpha)``; batched inputs give per-triplet losses."""
    d_p, d_n = triplet_distances(anchor, positive, negative)
    return np.maximum(0.0, d_p - d_n + alpha)


def batch_triplet_loss(anchors, positives, negatives, alpha: float) -> float:
    return float(np.sum(triplet_loss(anchors, positives, negatives, alpha)))


def is_hard_triplet(anchor, positive, negative, alpha: float):
    """True when ``d_n - d_p <= alpha``."""
    d_p, d_n = triplet_distances(anchor, positive, negative)
    return d_n - d_p <= alpha


def mine_hard(anchors, positives, negatives, alpha: float) -> np.ndarray:
    """Indices of the hard triplets in a batch."""
    return np.flatnonzero(is_hard_triplet(anchors, positives, negatives, alpha))


@dataclass(frozen=True)
class MarginState:
    alpha: float
    step: float = 0.05
    hard_fraction_threshold: float = 0.10

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError(f"margin must be positive, got {self.alpha}")


def update_margin(state: MarginState, hard_count: int, mined_total: int) -> MarginState:
    """Grow the margin by one step once hard triplets fall below the threshold fraction."""
    if mined_total <= 0:
        raise DomainError("mined_total must be positive")
    if not 0 <= hard_count <= mined_total:
        raise DomainError("hard_count must lie in 0..mined_total")
    if hard_count / mined_total < state.hard_fraction_threshold:
        return replace(state, alpha=state.alpha + state.step)
    return state


def _blocks(h: np.ndarray, t: int) -> np.ndarray:
    substring_width(h.size, t)
    return h.reshape(t, h.size // t)


def substring_cosine_distances(h_i, h_j, t: int) -> np.ndarray:
    """``1 - cos`` between corresponding contiguous blocks of two vectors."""
    a, b = _vectors(h_i, h_j)
    if a.ndim != 1:
        raise DimensionError("expected 1-D vectors")
    if np.any(np.abs(a) > 1) or np.any(np.abs(b) > 1):
        raise DomainError("relaxed hash values must lie in [-1, 1]")
    A, B = _blocks(a, t), _blocks(b, t)
    na, nb = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateInputError("cosine distance is undefined for a zero-norm substring")
    return 1.0 - (A * B).sum(axis=1) / (na * nb)


def mcom_loss(h_i, h_j, t: int, r_prime: float) -> float:
    """RMS deviation of per-substring cosine distances from the target ``r_prime``."""
    d = substring_cosine_distances(h_i, h_j, t)
    return float(np.sqrt(np.mean((d - r_prime) ** 2)))


def mcom_hamming(a: BitCode, b: BitCode, t: int, r_prime: float) -> float:
    """Binary-code variant: per-substring distances as flipped-bit proportions ``d_m / s``."""
    if a.width != b.width:
        raise DimensionError(f"width mismatch: {a.width} vs {b.width}")
    s = substring_width(a.width, t)
    diff = a.value ^ b.value
    mask = (1 << s) - 1
    props = np.array([((diff >> (m * s)) & mask).bit_count() / s for m in range(t)])
    return float(np.sqrt(np.mean((props - r_prime) ** 2)))
