"""Haar analysis and synthesis of dyadic histograms, and multiscale norms.

The mother wavelet is ``psi = -1_(0,1/2] + 1_(1/2,1]`` and
``psi_lk(x) = 2^(l/2) psi(2^l x - k)``.  A histogram at depth ``L`` has
exactly the coefficients ``f_lk`` with ``l < L`` (plus the implicit scaling
coefficient 1), so every transform here is exact.

Array helpers (``analyze_heights``/``synthesize_heights``) accept a leading
batch axis so that thousands of posterior draws can be transformed at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "HistogramDensity",
    "WaveletField",
    "WeightSequence",
    "DEFAULT_WEIGHTS",
    "analyze_heights",
    "synthesize_heights",
    "haar_analyze",
    "haar_synthesize",
    "coeff_from_tree",
    "project_Kj",
    "refine_heights",
    "sup_norm_distance",
    "multiscale_norm",
    "beta_L_norm",
    "holder_envelope",
    "holder_ball_check",
    "projection_residual",
    "self_similarity_check",
]


class HistogramDensity:
    """Piecewise-constant density on ``(0, 1]`` with ``2**depth`` equal cells.

    Parameters
    ----------
    heights : array_like
        Density value on each leaf interval, left to right.
    check : bool
        When true (default) raise ``ValueError`` unless the heights are a
        valid density.  Synthesis from arbitrary coefficients passes
        ``check=False`` and callers inspect :attr:`is_density`.
    """

    __slots__ = ("heights", "depth")

    def __init__(self, heights, check: bool = True):
        h = np.array(heights, dtype=float).ravel()
        depth = int(round(math.log2(h.size))) if h.size else -1
        if depth < 0 or h.size != 1 << depth:
            raise ValueError(f"number of heights must be a power of two, got {h.size}")
        h.setflags(write=False)
        self.heights = h
        self.depth = depth
        if check and not self.is_density:
            raise ValueError(
                f"not a density: min height {h.min():.3g}, integral {self.integral():.15g}"
            )

    @classmethod
    def uniform(cls, depth: int = 0) -> "HistogramDensity":
        return cls(np.ones(1 << depth))

    @property
    def is_density(self) -> bool:
        return bool(np.all(self.heights >= 0.0)) and abs(self.integral() - 1.0) <= 1e-12

    @property
    def masses(self) -> np.ndarray:
        return self.heights * 2.0 ** (-self.depth)

    def integral(self) -> float:
        return float(math.fsum(self.heights)) * 2.0 ** (-self.depth)

    def __call__(self, x) -> np.ndarray:
        """Evaluate at points of ``(0, 1]``."""
        x = np.asarray(x, dtype=float)
        k = np.ceil(x * float(1 << self.depth)).astype(np.int64) - 1
        return self.heights[np.clip(k, 0, self.heights.size - 1)]

    def refine(self, depth: int) -> "HistogramDensity":
        return HistogramDensity(refine_heights(self.heights, depth), check=False)

    def __repr__(self) -> str:
        return f"HistogramDensity(depth={self.depth})"


class WaveletField:
    """Haar detail coefficients ``f_lk`` for ``0 <= l < depth``.

    ``coeffs[l]`` is an array of ``2**l`` entries.  The scaling coefficient
    ``<f, 1>`` is not stored; for densities it is always 1.
    """

    __slots__ = ("coeffs", "depth")

    def __init__(self, coeffs: Sequence):
        arrays = []
        for l, c in enumerate(coeffs):
            a = np.array(c, dtype=float)
            if a.shape != (1 << l,):
                raise ValueError(f"level {l} must hold {1 << l} coefficients, got {a.shape}")
            a.setflags(write=False)
            arrays.append(a)
        self.coeffs = tuple(arrays)
        self.depth = len(arrays)

    @classmethod
    def zeros(cls, depth: int) -> "WaveletField":
        return cls([np.zeros(1 << l) for l in range(depth)])

    @classmethod
    def single(cls, depth: int, level: int, position: int, value: float) -> "WaveletField":
        """Field of the given depth with one nonzero coefficient."""
        c = [np.zeros(1 << l) for l in range(depth)]
        c[level][position] = value
        return cls(c)

    def __getitem__(self, node) -> float:
        l, k = node
        return float(self.coeffs[l][k])

    def __eq__(self, other):
        if not isinstance(other, WaveletField):
            return NotImplemented
        return self.depth == other.depth and all(
            np.array_equal(a, b) for a, b in zip(self.coeffs, other.coeffs)
        )

    def scaled(self, c: float) -> "WaveletField":
        return WaveletField([c * a for a in self.coeffs])

    def __add__(self, other: "WaveletField") -> "WaveletField":
        return WaveletField(_combine(self.coeffs, other.coeffs, 1.0))

    def __sub__(self, other: "WaveletField") -> "WaveletField":
        return WaveletField(_combine(self.coeffs, other.coeffs, -1.0))

    def flat(self) -> np.ndarray:
        """All coefficients concatenated level by level."""
        return np.concatenate(self.coeffs) if self.coeffs else np.zeros(0)

    def support(self) -> list[tuple[int, int]]:
        """Nodes ``(l, k)`` with a nonzero coefficient."""
        return [(l, int(k)) for l, a in enumerate(self.coeffs) for k in np.flatnonzero(a)]

    def __repr__(self) -> str:
        return f"WaveletField(depth={self.depth})"


def _combine(a, b, sign):
    depth = max(len(a), len(b))
    out = []
    for l in range(depth):
        x = a[l] if l < len(a) else np.zeros(1 << l)
        y = b[l] if l < len(b) else np.zeros(1 << l)
        out.append(x + sign * y)
    return out


@dataclass(frozen=True)
class WeightSequence:
    """Admissible weights ``w_l > 0`` for the multiscale norm.

    The default is ``sqrt(max(l, 2)) * ln(max(l, 2))``, which is positive at
    every level and has ``w_l / sqrt(l)`` nondecreasing.
    """

    func: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "sqrt(l)log(l)"

    def __call__(self, levels) -> np.ndarray:
        l = np.asarray(levels, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(l), dtype=float)
        m = np.maximum(l, 2.0)
        return np.sqrt(m) * np.log(m)


DEFAULT_WEIGHTS = WeightSequence()


# -- array-level transforms -------------------------------------------------


def analyze_heights(heights) -> list[np.ndarray]:
    """Haar coefficients of histogram heights with shape ``(..., 2**L)``.

    Returns a list of ``L`` arrays, entry ``l`` with shape ``(..., 2**l)``.
    """
    h = np.asarray(heights, dtype=float)
    depth = int(round(math.log2(h.shape[-1])))
    mass = h * 2.0 ** (-depth)
    out = [None] * depth
    for l in range(depth - 1, -1, -1):
        pairs = mass.reshape(*mass.shape[:-1], -1, 2)
        out[l] = 2.0 ** (l / 2) * (pairs[..., 1] - pairs[..., 0])
        mass = pairs.sum(axis=-1)
    return out


def synthesize_heights(coeffs: Sequence[np.ndarray]) -> np.ndarray:
    """Inverse of :func:`analyze_heights`; scaling coefficient taken as 1."""
    depth = len(coeffs)
    lead = np.shape(coeffs[0])[:-1] if depth else ()
    mass = np.ones(lead + (1,))
    for l in range(depth):
        d = np.asarray(coeffs[l], dtype=float) * 2.0 ** (-l / 2)
        left = 0.5 * (mass - d)
        right = 0.5 * (mass + d)
        mass = np.stack([left, right], axis=-1).reshape(*lead, -1)
    return mass * float(1 << depth)


def refine_heights(heights, depth: int) -> np.ndarray:
    """Repeat heights of shape ``(..., 2**L)`` onto the finer grid ``2**depth``."""
    h = np.asarray(heights, dtype=float)
    cur = int(round(math.log2(h.shape[-1])))
    if depth < cur:
        raise ValueError(f"cannot refine depth {cur} down to {depth}")
    return np.repeat(h, 1 << (depth - cur), axis=-1)


# -- object-level operations ------------------------------------------------


def haar_analyze(f: HistogramDensity) -> WaveletField:
    return WaveletField(analyze_heights(f.heights))


def haar_synthesize(w: WaveletField) -> HistogramDensity:
    """Histogram with the given detail coefficients.

    Coefficients outside the density simplex give negative heights; the
    result is then returned unchecked and ``is_density`` is false.
    """
    if w.depth == 0:
        return HistogramDensity([1.0])
    return HistogramDensity(synthesize_heights(w.coeffs), check=False)


def coeff_from_tree(p_parent, y, l: int):
    """Haar coefficient ``2^(l/2) p (1 - 2y)`` of a node with mass ``p`` and left split ``y``."""
    return 2.0 ** (l / 2) * np.asarray(p_parent) * (1.0 - 2.0 * np.asarray(y))


def project_Kj(w: WaveletField, j: int) -> WaveletField:
    """Zero every coefficient at level ``>= j``."""
    if j > w.depth:
        raise ValueError(f"projection level {j} exceeds field depth {w.depth}")
    return WaveletField([a if l < j else np.zeros_like(a) for l, a in enumerate(w.coeffs)])


def sup_norm_distance(f: HistogramDensity, g: HistogramDensity) -> float:
    """Exact ``max |f - g|`` after refining both to the finer grid."""
    depth = max(f.depth, g.depth)
    diff = refine_heights(f.heights, depth) - refine_heights(g.heights, depth)
    return float(np.max(np.abs(diff)))


def multiscale_norm(x: WaveletField, w: WeightSequence = DEFAULT_WEIGHTS) -> float:
    """``sup_l max_k |x_lk| / w_l`` over the stored levels."""
    if x.depth == 0:
        return 0.0
    weights = w(np.arange(x.depth))
    return max(float(np.max(np.abs(a))) / wl for a, wl in zip(x.coeffs, weights))


def beta_L_norm(g: WaveletField, beta: float, L: int, alpha0: float) -> float:
    """``sup 2^(l(H(beta,l) + 1/2)) |g_lk|`` with ``H = beta`` up to level ``L/alpha0``, ``alpha0`` above."""
    if g.depth == 0:
        return 0.0
    return float(np.max(_beta_L_scale(g.depth, beta, L, alpha0) * _level_max(g.coeffs)))


def _beta_L_scale(depth: int, beta: float, L: int, alpha0: float) -> np.ndarray:
    l = np.arange(depth, dtype=float)
    H = np.where(l <= L / alpha0, beta, alpha0)
    return 2.0 ** (l * (H + 0.5))


def _level_max(coeffs) -> np.ndarray:
    return np.array([np.max(np.abs(a)) for a in coeffs])


def holder_envelope(alpha: float, R: float, levels) -> np.ndarray:
    """Bound ``R 2^(-l(alpha + 1/2))`` on coefficients of the Hölder ball."""
    return R * 2.0 ** (-np.asarray(levels, dtype=float) * (alpha + 0.5))


def holder_ball_check(g: WaveletField, alpha: float, R: float, rtol: float = 1e-12) -> bool:
    """True iff ``|g_lk| <= R 2^(-l(alpha+1/2))`` at every stored coefficient.

    ``rtol`` absorbs round-off for coefficients that sit on the envelope.
    """
    if g.depth == 0:
        return True
    bound = holder_envelope(alpha, R, np.arange(g.depth))
    return bool(np.all(_level_max(g.coeffs) <= bound * (1.0 + rtol)))


def projection_residual(f: HistogramDensity, j: int) -> float:
    """``||K_j f - f||_inf``; ``K_j f`` averages ``f`` over level-``j`` cells."""
    if j >= f.depth:
        return 0.0
    blocks = f.heights.reshape(1 << j, -1)
    return float(np.max(np.abs(blocks - blocks.mean(axis=1, keepdims=True))))


def self_similarity_check(f: HistogramDensity, alpha: float, eps: float, j0: int) -> bool:
    """Check ``||K_j f - f||_inf >= eps 2^(-j alpha)`` for ``j0 <= j < f.depth``.

    Levels at or beyond the histogram depth have zero residual and are not
    checked; a histogram with ``f.depth <= j0`` has nothing to check and
    fails.
    """
    levels = range(j0, f.depth)
    if not levels:
        return False
    return all(projection_residual(f, j) >= eps * 2.0 ** (-j * alpha) * (1 - 1e-12) for j in levels)
