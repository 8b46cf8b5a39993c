"""Spike-and-slab Pólya tree prior and its conjugate posterior.

Each internal node ``(l, k)`` of the tree truncated at depth ``L`` carries a
left split fraction ``Y`` drawn from ``(1 - pi_l) delta_{1/2} + pi_l Beta(a, a)``.
Given data with child counts ``(n0, n1)`` the posterior of ``Y`` has the
same form with slab ``Beta(n0 + a, n1 + a)`` and slab weight

    pi~ = pi T / ((1 - pi) + pi T),   T = 2^(n0+n1) B(n0 + a, n1 + a) / B(a, a).

Everything is vectorized per level; Bayes factors are kept in log space.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dyadic import CountTree, count_data, truncation_level
from .haar import HistogramDensity, WaveletField
from .special import beta_quantile, log_beta, reg_inc_beta

__all__ = [
    "SCHEDULES",
    "DEFAULT_KAPPA",
    "PriorSpec",
    "NodePosterior",
    "PosteriorTree",
    "default_l0",
    "log_bayes_factor",
    "posterior_slab_weight",
    "fit",
    "fit_counts",
    "draw",
    "sample_density",
    "sample_densities",
    "mean_density",
    "node_median",
    "median_splits",
    "median_density",
    "heights_from_splits",
    "coeffs_from_splits",
    "draw_splits",
    "kappa_theory",
    "POSTERIOR_SCHEMA_VERSION",
]

SCHEDULES = ("exponential", "exponential-normalized", "l-log-l")
DEFAULT_KAPPA = 2.0 * math.log(2.0)
POSTERIOR_SCHEMA_VERSION = 1


def default_l0(n: int, L: int | None = None) -> int:
    """Flat-initialisation depth ``max(1, round(ln n / ln ln n))``, at most ``L``."""
    l0 = 1
    if n >= 3 and math.log(math.log(n)) > 0:
        l0 = max(1, round(math.log(n) / math.log(math.log(n))))
    if L is not None:
        l0 = min(l0, L)
    return l0


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of a spike-and-slab Pólya tree truncated at depth ``L``.

    ``l0 = 0`` means no flat initialisation; otherwise levels ``0..l0`` carry
    slab weight 1.  ``schedule`` picks the decay of the slab weight with the
    node level ``l``: ``exponential`` is ``exp(-kappa l)``,
    ``exponential-normalized`` divides that by ``sum_{j<=L} exp(-kappa j)``,
    and ``l-log-l`` is ``exp(-kappa l ln l)``.
    """

    L: int
    a: int = 1
    kappa: float = DEFAULT_KAPPA
    l0: int = 0
    schedule: str = "exponential-normalized"

    def __post_init__(self):
        if isinstance(self.a, bool) or int(self.a) != self.a or self.a < 1:
            raise ValueError(f"slab parameter a must be an integer >= 1, got {self.a}")
        object.__setattr__(self, "a", int(self.a))
        if self.L < 0:
            raise ValueError(f"truncation depth must be >= 0, got {self.L}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not 0 <= self.l0 <= max(self.L, 0):
            raise ValueError(f"l0 must lie in [0, L={self.L}], got {self.l0}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")

    @classmethod
    def for_sample(cls, n: int, *, l0="auto", **kwargs) -> "PriorSpec":
        """Prior at the default truncation depth for a sample of size ``n``."""
        L = kwargs.pop("L", None)
        if L is None:
            L = truncation_level(n)
        if l0 == "auto":
            l0 = default_l0(n, L)
        return cls(L=L, l0=int(l0), **kwargs)

    def slab_weights(self) -> np.ndarray:
        """Prior slab weight ``pi_l`` for node levels ``l = 0..L-1``."""
        l = np.arange(self.L, dtype=float)
        if self.schedule == "l-log-l":
            ll = np.where(l > 1, l * np.log(np.maximum(l, 1.0)), 0.0)
            pi = np.exp(-self.kappa * ll)
        else:
            pi = np.exp(-self.kappa * l)
            if self.schedule == "exponential-normalized":
                pi = pi / np.exp(-self.kappa * np.arange(self.L + 1)).sum()
        if self.l0 > 0:
            pi[: self.l0 + 1] = 1.0
        return pi

    def with_overrides(self, **kwargs) -> "PriorSpec":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class NodePosterior:
    """Posterior of one split: ``(1 - pi_tilde) delta_{1/2} + pi_tilde Beta(alpha0X, alpha1X)``."""

    pi_tilde: float
    alpha0X: float
    alpha1X: float

    def mean(self) -> float:
        return float(_split_mean(self.pi_tilde, self.alpha0X, self.alpha1X))

    def median(self) -> float:
        return node_median(self)

    def cdf(self, t: float) -> float:
        """Mixture CDF ``pi~ I_t(alpha0X, alpha1X) + (1 - pi~) 1{t >= 1/2}``."""
        spike = 1.0 if t >= 0.5 else 0.0
        return self.pi_tilde * reg_inc_beta(t, self.alpha0X, self.alpha1X) + (1 - self.pi_tilde) * spike


def log_bayes_factor(n0, n1, a):
    """``ln T = (n0 + n1) ln 2 + ln B(n0 + a, n1 + a) - ln B(a, a)``.

    ``a`` may also be a pair ``(a0, a1)`` for an asymmetric slab.
    """
    a0, a1 = (a, a) if np.ndim(a) == 0 else a
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    if np.any(n0 < 0) or np.any(n1 < 0):
        raise ValueError("counts must be nonnegative")
    out = (n0 + n1) * math.log(2.0) + log_beta(n0 + a0, n1 + a1) - log_beta(a0, a1)
    return float(out) if np.ndim(out) == 0 else out


def posterior_slab_weight(pi, logT):
    """``pi T / ((1 - pi) + pi T)`` evaluated as a logistic in log-odds."""
    pi = np.asarray(pi, dtype=float)
    if np.any((pi < 0) | (pi > 1)):
        raise ValueError("prior slab weight must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        log_odds = np.log(pi) - np.log1p(-pi) + np.asarray(logT, dtype=float)
    out = expit(log_odds)
    # pi = 0 and pi = 1 are exact regardless of T
    out = np.where(pi == 1.0, 1.0, np.where(pi == 0.0, 0.0, out))
    return float(out) if out.ndim == 0 else out


def _split_mean(pi_tilde, alpha0X, alpha1X):
    return (1 - pi_tilde) * 0.5 + pi_tilde * alpha0X / (alpha0X + alpha1X)


class PosteriorTree:
    """Conjugate posterior of a spike-and-slab Pólya tree.

    Attributes are per-level arrays for node levels ``0..L-1``:
    ``n0``/``n1`` child counts, ``pi_prior`` and ``pi_tilde`` slab weights.
    The slab of node ``(l, k)`` is ``Beta(n0[l][k] + a, n1[l][k] + a)``.
    """

    def __init__(self, prior: PriorSpec, n0, n1, pi_tilde, n: int):
        self.prior = prior
        self.n = int(n)
        self.n0 = tuple(_frozen(x, np.int64) for x in n0)
        self.n1 = tuple(_frozen(x, np.int64) for x in n1)
        self.pi_tilde = tuple(_frozen(x, float) for x in pi_tilde)
        self.pi_prior = prior.slab_weights()
        if len(self.n0) != prior.L:
            raise ValueError("posterior must have one level of nodes per tree level below L")

    @property
    def L(self) -> int:
        return self.prior.L

    @property
    def a(self) -> int:
        return self.prior.a

    def alpha0X(self, l: int) -> np.ndarray:
        return self.n0[l] + self.a

    def alpha1X(self, l: int) -> np.ndarray:
        return self.n1[l] + self.a

    def node(self, l: int, k: int) -> NodePosterior:
        return NodePosterior(
            float(self.pi_tilde[l][k]), float(self.alpha0X(l)[k]), float(self.alpha1X(l)[k])
        )

    def split_means(self) -> list[np.ndarray]:
        return [
            _split_mean(self.pi_tilde[l], self.alpha0X(l), self.alpha1X(l)) for l in range(self.L)
        ]

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": POSTERIOR_SCHEMA_VERSION,
            "kind": "spike-slab-polya-tree-posterior",
            "n": self.n,
            "prior": asdict(self.prior),
            "levels": [
                [
                    {"n0": int(a), "n1": int(b), "pi_tilde": float(p)}
                    for a, b, p in zip(self.n0[l], self.n1[l], self.pi_tilde[l])
                ]
                for l in range(self.L)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "PosteriorTree":
        version = doc.get("schema_version")
        if version != POSTERIOR_SCHEMA_VERSION:
            raise ValueError(f"unsupported posterior schema version {version!r}")
        prior = PriorSpec(**doc["prior"])
        levels = doc["levels"]
        return cls(
            prior,
            [[node["n0"] for node in lev] for lev in levels],
            [[node["n1"] for node in lev] for lev in levels],
            [[node["pi_tilde"] for node in lev] for lev in levels],
            doc["n"],
        )

    @classmethod
    def from_json(cls, text: str) -> "PosteriorTree":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"PosteriorTree(n={self.n}, L={self.L}, a={self.a})"


def _frozen(x, dtype):
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


def fit_counts(counts: CountTree, prior: PriorSpec) -> PosteriorTree:
    """Posterior from a count tree of depth at least ``prior.L``."""
    if counts.depth < prior.L:
        raise ValueError(f"count tree depth {counts.depth} is below the prior depth {prior.L}")
    pi = prior.slab_weights()
    n0, n1, pt = [], [], []
    for l in range(prior.L):
        left, right = counts.children_counts(l)
        logT = log_bayes_factor(left, right, prior.a)
        pt.append(posterior_slab_weight(np.full(left.shape, pi[l]), logT))
        n0.append(left)
        n1.append(right)
    return PosteriorTree(prior, n0, n1, pt, counts.total)


def fit(data, prior: PriorSpec | None = None) -> PosteriorTree:
    """Exact posterior given observations in ``(0, 1]``.

    Without an explicit ``prior`` the default for the sample size is used.
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot fit an empty sample")
    if prior is None:
        prior = PriorSpec.for_sample(x.size)
    return fit_counts(count_data(x, prior.L), prior)


# -- densities built from split fractions ------------------------------------


def heights_from_splits(splits: Sequence[np.ndarray]) -> np.ndarray:
    """Histogram heights ``2^L prod Y`` from left-split arrays of shape ``(..., 2**l)``."""
    if not splits:
        return np.ones(1)
    lead = np.shape(splits[0])[:-1]
    mass = np.ones(lead + (1,))
    for y in splits:
        mass = np.stack([mass * y, mass * (1.0 - y)], axis=-1).reshape(*lead, -1)
    return mass * float(1 << len(splits))


def coeffs_from_splits(splits: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Haar coefficients ``2^(l/2) p_eps (1 - 2 Y_eps0)`` along the tree."""
    out = []
    lead = np.shape(splits[0])[:-1] if splits else ()
    mass = np.ones(lead + (1,))
    for l, y in enumerate(splits):
        out.append(2.0 ** (l / 2) * mass * (1.0 - 2.0 * y))
        mass = np.stack([mass * y, mass * (1.0 - y)], axis=-1).reshape(*lead, -1)
    return out


def _level_streams(rng, L: int) -> list[np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        return rng.spawn(L)
    seq = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(rng)
    return [np.random.default_rng(s) for s in seq.spawn(L)]


def draw_splits(post: PosteriorTree, size: int, rng) -> list[np.ndarray]:
    """``size`` independent draws of every split, one array ``(size, 2**l)`` per level.

    Each level uses its own child stream of ``rng`` so levels never share
    random numbers.
    """
    streams = _level_streams(rng, post.L)
    splits = []
    for l, g in enumerate(streams):
        shape = (size, 1 << l)
        slab = g.random(shape) < post.pi_tilde[l]
        g0 = g.standard_gamma(post.alpha0X(l).astype(float), size=shape)
        g1 = g.standard_gamma(post.alpha1X(l).astype(float), size=shape)
        splits.append(np.where(slab, g0 / (g0 + g1), 0.5))
    return splits


def draw(post: PosteriorTree, size: int, rng) -> tuple[np.ndarray, list[np.ndarray]]:
    """Posterior draws as ``(heights, coeffs)``: heights ``(size, 2**L)`` and per-level coefficients."""
    splits = draw_splits(post, size, rng)
    if not splits:
        return np.ones((size, 1)), []
    return heights_from_splits(splits), coeffs_from_splits(splits)


def sample_densities(post: PosteriorTree, size: int, rng) -> np.ndarray:
    """Heights of ``size`` posterior draws, shape ``(size, 2**L)``."""
    return draw(post, size, rng)[0]


def sample_density(post: PosteriorTree, rng) -> HistogramDensity:
    return HistogramDensity(sample_densities(post, 1, rng)[0])


def mean_density(post: PosteriorTree) -> HistogramDensity:
    """Posterior mean density: the tree built from the posterior split means."""
    return HistogramDensity(heights_from_splits(post.split_means()))


# -- posterior median ---------------------------------------------------------


def _median_arrays(pi_tilde, a0, a1):
    pi_tilde, a0, a1 = np.broadcast_arrays(
        np.asarray(pi_tilde, float), np.asarray(a0, float), np.asarray(a1, float)
    )
    out = np.full(pi_tilde.shape, 0.5)
    slab = pi_tilde > 0
    if not slab.any():
        return out
    half = np.zeros_like(pi_tilde)
    half[slab] = reg_inc_beta(0.5, a0[slab], a1[slab])
    lower = slab & (pi_tilde * half >= 0.5)
    upper = slab & ~lower & (pi_tilde * half + (1 - pi_tilde) < 0.5)
    # a symmetric slab with no spike has median exactly 1/2
    lower &= ~((a0 == a1) & (pi_tilde == 1.0))
    if lower.any():
        out[lower] = beta_quantile(0.5 / pi_tilde[lower], a0[lower], a1[lower])
    if upper.any():
        p = (pi_tilde[upper] - 0.5) / pi_tilde[upper]
        out[upper] = beta_quantile(p, a0[upper], a1[upper])
    return out


def node_median(np_: NodePosterior) -> float:
    """Smallest ``t`` with mixture CDF ``F(t) >= 1/2``."""
    return float(_median_arrays(np_.pi_tilde, np_.alpha0X, np_.alpha1X))


def median_splits(post: PosteriorTree) -> list[np.ndarray]:
    """Posterior medians of every left split, per level."""
    return [_median_arrays(post.pi_tilde[l], post.alpha0X(l), post.alpha1X(l)) for l in range(post.L)]


def median_density(post: PosteriorTree) -> tuple[HistogramDensity, WaveletField]:
    """Pivot density from posterior split medians, with its Haar coefficients.

    Coefficients are ``2^(l/2) (prod of medians along the path) (1 - 2 y_hat)``
    and vanish exactly where the median split is 1/2.
    """
    splits = median_splits(post)
    return HistogramDensity(heights_from_splits(splits)), WaveletField(coeffs_from_splits(splits))


def kappa_theory(m0: float, m1: float) -> float:
    """Sufficient decay rate ``4*18*8 m1/m0 + 5 ln 2`` for densities in ``[m0, m1]``."""
    if not m0 > 0:
        raise ValueError(f"m0 must be positive, got {m0}")
    if m1 < m0:
        raise ValueError(f"need m0 <= m1, got m0={m0}, m1={m1}")
    return 4 * 18 * 8 * m1 / m0 + 5 * math.log(2.0)
