"""Credible bands around a spike-and-slab Pólya tree posterior.

The band is the intersection of a multiscale ball around the truncated
empirical measure ``C_n`` and a regularity constraint driven by the
estimated smoothness ``alpha_hat``::

    C = { f : sqrt(n) ||f - C_n||_M0(w) <= R_n,  ||f||_{alpha_hat, L} <= u_n }

``R_n`` is the Monte Carlo ``(1 - gamma)`` posterior quantile of the first
norm.  Diameter and credibility are estimated from fresh posterior draws.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .dyadic import NodeIndex, count_data, truncation_level, validate_unit_data
from .haar import (
    DEFAULT_WEIGHTS,
    HistogramDensity,
    WaveletField,
    WeightSequence,
    beta_L_norm,
    haar_analyze,
    holder_envelope,
    refine_heights,
    synthesize_heights,
)
from .sspt import PosteriorTree, draw, median_density

__all__ = [
    "BAND_SCHEMA_VERSION",
    "DegenerateBandWarning",
    "Centering",
    "BandSpec",
    "BandResult",
    "BandDraws",
    "BvMReport",
    "empirical_coeffs",
    "cell_level",
    "centering_Cn",
    "centering_Tn",
    "support_depth",
    "alpha_hat",
    "generalized_quantile",
    "scaled_distances",
    "radius_Rn",
    "band_membership",
    "band_draws",
    "band_diameter_proxy",
    "credible_band",
    "white_bridge_covariance",
    "ks_report",
    "bvm_diagnostic",
]

log = logging.getLogger(__name__)

BAND_SCHEMA_VERSION = 1


class DegenerateBandWarning(UserWarning):
    """Too few posterior draws fell inside the band to estimate its diameter."""


@dataclass(frozen=True)
class Centering:
    """Truncated empirical Haar coefficients; ``kind`` is ``"Cn"`` or ``"Tn"``."""

    kind: str
    coeffs: WaveletField
    level: int
    n: int

    def truncated(self, level: int) -> "Centering":
        """Same centering with every level above ``level`` set to zero."""
        c = [a if l <= level else np.zeros_like(a) for l, a in enumerate(self.coeffs.coeffs)]
        return Centering("Tn", WaveletField(c), min(level, self.level), self.n)

    def heights(self) -> np.ndarray:
        """Histogram heights of ``1 + sum c_lk psi_lk`` on the grid of the stored levels."""
        return synthesize_heights(self.coeffs.coeffs[: self.level + 1])


@dataclass(frozen=True)
class BandSpec:
    """Tuning of the credible band.

    ``u_n=None`` means ``ln n``; ``R`` sets ``c0 = 4 R^2`` in the
    ``alpha``-dependent cut-off used for the diameter centering.
    """

    gamma: float = 0.05
    u_n: float | None = None
    alpha0: float = 0.5
    S: int = 2000
    R: float = 1.0
    w: WeightSequence = field(default=DEFAULT_WEIGHTS)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.u_n is not None and not self.u_n > 0:
            raise ValueError(f"u_n must be positive, got {self.u_n}")
        if not 0 < self.alpha0 <= 1:
            raise ValueError(f"alpha0 must lie in (0, 1], got {self.alpha0}")
        if self.S < 1:
            raise ValueError(f"S must be positive, got {self.S}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")

    def resolve_un(self, n: int) -> float:
        return math.log(n) if self.u_n is None else float(self.u_n)


@dataclass
class BandResult:
    Rn: float
    alpha_hat: float
    L_hat: int
    u_n: float
    gamma: float
    member: bool | None = None
    diameter_proxy: float | None = None
    credibility: float | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {"schema_version": BAND_SCHEMA_VERSION, **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


# -- centerings and regularity estimate ---------------------------------------


def empirical_coeffs(data, max_level: int) -> WaveletField:
    """``(1/n) sum_i psi_lk(X_i)`` for ``l <= max_level``."""
    x = validate_unit_data(data)
    if x.size == 0:
        raise ValueError("empirical coefficients need at least one observation")
    return _coeffs_from_counts(count_data(x, max_level + 1), max_level)


def _coeffs_from_counts(counts, max_level):
    n = counts.total
    out = []
    for l in range(max_level + 1):
        left, right = counts.children_counts(l)
        out.append(2.0 ** (l / 2) * (right - left) / n)
    return WaveletField(out)


def cell_level(n: int, alpha: float, R: float, L: int | None = None) -> int:
    """``floor(log2(4 R^2 (n / ln n)^(1/(1+2 alpha))))`` clamped to ``[1, L]``."""
    if L is None:
        L = truncation_level(n)
    raw = math.log2(4.0 * R * R) + math.log2(n / math.log(n)) / (1.0 + 2.0 * alpha)
    return int(min(max(math.floor(raw), 1), max(L, 1)))


def centering_Cn(data, n: int | None = None, L: int | None = None) -> Centering:
    """Empirical coefficients kept for ``l <= L`` (``L`` defaults to the truncation level)."""
    x = validate_unit_data(data)
    n = x.size if n is None else n
    L = truncation_level(n) if L is None else L
    return Centering("Cn", empirical_coeffs(x, L), L, n)


def centering_Tn(data, n: int | None, alpha: float, R: float, L: int | None = None) -> Centering:
    """Empirical coefficients kept only up to the ``alpha``-dependent cut-off."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    cn = centering_Cn(data, n, L)
    return cn.truncated(cell_level(cn.n, alpha, R, cn.level))


def support_depth(fhat: WaveletField) -> int:
    """Deepest level with a nonzero coefficient; 0 when the field vanishes."""
    levels = [l for l, a in enumerate(fhat.coeffs) if np.any(a != 0)]
    return max(levels) if levels else 0


def alpha_hat(L_hat: int, n: int, alpha0: float) -> float:
    """``(log2(n / ln n) / L_hat - 1) / 2`` clamped to ``[alpha0, 1]``; ``L_hat = 0`` gives 1."""
    if n < 3:
        raise ValueError(f"alpha_hat needs n >= 3, got {n}")
    if L_hat <= 0:
        return 1.0
    raw = 0.5 * (math.log2(n / math.log(n)) / L_hat - 1.0)
    return float(min(max(raw, alpha0), 1.0))


# -- radius -------------------------------------------------------------------


def generalized_quantile(values, level: float) -> float:
    """Smallest order statistic whose rank is at least ``ceil(level * S)``."""
    v = np.sort(np.asarray(values, dtype=float))
    # round away float noise such as 0.95 * 2000 = 1900.0000000000002
    rank = math.ceil(round(level * v.size, 9))
    return float(v[min(max(rank, 1), v.size) - 1])


def _pad(coeffs, depth):
    """Per-level arrays ``(S, 2**l)`` or ``(2**l,)`` extended with zeros to ``depth`` levels."""
    coeffs = list(coeffs)
    lead = np.shape(coeffs[0])[:-1] if coeffs else ()
    for l in range(len(coeffs), depth):
        coeffs.append(np.zeros(lead + (1 << l,)))
    return coeffs


def scaled_distances(draw_coeffs: Sequence[np.ndarray], center: Centering,
                     w: WeightSequence = DEFAULT_WEIGHTS) -> np.ndarray:
    """``sqrt(n) ||f - C||_M0(w)`` for a batch of draws given by their coefficients."""
    depth = max(len(draw_coeffs), center.coeffs.depth)
    dc = _pad(draw_coeffs, depth)
    cc = _pad(center.coeffs.coeffs, depth)
    weights = w(np.arange(depth))
    S = np.shape(dc[0])[0]
    out = np.zeros(S)
    for l in range(depth):
        diff = np.abs(np.asarray(dc[l]).reshape(S, -1) - cc[l])
        np.maximum(out, diff.max(axis=1) / weights[l], out=out)
    return math.sqrt(center.n) * out


def radius_Rn(post: PosteriorTree, center: Centering, spec: BandSpec, rng) -> float:
    """Monte Carlo ``(1 - gamma)`` posterior quantile of ``sqrt(n) ||f - C_n||_M0``."""
    if spec.S < 100:
        raise ValueError(f"radius calibration needs at least 100 draws, got {spec.S}")
    _, coeffs = draw(post, spec.S, rng)
    return generalized_quantile(scaled_distances(coeffs, center, spec.w), 1.0 - spec.gamma)


# -- membership ---------------------------------------------------------------


def _regularity_scale(depth, beta, L, alpha0):
    l = np.arange(depth, dtype=float)
    H = np.where(l <= L / alpha0, beta, alpha0)
    return 2.0 ** (l * (H + 0.5))


def regularity_norms(draw_coeffs: Sequence[np.ndarray], beta: float, L: int, alpha0: float) -> np.ndarray:
    """``||f||_{beta, L}`` for a batch of draws."""
    depth = len(draw_coeffs)
    S = np.shape(draw_coeffs[0])[0] if depth else 1
    out = np.zeros(S)
    scale = _regularity_scale(depth, beta, L, alpha0)
    for l in range(depth):
        np.maximum(out, scale[l] * np.abs(np.asarray(draw_coeffs[l]).reshape(S, -1)).max(axis=1), out=out)
    return out


def _tail_bounds(depth, envelope, beta, L, alpha0, w):
    """Upper bounds on both band norms from levels ``>= depth`` of a Hölder truth."""
    alpha, R = envelope
    top = int(math.floor(L / alpha0)) + 1
    levels = np.arange(depth, max(top, depth + 2) + 1)
    env = holder_envelope(alpha, R, levels)
    m0_tail = float(np.max(env / w(levels)))
    if alpha0 > alpha:
        return m0_tail, math.inf
    reg_tail = float(np.max(env * _regularity_scale(levels[-1] + 1, beta, L, alpha0)[levels]))
    return m0_tail, reg_tail


def band_membership(f0, center: Centering, Rn: float, alpha_hat: float, spec: BandSpec,
                    envelope: tuple[float, float] | None = None) -> bool:
    """Whether ``f0`` satisfies both band constraints.

    ``f0`` is a :class:`HistogramDensity` or a :class:`WaveletField`.  With an
    ``envelope=(alpha, R)`` the coefficients of ``f0`` beyond its stored depth
    are bounded by the Hölder envelope and that bound is added; without it
    they are taken as zero, which is exact for histogram truths.
    """
    field_ = haar_analyze(f0) if isinstance(f0, HistogramDensity) else f0
    n = center.n
    L = truncation_level(n)
    batch = [a[None, :] for a in field_.coeffs] or [np.zeros((1, 1))]
    m0 = scaled_distances(batch, center, spec.w)[0]
    reg = beta_L_norm(field_, alpha_hat, L, spec.alpha0)
    if envelope is not None:
        m0_tail, reg_tail = _tail_bounds(max(field_.depth, center.coeffs.depth), envelope,
                                         alpha_hat, L, spec.alpha0, spec.w)
        m0 = max(m0, math.sqrt(n) * m0_tail)
        reg = max(reg, reg_tail)
    return bool(m0 <= Rn and reg <= spec.resolve_un(n))


# -- draws inside the band ------------------------------------------------------


@dataclass
class BandDraws:
    """Fresh posterior draws with their band verdicts."""

    heights: np.ndarray
    inside: np.ndarray

    @property
    def credibility(self) -> float:
        return float(self.inside.mean())

    @property
    def accepted(self) -> np.ndarray:
        return self.heights[self.inside]


def band_draws(post: PosteriorTree, center: Centering, Rn: float, alpha_hat: float,
               spec: BandSpec, rng) -> BandDraws:
    heights, coeffs = draw(post, spec.S, rng)
    m0 = scaled_distances(coeffs, center, spec.w)
    reg = regularity_norms(coeffs, alpha_hat, truncation_level(center.n), spec.alpha0)
    inside = (m0 <= Rn) & (reg <= spec.resolve_un(center.n))
    return BandDraws(heights, inside)


def _diameter_from_draws(bd: BandDraws, center: Centering, alpha_hat: float, spec: BandSpec) -> float:
    accepted = bd.accepted
    if accepted.shape[0] < 10:
        warnings.warn(
            f"only {accepted.shape[0]} posterior draws inside the band", DegenerateBandWarning,
            stacklevel=3,
        )
        if accepted.shape[0] == 0:
            return math.nan
    tn = center.truncated(cell_level(center.n, alpha_hat, spec.R, center.level))
    pivot = tn.heights()
    depth = max(int(round(math.log2(accepted.shape[1]))), int(round(math.log2(pivot.size))))
    diff = refine_heights(accepted, depth) - refine_heights(pivot, depth)
    return 2.0 * float(np.abs(diff).max())


def band_diameter_proxy(post: PosteriorTree, center: Centering, Rn: float, alpha_hat: float,
                        spec: BandSpec, rng) -> float:
    """Twice the largest sup-distance from an accepted draw to the ``alpha_hat``-truncated centering."""
    return _diameter_from_draws(band_draws(post, center, Rn, alpha_hat, spec, rng), center, alpha_hat, spec)


def credible_band(post: PosteriorTree, data, spec: BandSpec, seed: int = 0,
                  f0=None, envelope=None) -> tuple[BandResult, BandDraws, Centering]:
    """Full band pipeline: centering, ``alpha_hat``, ``R_n``, credibility, diameter, membership.

    Radius calibration and the fresh draws use independent child streams of
    ``seed``.
    """
    x = validate_unit_data(data)
    n = x.size
    center = centering_Cn(x, n, post.L)
    _, fhat = median_density(post)
    L_hat = support_depth(fhat)
    a_hat = alpha_hat(L_hat, n, spec.alpha0)
    radius_seq, fresh_seq = np.random.SeedSequence(seed).spawn(2)
    Rn = radius_Rn(post, center, spec, radius_seq)
    bd = band_draws(post, center, Rn, a_hat, spec, fresh_seq)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateBandWarning)
        diam = _diameter_from_draws(bd, center, a_hat, spec)
    for w in caught:
        log.warning("%s", w.message)
        warnings.warn(w.message, DegenerateBandWarning, stacklevel=2)
    member = None
    if f0 is not None:
        member = band_membership(f0, center, Rn, a_hat, spec, envelope)
    result = BandResult(
        Rn=Rn, alpha_hat=a_hat, L_hat=L_hat, u_n=spec.resolve_un(n), gamma=spec.gamma,
        member=member, diameter_proxy=diam, credibility=bd.credibility, seed=seed,
    )
    return result, bd, center


# -- Gaussian limit diagnostics -------------------------------------------------


def _psi_matrix(nodes: Sequence[NodeIndex], depth: int) -> np.ndarray:
    """Values of ``psi_lk`` on the ``2**depth`` cells, one row per node."""
    cells = np.arange(1 << depth)
    rows = []
    for node in nodes:
        shift = depth - node.level
        k = cells >> shift
        right = (cells >> (shift - 1)) & 1
        row = np.where(k == node.position, np.where(right == 1, 1.0, -1.0), 0.0)
        rows.append(2.0 ** (node.level / 2) * row)
    return np.array(rows).reshape(len(rows), 1 << depth)


def white_bridge_covariance(f0: HistogramDensity, nodes: Sequence) -> np.ndarray:
    """``Cov(psi_a, psi_b)`` under ``P0``: ``int psi_a psi_b f0 - int psi_a f0 int psi_b f0``."""
    nodes = [n if isinstance(n, NodeIndex) else NodeIndex(*n) for n in nodes]
    depth = max([f0.depth] + [n.level + 1 for n in nodes])
    h = refine_heights(f0.heights, depth) * 2.0 ** (-depth)
    psi = _psi_matrix(nodes, depth)
    mean = psi @ h
    second = (psi * h) @ psi.T
    cov = second - np.outer(mean, mean)
    return 0.5 * (cov + cov.T)


@dataclass
class BvMReport:
    nodes: list
    variances: np.ndarray
    ks: np.ndarray
    threshold: float

    @property
    def passed(self) -> np.ndarray:
        return self.ks <= self.threshold

    @property
    def pass_fraction(self) -> float:
        return float(self.passed.mean()) if self.ks.size else 1.0

    def to_dict(self) -> dict:
        return {
            "nodes": [list(n) for n in self.nodes],
            "variances": self.variances.tolist(),
            "ks": self.ks.tolist(),
            "threshold": self.threshold,
            "pass_fraction": self.pass_fraction,
        }


def ks_report(samples: np.ndarray, variances: np.ndarray, nodes, threshold: float = 0.1) -> BvMReport:
    """Column-wise one-sample KS distance of ``samples`` against ``Normal(0, variances)``."""
    samples = np.asarray(samples, dtype=float)
    ks = np.empty(samples.shape[1])
    for j in range(samples.shape[1]):
        sd = math.sqrt(max(variances[j], 0.0))
        if sd == 0.0:
            ks[j] = 0.0 if np.all(samples[:, j] == 0) else 1.0
            continue
        ks[j] = stats.kstest(samples[:, j], "norm", args=(0.0, sd)).statistic
    return BvMReport([tuple(n) for n in nodes], np.asarray(variances, float), ks, threshold)


def bvm_diagnostic(post: PosteriorTree, center: Centering, f0: HistogramDensity, l0: int,
                   S: int, rng, threshold: float = 0.1) -> BvMReport:
    """KS check of ``sqrt(n)(f_lk - C_n,lk)`` against the white-bridge marginals for ``l <= l0``."""
    if post.prior.l0 < l0:
        log.warning("prior is flat only up to level %d but diagnostics run to %d", post.prior.l0, l0)
    nodes = [(l, k) for l in range(l0 + 1) for k in range(1 << l)]
    _, coeffs = draw(post, S, rng)
    root_n = math.sqrt(center.n)
    cols = [root_n * (coeffs[l] - center.coeffs.coeffs[l]) for l in range(l0 + 1)]
    samples = np.concatenate(cols, axis=1)
    var = np.diag(white_bridge_covariance(f0, [NodeIndex(*nd) for nd in nodes]))
    return ks_report(samples, var, nodes, threshold)
