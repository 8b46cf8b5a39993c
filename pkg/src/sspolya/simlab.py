"""Ground-truth densities, exact sampling, a quadrature oracle and Monte Carlo experiments.

Truths are dyadic histograms with explicitly chosen Haar coefficients, so
sup-norm errors against them are exact.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bands import (
    BandSpec,
    _diameter_from_draws,
    alpha_hat,
    band_draws,
    band_membership,
    bvm_diagnostic,
    cell_level,
    centering_Cn,
    ks_report,
    radius_Rn,
    support_depth,
    white_bridge_covariance,
)
from .dyadic import NodeIndex, count_data, truncation_level
from .haar import (
    HistogramDensity,
    WaveletField,
    haar_synthesize,
    refine_heights,
    sup_norm_distance,
)
from .sspt import PriorSpec, default_l0, draw, fit_counts, mean_density, median_density

__all__ = [
    "REPORT_SCHEMA_VERSION",
    "TestDensity",
    "ExperimentReport",
    "make_self_similar_density",
    "make_holder_density",
    "make_uniform_density",
    "inverse_cdf",
    "sample_iid",
    "oracle_node_posterior",
    "ols_slope",
    "rate_experiment",
    "coverage_experiment",
    "thresholding_experiment",
    "bvm_experiment",
]

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TestDensity:
    """A truth density with the constants it was built to satisfy."""

    __test__ = False  # not a pytest class

    kind: str
    density: HistogramDensity
    alpha: float | None = None
    R: float | None = None
    eps: float | None = None
    l1: int | None = None

    @property
    def depth(self) -> int:
        return self.density.depth

    @property
    def heights(self) -> np.ndarray:
        return self.density.heights

    @property
    def m0(self) -> float:
        return float(self.density.heights.min())

    @property
    def m1(self) -> float:
        return float(self.density.heights.max())

    def metadata(self) -> dict:
        return {
            "kind": self.kind, "depth": self.depth, "alpha": self.alpha, "R": self.R,
            "eps": self.eps, "l1": self.l1, "m0": self.m0, "m1": self.m1,
        }


def make_uniform_density(depth: int = 0) -> TestDensity:
    return TestDensity("uniform", HistogramDensity.uniform(depth), alpha=1.0, R=0.0)


def _envelope_field(alpha, amplitude, l1, L0, signs=None):
    coeffs = []
    for l in range(L0):
        a = np.zeros(1 << l)
        if l >= l1:
            a[:] = amplitude * 2.0 ** (-l * (0.5 + alpha))
            if signs is not None:
                a *= signs[l]
        coeffs.append(a)
    return WaveletField(coeffs)


def _check_amplitude(alpha, amplitude, l1, what):
    # worst case over every depth: all coefficients push one cell the same way
    slack = 1.0 - amplitude * 2.0 ** (-l1 * alpha) / (1.0 - 2.0 ** (-alpha))
    if not slack > 0:
        raise ValueError(
            f"{what} {amplitude} too large: need 1 - {what} * sum_(l>={l1}) 2^(-l*{alpha}) > 0, "
            f"got {slack:.4g}"
        )


def make_self_similar_density(alpha: float, c: float, l1: int, L0: int) -> TestDensity:
    """``1 + c sum_{l1 <= l < L0} 2^(-l(1/2 + alpha)) sum_k psi_lk``.

    All coefficients are positive, so the projection residual peaks at the
    right end and equals ``c sum_{l >= j} 2^(-l alpha)``.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if c < 0:
        raise ValueError(f"amplitude must be nonnegative, got {c}")
    _check_amplitude(alpha, c, l1, "amplitude c")
    f = haar_synthesize(_envelope_field(alpha, c, l1, L0))
    return TestDensity("self_similar", HistogramDensity(f.heights), alpha=alpha, R=c, eps=c, l1=l1)


def make_holder_density(alpha: float, R: float, L0: int, sign_seed: int,
                        fraction: float = 1.0) -> TestDensity:
    """Random-sign coefficients at ``fraction`` of the Hölder envelope ``R 2^(-l(alpha+1/2))``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if R < 0 or not 0 <= fraction <= 1:
        raise ValueError("need R >= 0 and fraction in [0, 1]")
    _check_amplitude(alpha, R * fraction, 0, "amplitude R*fraction")
    rng = np.random.default_rng(sign_seed)
    signs = [rng.choice([-1.0, 1.0], size=1 << l) for l in range(L0)]
    f = haar_synthesize(_envelope_field(alpha, R * fraction, 0, L0, signs))
    return TestDensity("holder", HistogramDensity(f.heights), alpha=alpha, R=R)


# -- sampling -----------------------------------------------------------------


def inverse_cdf(f: HistogramDensity, u) -> np.ndarray:
    """Closed-form inverse of the piecewise-linear CDF of ``f`` for ``u`` in (0, 1].

    Cells of zero mass are never returned and outputs lie in (0, 1].
    """
    u = np.asarray(u, dtype=float)
    mass = f.masses
    cum = np.cumsum(mass)
    cum = cum / cum[-1]
    cum[-1] = 1.0
    k = np.searchsorted(cum, u, side="left")
    k = np.minimum(k, mass.size - 1)
    prev = np.where(k > 0, cum[np.maximum(k - 1, 0)], 0.0)
    frac = np.clip((u - prev) / (cum[k] - prev), 0.0, 1.0)
    width = 2.0 ** (-f.depth)
    lower = k * width
    x = (k + frac) * width
    # keep every point inside its half-open cell (lower, upper]
    return np.minimum(np.maximum(x, np.nextafter(lower, 1.0)), lower + width)


def sample_iid(f, n: int, rng) -> np.ndarray:
    """``n`` exact draws from a histogram density, values in (0, 1]."""
    dens = f.density if isinstance(f, TestDensity) else f
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    u = 1.0 - g.random(n)  # (0, 1]
    return inverse_cdf(dens, u)


# -- independent conjugacy oracle ---------------------------------------------


def _trapezoid_node(n0, n1, a, pi, grid_size):
    y = np.linspace(0.0, 1.0, grid_size + 1)
    b_aa = math.factorial(a - 1) ** 2 / math.factorial(2 * a - 1)
    # likelihood scaled by 2^(n0+n1) so the spike contributes exactly (1 - pi)
    lik = (2.0 * y) ** n0 * (2.0 * (1.0 - y)) ** n1
    prior_slab = y ** (a - 1) * (1.0 - y) ** (a - 1) / b_aa
    g = lik * prior_slab
    slab = pi * np.trapezoid(g, y)
    slab_y = pi * np.trapezoid(g * y, y)
    spike = 1.0 - pi
    total = slab + spike
    return slab / total, (slab_y + 0.5 * spike) / total


def oracle_node_posterior(n0: int, n1: int, a: int, pi: float, grid_size: int = 100_000,
                          check: bool = True) -> tuple[float, float]:
    """Slab weight and posterior mean of one split by trapezoid quadrature.

    Works directly from prior times likelihood; no Beta-function identities
    are used beyond ``B(a, a)`` for integer ``a``.  With ``check`` the grid is
    halved and the answers must agree to 1e-8.
    """
    if grid_size < 10_000:
        raise ValueError(f"grid_size must be at least 10000, got {grid_size}")
    out = _trapezoid_node(n0, n1, a, pi, grid_size)
    if check:
        coarse = _trapezoid_node(n0, n1, a, pi, grid_size // 2)
        gap = max(abs(out[0] - coarse[0]), abs(out[1] - coarse[1]))
        if gap > 1e-8:
            raise RuntimeError(f"quadrature not converged for (n0={n0}, n1={n1}, a={a}): gap {gap:.2e}")
    return float(out[0]), float(out[1])


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentReport:
    """Per-replication records plus aggregate statistics."""

    mode: str
    records: list[dict]
    summary: dict
    config: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if not self.records:
            return ""
        cols = list(self.records[0])
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            writer.writerow({k: _fmt(v) for k, v in rec.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "mode": self.mode,
            "config": self.config,
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True)


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def ols_slope(x, y) -> float:
    """Least-squares slope of ``y`` on ``x``; nan with fewer than two distinct ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    ss = xc @ xc
    return float(xc @ (y - y.mean()) / ss) if ss > 0 else math.nan


def _seed_for(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *key])


def _run(tasks: Sequence, fn: Callable, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def default_truth_depth(ns: Iterable[int]) -> int:
    return truncation_level(max(ns)) + 3


# amplitudes used for the default self-similar truths
DEFAULT_AMPLITUDE = {0.5: 0.2, 1.0: 0.4}


def default_truth(alpha: float, ns: Iterable[int], c: float | None = None, l1: int = 1) -> TestDensity:
    if c is None:
        c = DEFAULT_AMPLITUDE.get(alpha, 0.5 * (1.0 - 2.0 ** (-alpha)))
    return make_self_similar_density(alpha, c, l1, default_truth_depth(ns))


def _rate_task(task):
    (alpha, n, rep, seed, truth, prior_kw, post_draws) = task
    ss = _seed_for(seed, int(round(alpha * 1000)), n, rep)
    data_seq, draw_seq = ss.spawn(2)
    x = sample_iid(truth, n, np.random.default_rng(data_seq))
    prior = PriorSpec.for_sample(n, **prior_kw)
    post = fit_counts(count_data(x, prior.L), prior)
    f_mean = mean_density(post)
    err = sup_norm_distance(f_mean, truth.density)
    _, fhat = median_density(post)
    L_hat = support_depth(fhat)
    rec = {
        "alpha": alpha, "n": n, "rep": rep, "L": prior.L, "sup_error": err,
        "L_hat": L_hat, "alpha_hat": alpha_hat(L_hat, n, 0.5) if n >= 3 else math.nan,
    }
    if post_draws:
        heights = draw(post, post_draws, draw_seq)[0]
        depth = max(post.L, truth.depth)
        diff = np.abs(refine_heights(heights, depth) - refine_heights(truth.heights, depth)).max(axis=1)
        rec["posterior_sup_error"] = float(diff.mean())
    return rec


def rate_experiment(alphas: Sequence[float] = (0.5, 1.0),
                    ns: Sequence[int] = tuple(2 ** k for k in range(12, 18)),
                    reps: int = 50, prior_overrides: dict | None = None, seed: int = 0,
                    post_draws: int = 0, threads: int = 1,
                    truths: dict | None = None) -> ExperimentReport:
    """Sup-norm error of the posterior mean across sample sizes.

    The summary holds, per ``alpha``, the mean errors and the slope of
    ``ln(mean error)`` against ``ln(n / ln n)``; the minimax target is
    ``-alpha / (2 alpha + 1)``.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    ns = sorted(int(n) for n in ns)
    prior_kw = dict(prior_overrides or {})
    truths = dict(truths or {})
    for alpha in alphas:
        truths.setdefault(alpha, default_truth(alpha, ns))
    tasks = [(alpha, n, rep, seed, truths[alpha], prior_kw, post_draws)
             for alpha in alphas for n in ns for rep in range(reps)]
    records = _run(tasks, _rate_task, threads)
    summary = {}
    for alpha in alphas:
        mean_err = [float(np.mean([r["sup_error"] for r in records
                                   if r["alpha"] == alpha and r["n"] == n])) for n in ns]
        xs = [math.log(n / math.log(n)) for n in ns]
        summary[str(alpha)] = {
            "n": ns,
            "mean_sup_error": mean_err,
            "slope": ols_slope(xs, np.log(mean_err)),
            "target_slope": -alpha / (2 * alpha + 1),
            "mean_L_hat": [float(np.mean([r["L_hat"] for r in records
                                          if r["alpha"] == alpha and r["n"] == n])) for n in ns],
            "truth": truths[alpha].metadata(),
        }
    config = {"alphas": list(alphas), "ns": ns, "reps": reps, "seed": seed,
              "prior_overrides": prior_kw, "post_draws": post_draws}
    return ExperimentReport("rates", records, summary, config)


def thresholding_experiment(alpha: float = 1.0, n: int = 2 ** 15, reps: int = 50, seed: int = 0,
                            truth: TestDensity | None = None, prior_overrides: dict | None = None,
                            R: float | None = None, threads: int = 1) -> ExperimentReport:
    """How often slabs are selected above the ``alpha``-dependent cut-off, and where ``L_hat`` lands.

    ``R`` feeds the cut-off constant ``c0 = 4 R^2`` and defaults to the
    truth's Hölder radius.
    """
    truth = truth or default_truth(alpha, [n])
    R = truth.R if R is None else R
    prior_kw = {"l0": 0, **(prior_overrides or {})}
    records = []
    cut = None
    for rep in range(reps):
        x = sample_iid(truth, n, np.random.default_rng(_seed_for(seed, n, rep)))
        prior = PriorSpec.for_sample(n, **prior_kw)
        post = fit_counts(count_data(x, prior.L), prior)
        cut = cell_level(n, alpha, R, prior.L)
        deep = [post.pi_tilde[l] for l in range(cut + 3, post.L)]
        deep = np.concatenate(deep) if deep else np.zeros(0)
        _, fhat = median_density(post)
        L_hat = support_depth(fhat)
        records.append({
            "rep": rep, "n": n, "cut_level": cut, "deep_nodes": int(deep.size),
            "deep_slabs": int((deep > 0.5).sum()), "L_hat": L_hat,
        })
    nodes = sum(r["deep_nodes"] for r in records)
    slabs = sum(r["deep_slabs"] for r in records)
    summary = {
        "cut_level": cut,
        "deep_slab_fraction": slabs / nodes if nodes else 0.0,
        "L_hat_within_cut_plus_2": float(np.mean([r["L_hat"] <= cut + 2 for r in records])),
        "truth": truth.metadata(),
    }
    config = {"alpha": alpha, "n": n, "reps": reps, "seed": seed, "R": R, "prior_overrides": prior_kw}
    return ExperimentReport("thresholding", records, summary, config)


def _coverage_task(task):
    (n, rep, seed, truth, spec, prior_kw) = task
    data_seq, radius_seq, fresh_seq = _seed_for(seed, n, rep).spawn(3)
    x = sample_iid(truth, n, np.random.default_rng(data_seq))
    prior = PriorSpec.for_sample(n, **prior_kw)
    post = fit_counts(count_data(x, prior.L), prior)
    center = centering_Cn(x, n, prior.L)
    _, fhat = median_density(post)
    L_hat = support_depth(fhat)
    a_hat = alpha_hat(L_hat, n, spec.alpha0)
    Rn = radius_Rn(post, center, spec, radius_seq)
    bd = band_draws(post, center, Rn, a_hat, spec, fresh_seq)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        diam = _diameter_from_draws(bd, center, a_hat, spec)
    covered = band_membership(truth.density, center, Rn, a_hat, spec)
    return {
        "n": n, "rep": rep, "L": prior.L, "l0": prior.l0, "L_hat": L_hat, "alpha_hat": a_hat,
        "Rn": Rn, "covered": bool(covered), "credibility": bd.credibility,
        "diameter_proxy": diam,
        "sup_error": sup_norm_distance(mean_density(post), truth.density),
    }


def coverage_experiment(truth: TestDensity | None = None, ns: Sequence[int] = (2 ** 15,),
                        reps: int = 200, spec: BandSpec | None = None, seed: int = 0,
                        prior_overrides: dict | None = None, threads: int = 1) -> ExperimentReport:
    """Frequentist coverage, credibility and diameter of the credible band.

    The prior has flat initialisation at the default depth unless
    overridden.  With several sample sizes the summary also regresses the
    log mean diameter proxy on ``ln(n / ln n)``.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    ns = sorted(int(n) for n in ns)
    spec = spec or BandSpec()
    truth = truth or default_truth(0.5, ns)
    prior_kw = dict(prior_overrides or {})
    tasks = [(n, rep, seed, truth, spec, prior_kw) for n in ns for rep in range(reps)]
    records = _run(tasks, _coverage_task, threads)
    per_n = {}
    for n in ns:
        rs = [r for r in records if r["n"] == n]
        diams = np.array([r["diameter_proxy"] for r in rs], dtype=float)
        per_n[str(n)] = {
            "coverage": float(np.mean([r["covered"] for r in rs])),
            "mean_credibility": float(np.mean([r["credibility"] for r in rs])),
            "mean_diameter_proxy": float(np.nanmean(diams)) if np.isfinite(diams).any() else math.nan,
            "mean_Rn": float(np.mean([r["Rn"] for r in rs])),
            "mean_alpha_hat": float(np.mean([r["alpha_hat"] for r in rs])),
        }
    summary = {"per_n": per_n, "truth": truth.metadata(), "gamma": spec.gamma}
    first = per_n[str(ns[0])]
    summary["coverage"] = first["coverage"]
    summary["mean_credibility"] = first["mean_credibility"]
    if len(ns) >= 2:
        xs = np.log([n / math.log(n) for n in ns])
        ys = np.log([per_n[str(n)]["mean_diameter_proxy"] for n in ns])
        slope = ols_slope(xs, ys)
        intercept = float(ys.mean() - slope * xs.mean())
        summary["diameter_slope"] = slope
        summary["diameter_fit"] = {str(n): math.exp(intercept + slope * x) for n, x in zip(ns, xs)}
        if truth.alpha is not None:
            summary["target_slope"] = -truth.alpha / (2 * truth.alpha + 1)
    config = {"ns": ns, "reps": reps, "seed": seed, "gamma": spec.gamma, "S": spec.S,
              "alpha0": spec.alpha0, "u_n": spec.u_n, "R": spec.R, "prior_overrides": prior_kw}
    return ExperimentReport("coverage", records, summary, config)


def bvm_experiment(n: int = 2 ** 15, S: int = 2000, seed: int = 0, truth: TestDensity | None = None,
                   l0: int | None = None, threshold: float = 0.1,
                   prior_overrides: dict | None = None) -> ExperimentReport:
    """Coordinate-wise Gaussian-limit check plus a null calibration on exact Gaussian draws."""
    truth = truth or make_uniform_density()
    prior = PriorSpec.for_sample(n, **(prior_overrides or {}))
    if l0 is None:
        l0 = default_l0(n, prior.L)
    if prior.l0 < l0:
        prior = prior.with_overrides(l0=l0)
    data_seq, draw_seq, null_seq = _seed_for(seed, n).spawn(3)
    x = sample_iid(truth, n, np.random.default_rng(data_seq))
    post = fit_counts(count_data(x, prior.L), prior)
    center = centering_Cn(x, n, prior.L)
    report = bvm_diagnostic(post, center, truth.density, l0, S, draw_seq, threshold)
    nodes = [NodeIndex(l, k) for l, k in report.nodes]
    cov = white_bridge_covariance(truth.density, nodes)
    null = np.random.default_rng(null_seq).multivariate_normal(np.zeros(len(nodes)), cov, size=S,
                                                               method="eigh")
    null_report = ks_report(null, np.diag(cov), report.nodes, threshold)
    records = [
        {"level": l, "position": k, "variance": v, "ks": d, "ks_null": dn,
         "passed": bool(d <= threshold), "passed_null": bool(dn <= threshold)}
        for (l, k), v, d, dn in zip(report.nodes, report.variances, report.ks, null_report.ks)
    ]
    summary = {
        "l0": l0, "coordinates": len(records), "pass_fraction": report.pass_fraction,
        "null_pass_fraction": null_report.pass_fraction, "max_ks": float(report.ks.max()),
        "truth": truth.metadata(),
    }
    config = {"n": n, "S": S, "seed": seed, "threshold": threshold, "l0": l0,
              "prior": asdict(prior)}
    return ExperimentReport("bvm", records, summary, config)
