"""Full-scale acceptance runs, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
numbers; the same lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from sspolya.bands import BandSpec
from sspolya.cli import RunConfig, cmd_fit, cmd_simulate
from sspolya.haar import (
    HistogramDensity,
    coeff_from_tree,
    haar_analyze,
    haar_synthesize,
    WaveletField,
)
from sspolya.simlab import (
    bvm_experiment,
    coverage_experiment,
    default_truth,
    oracle_node_posterior,
    rate_experiment,
    sample_iid,
    thresholding_experiment,
)
from sspolya.special import beta_quantile, log_beta, reg_inc_beta
from sspolya.sspt import (
    PriorSpec,
    fit,
    log_bayes_factor,
    mean_density,
    median_density,
    posterior_slab_weight,
    sample_densities,
)


def record(number, title, ok, detail, elapsed):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail} | {elapsed:.1f}s"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


class TestAcceptance:
    def test_c1_node_conjugacy(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(20240501)
        worst = 0.0
        for _ in range(200):
            total = int(rng.integers(0, 65))
            n0 = int(rng.integers(0, total + 1))
            n1 = total - n0
            a = int(rng.choice([1, 2, 3]))
            pi = float(rng.uniform(0.01, 1.0))
            pi_t, mean = oracle_node_posterior(n0, n1, a, pi)
            closed = posterior_slab_weight(pi, log_bayes_factor(n0, n1, a))
            closed_mean = (1 - closed) * 0.5 + closed * (n0 + a) / (n0 + n1 + 2 * a)
            worst = max(worst, abs(pi_t - closed), abs(mean - closed_mean))
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-6 and elapsed < 5
        assert record(1, "node conjugacy vs quadrature", ok,
                      f"200 nodes, max gap {worst:.2e} (tol 1e-6)", elapsed)

    def test_c2_tree_conjugacy(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        worst = 0.0
        nodes = 0
        for _ in range(20):
            n = int(rng.integers(1, 65))
            L = int(rng.integers(1, 4))
            prior = PriorSpec(L=L, a=int(rng.choice([1, 2, 3])), kappa=float(rng.uniform(0, 2)),
                              l0=int(rng.integers(0, L + 1)),
                              schedule=str(rng.choice(["exponential", "exponential-normalized", "l-log-l"])))
            x = 1.0 - rng.random(n)
            post = fit(x, prior)
            pi = prior.slab_weights()
            means = post.split_means()
            for l in range(L):
                for k in range(1 << l):
                    # counts straight from the interval definition, independent of the binning code
                    lo, mid, hi = k / 2**l, (2 * k + 1) / 2 ** (l + 1), (k + 1) / 2**l
                    n0 = int(np.sum((x > lo) & (x <= mid)))
                    n1 = int(np.sum((x > mid) & (x <= hi)))
                    _, m = oracle_node_posterior(n0, n1, prior.a, float(pi[l]))
                    worst = max(worst, abs(m - means[l][k]))
                    nodes += 1
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-6 and elapsed < 10
        assert record(2, "whole-tree conjugacy", ok,
                      f"20 datasets, {nodes} nodes, max gap {worst:.2e} (tol 1e-6)", elapsed)

    def test_c3_structural_exactness(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(3)
        round_trip = 0.0
        for depth in range(1, 13):
            h = rng.gamma(2.0, size=1 << depth)
            f = HistogramDensity(h / h.mean())
            round_trip = max(round_trip, np.abs(haar_synthesize(haar_analyze(f)).heights - f.heights).max())
            w = WaveletField([0.01 * rng.standard_normal(1 << l) for l in range(depth)])
            round_trip = max(round_trip, np.abs(haar_analyze(haar_synthesize(w)).flat() - w.flat()).max())

        tree_gap = 0.0
        L = 10
        splits = [rng.uniform(0.02, 0.98, size=1 << l) for l in range(L)]
        mass = np.ones(1)
        masses = [mass]
        for y in splits:
            mass = np.stack([mass * y, mass * (1 - y)], axis=-1).ravel()
            masses.append(mass)
        w = haar_analyze(HistogramDensity(masses[L] * 2.0**L))
        for l in range(L):
            tree_gap = max(tree_gap, np.abs(coeff_from_tree(masses[l], splits[l], l) - w.coeffs[l]).max())

        mass_gap = 0.0
        for seed in range(5):
            x = rng.beta(0.5 + seed, 2.0, size=5000)
            post = fit(x)
            for hts in sample_densities(post, 100, seed):
                mass_gap = max(mass_gap, abs(hts.sum() * 2.0**-post.L - 1))
            mass_gap = max(mass_gap, abs(mean_density(post).integral() - 1),
                           abs(median_density(post)[0].integral() - 1))

        special_gap = max(
            abs(log_beta(1, 1)), abs(log_beta(2, 2) - math.log(1 / 6)), abs(log_beta(3, 1) - math.log(1 / 3)),
            abs(reg_inc_beta(0.3, 1, 1) - 0.3), abs(reg_inc_beta(0.25, 1, 2) - 0.4375),
            abs(reg_inc_beta(0.5, 4, 4) - 0.5), abs(beta_quantile(0.5, 2, 1) - math.sqrt(0.5)),
            abs(beta_quantile(0.4375, 1, 2) - 0.25), abs(beta_quantile(0.5, 3, 3) - 0.5),
        )
        elapsed = time.perf_counter() - t0
        ok = (round_trip <= 1e-12 and tree_gap <= 1e-12 and mass_gap <= 1e-12
              and special_gap <= 1e-10 and elapsed < 10)
        assert record(3, "structural exactness", ok,
                      f"round trip {round_trip:.1e}, tree coeffs {tree_gap:.1e}, mass {mass_gap:.1e}, "
                      f"special {special_gap:.1e}", elapsed)

    def test_c4_adaptive_rate(self):
        t0 = time.perf_counter()
        rep = rate_experiment(alphas=(0.5, 1.0), ns=[2**k for k in range(12, 18)], reps=50, seed=1)
        elapsed = time.perf_counter() - t0
        parts, ok = [], elapsed < 600
        for alpha in (0.5, 1.0):
            s = rep.summary[str(alpha)]
            good = abs(s["slope"] - s["target_slope"]) <= 0.15
            ok &= good
            parts.append(f"alpha={alpha}: slope {s['slope']:.3f} vs {s['target_slope']:.3f} +- 0.15")
        assert record(4, "adaptive sup-norm rate", ok, "; ".join(parts), elapsed)

    def test_c5_thresholding(self):
        t0 = time.perf_counter()
        rep = thresholding_experiment(alpha=1.0, n=2**15, reps=50, seed=2)
        elapsed = time.perf_counter() - t0
        s = rep.summary
        ok = s["deep_slab_fraction"] <= 0.01 and s["L_hat_within_cut_plus_2"] >= 0.90 and elapsed < 180
        assert record(5, "thresholding above the cut-off", ok,
                      f"cut level {s['cut_level']}, deep slab fraction {s['deep_slab_fraction']:.4f} (<= 0.01), "
                      f"L_hat <= cut+2 in {s['L_hat_within_cut_plus_2']:.2f} of fits (>= 0.90)", elapsed)

    def test_c6_coverage(self):
        t0 = time.perf_counter()
        ns = (2**13, 2**15, 2**17)
        truth = default_truth(0.5, ns)
        rep = coverage_experiment(truth, ns=ns, reps=200, spec=BandSpec(gamma=0.05, S=2000), seed=3)
        elapsed = time.perf_counter() - t0
        s = rep.summary
        mid = s["per_n"][str(2**15)]
        fitted = s["diameter_fit"][str(2**15)]
        checks = {
            "coverage": mid["coverage"] >= 0.90,
            "credibility": 0.90 <= mid["mean_credibility"] <= 1.0,
            "diameter": mid["mean_diameter_proxy"] <= 3 * fitted,
            "slope": abs(s["diameter_slope"] - s["target_slope"]) <= 0.2,
        }
        ok = all(checks.values()) and elapsed < 1800
        detail = (f"coverage {mid['coverage']:.3f} (>= 0.90), credibility {mid['mean_credibility']:.3f} "
                  f"(in [0.90, 1]), diameter {mid['mean_diameter_proxy']:.3f} vs 3 x fit {3 * fitted:.3f}, "
                  f"slope {s['diameter_slope']:.3f} vs {s['target_slope']:.3f} +- 0.2")
        assert record(6, "band coverage, credibility and size", ok, detail, elapsed)

    def test_c7_bvm(self):
        t0 = time.perf_counter()
        rep = bvm_experiment(n=2**15, S=2000, seed=4)
        elapsed = time.perf_counter() - t0
        s = rep.summary
        ok = s["pass_fraction"] >= 0.90 and s["null_pass_fraction"] >= 0.90 and elapsed < 300
        assert record(7, "coordinate-wise Gaussian limit", ok,
                      f"l0={s['l0']}, {s['coordinates']} coords, pass {s['pass_fraction']:.2f}, "
                      f"null pass {s['null_pass_fraction']:.2f}, max KS {s['max_ks']:.3f} (<= 0.1)", elapsed)

    def test_c8_determinism(self, tmp_path):
        t0 = time.perf_counter()
        x = sample_iid(default_truth(1.0, [2**12]), 2**12, np.random.default_rng(5))
        inp = tmp_path / "x.txt"
        inp.write_text("".join(f"{v!r}\n" for v in x.tolist()))
        same = True
        for cmd, extra in ((cmd_fit, {"input": str(inp)}),
                           (cmd_simulate, {"mode": "rates", "reps": 2, "ns": "2^10,2^11"}),
                           (cmd_simulate, {"mode": "bvm", "ns": "2^12", "draws": 300})):
            outs = []
            for run in ("a", "b"):
                cfg = RunConfig.from_sources(None, {"seed": 11, "out": str(tmp_path / f"{cmd.__name__}{run}"),
                                                    **extra})
                outs.append({k: p.read_bytes() for k, p in cmd(cfg).items()})
            same &= outs[0] == outs[1]
        elapsed = time.perf_counter() - t0
        assert record(8, "byte-identical reruns", same,
                      "fit + simulate(rates, bvm) artifacts identical" if same else "artifacts differ", elapsed)

