"""Figures written next to the CSV artifacts when ``--plot`` is given.

matplotlib is imported lazily so the rest of the package never needs it.
"""

from __future__ import annotations

import math

import numpy as np

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 5.0

params = {
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "lines.linewidth": 1.2,
    "savefig.bbox": "tight",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(params)
    return plt


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    fig.clf()


def _steps(heights):
    h = np.asarray(heights, dtype=float)
    edges = np.linspace(0.0, 1.0, h.size + 1)
    return edges, np.append(h, h[-1])


def plot_fit(mean_heights, median_heights, path, data=None):
    plt = _pyplot()
    fig, ax = plt.subplots()
    if data is not None:
        ax.hist(data, bins=min(64, max(8, int(math.sqrt(len(data))))), density=True,
                color="0.85", label="data")
    for h, label, style in ((mean_heights, "posterior mean", "-"), (median_heights, "median pivot", "--")):
        x, y = _steps(h)
        ax.step(x, y, where="post", ls=style, label=label)
    ax.set_xlim(0, 1)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    _save(fig, path)
    plt.close(fig)


def plot_envelope(x, lower, upper, center, path):
    plt = _pyplot()
    fig, ax = plt.subplots()
    ax.fill_between(x, lower, upper, step="mid", color="tab:blue", alpha=0.3, label="accepted draws")
    ax.step(x, center, where="mid", color="k", lw=0.8, label="centering")
    ax.set_xlim(0, 1)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    _save(fig, path)
    plt.close(fig)


def plot_rates(summary, path):
    plt = _pyplot()
    fig, ax = plt.subplots()
    for alpha, s in sorted(summary.items()):
        n = np.asarray(s["n"], dtype=float)
        x = n / np.log(n)
        err = np.asarray(s["mean_sup_error"])
        line, = ax.loglog(x, err, "o-", label=f"alpha={alpha} (slope {s['slope']:.3f})")
        ref = err[0] * (x / x[0]) ** s["target_slope"]
        ax.loglog(x, ref, ":", color=line.get_color())
    ax.set_xlabel("n / log n")
    ax.set_ylabel("mean sup-norm error")
    ax.legend(frameon=False)
    _save(fig, path)
    plt.close(fig)


def plot_coverage(summary, path):
    plt = _pyplot()
    per_n = summary["per_n"]
    ns = sorted(int(k) for k in per_n)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(2 * fig_width, fig_width * golden_mean))
    cov = [per_n[str(n)]["coverage"] for n in ns]
    cred = [per_n[str(n)]["mean_credibility"] for n in ns]
    ax1.semilogx(ns, cov, "o-", base=2, label="coverage")
    ax1.semilogx(ns, cred, "s--", base=2, label="credibility")
    ax1.axhline(1 - summary["gamma"], color="0.5", lw=0.8)
    ax1.set_ylim(0, 1.02)
    ax1.set_xlabel("n")
    ax1.legend(frameon=False)
    diam = [per_n[str(n)]["mean_diameter_proxy"] for n in ns]
    ax2.loglog(ns, diam, "o-", base=2)
    ax2.set_xlabel("n")
    ax2.set_ylabel("diameter proxy")
    _save(fig, path)
    plt.close(fig)


def plot_bvm(records, threshold, path):
    plt = _pyplot()
    fig, ax = plt.subplots()
    idx = np.arange(len(records))
    ax.bar(idx - 0.2, [r["ks"] for r in records], width=0.4, label="posterior")
    ax.bar(idx + 0.2, [r["ks_null"] for r in records], width=0.4, label="exact Gaussian")
    ax.axhline(threshold, color="k", lw=0.8)
    ax.set_xlabel("coordinate (level-major)")
    ax.set_ylabel("KS distance")
    ax.legend(frameon=False)
    _save(fig, path)
    plt.close(fig)


def plot_thresholding(records, path):
    plt = _pyplot()
    fig, ax = plt.subplots()
    L_hat = [r["L_hat"] for r in records]
    ax.hist(L_hat, bins=np.arange(min(L_hat), max(L_hat) + 2) - 0.5, rwidth=0.8)
    ax.axvline(records[0]["cut_level"] + 2.5, color="k", lw=0.8)
    ax.set_xlabel("L_hat")
    ax.set_ylabel("fits")
    _save(fig, path)
    plt.close(fig)
