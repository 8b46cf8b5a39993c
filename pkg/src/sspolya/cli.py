"""Command line front end: ``fit``, ``band`` and ``simulate``.

Exit codes: 0 success, 2 input or configuration error, 3 degenerate result.
Every command is a pure function of the input bytes, the configuration and
the seed, so repeated runs write byte-identical CSV and JSON files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .bands import BandSpec, DegenerateBandWarning, credible_band
from .dyadic import truncation_level
from .haar import refine_heights
from .schemas import BAND_SCHEMA, POSTERIOR_SCHEMA, SUMMARY_SCHEMA, validate
from .simlab import (
    bvm_experiment,
    coverage_experiment,
    default_truth,
    rate_experiment,
    thresholding_experiment,
)
from .sspt import SCHEDULES, DEFAULT_KAPPA, PriorSpec, fit, mean_density, median_density

log = logging.getLogger("sspolya")

MODES = ("rates", "coverage", "thresholding", "bvm")
# settings that only decide where and how results are written
OUTPUT_ONLY = ("out", "plot")


class InputError(Exception):
    """Bad input file or configuration (exit code 2)."""


class DegenerateResult(Exception):
    """The computation finished but its result is unusable (exit code 3)."""


@dataclass
class RunConfig:
    input: str | None = None
    out: str = "."
    seed: int = 0
    a: int = 1
    kappa: float = DEFAULT_KAPPA
    schedule: str = "exponential-normalized"
    l0: str = "auto"
    L: int | None = None
    gamma: float = 0.05
    un: str = "log"
    alpha0: float = 0.5
    R: float = 1.0
    draws: int = 2000
    reps: int | None = None
    threads: int = 1
    mode: str = "rates"
    alphas: str | None = None
    ns: str | None = None
    plot: bool = False

    # -- construction --------------------------------------------------------

    @classmethod
    def from_sources(cls, config_path=None, overrides=None) -> "RunConfig":
        values = {}
        if config_path:
            values.update(read_config_file(config_path))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise InputError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(known[key], raw)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        if self.a < 1:
            raise InputError(f"a must be an integer >= 1, got {self.a}")
        if not self.kappa >= 0:
            raise InputError(f"kappa must be >= 0, got {self.kappa}")
        if self.schedule not in SCHEDULES:
            raise InputError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.l0 != "auto":
            try:
                if int(self.l0) < 0:
                    raise ValueError
            except ValueError:
                raise InputError(f"l0 must be 'auto' or an integer >= 0, got {self.l0!r}") from None
        if self.L is not None and self.L < 0:
            raise InputError(f"L must be >= 0, got {self.L}")
        if not 0 < self.gamma < 1:
            raise InputError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.un not in ("log", "loglog"):
            try:
                if not float(self.un) > 0:
                    raise ValueError
            except ValueError:
                raise InputError(f"un must be 'log', 'loglog' or a positive number, got {self.un!r}") from None
        if not 0 < self.alpha0 <= 1:
            raise InputError(f"alpha0 must lie in (0, 1], got {self.alpha0}")
        if not self.R > 0:
            raise InputError(f"R must be positive, got {self.R}")
        if self.draws < 100:
            raise InputError(f"draws must be >= 100, got {self.draws}")
        if self.reps is not None and self.reps < 1:
            raise InputError(f"reps must be >= 1, got {self.reps}")
        if self.threads < 1:
            raise InputError(f"threads must be >= 1, got {self.threads}")
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("alphas", "ns"):
            if getattr(self, name) is not None:
                self._grid(name)
        if self.alphas is not None and not all(0 < x <= 1 for x in self._grid("alphas")):
            raise InputError("alphas must lie in (0, 1]")
        if self.ns is not None and not all(x >= 16 for x in self._grid("ns")):
            raise InputError("every n in ns must be >= 16")

    def _grid(self, name):
        raw = getattr(self, name)
        try:
            conv = int if name == "ns" else float
            return [conv(eval_power(v)) for v in str(raw).split(",") if v.strip()]
        except ValueError:
            raise InputError(f"cannot parse {name} grid {raw!r}") from None

    # -- derived objects -------------------------------------------------------

    def prior_kwargs(self) -> dict:
        kw = {"a": self.a, "kappa": self.kappa, "schedule": self.schedule}
        kw["l0"] = "auto" if self.l0 == "auto" else int(self.l0)
        if self.L is not None:
            kw["L"] = self.L
        return kw

    def prior_for(self, n: int) -> PriorSpec:
        kw = self.prior_kwargs()
        L = kw.get("L", truncation_level(n))
        if kw["l0"] != "auto" and kw["l0"] > L:
            raise InputError(f"l0={kw['l0']} exceeds the truncation depth L={L}")
        try:
            return PriorSpec.for_sample(n, **kw)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    def band_spec(self, n: int | None = None) -> BandSpec:
        if self.un == "log":
            u_n = None
        elif self.un == "loglog":
            u_n = math.log(math.log(n)) if n and n > 15 else None
        else:
            u_n = float(self.un)
        return BandSpec(gamma=self.gamma, u_n=u_n, alpha0=self.alpha0, S=self.draws, R=self.R)

    def echo(self) -> dict:
        """Every setting that can change the numbers, for provenance."""
        doc = dataclasses.asdict(self)
        for key in OUTPUT_ONLY:
            doc.pop(key)
        return doc


def eval_power(token: str) -> str:
    """Allow ``2^15`` style grid entries."""
    token = token.strip()
    if "^" in token:
        base, exp = token.split("^", 1)
        return str(int(base) ** int(exp))
    return token


def _coerce(f, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    typ = f.type if isinstance(f.type, str) else str(f.type)
    try:
        if typ.startswith("bool"):
            if isinstance(raw, bool):
                return raw
            return str(raw).lower() in ("1", "true", "yes", "on")
        if typ.startswith("int"):
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise InputError(f"bad value {raw!r} for {f.name}") from None
    return str(raw) if raw is not None else None


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def read_sample(path) -> np.ndarray:
    """One real in (0, 1] per line; blank lines are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read input {path}: {exc}") from None
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            v = float(s)
        except ValueError:
            raise InputError(f"{path}: line {lineno}: not a number: {s!r}") from None
        if not (0.0 < v <= 1.0):
            raise InputError(f"{path}: line {lineno}: value {s} is outside (0, 1]")
        values.append(v)
    if not values:
        raise InputError(f"{path}: no observations")
    return np.array(values)


# -- writers ------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _density_rows(heights):
    width = 1.0 / len(heights)
    return [(k * width, (k + 1) * width, float(h)) for k, h in enumerate(heights)]


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -------------------------------------------------------------------


def cmd_fit(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise InputError("fit needs --input")
    x = read_sample(cfg.input)
    prior = cfg.prior_for(x.size)
    post = fit(x, prior)
    out = _out_dir(cfg)
    doc = post.to_dict()
    validate(doc, POSTERIOR_SCHEMA)
    paths = {
        "posterior": out / "posterior.json",
        "mean_density": out / "mean_density.csv",
        "median_density": out / "median_density.csv",
        "fhat_support": out / "fhat_support.csv",
    }
    _write_json(paths["posterior"], doc)
    f_mean = mean_density(post)
    f_med, fhat = median_density(post)
    _write_csv(paths["mean_density"], ["lower", "upper", "height"], _density_rows(f_mean.heights))
    _write_csv(paths["median_density"], ["lower", "upper", "height"], _density_rows(f_med.heights))
    _write_csv(paths["fhat_support"], ["level", "position", "coefficient"],
               [(l, k, fhat[l, k]) for l, k in fhat.support()])
    if cfg.plot:
        from .plotting import plot_fit

        paths["figure"] = out / "fit.png"
        plot_fit(f_mean.heights, f_med.heights, paths["figure"], data=x)
    log.info("fit: n=%d L=%d l0=%d, wrote %s", post.n, post.L, post.prior.l0, out)
    return paths


def cmd_band(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise InputError("band needs --input")
    x = read_sample(cfg.input)
    if x.size < 3:
        raise InputError("band needs at least 3 observations")
    post = fit(x, cfg.prior_for(x.size))
    spec = cfg.band_spec(x.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBandWarning)
        result, bd, center = credible_band(post, x, spec, seed=cfg.seed)
    accepted = bd.accepted
    if accepted.shape[0] == 0:
        raise DegenerateResult("no posterior draw fell inside the band")
    out = _out_dir(cfg)
    doc = result.to_dict()
    validate(doc, BAND_SCHEMA)
    paths = {"band": out / "band.json", "envelope": out / "envelope.csv"}
    _write_json(paths["band"], doc)
    center_h = center.heights()
    depth = max(int(round(math.log2(accepted.shape[1]))), int(round(math.log2(center_h.size))))
    acc = refine_heights(accepted, depth)
    cen = refine_heights(center_h, depth)
    xs = (np.arange(1 << depth) + 0.5) / (1 << depth)
    lower, upper = acc.min(axis=0), acc.max(axis=0)
    _write_csv(paths["envelope"], ["x", "lower", "upper", "center"], zip(xs, lower, upper, cen))
    if cfg.plot:
        from .plotting import plot_envelope

        paths["figure"] = out / "envelope.png"
        plot_envelope(xs, lower, upper, cen, paths["figure"])
    if accepted.shape[0] < 10:
        raise DegenerateResult(f"only {accepted.shape[0]} posterior draws inside the band")
    log.info("band: Rn=%.4g alpha_hat=%.3f L_hat=%d credibility=%.3f",
             result.Rn, result.alpha_hat, result.L_hat, result.credibility)
    return paths


def cmd_simulate(cfg: RunConfig) -> dict:
    mode = cfg.mode
    alphas = cfg._grid("alphas") if cfg.alphas else None
    ns = cfg._grid("ns") if cfg.ns else None
    prior_kw = cfg.prior_kwargs()
    if mode == "rates":
        ns = ns or [2 ** k for k in range(12, 18)]
        report = rate_experiment(alphas or (0.5, 1.0), ns, cfg.reps or 50, prior_kw, cfg.seed,
                                 threads=cfg.threads)
    elif mode == "coverage":
        ns = ns or [2 ** 15]
        alpha = (alphas or [0.5])[0]
        report = coverage_experiment(default_truth(alpha, ns), ns, cfg.reps or 200,
                                     cfg.band_spec(min(ns)), cfg.seed, prior_kw, cfg.threads)
    elif mode == "thresholding":
        n = (ns or [2 ** 15])[0]
        alpha = (alphas or [1.0])[0]
        if cfg.l0 == "auto":
            prior_kw["l0"] = 0
        report = thresholding_experiment(alpha, n, cfg.reps or 50, cfg.seed, prior_overrides=prior_kw)
    else:
        n = (ns or [2 ** 15])[0]
        report = bvm_experiment(n, cfg.draws, cfg.seed, prior_overrides=prior_kw)
    report.config["cli"] = cfg.echo()
    out = _out_dir(cfg)
    doc = json.loads(report.to_json())
    validate(doc, SUMMARY_SCHEMA)
    paths = {"report": out / "report.csv", "summary": out / "summary.json"}
    paths["report"].write_text(report.to_csv())
    _write_json(paths["summary"], doc)
    if cfg.plot:
        from . import plotting

        paths["figure"] = out / f"{mode}.png"
        if mode == "rates":
            plotting.plot_rates(report.summary, paths["figure"])
        elif mode == "coverage":
            plotting.plot_coverage(report.summary, paths["figure"])
        elif mode == "thresholding":
            plotting.plot_thresholding(report.records, paths["figure"])
        else:
            plotting.plot_bvm(report.records, report.config["threshold"], paths["figure"])
    log.info("simulate[%s]: wrote %s", mode, out)
    return paths


COMMANDS = {"fit": cmd_fit, "band": cmd_band, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sspolya", description="Spike-and-slab Polya tree density estimation and credible bands."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("io")
    g.add_argument("--config", help="flat key = value file; command line flags take precedence")
    g.add_argument("--input", help="sample file, one value in (0, 1] per line")
    g.add_argument("--out", help="output directory (default: .)")
    g.add_argument("--seed", type=int)
    g.add_argument("--plot", action="store_const", const=True, help="also render PNG figures")
    g.add_argument("-v", "--verbose", action="store_true")
    p = common.add_argument_group("prior")
    p.add_argument("--a", type=int, help="slab Beta(a, a) parameter (default 1)")
    p.add_argument("--kappa", type=float, help="slab weight decay rate (default 2 ln 2)")
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--l0", help="flat-initialisation depth or 'auto'")
    p.add_argument("--L", type=int, help="override the truncation depth")
    b = common.add_argument_group("band")
    b.add_argument("--gamma", type=float)
    b.add_argument("--un", help="'log', 'loglog' or a number")
    b.add_argument("--alpha0", type=float)
    b.add_argument("--R", type=float, help="constant in c0 = 4 R^2 of the diameter cut-off")
    b.add_argument("--draws", type=int, help="posterior draws per Monte Carlo step (default 2000)")
    e = common.add_argument_group("experiments")
    e.add_argument("--reps", type=int)
    e.add_argument("--threads", type=int)
    e.add_argument("--mode", choices=MODES)
    e.add_argument("--alphas", help="comma separated, e.g. 0.5,1")
    e.add_argument("--ns", help="comma separated, e.g. 2^12,2^13")
    sub.add_parser("fit", parents=[common], help="fit the posterior and write point estimates")
    sub.add_parser("band", parents=[common], help="fit and compute the adaptive credible band")
    sub.add_parser("simulate", parents=[common], help="run a Monte Carlo experiment")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
        COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegenerateResult as exc:
        print(f"degenerate result: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
