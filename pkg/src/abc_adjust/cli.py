"""``abc-adjust`` command line: run, cv, simulate-toy, density, study.

Settings can come from a flat ``key = value`` file (``--config``); flags given
on the command line win.  Keys are the long option names with dashes replaced
by underscores.  Exit status: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .adjustment import infer, method_config
from .data import (FLOAT_FMT, TableFormat, Transform, TransformSpec, load_observed, load_sample,
                   load_table, write_observed, write_sample, write_table)
from .errors import AbcError, ConfigError, DataError
from .posterior import default_grid, kde_bandwidth, shrinkage_ratio, summarize, weighted_kde
from .regression import MlpConfig
from .rejection import RejectionConfig
from .toys import ToySpec, simulate
from .validation import cross_validate, mse_study, write_cv_report, write_study

RESULT_PREFIX = "result."


# --- configuration ------------------------------------------------------------

def read_config(path: str) -> Dict[str, str]:
    """Parse a ``key = value`` file. Blank lines and ``#`` comments are skipped."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{no}: expected 'key = value'")
        key = key.strip()
        if key.startswith(RESULT_PREFIX):
            continue
        values[key] = value.strip()
    return values


def _merge(args: argparse.Namespace, keys: Dict[str, object]) -> Dict[str, object]:
    """Flags override config-file values, which override ``keys`` defaults."""
    from_file = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(from_file) - set(keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        if flag is not None and flag != []:
            merged[key] = flag
        elif key in from_file:
            merged[key] = from_file[key]
        else:
            merged[key] = default
    return merged


def _num(value, cast, key):
    if value is None or value == "":
        return None
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def _list(value) -> List[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out += _list(v)
        return out
    return [v.strip() for v in str(value).split(",") if v.strip()]


def parse_transforms(items: List[str], param_names) -> TransformSpec:
    """``name=kind`` items (kind: none, log, logit:lower:upper) to a TransformSpec."""
    chosen = {}
    for item in items:
        name, sep, kind = item.partition("=")
        if not sep:
            raise ConfigError(f"transform {item!r} should look like 'param_name=log'")
        name = name.strip()
        if name not in param_names:
            raise ConfigError(f"transform names unknown parameter {name!r}")
        try:
            chosen[name] = Transform.parse(kind)
        except (DataError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return TransformSpec(tuple(chosen.get(n, Transform()) for n in param_names))


@dataclass
class RunConfig:
    table: str
    observed: Optional[str]
    method: str = "loclinear"
    rate: Optional[float] = 0.01
    bandwidth: Optional[float] = None
    kernel: str = "epanechnikov"
    standardize: str = "mad"
    transform: List[str] = field(default_factory=list)
    out: str = "abc_out"
    seed: int = 0
    levels: List[float] = field(default_factory=lambda: [0.95])
    ridge_lambda: float = 1e-3
    hidden: Optional[int] = None
    epochs: int = 2000
    l2: float = 1e-4
    kde_kernel: str = "gaussian"
    grid_size: int = 512
    delimiter: Optional[str] = None

    def as_items(self):
        yield "table", self.table
        yield "observed", self.observed or ""
        yield "method", self.method
        yield "rate", "" if self.rate is None else repr(self.rate)
        yield "bandwidth", "" if self.bandwidth is None else repr(self.bandwidth)
        yield "kernel", self.kernel
        yield "standardize", self.standardize
        yield "transform", ", ".join(self.transform)
        yield "out", self.out
        yield "seed", str(self.seed)
        yield "levels", ", ".join(repr(v) for v in self.levels)
        yield "ridge_lambda", repr(self.ridge_lambda)
        yield "hidden", "" if self.hidden is None else str(self.hidden)
        yield "epochs", str(self.epochs)
        yield "l2", repr(self.l2)
        yield "kde_kernel", self.kde_kernel
        yield "grid_size", str(self.grid_size)
        yield "delimiter", {None: "", "\t": "tab"}.get(self.delimiter, self.delimiter)


_RUN_KEYS = {"table": None, "observed": None, "method": "loclinear", "rate": None, "bandwidth": None,
             "kernel": "epanechnikov", "standardize": "mad", "transform": [], "out": "abc_out", "seed": 0,
             "levels": "0.95", "ridge_lambda": 1e-3, "hidden": None, "epochs": 2000, "l2": 1e-4,
             "kde_kernel": "gaussian", "grid_size": 512, "delimiter": None}


def _delimiter(value):
    if value in (None, ""):
        return None
    return "\t" if value in ("tab", "\\t") else value


def build_run_config(args, required_observed: bool = True) -> RunConfig:
    v = _merge(args, _RUN_KEYS)
    if not v["table"]:
        raise ConfigError("--table is required")
    if required_observed and not v["observed"]:
        raise ConfigError("--observed is required")
    rate = _num(v["rate"], float, "rate")
    bandwidth = _num(v["bandwidth"], float, "bandwidth")
    if rate is None and bandwidth is None:
        rate = 0.01
    if rate is not None and bandwidth is not None:
        raise ConfigError("give exactly one of --rate and --bandwidth")
    levels = [_num(x, float, "levels") for x in _list(v["levels"])]
    if any(not 0 < lv < 1 for lv in levels):
        raise ConfigError("credible levels must lie in (0, 1)")
    return RunConfig(
        table=str(v["table"]), observed=v["observed"] and str(v["observed"]), method=str(v["method"]),
        rate=rate, bandwidth=bandwidth, kernel=str(v["kernel"]), standardize=str(v["standardize"]),
        transform=_list(v["transform"]), out=str(v["out"]), seed=_num(v["seed"], int, "seed"),
        levels=levels, ridge_lambda=_num(v["ridge_lambda"], float, "ridge_lambda"),
        hidden=_num(v["hidden"], int, "hidden"), epochs=_num(v["epochs"], int, "epochs"),
        l2=_num(v["l2"], float, "l2"), kde_kernel=str(v["kde_kernel"]),
        grid_size=_num(v["grid_size"], int, "grid_size"), delimiter=_delimiter(v["delimiter"]))


def _rejection_config(cfg: RunConfig) -> RejectionConfig:
    return RejectionConfig(kernel=cfg.kernel, acceptance_rate=cfg.rate, bandwidth=cfg.bandwidth,
                           standardization=cfg.standardize)


def _mlp_config(cfg: RunConfig) -> MlpConfig:
    return MlpConfig(hidden_units=cfg.hidden, epochs=cfg.epochs, l2=cfg.l2, seed=cfg.seed)


# --- output -----------------------------------------------------------------------

def _fmt(x) -> str:
    return FLOAT_FMT % x if isinstance(x, (float, np.floating)) else str(x)


def _kv_table(rows) -> str:
    return "key,value\n" + "".join(f"{k},{_fmt(v)}\n" for k, v in rows)


def _render(writer, *args) -> str:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


def _manifest(items, results) -> str:
    lines = [f"{k} = {v}" for k, v in items]
    lines += [f"{RESULT_PREFIX}{k} = {_fmt(v)}" for k, v in results]
    return "\n".join(lines) + "\n"


def commit(out_dir: str, artifacts: Dict[str, str]) -> None:
    """Write every artifact to a staging directory, then move them into ``out_dir``."""
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".abc-stage-", dir=parent)
    try:
        for name, text in artifacts.items():
            with open(os.path.join(stage, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        os.makedirs(out_dir, exist_ok=True)
        for name in artifacts:
            os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --- commands ---------------------------------------------------------------------

def cmd_run(cfg: RunConfig) -> Dict[str, str]:
    """Run the pipeline and return the artifacts ``{file name: contents}``."""
    table = load_table(cfg.table, TableFormat(delimiter=cfg.delimiter))
    obs = load_observed(cfg.observed, table, cfg.delimiter)
    transforms = parse_transforms(cfg.transform, table.param_names)
    adjustment = method_config(cfg.method, transforms, cfg.ridge_lambda, _mlp_config(cfg))
    result = infer(table, obs, _rejection_config(cfg), adjustment)
    post = result.posterior
    rej = result.rejection

    summary = summarize(post, cfg.levels)
    rows = [("method", cfg.method), ("bandwidth", rej.bandwidth), ("accepted", post.m),
            ("effective_size", post.effective_size)]
    rows += list(summary.rows())
    artifacts = {"posterior_sample.csv": _render(write_sample, post)}
    results = [("bandwidth", rej.bandwidth), ("accepted", post.m)]
    for k, name in enumerate(post.param_names):
        try:
            h = kde_bandwidth(post, k)
        except AbcError:
            # a point-mass posterior has no density; record it and carry on
            rows.append((f"{name}.kde_bandwidth", "nan"))
            results.append((f"kde_bandwidth.{name}", "nan"))
            continue
        dens = weighted_kde(post, default_grid(post, h, k, cfg.grid_size), h, cfg.kde_kernel, k)
        rows.append((f"{name}.kde_bandwidth", dens.bandwidth))
        results.append((f"kde_bandwidth.{name}", dens.bandwidth))
        artifacts[f"density_{name}.csv"] = "grid,density\n" + "".join(
            f"{_fmt(g)},{_fmt(d)}\n" for g, d in zip(dens.grid, dens.density))
    artifacts["summary.csv"] = _kv_table(rows)
    if post is not rej.sample:
        artifacts["rejection_sample.csv"] = _render(write_sample, rej.sample)
        try:
            ratios = shrinkage_ratio(post, rej.sample)
        except AbcError:
            ratios = np.full(post.p, np.nan)
    else:
        ratios = np.ones(post.p)
    artifacts["shrinkage.csv"] = "parameter,variance_ratio\n" + "".join(
        f"{n},{_fmt(r)}\n" for n, r in zip(post.param_names, ratios))
    results.append(("created", _timestamp()))
    results.append(("version", __version__))
    artifacts["manifest.txt"] = _manifest(cfg.as_items(), results)
    return artifacts


_CV_KEYS = dict(_RUN_KEYS, methods="rejection,loclinear", holdout=100, bootstrap=1000)
_CV_KEYS.pop("method")
_CV_KEYS.pop("observed")


def cmd_cv(args) -> Dict[str, str]:
    v = _merge(args, _CV_KEYS)
    ns = argparse.Namespace(**{k: val for k, val in v.items() if k not in ("methods", "holdout", "bootstrap")},
                            observed=None, method="rejection", config=None)
    cfg = build_run_config(ns, required_observed=False)
    holdout = _num(v["holdout"], int, "holdout")
    bootstrap = _num(v["bootstrap"], int, "bootstrap")
    table = load_table(cfg.table, TableFormat(delimiter=cfg.delimiter))
    if not 1 <= holdout < table.n:
        raise ConfigError(f"holdout must lie in [1, n) with n = {table.n}, got {holdout}")
    transforms = parse_transforms(cfg.transform, table.param_names)
    rej = _rejection_config(cfg)
    methods = [(name, rej, method_config(name, transforms, cfg.ridge_lambda, _mlp_config(cfg)))
               for name in _list(v["methods"])]
    report = cross_validate(table, methods, holdout, cfg.seed, bootstrap)
    items = [(k, val) for k, val in cfg.as_items() if k not in ("observed", "method")]
    items += [("methods", ", ".join(report.methods)), ("holdout", holdout), ("bootstrap", bootstrap)]
    results = [("n_used", report.n_used), ("n_failed", report.failed.size), ("created", _timestamp()),
               ("version", __version__)]
    return {"cv.csv": _render(write_cv_report, report), "manifest.txt": _manifest(items, results)}


_TOY_KEYS = {"toy": "gaussian_conjugate", "n": None, "seed": 0, "mu0": 0.0, "tau0": 1.0, "sigma": 1.0,
             "k": 10, "n_noise": 4, "out": "toy"}


def cmd_simulate_toy(args) -> Dict[str, str]:
    v = _merge(args, _TOY_KEYS)
    n = _num(v["n"], int, "n")
    if n is None or n < 1:
        raise ConfigError(f"--n must be a positive integer, got {v['n']}")
    spec = ToySpec.from_dict({"id": v["toy"], "mu0": v["mu0"], "tau0": v["tau0"], "sigma": v["sigma"],
                              "k": v["k"], "n_noise": v["n_noise"], "seed": v["seed"]})
    data = simulate(spec, n)
    items = [("toy", spec.id), ("n", n), ("seed", spec.seed), ("mu0", repr(spec.mu0)), ("tau0", repr(spec.tau0)),
             ("sigma", repr(spec.sigma)), ("k", spec.k), ("n_noise", spec.n_noise), ("out", v["out"])]
    truth = "".join(f"{name},{_fmt(val)}\n" for name, val in zip(data.table.param_names, data.truth))
    return {"table.csv": _render(write_table, data.table),
            "observed.csv": _render(write_observed, data.observed, data.table.stat_names),
            "truth.csv": "parameter,value\n" + truth,
            "toy_manifest.txt": "\n".join(f"{k} = {val}" for k, val in items) + "\n"}


def cmd_density(args) -> Dict[str, str]:
    sample = load_sample(args.sample)
    names = _list(args.param) or list(sample.param_names)
    out = {}
    for name in names:
        if name not in sample.param_names:
            raise ConfigError(f"sample has no parameter {name!r}")
        k = sample.param_names.index(name)
        h = args.bandwidth if args.bandwidth is not None else kde_bandwidth(sample, k)
        dens = weighted_kde(sample, default_grid(sample, h, k, args.grid_size), h, args.kernel, k)
        out[f"density_{name}.csv"] = "grid,density\n" + "".join(
            f"{_fmt(g)},{_fmt(d)}\n" for g, d in zip(dens.grid, dens.density))
    return out


def cmd_study(args) -> Dict[str, str]:
    rows = mse_study(args.toy, [int(x) for x in _list(args.n_values)], [int(x) for x in _list(args.q_values)],
                     _list(args.estimators), args.replicates, args.seed, args.rate)
    return {"study.csv": _render(write_study, rows)}


# --- argument parsing -------------------------------------------------------------

def _add_run_options(p, with_method=True):
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--table", help="reference table (header + numeric rows)")
    if with_method:
        p.add_argument("--observed", help="observed statistics (one-row table or flat vector)")
        p.add_argument("--method", help="rejection | loclinear | ridge | neuralnet, optional -homo/-hetero suffix")
    p.add_argument("--rate", help="acceptance rate in (0, 1]")
    p.add_argument("--bandwidth", help="explicit rejection bandwidth (instead of --rate)")
    p.add_argument("--kernel", help="uniform | epanechnikov | gaussian")
    p.add_argument("--standardize", help="mad | sd | none")
    p.add_argument("--transform", action="append", default=[], help="param_name=log or param_name=logit:lo:hi")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed")
    p.add_argument("--levels", help="comma-separated credible levels")
    p.add_argument("--ridge-lambda", dest="ridge_lambda")
    p.add_argument("--hidden", help="hidden units for neuralnet")
    p.add_argument("--epochs")
    p.add_argument("--l2")
    p.add_argument("--kde-kernel", dest="kde_kernel")
    p.add_argument("--grid-size", dest="grid_size")
    p.add_argument("--delimiter", help="field delimiter (auto-detected if omitted; 'tab' for tabs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abc-adjust", description="ABC rejection with regression adjustment")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_options(sub.add_parser("run", help="posterior sample, summary and densities"))

    cv = sub.add_parser("cv", help="cross-validated comparison of methods")
    _add_run_options(cv, with_method=False)
    cv.add_argument("--methods", help="comma-separated method names")
    cv.add_argument("--holdout", help="number of held-out pseudo-observations")
    cv.add_argument("--bootstrap", help="bootstrap resamples for error bars")

    toy = sub.add_parser("simulate-toy", help="write a toy reference table and observation")
    toy.add_argument("--config")
    toy.add_argument("--toy", help="gaussian_conjugate | linear_gaussian_multi | hetero_scale")
    toy.add_argument("--n")
    toy.add_argument("--seed")
    for name in ("mu0", "tau0", "sigma", "k"):
        toy.add_argument(f"--{name}")
    toy.add_argument("--n-noise", dest="n_noise")
    toy.add_argument("--out")

    dens = sub.add_parser("density", help="kernel density table from a weighted sample")
    dens.add_argument("--sample", required=True)
    dens.add_argument("--param", action="append", default=[])
    dens.add_argument("--kernel", default="gaussian")
    dens.add_argument("--bandwidth", type=float)
    dens.add_argument("--grid-size", dest="grid_size", type=int, default=512)
    dens.add_argument("--out", default=".")

    st = sub.add_parser("study", help="Monte-Carlo MSE of posterior means on a toy model")
    st.add_argument("--toy", default="gaussian_conjugate")
    st.add_argument("--n-values", dest="n_values", default="1000,10000")
    st.add_argument("--q-values", dest="q_values", default="1,5")
    st.add_argument("--estimators", default="rejection,loclinear")
    st.add_argument("--replicates", type=int, default=20)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--rate", type=float, default=0.01)
    st.add_argument("--out", default=".")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = build_run_config(args)
            out, artifacts = cfg.out, cmd_run(cfg)
        elif args.command == "cv":
            artifacts = cmd_cv(args)
            out = _merge(args, _CV_KEYS)["out"]
        elif args.command == "simulate-toy":
            artifacts = cmd_simulate_toy(args)
            out = _merge(args, _TOY_KEYS)["out"]
        elif args.command == "density":
            out, artifacts = args.out, cmd_density(args)
        else:
            out, artifacts = args.out, cmd_study(args)
        commit(out, artifacts)
    except AbcError as exc:
        print(f"abc-adjust: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"abc-adjust: error: no such file: {exc.filename}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"abc-adjust: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
