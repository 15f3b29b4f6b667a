"""Command-line entry point: ``ncmart <command> [options]``.

Option values resolve in the order: command-line flag, ``--config`` file,
``NCMART_SEED`` (seed only), built-in default.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import cuculescu as cc
from . import decompose as dc
from . import harness as hs
from .algebra import NCMartError, Operator
from .filtration import MODES, differences
from .norms import NORM_FIELDS, norm_report

DEFAULTS = {
    "dim": 8,
    "levels": 4,
    "trials": 200,
    "seed": 7,
    "p_grid": "1.1,1.25,1.5,2,4,8",
    "tol": hs.TOL_OPERATOR,
    "filtration": "pinching",
    "k": 2.0,
    "mode": "general",
    "factor_dims": "2,2,2,2",
    "b_dim": 2,
    "out": None,
    "format": None,
    "dump_projections": None,
    "dump_decomposition": None,
}

COMMANDS = ("verify", "constants", "norms", "bmo", "khintchine", "demo")


class UsageError(Exception):
    pass


def _common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--dim", type=int, default=S, help="matrix size d (default 8)")
    p.add_argument("--levels", type=int, default=S, help="filtration length N (default 4)")
    p.add_argument("--trials", type=int, default=S, help="ensemble size (default 200)")
    p.add_argument("--seed", type=int, default=S, help="base seed; trial i uses [seed, i] (default 7, or NCMART_SEED)")
    p.add_argument("--p-grid", dest="p_grid", default=S, help="comma-separated exponents for `constants`")
    p.add_argument("--tol", type=float, default=S, help="operator tolerance of the checks (default 1e-8)")
    p.add_argument("--filtration", choices=hs.FILTRATIONS, default=S)
    p.add_argument("--mode", choices=MODES, default=S, help="ensemble for `norms` (default general)")
    p.add_argument("--k", type=float, default=S, help="regularity constant for the regular suite (default 2)")
    p.add_argument("--factor-dims", dest="factor_dims", default=S, help="tensor factor sizes for `bmo`/`khintchine`")
    p.add_argument("--b-dim", dest="b_dim", type=int, default=S, help="coefficient algebra size for `khintchine`")
    p.add_argument("--out", default=S, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=S)
    p.add_argument("--dump-projections", dest="dump_projections", default=S, metavar="PATH")
    p.add_argument("--dump-decomposition", dest="dump_decomposition", default=S, metavar="PATH")
    p.add_argument("--config", default=S, metavar="JSON", help="JSON file of option values")
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="ncmart", description="Noncommutative martingale verification harness.", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("verify", parents=[common], help="weak-type and regular suites")
    sub.add_parser("constants", parents=[common], help="norm-ratio report over a p-grid")
    sub.add_parser("norms", parents=[common], help="every norm of every trial martingale, per p")
    sub.add_parser("bmo", parents=[common], help="BMO estimate for independent sums")
    sub.add_parser("khintchine", parents=[common], help="operator-coefficient Khintchine ratio band")
    sub.add_parser("demo", parents=[common], help="print the four-atom dyadic example step by step")
    return parser


def resolve_options(ns: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    opts = dict(DEFAULTS)
    if "NCMART_SEED" in environ:
        try:
            opts["seed"] = int(environ["NCMART_SEED"])
        except ValueError:
            raise UsageError(f"NCMART_SEED must be an integer, got {environ['NCMART_SEED']!r}")
    given = vars(ns)
    if "config" in given:
        try:
            with open(given["config"]) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {given['config']}: {exc}")
        unknown = set(k.replace("-", "_") for k in config) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update({k.replace("-", "_"): v for k, v in config.items()})
    opts.update({k: v for k, v in given.items() if k not in ("command", "config")})
    return opts


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")


def _ints(text) -> list[int]:
    values = _floats(text)
    if any(v != int(v) or v < 1 for v in values):
        raise UsageError(f"expected positive integers, got {text!r}")
    return [int(v) for v in values]


def _spec(opts: dict) -> hs.EnsembleSpec:
    return hs.EnsembleSpec(
        dim=int(opts["dim"]),
        levels=int(opts["levels"]),
        filtration=opts["filtration"],
        trials=int(opts["trials"]),
        seed=int(opts["seed"]),
        k=float(opts["k"]),
    )


def _emit(text: str, opts: dict):
    if opts["out"]:
        with open(opts["out"], "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _suites_csv(suites: Sequence[hs.SuiteResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "check", "max_observed", "threshold", "passed", "worst_seed", "trials"])
    for s in suites:
        for c in s.checks.values():
            seed = "" if c.worst_seed is None else ":".join(str(v) for v in c.worst_seed)
            w.writerow([s.name, c.name, repr(c.max_observed), repr(c.threshold), c.passed, seed, c.trials])
    return buf.getvalue()


def _report_failures(suites: Sequence[hs.SuiteResult]) -> int:
    failed = [(s, c) for s in suites for c in s.failures()]
    for s, c in failed:
        print(
            f"FAIL {s.name}/{c.name}: observed {c.max_observed:.6g} > threshold {c.threshold:.6g}; worst-trial seed {c.worst_seed}",
            file=sys.stderr,
        )
    return 1 if failed else 0


def _emit_suites(suites, opts):
    if (opts["format"] or "json") == "csv":
        _emit(_suites_csv(suites), opts)
    else:
        _emit(_json({"suites": [s.to_dict() for s in suites]}), opts)


def _dump(m, opts):
    if opts["dump_projections"] is None and opts["dump_decomposition"] is None:
        return
    lay = cc.layers(m)
    if opts["dump_projections"]:
        data = {
            "cuculescu": {f"lambda={fam.lam:g}/n={n}": Operator.of(fam.at(n)).to_dict() for fam in lay.families for n in range(1, m.levels + 1)},
            "layers": {f"i={i}/n={n}": Operator.of(lay.at(i, n)).to_dict() for i in range(lay.count) for n in range(1, m.levels + 1)},
        }
        with open(opts["dump_projections"], "w") as fh:
            fh.write(_json(data))
    if opts["dump_decomposition"]:
        data = {"triple": dc.abc_decompose(m, lay).to_dict(), "pair": dc.yz_decompose(m, lay).to_dict()}
        with open(opts["dump_decomposition"], "w") as fh:
            fh.write(_json(data))


def cmd_verify(opts) -> int:
    spec = _spec(opts)
    tol = float(opts["tol"])
    suites = [hs.run_weak_type_suite(spec, tol=tol), hs.run_regular_suite(spec, tol=tol)]
    if spec.trials > 0:
        _dump(spec.sample(spec.build(), 0), opts)
    _emit_suites(suites, opts)
    return _report_failures(suites)


def cmd_constants(opts) -> int:
    spec = _spec(opts)
    grid = _floats(opts["p_grid"])
    report = hs.estimate_constants(spec, grid)
    if (opts["format"] or "csv") == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "ratio_name", "max", "mean", "exact", "trials", "seed"])
        for r in report.records:
            w.writerow([repr(r.p), r.ratio_name, repr(r.max), repr(r.mean), str(r.exact).lower(), r.trials, r.seed])
        _emit(buf.getvalue(), opts)
    else:
        _emit(_json(report.to_dict()), opts)
    tol = float(opts["tol"])
    bad = [r for r in report.records if r.p == 2.0 and r.trials and abs(r.max - 1.0) > tol]
    for r in bad:
        print(f"FAIL p=2 {r.ratio_name}: max ratio {r.max!r} differs from 1; seed {spec.seed}", file=sys.stderr)
    return 1 if bad else 0


def cmd_norms(opts) -> int:
    spec = hs.EnsembleSpec(**{**vars(_spec(opts)), "mode": opts["mode"]})
    grid = _floats(opts["p_grid"])
    rows = []
    for seed, m in spec.trial_stream():
        for p in grid:
            rows.append({"seed": ":".join(map(str, seed)), **norm_report(m, p).to_dict()})
    if (opts["format"] or "csv") == "csv":
        header = ["seed", "p", *NORM_FIELDS, *(f"{f}_exact" for f in NORM_FIELDS)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([str(row[h]).lower() if isinstance(row[h], bool) else repr(row[h]) if isinstance(row[h], float) else row[h] for h in header])
        _emit(buf.getvalue(), opts)
    else:
        _emit(_json({"rows": rows}), opts)
    return 0


def cmd_bmo(opts) -> int:
    res = hs.run_bmo_suite(_ints(opts["factor_dims"]), int(opts["trials"]), int(opts["seed"]), float(opts["tol"]))
    _emit_suites([res], opts)
    return _report_failures([res])


def cmd_khintchine(opts) -> int:
    rep = hs.run_khintchine_scenario(_ints(opts["factor_dims"]), int(opts["b_dim"]), int(opts["trials"]), int(opts["seed"]))
    if (opts["format"] or "json") == "csv":
        d = rep.to_dict()
        _emit(",".join(d) + "\n" + ",".join(repr(v) for v in d.values()) + "\n", opts)
    else:
        _emit(_json(rep.to_dict()), opts)
    return 0


def _fmt(x: np.ndarray) -> str:
    x = np.asarray(x)
    if np.allclose(x, np.diag(np.diag(x)), atol=1e-12):
        return "diag(" + ", ".join(f"{v.real:.6g}" for v in np.diag(x)) + ")"
    return np.array2string(np.round(x.real, 6), separator=", ")


def cmd_demo(opts) -> int:
    m = hs.demo_martingale()
    lines = ["terminal x_N = " + _fmt(m.terminal)]
    lines += [f"x_{n} = {_fmt(m.x(n))}" for n in range(1, m.levels + 1)]
    lines += [f"dx_{n} = {_fmt(d)}" for n, d in enumerate(differences(m), start=1)]
    lay = cc.layers(m)
    lines.append(f"k_max = {lay.k_max}")
    for fam in lay.families:
        lines += [f"q_{n}^({fam.lam:g}) = {_fmt(fam.at(n))}" for n in range(1, m.levels + 1)]
    for i in range(lay.count):
        lines += [f"p_{{{i},{n}}} = {_fmt(lay.at(i, n))}" for n in range(1, m.levels + 1)]
    sup = cc.supports(m, lay)
    lines += [f"h_{n} = {_fmt(h)}" for n, h in enumerate(sup.h, start=2)]
    lines.append(f"support mass tail (m0=0) = {sup.mass_tail(0):.6g}")
    triple = dc.abc_decompose(m, lay)
    for name in "abc":
        lines += [f"{name}_{n} = {_fmt(t)}" for n, t in enumerate(getattr(triple, name), start=1)]
    w = dc.abc_weak_report(triple, m)
    lines.append(f"weak norms: theta = {w.theta_w:.6g}, sigma_b = {w.sigma_b_w:.6g}, sigma_c = {w.sigma_c_w:.6g}")
    pair = dc.yz_decompose(m, lay)
    lines += [f"dy_{n} = {_fmt(t)}" for n, t in enumerate(differences(pair.y), start=1)]
    lines += [f"dz_{n} = {_fmt(t)}" for n, t in enumerate(differences(pair.z), start=1)]
    r = dc.regular_weak_report(m, 2.0)
    lines.append(f"regular (k=2): sigma_C(y) weak = {r.sigma_y_w:.6g}, sigma_R(z) weak = {r.sigma_z_w:.6g}")
    _emit("\n".join(lines) + "\n", opts)
    _dump(m, opts)
    return 0


HANDLERS = {
    "verify": cmd_verify,
    "constants": cmd_constants,
    "norms": cmd_norms,
    "bmo": cmd_bmo,
    "khintchine": cmd_khintchine,
    "demo": cmd_demo,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help(sys.stderr)
            return 2
        opts = resolve_options(ns)
        return HANDLERS[ns.command](opts)
    except UsageError as exc:
        print(f"ncmart: error: {exc}", file=sys.stderr)
        return 2
    except NCMartError as exc:
        print(f"ncmart: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
