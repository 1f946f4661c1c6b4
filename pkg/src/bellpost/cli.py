"""Command-line entry point.

Every command prints one report: JSON by default, CSV with ``--format csv``
for tabular results. Exit codes: 0 success, 1 a verification check failed,
2 usage or validation error, 3 no solution exists.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__, causal, hvmodels, sharpening
from . import yurke_stoler as ys
from .classical_bounds import hlnhv_bound, lhv_bound
from .detection import DetectorModel
from .exceptions import NoSolutionError, NoThresholdError
from .inequalities import (
    HLNHV,
    LHV,
    catalog,
    catalog_records,
    constant_C,
    constant_C_opt,
    evaluate,
    functional_from_record,
    load_catalog_file,
)
from .quantum import MeasurementSetting, ghz_state, optimize_settings, quantum_behavior
from .scenario import BellScenario

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NO_SOLUTION = 0, 1, 2, 3
CSV_DIGITS = 12


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunReport:
    command: str
    inputs: dict
    results: Any
    version: str = __version__
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "version": self.version,
            "wall_time": self.wall_time,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return format(v, f".{CSV_DIGITS}g")
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return str(v)


def render(report: RunReport, fmt: str) -> str:
    data = _jsonable(report.to_dict())
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    rows = data["results"]
    if isinstance(rows, dict):
        rows = rows.get("rows", [rows])
    scalars = {k: v for k, v in data["inputs"].items() if not isinstance(v, (list, dict))}
    out = io.StringIO()
    if not rows:
        return ""
    cols = list(scalars) + [k for k in rows[0] if k not in scalars]
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        merged = {**scalars, **r}
        w.writerow([_fmt(merged.get(c)) for c in cols])
    return out.getvalue()


# --- shared argument groups --------------------------------------------------


def _add_format(p, default="json"):
    p.add_argument("--format", choices=("json", "csv"), default=default)


def _add_inequality(p, default="chsh", with_file=True):
    p.add_argument("--inequality", default=default)
    p.add_argument("--parties", type=int, default=None)
    if with_file:
        p.add_argument("--catalog-file", default=None, help="extra catalog records (JSON list)")


def _add_detector(p, multi=False):
    nargs = "+" if multi else None
    p.add_argument("--eta-det", type=float, nargs=nargs, default=[1.0] if multi else 1.0)
    p.add_argument("--eta-tra", type=float, nargs=nargs, default=[1.0] if multi else 1.0)
    p.add_argument("--eta-1of2", type=float, default=None, help="default: independent detection, 2 eta (1 - eta)")
    p.add_argument("--on-off", action="store_true", help="non-number-resolving click detector")


def _resolve_detector(eta_det, eta_tra, eta_1of2, on_off) -> DetectorModel:
    if on_off:
        base = DetectorModel.on_off(eta_det, eta_tra)
        if eta_1of2 is not None:
            base = DetectorModel(eta_det, eta_tra, eta_1of2, number_resolving=False)
        return base
    if eta_1of2 is None:
        return DetectorModel.independent(eta_det, eta_tra)
    return DetectorModel(eta_det, eta_tra, eta_1of2, number_resolving=True)


def _functional(args):
    if getattr(args, "catalog_file", None):
        load_catalog_file(args.catalog_file)
    return catalog(args.inequality, args.parties)


def _ineq_inputs(args, f) -> dict:
    return {"inequality": f.name, "parties": f.scenario.num_parties}


# --- commands ---------------------------------------------------------------


def cmd_catalog(args):
    if args.catalog_file:
        load_catalog_file(args.catalog_file)
    rows = []
    for rec in sorted(catalog_records(), key=lambda r: (r["name"], r["parties"])):
        f = functional_from_record(rec)
        c_opt, y = constant_C_opt(f)
        rows.append(
            {
                "name": rec["name"],
                "parties": rec["parties"],
                "model_class": f.model_class,
                "classical_bound": f.classical_bound,
                "quantum_value": f.quantum_value,
                "C": constant_C(f),
                "C_opt": c_opt,
                "C_opt_reference": list(y),
            }
        )
    return {"catalog_file": args.catalog_file}, {"rows": rows}


def cmd_bound(args):
    f = _functional(args)
    cls = args.model_class or f.model_class
    if cls == LHV:
        value, strat = lhv_bound(f)
        witness = {"responses": [list(r) for r in strat.responses], "outcomes": strat.outcomes(f.scenario)}
    else:
        value, w = hlnhv_bound(f)
        witness = w.to_dict()
    return {**_ineq_inputs(args, f), "model_class": cls}, {
        "inequality": f.name,
        "model_class": cls,
        "bound": value,
        "witness": witness,
    }


def cmd_quantum(args):
    f = _functional(args)
    state = ghz_state(f.scenario.num_parties)
    inputs = {**_ineq_inputs(args, f), "state": "ghz"}
    if args.angles:
        with open(args.angles) as fh:
            angles = json.load(fh)
        ms = MeasurementSetting(tuple(tuple(tuple(a) for a in party) for party in angles))
        value = evaluate(f, quantum_behavior(state, ms))
        inputs["angles"] = angles
        return inputs, {"value": value, "quantum_value": f.quantum_value, "angles": angles}
    if not args.optimize:
        raise UsageError("quantum needs --angles FILE or --optimize")
    inputs.update({"seed": args.seed, "restarts": args.restarts})
    res = optimize_settings(f, state, restarts=args.restarts, seed=args.seed)
    out = res.to_dict()
    out["quantum_value"] = f.quantum_value
    return inputs, out


def cmd_sharpen(args):
    f = _functional(args)
    sb = sharpening.sharpen(f, args.eta_c, args.model_class, not args.no_c_opt)
    return {**_ineq_inputs(args, f), "eta_c": args.eta_c, "model_class": sb.model_class, "use_c_opt": sb.use_c_opt}, sb.to_dict()


def cmd_threshold(args):
    f = _functional(args)
    cls = args.model_class or f.model_class
    eta = sharpening.threshold_eta_c(f, args.quantum_value, cls, not args.no_c_opt)
    iq = f.quantum_value if args.quantum_value is None else args.quantum_value
    return {**_ineq_inputs(args, f), "model_class": cls, "quantum_value": iq, "use_c_opt": not args.no_c_opt}, {
        "eta_c_star": eta
    }


def cmd_table1(args):
    rows = [
        {"inequality": r["inequality"], "eta_c_star": r["eta_c_star"], "eta_det_star_ys": r["eta_det_star_ys"]}
        for r in sharpening.table1()
    ]
    return {}, {"rows": rows}


def cmd_ys_analytic(args):
    rows = []
    for ed in args.eta_det:
        for et in args.eta_tra:
            d = _resolve_detector(ed, et, args.eta_1of2, args.on_off)
            rows.append({"eta_det": ed, "eta_tra": et, "eta_1of2": d.eta_1of2, "number_resolving": d.number_resolving,
                         "eta_c": ys.eta_c_analytic(ys.YSConfig(args.parties, d))})
    inputs = {"parties": args.parties, "on_off": args.on_off, "eta_1of2": args.eta_1of2}
    if len(rows) == 1:
        inputs["detector"] = _resolve_detector(args.eta_det[0], args.eta_tra[0], args.eta_1of2, args.on_off).to_dict()
        return inputs, rows[0]
    return inputs, {"rows": rows}


def cmd_ys_simulate(args):
    d = _resolve_detector(args.eta_det, args.eta_tra, args.eta_1of2, args.on_off)
    cfg = ys.YSConfig(args.parties, d)
    res = ys.eta_c_monte_carlo(cfg, args.samples, seed=args.seed, shards=args.shards)
    out = res.to_dict()
    out["eta_c_analytic"] = ys.eta_c_analytic(cfg)
    inputs = {"parties": args.parties, "samples": args.samples, "seed": args.seed, "shards": args.shards,
              "detector": d.to_dict()}
    return inputs, out


def cmd_ys_threshold(args):
    if args.eta_c_star is not None:
        target = args.eta_c_star
        src = {"eta_c_star": target}
    else:
        f = _functional(args)
        target = sharpening.threshold_eta_c(f)
        src = {"inequality": f.name, "eta_c_star": target}
    n = args.parties if args.parties is not None else 3
    preset = "on_off" if args.on_off else args.preset
    eta = ys.threshold_eta_det(n, target, preset, args.eta_tra, args.eta_1of2 or 0.0)
    return {**src, "parties": n, "preset": preset, "eta_tra": args.eta_tra, "eta_1of2": args.eta_1of2}, {
        "eta_det_star": eta
    }


def cmd_dsep(args):
    if args.graph:
        with open(args.graph) as fh:
            g = causal.CausalDag.from_json(fh.read())
        src = {"graph": args.graph}
    else:
        g = causal.bell_diagram(args.parties, args.diagram, args.lone_party, args.variant)
        src = {"diagram": args.diagram, "parties": args.parties, "lone_party": args.lone_party, "variant": args.variant}
    q = causal.DsepQuery.of(args.source, args.target, args.given)
    res = causal.d_separated(g, q)
    inputs = {**src, "from": sorted(q.source), "to": sorted(q.target), "given": sorted(q.given)}
    return inputs, res.to_dict()


# --- verify -----------------------------------------------------------------


def _suite(trials: int, seed: int, one: Callable[[int], dict]) -> dict:
    worst: dict[str, float] = {}
    failures = []
    for s in range(seed, seed + trials):
        margins = one(s)
        for k, v in margins.items():
            worst[k] = min(worst.get(k, math.inf), v)
        if min(margins.values()) < -1e-9:
            failures.append(s)
    return {
        "passed": not failures,
        "trials": trials,
        "worst_margin": min(worst.values()) if worst else None,
        "worst_margins": worst,
        "failing_seeds": failures[:20],
    }


def cmd_verify(args):
    what = args.what
    inputs = {"check": what, "trials": args.trials, "seed": args.seed}
    if what == "appendix-b":
        f = _functional(args)
        inputs.update(_ineq_inputs(args, f))
        res = _suite(args.trials, args.seed, lambda s: hvmodels.appendix_b_diagnostics(
            hvmodels.random_model(f.scenario, "lhv", args.support, s), f).margins)
    elif what == "appendix-c":
        f = _functional(args)
        kind = "hlnhv" if f.model_class == HLNHV else "lhv"
        inputs.update({**_ineq_inputs(args, f), "model_kind": kind})

        def one(s):
            m = hvmodels.random_model(f.scenario, kind, args.support, s)
            merged: dict[str, float] = {}
            for y in f.scenario.joint_settings():
                for k, v in hvmodels.appendix_c_diagnostics(m, f, y).margins.items():
                    merged[k] = min(merged.get(k, math.inf), v)
            return merged

        res = _suite(args.trials, args.seed, one)
    elif what == "fair-sampling":
        f = _functional(args)
        inputs.update(_ineq_inputs(args, f))
        res = _suite(args.trials, args.seed, lambda s: {
            "postselected value <= I": f.classical_bound - hvmodels.postselected_value(
                f, hvmodels.random_model(f.scenario, "lhv", args.support, s, fair_sampling=True))})
    elif what == "conservation":
        n = args.parties or 2
        scen = BellScenario.dichotomic(n)
        inputs.update({"parties": n})

        def one(s):
            rep = hvmodels.conservation_posterior_check(hvmodels.conserving_model(scen, seed=s), n)
            return {"1e-8 - posterior deviation": 1e-8 - rep.deviation,
                    "1e-12 - no-signaling violation": 1e-12 - rep.no_signaling_violation}

        res = _suite(args.trials, args.seed, one)
        neg = hvmodels.conservation_posterior_check(hvmodels.signaling_conserving_model(), 2)
        res["negative_control"] = {**neg.to_dict(), "expected_to_fail": True}
        res["passed"] = res["passed"] and not neg.passed
    elif what == "loophole":
        f = _functional(args)
        inputs.update({**_ineq_inputs(args, f), "iterations": args.iterations})
        out = hvmodels.loophole_search(f, args.target, seed=args.seed, iterations=args.iterations)
        res = {**out.to_dict(), "passed": out.found and out.satisfies_sharpened_bound}
        inputs.pop("trials")
    elif what == "causal":
        rep = causal.verify_section2_claims(seed=args.seed)
        res = rep.to_dict()
        inputs.pop("trials")
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(what)
    return inputs, res


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bellpost", description="Sharpened Bell inequalities under coincidence postselection.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("catalog", help="list catalogued inequalities")
    s.add_argument("--catalog-file", default=None)
    _add_format(s)
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("bound", help="classical bound by enumeration")
    _add_inequality(s)
    s.add_argument("--model-class", choices=(LHV, HLNHV), default=None)
    _add_format(s)
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("quantum", help="quantum value on GHZ states")
    _add_inequality(s)
    s.add_argument("--angles", default=None, help="JSON file of (theta, phi) per party and setting")
    s.add_argument("--optimize", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int, default=32)
    _add_format(s)
    s.set_defaults(func=cmd_quantum)

    s = sub.add_parser("sharpen", help="sharpened bound at a given eta_c")
    _add_inequality(s)
    s.add_argument("--eta-c", type=float, required=True)
    s.add_argument("--model-class", choices=(LHV, HLNHV), default=None)
    s.add_argument("--no-c-opt", action="store_true")
    _add_format(s)
    s.set_defaults(func=cmd_sharpen)

    s = sub.add_parser("threshold", help="threshold conditional efficiency")
    _add_inequality(s)
    s.add_argument("--model-class", choices=(LHV, HLNHV), default=None)
    s.add_argument("--quantum-value", type=float, default=None)
    s.add_argument("--no-c-opt", action="store_true")
    _add_format(s)
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("table1", help="threshold efficiencies for the built-in inequalities")
    _add_format(s, default="csv")
    s.set_defaults(func=cmd_table1)

    s = sub.add_parser("ys", help="Yurke-Stoler ring")
    verbs = s.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    v = verbs.add_parser("analytic")
    v.add_argument("--parties", type=int, required=True)
    _add_detector(v, multi=True)
    _add_format(v)
    v.set_defaults(func=cmd_ys_analytic)
    v = verbs.add_parser("simulate")
    v.add_argument("--parties", type=int, required=True)
    _add_detector(v)
    v.add_argument("--samples", type=int, default=10**6)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--shards", type=int, default=1)
    _add_format(v)
    v.set_defaults(func=cmd_ys_simulate)
    v = verbs.add_parser("threshold")
    v.add_argument("--parties", type=int, default=None)
    v.add_argument("--eta-c-star", type=float, default=None)
    v.add_argument("--inequality", default="svetlichny")
    v.add_argument("--catalog-file", default=None)
    v.add_argument("--preset", choices=ys.PRESETS, default="independent")
    v.add_argument("--eta-tra", type=float, default=1.0)
    v.add_argument("--eta-1of2", type=float, default=None)
    v.add_argument("--on-off", action="store_true")
    _add_format(v)
    v.set_defaults(func=cmd_ys_threshold)

    s = sub.add_parser("dsep", help="d-separation query")
    s.add_argument("--graph", default=None, help="graph JSON file")
    s.add_argument("--diagram", choices=causal.BELL_KINDS, default="lhv")
    s.add_argument("--parties", type=int, default=2)
    s.add_argument("--lone-party", type=int, default=None)
    s.add_argument("--variant", choices=causal.AD_VARIANTS, default="bidirected")
    s.add_argument("--from", dest="source", nargs="+", required=True)
    s.add_argument("--to", dest="target", nargs="+", required=True)
    s.add_argument("--given", nargs="*", default=[])
    _add_format(s)
    s.set_defaults(func=cmd_dsep)

    s = sub.add_parser("verify", help="randomized oracle suites")
    s.add_argument("what", choices=("appendix-b", "appendix-c", "fair-sampling", "conservation", "loophole", "causal"))
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--support", type=int, default=hvmodels.DEFAULT_SUPPORT)
    s.add_argument("--inequality", default=None)
    s.add_argument("--parties", type=int, default=None)
    s.add_argument("--catalog-file", default=None)
    s.add_argument("--iterations", type=int, default=4000)
    s.add_argument("--target", type=float, default=None)
    _add_format(s)
    s.set_defaults(func=cmd_verify)
    return p


_VERIFY_DEFAULT_INEQUALITY = {"appendix-b": "chsh", "appendix-c": "svetlichny", "fair-sampling": "chsh", "loophole": "chsh"}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"bellpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "verify" and args.inequality is None:
        args.inequality = _VERIFY_DEFAULT_INEQUALITY.get(args.what, "chsh")
    command = args.command + (f" {args.verb}" if args.command == "ys" else "")
    if args.command == "verify":
        command += f" {args.what}"
    start = time.perf_counter()
    try:
        inputs, results = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bellpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoSolutionError, NoThresholdError) as exc:
        raw = {k: v for k, v in vars(args).items() if k not in ("func", "format", "command", "verb")}
        report = RunReport(command, raw, {"error": type(exc).__name__, "message": str(exc)})
        report.wall_time = time.perf_counter() - start
        stdout.write(render(report, "json"))
        return EXIT_NO_SOLUTION
    except (ValueError, KeyError, OSError, ZeroDivisionError) as exc:
        print(f"bellpost: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = RunReport(command, inputs, results, wall_time=time.perf_counter() - start)
    stdout.write(render(report, args.format))
    if isinstance(results, dict) and results.get("passed") is False:
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
