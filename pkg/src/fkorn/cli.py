"""Batch entry point: ``fkorn <command> [flags]``.

Every run writes ``<out>/<command>.json`` (canonical JSON: sorted keys,
floats as ``%.12e`` with an unpadded exponent) and, for tabular results,
RFC-4180 CSV sidecars.  Exit codes: 0 success, 2 hypothesis not satisfied,
1 computational failure, 64 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, is_dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .domains import (
    M0,
    BallDomain,
    HypothesisUnmet,
    EpigraphDomain,
    domain_from_json,
    domain_to_json,
    geometric_bound,
    geometric_inequality_check,
    profile_with_lipschitz,
)
from .extension import boundary_trace_errors, extension_bound_check, solve_constants
from .fields import CATALOG, CutoffFunction, catalog_field
from .korn import j_bound_check, korn_record, max_ratio_search
from .nonlocal_system import (
    Coefficient,
    GridSpec,
    NonlocalProblem,
    caccioppoli_check,
    dual_pair_diagnostic,
    force_field,
    solve,
    residual_panel,
    weak_residual,
)
from .quadrature import PairSamplingPlan
from .seminorms import SeminormParams, seminorm_estimates, w_seminorm_p

EXIT_OK, EXIT_FAILURE, EXIT_HYPOTHESIS, EXIT_USAGE = 0, 1, 2, 64
COMMANDS = ("seminorm", "korn", "extend-check", "geom-check", "solve", "caccioppoli", "dual-pair", "jbound")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# canonical output


def format_float(x: float) -> str:
    """``%.12e`` with the exponent written as a plain integer: ``1.0 -> 1.000000000000e0``."""
    if not math.isfinite(x):
        return json.dumps(str(x))
    mant, exp = f"{x:.12e}".split("e")
    return f"{mant}e{int(exp)}"


def _plain(obj):
    """Convert dataclasses and numpy values into JSON-ready Python objects."""
    if hasattr(obj, "to_json") and not isinstance(obj, type):
        out = obj.to_json()
        return _plain(json.loads(out) if isinstance(out, str) else out)
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def canonical_json(obj, indent: int = 2) -> str:
    def enc(v, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v[k], level + 1)}" for k in sorted(v)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(x, level + 1) for x in v) + "\n" + end + "]"
        if isinstance(v, bool) or v is None:
            return json.dumps(v)
        if isinstance(v, int):
            return str(v)
        if isinstance(v, float):
            return format_float(v)
        return json.dumps(v)

    return enc(_plain(obj), 0) + "\n"


def emit_report(report, path) -> Path:
    """Write canonical JSON, creating missing directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(report), encoding="utf-8")
    return path


def emit_csv(header, rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, float) else v for v in _plain(list(row))])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    return path


def config_hash(config: dict) -> str:
    core = {k: v for k, v in config.items() if k not in ("out", "threads")}
    return hashlib.sha256(canonical_json(core).encode()).hexdigest()


def load_schema() -> dict:
    text = resources.files("fkorn").joinpath("schema/config-v1.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_config(config: dict):
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(map(str, e.absolute_path)) or "<root>"
        raise ConfigError(f"invalid config at {where}: {e.message}") from None


# --------------------------------------------------------------------------
# commands: each returns (result, {name: (header, rows)})


DEFAULT_BALL = {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}


def _plan(prm, cfg, default=200_000):
    return PairSamplingPlan(budget=int(prm.get("budget", default)), threads=int(cfg.get("threads", 1)))


def _ball(obj) -> BallDomain:
    return BallDomain(tuple(map(float, obj["center"])), float(obj["radius"]))


def _params(prm, s=0.4, p=2.0) -> SeminormParams:
    return SeminormParams(float(prm.get("s", s)), float(prm.get("p", p)))


def cmd_seminorm(prm, cfg):
    u = catalog_field(prm.get("field", "radial2d"))
    dom = domain_from_json(prm.get("domain", DEFAULT_BALL))
    params = _params(prm, 0.5, 2.0)
    est = seminorm_estimates(u, dom, params, _plan(prm, cfg), cfg["seed"])
    return {"field": u.name, "domain": domain_to_json(dom), "s": params.s, "p": params.p,
            "x_seminorm_p": est["x"], "w_seminorm_p": est["w"]}, {}


def cmd_korn(prm, cfg):
    dom = _ball(prm.get("domain", DEFAULT_BALL))
    params = _params(prm)
    plan = _plan(prm, cfg, 20_000)
    records = [korn_record(catalog_field(name), dom, params, plan, cfg["seed"], field_id=name)
               for name in CATALOG]
    search = max_ratio_search(dom, params, n_atoms=int(prm.get("n_atoms", 1)), budget=plan.budget,
                              seed=cfg["seed"], restarts=int(prm.get("restarts", 5)),
                              max_iter=int(prm.get("search_budget", 200)))
    search.records = records + search.records
    search.max_ratio = max(r.ratio for r in search.records)
    rows = [(r.field_id, r.x_p, r.w_p, r.lp_p, r.ratio) for r in search.records]
    return search, {"korn_fields": (("field_id", "x_p", "w_p", "lp_p", "ratio"), rows)}


def _epigraph(prm, default_profile="sine", default_M=0.3):
    M = float(prm.get("M", default_M))
    return EpigraphDomain(2, profile_with_lipschitz(prm.get("profile", default_profile), M))


def cmd_extend_check(prm, cfg):
    dom = _epigraph(prm)
    if dom.lipschitz_M >= M0:
        raise HypothesisUnmet(f"M = {dom.lipschitz_M} is not below {M0}")
    consts = solve_constants(float(prm.get("lambda", 1.0)), float(prm.get("mu", 2.0)))
    u = catalog_field(prm.get("field", "random2d"))
    rep = extension_bound_check(u, dom, consts, _params(prm), _plan(prm, cfg), cfg["seed"])
    offs, errs = boundary_trace_errors(u, dom, consts, seed=cfg["seed"])
    trace = [(float(o), float(e), float(e / o)) for o, e in zip(offs, errs)]
    return {"domain": domain_to_json(dom), "report": rep,
            "boundary_trace": [{"offset": o, "error": e, "error_over_offset": q} for o, e, q in trace]}, {}


def cmd_geom_check(prm, cfg):
    dom = _epigraph(prm, default_M=0.59)
    eta = float(prm.get("eta", 1.0))
    c_eta = float(prm.get("c_eta", 2.0 * max(1.0, eta)))
    if dom.lipschitz_M >= M0:
        raise HypothesisUnmet(f"M = {dom.lipschitz_M} is not below {M0}")
    rep = geometric_inequality_check(dom, eta, c_eta, int(prm.get("n", 100_000)), cfg["seed"])
    return {"domain": domain_to_json(dom), "report": rep, "admissible_M_squared": geometric_bound(eta, c_eta)}, {}


def _problem(prm):
    omega = _ball(prm.get("domain", DEFAULT_BALL))
    params = _params(prm, 0.4, 2.0)
    coef = Coefficient(prm.get("coefficient", "constant"), float(prm.get("Lambda", 2.0)),
                       int(prm.get("coefficient_seed", 0)))
    fname = prm.get("force", "bump")
    return NonlocalProblem(omega.d, params, omega, coef, force_field(fname, omega), fname)


def _solve(prm, cfg):
    prob = _problem(prm)
    grid = GridSpec(int(prm.get("grid", 17)), float(prm.get("margin", 0.5)))
    U, rep = solve(prob, grid, tol=float(prm.get("tol", 1e-10)), max_iter=int(prm.get("max_iter", 3000)))
    return prob, U, rep


def _solve_json(U, rep):
    out = rep.to_json()
    out.pop("wall_time")  # keeps reports byte-reproducible
    out["free_nodes"] = int(U.free.sum())
    out["h"] = U.h
    return out


def cmd_solve(prm, cfg):
    prob, U, rep = _solve(prm, cfg)
    res = [weak_residual(U, phi, prob, scaled=True) for phi in residual_panel(prob, 10, seed=cfg["seed"])]
    rep.residuals = res
    d = prob.d
    header = tuple(f"x{i + 1}" for i in range(d)) + tuple(f"u{i + 1}" for i in range(d))
    rows = [tuple(x) + tuple(v) for x, v in zip(U.nodes.tolist(), U.values.tolist())]
    status = {"solve": _solve_json(U, rep), "max_scaled_residual": max(map(abs, res))}
    return status, {"solve_field": (header, rows)}


def _balls(prm, default):
    return [_ball(b) for b in prm.get("balls", default)]


def cmd_caccioppoli(prm, cfg):
    prob, U, rep = _solve(prm, cfg)
    balls = _balls(prm, [{"center": [0.0, 0.0], "radius": 0.5}, {"center": [0.2, 0.1], "radius": 0.25}])
    checks = [caccioppoli_check(U, B, CutoffFunction(B), prob, _plan(prm, cfg), cfg["seed"]) for B in balls]
    rows = [(c["ball"]["radius"], c["lhs"], c["pieces"]["mass"], c["pieces"]["tail"], c["pieces"]["force"],
             c["ratio"]) for c in checks]
    return {"solve": _solve_json(U, rep), "checks": checks}, {
        "caccioppoli": (("radius", "lhs", "mass", "tail", "force", "ratio"), rows)}


def cmd_dual_pair(prm, cfg):
    prob, U, rep = _solve(prm, cfg)
    B = _balls(prm, [{"center": [0.0, 0.0], "radius": 0.5}])[0]
    u = U.as_field()
    plan = _plan(prm, cfg, 100_000)
    diag = dual_pair_diagnostic(u, B, prob.params, float(prm.get("eps", 0.2)),
                                tuple(prm.get("deltas", (0.0, 0.05, 0.1, 0.2))), plan, cfg["seed"])
    direct = w_seminorm_p(u, B, prob.params, plan.replace(budget=2 * plan.budget), cfg["seed"] + 7)
    rows = [(r["delta"], r["exponent"], r["order"], r["value"], r["std_error"], r["stable"]) for r in diag["rows"]]
    return {"solve": _solve_json(U, rep), "diagnostic": diag, "direct_w_seminorm_p": direct}, {
        "dual_pair": (("delta", "exponent", "order", "value", "std_error", "stable"), rows)}


def cmd_jbound(prm, cfg):
    dom = _epigraph(prm, default_profile="zero", default_M=0.0)
    rep = j_bound_check(dom, _params(prm), base_point=[0.2],
                        distances=tuple(prm.get("distances", (1e-1, 1e-2, 1e-3))),
                        plan=_plan(prm, cfg, 100_000), seed=cfg["seed"])
    rows = list(zip(rep.distances, rep.values, rep.std_errors, rep.products))
    return {"domain": domain_to_json(dom), "report": rep}, {
        "jbound": (("distance", "J", "std_error", "J_times_distance_sp"), rows)}


RUNNERS = {
    "seminorm": cmd_seminorm,
    "korn": cmd_korn,
    "extend-check": cmd_extend_check,
    "geom-check": cmd_geom_check,
    "solve": cmd_solve,
    "caccioppoli": cmd_caccioppoli,
    "dual-pair": cmd_dual_pair,
    "jbound": cmd_jbound,
}


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"not valid JSON: {e}") from None


# flag name -> (params key, type)
FLAGS = {
    "seminorm": [("--field", "field", str), ("--domain", "domain", _json_arg), ("--s", "s", float),
                 ("--p", "p", float), ("--budget", "budget", int)],
    "korn": [("--domain", "domain", _json_arg), ("--s", "s", float), ("--p", "p", float),
             ("--budget", "budget", int), ("--search-budget", "search_budget", int),
             ("--restarts", "restarts", int), ("--n-atoms", "n_atoms", int)],
    "extend-check": [("--profile", "profile", str), ("--M", "M", float), ("--lambda", "lambda", float),
                     ("--mu", "mu", float), ("--field", "field", str), ("--s", "s", float),
                     ("--p", "p", float), ("--budget", "budget", int)],
    "geom-check": [("--profile", "profile", str), ("--M", "M", float), ("--eta", "eta", float),
                   ("--c-eta", "c_eta", float), ("--n", "n", int)],
    "jbound": [("--profile", "profile", str), ("--M", "M", float), ("--s", "s", float), ("--p", "p", float),
               ("--distances", "distances", _json_arg), ("--budget", "budget", int)],
}
_PROBLEM_FLAGS = [("--domain", "domain", _json_arg), ("--s", "s", float), ("--p", "p", float),
                  ("--Lambda", "Lambda", float), ("--coefficient", "coefficient", str),
                  ("--coefficient-seed", "coefficient_seed", int), ("--force", "force", str),
                  ("--grid", "grid", int), ("--margin", "margin", float), ("--tol", "tol", float),
                  ("--max-iter", "max_iter", int), ("--budget", "budget", int)]
FLAGS["solve"] = list(_PROBLEM_FLAGS)
FLAGS["caccioppoli"] = _PROBLEM_FLAGS + [("--balls", "balls", _json_arg)]
FLAGS["dual-pair"] = _PROBLEM_FLAGS + [("--balls", "balls", _json_arg), ("--eps", "eps", float),
                                       ("--deltas", "deltas", _json_arg)]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fkorn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fkorn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config (see schema/config-v1.schema.json)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", type=str)
        for flag, key, typ in FLAGS[name]:
            sp.add_argument(flag, dest=f"param_{key}", type=typ)
    return parser


def resolve_config(args) -> dict:
    config: dict = {"command": args.command, "params": {}}
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        if loaded.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {loaded['command']!r}, not {args.command!r}")
        config.update(loaded)
        config["params"] = dict(loaded.get("params", {}))
    for key, value in vars(args).items():
        if key.startswith("param_") and value is not None:
            config["params"][key[len("param_"):]] = value
    for key in ("seed", "threads", "out"):
        if getattr(args, key) is not None:
            config[key] = getattr(args, key)
    config.setdefault("seed", 0)
    config.setdefault("threads", 1)
    config.setdefault("out", "fkorn-out")
    config["command"] = args.command
    validate_config(config)
    return config


def _echo(config: dict) -> dict:
    # the output location is not part of the experiment; leaving it out keeps
    # reports written to different directories byte-identical
    return {k: v for k, v in config.items() if k != "out"}


def run(config: dict) -> int:
    """Execute one validated experiment and write its artifacts."""
    command = config["command"]
    out = Path(config["out"])
    envelope = {
        "command": command,
        "config": _echo(config),
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "version": __version__,
    }
    tables = {}
    try:
        result, tables = RUNNERS[command](config["params"], config)
        envelope.update(status="ok", result=result)
        code = EXIT_OK
    except HypothesisUnmet as e:
        envelope.update(status="hypothesis_unmet", error=str(e))
        code = EXIT_HYPOTHESIS
    except Exception as e:  # noqa: BLE001 - reported, not swallowed
        envelope.update(status="failure", error=f"{type(e).__name__}: {e}")
        code = EXIT_FAILURE
    try:
        emit_report(envelope, out / f"{command}.json")
        for name, (header, rows) in tables.items():
            emit_csv(header, rows, out / f"{name}.csv")
    except OSError as e:
        print(f"fkorn: cannot write report: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return code


def _validate_semantics(config: dict):
    """Module preconditions that the schema cannot express; checked before any computation."""
    prm, cmd = config["params"], config["command"]
    try:
        if cmd in ("solve", "caccioppoli", "dual-pair"):
            _problem(prm)
        elif cmd == "seminorm":
            catalog_field(prm.get("field", "radial2d"))
            domain_from_json(prm.get("domain", DEFAULT_BALL))
            _params(prm, 0.5, 2.0)
        elif cmd in ("extend-check",):
            solve_constants(float(prm.get("lambda", 1.0)), float(prm.get("mu", 2.0)))
            _params(prm)
        elif cmd in ("korn", "jbound"):
            _params(prm)
    except HypothesisUnmet:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        _validate_semantics(config)
    except ConfigError as e:
        print(f"fkorn: {e}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisUnmet as e:
        envelope = {"command": config["command"], "config": _echo(config), "config_hash": config_hash(config),
                    "seed": config["seed"], "version": __version__, "status": "hypothesis_unmet",
                    "error": str(e)}
        try:
            emit_report(envelope, Path(config["out"]) / f"{config['command']}.json")
        except OSError:
            return EXIT_FAILURE
        return EXIT_HYPOTHESIS
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
