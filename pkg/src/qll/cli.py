"""Command-line front end.

    qll certify-ffunc --config F.json --out cert.json
    qll lr-scan       --config S.json --out report.json --csv cells.csv
    qll lightcone     --config S.json --out cone.json [--csv cells.csv]
    qll continuity    --config S.json --out cont.json
    qll gap-scan      --config P.json --out gaps.csv
    qll flow          --config P.json --out flow.json [--csv gaps.csv]

Exit codes: 0 pass, 1 contract violation, 2 usage or configuration error.
A one-line JSON run record (command, scenario hash, versions, wall time,
verdict, artifacts) is printed to stdout; the artifacts themselves contain no
timing so identical inputs give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy
from scipy import stats

from . import __version__, config, dynamics, ffunc, gsphase, interactions, lattice, report
from .errors import ConfigError, GapClosingError, InsufficientDataError, QLLError

log = logging.getLogger("qll")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ContractFailure(Exception):
    """Raised inside a command when a run completes but a contract is broken."""


@dataclass
class RunReport:
    command: str
    scenario_hash: str
    versions: dict
    wall_time: float
    verdict: str
    artifacts: list = field(default_factory=list)
    message: str = ""


def _versions() -> dict:
    return {"qll": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _fn_descriptor(F) -> dict:
    if isinstance(F, ffunc.PowerLaw):
        return {"family": "power", "nu": F.nu, "eps": F.eps}
    if isinstance(F, ffunc.Weighted):
        return {"family": "weighted", "a": F.a, "theta": F.theta, "base": _fn_descriptor(F.base)}
    return {"family": "logweighted", "a": F.a, "base": _fn_descriptor(F.base)}


# -- commands -------------------------------------------------------------------------

def cmd_certify_ffunction(cfg: dict, args) -> tuple[bool, list, str]:
    g = config.graph(cfg)
    F = config.ffunction(cfg)
    out = {"command": "certify-ffunc", "scenario_hash": config.scenario_hash(cfg),
           "ffunction": _fn_descriptor(F), "sites": g.n, "diameter": g.diameter}
    try:
        cert = ffunc.certify(F, g)
    except QLLError as exc:
        out.update({"axioms": {"positive": False}, "verdict": "fail", "reason": str(exc)})
        report.write_json(args.out, out)
        return False, [args.out], str(exc)
    axioms = {"positive": True, "finite": True, "nonincreasing": cert.nonincreasing}
    out.update({"norm1": cert.norm1, "cF": cert.cF, "axioms": axioms})
    ok = all(axioms.values())
    if "growth" in cfg:
        gc = lattice.check_growth(g, lattice.GrowthCertificate(float(cfg["growth"]["c"]), float(cfg["growth"]["nu"])))
        out["growth"] = {"ok": gc.ok, "x": gc.x, "r": gc.r, "ball_size": gc.ball_size, "bound": gc.bound}
        ok = ok and gc.ok
    out["verdict"] = "pass" if ok else "fail"
    report.write_json(args.out, out)
    return ok, [args.out], "" if ok else "F-function axiom check failed"


def _lr_scenario(cfg: dict, args) -> dynamics.LRScenario:
    g = config.graph(cfg)
    A, B, pairs = config.observables(cfg, g)
    if pairs is None and (not A or not B):
        raise ConfigError("observables need A and B families or explicit pairs")
    return dynamics.LRScenario(
        graph=g, F=config.ffunction(cfg), phi=config.interaction(cfg, g),
        times=config.grid(cfg.get("times"), {"start": 0.0, "stop": 1.0, "step": 0.1}),
        A=A, B=B, pairs=pairs, region=tuple(cfg["region"]) if "region" in cfg else None,
        jobs=args.jobs,
    )


def _cells(rep: dynamics.LRReport):
    for k, (_, _, d) in enumerate(rep.pairs):
        bad = {j for kk, j in rep.violations if kk == k}
        for j, t in enumerate(rep.times):
            yield (k, d, float(t), float(rep.lhs[k, j]), float(rep.rhs_general[k, j]),
                   float(rep.rhs_exp[k, j]) if rep.rhs_exp is not None else float("nan"),
                   int(j in bad))


CELL_HEADER = ["pair_id", "d", "t", "lhs", "rhs_general", "rhs_exp", "violation"]


def _report_dict(rep: dynamics.LRReport) -> dict:
    return {
        "pairs": [{"id": k, "A_support": list(a), "B_support": list(b), "d": d}
                  for k, (a, b, d) in enumerate(rep.pairs)],
        "times": rep.times,
        "lhs": rep.lhs,
        "rhs_general": rep.rhs_general,
        "rhs_exp": rep.rhs_exp,
        "violations": [list(v) for v in rep.violations],
        "v_lr": rep.v_lr,
        "v_emp": rep.v_emp,
        "constants": rep.constants,
    }


def _default_threshold(sc: dynamics.LRScenario) -> float:
    from .algebra import op_norm
    pairs = sc.pair_list()
    scale = max((op_norm(A) * op_norm(B) for A, B in pairs), default=1.0)
    return 1e-3 * scale


def _velocity(rep, threshold):
    try:
        fit = dynamics.fit_velocity(rep, threshold)
    except InsufficientDataError as exc:
        return None, str(exc)
    return fit, ""


def _velocity_ok(rep, fit) -> bool:
    if fit is None or rep.v_lr is None:
        return True
    return fit.v_emp + fit.stderr <= rep.v_lr


def cmd_lr_scan(cfg: dict, args) -> tuple[bool, list, str]:
    sc = _lr_scenario(cfg, args)
    rep = dynamics.verify_lr(sc)
    threshold = float(config.tolerance(cfg, "threshold", _default_threshold(sc)))
    fit, why = _velocity(rep, threshold)
    out = {"command": "lr-scan", "scenario_hash": config.scenario_hash(cfg)}
    out.update(_report_dict(rep))
    out["fit"] = None if fit is None else {**asdict(fit), "threshold": threshold}
    ok = rep.ok and _velocity_ok(rep, fit)
    out["verdict"] = "pass" if ok else "fail"
    artifacts = []
    if args.csv:
        report.write_csv(args.csv, CELL_HEADER, _cells(rep))
        artifacts.append(args.csv)
    report.write_json(args.out, out)
    artifacts.append(args.out)
    msg = ""
    if rep.violations:
        k, j = rep.violations[0]
        msg = f"{len(rep.violations)} violations, first at pair {k} t={rep.times[j]:g}"
    elif not ok:
        msg = f"v_emp + stderr = {fit.v_emp + fit.stderr:.6g} exceeds v_LR = {rep.v_lr:.6g}"
    return ok, artifacts, msg


def cmd_lightcone(cfg: dict, args) -> tuple[bool, list, str]:
    sc = _lr_scenario(cfg, args)
    if not (isinstance(sc.F, ffunc.Weighted) and sc.F.theta == 1) or sc.phi.time_dependent:
        raise ConfigError("lightcone needs a static interaction and family 'weighted' with theta 1")
    rep = dynamics.verify_lr(sc)
    threshold = float(config.tolerance(cfg, "threshold", _default_threshold(sc)))
    fit = dynamics.fit_velocity(rep, threshold)
    ok = rep.ok and _velocity_ok(rep, fit)
    out = {"command": "lightcone", "scenario_hash": config.scenario_hash(cfg), "threshold": threshold,
           "arrivals": {str(d): t for d, t in fit.arrivals.items()},
           "v_emp": fit.v_emp, "stderr": fit.stderr, "intercept": fit.intercept,
           "v_lr": rep.v_lr, "lr_violations": len(rep.violations), "verdict": "pass" if ok else "fail"}
    artifacts = []
    if args.csv:
        report.write_csv(args.csv, CELL_HEADER, _cells(rep))
        artifacts.append(args.csv)
    report.write_json(args.out, out)
    artifacts.append(args.out)
    return ok, artifacts, "" if ok else "light cone contract failed"


def cmd_continuity(cfg: dict, args) -> tuple[bool, list, str]:
    g = config.graph(cfg)
    F = config.ffunction(cfg)
    phi = config.interaction(cfg, g)
    psi = config.interaction(cfg, g, key="compare")
    A_list, _, _ = config.observables(cfg, g)
    if len(A_list) != 1:
        raise ConfigError("continuity needs exactly one observable in observables.A")
    A = A_list[0]
    region = tuple(cfg.get("region", g.sites))
    times = config.grid(cfg.get("times"), [0.25, 0.5, 1.0, 2.0])
    rows, ok = [], True
    for t in times:
        lhs, rhs = dynamics.dynamics_difference(phi, psi, F, g, region, A, float(t))
        cell_ok = lhs <= rhs * (1 + dynamics.VIOLATION_RTOL) + dynamics.VIOLATION_ATOL
        ok = ok and cell_ok
        rows.append({"t": float(t), "lhs": lhs, "rhs": rhs, "ok": bool(cell_ok)})
    out = {"command": "continuity", "scenario_hash": config.scenario_hash(cfg), "rows": rows}
    scales = config.tolerance(cfg, "scales", None)
    if scales:
        t_ref = float(config.tolerance(cfg, "t_ref", 1.0))
        diff = psi - phi
        norms, lhss = [], []
        for lam in scales:
            psi_l = phi + lam * diff
            lhs, _ = dynamics.dynamics_difference(phi, psi_l, F, g, region, A, t_ref)
            norms.append(interactions.interaction_norm(phi - psi_l, F, g))
            lhss.append(lhs)
        slope = float(stats.linregress(np.log(norms), np.log(lhss)).slope)
        tol = float(config.tolerance(cfg, "slope_tol", 0.1))
        scale_ok = abs(slope - 1.0) <= tol
        ok = ok and scale_ok
        out["scaling"] = {"t": t_ref, "scales": list(scales), "diff_norms": norms, "lhs": lhss,
                          "loglog_slope": slope, "ok": scale_ok}
    out["verdict"] = "pass" if ok else "fail"
    report.write_json(args.out, out)
    return ok, [args.out], "" if ok else "continuity estimate failed"


GAP_HEADER = ["n", "s", "E0", "E1", "gap"]


def _scan(cfg: dict, args):
    g = config.graph(cfg)
    p = config.path(cfg, g)
    vols = config.volumes(cfg, g)
    s_grid = config.grid(cfg.get("s_grid"), {"start": 0.0, "stop": 1.0, "points": 41})
    floor = float(config.tolerance(cfg, "floor", 0.0))
    deg_tol = float(config.tolerance(cfg, "deg_tol", gsphase.DEG_TOL))
    scan = gsphase.gap_scan(p, vols, s_grid, floor=floor, deg_tol=deg_tol, jobs=args.jobs)
    return g, p, vols, s_grid, floor, scan


def cmd_gap_scan(cfg: dict, args) -> tuple[bool, list, str]:
    _, _, _, _, floor, scan = _scan(cfg, args)
    report.write_csv(args.out, GAP_HEADER, scan.rows)
    ok = not scan.closings
    msg = ""
    if not ok:
        n, s, gap = scan.closings[0]
        msg = f"gap {gap:.6g} <= floor {floor:g} at n={n} s={s:.6g}"
    return ok, [args.out], msg


def cmd_gap_flow(cfg: dict, args) -> tuple[bool, list, str]:
    g, p, vols, s_grid, floor, scan = _scan(cfg, args)
    artifacts = []
    if args.csv:
        report.write_csv(args.csv, GAP_HEADER, scan.rows)
        artifacts.append(args.csv)
    region = vols[-1]
    flow_grid = config.grid(cfg.get("flow_grid"), {"start": 0.0, "stop": 1.0, "points": 51})
    target = float(config.tolerance(cfg, "fidelity", 0.99))
    nodes = int(config.tolerance(cfg, "quad_nodes", 64))
    xi_cfg = config.tolerance(cfg, "xi", "auto")
    out = {"command": "flow", "scenario_hash": config.scenario_hash(cfg),
           "parameters": {"volume": list(region), "floor": floor, "fidelity_target": target,
                          "quad_nodes": nodes, "steps": len(flow_grid) - 1}}
    if scan.closings:
        n, s, gap = scan.closings[0]
        out.update({"verdict": "fail", "gap_closing": {"n": n, "s": s, "gap": gap}})
        report.write_json(args.out, out)
        artifacts.append(args.out)
        return False, artifacts, f"gap closes below floor {floor:g} at n={n} s={s:.6g}"
    w = None if xi_cfg == "auto" else gsphase.WeightFunction(float(xi_cfg))
    try:
        flow = gsphase.spectral_flow(p, w, region, flow_grid, floor=floor, nodes=nodes)
    except GapClosingError as exc:
        out.update({"verdict": "fail", "gap_closing": {"s": exc.s, "gap": exc.gap}})
        report.write_json(args.out, out)
        artifacts.append(args.out)
        return False, artifacts, str(exc)
    A_list, _, _ = config.observables(cfg, g)
    checks = gsphase.gap_transport_check(flow, p, region, A_list) if A_list else []
    margins = {}
    for c in checks:
        margins[c.s] = min(margins.get(c.s, math.inf), c.margin)
    ok = bool(np.all(flow.fidelities >= target)) and all(m >= -1e-6 for m in margins.values())
    out["parameters"].update({"xi": flow.xi, "quad_nodes_used": flow.nodes})
    out.update({"grid": flow.s_grid, "fidelities": flow.fidelities, "gap_curve": flow.gap_curve,
                "min_fidelity": float(flow.fidelities.min()),
                "unitarity_error": flow.max_unitarity_error(),
                "transport_margins": [margins[s] for s in flow.s_grid] if margins else [],
                "verdict": "pass" if ok else "fail"})
    report.write_json(args.out, out)
    artifacts.append(args.out)
    return ok, artifacts, "" if ok else "fidelity or transport contract failed"


COMMANDS = {
    "certify-ffunc": cmd_certify_ffunction,
    "lr-scan": cmd_lr_scan,
    "lightcone": cmd_lightcone,
    "continuity": cmd_continuity,
    "gap-scan": cmd_gap_scan,
    "flow": cmd_gap_flow,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qll", description="Quasi-locality verification runs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--csv", default=None)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
    sub.add_parser("schema", help="print the scenario JSON schema")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(config.SCHEMA, indent=2))
        return EXIT_PASS
    start = time.perf_counter()
    try:
        cfg = config.load(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
    except QLLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        ok, artifacts, msg = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QLLError as exc:
        print(f"contract failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        ok, artifacts, msg = False, [], str(exc)
    rr = RunReport(args.command, config.scenario_hash(cfg), _versions(),
                   round(time.perf_counter() - start, 3), "pass" if ok else "fail", artifacts, msg)
    print(json.dumps(asdict(rr), sort_keys=True))
    if msg and not ok:
        print(msg, file=sys.stderr)
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
