"""Command-line front door: pair, verify, equilibrium, sweep.

Exit codes: 0 success, 1 gate failure / degeneracy / refused hypothesis,
2 input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import ma, oracle, verify
from .scene import SceneFormatError, dumps, green_candidate, load_polyhedron, load_scene
from .strata import DELTA_REL
from .testfn import parse as parse_phi

SCHEMA = 1
GATE_REL = 0.02


class InputError(Exception):
    pass


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("MAMAX_THREADS", "1")))
    except ValueError:
        return 1


def _plan(args) -> ma.SamplingPlan:
    return ma.SamplingPlan(n_samples=args.samples, seed=args.seed, delta_rel=args.delta_rel, threads=args.threads)


def _quad(args) -> oracle.QuadraturePlan:
    return oracle.QuadraturePlan(method=args.quadrature, n_points=args.oracle_points, grid=args.grid, seed=args.seed)


def _phi(text, dim):
    try:
        return parse_phi(text, dim)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"phi: {exc}") from None


def _gate(name, a, b, rel=GATE_REL) -> dict:
    ok = ma.agree(a.value, b.value, a.stderr, b.stderr, rel)
    return {"name": name, "a": a.value, "b": b.value, "a_stderr": a.stderr, "b_stderr": b.stderr,
            "tolerance": f"max({rel:g} relative, 3 combined stderr)", "passed": bool(ok)}


def _closed_form_gate(name, r, expected, rel=GATE_REL) -> dict:
    ok = abs(r.value - expected) <= max(rel * abs(expected), 3 * r.stderr)
    return {"name": name, "a": r.value, "b": expected, "a_stderr": r.stderr, "b_stderr": 0.0,
            "tolerance": f"max({rel:g} relative, 3 stderr)", "passed": bool(ok)}


def _per_stratum_rows(result: ma.PairingResult) -> list[dict]:
    rows = []
    for d in result.to_dict()["per_stratum"]:
        rows.append({"J": "-".join(map(str, d["J"])), "value": d["value"], "stderr": d["stderr"],
                     "n_samples": d["n_samples"], "n_discarded": d["n_discarded"], "flags": ";".join(d["flags"])})
    return rows


def _write_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _emit(report: dict, rows: list[dict], out: str | None) -> None:
    text = dumps(report) + "\n"
    if out:
        Path(out).with_suffix(".json").write_text(text)
        if rows:
            Path(out).with_suffix(".csv").write_text(_write_csv(rows))
    sys.stdout.write(text)


def _base(command: str, args, **extra) -> dict:
    rep = {"schema": SCHEMA, "command": command, "seed": args.seed}
    rep.update(extra)
    return rep


# -- commands ---------------------------------------------------------------------------------------------


def cmd_pair(args) -> int:
    try:
        scene = load_scene(args.scene)
    except (OSError, SceneFormatError) as exc:
        raise InputError(f"scene: {exc}") from None
    if not scene.is_psh() and not args.allow_non_psh:
        raise InputError("scene has pieces that are not plurisubharmonic; pass --allow-non-psh to proceed")
    if not 1 <= args.n <= scene.dim:
        raise InputError(f"--n must lie in [1, {scene.dim}]")
    phi = _phi(args.phi, scene.dim)
    plan = _plan(args)
    res = ma.pair(scene, args.n, phi, plan)
    report = _base("pair", args, scene=scene.to_dict(), n=args.n, phi=phi.to_dict(), plan=plan.to_dict())
    gates = []
    if res.degenerate and not args.allow_degenerate:
        report.update({"value": None, "stderr": None, "flags": res.flags,
                       "per_stratum": res.to_dict()["per_stratum"],
                       "error": "degenerate stratum: the formula needs smooth strata; perturb the pieces with "
                                "small distinct offsets or rerun with --allow-degenerate",
                       "verdict": "degenerate"})
        _emit(report, _per_stratum_rows(res), args.out)
        return 1
    report.update(res.to_dict())
    if args.expect is not None:
        gates.append(_closed_form_gate("stratified-vs-expected", res, args.expect))
    if not args.no_oracle:
        sw = oracle.epsilon_sweep(scene, args.n, phi, None, _quad(args))
        report["oracle_sweep"] = sw.to_dict()
        gates.append(_gate("stratified-vs-sweep", res, sw.extrapolated))
        if phi.compact_in(scene.domain):
            bt = oracle.bt_inductive_pair(scene, args.n, phi, plan)
            report["oracle_bt"] = bt.to_dict()
            gates.append(_gate("stratified-vs-bt", res, bt))
            gates.append(_gate("sweep-vs-bt", sw.extrapolated, bt))
        else:
            report["oracle_bt"] = {"skipped": "test function not compactly supported inside the domain"}
    if args.delta_sweep:
        ds = ma.delta_sweep(scene, args.n, phi, plan)
        report["delta_sweep"] = ds
        gates.append({"name": "delta-sweep-consistent", "passed": ds["consistent"],
                      "tolerance": "pairwise within 3 combined stderr"})
    passed = all(g["passed"] for g in gates)
    report["gates"] = gates
    report["verdict"] = "pass" if passed else ("fail-ignored" if args.no_gate else "fail")
    _emit(report, _per_stratum_rows(res), args.out)
    return 0 if (passed or args.no_gate) else 1


def cmd_equilibrium(args) -> int:
    try:
        spec = load_polyhedron(args.spec)
    except (OSError, SceneFormatError) as exc:
        raise InputError(f"spec: {exc}") from None
    phi = _phi(args.phi, spec.dim)
    plan = _plan(args)
    report = _base("equilibrium", args, spec=spec.to_dict(), phi=phi.to_dict(), plan=plan.to_dict())
    try:
        res = ma.equilibrium_pair(spec, phi, plan)
    except ma.HypothesisError as exc:
        report.update({"verdict": "refused", "error": str(exc), "hypotheses": exc.details})
        _emit(report, [], args.out)
        sys.stderr.write(f"refused: {exc}\n")
        return 1
    if res.degenerate and not args.allow_degenerate:
        report.update({"value": None, "stderr": None, "flags": res.flags, "verdict": "degenerate"})
        _emit(report, _per_stratum_rows(res), args.out)
        return 1
    shown = res.scaled((2 * math.pi) ** spec.dim) if args.raw else res
    report.update(shown.to_dict())
    report["normalization"] = "raw" if args.raw else "(1/2pi)^dim"
    gates = []
    out, out_err = res.meta["mass_outside_K"], res.meta["mass_outside_K_stderr"]
    gates.append({"name": "mass-outside-K", "a": out, "a_stderr": out_err, "b": 0.0, "b_stderr": 0.0,
                  "tolerance": "3 stderr", "passed": bool(abs(out) <= 3 * out_err + 1e-12)})
    if args.expect is not None:
        gates.append(_closed_form_gate("equilibrium-vs-expected", shown, args.expect))
    if not args.no_oracle:
        scene = green_candidate(spec)
        sw = oracle.epsilon_sweep(scene, spec.dim, phi, None, _quad(args))
        ext = sw.extrapolated.scaled(1.0 if args.raw else (2 * math.pi) ** -spec.dim)
        report["oracle_sweep"] = sw.to_dict()
        gates.append(_gate("equilibrium-vs-sweep", shown, ext))
    passed = all(g["passed"] for g in gates)
    report["gates"] = gates
    report["verdict"] = "pass" if passed else ("fail-ignored" if args.no_gate else "fail")
    _emit(report, _per_stratum_rows(res), args.out)
    return 0 if (passed or args.no_gate) else 1


def cmd_verify(args) -> int:
    kwargs = {"seed": args.seed}
    if args.count is not None:
        kwargs["n" if args.suite == "stokes" else "count"] = args.count
    if args.samples is not None:
        if args.suite not in ("stokes", "lemma4"):
            raise InputError("--samples applies to the stokes and lemma4 suites")
        kwargs["n"] = args.samples
    if args.scene:
        if args.suite not in ("stokes", "lemma4"):
            raise InputError("--scene applies to the stokes and lemma4 suites")
        try:
            scene = load_scene(args.scene)
        except (OSError, SceneFormatError) as exc:
            raise InputError(f"scene: {exc}") from None
        if not scene.name:
            scene.name = Path(args.scene).stem
        kwargs["scenes"] = [scene]
    rep = verify.SUITES[args.suite](**kwargs)
    report = _base("verify", args, **rep.to_dict())
    rows = [{"check": c.name, "value": c.value, "threshold": c.threshold, "passed": c.passed} for c in rep.checks]
    for c in rep.checks:
        sys.stderr.write(f"{c.name}: {c.value:.3e} (threshold {c.threshold:g}) {'PASS' if c.passed else 'FAIL'}\n")
    _emit(report, rows, args.out)
    return 0 if rep.passed and rep.checks else 1


def cmd_sweep(args) -> int:
    try:
        scene = load_scene(args.scene)
    except (OSError, SceneFormatError) as exc:
        raise InputError(f"scene: {exc}") from None
    phi = _phi(args.phi, scene.dim)
    eps = None
    if args.eps:
        try:
            eps = [float(e) for e in args.eps.split(",")]
        except ValueError:
            raise InputError("--eps: expected comma-separated numbers") from None
    try:
        sw = oracle.epsilon_sweep(scene, args.n, phi, eps, _quad(args))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    report = _base("sweep", args, scene=scene.to_dict(), n=args.n, phi=phi.to_dict(), **sw.to_dict())
    report["verdict"] = "low-confidence" if "low-confidence" in sw.flags else "ok"
    _emit(report, sw.rows(), args.out)
    return 0


# -- parser -----------------------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, sampling: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write OUT.json and OUT.csv")
    if sampling:
        p.add_argument("--samples", type=int, default=200_000, help="proposals per stratum")
        p.add_argument("--delta-rel", type=float, default=DELTA_REL, help="slab half-width / domain diameter")
        p.add_argument("--threads", type=int, default=_threads_default())
        p.add_argument("--phi", default="const")
        p.add_argument("--no-oracle", action="store_true")
        p.add_argument("--no-gate", action="store_true")
        p.add_argument("--allow-degenerate", action="store_true")
        p.add_argument("--expect", type=float, help="closed-form value to gate against")
        _quad_args(p)


def _quad_args(p):
    p.add_argument("--quadrature", choices=["auto", "grid", "mc"], default="auto")
    p.add_argument("--oracle-points", type=int, default=1_000_000)
    p.add_argument("--grid", type=int, default=1000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mamax", description="Monge-Ampere measures of a max of smooth functions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair", help="stratified pairing <(dd^c u)^n, phi> with oracle cross-checks")
    p.add_argument("--scene", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--allow-non-psh", action="store_true")
    p.add_argument("--delta-sweep", action="store_true", help="repeat at half and quarter slab width")
    _common(p)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("equilibrium", help="equilibrium measure of a polynomial polyhedron")
    p.add_argument("--spec", required=True)
    p.add_argument("--raw", action="store_true", help="report unnormalized (dd^c u)^dim")
    _common(p)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("verify", help="randomized identity and geometry suites")
    p.add_argument("suite", choices=sorted(verify.SUITES))
    p.add_argument("--count", type=int, help="random instances (proposals per stratum for stokes)")
    p.add_argument("--scene", help="run the Stokes identity on this scene (stokes, lemma4)")
    p.add_argument("--samples", type=int, help="proposals per stratum for the Stokes identity")
    _common(p, sampling=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="smoothing sweep of the direct oracle (convergence CSV)")
    p.add_argument("--scene", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--phi", default="const")
    p.add_argument("--eps", help="comma-separated decreasing smoothing levels")
    _quad_args(p)
    _common(p, sampling=False)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
