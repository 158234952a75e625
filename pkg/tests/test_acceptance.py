"""Acceptance criteria at their stated tolerances; each prints one PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from mamax import fixtures
from mamax.cli import main
from mamax.ma import SamplingPlan, agree, equilibrium_pair, pair, useful_fact_check
from mamax.oracle import QuadraturePlan, bt_inductive_pair, epsilon_sweep
from mamax.scene import HoloPoly, PolyhedronSpec, green_candidate, to_complex
from mamax.verify import lemma2, lemma3, positivity, stokes

MILLION = 1_000_000
SCENES = Path(__file__).resolve().parent.parent / "scenes"


@pytest.fixture
def report(request, capsys):
    def emit(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        request.config.acceptance_lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert passed, line

    return emit


def gate(value, expected, stderr, rel):
    return abs(value - expected) <= max(rel * abs(expected), 3 * stderr)


def test_criterion_1_identities(report):
    t0 = time.perf_counter()
    r2, r3 = lemma2(count=1000), lemma3(count=200)
    dt = time.perf_counter() - t0
    worst = max(c.value for c in r2.checks + r3.checks)
    ok = all(c.value < 1e-10 for c in r2.checks + r3.checks) and dt < 10
    report(1, ok, f"max-of-jets identities and bidegree identity: max residual {worst:.2e} < 1e-10, "
                  f"{r2.checks[0].count}+{r3.checks[0].count} instances, {dt:.1f}s < 10s")


def test_criterion_2_positivity(report):
    t0 = time.perf_counter()
    rep = positivity(count=100)
    dt = time.perf_counter() - t0
    lowest = -max(c.value for c in rep.checks)
    ok = rep.passed and dt < 30
    report(2, ok, f"positivity on 2-/3-piece scenes in C^1, C^2: min normalized pairing {lowest:.2e} >= -1e-12, "
                  f"{dt:.1f}s < 30s")


def test_criterion_3_stokes(report):
    t0 = time.perf_counter()
    rep = stokes(n=MILLION)
    dt = time.perf_counter() - t0
    names = {c.name.split("-")[1] for c in rep.checks}
    worst = max(c.value for c in rep.checks)
    ok = rep.passed and names == {"tripod", "polydisc"} and dt < 120
    report(3, ok, f"Stokes on tripod and polydisc: max residual {100 * worst:.2f}% <= 5% at 1e6, {dt:.1f}s < 120s")


@pytest.mark.parametrize("name, exact", [("halfplane", 2.0), ("disc", 4 * math.pi)])
def test_criterion_4_c1_fixtures(report, name, exact):
    t0 = time.perf_counter()
    scene = getattr(fixtures, name)()
    r = pair(scene, 1, None, SamplingPlan(MILLION))
    sw = epsilon_sweep(scene, 1)
    dt = time.perf_counter() - t0
    ok_st = gate(r.value, exact, r.stderr, 0.01)
    ok_sw = gate(sw.extrapolated.value, exact, sw.extrapolated.stderr, 0.01)
    ok = ok_st and ok_sw and dt < 60
    report(4, ok, f"{name}: stratified {r.value:.5f} +- {r.stderr:.5f}, sweep {sw.extrapolated.value:.5f}, "
                  f"exact {exact:.5f}, gate max(1%, 3 stderr), {dt:.1f}s < 60s")


def test_criterion_5_polydisc(report):
    t0 = time.perf_counter()
    spec = fixtures.polydisc_spec()
    m = equilibrium_pair(spec, None, SamplingPlan(MILLION))
    x = equilibrium_pair(spec, "x1^2", SamplingPlan(MILLION), check=False)
    dt = time.perf_counter() - t0
    out, out_err = m.meta["mass_outside_K"], m.meta["mass_outside_K_stderr"]
    ok = (gate(m.value, 1.0, m.stderr, 0.02) and gate(x.value, 0.5, x.stderr, 0.02)
          and abs(out) <= 3 * out_err + 1e-12 and dt < 600)
    report(5, ok, f"polydisc mass {m.value:.4f} +- {m.stderr:.4f} (1), <mu, x1^2> {x.value:.4f} +- {x.stderr:.4f} "
                  f"(0.5), outside K {out:.2e} <= 3 x {out_err:.2e}, {dt:.1f}s < 600s")


def test_criterion_6_ball(report):
    t0 = time.perf_counter()
    spec = fixtures.ball_spec()
    r = equilibrium_pair(spec, None, SamplingPlan(MILLION))
    near, total = 0.0, 0.0
    for J, (samples, vals) in r.samples.items():
        if samples.empty:
            continue
        mass = vals * samples.weights
        radius = np.linalg.norm(to_complex(samples.points), axis=-1)
        near += float(np.sum(mass[np.abs(radius - 1.0) <= 1e-2]))
        total += float(np.sum(mass))
    frac = near / total
    sw = epsilon_sweep(green_candidate(spec), 2, None, plan=QuadraturePlan(n_points=MILLION))
    ext = sw.extrapolated.value * (2 * math.pi) ** -2
    dt = time.perf_counter() - t0
    ok = frac >= 0.99 and abs(r.value - ext) <= 0.02 * max(abs(r.value), abs(ext)) and dt < 600
    report(6, ok, f"ball: {100 * frac:.2f}% of mass within 1e-2 of the sphere, stratified {r.value:.4f} vs "
                  f"extrapolated {ext:.4f} within 2%, {dt:.1f}s < 600s")


def test_criterion_7_useful_fact(report):
    t0 = time.perf_counter()
    p = HoloPoly(2, [([1, 0], 1.0), ([0, 1], 0.5), ([0, 0], -0.3)])
    cases = [
        ("one linear family, N=1", PolyhedronSpec(2, [[p]]), [0], 1),
        ("ball family in C^3, N=2", PolyhedronSpec(3, [[fixtures.z(3, 0), fixtures.z(3, 1)]]), [0], 2),
        ("two linear families in C^2, N=2", fixtures.polydisc_spec(), [0, 1], 2),
    ]
    worst = 0.0
    for _, spec, fams, N in cases:
        out = useful_fact_check(spec, fams, N)
        worst = max(worst, out["ratio"])
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 60
    report(7, ok, f"useful-fact vanishing on {len(cases)} configurations: max |density|/scale {worst:.2e} <= 1e-8, "
                  f"{dt:.1f}s < 60s")


@pytest.mark.parametrize("fx", fixtures.canonical(), ids=lambda f: f.name)
def test_criterion_8_three_way(report, fx):
    plan = SamplingPlan(fx.n_samples)
    st = pair(fx.scene, fx.n, fx.phi, plan)
    sw = epsilon_sweep(fx.scene, fx.n, fx.phi, plan=QuadraturePlan(n_points=MILLION)).extrapolated
    bt = bt_inductive_pair(fx.scene, fx.n, fx.phi, plan)
    c = fx.normalization
    pairs = [("st-sw", st, sw), ("st-bt", st, bt), ("sw-bt", sw, bt)]
    ok = all(agree(a.value, b.value, a.stderr, b.stderr, 0.02) for _, a, b in pairs)
    report(8, ok, f"{fx.name}: stratified {c * st.value:.4f} +- {c * st.stderr:.4f}, "
                  f"sweep {c * sw.value:.4f} +- {c * sw.stderr:.4f}, bt {c * bt.value:.4f} +- {c * bt.stderr:.4f}, "
                  f"pairwise max(2%, 3 combined stderr)")


def test_criterion_9_determinism(report, tmp_path, capsys):
    runs = [
        ["pair", "--scene", str(SCENES / "tripod.json"), "--n", "1", "--phi", "box:-0.5,0.5,0.3", "--seed", "5",
         "--samples", "100000", "--oracle-points", "100000"],
        ["equilibrium", "--spec", str(SCENES / "polydisc_spec.json"), "--seed", "5", "--samples", "100000",
         "--oracle-points", "100000"],
        ["verify", "positivity", "--count", "20", "--seed", "5"],
    ]
    same = True
    for k, argv in enumerate(runs):
        blobs = []
        for rep in range(2):
            prefix = tmp_path / f"run{k}_{rep}"
            main(argv + ["--out", str(prefix)])
            blobs.append(prefix.with_suffix(".json").read_bytes() + prefix.with_suffix(".csv").read_bytes())
        same &= blobs[0] == blobs[1]
    capsys.readouterr()
    report(9, same, f"{len(runs)} commands run twice with fixed seeds: reports byte-identical")
