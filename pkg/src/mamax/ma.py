"""Stratified Monge-Ampere measures of a max envelope and equilibrium measures.

For ``u = max(u_1, ..., u_m)`` with smooth strata,

    (dd^c u)^n = sum_J sigma_J^(n-|J|+1) ^ delta^c_J ^ [E_J],   1 <= |J| <= n+1,

so a pairing with a test function is a sum of surface integrals over the
strata.  For ``n < dim`` the test function is paired through the
complementary form ``phi * omega^(dim-n) / (dim-n)!``.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .forms import (DifferentialForm, ddc_from_hessian, delta_c, evaluate_on_frame, sigma, volume_complement,
                    wedge)
from .scene import LogSumSquares, PolyhedronSpec, Scene, green_candidate, growth_report
from .strata import DELTA_REL, TAU_PROJ, StratumSamples, candidate_strata, sample_stratum
from .testfn import TestFunction, constant, parse


class HypothesisError(ValueError):
    """The polyhedron does not satisfy the Green-function hypotheses."""

    def __init__(self, message: str, details: dict):
        super().__init__(message)
        self.details = details


@dataclass
class SamplingPlan:
    n_samples: int = 200_000
    seed: int = 0
    delta_rel: float = DELTA_REL
    max_iter: int = 50
    tol: float = TAU_PROJ
    threads: int = 1

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "seed": self.seed, "delta_rel": self.delta_rel,
                "max_iter": self.max_iter, "tol": self.tol}


@dataclass
class StratumResult:
    J: tuple
    value: float
    stderr: float
    n_samples: int
    n_proposals: int
    n_discarded: int
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"J": list(self.J), "value": self.value, "stderr": self.stderr, "n_samples": self.n_samples,
                "n_proposals": self.n_proposals, "n_discarded": self.n_discarded, "flags": list(self.flags)}


@dataclass
class PairingResult:
    value: float
    stderr: float
    per_stratum: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict, repr=False)

    @classmethod
    def combine(cls, parts: Sequence[StratumResult], flags=(), meta=None) -> "PairingResult":
        per = {p.J: p for p in parts}
        value = float(sum(p.value for p in parts))
        stderr = float(math.sqrt(sum(p.stderr ** 2 for p in parts)))
        return cls(value, stderr, per, list(flags), dict(meta or {}))

    @property
    def degenerate(self) -> bool:
        return any(f.startswith("degenerate") for f in self.flags)

    def scaled(self, c: float) -> "PairingResult":
        per = {J: StratumResult(J, c * s.value, abs(c) * s.stderr, s.n_samples, s.n_proposals, s.n_discarded,
                                list(s.flags)) for J, s in self.per_stratum.items()}
        return PairingResult(c * self.value, abs(c) * self.stderr, per, list(self.flags), dict(self.meta),
                             self.samples)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "per_stratum": [self.per_stratum[J].to_dict() for J in sorted(self.per_stratum, key=lambda J: (len(J), J))],
            "flags": list(self.flags),
            **({"meta": self.meta} if self.meta else {}),
        }


def agree(a: float, b: float, sa: float, sb: float, rel: float) -> bool:
    """Gate: ``|a - b| <= max(rel * scale, 3 * combined stderr)``."""
    scale = max(abs(a), abs(b))
    return abs(a - b) <= max(rel * scale, 3.0 * math.hypot(sa, sb))


# -- densities --------------------------------------------------------------------------------------------


FormFactory = Callable[[np.ndarray], DifferentialForm]


def stratum_density(scene: Scene, samples: StratumSamples, n: int,
                    test_form: DifferentialForm | FormFactory | None = None) -> np.ndarray:
    """Density of ``sigma_J^(n-l+1) ^ delta^c_J ^ test_form`` against dS on E_J.

    ``test_form`` must have degree ``2 (dim - n)`` and defaults to the
    complementary Kahler power; it may be a callable evaluated at the nodes.
    The sign ``(-1)^(l(l-1)/2)`` and the point-stratum parity are applied.
    """
    J = samples.J
    l = len(J)
    if l > n + 1:
        raise ValueError(f"|J| = {l} exceeds n + 1 = {n + 1}: such strata carry no mass")
    if samples.empty:
        return np.zeros(0)
    P = samples.points
    jets = scene.jets(J, P)
    ddc = [ddc_from_hessian(j.hess) for j in jets]
    form = wedge(sigma(J, jets, n - l + 1, ddc), delta_c(J, jets))
    if test_form is None:
        test_form = volume_complement(scene.dim, n)
    elif callable(test_form):
        test_form = test_form(P)
    form = wedge(form, test_form)
    if form.degree != samples.frames.shape[-2]:
        raise ValueError(f"form degree {form.degree} does not match stratum dimension {samples.frames.shape[-2]}")
    val = evaluate_on_frame(form, samples.frames)
    return samples.sign * samples.parity * val.real


def strata_for(scene: Scene, n: int) -> list[tuple]:
    return [J for J in candidate_strata(scene.m, n + 1) if len(J) - 1 <= 2 * scene.dim]


def _stratum_task(scene: Scene, J, n: int, integrand, plan: SamplingPlan, test_form):
    samples = sample_stratum(scene, J, plan.n_samples, plan.seed, delta_rel=plan.delta_rel,
                             max_iter=plan.max_iter, tol=plan.tol)
    dens = stratum_density(scene, samples, n, test_form)
    vals = dens * integrand(samples.points) if len(samples) else dens
    value, err = samples.estimate(vals)
    res = StratumResult(tuple(J), value, err, len(samples), samples.n_proposals, samples.n_discarded,
                        list(samples.flags))
    return res, samples, vals


def _run(scene: Scene, n: int, integrand, plan: SamplingPlan, test_form, strata=None, keep=False,
         meta=None) -> PairingResult:
    strata = strata_for(scene, n) if strata is None else [tuple(J) for J in strata]
    task = lambda J: _stratum_task(scene, J, n, integrand, plan, test_form)  # noqa: E731
    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as pool:
            outs = list(pool.map(task, strata))
    else:
        outs = [task(J) for J in strata]
    flags = []
    for res, _, _ in outs:
        for f in res.flags:
            if f in ("degenerate", "partially-degenerate", "pole-discards"):
                flags.append(f"{f}:{'-'.join(map(str, res.J))}")
    result = PairingResult.combine([o[0] for o in outs], flags, meta)
    if keep:
        result.samples = {o[0].J: (o[1], o[2]) for o in outs}
    return result


def pair(scene: Scene, n: int, phi: TestFunction | str | None = None, plan: SamplingPlan | None = None,
         strata=None, keep: bool = False) -> PairingResult:
    """``<(dd^c u)^n, phi omega^(dim-n)/(dim-n)!>`` summed over the strata."""
    if not 1 <= n <= scene.dim:
        raise ValueError(f"n must lie in [1, {scene.dim}]")
    plan = plan or SamplingPlan()
    phi = constant(scene.dim) if phi is None else parse(phi, scene.dim)
    return _run(scene, n, phi.value, plan, None, strata, keep, {"n": n, "method": "stratified"})


def delta_sweep(scene: Scene, n: int, phi: TestFunction | str | None = None, plan: SamplingPlan | None = None,
                factors=(1.0, 0.5, 0.25)) -> dict:
    """Repeat :func:`pair` with the slab half-width scaled by ``factors``.

    The estimates should agree within their (correlated) errors; a drift
    larger than 3 combined standard errors signals slab bias.
    """
    plan = plan or SamplingPlan()
    results = []
    for f in factors:
        p = SamplingPlan(plan.n_samples, plan.seed, plan.delta_rel * f, plan.max_iter, plan.tol, plan.threads)
        results.append(pair(scene, n, phi, p))
    consistent = all(abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)
                     for a, b in itertools.combinations(results, 2))
    return {"delta_rel": [plan.delta_rel * f for f in factors], "values": [r.value for r in results],
            "stderrs": [r.stderr for r in results], "consistent": bool(consistent)}


# -- polynomial polyhedra -----------------------------------------------------------------------------------------------


def check_hypotheses(spec: PolyhedronSpec, n_probe: int = 40_000, seed: int = 0) -> dict:
    """Growth and stratum-count hypotheses for the Green candidate of ``spec``.

    Every stratum ``E_J`` with ``0 not in J`` lies outside K; each one found
    nonempty in the domain must satisfy ``sum_(j in J) N_j <= dim``.
    """
    growth = growth_report(spec, seed=seed)
    scene = green_candidate(spec)
    N = spec.N
    outer = []
    violations = []
    for size in range(1, len(N) + 1):
        for fams in itertools.combinations(range(1, len(N) + 1), size):
            if size - 1 > 2 * spec.dim:
                continue
            s = sample_stratum(scene, fams, n_probe, seed)
            total = sum(N[a - 1] for a in fams)
            entry = {"J": list(fams), "sum_N": total, "nonempty": not s.empty}
            outer.append(entry)
            if not s.empty and total > spec.dim:
                violations.append(entry)
    report = {"growth": growth, "outer_strata": outer, "violations": violations,
              "ok": bool(growth["ok"] and not violations)}
    return report


def equilibrium_pair(spec: PolyhedronSpec, phi: TestFunction | str | None = None, plan: SamplingPlan | None = None,
                     check: bool = True) -> PairingResult:
    """``<mu_K, phi>`` with ``mu_K = (dd^c u / 2 pi)^dim`` for the polyhedron's Green function."""
    plan = plan or SamplingPlan()
    hyp = None
    if check:
        hyp = check_hypotheses(spec, seed=plan.seed)
        if not hyp["ok"]:
            if hyp["violations"]:
                v = hyp["violations"][0]
                msg = f"stratum J={v['J']} lies outside K with sum N_j = {v['sum_N']} > dim = {spec.dim}"
            else:
                msg = "growth hypothesis u >= log+|z| - C fails"
            raise HypothesisError(msg, hyp)
    scene = green_candidate(spec)
    dim = spec.dim
    phi = constant(dim) if phi is None else parse(phi, dim)
    raw = _run(scene, dim, phi.value, plan, None, keep=True, meta={"n": dim, "method": "stratified"})
    norm = (2 * math.pi) ** (-dim)
    res = raw.scaled(norm)
    out_val, out_var, tot = 0.0, 0.0, 0.0
    for J, (samples, _) in raw.samples.items():
        if samples.empty:
            continue
        dens = stratum_density(scene, samples, dim) * norm
        outside = ~scene.in_K(samples.points)
        v, e = samples.estimate(np.where(outside, dens, 0.0))
        out_val += v
        out_var += e * e
        tot += samples.estimate(dens)[0]
    res.meta.update({
        "normalization": "(1/2pi)^dim",
        "raw_value": raw.value,
        "raw_stderr": raw.stderr,
        "mass_outside_K": out_val,
        "mass_outside_K_stderr": math.sqrt(out_var),
        "total_mass": tot,
    })
    if hyp is not None:
        res.meta["hypotheses"] = hyp
    return res


def useful_fact_check(spec: PolyhedronSpec, families: Sequence[int], N: int, n_samples: int = 50_000,
                      seed: int = 0) -> dict:
    """Largest ``|density|`` of ``(dd^c max_a u_a)^N`` on the strata of the chosen families.

    Requires ``N >= sum_a N_a``; families are 0-based indices into ``spec.families``.
    """
    families = list(families)
    need = sum(len(spec.families[a]) for a in families)
    if N < need:
        raise ValueError(f"N = {N} is below sum N_a = {need}")
    if N > spec.dim:
        return {"max_density": 0.0, "scale": 1.0, "ratio": 0.0, "note": "N exceeds dim: form degree too high"}
    scene = Scene(spec.dim, [LogSumSquares(spec.dim, list(spec.families[a])) for a in families], spec.domain)
    comp = volume_complement(spec.dim, N)
    worst, scale, count = 0.0, 0.0, 0
    per = []
    for J in strata_for(scene, N):
        s = sample_stratum(scene, J, n_samples, seed)
        if s.empty:
            per.append({"J": list(J), "n_samples": 0, "max_density": 0.0})
            continue
        dens = np.abs(stratum_density(scene, s, N))
        jets = scene.jets(J, s.points)
        ddc_norm = sum(ddc_from_hessian(j.hess).max_abs() for j in jets)
        sc = delta_c(J, jets).max_abs() * max(ddc_norm, 1e-300) ** (N - len(J) + 1) * comp.max_abs()
        worst = max(worst, float(np.max(dens)))
        scale = max(scale, sc)
        count += len(s)
        per.append({"J": list(J), "n_samples": len(s), "max_density": float(np.max(dens))})
    scale = scale or 1.0
    return {"max_density": worst, "scale": scale, "ratio": worst / scale, "n_samples": count, "per_stratum": per}
