"""Independent checks of the stratified measure.

``direct_pair`` integrates the classical density of a smooth function
(principal minors of its complex Hessian); ``epsilon_sweep`` applies it to the
log-sum-exp smoothing of the envelope and extrapolates in the smoothing
parameter.  ``bt_inductive_pair`` evaluates ``<(dd^c u)^(n+1), phi>`` as
``int dd^c phi ^ u (dd^c u)^n`` with the level-n stratified measure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forms import volume_complement, wedge
from .ma import PairingResult, SamplingPlan, StratumResult, _run
from .scene import Scene, SmoothPiece, smooth_max
from .strata import stratum_rng
from .testfn import TestFunction, constant, parse

EPS_SCHEDULE = (0.2, 0.1, 0.05, 0.025)
ORACLE_STREAM = 7


@dataclass
class QuadraturePlan:
    """``method``: 'grid' (midpoint tensor grid, ``grid`` points per axis), 'mc', or 'auto'
    (grid for dim 1, Monte Carlo otherwise)."""

    method: str = "auto"
    n_points: int = 1_000_000
    grid: int = 1000
    seed: int = 0
    chunk: int = 1 << 16

    def resolve(self, dim: int) -> str:
        if self.method == "auto":
            return "grid" if dim == 1 else "mc"
        if self.method not in ("grid", "mc"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        return self.method


def elementary_symmetric_minors(H: np.ndarray, n: int) -> np.ndarray:
    """Sum of the n x n principal minors of a batch of Hermitian matrices."""
    dim = H.shape[-1]
    if n == 0:
        return np.ones(H.shape[:-2])
    out = np.zeros(H.shape[:-2])
    for idx in itertools.combinations(range(dim), n):
        out = out + np.linalg.det(H[..., idx, :][..., :, idx]).real
    return out


def direct_density(piece: SmoothPiece, n: int, X) -> np.ndarray:
    """Density of ``(dd^c u)^n ^ omega^(dim-n)/(dim-n)!`` against Lebesgue measure.

    With ``dd^c = 2i d dbar`` this is ``n! 4^n E_n(H)``, ``E_n`` the sum of the
    principal n-minors of the complex Hessian; for ``n = dim`` it is
    ``dim! 4^dim det H``.
    """
    H = piece.jet(X, allow_poles=True).hess
    return math.factorial(n) * 4.0 ** n * elementary_symmetric_minors(H, n)


def _points(domain: np.ndarray, plan: QuadraturePlan, dim: int):
    """Yield (points, weight per point) chunks covering the domain."""
    lo, hi = domain[:, 0], domain[:, 1]
    vol = float(np.prod(hi - lo))
    if plan.resolve(dim) == "grid":
        g = plan.grid
        axes = [lo[r] + (hi[r] - lo[r]) * (np.arange(g) + 0.5) / g for r in range(2 * dim)]
        total = g ** (2 * dim)
        w = vol / total
        rows = max(1, plan.chunk // g ** (2 * dim - 1))
        for start in range(0, g, rows):
            grids = np.meshgrid(axes[0][start:start + rows], *axes[1:], indexing="ij")
            yield np.stack([a.ravel() for a in grids], axis=-1), w, total
    else:
        rng = stratum_rng(plan.seed, (), ORACLE_STREAM)
        N = plan.n_points
        done = 0
        while done < N:
            c = min(plan.chunk, N - done)
            done += c
            yield lo + (hi - lo) * rng.random((c, 2 * dim)), vol / N, N


def _integrate(fields, domain, plan: QuadraturePlan, dim: int):
    """Integrate several per-point functions over the same nodes.

    Returns sums (K,) and the per-node second moments needed for standard errors
    of any linear combination: ``(S1, S2 matrix, N, is_mc)``.
    """
    K = len(fields)
    S1 = np.zeros(K)
    S2 = np.zeros((K, K))
    N = 0
    for X, w, N in _points(domain, plan, dim):
        vals = np.stack([f(X) * w for f in fields])  # (K, c)
        vals = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
        S1 += vals.sum(axis=1)
        S2 += vals @ vals.T
    return S1, S2, N, plan.resolve(dim) == "mc"


def _stderr(S1, S2, N, mc, coeffs) -> float:
    if not mc or N < 2:
        return 0.0
    c = np.asarray(coeffs, dtype=float)
    s1 = float(c @ S1)
    s2 = float(c @ S2 @ c)
    return math.sqrt(max(N * s2 - s1 * s1, 0.0) / (N - 1))


def direct_pair(piece: SmoothPiece, n: int, phi: TestFunction | str | None, domain,
                plan: QuadraturePlan | None = None) -> PairingResult:
    """Pair the classical density of a smooth piece with ``phi`` over ``domain``."""
    plan = plan or QuadraturePlan()
    dim = piece.dim
    if not 1 <= n <= dim:
        raise ValueError(f"n must lie in [1, {dim}]")
    phi = constant(dim) if phi is None else parse(phi, dim)
    domain = np.asarray(domain, dtype=float)
    S1, S2, N, mc = _integrate([lambda X: direct_density(piece, n, X) * phi.value(X)], domain, plan, dim)
    err = _stderr(S1, S2, N, mc, [1.0])
    return PairingResult(float(S1[0]), err, {}, [], {"n": n, "method": f"direct-{plan.resolve(dim)}", "nodes": N})


@dataclass
class SweepResult:
    epsilons: list
    results: list
    extrapolated: PairingResult
    rate: float | None
    flags: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for k, (e, r) in enumerate(zip(self.epsilons, self.results)):
            out.append({"epsilon": e, "value": r.value, "stderr": r.stderr,
                        "extrapolated": self.extrapolated.value if k == len(self.results) - 1 else "",
                        "rate": self.rate if (k == len(self.results) - 1 and self.rate is not None) else ""})
        return out

    def to_dict(self) -> dict:
        return {"epsilons": list(self.epsilons), "values": [r.value for r in self.results],
                "stderrs": [r.stderr for r in self.results], "extrapolated": self.extrapolated.value,
                "extrapolated_stderr": self.extrapolated.stderr, "rate": self.rate, "flags": list(self.flags)}


def epsilon_sweep(scene: Scene, n: int, phi: TestFunction | str | None = None, epsilons: Sequence[float] | None = None,
                  plan: QuadraturePlan | None = None) -> SweepResult:
    """Direct pairings of the smoothed max along a decreasing schedule, then Richardson.

    All smoothing levels share the same quadrature nodes, so differences
    between levels are far less noisy than the levels themselves.  When the
    last difference is within two standard errors the finest level is
    reported as is; otherwise the observed rate drives the extrapolation.
    """
    plan = plan or QuadraturePlan()
    dim = scene.dim
    phi = constant(dim) if phi is None else parse(phi, dim)
    if epsilons is None:
        epsilons = [e * scene.value_scale() for e in EPS_SCHEDULE]
    epsilons = [float(e) for e in epsilons]
    if len(epsilons) < 3 or any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("need at least three strictly decreasing smoothing levels")
    pieces = [smooth_max(scene, e) for e in epsilons]
    fields = [(lambda X, p=p: direct_density(p, n, X) * phi.value(X)) for p in pieces]
    S1, S2, N, mc = _integrate(fields, scene.domain, plan, dim)
    K = len(epsilons)
    results = []
    for k in range(K):
        e = np.zeros(K)
        e[k] = 1.0
        results.append(PairingResult(float(S1[k]), _stderr(S1, S2, N, mc, e), {}, [],
                                     {"n": n, "epsilon": epsilons[k], "method": "direct-smoothed"}))
    flags = []
    v = S1
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    cdiff = np.zeros(K)
    cdiff[-1], cdiff[-2] = 1.0, -1.0
    diff_err = _stderr(S1, S2, N, mc, cdiff)
    ratio = epsilons[-2] / epsilons[-1]
    rate = None
    if d1 != 0 and d2 != 0 and d1 * d2 > 0 and abs(d2) < abs(d1):
        rate = math.log(abs(d1 / d2)) / math.log(ratio)
    noise_floor = max(2.0 * diff_err, 1e-12 * max(1.0, abs(v[-1])))
    coeffs = np.zeros(K)
    if abs(d2) <= noise_floor:
        coeffs[-1] = 1.0
        flags.append("converged-within-noise")
    elif rate is not None and rate > 6.0:
        # faster than any algebraic order we would extrapolate with
        coeffs[-1] = 1.0
        flags.append("fast-convergence")
    else:
        p = rate
        if p is None or not 0.5 <= p <= 6.0:
            flags.append("low-confidence")
            p = 1.0
        f = 1.0 / (ratio ** p - 1.0)
        coeffs[-1], coeffs[-2] = 1.0 + f, -f
    tail = np.diff(v[-3:])
    if not (np.all(tail >= 0) or np.all(tail <= 0)):
        flags.append("non-monotone-tail")
    value = float(coeffs @ S1)
    extrap = PairingResult(value, _stderr(S1, S2, N, mc, coeffs), {}, list(flags),
                           {"n": n, "method": "epsilon-extrapolated", "rate": rate, "epsilons": epsilons})
    return SweepResult(epsilons, results, extrap, rate, flags)


def bt_inductive_pair(scene: Scene, n_plus_1: int, phi: TestFunction | str, plan: SamplingPlan | None = None,
                      keep: bool = False) -> PairingResult:
    """``<(dd^c u)^(n+1), phi> = int dd^c phi ^ u (dd^c u)^n`` using the level-n strata.

    ``phi`` needs compact support inside the scene's domain so that no
    boundary terms appear.
    """
    dim = scene.dim
    if not 1 <= n_plus_1 <= dim:
        raise ValueError(f"n + 1 must lie in [1, {dim}]")
    plan = plan or SamplingPlan()
    phi = parse(phi, dim)
    if not phi.compact_in(scene.domain):
        raise ValueError("the inductive pairing needs a test function compactly supported inside the domain")
    n = n_plus_1 - 1
    comp = volume_complement(dim, n_plus_1)
    test_form = lambda P: wedge(phi.ddc(P), comp)  # noqa: E731
    return _run(scene, n, scene.envelope, plan, test_form, keep=keep,
                meta={"n": n_plus_1, "method": "bt-inductive"})
