"""Randomized identity suites for the form algebra and the stratum geometry.

Each suite returns a :class:`SuiteReport` listing the largest residual per
identity against its threshold.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .forms import (DifferentialForm, DerivativeJet, bidegree_part, dc_exterior, dc_partials, dc_scalar, dcJ,
                    ddc_from_hessian, delta_c, evaluate_on_frame, exterior_derivative, one_form, random_jets,
                    real_covector, residual, sigma, wedge, wedge_all, wedge_partials)
from .scene import Constant, HermitianQuadratic, HoloPoly, LogSumSquares, RealAffine, Scene
from .strata import boundary_sign, orientation_sign, residuals, sample_stratum, stratum_rng, tangent_frames
from .testfn import SmoothBox


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    count: int = 0
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "count": self.count,
                "passed": self.passed, **({"detail": self.detail} if self.detail else {})}


@dataclass
class SuiteReport:
    suite: str
    checks: list
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _rel(a: DifferentialForm, b: DifferentialForm) -> float:
    return residual(a, b) / max(1.0, a.max_abs(), b.max_abs())


# -- max-of-jets identities ---------------------------------------------------------------------------


def lemma2(count: int = 1000, seed: int = 0, dims=(1, 2, 3), max_len: int = 4) -> SuiteReport:
    """Identities for ``d(d^c_J)``, ``d^c u ^ delta^c_J``, the alternating sum and sigma recursion.

    ``d(d^c_J)`` is computed as the exterior derivative of the form field
    ``d^c u_j1 ^ ... ^ d^c u_jl`` from the full real Hessians, independently
    of the ``dd^c`` constructor used on the right-hand side.
    """
    t0 = time.perf_counter()
    rng = stratum_rng(seed, (), 21)
    worst = {k: 0.0 for k in ("(1)", "(2)", "(3)", "(4)")}
    for dim in dims:
        for l in range(1, max_len + 1):
            jets = [random_jets(rng, dim, count) for _ in range(l)]
            J = tuple(range(l))
            dcs = [dc_scalar(j) for j in jets]
            ddcs = [ddc_from_hessian(j.hess) for j in jets]
            # (1)
            lhs = exterior_derivative(wedge_partials(dcs, [dc_partials(j) for j in jets]))
            rhs = DifferentialForm.zero(dim, l + 1)
            for t in range(l):
                rest = [dcs[s] for s in range(l) if s != t]
                rhs = rhs + (-1) ** t * wedge(wedge_all(rest, dim), ddcs[t])
            worst["(1)"] = max(worst["(1)"], _rel(lhs, rhs))
            dJ = dcJ(J, jets)
            dlt = delta_c(J, jets)
            # (2)
            for t in range(l):
                worst["(2)"] = max(worst["(2)"], _rel(wedge(dcs[t], dlt), (-1) ** (l - 1) * dJ))
            # (3)
            alt = DifferentialForm.zero(dim, l - 1)
            for t in range(l):
                others = [jets[s] for s in range(l) if s != t]
                term = dcJ(J[:-1], others) if others else DifferentialForm.scalar(dim, 1.0)
                alt = alt + (-1) ** (l - 1 - t) * term
            worst["(3)"] = max(worst["(3)"], _rel(alt, dlt))
            # (4)
            if l >= 2:
                for n in range(0, dim):
                    full = sigma(J, jets, n + 1, ddcs)
                    base = sigma(J, jets, n, ddcs)
                    for t in range(l):
                        idx = [s for s in range(l) if s != t]
                        hat = sigma(J[:-1], [jets[s] for s in idx], n + 1, [ddcs[s] for s in idx])
                        worst["(4)"] = max(worst["(4)"], _rel(wedge(ddcs[t], base) + hat, full))
    checks = [Check(f"lemma2{k}", v, 1e-10, count) for k, v in worst.items()]
    return SuiteReport("lemma2", checks, time.perf_counter() - t0)


# -- polynomial-coefficient identity ---------------------------------------------------------------------


def _random_field(rng, dim: int, p: int, q: int, size: int):
    """A (p, q) form field with quadratic polynomial coefficients, as (value, real partials) at a point."""
    keys = [a + tuple(dim + b for b in bb) for a in itertools.combinations(range(dim), p)
            for bb in itertools.combinations(range(dim), q)]
    D = 2 * dim
    X = rng.standard_normal((size, D))
    val, parts = {}, [dict() for _ in range(D)]
    for key in keys:
        c0 = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        g = rng.standard_normal((size, D)) + 1j * rng.standard_normal((size, D))
        A = rng.standard_normal((size, D, D)) + 1j * rng.standard_normal((size, D, D))
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        AX = np.einsum("brs,bs->br", A, X)
        val[key] = c0 + np.einsum("br,br->b", g, X) + 0.5 * np.einsum("br,br->b", X, AX)
        for r in range(D):
            parts[r][key] = g[:, r] + AX[:, r]
    deg = p + q
    return (DifferentialForm(dim, deg, val), [DifferentialForm(dim, deg, pr) for pr in parts])


def lemma3(count: int = 200, seed: int = 0, dims=(1, 2, 3)) -> SuiteReport:
    """Top-bidegree parts of ``d alpha ^ d^c beta`` and ``d beta ^ d^c alpha`` coincide.

    ``alpha`` of type (a, a) and ``beta`` of type (b, b) with polynomial
    coefficients; derivatives are taken from the exact partials.
    """
    t0 = time.perf_counter()
    rng = stratum_rng(seed, (), 31)
    worst = 0.0
    shapes = []
    for dim in dims:
        for a in range(dim):
            for b in range(dim):
                if a + b + 1 > dim:
                    continue
                al, al_p = _random_field(rng, dim, a, a, count)
                be, be_p = _random_field(rng, dim, b, b, count)
                lhs = wedge(exterior_derivative(al_p), dc_exterior(be_p))
                rhs = wedge(exterior_derivative(be_p), dc_exterior(al_p))
                top = a + b + 1
                worst = max(worst, _rel(bidegree_part(lhs, top, top), bidegree_part(rhs, top, top)))
                shapes.append([dim, a, b])
    return SuiteReport("lemma3", [Check("lemma3", worst, 1e-10, count, {"shapes": shapes})],
                       time.perf_counter() - t0)


# -- positivity -------------------------------------------------------------------------------------------


def positive_test_form(alphas: np.ndarray, dim: int) -> DifferentialForm:
    """``prod_k i alpha_k ^ conj(alpha_k)`` for (1,0) covectors ``alphas`` of shape (..., p, dim)."""
    out = DifferentialForm.scalar(dim, 1.0)
    for k in range(alphas.shape[-2]):
        a = alphas[..., k, :]
        fa = one_form(dim, a)
        fb = DifferentialForm._raw(dim, 1, {(dim + j,): np.conj(a[..., j]) for j in range(dim)})
        out = wedge(out, 1j * wedge(fa, fb))
    return out


def _unit_covectors(rng, shape, dim):
    a = rng.standard_normal(shape + (dim,)) + 1j * rng.standard_normal(shape + (dim,))
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def _top_density(f: DifferentialForm) -> np.ndarray:
    """Coefficient of a top-degree form relative to the standard volume form."""
    D = 2 * f.dim
    return evaluate_on_frame(f, np.eye(D)).real


def random_scene(rng, dim: int, m: int) -> Scene:
    """Generic psh scene: a constant, affine and Hermitian-quadratic pieces through a common region."""
    pieces = [Constant(dim, 0.0)]
    for j in range(1, m):
        if j % 2:
            pieces.append(RealAffine(dim, rng.standard_normal(2 * dim), 0.1 * rng.standard_normal()))
        else:
            B = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            pieces.append(HermitianQuadratic(dim, 0.5 * B @ B.conj().T / dim))
    return Scene(dim, pieces, np.tile([-1.0, 1.0], (2 * dim, 1)))


def positivity(count: int = 100, seed: int = 0, jet_count: int = 200, n_samples: int = 20000,
               max_nodes: int = 200) -> SuiteReport:
    """``dd^c`` of PSD Hessians and ``delta^c_J ^ [E_J]`` against products of ``i alpha ^ conj(alpha)``.

    The reported value is ``-min(normalized pairing)``; the check passes when
    it is at most 1e-12.
    """
    t0 = time.perf_counter()
    rng = stratum_rng(seed, (), 41)
    worst_ddc, worst_jet, worst_scene, nodes = -np.inf, -np.inf, -np.inf, 0
    for dim in (1, 2, 3):
        # dd^c u for PSD Hessians
        B = rng.standard_normal((jet_count, dim, dim)) + 1j * rng.standard_normal((jet_count, dim, dim))
        H = B @ np.conj(np.swapaxes(B, -1, -2))
        ddc = ddc_from_hessian(H)
        alphas = _unit_covectors(rng, (count, jet_count, dim - 1), dim)
        for c in range(count):
            dens = _top_density(wedge(ddc, positive_test_form(alphas[c], dim)))
            scale = np.linalg.norm(H, axis=(-2, -1))
            worst_ddc = max(worst_ddc, float(np.max(-dens / scale)))
        # delta^c_J on E'_J frames from random jets
        for l in range(2, dim + 2):
            p = dim - l + 1
            jets = [random_jets(rng, dim, jet_count) for _ in range(l)]
            G = np.stack([(jets[t] - jets[t + 1]).gradient for t in range(l - 1)], axis=1)
            T, _, parity = tangent_frames(G, dim)
            dlt = delta_c(tuple(range(l)), jets)
            sgn = orientation_sign(tuple(range(l)))
            norm = np.prod(np.linalg.norm(G, axis=-1), axis=-1)
            alphas = _unit_covectors(rng, (count, jet_count, p), dim)
            for c in range(count):
                f = wedge(dlt, positive_test_form(alphas[c], dim))
                dens = sgn * parity * evaluate_on_frame(f, T).real
                worst_jet = max(worst_jet, float(np.max(-dens / norm)))
    # delta^c_J ^ [E_J] on sampled strata of random 2- and 3-piece scenes
    for dim in (1, 2):
        for m in (2, 3):
            scene = random_scene(rng, dim, m)
            for J in itertools.chain.from_iterable(itertools.combinations(range(m), l) for l in range(2, min(m, dim + 1) + 1)):
                s = sample_stratum(scene, J, n_samples, seed)
                if s.empty:
                    continue
                idx = np.arange(min(len(s), max_nodes))
                P, T, par = s.points[idx], s.frames[idx], s.parity[idx]
                jets = scene.jets(J, P)
                dlt = delta_c(J, jets)
                p = dim - len(J) + 1
                _, G = residuals(scene, J, P)
                norm = np.prod(np.linalg.norm(G, axis=-1), axis=-1)
                alphas = _unit_covectors(rng, (count, len(idx), p), dim)
                for c in range(count):
                    f = wedge(dlt, positive_test_form(alphas[c], dim))
                    dens = s.sign * par * evaluate_on_frame(f, T).real
                    worst_scene = max(worst_scene, float(np.max(-dens / norm)))
                nodes += len(idx)
    checks = [
        Check("positivity-ddc", worst_ddc, 1e-12, count),
        Check("positivity-delta-c-jets", worst_jet, 1e-12, count),
        Check("positivity-delta-c-strata", worst_scene, 1e-12, count, {"nodes": nodes}),
    ]
    return SuiteReport("positivity", checks, time.perf_counter() - t0)


# -- boundary orientation ---------------------------------------------------------------------------------


def geometric_boundary_sign(G_J: np.ndarray, G_Jt: np.ndarray, outward: np.ndarray, J, Jt) -> int:
    """Orientation of ``E_Jt`` as part of the boundary of ``E_J`` (outward normal first), relative to ``[E_Jt]``.

    ``G_J``, ``G_Jt`` are defining-function gradients (k x 2dim) at a point of
    ``E_Jt``; ``outward`` is a vector leaving ``E_J`` through ``E_Jt``.
    """
    dim = G_J.shape[-1] // 2
    TJ, _, parJ = tangent_frames(G_J[None], dim)
    TJt, _, parJt = tangent_frames(G_Jt[None], dim)
    TJ, TJt = TJ[0], TJt[0]
    n = TJ @ outward  # coordinates in the E'_J frame
    n = TJ.T @ n
    n /= np.linalg.norm(n)
    M = np.concatenate([n[None], TJt], axis=0) @ TJ.T
    s = np.sign(np.linalg.det(M))
    return int(orientation_sign(J) * orientation_sign(Jt) * parJ[0] * parJt[0] * s)


def lemma4_pointwise(count: int = 200, seed: int = 0, dims=(1, 2, 3)) -> SuiteReport:
    """Compare the geometric boundary orientation with ``(-1)^k`` on random affine configurations."""
    t0 = time.perf_counter()
    rng = stratum_rng(seed, (), 51)
    mismatches, total = 0, 0
    for dim in dims:
        D = 2 * dim
        for _ in range(count):
            lt = int(rng.integers(2, min(D + 1, 4) + 1))
            grads = rng.standard_normal((lt, D))
            Jt = tuple(range(lt))
            s = int(rng.integers(lt))
            J = tuple(j for j in Jt if j != s)
            # at the origin every piece equals 0; E_J lies where u_s < u_J
            G_J = np.stack([grads[J[t]] - grads[J[t + 1]] for t in range(len(J) - 1)]) if len(J) > 1 else np.zeros((0, D))
            G_Jt = np.stack([grads[t] - grads[t + 1] for t in range(lt - 1)])
            outward = grads[s] - grads[J[0]]
            eps_geom = geometric_boundary_sign(G_J, G_Jt, outward, J, Jt)
            mismatches += int(eps_geom != boundary_sign(J, Jt).sign)
            total += 1
    return SuiteReport("lemma4", [Check("lemma4-orientation-mismatches", float(mismatches), 0.0, total)],
                       time.perf_counter() - t0)


# -- Monte-Carlo Stokes -----------------------------------------------------------------------------------


class _Weight:
    """``psi = box * (1 + a . x)`` with its gradient."""

    def __init__(self, box: SmoothBox, a):
        self.box = box
        self.a = np.asarray(a, dtype=float)

    def value(self, X):
        return self.box.value(X) * (1.0 + X @ self.a)

    def gradient(self, X):
        return self.box.gradient(X) * (1.0 + X @ self.a)[..., None] + self.box.value(X)[..., None] * self.a


def _const_form(dim: int, degree: int, coeffs: dict) -> DifferentialForm:
    """Real constant form ``sum c_I dx_I`` from real multi-indices."""
    out = DifferentialForm.zero(dim, degree)
    for idx, c in coeffs.items():
        out = out + c * wedge_all([real_covector(dim, r) for r in idx], dim)
    return out


def _integrate_form(scene: Scene, J, form_at, n: int, seed: int):
    s = sample_stratum(scene, J, n, seed)
    if s.empty:
        return 0.0, 0.0, 0
    vals = s.sign * s.parity * evaluate_on_frame(form_at(s.points), s.frames).real
    v, e = s.estimate(vals)
    return v, e, len(s)


def _scaled_form(weight: _Weight, eta, d_eta=None):
    """``omega = psi eta`` and ``d omega = d psi ^ eta + psi d eta`` for form fields ``eta(P)``."""

    def omega(P):
        return eta(P) * weight.value(P)

    def d_omega(P):
        dim = weight.box.dim
        g = weight.gradient(P)
        dpsi = sum((real_covector(dim, r) * g[..., r] for r in range(2 * dim)), DifferentialForm.zero(dim, 1))
        out = wedge(dpsi, eta(P))
        if d_eta is not None:
            out = out + d_eta(P) * weight.value(P)
        return out

    return omega, d_omega


def angular_form(dim: int, k: int, P) -> DifferentialForm:
    """``x_k dy_k - y_k dx_k``, which restricts to ``r^2 d theta_k``."""
    return real_covector(dim, 2 * k + 1) * P[..., 2 * k] - real_covector(dim, 2 * k) * P[..., 2 * k + 1]


def stokes_check(scene: Scene, J, omega, d_omega, n: int, seed: int = 0) -> dict:
    """``int_(E_J) d omega`` against ``sum_Jt eps int_(E_Jt) omega`` over the strata adjacent to E_J."""
    J = tuple(J)
    lhs, lhs_err, _ = _integrate_form(scene, J, d_omega, n, seed)
    rhs, rhs_var, parts = 0.0, 0.0, []
    for s in range(scene.m):
        if s in J:
            continue
        Jt = tuple(sorted(J + (s,)))
        v, e, cnt = _integrate_form(scene, Jt, omega, n, seed)
        eps = boundary_sign(J, Jt).sign
        rhs += eps * v
        rhs_var += e * e
        parts.append({"J": list(Jt), "sign": eps, "value": v, "stderr": e, "n_samples": cnt})
    rhs_err = math.sqrt(rhs_var)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    return {"J": list(J), "lhs": lhs, "lhs_stderr": lhs_err, "rhs": rhs, "rhs_stderr": rhs_err,
            "relative_residual": rel, "boundary": parts}


def tripod_scene() -> Scene:
    return Scene(1, [Constant(1, 0.0), RealAffine(1, [1.0, 0.0]), RealAffine(1, [0.0, 1.0])],
                 np.array([[-1.0, 1.0], [-1.0, 1.0]]), name="tripod")


def polydisc_scene() -> Scene:
    z1, z2 = HoloPoly(2, [([1, 0], 1.0)]), HoloPoly(2, [([0, 1], 1.0)])
    return Scene(2, [Constant(2, 0.0), LogSumSquares(2, [z1]), LogSumSquares(2, [z2])],
                 np.tile([-1.5, 1.5], (4, 1)), name="polydisc")


def _builtin_cases():
    tri = tripod_scene()
    box1 = SmoothBox(1, -0.35, 0.35, 0.3)
    w1 = _Weight(box1, [0.7, -0.4])
    const = lambda f: (lambda P: f)  # noqa: E731
    cases = [
        (tri, (0,), *_scaled_form(w1, const(_const_form(1, 1, {(0,): 0.6, (1,): 1.0})))),
        (tri, (1,), *_scaled_form(w1, const(_const_form(1, 1, {(0,): 0.3, (1,): -1.0})))),
        (tri, (0, 1), *_scaled_form(w1, const(DifferentialForm.scalar(1, 1.0)))),
    ]
    pd = polydisc_scene()
    box2 = SmoothBox(2, -1.05, 1.05, 0.3)
    w2 = _Weight(box2, [0.5, 0.2, -0.3, 0.4])
    vol1 = 2 * _const_form(2, 2, {(0, 1): 1.0})
    cases.append((pd, (0, 1), *_scaled_form(
        w2, lambda P: wedge(angular_form(2, 0, P), angular_form(2, 1, P)),
        lambda P: wedge(vol1, angular_form(2, 1, P)) - wedge(angular_form(2, 0, P), 2 * _const_form(2, 2, {(2, 3): 1.0})))))
    return cases


def _generic_cases(scene: Scene, seed: int):
    """Constant forms times a plateau well inside the domain, on every stratum with |J| <= 2."""
    rng = stratum_rng(seed, (), 53)
    lo, hi = scene.domain[:, 0], scene.domain[:, 1]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    w = _Weight(SmoothBox(scene.dim, mid - 0.4 * half, mid + 0.4 * half, float(np.min(0.4 * half))),
                0.3 * rng.standard_normal(2 * scene.dim) / half)
    D = 2 * scene.dim
    cases = []
    for J in itertools.chain(itertools.combinations(range(scene.m), 1), itertools.combinations(range(scene.m), 2)):
        deg = D - len(J)
        if deg < 0 or len(J) >= scene.m:
            continue
        coeffs = {idx: float(rng.standard_normal()) for idx in itertools.combinations(range(D), deg)}
        eta = _const_form(scene.dim, deg, coeffs)
        cases.append((scene, J, *_scaled_form(w, lambda P, f=eta: f)))
    return cases


def stokes(n: int = 1_000_000, seed: int = 0, scenes=None) -> SuiteReport:
    """Monte-Carlo Stokes on stratum boundaries, gated at 5% relative residual.

    ``scenes`` is None (the three-affine-pieces scene and the polydisc), or a
    list of scene names and :class:`Scene` objects; scenes other than the two
    built-in ones get generic constant test forms, and strata where both sides
    vanish within noise are skipped.
    """
    t0 = time.perf_counter()
    builtin = _builtin_cases()
    if scenes is None:
        cases = builtin
    else:
        cases = []
        for sc in scenes:
            name = sc if isinstance(sc, str) else sc.name
            match = [c for c in builtin if c[0].name == name]
            if match:
                cases.extend(match)
            elif isinstance(sc, Scene):
                cases.extend(_generic_cases(sc, seed))
            else:
                raise ValueError(f"no built-in Stokes scene named {name!r}")
    checks = []
    for scene, J, omega, d_omega in cases:
        r = stokes_check(scene, J, omega, d_omega, n, seed)
        size = max(abs(r["lhs"]), abs(r["rhs"]), 1e-300)
        noise = 3 * math.hypot(r["lhs_stderr"], r["rhs_stderr"]) / size
        if size <= 3 * math.hypot(r["lhs_stderr"], r["rhs_stderr"]):
            continue
        checks.append(Check(f"stokes-{scene.name or 'scene'}-J{'-'.join(map(str, J))}", r["relative_residual"], 0.05,
                            n, {**r, "relative_noise": noise}))
    if not checks:
        checks.append(Check("stokes-no-informative-stratum", math.inf, 0.05, n))
    return SuiteReport("stokes", checks, time.perf_counter() - t0)


def lemma4(count: int = 200, seed: int = 0, scenes=None, n: int = 1_000_000) -> SuiteReport:
    """Boundary orientation signs; with ``scenes``, also the Monte-Carlo Stokes identity on them."""
    rep = lemma4_pointwise(count, seed)
    if scenes:
        st = stokes(n, seed, scenes)
        rep = SuiteReport("lemma4", rep.checks + st.checks, rep.seconds + st.seconds)
    return rep


SUITES = {
    "lemma2": lemma2,
    "lemma3": lemma3,
    "lemma4": lemma4,
    "positivity": positivity,
    "stokes": stokes,
}
