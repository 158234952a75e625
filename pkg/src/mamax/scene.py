"""Competing smooth functions, their max envelope, and polynomial polyhedra.

Points are real arrays of shape ``(..., 2 dim)`` in interleaved
``(x_1, y_1, x_2, y_2, ...)`` order.  Piece indices are 0-based.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .forms import DerivativeJet, complex_hessians_from_real

TAU_ACT = 1e-9
POLE_EPS = 1e-300
POLE_DISCARD = 1e-12


class PoleError(ValueError):
    """A log-sum-squares piece was evaluated on its -infinity locus."""


class SceneFormatError(ValueError):
    """Malformed scene or polyhedron file; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def to_complex(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[..., 0::2] + 1j * X[..., 1::2]


def from_complex(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    X = np.empty(Z.shape[:-1] + (2 * Z.shape[-1],))
    X[..., 0::2] = Z.real
    X[..., 1::2] = Z.imag
    return X


# -- holomorphic polynomials ---------------------------------------------------------


class HoloPoly:
    """Polynomial in z_1..z_dim with complex coefficients, keyed by multi-index."""

    def __init__(self, dim: int, terms):
        self.dim = dim
        acc: dict[tuple[int, ...], complex] = {}
        for mi, c in (terms.items() if isinstance(terms, dict) else terms):
            mi = tuple(int(a) for a in mi)
            if len(mi) != dim or any(a < 0 for a in mi):
                raise ValueError(f"bad multi-index {mi} for dim {dim}")
            acc[mi] = acc.get(mi, 0) + complex(c)
        self.terms = {mi: c for mi, c in acc.items() if c != 0}

    @property
    def degree(self) -> int:
        return max((sum(mi) for mi in self.terms), default=0)

    def leading(self) -> "HoloPoly":
        d = self.degree
        return HoloPoly(self.dim, {mi: c for mi, c in self.terms.items() if sum(mi) == d})

    @staticmethod
    def _mono(Z, mi):
        out = np.ones(Z.shape[:-1], dtype=complex)
        for k, a in enumerate(mi):
            if a:
                out = out * Z[..., k] ** a
        return out

    def value(self, Z) -> np.ndarray:
        out = np.zeros(Z.shape[:-1], dtype=complex)
        for mi, c in self.terms.items():
            out = out + c * self._mono(Z, mi)
        return out

    def grad(self, Z) -> np.ndarray:
        out = np.zeros(Z.shape, dtype=complex)
        for mi, c in self.terms.items():
            for k, a in enumerate(mi):
                if a:
                    lower = list(mi)
                    lower[k] -= 1
                    out[..., k] += c * a * self._mono(Z, lower)
        return out

    def hess(self, Z) -> np.ndarray:
        n = self.dim
        out = np.zeros(Z.shape + (n,), dtype=complex)
        for mi, c in self.terms.items():
            for k in range(n):
                for l in range(n):
                    lower = list(mi)
                    f = lower[k]
                    lower[k] -= 1
                    f2 = lower[l]
                    lower[l] -= 1
                    if f > 0 and f2 > 0:
                        out[..., k, l] += c * f * f2 * self._mono(Z, lower)
        return out

    def to_list(self):
        return [[list(mi), float(np.real(c)), float(np.imag(c))] for mi, c in sorted(self.terms.items())]

    @classmethod
    def from_list(cls, dim: int, data, where: str = "polynomial") -> "HoloPoly":
        try:
            return cls(dim, [(t[0], complex(float(t[1]), float(t[2]) if len(t) > 2 else 0.0)) for t in data])
        except (TypeError, ValueError, IndexError) as exc:
            raise SceneFormatError(where, f"expected [[multi-index, re, im], ...] ({exc})") from None


# -- pieces ------------------------------------------------------------------------------


class SmoothPiece:
    """One competing function u_j with closed-form jets."""

    kind = "abstract"
    dim: int

    def value(self, X) -> np.ndarray:
        raise NotImplementedError

    def jet(self, X, allow_poles: bool = False) -> DerivativeJet:
        raise NotImplementedError

    def scaled(self, c: float) -> "SmoothPiece":
        raise NotImplementedError

    def pole_mask(self, X, tol: float = POLE_DISCARD) -> np.ndarray:
        return np.zeros(np.shape(X)[:-1], dtype=bool)

    def is_psh(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _zeros(self, X):
        shape = np.shape(X)[:-1]
        n = self.dim
        return (np.zeros(shape), np.zeros(shape + (n,), complex),
                np.zeros(shape + (n, n), complex), np.zeros(shape + (n, n), complex))


@dataclass
class Constant(SmoothPiece):
    dim: int
    constant: float = 0.0
    kind = "constant"

    def value(self, X):
        return np.full(np.shape(X)[:-1], float(self.constant))

    def jet(self, X, allow_poles=False):
        v, g, h, p = self._zeros(X)
        return DerivativeJet(v + self.constant, g, h, p)

    def scaled(self, c):
        return Constant(self.dim, c * self.constant)

    def to_dict(self):
        return {"kind": self.kind, "constant": self.constant}


@dataclass
class RealQuadratic(SmoothPiece):
    """``u = x.Q.x / 2 + b.x + c`` in real coordinates (``Q`` symmetric)."""

    dim: int
    matrix: np.ndarray
    gradient: np.ndarray
    constant: float = 0.0
    kind = "real-quadratic"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float).reshape(2 * self.dim, 2 * self.dim)
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        self.gradient = np.asarray(self.gradient, dtype=float).reshape(2 * self.dim)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", X, self.matrix, X) + X @ self.gradient + self.constant

    def jet(self, X, allow_poles=False):
        X = np.asarray(X, dtype=float)
        g = X @ self.matrix + self.gradient
        R = np.broadcast_to(self.matrix, X.shape[:-1] + self.matrix.shape)
        return DerivativeJet.from_real(self.value(X), g, R)

    def scaled(self, c):
        return RealQuadratic(self.dim, c * self.matrix, c * self.gradient, c * self.constant)

    def is_psh(self):
        H, _ = complex_hessians_from_real(self.matrix)
        return bool(np.min(np.linalg.eigvalsh(H)) >= -1e-12)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist(), "gradient": self.gradient.tolist(),
                "constant": self.constant}


class RealAffine(RealQuadratic):
    kind = "real-affine"

    def __init__(self, dim: int, gradient, constant: float = 0.0):
        super().__init__(dim, np.zeros((2 * dim, 2 * dim)), gradient, constant)

    def scaled(self, c):
        return RealAffine(self.dim, c * self.gradient, c * self.constant)

    def to_dict(self):
        return {"kind": self.kind, "gradient": self.gradient.tolist(), "constant": self.constant}


@dataclass
class ReHolomorphic(SmoothPiece):
    """``u = Re p(z)``: pluriharmonic."""

    dim: int
    poly: HoloPoly
    kind = "re-holomorphic-polynomial"

    def value(self, X):
        return self.poly.value(to_complex(X)).real

    def jet(self, X, allow_poles=False):
        Z = to_complex(X)
        v, _, h, _ = self._zeros(X)
        return DerivativeJet(self.poly.value(Z).real, 0.5 * self.poly.grad(Z), h, 0.5 * self.poly.hess(Z))

    def scaled(self, c):
        return ReHolomorphic(self.dim, HoloPoly(self.dim, {mi: c * a for mi, a in self.poly.terms.items()}))

    def to_dict(self):
        return {"kind": self.kind, "coefficients": self.poly.to_list()}


@dataclass
class HermitianQuadratic(SmoothPiece):
    """``u = sum_kl A_kl z_k zbar_l`` with ``A`` Hermitian, so ``d^2u/dz_k dzbar_l = A_kl``."""

    dim: int
    matrix: np.ndarray
    kind = "hermitian-quadratic"

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=complex).reshape(self.dim, self.dim)
        if np.max(np.abs(A - A.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
            raise ValueError("hermitian-quadratic matrix is not Hermitian")
        self.matrix = 0.5 * (A + A.conj().T)

    def value(self, X):
        Z = to_complex(X)
        return np.einsum("...k,kl,...l->...", Z, self.matrix, Z.conj()).real

    def jet(self, X, allow_poles=False):
        Z = to_complex(X)
        v, _, _, p = self._zeros(X)
        dzv = Z.conj() @ self.matrix.T
        h = np.broadcast_to(self.matrix, v.shape + self.matrix.shape)
        return DerivativeJet(self.value(X), dzv, h, p)

    def scaled(self, c):
        return HermitianQuadratic(self.dim, c * self.matrix)

    def is_psh(self):
        return bool(np.min(np.linalg.eigvalsh(self.matrix)) >= -1e-12)

    def to_dict(self):
        return {"kind": self.kind, "matrix": [[[float(a.real), float(a.imag)] for a in row] for row in self.matrix]}


@dataclass
class LogSumSquares(SmoothPiece):
    """``u = scale * log sum_i |p_i|^2``; the default scale is ``1 / (2 deg)``."""

    dim: int
    polys: list
    scale: float | None = None
    kind = "log-sum-squares"

    def __post_init__(self):
        if not self.polys:
            raise ValueError("log-sum-squares needs at least one polynomial")
        if self.scale is None:
            deg = max(p.degree for p in self.polys)
            if deg == 0:
                raise ValueError("log-sum-squares of constants needs an explicit scale")
            self.scale = 1.0 / (2 * deg)

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.polys)

    @property
    def n_polys(self) -> int:
        return len(self.polys)

    def sum_squares(self, X) -> np.ndarray:
        Z = to_complex(X)
        return sum(np.abs(p.value(Z)) ** 2 for p in self.polys)

    def pole_mask(self, X, tol=POLE_DISCARD):
        return self.sum_squares(X) < tol

    def value(self, X):
        S = self.sum_squares(X)
        with np.errstate(divide="ignore"):
            return np.where(S < POLE_EPS, -np.inf, self.scale * np.log(np.maximum(S, POLE_EPS)))

    def jet(self, X, allow_poles=False):
        Z = to_complex(X)
        vals = [p.value(Z) for p in self.polys]
        grads = [p.grad(Z) for p in self.polys]
        S = sum(np.abs(v) ** 2 for v in vals)
        pole = S < POLE_EPS
        if np.any(pole) and not allow_poles:
            raise PoleError("log-sum-squares evaluated where sum |p_i|^2 vanishes")
        Ss = np.where(pole, 1.0, S)
        # dS/dz_k, d^2S/dz_k dzbar_l, d^2S/dz_k dz_l
        Sk = sum(g * v.conj()[..., None] for g, v in zip(grads, vals))
        Spure = sum(p.hess(Z) * v.conj()[..., None, None] for p, v in zip(self.polys, vals))
        s = self.scale
        dzv = s * Sk / Ss[..., None]
        # Lagrange identity: S sum g g* - Sk Sk* = sum_(i<j) w w*, w = v_j g_i - v_i g_j (no cancellation)
        M = np.zeros(Sk.shape + Sk.shape[-1:], dtype=complex)
        for i, j in itertools.combinations(range(len(vals)), 2):
            w = vals[j][..., None] * grads[i] - vals[i][..., None] * grads[j]
            M = M + w[..., :, None] * w.conj()[..., None, :]
        hess = s * M / (Ss ** 2)[..., None, None]
        # d/dz_l of dS/dz_k = sum p_i,kl conj(p_i)
        pure = s * (Spure / Ss[..., None, None] - Sk[..., :, None] * Sk[..., None, :] / (Ss ** 2)[..., None, None])
        value = np.where(pole, -np.inf, s * np.log(Ss))
        if np.any(pole):
            dzv[pole] = 0
            hess[pole] = 0
            pure[pole] = 0
        return DerivativeJet(value, dzv, hess, pure)

    def scaled(self, c):
        return LogSumSquares(self.dim, self.polys, c * self.scale)

    def is_psh(self):
        return self.scale >= 0

    def to_dict(self):
        return {"kind": self.kind, "polynomials": [p.to_list() for p in self.polys], "scale": self.scale}


@dataclass
class SmoothMax(SmoothPiece):
    """``eps * log sum_j exp((u_j + offset_j) / eps)`` with analytically composed jets."""

    dim: int
    pieces: list
    eps: float
    offsets: np.ndarray | None = None
    kind = "smooth-max"

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("smoothing parameter must be positive")
        m = len(self.pieces)
        self.offsets = np.zeros(m) if self.offsets is None else np.asarray(self.offsets, dtype=float)

    def _weights(self, vals):
        top = np.max(vals, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore"):
            e = np.exp((vals - top) / self.eps)
        e = np.where(np.isfinite(vals), e, 0.0)
        tot = np.sum(e, axis=-1, keepdims=True)
        return e / tot, top[..., 0] + self.eps * np.log(tot[..., 0])

    def value(self, X):
        vals = np.stack([p.value(X) + o for p, o in zip(self.pieces, self.offsets)], axis=-1)
        return self._weights(vals)[1]

    def jet(self, X, allow_poles=False):
        jets = [p.jet(X, allow_poles=True) for p in self.pieces]
        vals = np.stack([j.value + o for j, o in zip(jets, self.offsets)], axis=-1)
        if not allow_poles and np.any(np.all(~np.isfinite(vals), axis=-1)):
            raise PoleError("every piece of the smoothed max is on its pole set")
        w, value = self._weights(vals)
        A = np.stack([j.dz for j in jets], axis=-2)  # (..., m, dim)
        mean = np.einsum("...j,...jk->...k", w, A)
        hess = sum(w[..., j, None, None] * jets[j].hess for j in range(len(jets)))
        cov = np.einsum("...j,...jk,...jl->...kl", w, A, A.conj()) - mean[..., :, None] * mean.conj()[..., None, :]
        pure = None
        if all(j.dzdz is not None for j in jets):
            pure = sum(w[..., j, None, None] * jets[j].dzdz for j in range(len(jets)))
            pure = pure + (np.einsum("...j,...jk,...jl->...kl", w, A, A) - mean[..., :, None] * mean[..., None, :]) / self.eps
        return DerivativeJet(value, mean, hess + cov / self.eps, pure)

    def pole_mask(self, X, tol=POLE_DISCARD):
        masks = [p.pole_mask(X, tol) for p in self.pieces]
        return np.logical_and.reduce(masks)

    def scaled(self, c):
        return SmoothMax(self.dim, [p.scaled(c) for p in self.pieces], c * self.eps, c * self.offsets)

    def is_psh(self):
        return all(p.is_psh() for p in self.pieces)

    def to_dict(self):
        return {"kind": self.kind, "eps": self.eps, "pieces": [p.to_dict() for p in self.pieces],
                "offsets": self.offsets.tolist()}


# -- scene ----------------------------------------------------------------------------------


@dataclass
class Scene:
    """The envelope ``u = max_j (u_j + offset_j)`` over a box in R^(2 dim)."""

    dim: int
    pieces: list
    domain: np.ndarray
    offsets: np.ndarray | None = None
    tau_act: float = TAU_ACT
    polyhedron: "PolyhedronSpec | None" = None
    name: str = ""

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("scene needs at least one piece")
        for p in self.pieces:
            if p.dim != self.dim:
                raise ValueError(f"piece dimension {p.dim} differs from scene dimension {self.dim}")
        self.domain = np.asarray(self.domain, dtype=float).reshape(2 * self.dim, 2)
        if np.any(self.domain[:, 1] <= self.domain[:, 0]):
            raise ValueError("domain box is degenerate")
        m = len(self.pieces)
        self.offsets = np.zeros(m) if self.offsets is None else np.asarray(self.offsets, dtype=float).reshape(m)

    @property
    def m(self) -> int:
        return len(self.pieces)

    @property
    def volume(self) -> float:
        return float(np.prod(self.domain[:, 1] - self.domain[:, 0]))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.domain[:, 1] - self.domain[:, 0]))

    def contains(self, X) -> np.ndarray:
        X = np.asarray(X)
        return np.all((X >= self.domain[:, 0]) & (X <= self.domain[:, 1]), axis=-1)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        return lo + (hi - lo) * rng.random((n, 2 * self.dim))

    def values(self, X) -> np.ndarray:
        return np.stack([p.value(X) + o for p, o in zip(self.pieces, self.offsets)], axis=-1)

    def jet(self, j: int, X, allow_poles: bool = False) -> DerivativeJet:
        jet = self.pieces[j].jet(X, allow_poles=allow_poles)
        jet.value = jet.value + self.offsets[j]
        return jet

    def jets(self, J: Sequence[int], X, allow_poles: bool = False) -> list[DerivativeJet]:
        return [self.jet(j, X, allow_poles) for j in J]

    def active(self, X, values=None) -> tuple[np.ndarray, np.ndarray]:
        """Envelope value and the boolean activity matrix of shape (..., m)."""
        vals = self.values(X) if values is None else values
        u = np.max(vals, axis=-1)
        with np.errstate(invalid="ignore"):
            act = (u[..., None] - vals) <= self.tau_act * (1.0 + np.abs(u[..., None]))
        return u, act & np.isfinite(vals)

    def envelope(self, X) -> np.ndarray:
        return np.max(self.values(X), axis=-1)

    def envelope_value(self, point) -> tuple[float, tuple[int, ...]]:
        point = np.asarray(point, dtype=float)
        if np.any(self.pole_mask(point[None], POLE_EPS)):
            raise PoleError("envelope evaluated on a pole of a log-sum-squares piece")
        u, act = self.active(point[None])
        return float(u[0]), tuple(int(j) for j in np.flatnonzero(act[0]))

    def pole_mask(self, X, tol: float = POLE_DISCARD) -> np.ndarray:
        out = np.zeros(np.shape(X)[:-1], dtype=bool)
        for p in self.pieces:
            out |= p.pole_mask(X, tol)
        return out

    def in_K(self, X, tol: float = 1e-9) -> np.ndarray:
        if self.polyhedron is None:
            raise ValueError("scene has no attached polyhedron")
        return self.polyhedron.in_K(X, tol)

    def value_scale(self, n: int = 4096, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        X = self.uniform(rng, n)
        u = self.envelope(X)
        u = u[np.isfinite(u)]
        span = float(np.max(u) - np.min(u)) if u.size else 1.0
        return span if span > 0 else 1.0

    def scaled(self, c: float) -> "Scene":
        return Scene(self.dim, [p.scaled(c) for p in self.pieces], self.domain, c * self.offsets,
                     self.tau_act, self.polyhedron, self.name)

    def with_offsets(self, offsets) -> "Scene":
        return Scene(self.dim, list(self.pieces), self.domain, offsets, self.tau_act, self.polyhedron, self.name)

    def is_psh(self) -> bool:
        return all(p.is_psh() for p in self.pieces)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "pieces": [p.to_dict() for p in self.pieces],
            "domain": self.domain.tolist(),
            "offsets": self.offsets.tolist(),
        }


def smooth_max(scene: Scene, epsilon: float) -> SmoothPiece:
    """Log-sum-exp regularization of the envelope; ``m = 1`` returns the piece itself."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if scene.m == 1 and scene.offsets[0] == 0:
        return scene.pieces[0]
    return SmoothMax(scene.dim, list(scene.pieces), float(epsilon), scene.offsets.copy())


# -- polynomial polyhedra ---------------------------------------------------------------------


@dataclass
class PolyhedronSpec:
    """Families of polynomials ``p_(a,1..N_a)``; ``K = {max_a sum_i |p_(a,i)|^2 <= 1}``."""

    dim: int
    families: list
    growth_constant: float | None = None
    domain: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if not self.families or any(len(f) == 0 for f in self.families):
            raise ValueError("every family must be nonempty")
        if self.domain is None:
            self.domain = np.tile([-1.5, 1.5], (2 * self.dim, 1))
        self.domain = np.asarray(self.domain, dtype=float).reshape(2 * self.dim, 2)

    @property
    def N(self) -> list[int]:
        return [len(f) for f in self.families]

    @property
    def degrees(self) -> list[int]:
        return [max(p.degree for p in f) for f in self.families]

    def sum_squares(self, X) -> np.ndarray:
        Z = to_complex(X)
        return np.stack([sum(np.abs(p.value(Z)) ** 2 for p in f) for f in self.families], axis=-1)

    def in_K(self, X, tol: float = 1e-9) -> np.ndarray:
        return np.max(self.sum_squares(X), axis=-1) <= 1.0 + tol

    def to_dict(self) -> dict:
        out = {"dim": self.dim, "families": [[p.to_list() for p in f] for f in self.families],
               "domain": self.domain.tolist()}
        if self.growth_constant is not None:
            out["growth_constant"] = self.growth_constant
        return out


def green_candidate(spec: PolyhedronSpec) -> Scene:
    """``u = max(0, u_1, ..., u_A)`` with ``u_a = log(sum |p_(a,i)|^2) / (2 deg_a)``."""
    pieces = [Constant(spec.dim, 0.0)] + [LogSumSquares(spec.dim, list(f)) for f in spec.families]
    return Scene(spec.dim, pieces, spec.domain, polyhedron=spec, name=spec.name or "green")


def _leading_envelope(spec: PolyhedronSpec, Z) -> np.ndarray:
    """``max_a (sum_i |leading(p_(a,i))|^2)^(1/(2 deg_a))`` restricted to top-degree families."""
    out = np.zeros(Z.shape[:-1])
    for fam, deg in zip(spec.families, spec.degrees):
        lead = [p.leading() for p in fam if p.degree == deg]
        s = sum(np.abs(p.value(Z)) ** 2 for p in lead)
        out = np.maximum(out, s ** (1.0 / (2 * deg)))
    return out


def growth_report(spec: PolyhedronSpec, n: int = 20000, seed: int = 0) -> dict:
    """Check ``u >= log+|z| - C`` for the Green candidate of ``spec``.

    Samples ``u - log|z|`` on radii in [10, 1e3] and minimizes the leading
    homogeneous envelope over the unit sphere; the latter decides boundedness.
    """
    rng = np.random.default_rng(seed)
    scene = green_candidate(spec)
    dirs = rng.standard_normal((n, 2 * spec.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 10.0 ** rng.uniform(1.0, 3.0, n)
    X = dirs * radii[:, None]
    diff = scene.envelope(X) - np.log(radii)
    lead = _leading_envelope(spec, to_complex(dirs))
    best = int(np.argmin(lead))

    def objective(v):
        v = v / np.linalg.norm(v)
        return float(_leading_envelope(spec, to_complex(v[None]))[0])

    res = minimize(objective, dirs[best], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    lead_min = min(float(lead[best]), float(res.fun))
    bounded = lead_min > 1e-6
    c_est = float(-np.min(diff))
    if bounded:
        c_est = max(c_est, -math.log(lead_min))
    ok = bounded and (spec.growth_constant is None or float(np.min(diff)) >= -spec.growth_constant)
    return {"min_sampled": float(np.min(diff)), "max_sampled": float(np.max(diff)), "leading_min": lead_min,
            "bounded": bool(bounded), "C_estimate": c_est if bounded else math.inf, "ok": bool(ok)}


# -- JSON ---------------------------------------------------------------------------------------


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise SceneFormatError(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _float_list(v, n: int | None, where: str) -> list[float]:
    try:
        out = [float(a) for a in v]
    except (TypeError, ValueError):
        raise SceneFormatError(where, "expected a list of numbers") from None
    if n is not None and len(out) != n:
        raise SceneFormatError(where, f"expected {n} entries, got {len(out)}")
    return out


def _domain(d, dim: int, where: str) -> np.ndarray:
    try:
        box = np.asarray(d, dtype=float)
    except (TypeError, ValueError):
        raise SceneFormatError(where, "expected per-axis [min, max] pairs") from None
    if box.shape != (2 * dim, 2):
        raise SceneFormatError(where, f"expected {2 * dim} [min, max] pairs")
    if np.any(box[:, 1] <= box[:, 0]):
        raise SceneFormatError(where, "each axis needs min < max")
    return box


def piece_from_dict(d: dict, dim: int, where: str = "pieces[0]") -> SmoothPiece:
    kind = _req(d, "kind", where)
    try:
        if kind == "constant":
            return Constant(dim, float(d.get("constant", d.get("value", 0.0))))
        if kind == "real-affine":
            return RealAffine(dim, _float_list(_req(d, "gradient", where), 2 * dim, f"{where}.gradient"),
                              float(d.get("constant", 0.0)))
        if kind == "real-quadratic":
            Q = np.asarray(_req(d, "matrix", where), dtype=float)
            if Q.shape != (2 * dim, 2 * dim):
                raise SceneFormatError(f"{where}.matrix", f"expected a {2 * dim}x{2 * dim} matrix")
            g = d.get("gradient", [0.0] * 2 * dim)
            return RealQuadratic(dim, Q, _float_list(g, 2 * dim, f"{where}.gradient"), float(d.get("constant", 0.0)))
        if kind == "re-holomorphic-polynomial":
            return ReHolomorphic(dim, HoloPoly.from_list(dim, _req(d, "coefficients", where), f"{where}.coefficients"))
        if kind == "hermitian-quadratic":
            M = np.asarray(_req(d, "matrix", where), dtype=float)
            if M.shape != (dim, dim, 2):
                raise SceneFormatError(f"{where}.matrix", f"expected {dim}x{dim} entries of [re, im]")
            return HermitianQuadratic(dim, M[..., 0] + 1j * M[..., 1])
        if kind == "log-sum-squares":
            polys = _req(d, "polynomials", where)
            if not isinstance(polys, list) or not polys:
                raise SceneFormatError(f"{where}.polynomials", "expected a nonempty list")
            plist = [HoloPoly.from_list(dim, p, f"{where}.polynomials[{i}]") for i, p in enumerate(polys)]
            scale = d.get("scale")
            return LogSumSquares(dim, plist, None if scale is None else float(scale))
    except SceneFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise SceneFormatError(where, str(exc)) from None
    raise SceneFormatError(f"{where}.kind", f"unknown piece kind {kind!r}")


def scene_from_dict(d: dict) -> Scene:
    dim = _req(d, "dim", "")
    if not isinstance(dim, int) or dim < 1:
        raise SceneFormatError("dim", "expected a positive integer")
    pieces = _req(d, "pieces", "")
    if not isinstance(pieces, list) or not pieces:
        raise SceneFormatError("pieces", "expected a nonempty list")
    plist = [piece_from_dict(p, dim, f"pieces[{i}]") for i, p in enumerate(pieces)]
    domain = _domain(_req(d, "domain", ""), dim, "domain")
    offsets = d.get("offsets")
    if offsets is not None:
        offsets = _float_list(offsets, len(plist), "offsets")
    return Scene(dim, plist, domain, offsets, float(d.get("tau_act", TAU_ACT)), name=str(d.get("name", "")))


def polyhedron_from_dict(d: dict) -> PolyhedronSpec:
    dim = _req(d, "dim", "")
    if not isinstance(dim, int) or dim < 1:
        raise SceneFormatError("dim", "expected a positive integer")
    fams = _req(d, "families", "")
    if not isinstance(fams, list) or not fams:
        raise SceneFormatError("families", "expected a nonempty list")
    families = []
    for a, fam in enumerate(fams):
        if not isinstance(fam, list) or not fam:
            raise SceneFormatError(f"families[{a}]", "expected a nonempty list of polynomials")
        families.append([HoloPoly.from_list(dim, p, f"families[{a}][{i}]") for i, p in enumerate(fam)])
    domain = _domain(d["domain"], dim, "domain") if "domain" in d else None
    c = d.get("growth_constant")
    return PolyhedronSpec(dim, families, None if c is None else float(c), domain, str(d.get("name", "")))


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"line {exc.lineno}", exc.msg) from None


def load_scene(path) -> Scene:
    return scene_from_dict(_load_json(path))


def load_polyhedron(path) -> PolyhedronSpec:
    return polyhedron_from_dict(_load_json(path))


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=lambda o: repr(o))
