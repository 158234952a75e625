"""Pointwise exterior algebra on C^dim.

Forms are stored in the complexified basis ``dz_1..dz_dim, dzbar_1..dzbar_dim``
(basis index ``k`` for ``dz_{k+1}`` and ``dim + k`` for ``dzbar_{k+1}``), keyed
by ascending index tuples.  Coefficients are complex scalars or numpy arrays
sharing a common batch shape, so one ``DifferentialForm`` can hold the value
of a form at many points at once.

Real coordinates are interleaved: a point of C^dim is the real vector
``(x_1, y_1, x_2, y_2, ...)`` with ``z_k = x_k + i y_k``.

Conventions: ``d^c = i(dbar - d)`` and ``dd^c = 2i d dbar``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

PRUNE_EPS = 1e-14
HERMITIAN_TOL = 1e-12


def _sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``idx`` (0 if an index repeats)."""
    if len(set(idx)) != len(idx):
        return 0, ()
    inv = sum(1 for a, b in itertools.combinations(idx, 2) if a > b)
    return (-1) ** inv, tuple(sorted(idx))


@lru_cache(maxsize=None)
def _merge(ka: tuple[int, ...], kb: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    return _sort_sign(ka + kb)


def _max_abs(c) -> float:
    return float(np.max(np.abs(c))) if np.ndim(c) else abs(c)


class DifferentialForm:
    """Homogeneous form of a fixed degree at one point (or a batch of points).

    Parameters
    ----------
    dim : int
        Complex dimension.
    degree : int
        Total degree.
    terms : mapping, optional
        Index tuple -> coefficient.  Unsorted keys are normalized with the
        permutation sign; keys with a repeated index are dropped.
    eps : float
        Terms whose coefficients are all below ``eps`` in modulus are pruned.
    """

    __array_priority__ = 100

    def __init__(self, dim: int, degree: int, terms=None, eps: float = PRUNE_EPS):
        self.dim = int(dim)
        self.degree = int(degree)
        self.eps = eps
        self.terms: dict[tuple[int, ...], object] = {}
        for key, c in (terms or {}).items():
            key = tuple(int(i) for i in key)
            if len(key) != degree:
                raise ValueError(f"term {key} has length {len(key)}, expected degree {degree}")
            if any(i < 0 or i >= 2 * dim for i in key):
                raise ValueError(f"basis index out of range in {key}")
            sign, skey = _sort_sign(key)
            if sign == 0:
                continue
            self._accumulate(skey, sign * c)
        self._prune()

    # -- construction helpers ------------------------------------------------

    @classmethod
    def _raw(cls, dim, degree, terms, eps=PRUNE_EPS):
        f = cls.__new__(cls)
        f.dim, f.degree, f.eps, f.terms = dim, degree, eps, terms
        f._prune()
        return f

    def _accumulate(self, key, c):
        if key in self.terms:
            self.terms[key] = self.terms[key] + c
        else:
            self.terms[key] = c

    def _prune(self):
        if self.degree > 2 * self.dim:
            self.terms = {}
            return
        self.terms = {k: c for k, c in self.terms.items() if _max_abs(c) >= self.eps}

    @classmethod
    def zero(cls, dim: int, degree: int) -> "DifferentialForm":
        return cls._raw(dim, degree, {})

    @classmethod
    def scalar(cls, dim: int, value=1.0) -> "DifferentialForm":
        return cls._raw(dim, 0, {(): value})

    @classmethod
    def basis(cls, dim: int, index: int) -> "DifferentialForm":
        return cls(dim, 1, {(index,): 1.0})

    # -- inspection ----------------------------------------------------------

    @property
    def batch_shape(self) -> tuple[int, ...]:
        shapes = [np.shape(c) for c in self.terms.values()]
        return np.broadcast_shapes(*shapes) if shapes else ()

    def coefficient(self, key: Sequence[int]):
        sign, skey = _sort_sign(tuple(key))
        if sign == 0:
            return 0.0
        return sign * self.terms.get(skey, 0.0)

    def max_abs(self) -> float:
        return max((_max_abs(c) for c in self.terms.values()), default=0.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def __repr__(self):
        names = [f"dz{k + 1}" for k in range(self.dim)] + [f"dzb{k + 1}" for k in range(self.dim)]
        parts = []
        for key in sorted(self.terms):
            c = self.terms[key]
            label = "^".join(names[i] for i in key) or "1"
            cs = f"{c:.6g}" if np.ndim(c) == 0 else f"<array{np.shape(c)}>"
            parts.append(f"({cs}) {label}")
        body = " + ".join(parts) if parts else "0"
        return f"DifferentialForm(dim={self.dim}, degree={self.degree}: {body})"

    # -- linear structure ----------------------------------------------------

    def _check(self, other: "DifferentialForm"):
        if not isinstance(other, DifferentialForm):
            raise TypeError(f"expected DifferentialForm, got {type(other).__name__}")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)) and other == 0:
            return self
        self._check(other)
        if other.degree != self.degree:
            raise ValueError(f"cannot add forms of degree {self.degree} and {other.degree}")
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms[k] + c if k in terms else c
        return DifferentialForm._raw(self.dim, self.degree, terms, self.eps)

    __radd__ = __add__

    def __neg__(self):
        return DifferentialForm._raw(self.dim, self.degree, {k: -c for k, c in self.terms.items()}, self.eps)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        if isinstance(s, DifferentialForm):
            return wedge(self, s)
        if np.ndim(s):
            s = np.asarray(s)
        return DifferentialForm._raw(self.dim, self.degree, {k: c * s for k, c in self.terms.items()}, self.eps)

    def __rmul__(self, s):
        return self.__mul__(s)

    def __truediv__(self, s):
        return self * (1.0 / np.asarray(s) if np.ndim(s) else 1.0 / s)

    def __xor__(self, other):
        return wedge(self, other)

    # -- structure -----------------------------------------------------------

    def conj_bar(self) -> "DifferentialForm":
        """Complex conjugation: conjugate coefficients and swap dz <-> dzbar."""
        n = self.dim
        swap = lambda i: i + n if i < n else i - n  # noqa: E731
        out = DifferentialForm.zero(n, self.degree)
        for key, c in self.terms.items():
            sign, skey = _sort_sign(tuple(swap(i) for i in key))
            out._accumulate(skey, sign * np.conj(c))
        out._prune()
        return out

    def is_real(self, rtol: float = 1e-12) -> bool:
        scale = max(self.max_abs(), 1e-300)
        return (self - self.conj_bar()).max_abs() <= rtol * scale

    def bidegree(self, key: Sequence[int]) -> tuple[int, int]:
        p = sum(1 for i in key if i < self.dim)
        return p, len(key) - p

    def allclose(self, other: "DifferentialForm", rtol: float = 1e-10, atol: float = 0.0) -> bool:
        self._check(other)
        if self.degree != other.degree:
            return False
        scale = max(self.max_abs(), other.max_abs())
        return residual(self, other) <= atol + rtol * scale

    def evaluate(self, frame) -> np.ndarray:
        return evaluate_on_frame(self, frame)


def residual(a: DifferentialForm, b: DifferentialForm) -> float:
    """Largest coefficient modulus of ``a - b``."""
    keys = set(a.terms) | set(b.terms)
    return max((_max_abs(np.asarray(a.terms.get(k, 0.0)) - b.terms.get(k, 0.0)) for k in keys), default=0.0)


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """Exterior product ``a ^ b``; coefficients broadcast over batch axes."""
    a._check(b)
    dim, deg = a.dim, a.degree + b.degree
    if deg > 2 * dim:
        return DifferentialForm.zero(dim, deg)
    out: dict[tuple[int, ...], object] = {}
    for ka, ca in a.terms.items():
        for kb, cb in b.terms.items():
            sign, key = _merge(ka, kb)
            if sign == 0:
                continue
            c = ca * cb if sign > 0 else -(ca * cb)
            out[key] = out[key] + c if key in out else c
    return DifferentialForm._raw(dim, deg, out, a.eps)


def wedge_all(forms: Iterable[DifferentialForm], dim: int) -> DifferentialForm:
    out = DifferentialForm.scalar(dim, 1.0)
    for f in forms:
        out = wedge(out, f)
    return out


def power(f: DifferentialForm, k: int) -> DifferentialForm:
    if k < 0:
        raise ValueError("negative exterior power")
    out = DifferentialForm.scalar(f.dim, 1.0)
    for _ in range(k):
        out = wedge(out, f)
    return out


# -- real coordinate covectors --------------------------------------------------


def dz(dim: int, k: int) -> DifferentialForm:
    return DifferentialForm.basis(dim, k)


def dzbar(dim: int, k: int) -> DifferentialForm:
    return DifferentialForm.basis(dim, dim + k)


def dx(dim: int, k: int) -> DifferentialForm:
    return DifferentialForm(dim, 1, {(k,): 0.5, (dim + k,): 0.5})


def dy(dim: int, k: int) -> DifferentialForm:
    return DifferentialForm(dim, 1, {(k,): -0.5j, (dim + k,): 0.5j})


def real_covector(dim: int, r: int) -> DifferentialForm:
    """``dx_k`` for even ``r = 2k``, ``dy_k`` for odd ``r = 2k + 1``."""
    return dx(dim, r // 2) if r % 2 == 0 else dy(dim, r // 2)


def kahler_form(dim: int) -> DifferentialForm:
    """Standard Kahler form ``sum dx_k ^ dy_k = (i/2) sum dz_k ^ dzbar_k``."""
    return DifferentialForm(dim, 2, {(k, dim + k): 0.5j for k in range(dim)})


def volume_complement(dim: int, n: int) -> DifferentialForm:
    """``omega^(dim-n) / (dim-n)!``, the complementary form used for n < dim pairings."""
    return power(kahler_form(dim), dim - n) / math.factorial(dim - n)


def one_form(dim: int, a, b=None) -> DifferentialForm:
    """``sum a_k dz_k + b_k dzbar_k`` with batched coefficient arrays (last axis k)."""
    a = np.asarray(a)
    terms = {(k,): a[..., k] for k in range(dim)}
    if b is not None:
        b = np.asarray(b)
        terms.update({(dim + k,): b[..., k] for k in range(dim)})
    return DifferentialForm._raw(dim, 1, terms)


# -- derivative jets --------------------------------------------------------------


@dataclass
class DerivativeJet:
    """Value and derivatives of a real C^2 function at one point or a batch.

    ``dz[..., k]`` is du/dz_k (so du/dzbar_k is its conjugate), ``hess[..., j, k]``
    is d^2u / dz_j dzbar_k.  ``dzdz`` (d^2u / dz_j dz_k) is optional and only
    needed when the full real Hessian is required.
    """

    value: np.ndarray
    dz: np.ndarray
    hess: np.ndarray
    dzdz: np.ndarray | None = None

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=float)
        self.dz = np.asarray(self.dz, dtype=complex)
        self.hess = np.asarray(self.hess, dtype=complex)
        if self.dzdz is not None:
            self.dzdz = np.asarray(self.dzdz, dtype=complex)

    @property
    def dim(self) -> int:
        return self.dz.shape[-1]

    @property
    def gradient(self) -> np.ndarray:
        """Real gradient in interleaved (x_1, y_1, ...) order."""
        g = np.empty(self.dz.shape[:-1] + (2 * self.dim,))
        g[..., 0::2] = 2 * self.dz.real
        g[..., 1::2] = -2 * self.dz.imag
        return g

    @property
    def real_hessian(self) -> np.ndarray:
        if self.dzdz is None:
            raise ValueError("jet carries no pure second derivatives")
        return real_hessian_from_complex(self.hess, self.dzdz)

    @classmethod
    def from_real(cls, value, gradient, real_hessian) -> "DerivativeJet":
        gradient = np.asarray(gradient, dtype=float)
        dzv = 0.5 * (gradient[..., 0::2] - 1j * gradient[..., 1::2])
        hess, dzdz = complex_hessians_from_real(np.asarray(real_hessian, dtype=float))
        return cls(value, dzv, hess, dzdz)

    def __add__(self, other: "DerivativeJet") -> "DerivativeJet":
        pure = None
        if self.dzdz is not None and other.dzdz is not None:
            pure = self.dzdz + other.dzdz
        return DerivativeJet(self.value + other.value, self.dz + other.dz, self.hess + other.hess, pure)

    def __sub__(self, other: "DerivativeJet") -> "DerivativeJet":
        return self + other.scaled(-1.0)

    def scaled(self, c) -> "DerivativeJet":
        c = np.asarray(c, dtype=float)
        cc = c[..., None]
        pure = None if self.dzdz is None else self.dzdz * cc[..., None]
        return DerivativeJet(self.value * c, self.dz * cc, self.hess * cc[..., None], pure)

    def take(self, mask) -> "DerivativeJet":
        pure = None if self.dzdz is None else self.dzdz[mask]
        return DerivativeJet(self.value[mask], self.dz[mask], self.hess[mask], pure)

    def check(self, tol: float = HERMITIAN_TOL):
        h = self.hess
        scale = max(float(np.max(np.abs(h))) if h.size else 0.0, 1.0)
        if np.max(np.abs(h - np.conj(np.swapaxes(h, -1, -2))), initial=0.0) > tol * scale:
            raise ValueError("complex Hessian is not Hermitian")
        if not np.all(np.isfinite(self.dz)):
            raise ValueError("non-finite gradient in jet")


def complex_hessians_from_real(real_hessian: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mixed (d^2/dz dzbar) and pure (d^2/dz dz) Hessians from the real one."""
    R = real_hessian
    xx, xy = R[..., 0::2, 0::2], R[..., 0::2, 1::2]
    yx, yy = R[..., 1::2, 0::2], R[..., 1::2, 1::2]
    hess = 0.25 * ((xx + yy) + 1j * (xy - yx))
    dzdz = 0.25 * ((xx - yy) - 1j * (xy + yx))
    return hess, dzdz


def real_hessian_from_complex(hess: np.ndarray, dzdz: np.ndarray) -> np.ndarray:
    n = hess.shape[-1]
    R = np.empty(hess.shape[:-2] + (2 * n, 2 * n))
    R[..., 0::2, 0::2] = 2 * (dzdz.real + hess.real)
    R[..., 1::2, 1::2] = 2 * (hess.real - dzdz.real)
    # d_x_j d_y_k = i(d_j + dbar_j)(d_k - dbar_k) = -2 Im(P_jk) + 2 Im(H_jk)
    R[..., 0::2, 1::2] = -2 * dzdz.imag + 2 * hess.imag
    R[..., 1::2, 0::2] = -2 * dzdz.imag - 2 * hess.imag
    return R


def random_jets(rng: np.random.Generator, dim: int, size: int, scale: float = 1.0) -> DerivativeJet:
    """Batch of random jets with full second-order data (symmetric real Hessian)."""
    value = scale * rng.standard_normal(size)
    grad = scale * rng.standard_normal((size, 2 * dim))
    A = scale * rng.standard_normal((size, 2 * dim, 2 * dim))
    return DerivativeJet.from_real(value, grad, 0.5 * (A + np.swapaxes(A, -1, -2)))


# -- forms from jets ----------------------------------------------------------------


def d_scalar(jet: DerivativeJet) -> DifferentialForm:
    return one_form(jet.dim, jet.dz, np.conj(jet.dz))


def dc_scalar(jet: DerivativeJet) -> DifferentialForm:
    """``d^c u = i(dbar u - d u)``."""
    return one_form(jet.dim, -1j * jet.dz, 1j * np.conj(jet.dz))


def dc_from_gradient(dim: int, grad) -> DifferentialForm:
    grad = np.asarray(grad, dtype=float)
    dzv = 0.5 * (grad[..., 0::2] - 1j * grad[..., 1::2])
    return one_form(dim, -1j * dzv, 1j * np.conj(dzv))


def ddc_from_hessian(hess, tol: float = HERMITIAN_TOL) -> DifferentialForm:
    """The (1,1)-form ``2i sum H_jk dz_j ^ dzbar_k``; rejects non-Hermitian ``H``."""
    if isinstance(hess, DerivativeJet):
        hess = hess.hess
    H = np.asarray(hess, dtype=complex)
    dim = H.shape[-1]
    scale = max(float(np.max(np.abs(H))) if H.size else 0.0, 1.0)
    if np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))), initial=0.0) > tol * scale:
        raise ValueError("complex Hessian is not Hermitian within tolerance")
    terms = {(j, dim + k): 2j * H[..., j, k] for j in range(dim) for k in range(dim)}
    return DifferentialForm._raw(dim, 2, terms)


def _as_list(J, jets):
    if len(J) == 0:
        raise ValueError("active set must be nonempty")
    if len(jets) != len(J):
        raise ValueError(f"expected {len(J)} jets for J={tuple(J)}, got {len(jets)}")
    return list(jets)


def delta_c(J: Sequence[int], jets: Sequence[DerivativeJet]) -> DifferentialForm:
    """``d^c(u_j1 - u_j2) ^ ... ^ d^c(u_j(l-1) - u_jl)``; the scalar 1 when ``|J| = 1``."""
    jets = _as_list(J, jets)
    dim = jets[0].dim
    out = DifferentialForm.scalar(dim, 1.0)
    for a, b in zip(jets[:-1], jets[1:]):
        out = wedge(out, dc_scalar(a - b))
    return out


def dcJ(J: Sequence[int], jets: Sequence[DerivativeJet]) -> DifferentialForm:
    jets = _as_list(J, jets)
    return wedge_all((dc_scalar(j) for j in jets), jets[0].dim)


def compositions(n: int, parts: int):
    """All ``parts``-tuples of nonnegative integers summing to ``n``, lexicographic."""
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in compositions(n - first, parts - 1):
            yield (first,) + rest


def sigma(J: Sequence[int], jets: Sequence[DerivativeJet], n: int, ddc: Sequence[DifferentialForm] | None = None) -> DifferentialForm:
    """Sum over compositions ``b`` of ``n`` of ``(dd^c u_j1)^b1 ^ ... ^ (dd^c u_jl)^bl``.

    ``ddc`` may supply precomputed dd^c forms for the pieces of ``J``.
    """
    if n < 0:
        raise ValueError("sigma requires n >= 0")
    jets = _as_list(J, jets)
    dim = jets[0].dim
    if n == 0:
        return DifferentialForm.scalar(dim, 1.0)
    forms = list(ddc) if ddc is not None else [ddc_from_hessian(j.hess) for j in jets]
    powers = [[DifferentialForm.scalar(dim, 1.0)] for _ in forms]
    for f, pw in zip(forms, powers):
        for _ in range(n):
            pw.append(wedge(pw[-1], f))
    total = DifferentialForm.zero(dim, 2 * n)
    for beta in compositions(n, len(forms)):
        term = DifferentialForm.scalar(dim, 1.0)
        for pw, b in zip(powers, beta):
            if b:
                term = wedge(term, pw[b])
        total = total + term
    return total


def bidegree_part(f: DifferentialForm, p: int, q: int) -> DifferentialForm:
    if p + q != f.degree:
        raise ValueError(f"bidegree ({p},{q}) incompatible with degree {f.degree}")
    terms = {k: c for k, c in f.terms.items() if f.bidegree(k) == (p, q)}
    return DifferentialForm._raw(f.dim, f.degree, terms, f.eps)


# -- evaluation ----------------------------------------------------------------------


def covector_matrix(frame: np.ndarray, dim: int) -> np.ndarray:
    """Values of the basis covectors on frame vectors, shape (..., 2 dim, d)."""
    V = np.swapaxes(np.asarray(frame, dtype=float), -1, -2)  # (..., 2dim, d)
    X, Y = V[..., 0::2, :], V[..., 1::2, :]
    return np.concatenate([X + 1j * Y, X - 1j * Y], axis=-2)


def evaluate_on_frame(f: DifferentialForm, frame) -> np.ndarray:
    """Evaluate ``f`` on real tangent vectors ``frame`` of shape (..., d, 2 dim).

    The result is the determinant pairing (``dx ^ dy`` on ``(e_x, e_y)`` is 1);
    multilinear and antisymmetric in the frame vectors.
    """
    frame = np.asarray(frame, dtype=float)
    if frame.shape[-1] != 2 * f.dim:
        raise ValueError(f"frame vectors must have length {2 * f.dim}")
    d = frame.shape[-2]
    if d != f.degree:
        raise ValueError(f"frame has {d} vectors but form has degree {f.degree}")
    batch = np.broadcast_shapes(frame.shape[:-2], f.batch_shape)
    if d == 0:
        return np.broadcast_to(np.asarray(f.terms.get((), 0.0), dtype=complex), batch).copy()
    Z = covector_matrix(frame, f.dim)
    out = np.zeros(batch, dtype=complex)
    for key, c in f.terms.items():
        out = out + c * np.linalg.det(Z[..., list(key), :])
    return out


# -- first-order form fields -----------------------------------------------------------


def exterior_derivative(partials: Sequence[DifferentialForm]) -> DifferentialForm:
    """``dF = sum_r dx_r ^ dF/dx_r`` from the real partial derivatives of a form field."""
    dim = partials[0].dim
    if len(partials) != 2 * dim:
        raise ValueError(f"need {2 * dim} partial derivatives")
    return sum((wedge(real_covector(dim, r), p) for r, p in enumerate(partials)),
               DifferentialForm.zero(dim, partials[0].degree + 1))


def dc_exterior(partials: Sequence[DifferentialForm]) -> DifferentialForm:
    """``d^c F = i(dbar F - d F)`` from the real partials of a form field."""
    dim = partials[0].dim
    out = DifferentialForm.zero(dim, partials[0].degree + 1)
    for k in range(dim):
        px, py = partials[2 * k], partials[2 * k + 1]
        d_k = 0.5 * (px - 1j * py)
        dbar_k = 0.5 * (px + 1j * py)
        out = out + 1j * (wedge(dzbar(dim, k), dbar_k) - wedge(dz(dim, k), d_k))
    return out


def dc_partials(jet: DerivativeJet) -> list[DifferentialForm]:
    """Real partials of the 1-form field ``d^c u``, using the jet's real Hessian."""
    R = jet.real_hessian
    return [dc_from_gradient(jet.dim, R[..., :, r]) for r in range(2 * jet.dim)]


def wedge_partials(factors: Sequence[DifferentialForm], factor_partials: Sequence[Sequence[DifferentialForm]]) -> list[DifferentialForm]:
    """Product rule for the real partials of ``factors[0] ^ ... ^ factors[-1]``."""
    dim = factors[0].dim
    nr = 2 * dim
    out = []
    for r in range(nr):
        acc = None
        for t in range(len(factors)):
            pieces = list(factors)
            pieces[t] = factor_partials[t][r]
            term = wedge_all(pieces, dim)
            acc = term if acc is None else acc + term
        out.append(acc)
    return out
