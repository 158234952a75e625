"""Test functions phi with closed-form gradients and Hessians."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .forms import DifferentialForm, complex_hessians_from_real, ddc_from_hessian, one_form


class TestFunction:
    """Real scalar test function on R^(2 dim)."""

    __test__ = False  # not a pytest class
    kind = "abstract"
    dim: int

    def value(self, X) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, X) -> np.ndarray:
        raise NotImplementedError

    def real_hessian(self, X) -> np.ndarray:
        raise NotImplementedError

    def support(self) -> np.ndarray | None:
        """Bounding box (2 dim, 2) of the support, or None if not compact."""
        return None

    def compact_in(self, domain) -> bool:
        box = self.support()
        if box is None:
            return False
        domain = np.asarray(domain)
        return bool(np.all(box[:, 0] > domain[:, 0]) and np.all(box[:, 1] < domain[:, 1]))

    def hess(self, X) -> np.ndarray:
        return complex_hessians_from_real(self.real_hessian(X))[0]

    def ddc(self, X) -> DifferentialForm:
        return ddc_from_hessian(self.hess(X))

    def d(self, X) -> DifferentialForm:
        g = self.gradient(X)
        a = 0.5 * (g[..., 0::2] - 1j * g[..., 1::2])
        return one_form(self.dim, a, np.conj(a))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class Polynomial(TestFunction):
    """``sum_t c_t prod_r x_r^e_(t,r)`` in the real interleaved coordinates."""

    dim: int
    terms: list
    kind = "polynomial"

    def __post_init__(self):
        self.terms = [(tuple(int(e) for e in ex), float(c)) for ex, c in self.terms]
        for ex, _ in self.terms:
            if len(ex) != 2 * self.dim or min(ex) < 0:
                raise ValueError(f"bad exponent vector {ex}")

    @staticmethod
    def _mono(X, ex):
        out = np.ones(X.shape[:-1])
        for r, e in enumerate(ex):
            if e:
                out = out * X[..., r] ** e
        return out

    def _deriv(self, ex, r):
        if ex[r] == 0:
            return 0.0, ex
        lower = list(ex)
        lower[r] -= 1
        return ex[r], tuple(lower)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        return sum((c * self._mono(X, ex) for ex, c in self.terms), np.zeros(X.shape[:-1]))

    def gradient(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape)
        for ex, c in self.terms:
            for r in range(2 * self.dim):
                f, lo = self._deriv(ex, r)
                if f:
                    out[..., r] += c * f * self._mono(X, lo)
        return out

    def real_hessian(self, X):
        X = np.asarray(X, dtype=float)
        D = 2 * self.dim
        out = np.zeros(X.shape + (D,))
        for ex, c in self.terms:
            for r in range(D):
                f, lo = self._deriv(ex, r)
                if not f:
                    continue
                for s in range(D):
                    g, lo2 = self._deriv(lo, s)
                    if g:
                        out[..., r, s] += c * f * g * self._mono(X, lo2)
        return out

    def to_dict(self):
        return {"kind": self.kind, "terms": [[list(ex), c] for ex, c in self.terms]}


def constant(dim: int, c: float = 1.0) -> Polynomial:
    return Polynomial(dim, [((0,) * (2 * dim), c)])


@dataclass
class Gaussian(TestFunction):
    dim: int
    center: np.ndarray
    width: float
    amplitude: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        self.center = np.broadcast_to(np.asarray(self.center, dtype=float), (2 * self.dim,)).copy()

    def value(self, X):
        r2 = np.sum((np.asarray(X) - self.center) ** 2, axis=-1)
        return self.amplitude * np.exp(-0.5 * r2 / self.width ** 2)

    def gradient(self, X):
        Y = np.asarray(X) - self.center
        return -(Y / self.width ** 2) * self.value(X)[..., None]

    def real_hessian(self, X):
        Y = np.asarray(X) - self.center
        s2 = self.width ** 2
        eye = np.eye(2 * self.dim)
        return (Y[..., :, None] * Y[..., None, :] / s2 ** 2 - eye / s2) * self.value(X)[..., None, None]

    def support(self):
        # numerical support: value below 1e-14 of the peak
        r = self.width * np.sqrt(2 * np.log(1e14))
        return np.stack([self.center - r, self.center + r], axis=-1)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "width": self.width, "amplitude": self.amplitude}


def _smoothstep(t):
    """Quintic smoothstep on [0, 1] (C^2) with first and second derivatives."""
    t = np.clip(t, 0.0, 1.0)
    s = t ** 3 * (10 - 15 * t + 6 * t ** 2)
    ds = 30 * t ** 2 * (1 - t) ** 2
    d2s = 60 * t * (1 - t) * (1 - 2 * t)
    return s, ds, d2s


@dataclass
class SmoothBox(TestFunction):
    """Product of C^2 plateaus: 1 on ``[lo, hi]`` per axis, 0 outside ``[lo - ramp, hi + ramp]``."""

    dim: int
    lo: np.ndarray
    hi: np.ndarray
    ramp: float
    kind = "box"

    def __post_init__(self):
        D = 2 * self.dim
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (D,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (D,)).copy()
        if self.ramp <= 0 or np.any(self.hi < self.lo):
            raise ValueError("box needs lo <= hi and a positive ramp")

    def _factors(self, X):
        X = np.asarray(X, dtype=float)
        a, da, d2a = _smoothstep((X - (self.lo - self.ramp)) / self.ramp)
        b, db, d2b = _smoothstep(((self.hi + self.ramp) - X) / self.ramp)
        f = a * b
        df = (da * b - a * db) / self.ramp
        d2f = (d2a * b - 2 * da * db + a * d2b) / self.ramp ** 2
        return f, df, d2f

    def value(self, X):
        return np.prod(self._factors(X)[0], axis=-1)

    def gradient(self, X):
        f, df, _ = self._factors(X)
        D = f.shape[-1]
        out = np.empty(f.shape)
        for r in range(D):
            others = np.prod(np.delete(f, r, axis=-1), axis=-1)
            out[..., r] = df[..., r] * others
        return out

    def real_hessian(self, X):
        f, df, d2f = self._factors(X)
        D = f.shape[-1]
        out = np.empty(f.shape + (D,))
        for r in range(D):
            for s in range(D):
                if r == s:
                    out[..., r, r] = d2f[..., r] * np.prod(np.delete(f, r, axis=-1), axis=-1)
                else:
                    rest = np.prod(np.delete(f, [r, s], axis=-1), axis=-1)
                    out[..., r, s] = df[..., r] * df[..., s] * rest
        return out

    def support(self):
        return np.stack([self.lo - self.ramp, self.hi + self.ramp], axis=-1)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist(), "ramp": self.ramp}


_MONO = re.compile(r"^([xy])(\d+)(?:\^(\d+))?$")


def _parse_product(text: str, dim: int) -> Polynomial:
    coef = 1.0
    ex = [0] * (2 * dim)
    for factor in text.split("*"):
        factor = factor.strip()
        m = _MONO.match(factor)
        if m:
            k = int(m.group(2)) - 1
            if not 0 <= k < dim:
                raise ValueError(f"coordinate {factor} out of range for dim {dim}")
            ex[2 * k + (m.group(1) == "y")] += int(m.group(3) or 1)
        else:
            coef *= float(factor)
    return Polynomial(dim, [(tuple(ex), coef)])


def from_dict(d: dict, dim: int) -> TestFunction:
    kind = d.get("kind")
    if kind == "polynomial":
        return Polynomial(dim, [(t[0], t[1]) for t in d["terms"]])
    if kind == "gaussian":
        return Gaussian(dim, d.get("center", 0.0), float(d["width"]), float(d.get("amplitude", 1.0)))
    if kind == "box":
        return SmoothBox(dim, d["lo"], d["hi"], float(d["ramp"]))
    raise ValueError(f"unknown test function kind {kind!r}")


def parse(spec, dim: int) -> TestFunction:
    """Parse a test-function spec.

    Accepts a dict, a JSON object string, ``const``, a monomial product such
    as ``x1^2`` or ``0.5*x1*y2``, ``box:LO,HI,RAMP`` (same bounds on every
    axis) or ``gauss:WIDTH[@c1,c2,...]``.
    """
    if isinstance(spec, TestFunction):
        return spec
    if isinstance(spec, dict):
        return from_dict(spec, dim)
    text = str(spec).strip()
    if text.startswith("{"):
        return from_dict(json.loads(text), dim)
    if text in ("const", "1", "one"):
        return constant(dim)
    if text.startswith("box:"):
        lo, hi, ramp = (float(a) for a in text[4:].split(","))
        return SmoothBox(dim, lo, hi, ramp)
    if text.startswith("gauss:"):
        body = text[6:]
        center = 0.0
        if "@" in body:
            body, c = body.split("@")
            center = [float(a) for a in c.split(",")]
        return Gaussian(dim, center, float(body))
    return _parse_product(text, dim)
