"""Strata E_J of the max envelope: classification, projection, orientation, sampling.

Orientation convention.  For defining functions ``rho_t = u_(j_t) - u_(j_(t+1))``
let ``N`` be the Gram-Schmidt frame of their gradients.  The defining-function
orientation ``E'_J`` is the tangent frame ``T`` with ``(T, N)`` positively
oriented in R^(2 dim), which is the frame realizing
``<phi, [M]> = int *(phi ^ nu) / |nu| dS``.  The positive orientation is
``[E_J] = (-1)^(l(l-1)/2) [E'_J]``.  When ``E_J`` is a point, ``T`` is empty
and the orientation of ``E'_J`` is carried by ``parity = sign det N``.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .scene import POLE_DISCARD, PoleError, Scene

TAU_PROJ = 1e-10
RANK_TOL = 1e-9
DELTA_REL = 4e-2
KERNELS = ("quartic", "box")
CHUNK = 1 << 16

OK, DEGENERATE, UNCONVERGED = 0, 1, 2

ActiveSet = tuple


class DegenerateStratumError(RuntimeError):
    """The differences' gradients are rank deficient: the stratum is not smooth here."""

    def __init__(self, rank: int, expected: int):
        super().__init__(f"degenerate stratum: Jacobian rank {rank} < {expected}")
        self.rank = rank
        self.expected = expected


class ConvergenceError(RuntimeError):
    pass


def active_set(J: Iterable[int]) -> ActiveSet:
    J = tuple(int(j) for j in J)
    if not J:
        raise ValueError("active set must be nonempty")
    if any(b <= a for a, b in zip(J, J[1:])):
        raise ValueError(f"active set must be strictly increasing: {J}")
    return J


def orientation_sign(J: Sequence[int]) -> int:
    l = len(J)
    return -1 if (l * (l - 1) // 2) % 2 else 1


def candidate_strata(m: int, max_size: int) -> list[ActiveSet]:
    out = []
    for size in range(1, min(m, max_size) + 1):
        out.extend(itertools.combinations(range(m), size))
    return out


def stratum_rng(seed: int, J: Sequence[int], stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, J, stream)``."""
    ss = np.random.SeedSequence([int(seed), int(stream), len(J), *map(int, J)])
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, dtype=np.uint64)))


# -- classification --------------------------------------------------------------------------


def classify(scene: Scene, point) -> ActiveSet:
    """The unique J with ``point`` in E_J (within the scene's activity band)."""
    return scene.envelope_value(point)[1]


def membership(scene: Scene, X, J: Sequence[int]) -> np.ndarray:
    """Boolean mask: points whose active set is exactly ``J``."""
    _, act = scene.active(X)
    want = np.zeros(scene.m, dtype=bool)
    want[list(J)] = True
    return np.all(act == want, axis=-1)


# -- defining functions and projection ----------------------------------------------------------


def residuals(scene: Scene, J: Sequence[int], X, allow_poles: bool = False):
    """Residuals ``rho_t`` (..., l-1) and their real gradients (..., l-1, 2 dim)."""
    jets = scene.jets(J, X, allow_poles)
    vals = np.stack([j.value for j in jets], axis=-1)
    grads = np.stack([j.gradient for j in jets], axis=-2)
    return vals[..., :-1] - vals[..., 1:], grads[..., :-1, :] - grads[..., 1:, :]


def _rank(G: np.ndarray, rel: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    s = np.linalg.svd(G, compute_uv=False)
    tol = rel * np.maximum(1.0, s[..., :1])
    return np.sum(s > tol, axis=-1), s


def transversal_tol(tol: float) -> float:
    """Smallest acceptable singular value of the gradients at a converged point.

    Where pieces touch tangentially ``|grad rho|^2 ~ |rho''| |rho|``, so a
    residual below ``tol`` leaves a gradient of order ``sqrt(tol)``.
    """
    return 10.0 * math.sqrt(tol)


@dataclass
class Projection:
    points: np.ndarray
    status: np.ndarray
    iterations: np.ndarray
    rank: np.ndarray


def project_batch(scene: Scene, J: Sequence[int], X, max_iter: int = 50, tol: float = TAU_PROJ) -> Projection:
    """Gauss-Newton (minimum-norm steps) onto ``{rho_1 = ... = rho_(l-1) = 0}``."""
    J = active_set(J)
    X = np.array(X, dtype=float, copy=True)
    n = X.shape[0]
    k = len(J) - 1
    status = np.full(n, UNCONVERGED)
    iters = np.zeros(n, dtype=int)
    rank = np.full(n, k)
    if k == 0:
        status[:] = OK
        return Projection(X, status, iters, rank)
    todo = np.arange(n)
    for it in range(max_iter + 1):
        if todo.size == 0:
            break
        rho, G = residuals(scene, J, X[todo], allow_poles=True)
        bad = ~np.all(np.isfinite(rho), axis=-1)
        done = ~bad & (np.max(np.abs(rho), axis=-1) <= tol)
        r, _ = _rank(G)
        r_conv, _ = _rank(G, transversal_tol(tol))
        tangent = done & (r_conv < k)
        done &= ~tangent
        status[todo[done]] = OK
        degen = (~done & ~bad & (r < k)) | tangent
        r = np.where(tangent, r_conv, r)
        status[todo[degen]] = DEGENERATE
        rank[todo[degen]] = r[degen]
        step = ~done & ~degen & ~bad
        if it == max_iter or not np.any(step):
            break
        idx = todo[step]
        Gs, rs = G[step], rho[step]
        GGt = Gs @ np.swapaxes(Gs, -1, -2)
        delta = -np.einsum("bki,bk->bi", Gs, np.linalg.solve(GGt, rs[..., None])[..., 0])
        X[idx] += delta
        iters[idx] += 1
        todo = idx
    return Projection(X, status, iters, rank)


def project(scene: Scene, J: Sequence[int], point, max_iter: int = 50, tol: float = TAU_PROJ) -> np.ndarray:
    """Project one point onto E_J; raises on rank deficiency, divergence, or leaving E_J."""
    J = active_set(J)
    point = np.asarray(point, dtype=float)
    if np.any(scene.pole_mask(point[None])):
        raise PoleError("projection started on a pole")
    res = project_batch(scene, J, point[None], max_iter, tol)
    st = res.status[0]
    if st == DEGENERATE:
        raise DegenerateStratumError(int(res.rank[0]), len(J) - 1)
    if st != OK:
        raise ConvergenceError(f"no convergence onto E_{J} in {max_iter} iterations")
    p = res.points[0]
    if not membership(scene, p[None], J)[0]:
        raise ConvergenceError(f"projected point left E_{J}: active set {classify(scene, p)}")
    return p


# -- orientation ------------------------------------------------------------------------------------


def tangent_frames(G: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Oriented tangent frames of ``E'_J`` from defining-function gradients.

    Parameters
    ----------
    G : array (B, k, 2 dim)
        Gradients of ``rho_1..rho_k``; assumed full rank.

    Returns
    -------
    frames : array (B, 2 dim - k, 2 dim)
    normals : array (B, k, 2 dim)
        Gram-Schmidt frame of the gradients (same flag as ``rho_1, rho_2, ...``).
    parity : array (B,)
        ``sign det N`` for point strata, else 1.
    """
    B, k, D = G.shape
    if k == 0:
        eye = np.broadcast_to(np.eye(D), (B, D, D)).copy()
        return eye, np.zeros((B, 0, D)), np.ones(B)
    Q, R = np.linalg.qr(np.swapaxes(G, -1, -2), mode="complete")
    diag = np.sign(np.diagonal(R[:, :k, :k], axis1=-2, axis2=-1))
    diag[diag == 0] = 1.0
    N = Q[:, :, :k] * diag[:, None, :]
    T = Q[:, :, k:].copy()
    parity = np.ones(B)
    s = np.sign(np.linalg.det(np.concatenate([T, N], axis=-1)))
    if D - k > 0:
        T[:, :, 0] *= s[:, None]
    else:
        parity = s
    return np.swapaxes(T, -1, -2), np.swapaxes(N, -1, -2), parity


@dataclass
class OrientedFrame:
    frame: np.ndarray
    sign: int
    parity: float = 1.0


def oriented_frame(scene: Scene, J: Sequence[int], point) -> OrientedFrame:
    """Tangent frame of ``E'_J`` at ``point`` and the sign ``(-1)^(l(l-1)/2)``."""
    J = active_set(J)
    point = np.asarray(point, dtype=float)
    k = len(J) - 1
    if k == 0:
        return OrientedFrame(np.eye(2 * scene.dim), 1, 1.0)
    _, G = residuals(scene, J, point[None])
    r, _ = _rank(G)
    if r[0] < k:
        raise DegenerateStratumError(int(r[0]), k)
    T, _, parity = tangent_frames(G, scene.dim)
    return OrientedFrame(T[0], orientation_sign(J), float(parity[0]))


# -- boundary signs ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class OrientationSign:
    source: ActiveSet
    target: ActiveSet
    inserted: int
    k: int
    sign: int


def boundary_sign(J: Sequence[int], Jt: Sequence[int]) -> OrientationSign:
    """Sign ``(-1)^k`` of ``[E_Jt]`` in ``d[E_J]``, k = #elements of J below the inserted index."""
    J, Jt = active_set(J), active_set(Jt)
    if len(Jt) != len(J) + 1 or not set(J) <= set(Jt):
        raise ValueError(f"{Jt} is not J={J} plus one index")
    (s,) = set(Jt) - set(J)
    k = sum(1 for j in J if j < s)
    return OrientationSign(J, Jt, s, k, -1 if k % 2 else 1)


# -- sampling ----------------------------------------------------------------------------------------------


@dataclass
class StratumSample:
    point: np.ndarray
    J: ActiveSet
    frame: np.ndarray
    orientation_sign: int
    weight: float
    parity: float = 1.0


@dataclass
class StratumSamples:
    """Quadrature nodes on E_J, batched.

    ``sum(weights * g(points))`` estimates ``int_(E_J) g dS``; proposals that
    produced no node count as zero contributions in ``n_proposals``.
    """

    scene: Scene
    J: ActiveSet
    points: np.ndarray
    frames: np.ndarray
    parity: np.ndarray
    weights: np.ndarray
    n_proposals: int
    delta: float = 0.0
    n_slab: int = 0
    n_poles: int = 0
    n_degenerate: int = 0
    n_unconverged: int = 0
    n_outside: int = 0
    flags: list = field(default_factory=list)

    @property
    def sign(self) -> int:
        return orientation_sign(self.J)

    @property
    def n_discarded(self) -> int:
        return self.n_poles + self.n_degenerate + self.n_unconverged

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self) -> Iterator[StratumSample]:
        for i in range(len(self)):
            yield StratumSample(self.points[i], self.J, self.frames[i], self.sign, float(self.weights[i]),
                                float(self.parity[i]))

    def estimate(self, values) -> tuple[float, float]:
        """Integral of per-node ``values`` against dS, with its Monte-Carlo standard error."""
        c = np.asarray(values, dtype=float) * self.weights
        N = self.n_proposals
        s1, s2 = float(np.sum(c)), float(np.sum(c * c))
        if N < 2:
            return s1, 0.0
        var = max(N * s2 - s1 * s1, 0.0) / (N - 1)
        return s1, float(np.sqrt(var))


def _empty(scene: Scene, J, n: int, delta: float, flags=None) -> StratumSamples:
    D = 2 * scene.dim
    d = max(D - (len(J) - 1), 0)
    return StratumSamples(scene, J, np.zeros((0, D)), np.zeros((0, d, D)), np.zeros(0), np.zeros(0), n, delta,
                          flags=list(flags or []))


def slab_kernel(s: np.ndarray, kind: str = "quartic") -> np.ndarray:
    """Symmetric weights on [-1, 1] with unit mass.

    ``quartic`` is ``(3/8)(3 - 5 s^2)``, which also has a vanishing second
    moment, so the O(delta^2) slab bias cancels; ``box`` is ``1/2``.
    """
    s = np.asarray(s, dtype=float)
    if kind == "box":
        return np.full(s.shape, 0.5)
    if kind == "quartic":
        return 0.375 * (3.0 - 5.0 * s * s)
    raise ValueError(f"unknown slab kernel {kind!r}")


def sample_stratum(scene: Scene, J: Sequence[int], n: int, seed: int = 0, delta: float | None = None,
                   delta_rel: float = DELTA_REL, max_iter: int = 50, tol: float = TAU_PROJ,
                   chunk: int = CHUNK, kernel: str = "quartic") -> StratumSamples:
    """Monte-Carlo nodes on E_J ∩ domain from ``n`` uniform proposals.

    Open strata (``|J| = 1``) use rejection with weight ``vol / n``.  Higher
    strata use the thickened slab ``{|rho_t| <= delta}``: slab proposals are
    projected onto ``{rho = 0}``, kept when their active set is exactly J,
    and weighted ``(vol / n) * sqrt(det G G^T) * prod_t K(rho_t / delta) / delta^k``
    (co-area).  The box kernel reproduces the plain slab fraction ``1 / (2 delta)^k``.
    """
    J = active_set(J)
    if n < 1:
        raise ValueError("need at least one proposal")
    if max(J) >= scene.m:
        raise ValueError(f"J={J} refers to a missing piece")
    D = 2 * scene.dim
    k = len(J) - 1
    if delta is None:
        delta = delta_rel * scene.diameter
    if k > D:
        return _empty(scene, J, n, delta, ["codimension exceeds dimension"])
    rng = stratum_rng(seed, J)
    w0 = scene.volume / n
    pts, frames, parity, weights = [], [], [], []
    counts = dict(n_slab=0, n_poles=0, n_degenerate=0, n_unconverged=0, n_outside=0)
    done = 0
    while done < n:
        c = min(chunk, n - done)
        done += c
        X = scene.uniform(rng, c)
        poles = scene.pole_mask(X)
        counts["n_poles"] += int(np.sum(poles))
        X = X[~poles]
        if k == 0:
            keep = membership(scene, X, J)
            P = X[keep]
            pts.append(P)
            frames.append(np.broadcast_to(np.eye(D), (P.shape[0], D, D)))
            parity.append(np.ones(P.shape[0]))
            weights.append(np.full(P.shape[0], w0))
            continue
        vals = np.stack([scene.pieces[j].value(X) + scene.offsets[j] for j in J], axis=-1)
        with np.errstate(invalid="ignore"):
            rho = vals[:, :-1] - vals[:, 1:]
            slab = np.all(np.abs(rho) <= delta, axis=-1)
        Xs = X[slab]
        counts["n_slab"] += Xs.shape[0]
        if Xs.shape[0] == 0:
            continue
        _, G = residuals(scene, J, Xs)
        jac = np.sqrt(np.abs(np.linalg.det(G @ np.swapaxes(G, -1, -2))))
        proj = project_batch(scene, J, Xs, max_iter, tol)
        counts["n_degenerate"] += int(np.sum(proj.status == DEGENERATE))
        counts["n_unconverged"] += int(np.sum(proj.status == UNCONVERGED))
        ok = proj.status == OK
        P = proj.points[ok]
        inside = membership(scene, P, J) & scene.contains(P) & ~scene.pole_mask(P)
        counts["n_outside"] += int(np.sum(~inside))
        P = P[inside]
        wj = (jac * np.prod(slab_kernel(rho[slab] / delta, kernel), axis=-1))[ok][inside]
        if P.shape[0]:
            _, Gp = residuals(scene, J, P)
            T, _, par = tangent_frames(Gp, scene.dim)
            pts.append(P)
            frames.append(T)
            parity.append(par)
            weights.append(w0 * wj / delta ** k)
    if not pts:
        out = _empty(scene, J, n, delta)
    else:
        out = StratumSamples(scene, J, np.concatenate(pts), np.concatenate(frames), np.concatenate(parity),
                             np.concatenate(weights), n, delta)
    for key, v in counts.items():
        setattr(out, key, v)
    if counts["n_slab"] and counts["n_degenerate"] > 0.5 * counts["n_slab"]:
        out.flags.append("degenerate")
    elif counts["n_degenerate"]:
        out.flags.append("partially-degenerate")
    if counts["n_poles"] > 1e-4 * n:
        out.flags.append("pole-discards")
    if out.empty:
        out.flags.append("empty")
    return out


def write_samples_csv(samples: Iterable[StratumSamples], path) -> None:
    """Diagnostic dump: point coordinates, J, weight, sign."""
    rows = list(samples)
    if not rows:
        return
    D = 2 * rows[0].scene.dim
    names = [f"{'xy'[r % 2]}{r // 2 + 1}" for r in range(D)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["J", "weight", "sign"])
        for s in rows:
            label = "-".join(map(str, s.J))
            for p, wt, par in zip(s.points, s.weights, s.parity):
                w.writerow([repr(float(a)) for a in p] + [label, repr(float(wt)), int(s.sign * par)])
