"""Canonical scenes with closed-form answers, shared by the tests and the CLI."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scene import (Constant, HermitianQuadratic, HoloPoly, LogSumSquares, PolyhedronSpec, RealAffine, RealQuadratic,
                    Scene, green_candidate)
from .testfn import SmoothBox, TestFunction


def z(dim: int, k: int) -> HoloPoly:
    mi = [0] * dim
    mi[k] = 1
    return HoloPoly(dim, [(mi, 1.0)])


def halfplane() -> Scene:
    """``max(0, x_1)`` on [-1, 1]^2; its measure is arc length on the segment {x = 0}."""
    return Scene(1, [Constant(1, 0.0), RealAffine(1, [1.0, 0.0])], np.tile([-1.0, 1.0], (2, 1)), name="halfplane")


def disc() -> Scene:
    """``max(0, log|z|^2)`` on [-2, 2]^2; total mass 4 pi on the unit circle."""
    return Scene(1, [Constant(1, 0.0), LogSumSquares(1, [z(1, 0)], 1.0)], np.tile([-2.0, 2.0], (2, 1)), name="disc")


def tripod() -> Scene:
    """``max(0, x_1, y_1)``: three affine pieces meeting at the origin."""
    return Scene(1, [Constant(1, 0.0), RealAffine(1, [1.0, 0.0]), RealAffine(1, [0.0, 1.0])],
                 np.tile([-1.0, 1.0], (2, 1)), name="tripod")


def single_smooth() -> Scene:
    """One strictly psh Hermitian quadratic on [-1, 1]^4."""
    A = np.array([[1.0, 0.3 + 0.2j], [0.3 - 0.2j, 0.6]])
    return Scene(2, [HermitianQuadratic(2, A)], np.tile([-1.0, 1.0], (4, 1)), name="single-smooth")


def tangential() -> Scene:
    """``max(0, x_1^2)``: the two pieces touch along {x = 0} and the stratum is not smooth."""
    Q = np.zeros((2, 2))
    Q[0, 0] = 2.0
    return Scene(1, [Constant(1, 0.0), RealQuadratic(1, Q, [0.0, 0.0], 0.0)], np.tile([-1.0, 1.0], (2, 1)),
                 name="tangential")


def polydisc_spec() -> PolyhedronSpec:
    return PolyhedronSpec(2, [[z(2, 0)], [z(2, 1)]], name="polydisc")


def ball_spec() -> PolyhedronSpec:
    return PolyhedronSpec(2, [[z(2, 0), z(2, 1)]], name="ball")


def violating_spec() -> PolyhedronSpec:
    """One family of three linear forms in C^2: its open outer stratum has sum N = 3 > 2."""
    lin = HoloPoly(2, [([1, 0], 1.0), ([0, 1], 1.0)])
    return PolyhedronSpec(2, [[z(2, 0), z(2, 1), lin]], name="violating")


@dataclass
class Fixture:
    name: str
    scene: Scene
    n: int
    phi: TestFunction
    n_samples: int = 1_000_000
    normalization: float = 1.0
    expected_mass: float | None = None
    extra: dict = field(default_factory=dict)


def canonical() -> list[Fixture]:
    """The scenes used for the three-way agreement between the stratified and oracle pairings."""
    eq = (2 * math.pi) ** -2
    return [
        Fixture("single-smooth", single_smooth(), 2, SmoothBox(2, -0.5, 0.5, 0.4), 400_000),
        Fixture("halfplane", halfplane(), 1, SmoothBox(1, -0.5, 0.5, 0.4), 1_000_000, expected_mass=2.0),
        Fixture("disc", disc(), 1, SmoothBox(1, -1.2, 1.2, 0.5), 1_000_000, expected_mass=4 * math.pi),
        Fixture("polydisc", green_candidate(polydisc_spec()), 2, SmoothBox(2, -1.1, 1.1, 0.3), 1_000_000, eq, 1.0),
        Fixture("ball", green_candidate(ball_spec()), 2, SmoothBox(2, -1.1, 1.1, 0.3), 1_000_000, eq, 1.0),
    ]
