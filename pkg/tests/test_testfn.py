import numpy as np
import pytest

from mamax.testfn import Gaussian, Polynomial, SmoothBox, constant, parse


def fd_check(phi, X, h=1e-5):
    D = X.shape[-1]
    g = phi.gradient(X)
    R = phi.real_hessian(X)
    for r in range(D):
        e = np.zeros(D)
        e[r] = h
        assert np.allclose(g[:, r], (phi.value(X + e) - phi.value(X - e)) / (2 * h), atol=1e-6)
        assert np.allclose(R[:, r], (phi.gradient(X + e) - phi.gradient(X - e)) / (2 * h), atol=1e-5)


@pytest.mark.parametrize("phi", [
    Polynomial(2, [((2, 0, 0, 0), 1.0), ((1, 1, 0, 1), -0.5)]),
    Gaussian(2, [0.1, 0.0, -0.2, 0.3], 0.7),
    SmoothBox(2, -0.5, 0.5, 0.4),
], ids=lambda p: p.kind)
def test_derivatives_match_finite_differences(phi):
    X = np.random.default_rng(0).uniform(-1, 1, (50, 4))
    fd_check(phi, X)


def test_parse_forms():
    X = np.random.default_rng(1).uniform(-1, 1, (5, 4))
    assert np.allclose(parse("const", 2).value(X), 1.0)
    assert np.allclose(parse("x1^2", 2).value(X), X[:, 0] ** 2)
    assert np.allclose(parse("0.5*x1*y2", 2).value(X), 0.5 * X[:, 0] * X[:, 3])
    assert np.allclose(parse("box:-0.5,0.5,0.4", 2).value(X), SmoothBox(2, -0.5, 0.5, 0.4).value(X))
    assert parse({"kind": "gaussian", "width": 0.5}, 2).value(np.zeros((1, 4)))[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        parse("x3", 2)


def test_box_support_and_plateau():
    b = SmoothBox(1, -0.5, 0.5, 0.4)
    assert b.compact_in(np.tile([-1.0, 1.0], (2, 1)))
    assert not b.compact_in(np.tile([-0.8, 0.8], (2, 1)))
    assert b.value(np.array([[0.2, -0.4], [0.95, 0.0]])).tolist() == [1.0, 0.0]
    assert not constant(1).compact_in(np.tile([-1.0, 1.0], (2, 1)))


def test_ddc_of_modulus_squared_polynomial():
    # x^2 + y^2 has complex Hessian 1
    phi = Polynomial(1, [((2, 0), 1.0), ((0, 2), 1.0)])
    assert np.allclose(phi.hess(np.zeros((3, 2))), 1.0)


def test_round_trip():
    X = np.random.default_rng(2).uniform(-1, 1, (5, 2))
    for phi in (Polynomial(1, [((1, 2), 3.0)]), Gaussian(1, 0.2, 0.5), SmoothBox(1, -0.3, 0.3, 0.2)):
        assert np.allclose(parse(phi.to_dict(), 1).value(X), phi.value(X))
