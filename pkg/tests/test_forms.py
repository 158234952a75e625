import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mamax.forms import (DerivativeJet, DifferentialForm, bidegree_part, complex_hessians_from_real, compositions,
                         d_scalar, dc_scalar, dcJ, ddc_from_hessian, delta_c, dx, dy, dz, dzbar, evaluate_on_frame,
                         kahler_form, power, random_jets, real_hessian_from_complex, residual, sigma,
                         volume_complement, wedge)


def jet(value, dzv, hess):
    return DerivativeJet(np.asarray(value, dtype=float), np.asarray(dzv, dtype=complex), np.asarray(hess, dtype=complex))


def random_form(rng, dim, degree, size=None):
    shape = () if size is None else (size,)
    keys = itertools.combinations(range(2 * dim), degree)
    return DifferentialForm(dim, degree, {k: rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for k in keys})


# -- spec examples -------------------------------------------------------------------------------------


def test_dz_self_wedge_vanishes():
    assert wedge(dz(2, 0), dz(2, 0)).is_zero()


def test_dz_dzbar_anticommute():
    a, b = dz(1, 0), dzbar(1, 0)
    assert wedge(a, b).allclose(-wedge(b, a))


def test_dx_wedge_dy():
    f = wedge(dx(1, 0), dy(1, 0))
    assert f.allclose(DifferentialForm(1, 2, {(0, 1): 0.5j}))


def test_antisymmetric_key_normalized():
    f = DifferentialForm(2, 2, {(3, 1): 2.0})
    assert f.terms == {(1, 3): -2.0}


def test_dc_of_real_part_is_dy():
    u = jet(0.0, [0.5], [[0.0]])  # u = x_1
    assert dc_scalar(u).allclose(dy(1, 0))


def test_constant_has_zero_d_and_dc():
    u = jet(3.0, [0.0, 0.0], np.zeros((2, 2)))
    assert d_scalar(u).is_zero() and dc_scalar(u).is_zero()


def test_d_of_modulus_squared():
    z = 0.3 - 0.7j
    u = jet(abs(z) ** 2, [np.conj(z)], [[1.0]])
    expected = np.conj(z) * dz(1, 0) + z * dzbar(1, 0)
    assert d_scalar(u).allclose(expected)


def test_ddc_modulus_squared_is_four_area():
    f = ddc_from_hessian(np.array([[1.0]]))
    assert f.allclose(2j * wedge(dz(1, 0), dzbar(1, 0)))
    assert f.allclose(4 * wedge(dx(1, 0), dy(1, 0)))


def test_ddc_pluriharmonic_vanishes():
    assert ddc_from_hessian(np.zeros((2, 2))).is_zero()


def test_fubini_study_square_vanishes():
    # u = log(|z1|^2 + |z2|^2) at (1, 0): Hessian (I - z z*) / |z|^2 has rank 1
    zv = np.array([1.0, 0.0])
    H = (np.eye(2) - np.outer(zv, zv.conj())) / 1.0
    f = ddc_from_hessian(H)
    assert not f.is_zero()
    assert power(f, 2).is_zero(1e-14)


def test_fubini_study_hessian_by_finite_differences():
    def u(x):
        return np.log(x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2)

    x0 = np.array([1.0, 0.0, 0.0, 0.0])
    h = 1e-4
    R = np.zeros((4, 4))
    for r in range(4):
        for s in range(4):
            e_r, e_s = np.eye(4)[r] * h, np.eye(4)[s] * h
            R[r, s] = (u(x0 + e_r + e_s) - u(x0 + e_r - e_s) - u(x0 - e_r + e_s) + u(x0 - e_r - e_s)) / (4 * h * h)
    H, _ = complex_hessians_from_real(R)
    assert abs(np.linalg.det(H)) < 1e-6


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        ddc_from_hessian(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_delta_c_examples():
    u1 = jet(0.0, [0.0], [[0.0]])
    u2 = jet(0.0, [0.5], [[0.0]])  # x_1
    assert delta_c((0,), [u1]).allclose(DifferentialForm.scalar(1, 1.0))
    assert delta_c((0, 1), [u1, u2]).allclose(-dy(1, 0))


def test_delta_c_affine_three_pieces():
    rng = np.random.default_rng(1)
    jets = [jet(0.0, rng.standard_normal(2) + 1j * rng.standard_normal(2), np.zeros((2, 2))) for _ in range(3)]
    expected = wedge(dc_scalar(jets[0] - jets[1]), dc_scalar(jets[1] - jets[2]))
    assert delta_c((0, 1, 2), jets).allclose(expected)


def test_sigma_examples():
    rng = np.random.default_rng(2)
    jets = [random_jets(rng, 2, 5) for _ in range(2)]
    f = [ddc_from_hessian(j.hess) for j in jets]
    assert sigma((0, 1), jets, 0).allclose(DifferentialForm.scalar(2, 1.0))
    assert sigma((0,), jets[:1], 2).allclose(wedge(f[0], f[0]))
    assert sigma((0, 1), jets, 1).allclose(f[0] + f[1])
    with pytest.raises(ValueError):
        sigma((0,), jets[:1], -1)


def test_sigma_symmetric_under_permutation():
    rng = np.random.default_rng(3)
    jets = [random_jets(rng, 3, 10) for _ in range(3)]
    a = sigma((0, 1, 2), jets, 2)
    b = sigma((0, 1, 2), [jets[2], jets[0], jets[1]], 2)
    assert a.allclose(b)


def test_compositions_count():
    for n in range(5):
        for parts in range(1, 4):
            combos = list(compositions(n, parts))
            assert len(combos) == math.comb(n + parts - 1, parts - 1)
            assert combos == sorted(combos)


def test_dcJ_single():
    assert dcJ((0,), [jet(0.0, [0.5], [[0.0]])]).allclose(dy(1, 0))


def test_bidegree_examples():
    f = wedge(dz(1, 0), dzbar(1, 0))
    assert bidegree_part(f, 1, 1).allclose(f)
    assert bidegree_part(f, 2, 0).is_zero()
    with pytest.raises(ValueError):
        bidegree_part(f, 1, 0)


def test_evaluate_examples():
    f = wedge(dx(1, 0), dy(1, 0))
    assert evaluate_on_frame(f, np.eye(2)) == pytest.approx(1.0)
    assert evaluate_on_frame(f, np.eye(2)[::-1]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        evaluate_on_frame(f, np.eye(2)[:1])


def test_delta_c_on_negative_y_frame():
    u1 = jet(0.0, [0.0], [[0.0]])
    u2 = jet(0.0, [0.5], [[0.0]])
    assert evaluate_on_frame(delta_c((0, 1), [u1, u2]), np.array([[0.0, -1.0]])).real == pytest.approx(1.0)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        wedge(dz(1, 0), dz(2, 0))


def test_degree_overflow_is_zero():
    f = kahler_form(1)
    g = wedge(f, dz(1, 0))
    assert g.degree == 3 and g.is_zero()


def test_volume_complement():
    assert volume_complement(2, 2).allclose(DifferentialForm.scalar(2, 1.0))
    top = wedge(volume_complement(2, 0), DifferentialForm.scalar(2, 1.0))
    assert evaluate_on_frame(top, np.eye(4)).real == pytest.approx(1.0)


def test_real_hessian_round_trip():
    rng = np.random.default_rng(4)
    j = random_jets(rng, 3, 50)
    R = j.real_hessian
    H, P = complex_hessians_from_real(R)
    assert np.allclose(real_hessian_from_complex(H, P), R)
    j.check()


# -- properties ----------------------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_graded_anticommutativity(dim, p, q, seed):
    rng = np.random.default_rng(seed)
    p, q = min(p, 2 * dim), min(q, 2 * dim)
    a, b = random_form(rng, dim, p), random_form(rng, dim, q)
    lhs, rhs = wedge(a, b), (-1) ** (p * q) * wedge(b, a)
    assert residual(lhs, rhs) <= 1e-12 * max(1.0, lhs.max_abs())


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_associativity(dim, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_form(rng, dim, int(rng.integers(0, 3))) for _ in range(3))
    lhs, rhs = wedge(wedge(a, b), c), wedge(a, wedge(b, c))
    assert residual(lhs, rhs) <= 1e-12 * max(1.0, lhs.max_abs())


def test_wedge_laws_batched_thousand_triples():
    rng = np.random.default_rng(5)
    for dim in (1, 2, 3):
        for p, q, r in [(1, 1, 1), (1, 2, 1), (2, 2, 1)]:
            if p + q + r > 2 * dim:
                continue
            a, b, c = (random_form(rng, dim, d, 1000) for d in (p, q, r))
            assoc = residual(wedge(wedge(a, b), c), wedge(a, wedge(b, c)))
            anti = residual(wedge(a, b), (-1) ** (p * q) * wedge(b, a))
            scale = max(1.0, wedge(wedge(a, b), c).max_abs())
            assert assoc <= 1e-12 * scale and anti <= 1e-12 * scale


def test_bilinearity():
    rng = np.random.default_rng(6)
    a1, a2, b = random_form(rng, 2, 1, 100), random_form(rng, 2, 1, 100), random_form(rng, 2, 2, 100)
    s = rng.standard_normal(100)
    assert wedge(a1 * s + a2, b).allclose(wedge(a1, b) * s + wedge(a2, b))


def test_ddc_real_current_and_bidegree():
    rng = np.random.default_rng(7)
    for dim in (1, 2, 3):
        j = random_jets(rng, dim, 1000)
        f = ddc_from_hessian(j.hess)
        assert f.is_real()
        assert bidegree_part(f, 1, 1).allclose(f)
        assert dc_scalar(j).is_real() and d_scalar(j).is_real()


def test_sigma_is_nn_form():
    rng = np.random.default_rng(8)
    jets = [random_jets(rng, 3, 20) for _ in range(3)]
    s = sigma((0, 1, 2), jets, 2)
    assert bidegree_part(s, 2, 2).allclose(s)


def test_bidegree_parts_reconstruct():
    rng = np.random.default_rng(9)
    f = random_form(rng, 2, 2, 10)
    total = sum((bidegree_part(f, p, 2 - p) for p in range(3)), DifferentialForm.zero(2, 2))
    assert total.allclose(f)


def test_evaluate_multilinear_and_alternating():
    rng = np.random.default_rng(10)
    f = random_form(rng, 2, 3)
    V = rng.standard_normal((3, 4))
    w = rng.standard_normal(4)
    base = evaluate_on_frame(f, V)
    V2 = V.copy()
    V2[0] = 2.5 * V[0] + w
    W = V.copy()
    W[0] = w
    assert evaluate_on_frame(f, V2) == pytest.approx(2.5 * base + evaluate_on_frame(f, W))
    assert evaluate_on_frame(f, V[[1, 0, 2]]) == pytest.approx(-base)


def test_pruning():
    f = DifferentialForm(1, 1, {(0,): 1e-16, (1,): 1.0})
    assert set(f.terms) == {(1,)}
