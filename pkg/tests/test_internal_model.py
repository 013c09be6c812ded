import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from dimp import internal_model as im
from dimp import matops
from dimp.internal_model import AvoidanceError
from dimp.plant import ZeroSet

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def zeroset(zs, tol=1e-7):
    zs = tuple(complex(z) for z in zs)
    pi = tuple(z for z in zs if z.real >= -tol)
    return ZeroSet(zs, pi, tuple(z for z in pi if abs(z.real) <= tol), tol)


def test_minpoly_rotation():
    np.testing.assert_allclose(im.minimal_polynomial_roots([[0, 2], [-2, 0]]), [2j, -2j], atol=1e-12)


def test_minpoly_zero_matrix_is_shorter_than_charpoly():
    np.testing.assert_array_equal(im.minimal_polynomial_roots(np.zeros((3, 3))), [0])


def test_minpoly_repeated_blocks():
    S = scipy.linalg.block_diag(ROT, ROT)
    lam = im.minimal_polynomial_roots(S)
    np.testing.assert_allclose(lam, [1j, -1j], atol=1e-9)
    # brute force: s^2 + 1 annihilates S
    np.testing.assert_allclose(S @ S + np.eye(4), 0, atol=1e-12)


def test_minpoly_jordan_block_keeps_multiplicity():
    lam = im.minimal_polynomial_roots([[0, 1], [0, 0]])
    np.testing.assert_array_equal(lam, [0, 0])


def test_canonical_order_odd_k():
    S = scipy.linalg.block_diag(2 * ROT, [[0.0]])
    lam = im.minimal_polynomial_roots(S)
    np.testing.assert_allclose(lam, [2j, -2j, 0], atol=1e-9)
    np.testing.assert_allclose(lam.imag, im.expand_beta(lam.imag[:1], 3), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=3, unique=True))
def test_minpoly_annihilates_block_rotations(freqs):
    S = scipy.linalg.block_diag(*[f * ROT for f in freqs])
    lam = im.minimal_polynomial_roots(S)
    assert lam.size == 2 * len(freqs)
    c = matops.coefficients_from_roots(lam)
    assert np.linalg.norm(matops.polyval_matrix(c, S)) <= 1e-6 * max(freqs) ** lam.size
    # upper half first, descending
    up = lam[: len(freqs)].imag
    assert np.all(np.diff(up) < 0)
    np.testing.assert_allclose(lam[len(freqs):], np.conj(lam[: len(freqs)]))


def test_beta_expand_reduce():
    np.testing.assert_array_equal(im.expand_beta([2.0], 2), [2.0, -2.0])
    np.testing.assert_array_equal(im.expand_beta([2.0], 3), [2.0, -2.0, 0.0])
    np.testing.assert_array_equal(im.reduce_beta([2.0, -2.0, 0.0]), [2.0])


def test_consensus_fixed_point():
    a = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    np.testing.assert_array_equal(im.consensus_step_beta(np.full((3, 2), 2.0), a), 0)


def test_consensus_pull_from_exosystem():
    a = np.array([[0, 0], [1, 0]], float)
    d = im.consensus_step_beta([[2.0], [0.0]], a, fixed=0)
    np.testing.assert_array_equal(d, [[0.0], [2.0]])


def test_consensus_converges_on_tree():
    a = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [1, 0, 1, 0]], float)
    b = np.array([[2.0], [0.0], [-1.0], [5.0]])
    h = 0.01
    for _ in range(3000):
        b = b + h * im.consensus_step_beta(b, a, fixed=0)
    np.testing.assert_allclose(b, 2.0, atol=1e-6)


@pytest.mark.parametrize("bd, pt, expected", [
    (0.3, [], 0.0),
    (0.0, [0.6j, -0.6j], 0.6),
    (0.6, [0.6j, -0.6j], 0.0),
    (2.0, [0.6j, -0.6j], 1.4),
])
def test_gamma(bd, pt, expected):
    assert im.gamma(bd, pt) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("g, rho, expected", [
    (0.7, 0.7, 0.0),
    (0.0, 0.7, 0.7),
    (0.35, 0.7, np.sqrt(0.3675)),
    (1.0, 0.7, 0.0),
])
def test_alpha(g, rho, expected):
    assert im.alpha(g, rho) == pytest.approx(expected, abs=1e-15)


def test_alpha_exosystem_node_is_zero():
    assert im.alpha(0.0, 0.7, exosystem=True) == 0.0


@pytest.mark.parametrize("i", [1, 2, 3, 4])
def test_radius_imaginary_zeros_only(i):
    b = 0.5 + 0.1 * i
    r = im.semicircle_radius([2j, -2j], zeroset([1j * b, -1j * b]))
    assert r == pytest.approx((2 - b) / 2, abs=1e-12)


def test_radius_without_imaginary_zeros():
    assert im.semicircle_radius([2j, -2j], zeroset([])) == 0.0
    assert im.semicircle_radius([2j, -2j], zeroset([1.0])) == 0.0


def test_radius_mixed_zero_sets():
    # distances: exosystem 1, open zero 0.5; half the smaller
    assert im.semicircle_radius([2j], zeroset([1j, 0.5 + 1j])) == pytest.approx(0.25)


def test_radius_rejects_zero_on_exosystem():
    with pytest.raises(AvoidanceError):
        im.semicircle_radius([2j, -2j], zeroset([2j, -2j]))


def test_radius_coefficient_bounds():
    with pytest.raises(ValueError):
        im.semicircle_radius([2j], zeroset([1j]), coeff=1.0)


def test_internal_model_q1():
    r = im.build_internal_model([2j, -2j], 1)
    np.testing.assert_array_equal(r.G, [[0, 1], [-4, 0]])
    np.testing.assert_array_equal(r.H, [[0], [1]])


def test_internal_model_q2():
    r = im.build_internal_model([2j, -2j], 2)
    np.testing.assert_array_equal(r.G, scipy.linalg.block_diag(r.Gp, r.Gp))
    np.testing.assert_array_equal(r.H, scipy.linalg.block_diag([[0], [1]], [[0], [1]]))


def test_internal_model_apex():
    r = im.build_internal_model([0.7, 0.7], 1)
    # (s - 0.7)^2 = s^2 - 1.4 s + 0.49
    np.testing.assert_allclose(r.Gp, [[0, 1], [-0.49, 1.4]], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 1), st.integers(1, 3))
def test_internal_model_spectrum_has_multiplicity_q(b, a, q):
    lam = np.array([a + 1j * b, a - 1j * b])
    r = im.build_internal_model(lam, q)
    assert np.isrealobj(r.coeffs)
    assert matops.match_spectra(np.linalg.eigvals(r.G), np.tile(lam, q)) <= 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_batch_matches_scalar(seed, kh):
    rng = np.random.default_rng(seed)
    geoms, rows = [], []
    for _ in range(4):
        z = rng.uniform(0.2, 1.5)
        geoms.append(im.geometry_for([3j, -3j], zeroset([1j * z, -1j * z])))
        rows.append([1j * z, -1j * z])
    bh = rng.uniform(-2, 2, (4, kh))
    got = im.batch_alpha(bh, [g.rho for g in geoms], np.array(rows))
    want = np.array([g.alphas(row) for g, row in zip(geoms, bh)])
    np.testing.assert_allclose(got, want, atol=1e-14)
    lam = np.array([im.lambda_from_reduced(row, g, 2 * kh) for g, row in zip(geoms, bh)])
    coeffs = im.batch_coefficients(lam)
    for c, l in zip(coeffs, lam):
        np.testing.assert_allclose(c, matops.coefficients_from_roots(l).real, atol=1e-12)


def test_batch_alpha_rows_without_zeros():
    pad = np.array([[np.inf, np.inf], [0.6j, -0.6j]])
    got = im.batch_alpha(np.array([[0.6], [0.6]]), [0.0, 0.7], pad)
    np.testing.assert_allclose(got, [[0.0], [0.7]])


@pytest.mark.parametrize("i", [1, 2, 3, 4])
def test_estimate_path_avoids_zero_discs(i):
    b = 0.5 + 0.1 * i
    geom = im.geometry_for([2j, -2j], zeroset([1j * b, -1j * b]))
    for bh in np.linspace(-0.5, 2.5, 3001):
        lam = im.lambda_from_reduced([bh], geom, 2)
        assert np.isclose(lam[0], np.conj(lam[1]))
        d = min(abs(l - z) for l in lam for z in geom.pi_tilde)
        assert d >= geom.rho * (1 - 1e-9)


def test_estimate_real_parts_nonnegative_and_zero_at_target():
    geom = im.geometry_for([2j, -2j], zeroset([0.6j, -0.6j]))
    np.testing.assert_allclose(im.lambda_from_reduced([2.0], geom, 2), [2j, -2j])
    assert np.all(geom.alphas(np.linspace(-3, 3, 101)) >= 0)
