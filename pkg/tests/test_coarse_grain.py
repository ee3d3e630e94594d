import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hydrolim.coarse_grain import (
    DGSpace,
    ProjectionBundle,
    SplineSpace,
    bspline_eval,
    gram_qjqt,
    inverse_sobolev_constants,
    pnpt_deviation,
)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 200))
def test_gram_deviation_L1_closed_form(J):
    _, dev = gram_qjqt(J, 1)
    assert dev == pytest.approx(1.0 / J**2, rel=1e-9)


def test_gram_is_identity_plus_small():
    G, dev = gram_qjqt(64, 2)
    assert G.shape == (3, 3)
    assert np.allclose(G, G.T)
    assert dev < 0.01


def test_dg_projection_reproduces_dg_profiles():
    # Q_M applied to exact cell averages of a DG profile returns the profile
    rng = np.random.default_rng(4)
    dg = DGSpace(3, 2)
    alpha = rng.standard_normal((3, 3))
    avg = dg.cell_averages(alpha, 8)
    back = dg.project(avg)
    # cell averaging loses the part outside span(gamma rows); invert the Gram
    G = dg.gamma_rows(8).T @ dg.gamma_rows(8) / 8
    assert np.allclose(np.linalg.solve(G, back.T).T, alpha, atol=1e-10)


def test_spline_eval_matches_basis_formula():
    M, L = 5, 2
    sp = SplineSpace(M, L)
    theta = np.linspace(0, 1, 41, endpoint=False)
    rng = np.random.default_rng(5)
    c = rng.standard_normal(M)
    direct = sum(c[j] * bspline_eval(j, theta, M, L) for j in range(M))
    assert np.allclose(sp.eval(c, theta), direct, atol=1e-12)


def test_partition_of_unity():
    theta = np.linspace(0, 1, 101, endpoint=False)
    for L in (0, 1, 2):
        total = sum(bspline_eval(j, theta, 6, L) for j in range(6))
        assert np.allclose(total, 1.0, atol=1e-12)


def test_eval_deriv_matches_finite_differences():
    sp = SplineSpace(4, 2)
    c = np.array([0.3, -1.0, 0.7, 0.2])
    theta = np.array([0.11, 0.37, 0.62, 0.89])
    h = 1e-6
    fd = (sp.eval(c, theta + h) - sp.eval(c, theta - h)) / (2 * h)
    assert np.allclose(sp.eval_deriv(c, theta, 1), fd, atol=1e-5)
    fd2 = (sp.eval(c, theta + h) - 2 * sp.eval(c, theta) + sp.eval(c, theta - h)) / h**2
    assert np.allclose(sp.eval_deriv(c, theta, 2), fd2, atol=1e-3)


def test_to_dg_consistency():
    sp = SplineSpace(4, 1)
    c = np.array([1.0, 0.0, -2.0, 0.5])
    theta = np.linspace(0, 1, 33, endpoint=False)
    assert np.allclose(sp.dg.eval(sp.to_dg(c), theta), sp.eval(c, theta), atol=1e-12)


def test_pnpt_deviation_decreases_in_K():
    devs = [pnpt_deviation(4, K, 2) for K in (4, 8, 16)]
    assert devs[0] > devs[1] > devs[2]


def test_fluctuation_decomposition():
    rng = np.random.default_rng(6)
    pb = ProjectionBundle(3, 8, 1)
    x = rng.standard_normal(pb.N)
    par, perp = pb.fluctuation_decompose(x)
    assert np.allclose(par + perp, x)
    assert abs(par @ perp) < 1e-9
    # the parallel part projects to zero
    assert np.allclose(pb.project_spline(par), 0.0, atol=1e-10)
    # idempotence on the perp part
    p2, q2 = pb.fluctuation_decompose(perp)
    assert np.allclose(q2, perp, atol=1e-9) and np.allclose(p2, 0.0, atol=1e-9)


def test_perp_basis_orthonormal():
    pb = ProjectionBundle(3, 4, 1)
    Q = pb.perp_basis_dg()
    assert Q.shape == (6, 3)
    assert np.allclose(Q.T @ Q / 3.0, np.eye(3), atol=1e-10)
    S = pb.spline.dg_embedding().reshape(6, 3)
    assert np.allclose(S.T @ Q, 0.0, atol=1e-10)


def test_inverse_sobolev_growth():
    c1s = [inverse_sobolev_constants(M, 2)[0] for M in (4, 8, 16)]
    ratios = [b / a for a, b in zip(c1s, c1s[1:])]
    assert all(abs(r - 2.0) < 0.1 for r in ratios)


def test_interpolate_reproduces_splines():
    sp = SplineSpace(6, 1)
    c = np.array([0.2, 1.0, -0.4, 0.0, 0.9, -1.2])
    c2 = sp.interpolate(lambda th: sp.eval(c, th))
    assert np.allclose(c2, c, atol=1e-12)
