import math

import numpy as np
import pytest

from hydrolim.coarse_grain import DGSpace, SplineSpace, ProjectionBundle
from hydrolim.free_energy import (
    PsiJTable,
    bar_H_dg,
    bar_H_spline,
    bar_psi,
    bar_psi_star,
    grand_canonical_means,
    gradient_convergence_check,
    macro_energy,
    meso_and_macro_energies,
    meso_dg_energy,
    meso_spline_energy,
    minimize_fluctuation,
    phi_N_star,
    psi_J,
    psi_J_direct,
)
from hydrolim.potential import Cosine, SingleSitePotential, Zero

LOG_2PI = math.log(2.0 * math.pi)


@pytest.fixture(scope="module")
def gauss():
    return SingleSitePotential(Zero())


@pytest.fixture(scope="module")
def cosine():
    return SingleSitePotential(Cosine(amplitude=0.1, frequency=1.0))


def test_gaussian_dual_is_quadratic(gauss):
    # bar_psi_star(beta_hat) = beta_hat^t G beta_hat / 2 + ln sqrt(2 pi)
    J, L = 8, 1
    G, _ = DGSpace(1, L).gram_qjqt(J)
    for bh in ([0.0, 0.0], [0.5, -0.3], [1.0, 2.0]):
        bh = np.asarray(bh)
        ev = bar_psi_star(gauss, bh, J, L, order=2)
        assert ev.value == pytest.approx(0.5 * bh @ G @ bh + 0.5 * LOG_2PI, abs=1e-10)
        assert np.allclose(ev.gradient, G @ bh, atol=1e-10)
        assert np.allclose(ev.hessian, G, atol=1e-10)


def test_gaussian_primal_is_quadratic(gauss):
    J, L = 8, 1
    G, _ = DGSpace(1, L).gram_qjqt(J)
    y = np.array([0.4, -0.7])
    ev, bh = bar_psi(gauss, y, J, L, order=2)
    Ginv = np.linalg.inv(G)
    assert ev.value == pytest.approx(0.5 * y @ Ginv @ y - 0.5 * LOG_2PI, abs=1e-9)
    assert np.allclose(bh, Ginv @ y, atol=1e-9)
    assert np.allclose(ev.hessian, Ginv, atol=1e-7)


def test_duality_round_trip(cosine):
    J, L = 8, 1
    y = np.array([0.3, -0.2])
    ev, bh = bar_psi(cosine, y, J, L, order=1)
    back = bar_psi_star(cosine, bh, J, L, order=1)
    assert np.allclose(back.gradient, y, atol=1e-9)
    # Fenchel equality at the optimum
    assert ev.value == pytest.approx(bh @ y - back.value, abs=1e-9)


def test_gaussian_constrained_offset(gauss):
    # bar_psi - psi_J = -(L+1)/(2J) ln 2 pi (volume factor of the local CLT)
    for J, L in ((8, 0), (16, 0), (8, 1)):
        beta = np.full(L + 1, 0.3)
        barv, _ = bar_psi(gauss, beta, J, L, order=0)
        full = psi_J(gauss, beta, J, L, order=0)
        # the jacobian and the det factor of the Gaussian density cancel
        expected = -(L + 1) / (2.0 * J) * LOG_2PI
        assert barv.value - full.value == pytest.approx(expected, abs=1e-8)


def test_constrained_vs_direct_fiber(cosine):
    for J in (3, 4):
        a = psi_J(cosine, np.array([0.2]), J, 0, order=0).value
        b = psi_J_direct(cosine, np.array([0.2]), J).value
        assert a == pytest.approx(b, abs=1e-6)


def test_grand_canonical_means_consistency(cosine):
    J, L = 8, 1
    beta = np.array([0.4, 0.1])
    m_hat, m = grand_canonical_means(cosine, beta, J, L)
    assert m_hat.shape == m.shape == (J,)
    assert np.allclose(cosine.log_mgf(m_hat, order=1), m, atol=1e-10)


def test_table_matches_direct(cosine):
    J, L = 16, 0
    table = PsiJTable(cosine, J, L)
    for b in (np.array([0.17]), np.array([-1.23]), np.array([2.6])):
        direct = psi_J(cosine, b, J, L, order=0).value
        assert table.eval(b).value == pytest.approx(direct, abs=1e-6)


def test_table_out_of_box_raises(cosine):
    table = PsiJTable(cosine, 8, 0, box=2.0)
    with pytest.raises(ValueError):
        table.eval(np.array([3.5]))


def test_bar_H_dg_is_block_sum(cosine):
    M, L, K = 2, 0, 8
    table = PsiJTable(cosine, K, L)
    alpha = np.array([[0.3], [-0.5]])
    ev = bar_H_dg(cosine, alpha, K * M, M, L, order=1, table=table)
    expected = sum(table.eval(alpha[m]).value for m in range(M)) / M
    assert ev.value == pytest.approx(expected, abs=1e-10)


def test_bar_H_spline_L0_reduces_to_dg(cosine):
    # with indicator splines there is no transverse fiber to integrate
    M, L, K = 2, 0, 8
    table = PsiJTable(cosine, K, L)
    y = np.array([0.4, -0.1])
    hs = bar_H_spline(cosine, y, K * M, M, L, order=1, table=table)
    hd = bar_H_dg(cosine, y[:, None], K * M, M, L, order=1, table=table)
    assert hs.value == pytest.approx(hd.value, abs=1e-10)
    assert np.allclose(hs.gradient, hd.gradient.reshape(-1) / M, atol=1e-8)


def test_gaussian_spline_gradient(gauss):
    # Gaussian marginals are explicit: the spline Hamiltonian is the Schur
    # complement quadratic form in the (1/M)-weighted block geometry
    M, L, K = 2, 1, 8
    table = PsiJTable(gauss, K, L)
    pb = ProjectionBundle(M, K, L)
    GK = DGSpace(1, L).gram_qjqt(K)[0]
    B = np.kron(np.eye(M), np.linalg.inv(GK)) / M
    S = pb.spline.dg_embedding().reshape(M * (L + 1), M)
    Q = pb.perp_basis_dg()
    Hyy = S.T @ B @ S
    Hyz = S.T @ B @ Q
    Hzz = Q.T @ B @ Q
    schur = Hyy - Hyz @ np.linalg.solve(Hzz, Hyz.T)
    y = np.array([0.5, -0.3])
    ev = bar_H_spline(gauss, y, K * M, M, L, order=1, table=table)
    assert np.allclose(ev.gradient, schur @ y, atol=1e-7)


def test_meso_duality(cosine):
    # the spline energy defined by dual maximization equals the nested
    # minimization over the transverse fiber
    M, K, L = 2, 8, 1
    y = np.array([0.3, -0.4])
    direct = meso_spline_energy(cosine, y, M, K, L).value
    res = minimize_fluctuation(cosine, y, M * K, M, L)
    # evaluate the dg energy at the minimizing fluctuation
    sp = SplineSpace(M, L)
    alpha = sp.to_dg(y) + res["z_star"]
    nested = meso_dg_energy(cosine, alpha, K).value
    assert direct == pytest.approx(nested, abs=1e-9)


def test_gaussian_macro_energy(gauss):
    # phi(m) = m^2/2 - ln sqrt(2 pi); integral of sin^2 is 1/2
    ev = macro_energy(gauss, lambda th: np.sin(2 * np.pi * th))
    assert ev.value == pytest.approx(0.25 - 0.5 * LOG_2PI, abs=1e-8)


def test_gaussian_phi_N_star(gauss):
    # (1/N) sum psi_star over cell averages: for the Gaussian,
    # psi_star(s) = s^2/2 + ln sqrt(2 pi) and int sin^2 = 1/2
    zhat = lambda th: 0.5 * np.sin(2 * np.pi * np.asarray(th))
    coarse = phi_N_star(gauss, zhat, 256)
    assert coarse.value == pytest.approx(0.0625 + 0.5 * LOG_2PI, abs=1e-4)


def test_energy_dispatcher(gauss):
    zeta = lambda th: 0.3 * np.sin(2 * np.pi * np.asarray(th))
    out = meso_and_macro_energies(gauss, zeta, "H_macro")
    assert out.value == pytest.approx(macro_energy(gauss, zeta).value)
    with pytest.raises(ValueError):
        meso_and_macro_energies(gauss, zeta, "bogus")


def test_gradient_convergence_decreases(cosine):
    zeta = lambda th: 0.5 * np.sin(2 * np.pi * np.asarray(th))
    e8 = gradient_convergence_check(cosine, zeta, 8, 3, 1)
    e16 = gradient_convergence_check(cosine, zeta, 16, 3, 1)
    assert e16 < e8
