"""End-to-end acceptance checks: closed forms, scaling rates, convexity,
log-Sobolev constants, and the lattice-to-diffusion comparison, each with an
explicit wall-clock budget."""

import math
import time

import numpy as np
import pytest

from hydrolim.coarse_grain import (
    DGSpace,
    ProjectionBundle,
    SplineSpace,
    gram_qjqt,
    inverse_sobolev_constants,
    pnpt_deviation,
)
from hydrolim.dynamics import SdeConfig, run_ensemble
from hydrolim.experiments import fit_slope
from hydrolim.free_energy import (
    PsiJTable,
    bar_H_spline,
    bar_psi,
    gradient_convergence_check,
    psi_J,
    psi_J_direct,
)
from hydrolim.lsi import conditional_lsi_pipeline, two_scale_combine
from hydrolim.pde import PdeConfig, cfl_dt, solve
from hydrolim.potential import Cosine, SingleSitePotential, Zero

LOG_2PI = math.log(2.0 * math.pi)


@pytest.fixture(scope="module")
def gauss():
    return SingleSitePotential(Zero())


@pytest.fixture(scope="module")
def cosine():
    return SingleSitePotential(Cosine(amplitude=0.1, frequency=1.0))


def test_gaussian_closed_forms(gauss):
    t0 = time.time()
    # psi_star(0) = ln sqrt(2 pi)
    assert gauss.log_mgf(0.0) == pytest.approx(0.5 * LOG_2PI, abs=1e-6)
    # phi(m) = m^2/2 - ln sqrt(2 pi)
    for m in (-1.0, 0.0, 0.5, 2.0):
        assert gauss.legendre_phi(m) == pytest.approx(0.5 * m * m - 0.5 * LOG_2PI, abs=1e-6)
    # h(m, z) = exp(-z^2/2), independent of m
    z = np.linspace(-3.0, 3.0, 13)
    for m in (0.0, 0.7):
        assert np.allclose(gauss.char_fn(m, z), np.exp(-0.5 * z * z), atol=1e-6)
    # scalar block density at the origin
    from hydrolim.clt import density_from_means

    val, _ = density_from_means(gauss, np.zeros(8), 8, 0)
    assert val == pytest.approx((2 * math.pi) ** -0.5, abs=1e-6)
    # volume correction of the constrained free energy
    for J in (4, 8):
        beta = np.array([0.3])
        barv, _ = bar_psi(gauss, beta, J, 0, order=0)
        full = psi_J(gauss, beta, J, 0, order=0)
        assert barv.value - full.value == pytest.approx(-LOG_2PI / (2 * J), abs=1e-6)
    assert time.time() - t0 < 10.0


def test_block_average_gram_rates():
    t0 = time.time()
    Js = [8, 16, 32, 64, 128]
    # L = 1: the deviation is exactly 1/J^2
    for J in Js:
        _, dev = gram_qjqt(J, 1)
        assert dev == pytest.approx(1.0 / J**2, rel=1e-10)
    # L = 2: rate -2 by fit
    fit = fit_slope(Js, [gram_qjqt(J, 2)[1] for J in Js])
    assert abs(fit.slope + 2.0) <= 0.1
    # spline projector deviation: rate -2 in the cells-per-block count
    Ks = [4, 8, 16, 32]
    fitK = fit_slope(Ks, [pnpt_deviation(4, K, 2) for K in Ks])
    assert abs(fitK.slope + 2.0) <= 0.1
    assert time.time() - t0 < 30.0


def test_envelope_convergence_rate(cosine):
    t0 = time.time()
    Js = [8, 16, 32, 64]
    for L in (0, 1, 2):
        beta = np.full(L + 1, 0.25 / (L + 1))
        diffs = []
        for J in Js:
            barv, _ = bar_psi(cosine, beta, J, L, order=0)
            full = psi_J(cosine, beta, J, L, order=0)
            diffs.append(abs(barv.value - full.value))
        fit = fit_slope(Js, diffs)
        assert abs(fit.slope + 1.0) <= 0.2, f"L={L}: slope {fit.slope}"
    # small blocks against direct fiber quadrature
    for J in (3, 4, 5, 6):
        a = psi_J(cosine, np.array([0.25]), J, 0, order=0).value
        b = psi_J_direct(cosine, np.array([0.25]), J).value
        assert a == pytest.approx(b, abs=1e-4)
    assert time.time() - t0 < 600.0


def test_energy_convexity(gauss, cosine):
    t0 = time.time()
    # block free energy: Hessian inside a fixed positive band on |beta| <= 3
    band = (0.25, 4.0)
    for J in (32, 64):
        table = PsiJTable(cosine, J, 0)
        for b in np.linspace(-3.0, 3.0, 13):
            h = float(np.atleast_2d(table.eval(np.array([b]), order=2).hessian)[0, 0])
            assert band[0] <= h <= band[1], f"J={J}, beta={b}: {h}"
    # spline Hamiltonian: Gaussian marginalization has a closed form
    M, L, K = 2, 1, 16
    pb = ProjectionBundle(M, K, L)
    GK = DGSpace(1, L).gram_qjqt(K)[0]
    B = np.kron(np.eye(M), np.linalg.inv(GK)) / M
    S = pb.spline.dg_embedding().reshape(M * (L + 1), M)
    Q = pb.perp_basis_dg()
    schur = S.T @ B @ S - (S.T @ B @ Q) @ np.linalg.solve(Q.T @ B @ Q, Q.T @ B @ S)
    tg = PsiJTable(gauss, K, L)
    ev = bar_H_spline(gauss, np.array([0.4, -0.2]), K * M, M, L, order=2, table=tg)
    assert np.abs(ev.hessian - schur).max() < 1e-6
    # perturbed potential: positivity over a y grid
    tc = PsiJTable(cosine, K, L)
    Gm = SplineSpace(M, L).gram()
    from scipy.linalg import eigh

    for y in ([0.0, 0.0], [0.5, -0.3], [-0.8, 0.8]):
        evc = bar_H_spline(cosine, np.asarray(y), K * M, M, L, order=2, table=tc)
        assert min(eigh(evc.hessian, Gm, eigvals_only=True)) > 0.0
    assert time.time() - t0 < 1200.0


def test_gradient_convergence_rate(cosine):
    t0 = time.time()
    zeta = lambda th: 0.5 * np.sin(2 * np.pi * np.asarray(th))
    Ks = [8, 16, 32]
    errs = [gradient_convergence_check(cosine, zeta, K, 3, 1) for K in Ks]
    fit = fit_slope(Ks, errs)
    assert abs(fit.slope + 1.0) <= 0.3, f"slope {fit.slope}, errors {errs}"
    assert time.time() - t0 < 1200.0


def test_spline_approximation_rates():
    t0 = time.time()
    from numpy.polynomial.legendre import leggauss

    zeta = lambda th: np.sin(2 * np.pi * np.asarray(th))
    d2zeta = lambda th: -(2 * np.pi) ** 2 * np.sin(2 * np.pi * np.asarray(th))
    Ms = [4, 8, 16, 32]
    nodes, wts = leggauss(32)
    e_i, e_p, c1s, c2s = [], [], [], []
    for M in Ms:
        sp = SplineSpace(M, 2)
        pb = ProjectionBundle(M, 16, 2)
        u8, w8 = leggauss(8)
        cells = (np.arange(16 * M)[:, None] + 0.5 * (u8[None, :] + 1.0)) / (16 * M)
        avgs = (np.asarray(zeta(cells)) @ w8) * 0.5
        ci, cp = sp.interpolate(zeta), pb.project_spline(avgs)
        th = ((np.arange(M)[:, None] + 0.5 * (nodes[None, :] + 1.0)) / M).reshape(-1)
        for c, acc in ((ci, e_i), (cp, e_p)):
            d = sp.eval_deriv(c, th, order=2) - d2zeta(th)
            acc.append(math.sqrt(float((d.reshape(M, -1) ** 2 @ wts).sum() * 0.5 / M)))
        c1, c2 = inverse_sobolev_constants(M, 2)
        c1s.append(c1)
        c2s.append(c2)
    assert abs(fit_slope(Ms, e_i).slope + 1.0) <= 0.1
    assert abs(fit_slope(Ms, e_p).slope + 1.0) <= 0.1
    assert abs(fit_slope(Ms, c1s).slope - 1.0) <= 0.05
    assert abs(fit_slope(Ms, c2s).slope - 1.0) <= 0.05
    assert time.time() - t0 < 60.0


def test_lsi_chain(gauss, cosine):
    t0 = time.time()
    # zero coupling: combination is exactly the minimum
    for r1, r2 in ((1.0, 2.0), (0.3, 0.1), (5.0, 5.0)):
        assert two_scale_combine(r1, r2, 0.0) == min(r1, r2)
    # Gaussian worked chain
    g = conditional_lsi_pipeline(gauss, 4, 1.0)
    assert g["rho_dg"] == pytest.approx(0.5 * (3.0 - math.sqrt(5.0)), abs=1e-12)
    assert g["rho_final"] == pytest.approx(0.09788696740969294, abs=1e-12)
    # positivity for the perturbed potential, uniformly over the block sizes
    for J in (2, 4, 8):
        assert conditional_lsi_pipeline(cosine, J, 0.9)["rho_final"] > 0.0
    assert time.time() - t0 < 1.0


def test_dynamics_match_diffusion_limit(gauss, cosine):
    t0 = time.time()
    # exact mean conservation along trajectories
    cfg = SdeConfig(N=64, dt=0.25 / (64 * 64 * (1 + cosine.c2_bound)), T=0.005,
                    ensemble_size=4, seed=0,
                    profile=lambda th: 0.3 * np.sin(2 * np.pi * th))
    out = run_ensemble(cosine, cfg)
    assert out["max_mean_drift"] < 1e-12

    # diffusion solver against the closed-form heat decay
    G, T = 256, 0.1
    sol = solve(gauss, PdeConfig(G=G, dt=cfl_dt(G, 1.0), T=T,
                                 profile=lambda th: np.sin(2 * np.pi * th)))
    theta = np.arange(G) / G
    for t, prof in zip(sol.times, sol.profiles):
        exact = np.exp(-4 * np.pi**2 * t) * np.sin(2 * np.pi * theta)
        assert np.abs(prof - exact).max() < 1e-3

    # lattice ensembles approach the nonlinear limit as N grows
    T, ens = 0.05, 256
    prof = lambda th: 0.5 * np.sin(2 * np.pi * np.asarray(th))
    Gc = 1024
    ref = solve(cosine, PdeConfig(G=Gc, dt=cfl_dt(Gc, 2.0 + cosine.c2_bound),
                                  T=T, profile=prof),
                record_times=np.linspace(0.0, T, 11))
    ref.time_tol = 1e-3
    finals = []
    for N in (64, 256, 1024):
        cfg = SdeConfig(N=N, dt=0.25 / (N * N * (1 + cosine.c2_bound)), T=T,
                        ensemble_size=ens, seed=0, profile=prof)
        res = run_ensemble(cosine, cfg, reference=ref)
        finals.append(float(res["mean_sq_hm1"][-1]))
    assert finals[0] > finals[1] > finals[2], finals
    fit = fit_slope([64, 256, 1024], finals)
    print(f"hydrodynamic comparison: fitted exponent {fit.slope:.3f}, "
          f"errors {finals}")
    assert time.time() - t0 < 1800.0
