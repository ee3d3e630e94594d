"""Free-energy surfaces, from one block to the macroscopic limit.

Per block of J sites with polynomial degree L:

* bar_psi_star: the dual free energy (1/J) sum_j psi_star(beta_hat . gamma^j),
  with analytic gradient and Hessian.
* bar_psi: its Legendre transform, by Newton on the analytic gradient.
* psi_J: the constrained free energy, assembled from bar_psi, the gamma
  Jacobian and the block-fluctuation density at zero (Fourier route), with a
  direct fiber-quadrature oracle for small J at L = 0.

On M blocks (N = K*M sites):

* bar_H_dg: the coarse-grained Hamiltonian on the discontinuous space,
  a decoupled block sum of psi_K.
* bar_H_spline: the coarse-grained Hamiltonian on the spline space, obtained
  by integrating out the orthogonal fluctuation (Laplace recentering at the
  minimizer, then tensor quadrature; dimension L*M <= 4).
* mesoscopic energies (block sums of bar_psi / their spline-constrained
  transform) and the macroscopic energy int phi(zeta).

Conventions. A DG profile is an (M, L+1) coefficient array with inner product
(1/M) sum_m <._m, ._m>; gradients of DG functionals are arrays representing
the differential against that inner product. Gradients with respect to spline
coefficients are plain partial derivatives; divide by the spline Gram matrix
to get the L^2 representative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clt import density_from_means, jacobian_jq
from .coarse_grain import DGSpace, SplineSpace

__all__ = [
    "FreeEnergyEval",
    "bar_psi_star",
    "bar_psi",
    "grand_canonical_means",
    "psi_J",
    "psi_J_direct",
    "PsiJTable",
    "bar_H_dg",
    "bar_H_spline",
    "minimize_fluctuation",
    "meso_dg_energy",
    "meso_spline_energy",
    "macro_energy",
    "phi_N_star",
    "meso_and_macro_energies",
    "gradient_convergence_check",
]


@dataclass
class FreeEnergyEval:
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None
    method: str = "analytic"

    def __post_init__(self):
        if self.hessian is not None:
            H = np.asarray(self.hessian)
            if H.ndim == 2 and np.abs(H - H.T).max() > 1e-10:
                raise ValueError("Hessian not symmetric to 1e-10")


# -- single block, dual side -------------------------------------------------

def bar_psi_star(pot, beta_hat, J, L, order=2):
    """(1/J) sum_j psi_star(beta_hat . gamma^j) with analytic derivatives."""
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    rows = DGSpace(1, L).gamma_rows(J)
    s = rows @ beta_hat
    value = float(np.mean(pot.log_mgf(s, 0)))
    grad = hess = None
    if order >= 1:
        grad = rows.T @ pot.log_mgf(s, 1) / J
    if order >= 2:
        hess = (rows * pot.log_mgf(s, 2)[:, None]).T @ rows / J
    return FreeEnergyEval(value=value, gradient=grad, hessian=hess)


def bar_psi(pot, beta, J, L, order=2):
    """Legendre transform of bar_psi_star; returns (eval, beta_hat_max).

    Newton on grad bar_psi_star(beta_hat) = beta with the analytic Hessian
    and backtracking on the residual norm. Gradient of the transform is
    beta_hat_max, Hessian its inverse-Hessian identity.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    G, _ = DGSpace(1, L).gram_qjqt(J)
    bh = np.linalg.solve(G, beta)  # exact for the pure Gaussian case
    res = None
    for _ in range(80):
        fe = bar_psi_star(pot, bh, J, L, order=2)
        r = fe.gradient - beta
        nr = float(np.linalg.norm(r))
        if nr < 1e-12:
            break
        step = np.linalg.solve(fe.hessian, r)
        t = 1.0
        while t > 1e-8:
            cand = bh - t * step
            nrc = float(
                np.linalg.norm(bar_psi_star(pot, cand, J, L, order=1).gradient - beta)
            )
            if nrc < nr:
                bh = cand
                break
            t *= 0.5
        else:
            raise RuntimeError("Legendre Newton stalled: convexity violated?")
    else:
        raise RuntimeError("Legendre Newton did not converge")
    star = bar_psi_star(pot, bh, J, L, order=2)
    value = float(beta @ bh - star.value)
    grad = bh if order >= 1 else None
    hess = np.linalg.inv(star.hessian) if order >= 2 else None
    return FreeEnergyEval(value=value, gradient=grad, hessian=hess), bh


def grand_canonical_means(pot, beta, J, L):
    """Site means of the product ensemble fixing the block average.

    Returns (m_hat, m): dual means m_hat_j = beta_hat_max . gamma^j and the
    site means m_j = psi_star'(m_hat_j). Q_1 applied to m returns beta.
    """
    _, bh = bar_psi(pot, beta, J, L, order=0)
    rows = DGSpace(1, L).gamma_rows(J)
    m_hat = rows @ bh
    m = pot.log_mgf(m_hat, 1)
    return m_hat, np.atleast_1d(m)


# -- single block, constrained free energy -----------------------------------

def psi_J(pot, beta, J, L, order=0, table=None, tolerance=1e-6):
    """Constrained block free energy via the Fourier density route.

        psi_J = bar_psi - (1/J) [ ln (det Q1 J Q1^t)^{1/2} + ln g(0) ],

    with g(0) the density at zero of the sqrt(J)-rescaled block fluctuation.
    Derivative corrections use grad g / g and the matching Hessian formula,
    with g-derivatives by centered differences in beta.
    """
    from .clt import clt_density

    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if table is not None:
        return table.eval(beta, order=order)
    bar, _ = bar_psi(pot, beta, J, L, order=order)
    de = clt_density(pot, beta, J, L, order=order, tolerance=tolerance)
    lnjac = math.log(jacobian_jq(J, L))
    value = bar.value - (lnjac + math.log(de.value)) / J
    grad = hess = None
    if order >= 1:
        grad = bar.gradient - de.gradient / (J * de.value)
    if order >= 2:
        g = de.gradient / de.value
        hess = bar.hessian - (de.hessian / de.value - np.outer(g, g)) / J
    return FreeEnergyEval(value=value, gradient=grad, hessian=hess, method="cramer_fourier")


def psi_J_direct(pot, beta, J, nodes=None):
    """Fiber-quadrature oracle for L = 0, J <= 6.

    psi_J(b) = -(1/J) ln int_{mean x = b} e^{-sum psi(x_i)} dS with Lebesgue
    measure in orthonormal fiber coordinates; the Gaussian part factors as
    e^{-J b^2/2 - a J b} times a standard Gaussian in the J-1 fiber directions.
    """
    from numpy.polynomial.hermite_e import hermegauss
    from scipy.linalg import null_space

    if J > 6:
        raise ValueError("direct fiber quadrature limited to J <= 6")
    b = float(np.atleast_1d(beta)[0])
    d = J - 1
    if nodes is None:
        nodes = {1: 120, 2: 60, 3: 40, 4: 28, 5: 22}[d]
    V = null_space(np.ones((1, J)))  # (J, J-1), orthonormal
    u, w = hermegauss(nodes)
    grids = np.meshgrid(*([u] * d), indexing="ij")
    t = np.stack([g.reshape(-1) for g in grids], axis=1)
    wt = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).reshape(-1)
    x = b + t @ V.T
    corr = np.exp(-pot.perturbation.value(x).sum(axis=1))
    integral = float(wt @ corr)  # weight e^{-|t|^2/2} already in hermegauss
    lnI = -0.5 * J * b * b - pot.a * J * b + math.log(integral)
    return FreeEnergyEval(value=-lnI / J, method="direct_quadrature")


class _TensorCubic:
    """Interpolating tensor-product cubic B-spline on a rectangular grid.

    Built by factorized fits along each axis; reproduces polynomials up to
    degree 3 per axis exactly, so quadratic free-energy surfaces incur no
    interpolation error.
    """

    def __init__(self, axes, values):
        from scipy.interpolate import NdBSpline, make_interp_spline

        c = np.asarray(values, dtype=float)
        ts = []
        for i, ax in enumerate(axes):
            spl = make_interp_spline(ax, np.moveaxis(c, i, 0), k=3)
            ts.append(spl.t)
            c = np.moveaxis(spl.c, 0, i)
        self._spl = NdBSpline(tuple(ts), c, k=3)
        self.lo = np.array([ax[0] for ax in axes])
        self.hi = np.array([ax[-1] for ax in axes])

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        if np.any(pts < self.lo) or np.any(pts > self.hi):
            raise ValueError("point outside the interpolation box")
        return self._spl(pts)


class PsiJTable:
    """Tensor cubic interpolation of psi_J over a beta box.

    Stores both the full value and the ln g(0) correction on the grid: batch
    evaluations (coarse-grained Hamiltonian scans, fluctuation quadrature)
    read the value table; single-point FreeEnergyEvals recompute bar_psi
    analytically and interpolate only the small correction. Cubic
    interpolation reproduces quadratics exactly, so the pure-Gaussian case
    incurs no table error.
    """

    def __init__(self, pot, J, L, box=5.0, n=None, tolerance=1e-6):
        self.pot, self.J, self.L = pot, J, L
        self.box = float(box)
        d = L + 1
        if n is None:
            # keep the grid spacing near 0.45 in the scanned dimensions
            n = max(9, int(2 * box / 0.45) + 1) if d <= 2 else 9
        axes = [np.linspace(-box, box, n)] * d
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.reshape(-1) for g in mesh], axis=1)
        self.lnjac = math.log(jacobian_jq(J, L))
        lng = np.empty(pts.shape[0])
        val = np.empty(pts.shape[0])
        plan = None
        for i, b in enumerate(pts):
            _, m = grand_canonical_means(pot, b, J, L)
            g0, diag = density_from_means(pot, m, J, L, tolerance=tolerance, plan=plan)
            if plan is None:
                plan = (diag.box_radius, diag.n_xi)
            lng[i] = math.log(g0)
            bar, _ = bar_psi(pot, b, J, L, order=0)
            val[i] = bar.value - (self.lnjac + lng[i]) / J
        shape = (n,) * d
        self._val = _TensorCubic(axes, val.reshape(shape))
        self._lng = _TensorCubic(axes, lng.reshape(shape))

    def value_many(self, betas):
        """psi_J at a batch of points, shape (P, L+1) -> (P,)."""
        return self._val(np.atleast_2d(betas))

    def grad_many(self, betas, step=1e-3):
        """Centered-difference gradients of the interpolated value table."""
        betas = np.atleast_2d(betas)
        P, d = betas.shape
        out = np.empty((P, d))
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            out[:, i] = (self._val(betas + e) - self._val(betas - e)) / (2 * step)
        return out

    def eval(self, beta, order=0, step=1e-3):
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        d = self.L + 1
        bar, _ = bar_psi(self.pot, beta, self.J, self.L, order=order)
        lng = float(self._lng(beta[None])[0])
        value = bar.value - (self.lnjac + lng) / self.J
        grad = hess = None
        if order >= 1:
            dg = np.empty(d)
            for i in range(d):
                e = np.zeros(d)
                e[i] = step
                dg[i] = (self._lng((beta + e)[None])[0] - self._lng((beta - e)[None])[0]) / (
                    2 * step
                )
            grad = bar.gradient - dg / self.J
        if order >= 2:
            hess = np.empty((d, d))
            c = lng
            for i in range(d):
                ei = np.zeros(d)
                ei[i] = step
                pi = float(self._lng((beta + ei)[None])[0])
                mi = float(self._lng((beta - ei)[None])[0])
                hess[i, i] = (pi - 2 * c + mi) / step**2
                for k in range(i + 1, d):
                    ek = np.zeros(d)
                    ek[k] = step
                    pp = float(self._lng((beta + ei + ek)[None])[0])
                    pm = float(self._lng((beta + ei - ek)[None])[0])
                    mp = float(self._lng((beta - ei + ek)[None])[0])
                    mm = float(self._lng((beta - ei - ek)[None])[0])
                    hess[i, k] = hess[k, i] = (pp - pm - mp + mm) / (4 * step**2)
            hess = bar.hessian - hess / self.J
        return FreeEnergyEval(value=value, gradient=grad, hessian=hess, method="cramer_fourier")


# -- coarse-grained Hamiltonians --------------------------------------------

def bar_H_dg(pot, alpha, N, M, L, order=2, table=None, tolerance=1e-6):
    """H on the discontinuous space: (1/M) sum_m psi_K(alpha^(m)), K = N/M.

    gradient: (M, L+1) array of per-block psi_K gradients (differential
    against the (1/M)-weighted inner product); hessian: (M, L+1, L+1)
    block-diagonal stack in the same geometry.
    """
    if N % M:
        raise ValueError("N must be K*M")
    K = N // M
    alpha = np.asarray(alpha, dtype=float).reshape(M, L + 1)
    evals = [
        psi_J(pot, alpha[m], K, L, order=order, table=table, tolerance=tolerance)
        for m in range(M)
    ]
    value = float(np.mean([e.value for e in evals]))
    grad = np.stack([e.gradient for e in evals]) if order >= 1 else None
    hess = np.stack([e.hessian for e in evals]) if order >= 2 else None
    return FreeEnergyEval(value=value, gradient=grad, hessian=hess, method=evals[0].method)


def _perp_basis(M, L):
    from .coarse_grain import ProjectionBundle

    return ProjectionBundle(M, 2, L).perp_basis_dg()  # K is irrelevant here


def _dg_value_batch(table, alpha_batch, M, L):
    """(1/M) sum_m psi_K over a batch of flattened DG profiles (P, M*(L+1))."""
    P = alpha_batch.shape[0]
    blocks = alpha_batch.reshape(P * M, L + 1)
    vals = table.value_many(blocks).reshape(P, M)
    return vals.mean(axis=1)


def minimize_fluctuation(pot, y, N, M, L, table=None, tolerance=1e-6):
    """Minimizers over the orthogonal fluctuation space Y_M^perp.

    y: spline coefficient vector (length M). Returns a dict with z_bar_star
    (DG profile minimizing bar_H_dg(y + .)), z_star (same for the mesoscopic
    block energy), the coordinates in the orthonormal perp basis, and the
    projected-gradient residuals at the minimizers.
    """
    if L == 0:
        zeros = np.zeros((M, 1))
        return {
            "z_bar_star": zeros,
            "z_star": zeros.copy(),
            "c_bar": np.zeros(0),
            "c": np.zeros(0),
            "residual_bar": 0.0,
            "residual": 0.0,
        }
    K = N // M
    sp = SplineSpace(M, L)
    y_dg = sp.to_dg(np.asarray(y, dtype=float))
    Q = _perp_basis(M, L)  # (M(L+1), LM), DG-orthonormal columns
    if table is None:
        table = PsiJTable(pot, K, L)

    def newton(grad_hess):
        c = np.zeros(Q.shape[1])
        for _ in range(60):
            g, H = grad_hess(c)
            if np.linalg.norm(g) < 1e-10:
                return c, float(np.linalg.norm(g))
            c = c - np.linalg.solve(H, g)
        raise RuntimeError("fluctuation Newton did not converge")

    def gh_bar(c):
        alpha = y_dg + (Q @ c).reshape(M, L + 1)
        ev = bar_H_dg(pot, alpha, N, M, L, order=2, table=table, tolerance=tolerance)
        g = Q.T @ ev.gradient.reshape(-1) / M
        Hb = _block_apply(Q, ev.hessian, M, L)
        return g, Hb

    def gh_meso(c):
        alpha = y_dg + (Q @ c).reshape(M, L + 1)
        evs = [bar_psi(pot, alpha[m], K, L, order=2)[0] for m in range(M)]
        grad = np.stack([e.gradient for e in evs])
        hess = np.stack([e.hessian for e in evs])
        return Q.T @ grad.reshape(-1) / M, _block_apply(Q, hess, M, L)

    c_bar, r_bar = newton(gh_bar)
    c_star, r_star = newton(gh_meso)
    return {
        "z_bar_star": (Q @ c_bar).reshape(M, L + 1),
        "z_star": (Q @ c_star).reshape(M, L + 1),
        "c_bar": c_bar,
        "c": c_star,
        "residual_bar": r_bar,
        "residual": r_star,
        "table": table,
    }


def _block_apply(Q, hess_blocks, M, L):
    """Q^t blockdiag(H_m) Q / M for DG-orthonormal Q."""
    d = L + 1
    Qr = Q.reshape(M, d, -1)
    return np.einsum("mia,mij,mjb->ab", Qr, hess_blocks, Qr) / M


def bar_H_spline(pot, y, N, M, L, order=1, table=None, gh_nodes=20, tolerance=1e-6):
    """H on the spline space by integrating out the orthogonal fluctuation.

        N H(y) = -ln [ N^{LM/2} int_{Y_M^perp} exp(-N H_dg(y+z)) dz ],

    Lebesgue measure in L^2-orthonormal coordinates on Y_M^perp. Laplace
    recentering at the minimizer z_bar_star, then tensor Gauss-Hermite in the
    whitened coordinates (requires LM <= 4). Gradient via the ratio identity:
    the y-partials are the quadrature average of the embedded DG gradient.
    Hessian (order 2) by centered differences of the gradient.
    """
    y = np.asarray(y, dtype=float)
    if L == 0:
        sp = SplineSpace(M, 0)
        ev = bar_H_dg(pot, sp.to_dg(y), N, M, 0, order=min(order, 1), table=table)
        grad = ev.gradient.reshape(-1) / M if ev.gradient is not None else None
        out = FreeEnergyEval(value=ev.value, gradient=grad, method=ev.method)
        if order >= 2:
            out.hessian = _spline_hessian_fd(pot, y, N, M, L, table, gh_nodes, tolerance)
        return out
    if L * M > 4:
        raise ValueError("quadrature path requires L*M <= 4")
    K = N // M
    if table is None:
        table = PsiJTable(pot, K, L)
    value, grad = _spline_value_grad(pot, y, N, M, L, table, gh_nodes, tolerance)
    hess = None
    if order >= 2:
        hess = _spline_hessian_fd(pot, y, N, M, L, table, gh_nodes, tolerance)
    return FreeEnergyEval(
        value=value, gradient=grad if order >= 1 else None, hessian=hess, method="cramer_fourier"
    )


def _spline_value_grad(pot, y, N, M, L, table, gh_nodes, tolerance):
    from numpy.polynomial.hermite_e import hermegauss

    K = N // M
    sp = SplineSpace(M, L)
    y_dg = sp.to_dg(y)
    S = sp.dg_embedding().reshape(M * (L + 1), M)
    Q = _perp_basis(M, L)
    d = Q.shape[1]  # = L*M
    fm = minimize_fluctuation(pot, y, N, M, L, table=table, tolerance=tolerance)
    c0 = fm["c_bar"]
    alpha0 = y_dg + (Q @ c0).reshape(M, L + 1)
    ev0 = bar_H_dg(pot, alpha0, N, M, L, order=2, table=table, tolerance=tolerance)
    Hc = _block_apply(Q, ev0.hessian, M, L)
    w_eig, V = np.linalg.eigh(N * Hc)
    if w_eig.min() <= 0:
        raise RuntimeError("fluctuation Hessian not positive definite")
    A = V @ np.diag(w_eig**-0.5) @ V.T  # whitening: c = c0 + A u

    u, w = hermegauss(gh_nodes)
    mesh = np.meshgrid(*([u] * d), indexing="ij")
    U = np.stack([g.reshape(-1) for g in mesh], axis=1)
    wt = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).reshape(-1)
    C = c0[None, :] + U @ A.T
    alphas = y_dg.reshape(-1)[None, :] + C @ Q.T
    amax = float(np.abs(alphas).max())
    if amax > table.box:
        raise ValueError(
            f"fluctuation quadrature reaches |beta| = {amax:.2f}, beyond the "
            f"psi table box {table.box}; rebuild the table with a larger box"
        )
    f = N * _dg_value_batch(table, alphas, M, L)
    f0 = N * ev0.value
    # wt already carries the Gaussian envelope of the quadratic model, so the
    # integrand is the residual beyond that model
    expo = np.exp(-(f - f0) + 0.5 * np.einsum("pi,pi->p", U, U))
    Z = float(wt @ expo)
    lndet = -0.5 * float(np.sum(np.log(w_eig)))
    lnI = -f0 + lndet + math.log(Z)
    # N H(y) = -(L M / 2) ln N - ln I ; I in orthonormal perp coordinates
    value = (-0.5 * L * M * math.log(N) - lnI) / N

    # ratio identity: dH/dy_j = average of the embedded DG gradient partials
    P = alphas.shape[0]
    blocks = alphas.reshape(P * M, L + 1)
    gb = table.grad_many(blocks).reshape(P, M * (L + 1))
    partials = (gb @ S) / M  # d/dy_j of bar_H_dg at each node
    weights = wt * expo
    grad = weights @ partials / float(weights.sum())
    return value, grad


def _spline_hessian_fd(pot, y, N, M, L, table, gh_nodes, tolerance):
    y = np.asarray(y, dtype=float)
    step = 1e-4 * (np.linalg.norm(y) + 1.0)
    d = y.size
    H = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        if L == 0:
            sp = SplineSpace(M, 0)
            gp = bar_H_dg(pot, sp.to_dg(y + e), N, M, 0, order=1, table=table).gradient.reshape(-1) / M
            gm = bar_H_dg(pot, sp.to_dg(y - e), N, M, 0, order=1, table=table).gradient.reshape(-1) / M
        else:
            _, gp = _spline_value_grad(pot, y + e, N, M, L, table, gh_nodes, tolerance)
            _, gm = _spline_value_grad(pot, y - e, N, M, L, table, gh_nodes, tolerance)
        H[:, i] = (gp - gm) / (2 * step)
    return 0.5 * (H + H.T)


# -- mesoscopic and macroscopic energies -------------------------------------

def meso_dg_energy(pot, alpha, K, order=2):
    """Mesoscopic energy on the DG space: (1/M) sum_m bar_psi_K(alpha^(m))."""
    alpha = np.asarray(alpha, dtype=float)
    M, d = alpha.shape
    L = d - 1
    evs = [bar_psi(pot, alpha[m], K, L, order=order)[0] for m in range(M)]
    value = float(np.mean([e.value for e in evs]))
    grad = np.stack([e.gradient for e in evs]) if order >= 1 else None
    hess = np.stack([e.hessian for e in evs]) if order >= 2 else None
    return FreeEnergyEval(value=value, gradient=grad, hessian=hess)


def meso_spline_energy(pot, y, M, K, L, order=0):
    """Mesoscopic energy on the spline space by the constrained transform.

    Newton over the spline dual coefficients y_hat, pairing through the
    L^2 Gram matrix; equals inf over Y_M^perp of the DG mesoscopic energy.
    """
    y = np.asarray(y, dtype=float)
    sp = SplineSpace(M, L)
    G = sp.gram()
    Gy = G @ y
    yh = y.copy()  # identity start, exact in the pure Gaussian case
    S = sp.dg_embedding().reshape(M * (L + 1), M)
    for _ in range(80):
        a_hat = sp.to_dg(yh)
        evs = [bar_psi_star(pot, a_hat[m], K, L, order=2) for m in range(M)]
        gradA = S.T @ np.stack([e.gradient for e in evs]).reshape(-1) / M
        hessA = _embed_hess(S, np.stack([e.hessian for e in evs]), M, L)
        r = Gy - gradA
        if np.linalg.norm(r) < 1e-11:
            break
        yh = yh + np.linalg.solve(hessA, r)
    else:
        raise RuntimeError("spline dual Newton did not converge")
    a_hat = sp.to_dg(yh)
    Astar = float(np.mean([bar_psi_star(pot, a_hat[m], K, L, order=0).value for m in range(M)]))
    value = float(yh @ Gy - Astar)
    return FreeEnergyEval(value=value, gradient=yh if order >= 1 else None)


def _embed_hess(S, hess_blocks, M, L):
    d = L + 1
    Sr = S.reshape(M, d, M)
    return np.einsum("mia,mij,mjb->ab", Sr, hess_blocks, Sr) / M


def phi_N_star(pot, zhat, N):
    """phi*_N: (1/N) sum of psi_star over exact cell averages of zhat.

    zhat: callable on [0,1) or a length-N array of cell averages.
    """
    if callable(zhat):
        from numpy.polynomial.legendre import leggauss

        u, w = leggauss(20)
        edges = np.arange(N + 1) / N
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 / N
        pts = mid[:, None] + half * u[None, :]
        avgs = np.asarray(zhat(pts)) @ w * 0.5
    else:
        avgs = np.asarray(zhat, dtype=float)
        if avgs.size != N:
            raise ValueError("cell-average vector must have length N")
    return FreeEnergyEval(value=float(np.mean(pot.log_mgf(avgs, 0))))


def macro_energy(pot, zeta, order=0, tol=1e-10):
    """Macroscopic energy int_0^1 phi(zeta(theta)) dtheta by adaptive
    quadrature; gradient is the pointwise callable phi'(zeta(.))."""
    from scipy.integrate import quad

    value, _ = quad(lambda th: pot.legendre_phi(float(np.atleast_1d(zeta(th))[0])), 0.0, 1.0,
                    epsabs=tol, epsrel=tol, limit=200)
    grad = None
    if order >= 1:
        def grad(theta):
            m = np.atleast_1d(np.asarray(zeta(theta), dtype=float))
            zh = pot.tilt_for_mean_many(m)
            return zh if np.ndim(theta) else float(zh[0])
    return FreeEnergyEval(value=float(value), gradient=grad)


def meso_and_macro_energies(pot, profile, which, order=0, **kw):
    """Dispatcher over the energy hierarchy.

    which: phiNstar (profile callable/averages, kw N), H_dg (profile DG
    array, kw K), H_spline_meso (profile spline coeffs, kw M, K, L), or
    H_macro (profile callable).
    """
    if which == "phiNstar":
        return phi_N_star(pot, profile, kw["N"])
    if which == "H_dg":
        return meso_dg_energy(pot, np.asarray(profile, dtype=float), kw["K"], order=order)
    if which == "H_spline_meso":
        return meso_spline_energy(pot, profile, kw["M"], kw["K"], kw["L"], order=order)
    if which == "H_macro":
        return macro_energy(pot, profile, order=order)
    raise ValueError(f"unknown energy: {which!r}")


# -- gradient convergence -----------------------------------------------------

def gradient_convergence_check(pot, zeta, K, M, L, table=None, gh_nodes=20, tolerance=1e-6):
    """L^2 distance between the coarse-grained and macroscopic gradients.

    Projects zeta onto the spline space (exact cell integrals on the N = K*M
    grid), evaluates the spline Hamiltonian gradient, converts the partials
    to the L^2 representative through the Gram matrix, and integrates the
    squared difference against phi'(zeta) with per-cell Gauss-Legendre
    quadrature.
    """
    from numpy.polynomial.legendre import leggauss
    from .coarse_grain import ProjectionBundle

    N = K * M
    pb = ProjectionBundle(M, K, L)
    theta_cells = (np.arange(N)[:, None] + 0.5 * (leggauss(8)[0][None, :] + 1.0)) / N
    # exact-enough cell averages of zeta for the projection (degree-8 GL)
    u, w = leggauss(8)
    avgs = (np.asarray(zeta(theta_cells)) @ w) * 0.5
    y = pb.project_spline(avgs)
    ev = bar_H_spline(pot, y, N, M, L, order=1, table=table, gh_nodes=gh_nodes,
                      tolerance=tolerance)
    G = pb.spline.gram()
    rep = np.linalg.solve(G, ev.gradient)  # L^2 representative in Y_M

    # project phi'(zeta) onto Y_M as well (the two gradients live in different
    # spaces; fixed-M projection error would otherwise mask the K decay)
    sp = pb.spline
    nodes, wts = leggauss(16)
    th = ((np.arange(M)[:, None] + 0.5 * (nodes[None, :] + 1.0)) / M).reshape(-1)
    phi_p = pot.tilt_for_mean_many(np.asarray(zeta(th), dtype=float))
    basis_vals = np.stack([sp.eval(np.eye(M)[j], th) for j in range(M)])
    moments = (basis_vals * phi_p).reshape(M, M, -1) @ wts * 0.5 / M
    q = np.linalg.solve(G, moments.sum(axis=1))
    d = rep - q
    return math.sqrt(float(d @ G @ d))
