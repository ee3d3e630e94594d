"""Mesoscopic function spaces on the torus and the projections onto them.

Two nested spaces on a uniform mesh of M blocks:

* Y_M^DG: piecewise polynomials of degree <= L, no continuity constraint,
  dimension (L+1)M.  Block basis: shifted Legendre polynomials f_0..f_L,
  orthonormal in L^2[0,1].  A DG profile is stored as an (M, L+1) array of
  per-block coefficients; the inner product is (1/M) sum_m <alpha_m, beta_m>.
* Y_M: the C^{L-1} spline subspace.  Basis: block indicators (L = 0), hat
  functions (L = 1), periodic quadratic B-splines (L = 2).

Projections P (onto Y_M) and Q_M (onto Y_M^DG) act on grid functions of
length N = K*M through their step embedding; the adjoint N P^t / N Q_M^t is
exact block averaging.  Every Gram, stiffness, and cell-average integral is a
closed-form piecewise-polynomial integral, never quadrature, so operator-norm
scaling fits are bit-stable.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import Legendre

__all__ = [
    "DGSpace",
    "SplineSpace",
    "ProjectionBundle",
    "gram_qjqt",
    "bspline_eval",
    "project_dg",
    "project_spline",
    "pnpt_deviation",
    "fluctuation_decompose",
    "spline_interpolate",
    "inverse_sobolev_constants",
]


def _legendre_block_basis(L):
    """f_l(t) = sqrt(2l+1) P_l(2t-1) on [0,1]; orthonormal in L^2[0,1]."""
    basis = []
    for l in range(L + 1):
        p = Legendre.basis(l, domain=[0.0, 1.0]).convert(kind=Polynomial)
        basis.append(np.sqrt(2 * l + 1) * p)
    return basis


class DGSpace:
    """Y_M^DG with the orthonormal shifted-Legendre block basis."""

    def __init__(self, M, L):
        if M < 1 or L < 0 or L > 3:
            raise ValueError("need M >= 1 and 0 <= L <= 3")
        self.M = M
        self.L = L
        self.basis = _legendre_block_basis(L)
        self._gamma_cache = {}

    def gamma_rows(self, J):
        """Rows gamma^j of J Q_1^t: gamma^j_l = J * int_{(j-1)/J}^{j/J} f_l.

        Exact antiderivative evaluation; cached per J.
        """
        if J < self.L + 1:
            raise ValueError("J >= L+1 required for full rank")
        if J not in self._gamma_cache:
            edges = np.arange(J + 1) / J
            rows = np.empty((J, self.L + 1))
            for l, f in enumerate(self.basis):
                F = f.integ()
                vals = F(edges)
                rows[:, l] = J * (vals[1:] - vals[:-1])
            rows.setflags(write=False)
            self._gamma_cache[J] = rows
        return self._gamma_cache[J]

    def gamma_curve(self, t):
        """gamma(t) = (f_0(t), ..., f_L(t)) for t in [0,1]."""
        t = np.asarray(t, dtype=float)
        return np.stack([f(t) for f in self.basis], axis=-1)

    def gram_qjqt(self, J):
        """(Q_1 J Q_1^t, ||Q_1 J Q_1^t - id||) assembled from the gamma rows."""
        g = self.gamma_rows(J)
        G = g.T @ g / J
        dev = np.abs(np.linalg.eigvalsh(G - np.eye(self.L + 1))).max()
        return G, float(dev)

    def q1_apply(self, xblock):
        """Single-block coefficients (1/J) sum_j x_j gamma^j."""
        xblock = np.asarray(xblock, dtype=float)
        J = xblock.shape[-1]
        return xblock @ self.gamma_rows(J) / J

    def project(self, x):
        """Q_M: grid function of length N = K*M -> (M, L+1) coefficients.

        Block-local: each block is an independent single-block projection.
        """
        x = np.asarray(x, dtype=float)
        if x.size % self.M:
            raise ValueError("N must be a multiple of M")
        return self.q1_apply(x.reshape(self.M, -1))

    def eval(self, alpha, theta):
        """Evaluate the DG profile at torus points."""
        alpha = np.asarray(alpha, dtype=float)
        theta = np.mod(np.asarray(theta, dtype=float), 1.0)
        s = theta * self.M
        block = np.minimum(s.astype(int), self.M - 1)
        t = s - block
        vals = self.gamma_curve(t)
        return np.sum(alpha[block] * vals, axis=-1)

    def cell_averages(self, alpha, K):
        """N Q_M^t: exact cell averages of the profile on the N = K*M grid."""
        alpha = np.asarray(alpha, dtype=float)
        g = self.gamma_rows(K)  # K-cell averages of f_l on the unit block
        return (alpha @ g.T).reshape(-1)

    def inner(self, alpha, beta):
        """(1/M) sum_m <alpha_m, beta_m>, the L^2 inner product on Y_M^DG."""
        return float(np.sum(np.asarray(alpha) * np.asarray(beta))) / self.M


# -- spline space -----------------------------------------------------------

def _spline_local_pieces(L):
    """(cell offset relative to j, local polynomial in t on [0,1]) per piece."""
    t = Polynomial([0.0, 1.0])
    if L == 0:
        return [(0, Polynomial([1.0]))]
    if L == 1:
        # hat with peak at the knot j/M
        return [(-1, t), (0, 1.0 - t)]
    if L == 2:
        # periodic quadratic B-spline, peak 3/4 at the midpoint of cell j
        return [(-1, 0.5 * t * t), (0, 0.75 - (t - 0.5) ** 2), (1, 0.5 * (1.0 - t) ** 2)]
    raise ValueError("spline basis implemented for L in {0, 1, 2}")


def bspline_eval(j, theta, M, L=2):
    """Literal branch evaluation of basis function j (0-indexed) at theta.

    Follows the three-branch quadratic formula (and its lower-degree
    analogues) with torus indexing; branch checked in the order middle,
    right, left.
    """
    theta = np.mod(np.asarray(theta, dtype=float), 1.0)
    s = np.mod(theta * M - j, M)
    out = np.zeros_like(s)
    if L == 0:
        out[(0.0 <= s) & (s < 1.0)] = 1.0
    elif L == 1:
        mid = (0.0 <= s) & (s < 1.0)
        left = s >= M - 1.0
        out[mid] = 1.0 - s[mid]
        out[left] = s[left] - (M - 1.0)
    elif L == 2:
        mid = (0.0 <= s) & (s < 1.0)
        right = (1.0 <= s) & (s < 2.0) & ~mid
        left = (s >= M - 1.0) & ~mid & ~right
        out[mid] = 0.75 - (s[mid] - 0.5) ** 2
        out[right] = 0.5 * (2.0 - s[right]) ** 2
        out[left] = 0.5 * (s[left] - (M - 1.0)) ** 2
    else:
        raise ValueError("L in {0, 1, 2}")
    return out if out.ndim else float(out)


class SplineSpace:
    """Y_M: the C^{L-1} spline subspace of Y_M^DG, dimension M."""

    def __init__(self, M, L):
        if L not in (0, 1, 2):
            raise ValueError("spline space implemented for L in {0, 1, 2}")
        if M < 2:
            raise ValueError("need M >= 2")
        self.M = M
        self.L = L
        self.dg = DGSpace(M, L)
        # per-cell accumulated polynomials: table[c][j] is the polynomial of
        # basis function j on cell c (periodized, so short meshes fold over)
        zero = Polynomial([0.0])
        table = [[zero] * M for _ in range(M)]
        for j in range(M):
            for off, poly in _spline_local_pieces(L):
                c = (j + off) % M
                table[c][j] = table[c][j] + poly
        self._table = table

    # -- evaluation --------------------------------------------------------

    def eval(self, coeffs, theta):
        coeffs = np.asarray(coeffs, dtype=float)
        scalar = np.isscalar(theta) or np.asarray(theta).ndim == 0
        theta = np.mod(np.atleast_1d(np.asarray(theta, dtype=float)), 1.0)
        s = theta * self.M
        cell = np.minimum(s.astype(int), self.M - 1)
        t = s - cell
        out = np.zeros_like(t)
        for c in range(self.M):
            mask = cell == c
            if not np.any(mask):
                continue
            poly = sum((coeffs[j] * self._table[c][j] for j in range(self.M)), Polynomial([0.0]))
            out[mask] = poly(t[mask])
        return float(out[0]) if scalar else out

    def eval_deriv(self, coeffs, theta, order=1):
        """d^order/dtheta^order of the spline at torus points.

        Piecewise-polynomial differentiation on each cell; at a knot the
        right-limit value is reported (the derivative may jump there for
        order = L).
        """
        coeffs = np.asarray(coeffs, dtype=float)
        scalar = np.isscalar(theta) or np.asarray(theta).ndim == 0
        theta = np.mod(np.atleast_1d(np.asarray(theta, dtype=float)), 1.0)
        s = theta * self.M
        cell = np.minimum(s.astype(int), self.M - 1)
        t = s - cell
        out = np.zeros_like(t)
        scale = float(self.M) ** order  # d/dtheta = M d/dt
        for c in range(self.M):
            mask = cell == c
            if not np.any(mask):
                continue
            poly = sum(
                (coeffs[j] * self._table[c][j] for j in range(self.M)), Polynomial([0.0])
            ).deriv(order)
            out[mask] = scale * poly(t[mask])
        return float(out[0]) if scalar else out

    def to_dg(self, coeffs):
        """Exact expansion of the spline in the DG block basis: (M, L+1)."""
        return np.tensordot(self.dg_embedding(), np.asarray(coeffs, dtype=float), axes=([2], [0]))

    def dg_embedding(self):
        """S with S[:, j] the DG coefficients (M, L+1) of basis function j."""
        if not hasattr(self, "_S"):
            S = np.zeros((self.M, self.L + 1, self.M))
            for c in range(self.M):
                for j in range(self.M):
                    p = self._table[c][j]
                    if p.degree() == 0 and p.coef[0] == 0.0:
                        continue
                    for l, f in enumerate(self.dg.basis):
                        S[c, l, j] = (p * f).integ()(1.0)
            S.setflags(write=False)
            self._S = S
        return self._S

    # -- exact integrals ---------------------------------------------------

    def _pairwise_integral(self, order):
        """M x M matrix of int d^r B_j d^r B_k dtheta, r = order."""
        G = np.zeros((self.M, self.M))
        for c in range(self.M):
            polys = [self._table[c][j] for j in range(self.M)]
            ders = [p.deriv(order) if order else p for p in polys]
            for j in range(self.M):
                pj = ders[j]
                if pj.degree() == 0 and pj.coef[0] == 0.0:
                    continue
                for k in range(j, self.M):
                    pk = ders[k]
                    v = (pj * pk).integ()(1.0)
                    if v:
                        G[j, k] += v
                        if k != j:
                            G[k, j] += v
        # d/dtheta = M d/dt and the cell measure is 1/M
        return G * float(self.M) ** (2 * order - 1)

    def gram(self):
        if not hasattr(self, "_gram"):
            self._gram = self._pairwise_integral(0)
        return self._gram

    def stiffness(self, order=1):
        """H^order seminorm matrix (order 2 meaningful only for L = 2)."""
        return self._pairwise_integral(order)

    def cell_integral_matrix(self, N):
        """E with E[i, j] = N int_{cell i} B_j dtheta, N = K*M; exact."""
        if N % self.M:
            raise ValueError("N must be K*M")
        K = N // self.M
        E = np.zeros((N, self.M))
        sub = np.arange(K + 1) / K
        for c in range(self.M):
            for j in range(self.M):
                p = self._table[c][j]
                if p.degree() == 0 and p.coef[0] == 0.0:
                    continue
                P = p.integ()
                vals = P(sub)
                E[c * K : (c + 1) * K, j] = K * (vals[1:] - vals[:-1])
        return E

    def interpolate(self, zeta):
        """Nodal interpolation: coefficients zeta(node_j).

        Nodes: cell midpoints for L = 2 (where B_j = 3/4 and the two
        neighbors fill in), knots j/M for L = 1, cell midpoints for L = 0.
        """
        j = np.arange(self.M)
        if self.L == 1:
            nodes = j / self.M
        else:
            nodes = (2 * j + 1) / (2 * self.M)
        return np.asarray(zeta(nodes), dtype=float)


class ProjectionBundle:
    """P, Q_M, their adjoints, and the fluctuation decomposition at fixed N."""

    def __init__(self, M, K, L):
        self.M, self.K, self.L = M, K, L
        self.N = M * K
        self.spline = SplineSpace(M, L)
        self.dg = self.spline.dg
        self.E = self.spline.cell_integral_matrix(self.N)  # N P^t in coords
        self.G = self.spline.gram()
        self.B = self.E.T @ self.E / self.N  # (1/N) E^t E, symmetric
        cond = np.linalg.cond(self.G)
        if cond > 1e12:
            raise ValueError("singular spline Gram matrix")

    def project_spline(self, x):
        """P x: least-squares spline coefficients in the step-embedding L^2."""
        x = np.asarray(x, dtype=float)
        return np.linalg.solve(self.G, self.E.T @ x / self.N)

    def project_dg(self, x):
        return self.dg.project(x)

    def pnpt_matrix(self):
        """P N P^t in spline coefficient coordinates."""
        return np.linalg.solve(self.G, self.B)

    def pnpt_deviation(self):
        """Operator norm of P N P^t - id in the L^2 geometry of Y_M."""
        w, V = np.linalg.eigh(self.G)
        if w.min() <= 0:
            raise ValueError("Gram not positive definite")
        Gih = V @ np.diag(w**-0.5) @ V.T
        sym = Gih @ self.B @ Gih
        return float(np.abs(np.linalg.eigvalsh(sym - np.eye(self.M))).max())

    def fluctuation_decompose(self, x):
        """x = x_par + x_perp with x_perp = N P^t (P N P^t)^{-1} P x.

        x_perp is the Euclidean-orthogonal projection onto range(N P^t); the
        two parts are orthogonal in both the Euclidean and the step-L^2
        structure (they differ by the factor 1/N).
        """
        x = np.asarray(x, dtype=float)
        w = np.linalg.solve(self.pnpt_matrix(), self.project_spline(x))
        x_perp = self.E @ w
        return x - x_perp, x_perp

    def perp_basis_dg(self):
        """L^2-orthonormal basis of Y_M^perp inside Y_M^DG.

        Returns (M*(L+1), L*M): columns are flattened DG coefficient vectors,
        orthonormal for the (1/M)-weighted inner product and orthogonal to
        every spline.
        """
        d = self.M * (self.L + 1)
        S = self.spline.dg_embedding().reshape(d, self.M)
        # null space of S^t under the Euclidean product equals the DG-inner
        # orthogonal complement (the 1/M weight is a global scalar)
        _, s, Vt = np.linalg.svd(S.T, full_matrices=True)
        rank = int(np.sum(s > 1e-12 * s.max()))
        Q = Vt[rank:].T
        return Q * np.sqrt(self.M)  # DG-orthonormal scaling

    def smallest_invertible_K(self, K_candidates=(2, 3, 4, 6, 8, 12, 16, 24, 32)):
        """Measured smallest K with ||P N P^t - id|| < 1 for this (M, L)."""
        for K in K_candidates:
            b = ProjectionBundle(self.M, K, self.L)
            if b.pnpt_deviation() < 1.0:
                return K
        return None


# -- module-level convenience wrappers matching the operation names ----------

def gram_qjqt(J, L):
    return DGSpace(1, L).gram_qjqt(J)


def project_dg(x, M, L):
    return DGSpace(M, L).project(x)


def project_spline(x, M, L):
    x = np.asarray(x, dtype=float)
    if x.size % M:
        raise ValueError("N must be K*M")
    return ProjectionBundle(M, x.size // M, L).project_spline(x)


def pnpt_deviation(M, K, L):
    return ProjectionBundle(M, K, L).pnpt_deviation()


def fluctuation_decompose(x, M, L):
    x = np.asarray(x, dtype=float)
    return ProjectionBundle(M, x.size // M, L).fluctuation_decompose(x)


def spline_interpolate(zeta, M, L=2):
    return SplineSpace(M, L).interpolate(zeta)


def inverse_sobolev_constants(M, L=2):
    """Largest Rayleigh quotients (|y|_{H^1}/|y|_{L^2}, |y|_{H^2}/|y|_{H^1}).

    Generalized eigenproblems on the exact Gram/stiffness matrices; the
    constant-spline kernel mode is deflated from the second quotient.
    """
    from scipy.linalg import eigh

    sp = SplineSpace(M, L)
    G, A1 = sp.gram(), sp.stiffness(1)
    c1 = float(np.sqrt(max(eigh(A1, G, eigvals_only=True))))
    if L < 2:
        return c1, float("nan")
    A2 = sp.stiffness(2)
    w, V = np.linalg.eigh(A1)
    keep = V[:, w > 1e-10 * w.max()]
    c2 = float(np.sqrt(max(eigh(keep.T @ A2 @ keep, keep.T @ A1 @ keep, eigvals_only=True))))
    return c1, c2
