"""Microscopic state space on the discrete torus.

Spin configurations x in R^N, the Hamiltonian H_N = sum psi(x_n), the
circulant second-difference operator A (periodic convention N+1 = 1), the
step-function embedding into L^2[0,1), and the L^2 / H^1 / H^-1 norms.

A and sqrt(2A) are kept as Fourier symbols; nothing here materializes a dense
N x N matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpinConfiguration",
    "circulant_eigenvalues",
    "apply_A",
    "sqrt_2A_apply",
    "hamiltonian",
    "grad_hamiltonian",
    "step_l2_norm_sq",
    "h_minus_one_norm_sq_step",
    "h_minus_one_norm_sq_callable",
]


@dataclass
class SpinConfiguration:
    """A state x in R^N, embedded as the step function constant on
    [(j-1)/N, j/N)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("values must be a vector of length >= 2")

    @property
    def N(self):
        return self.values.size

    def mean(self):
        return float(self.values.mean())

    def recentered(self):
        """Projection onto the mean-zero hyperplane X_{N,0}."""
        return SpinConfiguration(self.values - self.values.mean())


def circulant_eigenvalues(N):
    """Fourier symbol of A: 4 N^2 sin^2(pi k / N); exactly 0 at k = 0."""
    k = np.arange(N)
    lam = 4.0 * N * N * np.sin(np.pi * k / N) ** 2
    lam[0] = 0.0
    return lam


def apply_A(x):
    """Periodic N^2 (-x_{i-1} + 2 x_i - x_{i+1}) along the last axis."""
    x = np.asarray(x, dtype=float)
    N = x.shape[-1]
    return N * N * (2.0 * x - np.roll(x, 1, axis=-1) - np.roll(x, -1, axis=-1))


def sqrt_2A_apply(w):
    """Spectral square root of 2A applied along the last axis.

    Symbol sqrt(2 * 4 N^2 sin^2(pi k/N)); annihilates constants exactly since
    the k = 0 entry is zero.
    """
    w = np.asarray(w, dtype=float)
    N = w.shape[-1]
    sym = np.sqrt(2.0 * circulant_eigenvalues(N))[: N // 2 + 1]
    return np.fft.irfft(sym * np.fft.rfft(w, axis=-1), n=N, axis=-1)


def hamiltonian(pot, x):
    """H_N(x) = sum_n psi(x_n)."""
    return float(np.sum(pot.psi(np.asarray(x, dtype=float))))


def grad_hamiltonian(pot, x):
    return pot.psi_prime(np.asarray(x, dtype=float))


def step_l2_norm_sq(x):
    """||.||_{L^2}^2 of the step embedding: (1/N) sum x_i^2."""
    x = np.asarray(x, dtype=float)
    return float(x @ x) / x.size


def h_minus_one_norm_sq_step(x, tol=1e-12):
    """Exact ||f||_{H^-1}^2 of the zero-mean step embedding of x.

    The Fourier coefficient of the indicator of cell j at mode k has modulus
    |X_r| sin(pi k/N)/(pi k) with r = k mod N, so the full lattice sum over
    aliases k = r + pN collapses through

        sum_p (r + pN)^{-4} = pi^4 (3 - 2 s^2) / (3 s^4 N^4),  s = sin(pi r/N),

    leaving a finite sum over the N-1 nonzero DFT modes. Bit-stable across N,
    which the scaling fits rely on.
    """
    x = np.asarray(x, dtype=float)
    N = x.size
    if abs(x.mean()) > tol * max(1.0, float(np.abs(x).max())):
        raise ValueError("H^-1 norm requires a zero-mean input")
    X = np.fft.fft(x - x.mean())
    r = np.arange(1, N)
    s2 = np.sin(np.pi * r / N) ** 2
    weights = (3.0 - 2.0 * s2) / (12.0 * s2 * N**4)
    return float(np.abs(X[1:]) ** 2 @ weights)


def h_minus_one_norm_sq_callable(f, modes=4096):
    """||f||_{H^-1}^2 for a smooth zero-mean 1-periodic callable.

    Spectral: FFT of a fine sampling, then sum |f_k|^2 / (2 pi k)^2. For
    analytic profiles the truncation error is far below 1e-12.
    """
    theta = np.arange(modes) / modes
    vals = np.asarray(f(theta), dtype=float)
    c = np.fft.fft(vals) / modes
    if abs(c[0]) > 1e-10:
        raise ValueError("H^-1 norm requires a zero-mean input")
    k = np.fft.fftfreq(modes, d=1.0 / modes)
    k[0] = 1.0
    return float(np.sum((np.abs(c) ** 2 / (2.0 * np.pi * k) ** 2)[1:]))


def h1_seminorm_sq_callable(f, modes=4096):
    """|f|_{H^1}^2 of a smooth 1-periodic callable, spectrally."""
    theta = np.arange(modes) / modes
    c = np.fft.fft(np.asarray(f(theta), dtype=float)) / modes
    k = np.fft.fftfreq(modes, d=1.0 / modes)
    return float(np.sum(np.abs(c) ** 2 * (2.0 * np.pi * k) ** 2))
