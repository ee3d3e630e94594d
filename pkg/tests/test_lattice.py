import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hydrolim.lattice import (
    SpinConfiguration,
    apply_A,
    circulant_eigenvalues,
    h_minus_one_norm_sq_callable,
    h_minus_one_norm_sq_step,
    h1_seminorm_sq_callable,
    sqrt_2A_apply,
    step_l2_norm_sq,
)


def test_apply_A_matches_fourier_symbol():
    rng = np.random.default_rng(1)
    N = 16
    x = rng.standard_normal(N)
    lam = circulant_eigenvalues(N)
    via_fft = np.fft.ifft(lam * np.fft.fft(x)).real
    assert np.allclose(apply_A(x), via_fft, atol=1e-9)


def test_sqrt_root_squares_to_2A():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(24)
    assert np.allclose(sqrt_2A_apply(sqrt_2A_apply(x)), 2.0 * apply_A(x), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 64))
def test_constants_annihilated(N):
    ones = np.ones(N)
    assert np.allclose(apply_A(ones), 0.0, atol=1e-8)
    assert np.allclose(sqrt_2A_apply(ones), 0.0, atol=1e-8)


def test_hm1_step_against_mode_sum():
    # independent oracle: exact Fourier coefficients of the step embedding
    rng = np.random.default_rng(3)
    N = 8
    x = rng.standard_normal(N)
    x -= x.mean()
    total = 0.0
    for k in range(1, 200_000):
        # |int_{cell j} e^{-2 pi i k theta}|: modulus |sin(pi k/N)/(pi k)|
        mod = abs(np.sin(np.pi * k / N) / (np.pi * k))
        ck = mod * np.sum(x * np.exp(-2j * np.pi * k * np.arange(N) / N))
        total += 2.0 * abs(ck) ** 2 / (2.0 * np.pi * k) ** 2  # +k and -k modes
    assert h_minus_one_norm_sq_step(x) == pytest.approx(total, rel=1e-6)


def test_hm1_callable_sine():
    # ||sin(2 pi theta)||_{H^-1}^2 = (1/2) / (2 pi)^2
    val = h_minus_one_norm_sq_callable(lambda th: np.sin(2 * np.pi * th))
    assert val == pytest.approx(0.5 / (2 * np.pi) ** 2, rel=1e-10)


def test_h1_seminorm_sine():
    val = h1_seminorm_sq_callable(lambda th: np.sin(2 * np.pi * th))
    assert val == pytest.approx(0.5 * (2 * np.pi) ** 2, rel=1e-10)


def test_step_l2_and_recentering():
    s = SpinConfiguration(np.array([1.0, 2.0, 3.0]))
    assert s.N == 3
    assert s.recentered().mean() == pytest.approx(0.0)
    assert step_l2_norm_sq(np.array([3.0, 4.0])) == pytest.approx(12.5)
