import numpy as np
import pytest

from waveinv import calculus
from waveinv.identities import (
    IDENTITY_NAMES,
    corrupted_ops,
    identity_errors,
    poincare_samples,
    poincare_sharp_constant,
    sine_mode,
)


@pytest.mark.parametrize("N", [4, 16, 64])
def test_identities_exact(N):
    errs = identity_errors(N, samples=50, rng=np.random.default_rng(N))
    assert set(errs) == set(IDENTITY_NAMES)
    for name, err in errs.items():
        assert err <= 1e-12, name


@pytest.mark.parametrize("kernel", ["lap", "d_plus", "m_plus", "d_h"])
def test_corrupted_stencil_is_detected(kernel):
    errs = identity_errors(16, samples=20, ops=corrupted_ops(kernel, 1.0 + 1e-6))
    assert max(errs.values()) > 1e-9


def test_poincare_bound_and_sharpness():
    for N in (8, 32, 128):
        c = poincare_sharp_constant(N)
        assert c <= 4.0
        ratios = poincare_samples(N, samples=200, rng=np.random.default_rng(1))
        assert ratios.max() <= c * (1 + 1e-12)
        mode1 = calculus.poincare_ratio(sine_mode(N), 1.0 / (N + 1))
        assert mode1 == pytest.approx(c, rel=1e-10)


def test_sharp_constant_tends_to_continuous_value():
    # lowest Dirichlet symbol 4 sin²(πh/2)/h² computed independently
    for N in (8, 64, 512):
        h = 1.0 / (N + 1)
        symbol = 4.0 * np.sin(np.pi * h / 2) ** 2 / h**2
        assert poincare_sharp_constant(N) == pytest.approx(1.0 / symbol, rel=1e-10)
    assert poincare_sharp_constant(512) == pytest.approx(1.0 / np.pi**2, rel=1e-5)
