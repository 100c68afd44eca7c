"""Gaussian closure vs density-matrix oracle in limiting regimes.

The full-strength desk-scale comparison lives in the acceptance module;
these are the degenerate limits where the two descriptions must coincide
almost exactly.
"""

import math

import pytest

from oscar_mrfm.config import RunConfig
from oscar_mrfm.runner import compare_gaussian_sme


def periods(n: float, dt: float = 0.02) -> int:
    return int(round(n * 2.0 * math.pi / dt))


@pytest.mark.slow
def test_harmonic_limit_noise_free():
    # no noise, no feedback, gamma_big = 0: both sides are the exact
    # harmonic oscillator, so <Z> must agree to a few 1e-5 of the amplitude
    # over 20 periods (only integrator error remains)
    cfg = RunConfig.from_text(
        f"""
        mode = compare
        seed = 1
        n_samples = {periods(20)}
        eta = 0
        kappa_s = 0
        a1 = 0
        b1 = 0
        a2 = 0
        gamma_damp = 0
        lambda_pc = 0
        g_fb = 0
        amp_set = 3
        sme_dim = 40
        z0 = -3
        """
    )
    res = compare_gaussian_sme(cfg)
    assert res.rms_zbar_error < 1e-4
    assert res.max_zbar_error < 3e-4


@pytest.mark.slow
def test_vanishing_detection_efficiency():
    # e_d -> 0: conditioning disappears on both sides and the spin
    # probability follows the same deterministic relaxation ODE
    cfg = RunConfig.from_text(
        f"""
        mode = compare
        seed = 2
        n_samples = {periods(5)}
        kappa_s = 1e-3
        e_d = 1e-12
        amp_set = 4
        lambda_pc = 2.7019e-4
        sme_dim = 48
        z0 = -4
        """
    )
    res = compare_gaussian_sme(cfg)
    assert res.rms_r_u_error < 1e-3
    assert res.rms_zbar_error < 1e-3
