"""The 11 coupled moment equations: drift, diffusion and the Heun stepper."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscar_mrfm import _kernels, gaussian
from oscar_mrfm.errors import NegativeVarianceError, ParameterError
from oscar_mrfm.model import (
    GaussianState,
    InitialCondition,
    SystemParams,
    default_initial_state,
)


def state(**kw):
    base = dict(r_u=0.5, z_u=0.0, p_u=0.0, z_d=0.0, p_d=0.0,
                vzz_u=0.5, vpp_u=0.5, vzp_u=0.0,
                vzz_d=0.5, vpp_d=0.5, vzp_d=0.0)
    base.update(kw)
    return GaussianState(**base)


class TestDrift:
    def test_spin_probability_drift(self):
        p = SystemParams(kappa_s=1e-3)
        assert gaussian.drift(state(r_u=0.5), p)[0] == 0.0
        assert gaussian.drift(state(r_u=0.25), p)[0] == pytest.approx(5e-4, rel=1e-14)

    def test_symmetric_packet_degeneracy(self):
        # identical packets, kappa_s = 0: exchange and backaction-difference
        # terms vanish and the means obey damped driven oscillators
        p = SystemParams(kappa_s=0.0)
        s = state(z_u=3.0, z_d=3.0, p_u=-1.0, p_d=-1.0)
        f_t = 0.7
        d = gaussian.drift(s, p, f_t)
        ku = 1.0 + 2.0 * p.gamma_big
        kd = 1.0 - 2.0 * p.gamma_big
        assert d[1] == pytest.approx(s.p_u, rel=1e-14)
        assert d[2] == pytest.approx(-ku * s.z_u - 2 * p.gamma_damp * s.p_u + f_t, rel=1e-12)
        assert d[3] == pytest.approx(s.p_d, rel=1e-14)
        assert d[4] == pytest.approx(-kd * s.z_d - 2 * p.gamma_damp * s.p_d + f_t, rel=1e-12)

    def test_restoring_coefficients_split_by_4_gamma(self):
        p = SystemParams(kappa_s=0.0, gamma_damp=0.0, a1=0.0, b1=0.0)
        s = state(z_u=1.0, z_d=1.0)
        d = gaussian.drift(s, p)
        # dp_u = -(1+2G), dp_d = -(1-2G) at unit displacement
        assert d[4] - d[2] == pytest.approx(4.0 * p.gamma_big, rel=1e-12)

    def test_packet_frequencies(self):
        # noise off: the linear blocks have angular frequencies sqrt(1 +/- 2G)
        p = SystemParams(kappa_s=0.0, gamma_damp=0.0, a1=0.0, b1=0.0, a2=0.0)
        d = gaussian.drift(state(z_u=1.0, z_d=1.0), p)
        assert math.sqrt(-d[2]) == pytest.approx(1.0017984, abs=1e-7)
        assert math.sqrt(-d[4]) == pytest.approx(0.9981984, abs=1e-7)

    def test_rejects_unclamped_probability(self):
        p = SystemParams()
        with pytest.raises(ParameterError, match="clamp"):
            gaussian.drift(state(r_u=0.0), p)

    def test_variance_floor_terms(self):
        # at rest with identical packets the variance drifts reduce to the
        # heating floors, the measurement contraction and the damping
        p = SystemParams(kappa_s=0.0)
        d = gaussian.drift(state(), p)
        cm = 4.0 * p.e_d * p.a2**2
        assert d[5] == pytest.approx(p.b1**2 - cm * 0.25, rel=1e-12)
        assert d[6] == pytest.approx(p.a1**2 + p.a2**2 - 4.0 * p.gamma_damp * 0.5, rel=1e-12)


class TestDiffusion:
    def test_no_monitoring_no_conditioning(self):
        s = state(z_u=2.0, z_d=-2.0)
        assert np.all(gaussian.diffusion(s, SystemParams(a2=0.0)) == 0.0)
        tiny = SystemParams(e_d=1e-300)
        assert np.allclose(gaussian.diffusion(s, tiny), 0.0, atol=1e-140)

    def test_probability_diffusion_value(self):
        s = state(z_u=1.0, z_d=-1.0)  # Z_u - Z_d = 2
        p = SystemParams(e_d=0.85, a2=0.07)
        expected = 2.0 * math.sqrt(0.85) * 0.07 * 0.25 * 2.0
        got = gaussian.diffusion(s, p)[0]
        assert got == pytest.approx(expected, rel=1e-14)
        assert got == pytest.approx(0.0645, abs=5e-4)

    def test_indistinguishable_packets_give_no_information(self):
        s = state(z_u=1.5, z_d=1.5, vzz_u=0.7, vzz_d=0.3)
        assert gaussian.diffusion(s, SystemParams())[0] == 0.0

    def test_second_moment_entries_exactly_zero(self):
        s = state(z_u=4.0, z_d=-3.0, p_u=1.0)
        assert np.all(gaussian.diffusion(s, SystemParams())[5:] == 0.0)


class TestStep:
    def test_period_return(self, quiet_params):
        # closed-form oracle: one full period of the up packet returns the
        # means to the start; the Heun phase error per period is
        # pi*(w*dt)^2/3, i.e. 1.06e-6 at dt = 1e-3 and 2.7e-7 at dt = 5e-4
        w = math.sqrt(1.0 + 2.0 * quiet_params.gamma_big)
        period = 2.0 * math.pi / w
        for dt, tol in ((1e-3, 1.2e-6), (5e-4, 1e-6)):
            y = default_initial_state(quiet_params).as_array()
            z0, p0 = y[1], y[2]
            p_arr = gaussian.pack_params(quiet_params)
            n = int(period / dt)
            for _ in range(n):
                _kernels.heun_step(y, 0.0, dt, 0.0, p_arr)
            _kernels.heun_step(y, 0.0, period - n * dt, 0.0, p_arr)
            err = math.hypot(y[1] - z0, y[2] - p0) / math.hypot(z0, p0)
            assert err < tol
            predicted = math.pi * (w * dt) ** 2 / 3.0
            assert err == pytest.approx(predicted, rel=0.2)

    def test_zero_noise_equals_drift_only_integration(self):
        # dW = 0 and kappa_s = 0: the stepper must coincide with plain
        # deterministic Heun on the drift
        p = SystemParams(kappa_s=0.0)
        s = default_initial_state(p)
        dt = 1e-3
        stepped = s
        for _ in range(50):
            stepped = gaussian.step(stepped, p, 0.3, dt, 0.0)
        y = s.as_array()
        for _ in range(50):
            a0 = gaussian.drift(GaussianState.from_array(y), p, 0.3)
            pred = GaussianState.from_array(y + a0 * dt)
            a1 = gaussian.drift(pred, p, 0.3)
            y = y + 0.5 * (a0 + a1) * dt
        assert np.allclose(stepped.as_array(), y, rtol=1e-12, atol=1e-12)

    def test_same_increments_same_trajectory(self):
        p = SystemParams(kappa_s=1e-3)
        dws = np.random.default_rng(1).standard_normal(100) * math.sqrt(1e-3)
        outs = []
        for _ in range(2):
            s = default_initial_state(p)
            for dw in dws:
                s = gaussian.step(s, p, 0.0, 1e-3, dw)
            outs.append(s.as_array())
        assert np.array_equal(outs[0], outs[1])

    def test_probability_clamped(self):
        p = SystemParams(kappa_s=0.0, a2=0.07)
        s = state(r_u=1.0 - 1e-8, z_u=5.0, z_d=-5.0)
        out = gaussian.step(s, p, 0.0, 1e-3, 10.0)  # huge kick upward
        assert out.r_u <= 1.0 - 1e-8

    def test_freeze_slaves_empty_packet(self):
        p = SystemParams(kappa_s=0.0)
        s = state(r_u=5e-7, z_u=2.0, z_d=-1.0, p_u=0.3, p_d=-0.2)
        out = gaussian.step(s, p, 0.0, 1e-3, 0.0)
        assert out.z_u == out.z_d and out.p_u == out.p_d
        assert out.vzz_u == out.vzz_d and out.vpp_u == out.vpp_d

    def test_step_halving_recovers(self):
        # the measurement contraction overshoots the variance at dt but the
        # halving ladder reaches a stable sub-step before dt/16
        p = SystemParams(kappa_s=0.0, a2=0.07)
        s = state(vzz_u=100.0, vpp_u=100.0, vzz_d=100.0, vpp_d=100.0)
        out = gaussian.step(s, p, 0.0, 4.0, 0.0, rng=np.random.default_rng(0))
        assert out.vzz_u > 0.0

    def test_unrecoverable_variance_raises(self):
        p = SystemParams(kappa_s=0.0, a2=5.0)
        s = state(vzz_u=100.0, vpp_u=100.0, vzz_d=100.0, vpp_d=100.0)
        with pytest.raises(NegativeVarianceError):
            gaussian.step(s, p, 0.0, 10.0, 0.0, rng=np.random.default_rng(0))

    def test_relaxation_of_drift_ode(self):
        # noise-free ODE: r_u(t) - 1/2 = (r_u(0) - 1/2) exp(-2 kappa_s t)
        kappa = 1e-3
        p = SystemParams(kappa_s=kappa, a2=0.0, lambda_pc=0.0)
        ic = InitialCondition(r_u0=0.9, z0=-50.0)
        y = default_initial_state(p, ic).as_array()
        p_arr = gaussian.pack_params(p)
        dt = 1e-3
        t = 0.0
        for _ in range(200_000):
            _kernels.heun_step(y, 0.0, dt, 0.0, p_arr)
            t += dt
        exact = 0.5 + 0.4 * math.exp(-2.0 * kappa * t)
        assert abs(y[0] - exact) / abs(exact - 0.5) < 1e-8


class TestUnitaryStep:
    def test_r_u_is_untouched(self, quiet_params):
        out = gaussian.unitary_step(1.0, 0.0, 1.0, 0.0, 0.37, quiet_params, 0.0, 1e-3)
        assert out[4] == 0.37

    def test_gamma_zero_packets_degenerate(self):
        p = SystemParams(eta=0.0, kappa_s=0.0)
        zu, pu, zd, pd = 2.0, 0.0, 2.0, 0.0
        for _ in range(1000):
            zu, pu, zd, pd, _ = gaussian.unitary_step(zu, pu, zd, pd, 0.5, p, 0.0, 1e-3)
        assert zu == zd and pu == pd
        # one period at dt = 1e-3: RK4 keeps 1e-10 accuracy easily
        t = 1.0
        assert zu == pytest.approx(2.0 * math.cos(t), abs=1e-9)

    def test_rk4_accuracy_over_period(self, quiet_params):
        w = math.sqrt(1.0 + 2.0 * quiet_params.gamma_big)
        period = 2.0 * math.pi / w
        dt = 1e-3
        n = int(period / dt)
        zu, pu, zd, pd = -50.0, 0.0, -50.0, 0.0
        for _ in range(n):
            zu, pu, zd, pd, _ = gaussian.unitary_step(zu, pu, zd, pd, 0.5, quiet_params, 0.0, dt)
        zu, pu, zd, pd, _ = gaussian.unitary_step(zu, pu, zd, pd, 0.5, quiet_params, 0.0, period - n * dt)
        assert math.hypot(zu + 50.0, pu) / 50.0 < 1e-10


class TestExpectedPosition:
    def test_identity(self):
        assert gaussian.expected_position(state(r_u=0.3, z_u=2.0, z_d=-1.0)) == pytest.approx(-0.1)

    def test_pure_up(self):
        s = state(r_u=1.0, z_u=3.5, z_d=99.0)
        assert gaussian.expected_position(s) == 3.5

    def test_symmetry(self):
        assert gaussian.expected_position(state(r_u=0.5, z_u=4.0, z_d=-4.0)) == 0.0


@settings(deadline=None, max_examples=25)
@given(
    z0=st.floats(-10.0, 10.0),
    p0=st.floats(-5.0, 5.0),
    vzz=st.floats(0.3, 3.0),
    vpp=st.floats(0.3, 3.0),
    seed=st.integers(0, 2**31),
)
def test_symmetric_packets_stay_symmetric_without_shift(z0, p0, vzz, vpp, seed):
    # with gamma_big = 0 and kappa_s = 0 the up/down equations coincide, so
    # equal packets driven by a shared dW stream remain equal forever
    p = SystemParams(eta=0.0, kappa_s=0.0)
    s = GaussianState(0.5, z0, p0, z0, p0, vzz, vpp, 0.0, vzz, vpp, 0.0)
    y = s.as_array()
    p_arr = gaussian.pack_params(p)
    dws = np.random.default_rng(seed).standard_normal(200) * math.sqrt(1e-3)
    for dw in dws:
        assert _kernels.heun_step(y, 0.1, 1e-3, dw, p_arr) == _kernels.OK
    assert y[1] == y[3] and y[2] == y[4]
    assert y[5] == y[8] and y[6] == y[9] and y[7] == y[10]


@settings(deadline=None, max_examples=20)
@given(
    ru=st.floats(1e-6, 1.0 - 1e-6),
    dz=st.floats(-5.0, 5.0),
    seed=st.integers(0, 2**31),
)
def test_diffusion_vector_structure(ru, dz, seed):
    rng = np.random.default_rng(seed)
    vz_u, vz_d = rng.uniform(0.3, 2.0, 2)
    s = GaussianState(ru, dz, 0.0, 0.0, 0.0, vz_u, 1.0, 0.1, vz_d, 1.0, -0.1)
    p = SystemParams()
    b = gaussian.diffusion(s, p)
    scale = 2.0 * math.sqrt(p.e_d) * p.a2
    assert b[0] == pytest.approx(scale * ru * (1 - ru) * dz, rel=1e-12)
    assert b[1] == pytest.approx(scale * vz_u, rel=1e-12)
    assert np.all(b[5:] == 0.0)
