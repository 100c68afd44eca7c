"""Homodyne photocurrent synthesis and the amplitude-locking feedback loop.

The rescaled measurement record is

    I_c dt = <Z> dt - lambda_pc dW,

sharing its Wiener increment with the dynamics of the same interval.  The
controller estimates the oscillation amplitude by quadrature demodulation
of I_c at the nominal frequency (rectangular one-period trailing window)
and applies the positive-gain force

    f(t) = g * (amp_set - Amp(t)) * tap(t - delay)

with a quarter-period delay.  The tap stores the record with the raw
homodyne sign (-I_c): the raw interferometer current is proportional to
-<Z>, and only that sign puts the delayed tap in phase with the cantilever
velocity, so the loop pumps energy in below the set point and damps above
it.  Feedback is recomputed once per recorded sample and held constant
across the integrator's internal substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ParameterError


def photocurrent_sample(zbar: float, dw: float, dt: float, lambda_pc: float) -> float:
    """One rescaled homodyne record sample: zbar - lambda_pc * dW/dt."""
    return zbar - lambda_pc * dw / dt


def delay_samples(sample_dt: float, omega: float = 1.0) -> int:
    """Quarter-period delay in whole samples: round((pi/2/omega) / dt)."""
    return max(1, round((math.pi / 2.0 / omega) / sample_dt))


def window_samples(sample_dt: float, omega: float = 1.0) -> int:
    """One demodulation period in whole samples: round((2*pi/omega) / dt)."""
    return max(2, round((2.0 * math.pi / omega) / sample_dt))


@dataclass
class FeedbackState:
    """Delay line plus running demodulation state for one trajectory.

    The arrays are shared verbatim with the compiled sample loop; the
    methods here are thin wrappers over the same kernel functions, so the
    two call paths produce bit-identical results.
    """

    sample_dt: float
    amp_set: float
    g_fb: float
    omega: float = 1.0
    lowpass_alpha: float = 0.0
    tap_buf: np.ndarray = field(init=False)
    pcos: np.ndarray = field(init=False)
    psin: np.ndarray = field(init=False)
    _idx: np.ndarray = field(init=False)
    _sums: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.sample_dt <= 0.0:
            raise ParameterError(f"sample_dt must be positive, got {self.sample_dt}")
        if not 0.0 <= self.lowpass_alpha <= 1.0:
            raise ParameterError("lowpass_alpha must be in [0, 1]")
        self.tap_buf = np.zeros(delay_samples(self.sample_dt, self.omega))
        self.pcos = np.zeros(window_samples(self.sample_dt, self.omega))
        self.psin = np.zeros_like(self.pcos)
        # demodulate at the grid frequency nearest the nominal one: the
        # reference is then exactly periodic over the window, so the 2*omega
        # image cancels by discrete orthogonality (phase-invariant estimate)
        self.omega_demod = 2.0 * math.pi / (self.pcos.shape[0] * self.sample_dt)
        self._idx = np.zeros(1, dtype=np.int64)
        self._sums = np.zeros(4)
        self._sums[2] = self.amp_set  # warm-up placeholder

    @classmethod
    def for_params(cls, params, lowpass_alpha: float = 0.0) -> "FeedbackState":
        return cls(
            sample_dt=params.dt,
            amp_set=params.amp_set,
            g_fb=params.g_fb,
            lowpass_alpha=lowpass_alpha,
        )

    @property
    def n_ingested(self) -> int:
        return int(self._idx[0])

    @property
    def delay_n(self) -> int:
        return self.tap_buf.shape[0]

    @property
    def window_n(self) -> int:
        return self.pcos.shape[0]

    @property
    def amplitude(self) -> float:
        """Most recent amplitude estimate (amp_set during warm-up)."""
        return float(self._sums[2])

    def ingest(self, i_c: float, t: float) -> float:
        """Feed one photocurrent sample taken at time t; returns Amp(t)."""
        return float(
            _kernels.fb_ingest(
                self.tap_buf,
                self.pcos,
                self.psin,
                self._idx,
                self._sums,
                i_c,
                t,
                self.omega_demod,
                self.amp_set,
                self.lowpass_alpha,
            )
        )

    def force(self) -> float:
        """Feedback force for the next sample interval (0 during warm-up)."""
        return float(
            _kernels.fb_force(
                self.tap_buf,
                self._idx,
                self._sums,
                self.g_fb,
                self.amp_set,
                self.window_n,
            )
        )


def estimate_amplitude(fb: FeedbackState, i_c: float, t: float, omega_nominal: float | None = None) -> float:
    """Ingest a record sample and return the running amplitude estimate.

    Quadrature demodulation: Amp = 2*sqrt(Ibar^2 + Qbar^2) with Ibar, Qbar
    the trailing one-period means of I_c*cos(omega t) and I_c*sin(omega t).
    Before one full window has elapsed the set point is returned as a
    placeholder.
    """
    if omega_nominal is not None and omega_nominal != fb.omega:
        raise ParameterError(
            f"feedback state was built for omega = {fb.omega}, got {omega_nominal}"
        )
    return fb.ingest(i_c, t)


def feedback_force(fb: FeedbackState, g: float | None = None, amp_set: float | None = None,
                   t: float | None = None) -> float:
    """Positive-gain delayed feedback g*(amp_set - Amp)*tap(t - delay).

    Uses the buffered quarter-period-old sample; zero while the delay
    buffer or the demodulation window is still warming up.  ``g`` and
    ``amp_set`` default to the controller's own values; ``t`` is accepted
    for signature symmetry (the controller tracks time internally).
    """
    del t
    g_eff = fb.g_fb if g is None else g
    a_eff = fb.amp_set if amp_set is None else amp_set
    return float(
        _kernels.fb_force(fb.tap_buf, fb._idx, fb._sums, g_eff, a_eff, fb.window_n)
    )
