"""Power spectrum of the recorded cantilever signal and spin classification.

The measurement outcome of the protocol is the direction of the cantilever
frequency shift: a localized up spin stiffens the restoring force
(angular frequency sqrt(1 + 2*gamma_big)), a down spin softens it.  With
N samples at spacing dt the FFT resolves Delta_f = 1/(N*dt); the shift
gamma_big/(2*pi) cycles per time unit is detectable only when
Delta_f <= gamma_big/(2*pi), so run length gates the classifier.

Plain rectangular-window transform with DC removal; no averaging or
tapering.  Power is normalized so that sum(|x|^2)*dt equals the integral
of the spectrum over frequency exactly (one-sided, interior bins doubled).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError


class SpinVerdict(str, Enum):
    UP = "up"
    DOWN = "down"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectrum on an ascending frequency grid.

    freqs are bin centers in cycles per unit time; df = 1/(n*dt).
    """

    freqs: np.ndarray
    power: np.ndarray
    n: int
    dt: float

    @property
    def df(self) -> float:
        return 1.0 / (self.n * self.dt)

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("freq,power\n")
            for f, p in zip(self.freqs, self.power):
                fh.write(f"{f:.17g},{p:.17g}\n")


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def power_spectrum(samples, dt: float) -> Spectrum:
    """Real-input radix-2 power spectrum with the mean removed first.

    Requires a power-of-two length (pad or truncate before calling).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ParameterError("samples must be a 1-D series")
    n = x.shape[0]
    if not _is_power_of_two(n):
        raise ParameterError(
            f"N = {n} is not a power of two; pad or truncate the series first"
        )
    if dt <= 0.0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples contain non-finite values")

    spec = np.fft.rfft(x - x.mean())
    power = np.abs(spec) ** 2 * (dt * dt)
    power[1:-1] *= 2.0  # fold the negative-frequency half onto interior bins
    freqs = np.fft.rfftfreq(n, dt)
    return Spectrum(freqs=freqs, power=power, n=n, dt=dt)


@dataclass(frozen=True)
class Peak:
    """Located resonance: raw bin plus a parabolic refinement."""

    freq: float
    power: float
    freq_refined: float
    bin_index: int


def peak_frequency(spec: Spectrum, band: tuple[float, float]) -> Peak:
    """Maximum-power bin within ``band``; ties break toward lower frequency.

    Also reports a 3-point parabolic interpolation of the peak position
    (always within half a bin of the raw maximum).
    """
    f_lo, f_hi = band
    if not 0.0 <= f_lo < f_hi <= spec.nyquist:
        raise ParameterError(f"band {band} must lie inside [0, Nyquist = {spec.nyquist}]")
    if f_hi - f_lo <= 3.0 * spec.df:
        raise ParameterError(f"band {band} narrower than 3 bins ({3.0 * spec.df:.3g})")
    sel = np.nonzero((spec.freqs >= f_lo) & (spec.freqs <= f_hi))[0]
    if sel.size == 0:
        raise ParameterError(f"band {band} contains no frequency bins")
    k = sel[np.argmax(spec.power[sel])]  # argmax returns the first (lowest-f) max

    f_ref = spec.freqs[k]
    if 0 < k < spec.freqs.size - 1:
        pm, p0, pp = spec.power[k - 1], spec.power[k], spec.power[k + 1]
        denom = pm - 2.0 * p0 + pp
        if denom < 0.0:
            f_ref = spec.freqs[k] + 0.5 * (pm - pp) / denom * spec.df
    return Peak(freq=float(spec.freqs[k]), power=float(spec.power[k]),
                freq_refined=float(f_ref), bin_index=int(k))


def default_min_shift(gamma_big: float) -> float:
    """Half the expected shift magnitude: gamma_big / (4*pi)."""
    return gamma_big / (4.0 * math.pi)


def resolution_sufficient(df: float, gamma_big: float) -> bool:
    """Detectability: the bin width must not exceed the expected shift."""
    return df <= gamma_big / (2.0 * math.pi)


def classify_spin(f_peak: float, f_carrier: float, min_shift: float) -> SpinVerdict:
    """Spin orientation from the shift direction of the resonance peak.

    A shift beyond +min_shift reads as up, beyond -min_shift as down,
    anything inside the dead band as indeterminate.
    """
    if min_shift < 0.0:
        raise ParameterError(f"min_shift must be nonnegative, got {min_shift}")
    shift = f_peak - f_carrier
    if shift > min_shift:
        return SpinVerdict.UP
    if shift < -min_shift:
        return SpinVerdict.DOWN
    return SpinVerdict.INDETERMINATE
