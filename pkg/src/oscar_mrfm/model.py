"""Model parameters, state types and derived coefficients.

Everything is expressed in the dimensionless unit system hbar = m = omega = 1
(cantilever mass, natural angular frequency and Planck's constant scaled
out).  In these units the reference parameter set is

    eta = 0.6, epsilon = 100, gamma_damp = 1e-5, kBT = 1e3, e_d = 0.85,
    A1 = 0.2, B1 = 5e-5, A2 = 0.07, B2 = 0, g = 1e-4, AMP = 50,

which corresponds roughly to a 16 kHz cantilever with an oscillation
amplitude of 32 nm per 50 dimensionless length units.  Those physical
conversions are documentation only; nothing in the package computes with
physical units.

Derived quantities:

* ``gamma_big`` -- the effective frequency-shift coupling eta^2/(2 epsilon).
  The two wavepacket restoring coefficients are ``1 +/- 2*gamma_big``, so a
  localized spin shifts the cantilever frequency by about +/-gamma_big.
* ``a1, b1``   -- thermal Lindblad coefficients sqrt(4*gamma_damp*kBT) and
  sqrt(gamma_damp/(4*kBT)).
* ``lambda_pc`` -- photocurrent noise scale of the rescaled homodyne record
  ``I_c dt = <Z> dt - lambda_pc dW``; either given directly or derived from
  the optical interferometer constants via :func:`derive_lambda`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace

from .errors import ParameterError

# Unit system: fixed, not configurable.
HBAR = 1.0
MASS = 1.0
OMEGA = 1.0

#: Clamp width for the spin-up probability.  The moment equations contain
#: r_d/r_u and r_u/r_d factors that are singular at full localization, so
#: r_u is kept inside [EPS_R, 1-EPS_R].
EPS_R = 1e-8

#: Near-localization freeze threshold.  Below this weight the empty packet
#: is slaved to the occupied one (the exchange terms are stiff and the
#: empty packet carries no probability weight).
FREEZE_R = 1e-6

#: Adiabatic validity: eta*amp/epsilon must stay well below 1.
ADIABATIC_REJECT = 0.5
ADIABATIC_WARN = 0.3


def derive_gamma(eta: float, epsilon: float) -> float:
    """Effective frequency-shift coupling eta^2 / (2 epsilon).

    The reference set (0.6, 100) gives 1.8e-3.
    """
    if epsilon <= 0.0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    return eta * eta / (2.0 * epsilon)


def derive_thermal_coeffs(gamma_damp: float, kbt: float) -> tuple[float, float]:
    """Thermal Lindblad coefficients (A1, B1) for damping rate and temperature.

    With hbar = m = 1: A1 = sqrt(4*gamma_damp*kBT), B1 = sqrt(gamma_damp/(4*kBT)).
    A1 heats the momentum variance, B1 the position variance, and their
    product A1*B1 = gamma_damp restores the classical damping constant.
    """
    if kbt <= 0.0:
        raise ParameterError(f"kBT must be positive, got {kbt}")
    if gamma_damp < 0.0:
        raise ParameterError(f"gamma_damp must be nonnegative, got {gamma_damp}")
    a1 = math.sqrt(4.0 * gamma_damp * kbt)
    b1 = math.sqrt(gamma_damp / (4.0 * kbt))
    return a1, b1


@dataclass(frozen=True)
class OpticsParams:
    """Optical interferometer constants entering the photocurrent scale.

    kappae_over_gc is the dimensionless combination 8*kappa*E/gamma_c of the
    cavity coupling and drive; gamma_c the cavity loss rate; q_factor the
    cantilever quality factor (1/gamma_damp in dimensionless units);
    amp_scale the amplitude rescaling that puts the record in cantilever
    length units.
    """

    kappae_over_gc: float = 1.9e3
    gamma_c: float = 1.4e8
    q_factor: float = 1e5
    amp_scale: float = 50.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "amp_scale":
                if v < 0.0:
                    raise ParameterError(f"{f.name} must be nonnegative, got {v}")
            elif v <= 0.0:
                raise ParameterError(f"{f.name} must be positive, got {v}")


def derive_lambda(optics: OpticsParams, e_d: float) -> float:
    """Photocurrent noise scale of the rescaled homodyne record.

    lambda = amp_scale * sqrt(gamma_c^3 / e_d) / (kappae_over_gc * gamma_c * Q).
    The reference optics block with e_d = 0.85 gives about 3.38e-3.
    Scales inversely with Q and linearly with amp_scale.
    """
    if not 0.0 < e_d <= 1.0:
        raise ParameterError(f"e_d must be in (0, 1], got {e_d}")
    num = optics.amp_scale * math.sqrt(optics.gamma_c**3 / e_d)
    den = optics.kappae_over_gc * optics.gamma_c * optics.q_factor
    return num / den


#: Photocurrent noise scale for the reference optics and e_d = 0.85.
LAMBDA_PC_DEFAULT = derive_lambda(OpticsParams(), 0.85)


@dataclass(frozen=True)
class SystemParams:
    """All dimensionless model constants plus integration controls.

    ``gamma_big``, and by default ``a1``/``b1``, are derived; pass explicit
    a1/b1 only to decouple the Lindblad coefficients from (gamma_damp, kBT).
    ``dt`` is the recorded sample spacing; the integrator subdivides it
    internally (see RunConfig.dt_int).
    """

    eta: float = 0.6
    epsilon: float = 100.0
    gamma_damp: float = 1e-5
    kappa_s: float = 1e-5
    e_d: float = 0.85
    kbt: float = 1e3
    a2: float = 0.07
    b2: float = 0.0
    lambda_pc: float = LAMBDA_PC_DEFAULT
    g_fb: float = 1e-4
    amp_set: float = 50.0
    dt: float = 0.02
    a1: float | None = None
    b1: float | None = None
    gamma_big: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gamma_big", derive_gamma(self.eta, self.epsilon))
        if self.a1 is None or self.b1 is None:
            a1, b1 = derive_thermal_coeffs(self.gamma_damp, self.kbt)
            object.__setattr__(self, "a1", self.a1 if self.a1 is not None else a1)
            object.__setattr__(self, "b1", self.b1 if self.b1 is not None else b1)
        self._validate()

    def _validate(self):
        if not 0.0 < self.e_d <= 1.0:
            raise ParameterError(f"e_d must be in (0, 1], got {self.e_d}")
        if self.kappa_s < 0.0:
            raise ParameterError(f"kappa_s must be nonnegative, got {self.kappa_s}")
        if self.dt <= 0.0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.amp_set <= 0.0:
            raise ParameterError(f"amp_set must be positive, got {self.amp_set}")
        if self.gamma_damp < 0.0:
            raise ParameterError(f"gamma_damp must be nonnegative, got {self.gamma_damp}")
        if self.b2 != 0.0:
            # The closed moment equations are derived for pure position
            # monitoring; a momentum component in L2 would add terms they
            # do not contain.
            raise ParameterError(f"b2 must be 0 (position monitoring only), got {self.b2}")
        for name in ("a1", "b1", "a2", "lambda_pc"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be nonnegative, got {getattr(self, name)}")
        ratio = self.eta * self.amp_set / self.epsilon
        if ratio >= ADIABATIC_REJECT:
            raise ParameterError(
                f"adiabatic validity violated: eta*amp_set/epsilon = {ratio:.3g} >= {ADIABATIC_REJECT}"
            )
        if ratio >= ADIABATIC_WARN:
            warnings.warn(
                f"eta*amp_set/epsilon = {ratio:.3g} is large; the adiabatic "
                "frequency-shift model is marginal above "
                f"{ADIABATIC_WARN}",
                stacklevel=3,
            )

    def with_(self, **changes) -> "SystemParams":
        """Copy with fields replaced (derived fields recomputed)."""
        if "gamma_big" in changes:
            raise ParameterError("gamma_big is derived from eta and epsilon")
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialCondition:
    """Initial packet means, second moments, and spin-up probability.

    Defaults are the protocol start: equal spin superposition, cantilever
    resting at its lowest position (z0 defaults to -amp_set at run
    construction) with minimal-uncertainty coherent-state spreads
    vZZ = vPP = 1/2, vZP = 0.
    """

    r_u0: float = 0.5
    z0: float = -50.0
    p0: float = 0.0
    vzz0: float = 0.5
    vpp0: float = 0.5
    vzp0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.r_u0 <= 1.0:
            raise ParameterError(f"r_u0 must be in [0, 1], got {self.r_u0}")
        if self.vzz0 <= 0.0 or self.vpp0 <= 0.0:
            raise ParameterError("initial variances must be positive")
        if self.vzz0 * self.vpp0 - self.vzp0**2 <= 0.0:
            raise ParameterError("initial covariance matrix must be positive-definite")

    @classmethod
    def protocol_default(cls, params: SystemParams) -> "InitialCondition":
        """Equal superposition, cantilever at -amp_set, coherent spreads."""
        return cls(z0=-params.amp_set)


@dataclass(frozen=True)
class GaussianState:
    """The 11 dynamical variables of the two-packet Gaussian description.

    r_u weights the spin-up packet; (Z, p) are per-packet means and the v*
    fields the per-packet central second moments (vZP is the symmetrized
    position-momentum covariance).
    """

    r_u: float
    z_u: float
    p_u: float
    z_d: float
    p_d: float
    vzz_u: float
    vpp_u: float
    vzp_u: float
    vzz_d: float
    vpp_d: float
    vzp_d: float

    def __post_init__(self):
        if not 0.0 <= self.r_u <= 1.0:
            raise ParameterError(f"r_u must be in [0, 1], got {self.r_u}")
        for name in ("vzz_u", "vpp_u", "vzz_d", "vpp_d"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.vzz_u * self.vpp_u - self.vzp_u**2 <= 0.0:
            raise ParameterError("up-packet covariance must be positive-definite")
        if self.vzz_d * self.vpp_d - self.vzp_d**2 <= 0.0:
            raise ParameterError("down-packet covariance must be positive-definite")

    def as_array(self):
        import numpy as np

        return np.array(
            [
                self.r_u,
                self.z_u,
                self.p_u,
                self.z_d,
                self.p_d,
                self.vzz_u,
                self.vpp_u,
                self.vzp_u,
                self.vzz_d,
                self.vpp_d,
                self.vzp_d,
            ]
        )

    @classmethod
    def from_array(cls, y) -> "GaussianState":
        return cls(*(float(v) for v in y))


#: Field order shared by GaussianState, drift and diffusion vectors.
STATE_FIELDS = (
    "r_u",
    "z_u",
    "p_u",
    "z_d",
    "p_d",
    "vzz_u",
    "vpp_u",
    "vzp_u",
    "vzz_d",
    "vpp_d",
    "vzp_d",
)


def default_initial_state(params: SystemParams, ic: InitialCondition | None = None) -> GaussianState:
    """Build the starting state: both packets share the given means/covariance.

    With ic omitted, uses the protocol default (equal superposition at
    -amp_set with coherent-state spreads).
    """
    if ic is None:
        ic = InitialCondition.protocol_default(params)
    r_u = min(max(ic.r_u0, EPS_R), 1.0 - EPS_R)
    return GaussianState(
        r_u=r_u,
        z_u=ic.z0,
        p_u=ic.p0,
        z_d=ic.z0,
        p_d=ic.p0,
        vzz_u=ic.vzz0,
        vpp_u=ic.vpp0,
        vzp_u=ic.vzp0,
        vzz_d=ic.vzz0,
        vpp_d=ic.vpp0,
        vzp_d=ic.vzp0,
    )
