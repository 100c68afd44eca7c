"""The closed set of 11 coupled Ito SDEs for the two-packet description.

With the cantilever approximated as one Gaussian wavepacket per spin
orientation, the conditioned dynamics reduce to the spin-up weight r_u,
per-packet means (Z, p) and per-packet second moments.  ``drift`` and
``diffusion`` expose the equation right-hand sides; ``step`` advances one
stochastic Heun step (drift predictor-corrector, diffusion at the Ito
pre-point); ``unitary_step`` integrates the closed noise-free first-order
system with RK4.

Wavepacket frequencies: the up packet sees restoring coefficient
1 + 2*gamma_big, the down packet 1 - 2*gamma_big, so their angular
frequencies are sqrt(1 +/- 2*gamma_big).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import IntegrationBlowupError, NegativeVarianceError, ParameterError
from .model import EPS_R, FREEZE_R, GaussianState, SystemParams

#: Retry ladder for rejected steps: dt/2 down to dt/16.
MAX_HALVINGS = 4


def pack_params(params: SystemParams) -> np.ndarray:
    """Flatten the parameters consumed by the compiled kernels."""
    return np.array(
        [
            params.gamma_big,
            params.gamma_damp,
            params.kappa_s,
            params.e_d,
            params.a1,
            params.b1,
            params.a2,
            EPS_R,
            FREEZE_R,
        ]
    )


def _check_clamped(r_u: float):
    if not EPS_R <= r_u <= 1.0 - EPS_R:
        raise ParameterError(
            f"r_u = {r_u} outside the clamp range [{EPS_R}, {1.0 - EPS_R}]; "
            "clamping is the stepper's job, drift expects a clamped state"
        )


def drift(state: GaussianState, params: SystemParams, f_t: float = 0.0) -> np.ndarray:
    """Deterministic part of all 11 equations, Gaussian closure applied.

    Returns an array ordered like the state fields.  The second-moment
    entries contain the Riccati measurement contraction, the thermal
    heating floors and the spin-noise exchange terms.
    """
    _check_clamped(state.r_u)
    out = np.empty(_kernels.NSTATE)
    _kernels.drift11(state.as_array(), f_t, pack_params(params), out)
    return out


def diffusion(state: GaussianState, params: SystemParams) -> np.ndarray:
    """Wiener coefficients of the 11 equations.

    The six second-moment entries are exactly zero under the closure; no
    stochastic term is reintroduced there.
    """
    out = np.empty(_kernels.NSTATE)
    _kernels.diffusion11(state.as_array(), pack_params(params), out)
    return out


def expected_position(state: GaussianState) -> float:
    """Mean cantilever position r_u*Z_u + (1 - r_u)*Z_d."""
    return state.r_u * state.z_u + (1.0 - state.r_u) * state.z_d


def _bridge_split(dw: float, dt: float, n: int, rng) -> np.ndarray:
    """Split one Wiener increment into n conditioned sub-increments.

    Recursive midpoint (Brownian bridge) construction; with no RNG the
    split is the deterministic midpoint, which keeps the retry path
    usable when the caller cannot supply randomness.
    """
    if n == 1:
        return np.array([dw])
    xi = rng.standard_normal() if rng is not None else 0.0
    half = 0.5 * dw + 0.5 * np.sqrt(dt) * xi
    left = _bridge_split(half, dt / 2.0, n // 2, rng)
    right = _bridge_split(dw - half, dt / 2.0, n // 2, rng)
    return np.concatenate((left, right))


def step_array(y: np.ndarray, p: np.ndarray, f_t: float, dt: float, dw: float, rng=None) -> None:
    """In-place stochastic Heun step on a raw state vector.

    On a nonpositive-variance rejection the step is re-integrated at
    dt/2, dt/4, ... dt/16 with bridge-split increments before giving up.
    Raises IntegrationBlowupError / NegativeVarianceError.
    """
    status = _kernels.heun_step(y, f_t, dt, dw, p)
    if status == _kernels.OK:
        return
    if status == _kernels.NONFINITE:
        raise IntegrationBlowupError("non-finite state after step")
    for level in range(1, MAX_HALVINGS + 1):
        n_sub = 2**level
        subs = _bridge_split(dw, dt, n_sub, rng)
        trial = y.copy()
        failed = False
        for dws in subs:
            st = _kernels.heun_step(trial, f_t, dt / n_sub, dws, p)
            if st == _kernels.NONFINITE:
                raise IntegrationBlowupError("non-finite state during step halving")
            if st != _kernels.OK:
                failed = True
                break
        if not failed:
            y[:] = trial
            return
    raise NegativeVarianceError(
        f"packet variance stayed nonpositive down to dt/{2**MAX_HALVINGS}"
    )


def step(
    state: GaussianState,
    params: SystemParams,
    f_t: float,
    dt: float,
    dw: float,
    rng=None,
) -> GaussianState:
    """Advance one step of the full stochastic system.

    ``dw`` is the caller's Wiener increment, Normal(0, dt); the same draw
    must be shared with the photocurrent (and the density-matrix oracle in
    comparison runs).  r_u is clamped and the near-localization freeze is
    applied after the update.
    """
    if dt <= 0.0:
        raise ParameterError(f"dt must be positive, got {dt}")
    y = state.as_array()
    step_array(y, pack_params(params), f_t, dt, dw, rng=rng)
    return GaussianState.from_array(y)


def unitary_step(
    z_u: float,
    p_u: float,
    z_d: float,
    p_d: float,
    r_u: float,
    params: SystemParams,
    f_t: float,
    dt: float,
) -> tuple[float, float, float, float, float]:
    """RK4 update of the packet means for the closed noise-free system.

    The spin-up probability is a constant of motion here and is returned
    untouched.
    """
    if dt <= 0.0:
        raise ParameterError(f"dt must be positive, got {dt}")
    y4 = np.array([z_u, p_u, z_d, p_d])
    out4 = np.empty(4)
    _kernels.rk4_unitary(y4, f_t, dt, params.gamma_big, out4)
    return float(out4[0]), float(out4[1]), float(out4[2]), float(out4[3]), r_u
