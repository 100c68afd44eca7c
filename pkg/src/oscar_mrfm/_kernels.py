"""Compiled inner loops for the Gaussian two-packet dynamics.

Everything here operates on plain float64 scalars/arrays so the same
functions can be called both from the thin Python wrappers in
:mod:`gaussian` / :mod:`feedback` and from the fused per-sample loop used
for long runs.  State vector layout (shared with GaussianState / drift /
diffusion):

    0 r_u | 1 Z_u | 2 p_u | 3 Z_d | 4 p_d |
    5 vZZ_u | 6 vPP_u | 7 vZP_u | 8 vZZ_d | 9 vPP_d | 10 vZP_d

Parameter vector layout (see gaussian.pack_params):

    0 gamma_big | 1 gamma_damp | 2 kappa_s | 3 e_d | 4 A1 | 5 B1 | 6 A2 |
    7 eps_r (probability clamp) | 8 freeze_r (packet-slaving threshold)

Units: hbar = m = omega = 1 throughout.  The scalar cores are shared by
the array wrappers and the fused loop, so both paths perform identical
floating-point operations.
"""

import math

import numpy as np
from numba import njit

NSTATE = 11

# heun_step status codes
OK = 0
NONFINITE = 1
BAD_VARIANCE = 2


@njit(inline="always")
def _drift_terms(
    ru, zu, pu, zd, pd, vzu, vpu, vru, vzd, vpd, vrd,
    f_t, gb, gd, ks, ed, a1, b1, a2, freeze,
):
    """Right-hand sides of the 11 moment equations (Gaussian closure).

    Below the freeze threshold the empty packet's derivatives are copies
    of the occupied packet's, which keeps the stiff kappa_s*(r_d/r_u)
    exchange terms out of the system while one packet carries no weight.
    """
    rd = 1.0 - ru
    dz = zu - zd
    dp = pu - pd
    cm = 4.0 * ed * a2 * a2          # measurement-backaction contraction rate
    heat_z = b1 * b1                 # position-variance heating (hbar = 1)
    heat_p = a1 * a1 + a2 * a2       # momentum-variance heating
    ku = 1.0 + 2.0 * gb              # up-packet restoring coefficient
    kd = 1.0 - 2.0 * gb

    d0 = ks * (1.0 - 2.0 * ru)

    if ru >= freeze and rd >= freeze:
        ex_u = ks * rd / ru
        ex_d = ks * ru / rd
        d1 = pu - cm * vzu * rd * dz - ex_u * dz
        d2 = -ku * zu - 2.0 * gd * pu + f_t - ex_u * dp - cm * vru * rd * dz
        d3 = pd + cm * vzd * ru * dz + ex_d * dz
        d4 = -kd * zd - 2.0 * gd * pd + f_t + ex_d * dp + cm * vrd * ru * dz
        d5 = 2.0 * vru + heat_z - cm * vzu * vzu - ex_u * (vzu - vzd - dz * dz)
        d6 = (
            heat_p - 2.0 * ku * vru - 4.0 * gd * vpu - cm * vru * vru
            - ex_u * (vpu - vpd - dp * dp)
        )
        d7 = (
            -ku * vzu + vpu - 2.0 * gd * vru - cm * vru * vzu
            - ex_u * (vru - vrd - dz * dp)
        )
        d8 = 2.0 * vrd + heat_z - cm * vzd * vzd + ex_d * (vzu - vzd + dz * dz)
        d9 = (
            heat_p - 2.0 * kd * vrd - 4.0 * gd * vpd - cm * vrd * vrd
            + ex_d * (vpu - vpd + dp * dp)
        )
        d10 = (
            -kd * vzd + vpd - 2.0 * gd * vrd - cm * vrd * vzd
            + ex_d * (vru - vrd + dz * dp)
        )
    elif ru < freeze:
        ex_d = ks * ru / rd
        d3 = pd + cm * vzd * ru * dz + ex_d * dz
        d4 = -kd * zd - 2.0 * gd * pd + f_t + ex_d * dp + cm * vrd * ru * dz
        d8 = 2.0 * vrd + heat_z - cm * vzd * vzd + ex_d * (vzu - vzd + dz * dz)
        d9 = (
            heat_p - 2.0 * kd * vrd - 4.0 * gd * vpd - cm * vrd * vrd
            + ex_d * (vpu - vpd + dp * dp)
        )
        d10 = (
            -kd * vzd + vpd - 2.0 * gd * vrd - cm * vrd * vzd
            + ex_d * (vru - vrd + dz * dp)
        )
        d1 = d3
        d2 = d4
        d5 = d8
        d6 = d9
        d7 = d10
    else:
        ex_u = ks * rd / ru
        d1 = pu - cm * vzu * rd * dz - ex_u * dz
        d2 = -ku * zu - 2.0 * gd * pu + f_t - ex_u * dp - cm * vru * rd * dz
        d5 = 2.0 * vru + heat_z - cm * vzu * vzu - ex_u * (vzu - vzd - dz * dz)
        d6 = (
            heat_p - 2.0 * ku * vru - 4.0 * gd * vpu - cm * vru * vru
            - ex_u * (vpu - vpd - dp * dp)
        )
        d7 = (
            -ku * vzu + vpu - 2.0 * gd * vru - cm * vru * vzu
            - ex_u * (vru - vrd - dz * dp)
        )
        d3 = d1
        d4 = d2
        d8 = d5
        d9 = d6
        d10 = d7
    return d0, d1, d2, d3, d4, d5, d6, d7, d8, d9, d10


@njit(cache=True)
def drift11(y, f_t, p, out):
    """Deterministic (dt) part of the 11 coupled moment equations."""
    d = _drift_terms(
        y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8], y[9], y[10],
        f_t, p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[8],
    )
    for k in range(NSTATE):
        out[k] = d[k]


@njit(cache=True)
def diffusion11(y, p, out):
    """Wiener (dW) coefficients; second-moment entries are exactly zero."""
    ed = p[3]
    a2 = p[6]
    s = 2.0 * math.sqrt(ed) * a2
    ru = y[0]
    dz = y[1] - y[3]
    out[0] = s * ru * (1.0 - ru) * dz
    out[1] = s * y[5]
    out[2] = s * y[7]
    out[3] = s * y[8]
    out[4] = s * y[10]
    for k in range(5, NSTATE):
        out[k] = 0.0


@njit(cache=True)
def heun_step(y, f_t, dt, dw, p):
    """One stochastic Heun step, in place on ``y``.

    Drift is advanced with the explicit predictor-corrector (trapezoidal)
    rule; diffusion is added at the pre-point only, keeping the Ito
    interpretation.  Returns OK, NONFINITE or BAD_VARIANCE; on failure
    ``y`` is left unchanged.
    """
    gb = p[0]
    gd = p[1]
    ks = p[2]
    ed = p[3]
    a1c = p[4]
    b1c = p[5]
    a2c = p[6]
    eps = p[7]
    freeze = p[8]

    ru = y[0]
    zu = y[1]
    pu = y[2]
    zd = y[3]
    pd = y[4]
    vzu = y[5]
    vpu = y[6]
    vru = y[7]
    vzd = y[8]
    vpd = y[9]
    vrd = y[10]

    d = _drift_terms(
        ru, zu, pu, zd, pd, vzu, vpu, vru, vzd, vpd, vrd,
        f_t, gb, gd, ks, ed, a1c, b1c, a2c, freeze,
    )

    s = 2.0 * math.sqrt(ed) * a2c
    b0 = s * ru * (1.0 - ru) * (zu - zd)
    b1 = s * vzu
    b2 = s * vru
    b3 = s * vzd
    b4 = s * vrd

    # predictor (Euler-Maruyama); r_u clamped before the corrector drift,
    # which divides by it
    q0 = ru + d[0] * dt + b0 * dw
    if q0 < eps:
        q0 = eps
    elif q0 > 1.0 - eps:
        q0 = 1.0 - eps
    q1 = zu + d[1] * dt + b1 * dw
    q2 = pu + d[2] * dt + b2 * dw
    q3 = zd + d[3] * dt + b3 * dw
    q4 = pd + d[4] * dt + b4 * dw
    q5 = vzu + d[5] * dt
    q6 = vpu + d[6] * dt
    q7 = vru + d[7] * dt
    q8 = vzd + d[8] * dt
    q9 = vpd + d[9] * dt
    q10 = vrd + d[10] * dt

    e = _drift_terms(
        q0, q1, q2, q3, q4, q5, q6, q7, q8, q9, q10,
        f_t, gb, gd, ks, ed, a1c, b1c, a2c, freeze,
    )

    h = 0.5 * dt
    n0 = ru + (d[0] + e[0]) * h + b0 * dw
    n1 = zu + (d[1] + e[1]) * h + b1 * dw
    n2 = pu + (d[2] + e[2]) * h + b2 * dw
    n3 = zd + (d[3] + e[3]) * h + b3 * dw
    n4 = pd + (d[4] + e[4]) * h + b4 * dw
    n5 = vzu + (d[5] + e[5]) * h
    n6 = vpu + (d[6] + e[6]) * h
    n7 = vru + (d[7] + e[7]) * h
    n8 = vzd + (d[8] + e[8]) * h
    n9 = vpd + (d[9] + e[9]) * h
    n10 = vrd + (d[10] + e[10]) * h

    if not (
        math.isfinite(n0)
        and math.isfinite(n1)
        and math.isfinite(n2)
        and math.isfinite(n3)
        and math.isfinite(n4)
        and math.isfinite(n5)
        and math.isfinite(n6)
        and math.isfinite(n7)
        and math.isfinite(n8)
        and math.isfinite(n9)
        and math.isfinite(n10)
    ):
        return NONFINITE
    if n5 <= 0.0 or n6 <= 0.0 or n8 <= 0.0 or n9 <= 0.0:
        return BAD_VARIANCE

    if n0 < eps:
        n0 = eps
    elif n0 > 1.0 - eps:
        n0 = 1.0 - eps
    # near-localization freeze: slave the empty packet to the occupied one
    if n0 < freeze:
        n1 = n3
        n2 = n4
        n5 = n8
        n6 = n9
        n7 = n10
    elif n0 > 1.0 - freeze:
        n3 = n1
        n4 = n2
        n8 = n5
        n9 = n6
        n10 = n7

    y[0] = n0
    y[1] = n1
    y[2] = n2
    y[3] = n3
    y[4] = n4
    y[5] = n5
    y[6] = n6
    y[7] = n7
    y[8] = n8
    y[9] = n9
    y[10] = n10
    return OK


@njit(cache=True)
def rk4_unitary(y4, f_t, dt, gb, out4):
    """Classical RK4 update of the four packet means, no damping or noise."""
    ku = 1.0 + 2.0 * gb
    kd = 1.0 - 2.0 * gb
    zu = y4[0]
    pu = y4[1]
    zd = y4[2]
    pd = y4[3]

    az1 = pu
    ap1 = -ku * zu + f_t
    bz1 = pd
    bp1 = -kd * zd + f_t

    az2 = pu + 0.5 * dt * ap1
    ap2 = -ku * (zu + 0.5 * dt * az1) + f_t
    bz2 = pd + 0.5 * dt * bp1
    bp2 = -kd * (zd + 0.5 * dt * bz1) + f_t

    az3 = pu + 0.5 * dt * ap2
    ap3 = -ku * (zu + 0.5 * dt * az2) + f_t
    bz3 = pd + 0.5 * dt * bp2
    bp3 = -kd * (zd + 0.5 * dt * bz2) + f_t

    az4 = pu + dt * ap3
    ap4 = -ku * (zu + dt * az3) + f_t
    bz4 = pd + dt * bp3
    bp4 = -kd * (zd + dt * bz3) + f_t

    c = dt / 6.0
    out4[0] = zu + c * (az1 + 2.0 * az2 + 2.0 * az3 + az4)
    out4[1] = pu + c * (ap1 + 2.0 * ap2 + 2.0 * ap3 + ap4)
    out4[2] = zd + c * (bz1 + 2.0 * bz2 + 2.0 * bz3 + bz4)
    out4[3] = pd + c * (bp1 + 2.0 * bp2 + 2.0 * bp3 + bp4)


# ---------------------------------------------------------------------------
# Feedback controller primitives (shared by FeedbackState and the fused loop)
# ---------------------------------------------------------------------------


@njit(cache=True)
def fb_ingest(tap_buf, pcos, psin, fbi, fbs, i_c, t, omega, amp_set, lp_alpha):
    """Ingest one photocurrent sample; returns the amplitude estimate.

    The delay line stores the negated rescaled record: the raw homodyne
    current is proportional to -<Z>, and it is that sign which makes the
    quarter-period-delayed tap land in phase with the cantilever velocity
    (the energy-pumping condition of the amplitude lock).

    Amplitude is quadrature demodulation at ``omega`` over a trailing
    one-period rectangular window; before the window fills it reports
    ``amp_set`` as a placeholder.
    """
    n = fbi[0]
    win_n = pcos.shape[0]
    delay_n = tap_buf.shape[0]

    s = -i_c
    if lp_alpha > 0.0:
        prev = fbs[3] if n > 0 else s
        s = prev + lp_alpha * (s - prev)
        fbs[3] = s
    tap_buf[n % delay_n] = s

    c = math.cos(omega * t) * i_c
    q = math.sin(omega * t) * i_c
    j = n % win_n
    if n >= win_n:
        fbs[0] -= pcos[j]
        fbs[1] -= psin[j]
    pcos[j] = c
    psin[j] = q
    fbs[0] += c
    fbs[1] += q
    fbi[0] = n + 1

    if n + 1 >= win_n:
        ibar = fbs[0] / win_n
        qbar = fbs[1] / win_n
        amp = 2.0 * math.sqrt(ibar * ibar + qbar * qbar)
    else:
        amp = amp_set
    fbs[2] = amp
    return amp


@njit(cache=True)
def fb_force(tap_buf, fbi, fbs, g, amp_set, win_n):
    """Force for the next sample interval: g*(amp_set - Amp)*tap.

    Zero until one full demodulation window plus the delay have elapsed.
    The tap is the sample ingested ``delay_n`` intervals ago.
    """
    n = fbi[0]
    delay_n = tap_buf.shape[0]
    if n < win_n + delay_n:
        return 0.0
    return g * (amp_set - fbs[2]) * tap_buf[n % delay_n]


# ---------------------------------------------------------------------------
# Fused per-sample loops
# ---------------------------------------------------------------------------

# counters layout (int64)
C_FLIPS = 0
C_ARMED = 1
C_LOC_UP = 2
C_LOC_DN = 3
C_PREV_SIDE = 4  # sign of (r_u - 0.5) at the previous sample: -1, 0, +1
NCOUNTERS = 5

# monitors layout (float64)
M_MIN_DET = 0   # min over both packets of vZZ*vPP - vZP^2
M_RU_MID = 1
NMONITORS = 2


@njit(cache=True)
def update_counters(counters, ru):
    """Flip/localization bookkeeping on the recorded sample grid.

    A flip is a crossing of r_u = 0.5 that happens after r_u has been
    outside [0.1, 0.9]; the counter re-arms on the next excursion.
    """
    side = 0
    if ru > 0.5:
        side = 1
    elif ru < 0.5:
        side = -1
    prev = counters[C_PREV_SIDE]
    if prev != 0 and side != 0 and side != prev and counters[C_ARMED] == 1:
        counters[C_FLIPS] += 1
        counters[C_ARMED] = 0
    if ru > 0.9 or ru < 0.1:
        counters[C_ARMED] = 1
    if ru > 0.99:
        counters[C_LOC_UP] += 1
    elif ru < 0.01:
        counters[C_LOC_DN] += 1
    if side != 0:
        counters[C_PREV_SIDE] = side


@njit(cache=True)
def run_gaussian_chunk(
    y,
    p,
    lam,
    g_fb,
    amp_set,
    omega,
    lp_alpha,
    sample_dt,
    dt_int,
    substeps,
    n_samples,
    start_idx,
    mid_idx,
    normals,
    feedback_on,
    tap_buf,
    pcos,
    psin,
    fbi,
    fbs,
    fcur,
    rec,
    rec_stride,
    rec_cursor,
    counters,
    monitors,
):
    """Advance ``n_samples`` recorded intervals of the closed-loop dynamics.

    Per interval: hold the force constant, take ``substeps`` Heun steps of
    ``dt_int`` driven by pre-drawn standard normals, synthesize the
    photocurrent from the interval's aggregate Wiener increment and the
    pre-interval <Z>, update the amplitude estimator, then compute the
    force for the next interval.  Record rows (10 columns) are written for
    global sample indices divisible by ``rec_stride``.

    Returns (status, sample_index, rows_written).  On a sub-step failure
    the state is rolled back to the start of the failing sample so the
    caller can re-integrate that interval with step halving.
    """
    sqdt = math.sqrt(dt_int)
    win_n = pcos.shape[0]
    backup = np.empty(NSTATE)
    rows = rec_cursor
    for i in range(n_samples):
        gidx = start_idx + i
        t_n = gidx * sample_dt
        f_t = fcur[0] if feedback_on == 1 else 0.0
        ru0 = y[0]
        zbar = ru0 * y[1] + (1.0 - ru0) * y[3]
        for k in range(NSTATE):
            backup[k] = y[k]

        dwsum = 0.0
        base = i * substeps
        for sidx in range(substeps):
            dw = normals[base + sidx] * sqdt
            dwsum += dw
            st = heun_step(y, f_t, dt_int, dw, p)
            if st != OK:
                for k in range(NSTATE):
                    y[k] = backup[k]
                return st, i, rows
            det_u = y[5] * y[6] - y[7] * y[7]
            det_d = y[8] * y[9] - y[10] * y[10]
            dmin = det_u if det_u < det_d else det_d
            if dmin < monitors[M_MIN_DET]:
                monitors[M_MIN_DET] = dmin

        i_c = zbar - lam * dwsum / sample_dt
        amp = fb_ingest(tap_buf, pcos, psin, fbi, fbs, i_c, t_n, omega, amp_set, lp_alpha)
        fcur[0] = fb_force(tap_buf, fbi, fbs, g_fb, amp_set, win_n)

        update_counters(counters, ru0)
        if gidx == mid_idx:
            monitors[M_RU_MID] = ru0
        if gidx % rec_stride == 0:
            rec[rows, 0] = t_n
            rec[rows, 1] = zbar
            rec[rows, 2] = ru0
            rec[rows, 3] = backup[1]
            rec[rows, 4] = backup[3]
            rec[rows, 5] = backup[5]
            rec[rows, 6] = backup[8]
            rec[rows, 7] = i_c
            rec[rows, 8] = f_t
            rec[rows, 9] = amp
            rows += 1
    return OK, n_samples, rows


@njit(cache=True)
def run_unitary_chunk(
    y4,
    r_u,
    vzz_u0,
    vzz_d0,
    gb,
    g_fb,
    amp_set,
    omega,
    lp_alpha,
    sample_dt,
    dt_int,
    substeps,
    n_samples,
    start_idx,
    mid_idx,
    feedback_on,
    tap_buf,
    pcos,
    psin,
    fbi,
    fbs,
    fcur,
    rec,
    rec_stride,
    rec_cursor,
    counters,
    monitors,
):
    """Noise-free analogue of run_gaussian_chunk: RK4 means only.

    The spin-up probability is a constant of motion and the photocurrent
    is the noiseless expected position.
    """
    win_n = pcos.shape[0]
    out4 = np.empty(4)
    rows = rec_cursor
    for i in range(n_samples):
        gidx = start_idx + i
        t_n = gidx * sample_dt
        f_t = fcur[0] if feedback_on == 1 else 0.0
        zbar = r_u * y4[0] + (1.0 - r_u) * y4[2]
        zu0 = y4[0]
        zd0 = y4[2]
        for _ in range(substeps):
            rk4_unitary(y4, f_t, dt_int, gb, out4)
            y4[0] = out4[0]
            y4[1] = out4[1]
            y4[2] = out4[2]
            y4[3] = out4[3]
        if not (
            math.isfinite(y4[0])
            and math.isfinite(y4[1])
            and math.isfinite(y4[2])
            and math.isfinite(y4[3])
        ):
            return NONFINITE, i, rows

        i_c = zbar
        amp = fb_ingest(tap_buf, pcos, psin, fbi, fbs, i_c, t_n, omega, amp_set, lp_alpha)
        fcur[0] = fb_force(tap_buf, fbi, fbs, g_fb, amp_set, win_n)

        update_counters(counters, r_u)
        if gidx == mid_idx:
            monitors[M_RU_MID] = r_u
        if gidx % rec_stride == 0:
            rec[rows, 0] = t_n
            rec[rows, 1] = zbar
            rec[rows, 2] = r_u
            rec[rows, 3] = zu0
            rec[rows, 4] = zd0
            rec[rows, 5] = vzz_u0
            rec[rows, 6] = vzz_d0
            rec[rows, 7] = i_c
            rec[rows, 8] = f_t
            rec[rows, 9] = amp
            rows += 1
    return OK, n_samples, rows
