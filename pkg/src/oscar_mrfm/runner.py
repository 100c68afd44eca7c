"""Experiment orchestration: trajectories, ensembles, comparisons, sweeps.

Per recorded sample the order of operations is fixed: draw the Wiener
increments, advance the dynamics across the internal substeps (force held
constant), synthesize the photocurrent from the pre-interval <Z> and the
aggregate increment, update the amplitude estimate, then compute the force
for the next interval.  Record row n therefore holds the state at t_n
together with the measurement products of the interval [t_n, t_n + dt).

Reproducibility: trajectory k of a run draws all its randomness from a
counter-based Philox stream keyed by (seed, k), so outputs are identical
across chunk boundaries, process pools and repeated runs.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox

from . import _kernels, gaussian, sme, spectral
from .config import RunConfig
from .errors import ConfigError, CovarianceError, NumericalError, TruncationError
from .feedback import FeedbackState
from .model import default_initial_state
from .spectral import SpinVerdict

#: Fixed column order of every trajectory CSV.
RECORD_COLUMNS = ("t", "zbar", "r_u", "Z_u", "Z_d", "vZZ_u", "vZZ_d", "I_c", "f_t", "Amp_t")

#: Samples integrated per kernel call; bounds the normals buffer.
CHUNK_SAMPLES = 8192

#: Monitored floor for vZZ*vPP - vZP^2 (hbar^2/4 with slack).
MIN_UNCERTAINTY_PRODUCT = 0.25 - 1e-6


def trajectory_rng(seed: int, trajectory_index: int) -> Generator:
    """Counter-based stream for one trajectory, independent of all others."""
    return Generator(Philox(key=np.array([seed, trajectory_index], dtype=np.uint64)))


@dataclass
class TrajectoryResult:
    """Recorded series plus run-level tallies for a single trajectory."""

    record: np.ndarray  # (n_rows, 10), RECORD_COLUMNS order
    flips: int
    loc_up_samples: int
    loc_dn_samples: int
    n_samples: int
    min_uncertainty_product: float
    r_u_midpoint: float
    final_state: np.ndarray
    seed: int
    trajectory_index: int

    @property
    def localized_fraction(self) -> float:
        return (self.loc_up_samples + self.loc_dn_samples) / self.n_samples

    def column(self, name: str) -> np.ndarray:
        return self.record[:, RECORD_COLUMNS.index(name)]


def _empty_record(n_samples: int, stride: int) -> np.ndarray:
    n_rows = (n_samples + stride - 1) // stride
    return np.empty((n_rows, len(RECORD_COLUMNS)))


class _FeedbackArrays:
    """Feedback controller state in the array form the kernels consume."""

    def __init__(self, cfg: RunConfig):
        fb = FeedbackState.for_params(cfg.params, lowpass_alpha=self._alpha(cfg))
        self.impl = fb
        self.fcur = np.zeros(1)

    @staticmethod
    def _alpha(cfg: RunConfig) -> float:
        # first-order low-pass: alpha = dt*cutoff clipped to [0, 1]; 0 = off
        return min(1.0, cfg.fb_lowpass_cutoff * cfg.params.dt)

    @property
    def args(self):
        fb = self.impl
        return (fb.tap_buf, fb.pcos, fb.psin, fb._idx, fb._sums)


def _python_sample(y, p_arr, cfg: RunConfig, gidx: int, normals, fba: _FeedbackArrays,
                   rec, rows, counters, monitors, rng):
    """One recorded interval via the step-level path with retry laddering.

    Mirrors the fused kernel's per-sample body exactly; used when a
    substep was rejected so the interval can be re-integrated with
    bridge-split increments.
    """
    params = cfg.params
    sample_dt = params.dt
    dt_int = cfg.dt_int
    sq = math.sqrt(dt_int)
    t_n = gidx * sample_dt
    f_t = fba.fcur[0] if cfg.feedback else 0.0
    ru0 = y[0]
    zbar = ru0 * y[1] + (1.0 - ru0) * y[3]
    zu0, zd0, vzu0, vzd0 = y[1], y[3], y[5], y[8]

    dwsum = 0.0
    for s in range(cfg.substeps):
        dw = normals[s] * sq
        dwsum += dw
        try:
            gaussian.step_array(y, p_arr, f_t, dt_int, dw, rng=rng)
        except NumericalError as exc:
            raise type(exc)(str(exc), step_index=gidx) from exc
        det_u = y[5] * y[6] - y[7] * y[7]
        det_d = y[8] * y[9] - y[10] * y[10]
        monitors[_kernels.M_MIN_DET] = min(monitors[_kernels.M_MIN_DET], det_u, det_d)

    i_c = zbar - params.lambda_pc * dwsum / sample_dt
    amp = _kernels.fb_ingest(*fba.args, i_c, t_n, fba.impl.omega_demod, params.amp_set,
                             fba.impl.lowpass_alpha)
    fba.fcur[0] = _kernels.fb_force(fba.impl.tap_buf, fba.impl._idx, fba.impl._sums,
                                    params.g_fb, params.amp_set, fba.impl.window_n)
    _kernels.update_counters(counters, ru0)
    if gidx == cfg.n_samples // 2:
        monitors[_kernels.M_RU_MID] = ru0
    if gidx % cfg.record_stride == 0:
        rec[rows] = (t_n, zbar, ru0, zu0, zd0, vzu0, vzd0, i_c, f_t, amp)
        rows += 1
    return rows


def _check_covariance(cfg: RunConfig, monitors):
    if cfg.check_covariance and monitors[_kernels.M_MIN_DET] < MIN_UNCERTAINTY_PRODUCT:
        raise CovarianceError(
            "wavepacket uncertainty product dropped to "
            f"{monitors[_kernels.M_MIN_DET]:.8f} < {MIN_UNCERTAINTY_PRODUCT}"
        )


def _run_gaussian_trajectory(cfg: RunConfig, trajectory_index: int) -> TrajectoryResult:
    params = cfg.params
    y = default_initial_state(params, cfg.initial_condition()).as_array()
    p_arr = gaussian.pack_params(params)
    fba = _FeedbackArrays(cfg)
    rng = trajectory_rng(cfg.seed, trajectory_index)
    counters = np.zeros(_kernels.NCOUNTERS, dtype=np.int64)
    monitors = np.array([np.inf, np.nan])
    rec = _empty_record(cfg.n_samples, cfg.record_stride)
    rows = 0
    substeps = cfg.substeps
    mid_idx = cfg.n_samples // 2

    g = 0
    try:
        while g < cfg.n_samples:
            m = min(CHUNK_SAMPLES, cfg.n_samples - g)
            normals = rng.standard_normal(m * substeps)
            off = 0
            while off < m:
                status, done, rows = _kernels.run_gaussian_chunk(
                    y, p_arr, params.lambda_pc, params.g_fb, params.amp_set,
                    fba.impl.omega_demod, fba.impl.lowpass_alpha,
                    params.dt, cfg.dt_int, substeps, m - off, g + off, mid_idx,
                    normals[off * substeps:], 1 if cfg.feedback else 0,
                    *fba.args, fba.fcur,
                    rec, cfg.record_stride, rows, counters, monitors,
                )
                if status == _kernels.OK:
                    off = m
                    break
                # rejected substep: redo that one interval with step halving
                off += done
                rows = _python_sample(
                    y, p_arr, cfg, g + off,
                    normals[off * substeps:(off + 1) * substeps],
                    fba, rec, rows, counters, monitors, rng,
                )
                off += 1
            g += m
    except NumericalError as exc:
        exc.partial_record = rec[:rows]
        raise

    _check_covariance(cfg, monitors)
    return TrajectoryResult(
        record=rec[:rows],
        flips=int(counters[_kernels.C_FLIPS]),
        loc_up_samples=int(counters[_kernels.C_LOC_UP]),
        loc_dn_samples=int(counters[_kernels.C_LOC_DN]),
        n_samples=cfg.n_samples,
        min_uncertainty_product=float(monitors[_kernels.M_MIN_DET]),
        r_u_midpoint=float(monitors[_kernels.M_RU_MID]),
        final_state=y.copy(),
        seed=cfg.seed,
        trajectory_index=trajectory_index,
    )


def _run_unitary_trajectory(cfg: RunConfig, trajectory_index: int) -> TrajectoryResult:
    params = cfg.params
    ic = cfg.initial_condition()
    state = default_initial_state(params, ic)
    y4 = np.array([state.z_u, state.p_u, state.z_d, state.p_d])
    fba = _FeedbackArrays(cfg)
    counters = np.zeros(_kernels.NCOUNTERS, dtype=np.int64)
    monitors = np.array([np.inf, np.nan])
    rec = _empty_record(cfg.n_samples, cfg.record_stride)
    rows = 0
    mid_idx = cfg.n_samples // 2

    g = 0
    while g < cfg.n_samples:
        m = min(CHUNK_SAMPLES, cfg.n_samples - g)
        status, done, rows = _kernels.run_unitary_chunk(
            y4, state.r_u, state.vzz_u, state.vzz_d, params.gamma_big,
            params.g_fb, params.amp_set, fba.impl.omega_demod, fba.impl.lowpass_alpha,
            params.dt, cfg.dt_int, cfg.substeps, m, g, mid_idx,
            1 if cfg.feedback else 0,
            *fba.args, fba.fcur,
            rec, cfg.record_stride, rows, counters, monitors,
        )
        if status != _kernels.OK:
            exc = NumericalError("non-finite state in noise-free integration",
                                 step_index=g + done)
            exc.partial_record = rec[:rows]
            raise exc
        g += m

    final = default_initial_state(params, ic).as_array()
    final[1], final[2], final[3], final[4] = y4
    final[0] = state.r_u
    return TrajectoryResult(
        record=rec[:rows],
        flips=int(counters[_kernels.C_FLIPS]),
        loc_up_samples=int(counters[_kernels.C_LOC_UP]),
        loc_dn_samples=int(counters[_kernels.C_LOC_DN]),
        n_samples=cfg.n_samples,
        min_uncertainty_product=float("inf"),
        r_u_midpoint=float(monitors[_kernels.M_RU_MID]),
        final_state=final,
        seed=cfg.seed,
        trajectory_index=trajectory_index,
    )


def _require_coherent_ic(cfg: RunConfig):
    ic = cfg.initial_condition()
    if not (ic.vzz0 == 0.5 and ic.vpp0 == 0.5 and ic.vzp0 == 0.0):
        raise ConfigError(
            "density-matrix runs start from a coherent packet; initial "
            "second moments must be vzz0 = vpp0 = 0.5, vzp0 = 0"
        )


def _run_sme_trajectory(cfg: RunConfig, trajectory_index: int) -> TrajectoryResult:
    """Full density-matrix trajectory with its own feedback loop."""
    _require_coherent_ic(cfg)
    params = cfg.params
    ic = cfg.initial_condition()
    ops = sme.build_operators(cfg.sme_dim, params, expected_amp=max(abs(ic.z0), params.amp_set))
    rho_b = sme.to_blocks(sme.initial_density(ops, ic.z0, ic.p0, ic.r_u0))
    fba = _FeedbackArrays(cfg)
    rng = trajectory_rng(cfg.seed, trajectory_index)
    counters = np.zeros(_kernels.NCOUNTERS, dtype=np.int64)
    rec = _empty_record(cfg.n_samples, cfg.record_stride)
    rows = 0
    sq = math.sqrt(cfg.dt_int)
    n_guard = sme.TRUNCATION_FRACTION * cfg.sme_dim
    ru_mid = float("nan")

    f_t = 0.0
    try:
        for gidx in range(cfg.n_samples):
            t_n = gidx * params.dt
            m = sme.extract_moments_blocks(rho_b, ops)
            up = m.up if m.up is not None else m.down
            dn = m.down if m.down is not None else m.up
            zbar = m.zbar

            normals = rng.standard_normal(cfg.substeps)
            dwsum = 0.0
            try:
                for s in range(cfg.substeps):
                    dw = normals[s] * sq
                    dwsum += dw
                    rho_b = sme.sme_step_blocks(rho_b, ops, params, f_t, cfg.dt_int, dw)
            except NumericalError as exc:
                raise type(exc)(str(exc), step_index=gidx) from exc

            i_c = zbar - params.lambda_pc * dwsum / params.dt
            amp = fba.impl.ingest(i_c, t_n)
            fba.fcur[0] = fba.impl.force()

            _kernels.update_counters(counters, m.r_u)
            if gidx == cfg.n_samples // 2:
                ru_mid = m.r_u
            if gidx % cfg.record_stride == 0:
                rec[rows] = (t_n, zbar, m.r_u, up.z, dn.z, up.vzz, dn.vzz, i_c, f_t, amp)
                rows += 1
            if gidx % cfg.spot_check_every == 0:
                n_occ = sme.occupation_blocks(rho_b, ops)
                if n_occ >= n_guard:
                    raise TruncationError(
                        f"<n> = {n_occ:.1f} reached {sme.TRUNCATION_FRACTION} * dim",
                        step_index=gidx,
                    )
                sme.spot_check_positivity(sme.from_blocks(rho_b))
            f_t = fba.fcur[0] if cfg.feedback else 0.0
    except NumericalError as exc:
        exc.partial_record = rec[:rows]
        raise

    return TrajectoryResult(
        record=rec[:rows],
        flips=int(counters[_kernels.C_FLIPS]),
        loc_up_samples=int(counters[_kernels.C_LOC_UP]),
        loc_dn_samples=int(counters[_kernels.C_LOC_DN]),
        n_samples=cfg.n_samples,
        min_uncertainty_product=float("inf"),
        r_u_midpoint=ru_mid,
        final_state=sme.from_blocks(rho_b),
        seed=cfg.seed,
        trajectory_index=trajectory_index,
    )


def run_trajectory(cfg: RunConfig, trajectory_index: int = 0,
                   out_dir: str | Path | None = None) -> TrajectoryResult:
    """Run one trajectory in the config's mode; optionally write CSV output.

    On a numerical failure the partial record accumulated so far is
    flushed to ``trajectory.csv`` before the error propagates.
    """
    runner = {
        "gaussian": _run_gaussian_trajectory,
        "unitary": _run_unitary_trajectory,
        "sme": _run_sme_trajectory,
    }.get(cfg.mode)
    if runner is None:
        raise ConfigError(f"run_trajectory does not handle mode '{cfg.mode}'")
    out = Path(out_dir) if out_dir is not None else None
    try:
        result = runner(cfg, trajectory_index)
    except NumericalError as exc:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            partial = getattr(exc, "partial_record", None)
            if partial is not None and partial.shape[0] > 0:
                write_trajectory_csv(out / "trajectory.csv", partial)
            (out / "report.txt").write_text(
                f"run FAILED (numerical): {exc}\n"
                f"partial output: {0 if partial is None else partial.shape[0]} rows flushed\n"
                f"{_identity_line(cfg)}\n"
            )
        raise
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        name = "trajectory.csv" if trajectory_index == 0 else f"trajectory_{trajectory_index:04d}.csv"
        write_trajectory_csv(out / name, result.record)
    return result


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------


def _trajectory_worker(args):
    cfg, k = args
    return run_trajectory(cfg, trajectory_index=k)


def run_ensemble(cfg: RunConfig, n_trajectories: int | None = None) -> list[TrajectoryResult]:
    """Independent trajectories k = 0..K-1, optionally on a process pool.

    Each trajectory owns the stream (seed, k), so results do not depend on
    worker count or scheduling.
    """
    k_total = cfg.ensemble if n_trajectories is None else n_trajectories
    jobs = [(cfg, k) for k in range(k_total)]
    if cfg.workers > 1 and k_total > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_trajectory_worker, jobs, chunksize=1))
    return [_trajectory_worker(j) for j in jobs]


# ---------------------------------------------------------------------------
# Gaussian vs density-matrix comparison
# ---------------------------------------------------------------------------


@dataclass
class CompareResult:
    """Aligned trajectories plus error metrics (normalized by amp_set)."""

    gaussian_record: np.ndarray
    sme_record: np.ndarray
    rms_zbar_error: float
    max_zbar_error: float
    rms_r_u_error: float
    n_samples: int

    def report_text(self, cfg: RunConfig) -> str:
        return (
            "Gaussian closure vs density-matrix oracle\n"
            f"{_identity_line(cfg)}\n"
            f"samples compared: {self.n_samples}\n"
            f"normalized <Z> RMS error : {self.rms_zbar_error:.6f}\n"
            f"normalized <Z> max error : {self.max_zbar_error:.6f}\n"
            f"r_u RMS error            : {self.rms_r_u_error:.6f}\n"
        )


def compare_gaussian_sme(cfg: RunConfig, out_dir: str | Path | None = None) -> CompareResult:
    """Step both descriptions against the identical Wiener stream.

    Each side synthesizes its own photocurrent and feedback force; only
    the noise realization is shared.  Requires the oracle-feasible
    amplitude regime (amp_set <= 6).
    """
    params = cfg.params
    if params.amp_set > 6.0:
        raise ConfigError(
            f"comparison oracle is limited to amp_set <= 6 (got {params.amp_set}); "
            "a dense density matrix cannot reach protocol-scale amplitudes"
        )
    _require_coherent_ic(cfg)
    ic = cfg.initial_condition()

    # Gaussian side
    y = default_initial_state(params, ic).as_array()
    p_arr = gaussian.pack_params(params)
    fba_g = _FeedbackArrays(cfg)
    counters = np.zeros(_kernels.NCOUNTERS, dtype=np.int64)
    monitors = np.array([np.inf, np.nan])
    rec_g = _empty_record(cfg.n_samples, cfg.record_stride)
    rows_g = 0

    # oracle side
    ops = sme.build_operators(cfg.sme_dim, params, expected_amp=max(abs(ic.z0), params.amp_set))
    rho_b = sme.to_blocks(sme.initial_density(ops, ic.z0, ic.p0, ic.r_u0))
    fba_s = _FeedbackArrays(cfg)
    rec_s = _empty_record(cfg.n_samples, cfg.record_stride)
    rows_s = 0

    rng = trajectory_rng(cfg.seed, 0)
    sq = math.sqrt(cfg.dt_int)
    n_guard = sme.TRUNCATION_FRACTION * cfg.sme_dim
    f_s = 0.0

    for gidx in range(cfg.n_samples):
        normals = rng.standard_normal(cfg.substeps)
        rows_g = _python_sample(y, p_arr, cfg, gidx, normals, fba_g,
                                rec_g, rows_g, counters, monitors, rng)

        t_n = gidx * params.dt
        m = sme.extract_moments_blocks(rho_b, ops)
        up = m.up if m.up is not None else m.down
        dn = m.down if m.down is not None else m.up
        zbar_s = m.zbar
        dwsum = 0.0
        try:
            for s in range(cfg.substeps):
                dw = normals[s] * sq
                dwsum += dw
                rho_b = sme.sme_step_blocks(rho_b, ops, params, f_s, cfg.dt_int, dw)
        except NumericalError as exc:
            raise type(exc)(str(exc), step_index=gidx) from exc
        i_c = zbar_s - params.lambda_pc * dwsum / params.dt
        amp = fba_s.impl.ingest(i_c, t_n)
        fba_s.fcur[0] = fba_s.impl.force()
        if gidx % cfg.record_stride == 0:
            rec_s[rows_s] = (t_n, zbar_s, m.r_u, up.z, dn.z, up.vzz, dn.vzz, i_c,
                             f_s, amp)
            rows_s += 1
        if gidx % cfg.spot_check_every == 0:
            n_occ = sme.occupation_blocks(rho_b, ops)
            if n_occ >= n_guard:
                raise TruncationError(
                    f"<n> = {n_occ:.1f} reached {sme.TRUNCATION_FRACTION} * dim",
                    step_index=gidx,
                )
        f_s = fba_s.fcur[0] if cfg.feedback else 0.0

    _check_covariance(cfg, monitors)
    rec_g = rec_g[:rows_g]
    rec_s = rec_s[:rows_s]
    dz = (rec_g[:, 1] - rec_s[:, 1]) / params.amp_set
    dru = rec_g[:, 2] - rec_s[:, 2]
    result = CompareResult(
        gaussian_record=rec_g,
        sme_record=rec_s,
        rms_zbar_error=float(np.sqrt(np.mean(dz**2))),
        max_zbar_error=float(np.max(np.abs(dz))),
        rms_r_u_error=float(np.sqrt(np.mean(dru**2))),
        n_samples=rows_g,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(out / "gaussian.csv", rec_g)
        write_trajectory_csv(out / "sme.csv", rec_s)
        (out / "report.txt").write_text(result.report_text(cfg))
    return result


# ---------------------------------------------------------------------------
# Classification and sweeps
# ---------------------------------------------------------------------------


@dataclass
class ClassificationReport:
    verdict: SpinVerdict
    f_peak: float
    f_peak_refined: float
    f_carrier: float
    shift: float
    expected_shift: float
    df: float
    localized_fraction: float
    localized_ok: bool
    majority_state: SpinVerdict
    r_u_midpoint: float
    flips: int
    trajectory: TrajectoryResult

    @property
    def correct_vs_majority(self) -> bool:
        return self.verdict == self.majority_state

    @property
    def correct_vs_midpoint(self) -> bool:
        truth = SpinVerdict.UP if self.r_u_midpoint > 0.5 else SpinVerdict.DOWN
        return self.verdict == truth

    def report_text(self, cfg: RunConfig) -> str:
        return (
            "Spin classification from the cantilever frequency shift\n"
            f"{_identity_line(cfg)}\n"
            f"frequency resolution df = {self.df:.6g} cycles/time "
            f"(detectability bound {self.expected_shift:.6g})\n"
            f"carrier f0 = {self.f_carrier:.9f}\n"
            f"peak (raw bin) = {self.f_peak:.9f}, refined = {self.f_peak_refined:.9f}\n"
            f"shift = {self.shift:+.6g} cycles/time "
            f"(expected magnitude {self.expected_shift:.6g})\n"
            f"verdict: {self.verdict.value}\n"
            f"localized for {self.localized_fraction:.1%} of the window "
            f"(>= 90%: {'yes' if self.localized_ok else 'no'}; "
            f"majority state: {self.majority_state.value})\n"
            f"flips observed: {self.flips}\n"
        )


def classify_trajectory(cfg: RunConfig, result: TrajectoryResult) -> ClassificationReport:
    """Locate the resonance of a recorded trajectory and call the spin."""
    params = cfg.params
    if cfg.record_stride != 1:
        raise ConfigError("classification needs record_stride = 1")
    signal = result.column("I_c" if cfg.classify_signal == "photocurrent" else "zbar")
    spec = spectral.power_spectrum(signal, params.dt)

    expected_shift = params.gamma_big / (2.0 * math.pi)
    if not spectral.resolution_sufficient(spec.df, params.gamma_big):
        warnings.warn(
            f"frequency resolution df = {spec.df:.3g} exceeds the expected "
            f"shift {expected_shift:.3g}; classification is unreliable",
            stacklevel=2,
        )
    f_carrier = 1.0 / (2.0 * math.pi)
    min_shift = cfg.min_shift if cfg.min_shift is not None else spectral.default_min_shift(params.gamma_big)
    if min_shift < spec.df:
        raise ConfigError(
            f"min_shift = {min_shift:.3g} is below the bin width {spec.df:.3g}"
        )
    band = (f_carrier - cfg.band_halfwidth, f_carrier + cfg.band_halfwidth)
    peak = spectral.peak_frequency(spec, band)
    verdict = spectral.classify_spin(peak.freq, f_carrier, min_shift)

    loc_frac = result.localized_fraction
    majority = (
        SpinVerdict.UP if result.loc_up_samples >= result.loc_dn_samples else SpinVerdict.DOWN
    )
    return ClassificationReport(
        verdict=verdict,
        f_peak=peak.freq,
        f_peak_refined=peak.freq_refined,
        f_carrier=f_carrier,
        shift=peak.freq - f_carrier,
        expected_shift=expected_shift,
        df=spec.df,
        localized_fraction=loc_frac,
        localized_ok=loc_frac >= 0.9,
        majority_state=majority,
        r_u_midpoint=result.r_u_midpoint,
        flips=result.flips,
        trajectory=result,
    )


def run_classification(cfg: RunConfig, trajectory_index: int = 0,
                       out_dir: str | Path | None = None) -> ClassificationReport:
    """Closed-loop run over the full sampling window, then classify."""
    gcfg = cfg if cfg.mode == "gaussian" else _as_mode(cfg, "gaussian")
    result = _run_gaussian_trajectory(gcfg, trajectory_index)
    report = classify_trajectory(cfg, result)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(out / "trajectory.csv", result.record)
        signal = result.column("I_c" if cfg.classify_signal == "photocurrent" else "zbar")
        spectral.power_spectrum(signal, cfg.params.dt).to_csv(out / "spectrum.csv")
        (out / "report.txt").write_text(report.report_text(cfg))
    return report


def _as_mode(cfg: RunConfig, mode: str) -> RunConfig:
    from dataclasses import replace

    return replace(cfg, mode=mode)


@dataclass(frozen=True)
class ClassificationOutcome:
    """Per-trajectory summary of one classification run (pool-friendly)."""

    trajectory_index: int
    kappa_s: float
    verdict: SpinVerdict
    shift: float
    flips: int
    localized_fraction: float
    majority_state: SpinVerdict
    r_u_midpoint: float

    @property
    def correct_vs_midpoint(self) -> bool:
        truth = SpinVerdict.UP if self.r_u_midpoint > 0.5 else SpinVerdict.DOWN
        return self.verdict == truth

    @property
    def correct_vs_majority(self) -> bool:
        return self.verdict == self.majority_state


def _classification_worker(args) -> ClassificationOutcome:
    cfg, kappa, k = args
    kcfg = _replace_params(_as_mode(cfg, "classify"), kappa_s=kappa)
    report = run_classification(kcfg, trajectory_index=k)
    return ClassificationOutcome(
        trajectory_index=k,
        kappa_s=kappa,
        verdict=report.verdict,
        shift=report.shift,
        flips=report.flips,
        localized_fraction=report.localized_fraction,
        majority_state=report.majority_state,
        r_u_midpoint=report.r_u_midpoint,
    )


def classification_ensemble(cfg: RunConfig, kappa_s: float | None = None,
                            n_trajectories: int | None = None) -> list[ClassificationOutcome]:
    """Independent classification runs k = 0..K-1 at one spin-noise rate."""
    kappa = cfg.params.kappa_s if kappa_s is None else kappa_s
    k_total = cfg.ensemble if n_trajectories is None else n_trajectories
    jobs = [(cfg, kappa, k) for k in range(k_total)]
    if cfg.workers > 1 and k_total > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_classification_worker, jobs, chunksize=1))
    return [_classification_worker(j) for j in jobs]


def _replace_params(cfg: RunConfig, **param_changes) -> RunConfig:
    from dataclasses import replace

    return replace(cfg, params=cfg.params.with_(**param_changes))


@dataclass
class SweepRow:
    kappa_s: float
    mean_flips: float
    success_rate: float
    mean_localized_fraction: float
    n_trajectories: int


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def report_text(self, cfg: RunConfig) -> str:
        lines = [
            "Spin-noise sweep: flips and classification success per kappa_s",
            _identity_line(cfg),
            f"{'kappa_s':>12} {'mean_flips':>12} {'success':>9} {'loc_frac':>9} {'n':>5}",
        ]
        for r in self.rows:
            lines.append(
                f"{r.kappa_s:>12.3g} {r.mean_flips:>12.3f} {r.success_rate:>9.1%} "
                f"{r.mean_localized_fraction:>9.1%} {r.n_trajectories:>5d}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("kappa_s,mean_flips,success_rate,mean_localized_fraction,n\n")
            for r in self.rows:
                fh.write(
                    f"{r.kappa_s:.17g},{r.mean_flips:.17g},{r.success_rate:.17g},"
                    f"{r.mean_localized_fraction:.17g},{r.n_trajectories}\n"
                )


def kappa_sweep(cfg: RunConfig, out_dir: str | Path | None = None) -> SweepResult:
    """Flip statistics and classification success over the kappa_s list.

    Truth for 'success' is the localized state at the window midpoint;
    an indeterminate verdict counts as a failure.
    """
    if not cfg.kappa_s_sweep:
        raise ConfigError("kappa_s_sweep is empty")
    if cfg.n_samples & (cfg.n_samples - 1):
        raise ConfigError("sweep classification requires n_samples to be a power of two")
    rows = []
    for kappa in cfg.kappa_s_sweep:
        outcomes = classification_ensemble(cfg, kappa_s=kappa)
        rows.append(
            SweepRow(
                kappa_s=kappa,
                mean_flips=float(np.mean([o.flips for o in outcomes])),
                success_rate=float(np.mean([o.correct_vs_midpoint for o in outcomes])),
                mean_localized_fraction=float(np.mean([o.localized_fraction for o in outcomes])),
                n_trajectories=cfg.ensemble,
            )
        )
    result = SweepResult(rows=rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.to_csv(out / "sweep.csv")
        (out / "report.txt").write_text(result.report_text(cfg))
    return result


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _identity_line(cfg: RunConfig) -> str:
    return (
        f"T_Sampling = N * dt = {cfg.n_samples} * {cfg.params.dt:g} "
        f"= {cfg.t_sampling:.6g} time units"
    )


def write_trajectory_csv(path, record: np.ndarray):
    """Fixed column order, 17-significant-digit decimal formatting."""
    if not np.all(np.isfinite(record)):
        raise NumericalError("trajectory record contains non-finite values")
    with open(path, "w") as fh:
        fh.write(",".join(RECORD_COLUMNS) + "\n")
        for row in record:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_trajectory_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    with open(path) as fh:
        header = tuple(fh.readline().strip().split(","))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data
