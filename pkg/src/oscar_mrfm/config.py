"""Plain-text configuration: one ``key = value`` per line, ``#`` comments.

Unknown keys are an error (catches typos).  A config file is the single
source for a run: model constants, initial condition, sampling grid, RNG
seed, mode and outputs.  ``RunConfig.to_text`` re-serializes with
17-significant-digit floats so a round trip reproduces identical derived
coefficients.

The photocurrent scale resolves in this order: an explicit ``lambda_pc``
key wins; otherwise, if any optics key is present, the scale is derived
from the optics block; otherwise the reference-optics default is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import (
    InitialCondition,
    OpticsParams,
    SystemParams,
    derive_lambda,
)

MODES = ("unitary", "gaussian", "sme", "compare", "sweep", "classify")

_PARAM_KEYS = {
    "eta": float,
    "epsilon": float,
    "gamma_damp": float,
    "kappa_s": float,
    "e_d": float,
    "kbt": float,
    "a1": float,
    "b1": float,
    "a2": float,
    "b2": float,
    "lambda_pc": float,
    "g_fb": float,
    "amp_set": float,
    "dt": float,
}

_OPTICS_KEYS = {
    "kappae_over_gc": float,
    "gamma_c": float,
    "q_factor": float,
    "amp_scale": float,
}

_IC_KEYS = {
    "r_u0": float,
    "z0": float,
    "p0": float,
    "vzz0": float,
    "vpp0": float,
    "vzp0": float,
}

_RUN_KEYS = {
    "mode": str,
    "n_samples": int,
    "dt_int": float,
    "seed": int,
    "ensemble": int,
    "kappa_s_sweep": "float_list",
    "out_dir": str,
    "sme_dim": int,
    "record_stride": int,
    "workers": int,
    "feedback": bool,
    "fb_lowpass_cutoff": float,
    "band_halfwidth": float,
    "min_shift": float,
    "classify_signal": str,
    "check_covariance": bool,
    "spot_check_every": int,
}

_ALL_KEYS = {**_PARAM_KEYS, **_OPTICS_KEYS, **_IC_KEYS, **_RUN_KEYS}


def _parse_value(key: str, raw: str):
    kind = _ALL_KEYS[key]
    raw = raw.strip()
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "float_list":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for '{key}': {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse key = value lines into a typed dict; unknown keys are errors."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        values[key] = _parse_value(key, raw)
    return values


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs, validated.

    ``n_samples`` recorded points at spacing ``params.dt``; the integrator
    subdivides each interval into dt/dt_int substeps.  ``seed`` keys the
    reproducible per-trajectory noise streams (trajectory k of an ensemble
    uses stream (seed, k)).
    """

    params: SystemParams = field(default_factory=SystemParams)
    ic: InitialCondition | None = None
    mode: str = "gaussian"
    n_samples: int = 2**19
    dt_int: float = 1e-3
    seed: int = 0
    ensemble: int = 1
    kappa_s_sweep: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    out_dir: str | None = None
    sme_dim: int = 48
    record_stride: int = 1
    workers: int = 1
    feedback: bool = True
    fb_lowpass_cutoff: float = 0.0
    band_halfwidth: float = 2e-3
    min_shift: float | None = None
    classify_signal: str = "zbar"
    check_covariance: bool = True
    spot_check_every: int = 20

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if self.mode == "classify" and self.n_samples & (self.n_samples - 1):
            raise ConfigError("classify mode requires n_samples to be a power of two")
        if self.dt_int <= 0.0:
            raise ConfigError("dt_int must be positive")
        sub = self.params.dt / self.dt_int
        if abs(sub - round(sub)) > 1e-9 or round(sub) < 1:
            raise ConfigError(
                f"dt_int = {self.dt_int} must divide the sample spacing dt = {self.params.dt}"
            )
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.ensemble < 1:
            raise ConfigError("ensemble must be >= 1")
        if self.mode == "sweep" and not self.kappa_s_sweep:
            raise ConfigError("sweep mode requires a nonempty kappa_s_sweep list")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.classify_signal not in ("zbar", "photocurrent"):
            raise ConfigError("classify_signal must be 'zbar' or 'photocurrent'")
        if self.spot_check_every < 1:
            raise ConfigError("spot_check_every must be >= 1")

    @property
    def substeps(self) -> int:
        return round(self.params.dt / self.dt_int)

    @property
    def t_sampling(self) -> float:
        """Total record length N * dt."""
        return self.n_samples * self.params.dt

    def initial_condition(self) -> InitialCondition:
        return self.ic if self.ic is not None else InitialCondition.protocol_default(self.params)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        values = dict(values)
        param_kwargs = {k: values.pop(k) for k in list(values) if k in _PARAM_KEYS}
        optics_kwargs = {k: values.pop(k) for k in list(values) if k in _OPTICS_KEYS}
        ic_kwargs = {k: values.pop(k) for k in list(values) if k in _IC_KEYS}

        if optics_kwargs and "lambda_pc" not in param_kwargs:
            optics = OpticsParams(**optics_kwargs)
            e_d = param_kwargs.get("e_d", SystemParams.__dataclass_fields__["e_d"].default)
            param_kwargs["lambda_pc"] = derive_lambda(optics, e_d)
        try:
            params = SystemParams(**param_kwargs)
        except Exception as exc:
            raise ConfigError(f"invalid model parameters: {exc}") from exc

        ic = None
        if ic_kwargs:
            ic_kwargs.setdefault("z0", -params.amp_set)
            try:
                ic = InitialCondition(**ic_kwargs)
            except Exception as exc:
                raise ConfigError(f"invalid initial condition: {exc}") from exc

        return cls(params=params, ic=ic, **values)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_dict(parse_config_text(text))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text())

    def to_text(self) -> str:
        """Round-trippable serialization (17 significant digits)."""
        p = self.params
        ic = self.initial_condition()
        lines = [
            "# oscar-mrfm run configuration",
            f"mode = {self.mode}",
            f"seed = {self.seed}",
            f"n_samples = {self.n_samples}",
            f"ensemble = {self.ensemble}",
            f"dt_int = {self.dt_int:.17g}",
            f"record_stride = {self.record_stride}",
            f"workers = {self.workers}",
            f"feedback = {'true' if self.feedback else 'false'}",
            f"fb_lowpass_cutoff = {self.fb_lowpass_cutoff:.17g}",
            f"sme_dim = {self.sme_dim}",
            f"band_halfwidth = {self.band_halfwidth:.17g}",
            f"classify_signal = {self.classify_signal}",
            f"check_covariance = {'true' if self.check_covariance else 'false'}",
            f"spot_check_every = {self.spot_check_every}",
            f"kappa_s_sweep = {', '.join(f'{v:.17g}' for v in self.kappa_s_sweep)}",
            "",
            "# model constants",
            f"eta = {p.eta:.17g}",
            f"epsilon = {p.epsilon:.17g}",
            f"gamma_damp = {p.gamma_damp:.17g}",
            f"kappa_s = {p.kappa_s:.17g}",
            f"e_d = {p.e_d:.17g}",
            f"kbt = {p.kbt:.17g}",
            f"a1 = {p.a1:.17g}",
            f"b1 = {p.b1:.17g}",
            f"a2 = {p.a2:.17g}",
            f"b2 = {p.b2:.17g}",
            f"lambda_pc = {p.lambda_pc:.17g}",
            f"g_fb = {p.g_fb:.17g}",
            f"amp_set = {p.amp_set:.17g}",
            f"dt = {p.dt:.17g}",
            "",
            "# initial condition",
            f"r_u0 = {ic.r_u0:.17g}",
            f"z0 = {ic.z0:.17g}",
            f"p0 = {ic.p0:.17g}",
            f"vzz0 = {ic.vzz0:.17g}",
            f"vpp0 = {ic.vpp0:.17g}",
            f"vzp0 = {ic.vzp0:.17g}",
        ]
        if self.min_shift is not None:
            lines.insert(1, f"min_shift = {self.min_shift:.17g}")
        if self.out_dir is not None:
            lines.insert(1, f"out_dir = {self.out_dir}")
        return "\n".join(lines) + "\n"
