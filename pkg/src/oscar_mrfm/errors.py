"""Exception hierarchy for the OSCAR MRFM simulator.

Two broad failure classes matter operationally: configuration problems
(bad parameter values, malformed config files) and numerical failures
during integration (blow-ups, positivity loss, Fock-space truncation).
The CLI maps them to distinct exit codes.
"""


class OscarError(Exception):
    """Base class for all simulator errors."""


class ParameterError(OscarError, ValueError):
    """A physical parameter is outside its admissible range."""


class ConfigError(OscarError, ValueError):
    """A config file or run configuration is invalid."""


class NumericalError(OscarError, RuntimeError):
    """Base class for failures of the numerical integration itself."""

    def __init__(self, message, step_index=None):
        if step_index is not None:
            message = f"{message} (at step index {step_index})"
        super().__init__(message)
        self.step_index = step_index


class IntegrationBlowupError(NumericalError):
    """NaN/Inf appeared in the integrated state."""


class NegativeVarianceError(NumericalError):
    """A packet variance went nonpositive and step-halving did not recover it."""


class CovarianceError(NumericalError):
    """The monitored wavepacket uncertainty product dropped below its floor."""


class StepSizeError(NumericalError):
    """Density-matrix trace drifted too far in a single step; dt is too large."""


class PositivityError(NumericalError):
    """Density matrix developed a significantly negative eigenvalue."""


class TruncationError(NumericalError):
    """Oscillator amplitude is too large for the requested Fock truncation."""
