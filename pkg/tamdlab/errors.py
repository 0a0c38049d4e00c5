"""error types raised by the lab, mapped to exit codes by main.py"""


class LabError(Exception):
    """Base class for every error raised by tamdlab."""

    exit_code = 1


class ConfigError(LabError, ValueError):
    """Invalid configuration key or parameter value."""

    exit_code = 2


class GuardError(LabError, ValueError):
    """A numerical guard rejected the request."""

    exit_code = 3


class SolverError(LabError, RuntimeError):
    """A solve, eigensolve or time integration failed."""

    exit_code = 4


class EnsembleError(SolverError):
    """One or more replicas of an ensemble failed."""

    def __init__(self, failures):
        self.failures = dict(failures)
        msg = "; ".join(
            f"replica {k}: {err}" for k, err in sorted(self.failures.items())
        )
        super().__init__(f"{len(self.failures)} replica(s) failed: {msg}")
