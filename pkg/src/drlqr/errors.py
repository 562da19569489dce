"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DRLQRError(Exception):
    exit_code = 1


class InputError(DRLQRError, ValueError):
    """Malformed or inconsistent user input (files, shapes, weights)."""

    exit_code = 2


class ConvergenceError(DRLQRError, RuntimeError):
    """An iterative solver did not reach its tolerance."""

    exit_code = 3

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = list(trajectory) if trajectory is not None else []


class InfeasibleError(DRLQRError, RuntimeError):
    """A feasibility problem or bisection bracket has no admissible point."""

    exit_code = 4


class UnsupportedError(DRLQRError, NotImplementedError):
    exit_code = 2


class DivergenceError(ConvergenceError):
    """A simulated trajectory left the overflow guard."""

    def __init__(self, message, trial=None, step=None):
        super().__init__(message)
        self.trial = trial
        self.step = step
