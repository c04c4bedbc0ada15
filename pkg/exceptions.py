from typing import Optional


class CoqeError(Exception):
    """Base class for all solver errors

    Every subclass carries a short machine-parsable ``reason`` slug and the
    exit code the command-line front end maps it to.
    """
    reason = "error"
    exit_code = 1

    def describe(self) -> str:
        """Single-line description used by the CLI"""
        return f"{self.reason}: {self}"


class ConfigError(CoqeError, ValueError):
    """Invalid run configuration, optionally pointing at a key and line"""
    reason = "bad-config"

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if key:
            location.append(f"key '{key}'")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class SpaceValidationError(ConfigError):
    """Structure constants violate the homogeneous-space invariants"""
    reason = "bad-space"


class ParameterDomainError(CoqeError, ValueError):
    """A parameter or option is outside the domain an operation accepts"""
    reason = "parameter-domain"


class DegenerateSpaceError(CoqeError, ValueError):
    """The majorant R vanishes identically, so ratios against it are 0/0"""
    reason = "degenerate-space"


class MissingReconstructionError(CoqeError, ValueError):
    """An operation needs the reconstructed potential u"""
    reason = "missing-u"


class DomainOverflowError(CoqeError, ArithmeticError):
    """Exponentials of the log-metric coefficients would overflow"""
    reason = "domain-overflow"
    exit_code = 3

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"|y[{index}]| = {abs(value):.6g} exceeds the overflow bound")


class ShotDivergedError(CoqeError, RuntimeError):
    """A shooting integration blew up before reaching the far endpoint"""
    reason = "shot-diverged"
    exit_code = 3

    def __init__(self, t_blowup: float, message: Optional[str] = None):
        self.t_blowup = t_blowup
        super().__init__(message or f"shot diverged at t = {t_blowup:.12g}")


class NewtonDivergedError(CoqeError, RuntimeError):
    """Damped Newton failed to reduce the shooting residual"""
    reason = "newton-diverged"
    exit_code = 3

    def __init__(self, residual_norm: float, iterations: int):
        self.residual_norm = residual_norm
        self.iterations = iterations
        super().__init__(f"Newton stopped after {iterations} iterations "
                         f"with residual {residual_norm:.3e}")


class ContinuationStalledError(CoqeError, RuntimeError):
    """Continuation step fell below the minimum before reaching the target"""
    reason = "continuation-stalled"
    exit_code = 2

    def __init__(self, stage: str, p_reached: float, h2_reached: float):
        self.stage = stage
        self.p_reached = p_reached
        self.h2_reached = h2_reached
        super().__init__(f"continuation in {stage} stalled at p = {p_reached:.6g}, "
                         f"largest h2 reached = {h2_reached:.6g}")


class NoSingularityError(CoqeError, RuntimeError):
    """Integration reached the end of the interval without blowing up"""
    reason = "no-singularity"
    exit_code = 3


class AllShotsDivergedError(CoqeError, RuntimeError):
    """Every shot of a scan blew up"""
    reason = "all-diverged"
    exit_code = 3


class InsufficientSamplesError(CoqeError, RuntimeError):
    """Too few samples near a singularity to fit a blow-up rate"""
    reason = "insufficient-samples"
    exit_code = 3
