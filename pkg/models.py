from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, List, Dict, Any, Union

import numpy as np
import pandas as pd
from scipy.integrate import OdeSolution

from config import Config
from exceptions import SpaceValidationError, ParameterDomainError


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


class Termination(Enum):
    """Enum for integrator termination reasons"""
    REACHED_END = "reached_end"
    BLOW_UP_DETECTED = "blow_up_detected"
    STEP_UNDERFLOW = "step_underflow"
    STEP_LIMIT = "step_limit"


class Direction(Enum):
    """Enum for integration direction away from a seed state"""
    BACKWARD = "backward"
    FORWARD = "forward"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.FORWARD else -1.0


class CircleVerdict(Enum):
    """Enum for the outcome of the circle existence check"""
    SOLVABLE = "solvable"
    UNSOLVABLE = "unsolvable"


class RunMode(Enum):
    """Enum for the experiment a run configuration requests"""
    IVP = "ivp"
    DIRICHLET = "dirichlet"
    LIMIT = "limit"
    SCAN = "scan"
    BLOWUP = "blowup"
    RESCALE = "rescale"
    BOUNDS = "bounds"
    CIRCLE = "circle"


@dataclass(frozen=True, eq=False)
class HomSpaceSpec:
    """Structure constants of a homogeneous space with n isotropy summands

    ``gamma[i, k, l]`` holds the constant with lower indices (i, k) and upper
    index l. Arrays are read-only after construction.
    """
    n: int
    d: np.ndarray
    beta: np.ndarray
    gamma: Optional[np.ndarray] = None
    label: str = ""
    monotypic_asserted: bool = True
    dim: int = field(init=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise SpaceValidationError(f"n must be a positive integer, got {self.n!r}", key="space.n")
        n = int(self.n)

        d = np.asarray(self.d)
        if d.shape != (n,):
            raise SpaceValidationError(f"d must have length {n}, got shape {d.shape}", key="space.d")
        if not np.all(np.equal(np.mod(d, 1), 0)) or np.any(d < 1):
            raise SpaceValidationError("all summand dimensions must be integers >= 1", key="space.d")

        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (n,):
            raise SpaceValidationError(f"beta must have length {n}, got shape {beta.shape}", key="space.beta")
        if not np.all(np.isfinite(beta)) or np.any(beta < 0):
            raise SpaceValidationError("beta entries must be finite and non-negative", key="space.beta")

        gamma = np.zeros((n, n, n)) if self.gamma is None else np.asarray(self.gamma, dtype=float)
        if gamma.shape != (n, n, n):
            raise SpaceValidationError(f"gamma must have shape ({n}, {n}, {n}), got {gamma.shape}",
                                       key="space.gamma")
        if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
            raise SpaceValidationError("gamma entries must be finite and non-negative", key="space.gamma")

        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", _frozen_array(d, dtype=int))
        object.__setattr__(self, "beta", _frozen_array(beta))
        object.__setattr__(self, "gamma", _frozen_array(gamma))
        object.__setattr__(self, "dim", int(d.sum()))

    @property
    def summands_at_least_two_dimensional(self) -> bool:
        """Every summand has dimension >= 2 (the hypothesis behind the rate bound)"""
        return bool(np.all(self.d >= 2))

    @property
    def is_degenerate(self) -> bool:
        """All structure constants vanish, so R is identically zero"""
        return not (np.any(self.beta > 0) or np.any(self.gamma > 0))

    def trace(self, values: np.ndarray) -> np.ndarray:
        """Weighted trace sum_i d_i X_i over the last axis"""
        return np.asarray(values) @ self.d

    def gamma_quadruples(self) -> List[List[Union[int, float]]]:
        """Nonzero gamma entries as [i, k, l, value] in index order"""
        return [[int(i), int(k), int(l), float(self.gamma[i, k, l])]
                for i, k, l in zip(*np.nonzero(self.gamma))]

    def to_config(self) -> Dict[str, Any]:
        """Serialize to a config block"""
        return {
            "label": self.label,
            "n": self.n,
            "d": [int(v) for v in self.d],
            "beta": [float(v) for v in self.beta],
            "gamma": self.gamma_quadruples(),
            "monotypic_asserted": bool(self.monotypic_asserted),
        }

    @classmethod
    def from_config(cls, block: Dict[str, Any]) -> "HomSpaceSpec":
        """Build from a config block; gamma is a list of [i, k, l, value]"""
        unknown = set(block) - {"label", "n", "d", "beta", "gamma", "monotypic_asserted"}
        if unknown:
            raise SpaceValidationError(f"unknown keys: {', '.join(sorted(unknown))}", key="space")
        for key in ("n", "d", "beta"):
            if key not in block:
                raise SpaceValidationError("missing required key", key=f"space.{key}")

        n = block["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise SpaceValidationError(f"n must be a positive integer, got {n!r}", key="space.n")

        gamma = np.zeros((n, n, n))
        seen = set()
        for position, entry in enumerate(block.get("gamma") or []):
            key = f"space.gamma[{position}]"
            if not isinstance(entry, (list, tuple)) or len(entry) != 4:
                raise SpaceValidationError("gamma entries must be [i, k, l, value]", key=key)
            indices = entry[:3]
            if not all(isinstance(v, int) and not isinstance(v, bool) and 0 <= v < n for v in indices):
                raise SpaceValidationError(f"gamma indices must be integers in [0, {n})", key=key)
            if tuple(indices) in seen:
                raise SpaceValidationError(f"duplicate gamma entry {tuple(indices)}", key=key)
            seen.add(tuple(indices))
            try:
                gamma[tuple(indices)] = float(entry[3])
            except (TypeError, ValueError):
                raise SpaceValidationError(f"gamma value must be a number, got {entry[3]!r}", key=key)

        try:
            d = np.array(block["d"], dtype=float)
            beta = np.array(block["beta"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise SpaceValidationError(f"d and beta must be numeric lists: {exc}", key="space")

        return cls(n=n, d=d, beta=beta, gamma=gamma,
                   label=str(block.get("label", "")),
                   monotypic_asserted=bool(block.get("monotypic_asserted", True)))

    def same_as(self, other: "HomSpaceSpec") -> bool:
        """Structural equality of the constants"""
        return (self.n == other.n
                and np.array_equal(self.d, other.d)
                and np.array_equal(self.beta, other.beta)
                and np.array_equal(self.gamma, other.gamma))


@dataclass(frozen=True)
class RicciBoundEstimates:
    """Sampled estimates of the curvature ratio bounds"""
    c1: float
    c2: float
    c3: float
    samples: int
    box_radius: float

    def to_dict(self) -> Dict[str, Any]:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3,
                "samples": self.samples, "box_radius": self.box_radius}


@dataclass(frozen=True)
class SystemParams:
    """One instance (m, lambda, h^2) of the reduced system"""
    m: float
    lam: float
    h2: float

    def __post_init__(self):
        for name in ("m", "lam", "h2"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterDomainError(f"{name} must be finite")
        if self.m < 0:
            raise ParameterDomainError(f"m must be non-negative, got {self.m}")
        if self.h2 < 0:
            raise ParameterDomainError(f"h2 must be non-negative, got {self.h2}")

    def with_h2(self, h2: float) -> "SystemParams":
        return replace(self, h2=h2)

    def to_config(self) -> Dict[str, float]:
        return {"m": float(self.m), "lambda": float(self.lam), "h2": float(self.h2)}


@dataclass(frozen=True)
class PhaseState:
    """A point (t, y, L, xi) of the first-order system"""
    t: float
    y: np.ndarray
    L: np.ndarray
    xi: float

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.t) and np.all(np.isfinite(self.y))
                    and np.all(np.isfinite(self.L)) and np.isfinite(self.xi))

    @property
    def n(self) -> int:
        return len(np.atleast_1d(self.y))


@dataclass(frozen=True)
class IntegratorOptions:
    """Adaptive integrator settings; min_step is relative to the interval length"""
    rel_tol: float = Config.INTEGRATOR["rel_tol"]
    abs_tol: float = Config.INTEGRATOR["abs_tol"]
    blowup_threshold: float = Config.INTEGRATOR["blowup_threshold"]
    min_step: float = Config.INTEGRATOR["min_step"]
    max_steps: int = Config.INTEGRATOR["max_steps"]
    method: str = Config.INTEGRATOR["method"]
    first_step: Optional[float] = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ParameterDomainError("integrator tolerances must be positive")
        if not self.blowup_threshold > 0:
            raise ParameterDomainError("blowup_threshold must be positive")
        if not self.min_step > 0:
            raise ParameterDomainError("min_step must be positive")
        if int(self.max_steps) < 1:
            raise ParameterDomainError("max_steps must be at least 1")
        if self.method not in Config.INTEGRATOR_METHODS:
            raise ParameterDomainError(f"method must be one of {', '.join(Config.INTEGRATOR_METHODS)}, "
                                       f"got {self.method!r}")
        if self.first_step is not None and not self.first_step > 0:
            raise ParameterDomainError("first_step must be positive")

    def with_tolerances(self, rel_tol: float, abs_tol: float) -> "IntegratorOptions":
        return replace(self, rel_tol=rel_tol, abs_tol=abs_tol)

    def to_config(self) -> Dict[str, Any]:
        block = {"method": self.method, "rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
                 "blowup_threshold": self.blowup_threshold, "min_step": self.min_step,
                 "max_steps": int(self.max_steps)}
        if self.first_step is not None:
            block["first_step"] = self.first_step
        return block


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Integrated solution sampled at accepted steps

    Arrays are indexed by sample along axis 0. ``int_xi`` and ``int_du`` are the
    running integrals of xi and tr(L) - xi from the initial time, carried as
    extra integrator states. ``dense`` interpolates the augmented state.
    """
    space: HomSpaceSpec
    params: SystemParams
    t: np.ndarray
    y: np.ndarray
    L: np.ndarray
    xi: np.ndarray
    int_xi: np.ndarray
    int_du: np.ndarray
    accepted_steps: int
    rejected_steps: int
    termination: Termination
    dense: Optional[OdeSolution] = None
    u: Optional[np.ndarray] = None
    blowup_time: Optional[float] = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def integral_xi(self) -> float:
        """Integral of xi over the whole trajectory, oriented from first to last sample"""
        return float(self.int_xi[-1] - self.int_xi[0])

    def sample(self, index: int) -> PhaseState:
        return PhaseState(t=float(self.t[index]), y=self.y[index].copy(),
                          L=self.L[index].copy(), xi=float(self.xi[index]))

    @property
    def samples(self) -> List[PhaseState]:
        return [self.sample(i) for i in range(len(self))]

    @property
    def initial(self) -> PhaseState:
        return self.sample(0)

    @property
    def final(self) -> PhaseState:
        return self.sample(-1)

    def covers(self, t: float) -> bool:
        low, high = sorted((self.t_start, self.t_final))
        return low <= t <= high

    def augmented_at(self, t) -> np.ndarray:
        """Dense-output augmented state [y, L, xi, int_xi, int_du] at t"""
        if self.dense is None:
            raise ParameterDomainError("trajectory has no dense output")
        t_values = np.atleast_1d(np.asarray(t, dtype=float))
        if not all(self.covers(v) for v in t_values):
            raise ParameterDomainError(f"t outside trajectory range [{self.t_start}, {self.t_final}]")
        return self.dense(t)

    def state_at(self, t: float) -> PhaseState:
        z = self.augmented_at(float(t))
        n = self.n
        return PhaseState(t=float(t), y=z[:n], L=z[n:2 * n], xi=float(z[2 * n]))

    def with_u(self, u: np.ndarray) -> "Trajectory":
        return replace(self, u=np.asarray(u, dtype=float))

    def to_frame(self, M: Optional[np.ndarray] = None, Mt: Optional[np.ndarray] = None) -> pd.DataFrame:
        """Table with columns t, y_1..y_n, L_1..L_n, xi, u, M, Mt (NaN when absent)"""
        columns: Dict[str, np.ndarray] = {"t": self.t}
        for i in range(self.n):
            columns[f"y_{i + 1}"] = self.y[:, i]
        for i in range(self.n):
            columns[f"L_{i + 1}"] = self.L[:, i]
        columns["xi"] = self.xi
        blank = np.full(len(self), np.nan)
        columns["u"] = blank if self.u is None else self.u
        columns["M"] = blank if M is None else M
        columns["Mt"] = blank if Mt is None else Mt
        return pd.DataFrame(columns)

    def to_csv(self, path: Union[str, Path], M: Optional[np.ndarray] = None,
               Mt: Optional[np.ndarray] = None) -> Path:
        path = Path(path)
        self.to_frame(M, Mt).to_csv(path, index=False, float_format=Config.CSV_FLOAT_FORMAT)
        return path


@dataclass(frozen=True)
class DirichletData:
    """Boundary values y(0) = a, y(1) = b and potential endpoints u0, u1"""
    a: np.ndarray
    b: np.ndarray
    u0: float = 0.0
    u1: float = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise ParameterDomainError(f"a and b must be vectors of equal length, got {a.shape} and {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))
                and np.isfinite(self.u0) and np.isfinite(self.u1)):
            raise ParameterDomainError("boundary data must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return len(self.a)

    def c(self, d: np.ndarray) -> float:
        """Integral constraint sum_i d_i (b_i - a_i) - (u1 - u0)"""
        return float(np.dot(d, self.b - self.a) - (self.u1 - self.u0))

    def target_end(self, p: float) -> np.ndarray:
        """Homotopy target for y(1): a + p (b - a)"""
        return self.a + p * (self.b - self.a)

    def to_config(self) -> Dict[str, Any]:
        return {"a": [float(v) for v in self.a], "b": [float(v) for v in self.b],
                "u0": float(self.u0), "u1": float(self.u1)}


@dataclass(frozen=True)
class ShootingUnknowns:
    """Initial shape operator L(0) and xi(0) of a shot"""
    L0: np.ndarray
    xi0: float

    def __post_init__(self):
        L0 = np.atleast_1d(np.asarray(self.L0, dtype=float))
        if not (np.all(np.isfinite(L0)) and np.isfinite(self.xi0)):
            raise ParameterDomainError("shooting unknowns must be finite")
        object.__setattr__(self, "L0", L0)
        object.__setattr__(self, "xi0", float(self.xi0))

    def as_vector(self) -> np.ndarray:
        return np.append(self.L0, self.xi0)

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "ShootingUnknowns":
        return cls(L0=np.array(x[:-1], dtype=float), xi0=float(x[-1]))

    @classmethod
    def zeros(cls, n: int) -> "ShootingUnknowns":
        return cls(L0=np.zeros(n), xi0=0.0)


@dataclass(frozen=True)
class ContinuationState:
    """One converged or failed point along the continuation path"""
    stage: str
    p: float
    h2: float
    unknowns: ShootingUnknowns
    converged: bool
    newton_iters: int
    residual_norm: float


@dataclass(frozen=True)
class BvpOptions:
    """Newton and continuation settings for the shooting solver"""
    integrator: IntegratorOptions = field(default_factory=lambda: IntegratorOptions(
        rel_tol=Config.BVP["shot_rel_tol"], abs_tol=Config.BVP["shot_abs_tol"]))
    bvp_tol: float = Config.BVP["bvp_tol"]
    newton_max_iter: int = Config.BVP["newton_max_iter"]
    fd_step: float = Config.BVP["fd_step"]
    initial_step: float = Config.BVP["initial_step"]
    max_step: float = Config.BVP["max_step"]
    min_step: float = Config.BVP["min_step"]
    armijo: float = Config.BVP["armijo"]
    max_halvings: int = Config.BVP["max_halvings"]
    fast_iterations: int = Config.BVP["fast_iterations"]

    def __post_init__(self):
        if not self.bvp_tol > 0:
            raise ParameterDomainError("bvp_tol must be positive")
        if self.newton_max_iter < 1 or self.max_halvings < 0:
            raise ParameterDomainError("newton_max_iter must be >= 1 and max_halvings >= 0")
        if not 0 < self.min_step <= self.initial_step <= self.max_step:
            raise ParameterDomainError("continuation steps must satisfy 0 < min_step <= initial_step <= max_step")
        if not (self.fd_step > 0 and 0 < self.armijo < 1):
            raise ParameterDomainError("fd_step must be positive and armijo in (0, 1)")

    def to_config(self) -> Dict[str, Any]:
        return {"bvp_tol": self.bvp_tol, "newton_max_iter": self.newton_max_iter,
                "fd_step": self.fd_step, "initial_step": self.initial_step,
                "max_step": self.max_step, "min_step": self.min_step,
                "armijo": self.armijo, "max_halvings": self.max_halvings,
                "fast_iterations": self.fast_iterations,
                "shot_rel_tol": self.integrator.rel_tol, "shot_abs_tol": self.integrator.abs_tol}


@dataclass(frozen=True, eq=False)
class BvpSolution:
    """Solved Dirichlet problem with its error measures and continuation record"""
    trajectory: Trajectory
    dirichlet: DirichletData
    params: SystemParams
    boundary_error: float
    integral_error: float
    unknowns: ShootingUnknowns
    h2_reached: float
    newton_iterations: int
    history: List[ContinuationState] = field(default_factory=list)
    potential_error: Optional[float] = None
    printed_D: Optional[np.ndarray] = None

    def is_solved(self, tol: float) -> bool:
        return self.boundary_error <= tol and self.integral_error <= tol

    def to_summary(self) -> Dict[str, Any]:
        summary = {
            "boundary_error": float(self.boundary_error),
            "integral_error": float(self.integral_error),
            "h2_reached": float(self.h2_reached),
            "newton_iterations": int(self.newton_iterations),
            "continuation_points": len(self.history),
            "L0": [float(v) for v in self.unknowns.L0],
            "xi0": float(self.unknowns.xi0),
            "accepted_steps": int(self.trajectory.accepted_steps),
            "rejected_steps": int(self.trajectory.rejected_steps),
        }
        if self.potential_error is not None:
            summary["potential_error"] = float(self.potential_error)
        if self.printed_D is not None:
            summary["D_printed"] = [float(v) for v in self.printed_D]
        return summary


@dataclass(frozen=True, eq=False)
class BlowupReport:
    """Blow-up diagnostics of one singular run"""
    t_sing: float
    sup_Mt: float
    exponent: float
    fit_residual: float
    fit_samples: int
    direction: Direction
    termination: Termination
    diagnostics: List[str] = field(default_factory=list)
    trajectory: Optional[Trajectory] = None
    M: Optional[np.ndarray] = None
    Mt: Optional[np.ndarray] = None

    def to_summary(self) -> Dict[str, Any]:
        return {
            "t_sing": float(self.t_sing),
            "sup_Mt": float(self.sup_Mt),
            "exponent": float(self.exponent),
            "fit_residual": float(self.fit_residual),
            "fit_samples": int(self.fit_samples),
            "direction": self.direction.value,
            "termination": self.termination.value,
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True, eq=False)
class RescaledTrajectory:
    """Trajectory resampled in the blow-up rescaled variables around an anchor"""
    t_anchor: float
    M_anchor: float
    s: np.ndarray
    y: np.ndarray
    L: np.ndarray
    xi: np.ndarray
    M: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        n = self.y.shape[1]
        columns: Dict[str, np.ndarray] = {"s": self.s, "t": self.t_anchor + self.s / self.M_anchor}
        for i in range(n):
            columns[f"y_{i + 1}"] = self.y[:, i]
        for i in range(n):
            columns[f"L_{i + 1}"] = self.L[:, i]
        columns["xi"] = self.xi
        columns["M"] = self.M
        return pd.DataFrame(columns)


@dataclass(frozen=True)
class Fold:
    """Local extremum of the shoot map k1 -> y(1)"""
    k1: float
    y_end: float
    kind: str


@dataclass(frozen=True)
class LevelPair:
    """Two shots on opposite sides of a fold that land on the same level"""
    level: float
    k1_a: float
    k1_b: float
    y_a: float
    y_b: float


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Symmetric-shot scan over a k1 grid; diverged shots carry NaN"""
    k1: np.ndarray
    y_end: np.ndarray
    converged: np.ndarray
    folds: List[Fold]
    pairs: List[LevelPair]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k1": self.k1, "y_end": self.y_end, "converged": self.converged})

    def folds_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(fold) for fold in self.folds], columns=["k1", "y_end", "kind"])

    def pairs_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(pair) for pair in self.pairs],
                            columns=["level", "k1_a", "k1_b", "y_a", "y_b"])


@dataclass(frozen=True, eq=False)
class CircleCheckResult:
    """Verdict of the circle existence check with its evidence"""
    verdict: CircleVerdict
    lam: float
    gap: float
    witness: Optional[Trajectory] = None
    L0: Optional[float] = None
    pole_spacing: Optional[float] = None
    blowup_times: List[float] = field(default_factory=list)

    def to_summary(self) -> Dict[str, Any]:
        summary: Dict[str, Any] = {"verdict": self.verdict.value, "lambda": float(self.lam),
                                   "gap": float(self.gap)}
        if self.L0 is not None:
            summary["L0"] = float(self.L0)
        if self.pole_spacing is not None:
            summary["pole_spacing"] = float(self.pole_spacing)
        if self.blowup_times:
            summary["max_blowup_time"] = float(max(self.blowup_times))
            summary["phases_tested"] = len(self.blowup_times)
        return summary


@dataclass
class RunConfig:
    """Validated run configuration"""
    mode: RunMode
    space: Optional[HomSpaceSpec]
    params: Optional[SystemParams]
    block: Dict[str, Any]
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    bvp: BvpOptions = field(default_factory=BvpOptions)
    output_dir: Optional[str] = None
    seed: int = 0
    threads: Optional[int] = None
    space_ref: Optional[str] = None


@dataclass
class ExperimentBundle:
    """Everything one run wrote to its output directory"""
    output_dir: Path
    version: str
    config_snapshot: str
    files: List[str]
    summary: Dict[str, Any]
    wall_clock: float
