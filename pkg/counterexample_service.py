import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from bvp_service import BvpService
from config import Config
from dynamics import integrate
from exceptions import AllShotsDivergedError, ParameterDomainError, ShotDivergedError
from models import (BvpOptions, BvpSolution, CircleCheckResult, CircleVerdict,
                    DirichletData, Fold, IntegratorOptions, LevelPair, PhaseState,
                    ScanResult, ShootingUnknowns, SystemParams, Termination,
                    Trajectory)
from preset_service import PresetService

logger = logging.getLogger(__name__)

_LOG2 = float(np.log(2.0))


def _log_cosh(x):
    return np.logaddexp(x, -x) - _LOG2


def _log_sinh(x):
    # x > 0
    return x + np.log(-np.expm1(-2.0 * x)) - _LOG2


def _solve_monotone(fn, target: float, low: float, high: float) -> float:
    """Root of fn(x) = target for fn monotone on (low, high), shrinking the margin until bracketed"""
    margin = 1e-3 * (high - low)
    while margin > 1e-15 * max(1.0, abs(high - low)):
        left, right = low + margin, high - margin
        if (fn(left) - target) * (fn(right) - target) <= 0:
            return float(brentq(lambda x: fn(x) - target, left, right, xtol=1e-15, rtol=4 * np.finfo(float).eps))
        margin *= 0.1
    raise ParameterDomainError(f"closure value {target} is out of numerical reach")


class CounterexampleService:
    """Symmetric shots on the round 2-sphere and the circle existence check

    The scalar 2-sphere system used here is y'' = e^{-2y} - xi y', xi' = -2 y'^2,
    i.e. the sphere2 preset with beta = 2 at m = lambda = 0, h2 = 1.
    """

    SYMMETRIC_BETA = 2.0

    def __init__(self, options: Optional[BvpOptions] = None, threads: Optional[int] = None):
        self.config = Config()
        self.options = options or BvpOptions()
        self.threads = threads
        self.presets = PresetService()
        self.bvp = BvpService(self.options)
        self.space = self.presets.sphere2(self.SYMMETRIC_BETA)
        self.params = SystemParams(m=0.0, lam=0.0, h2=1.0)

    @property
    def integrator(self) -> IntegratorOptions:
        return self.options.integrator

    # -------------------------------------------------------- symmetric shots

    def symmetric_shoot(self, k1: float) -> Tuple[float, Trajectory]:
        """Integrate from t = 1/2 with y = k1, y' = 0, xi = 0 to t = 1; returns (y(1), trajectory)"""
        initial = PhaseState(t=0.5, y=np.array([float(k1)]), L=np.zeros(1), xi=0.0)
        trajectory = integrate(self.space, self.params, initial, 1.0, self.integrator)
        if trajectory.termination is not Termination.REACHED_END:
            t_blowup = trajectory.blowup_time if trajectory.blowup_time is not None else trajectory.t_final
            raise ShotDivergedError(t_blowup, f"symmetric shot k1 = {k1:.12g} diverged at t = {t_blowup:.12g}")
        return float(trajectory.y[-1, 0]), trajectory

    @staticmethod
    def mirror_symmetric_shot(trajectory: Trajectory) -> Trajectory:
        """Extend a shot on [1/2, 1] to [0, 1] by t -> 1 - t, L -> -L, xi -> -xi"""
        right = slice(None)
        left = slice(-1, 0, -1)
        xi_total = trajectory.int_xi[-1]
        du_total = trajectory.int_du[-1]
        return replace(
            trajectory,
            t=np.concatenate([1.0 - trajectory.t[left], trajectory.t[right]]),
            y=np.concatenate([trajectory.y[left], trajectory.y[right]]),
            L=np.concatenate([-trajectory.L[left], trajectory.L[right]]),
            xi=np.concatenate([-trajectory.xi[left], trajectory.xi[right]]),
            int_xi=np.concatenate([trajectory.int_xi[left], trajectory.int_xi[right]]) - xi_total,
            int_du=np.concatenate([trajectory.int_du[left], trajectory.int_du[right]]) - du_total,
            dense=None,
            u=None,
            blowup_time=None,
        )

    def full_solution_from_shot(self, k1: float) -> Trajectory:
        """Integrate the whole interval from the mirrored data at t = 0"""
        _, shot = self.symmetric_shoot(k1)
        end = shot.final
        initial = PhaseState(t=0.0, y=end.y, L=-end.L, xi=-end.xi)
        return integrate(self.space, self.params, initial, 1.0, self.integrator, u0=0.0)

    def _try_shoot(self, k1: float) -> float:
        try:
            return self.symmetric_shoot(k1)[0]
        except ShotDivergedError:
            return float("nan")

    # ------------------------------------------------------------------- scan

    def nonuniqueness_scan(self, k1_min: float = Config.SCAN["k1_min"], k1_max: float = Config.SCAN["k1_max"],
                           steps: int = Config.SCAN["steps"]) -> ScanResult:
        """Shoot on a k1 grid, report folds of k1 -> y(1) and pairs of shots landing on one level"""
        if not k1_min < k1_max:
            raise ParameterDomainError(f"k1_min must be below k1_max, got [{k1_min}, {k1_max}]")
        if int(steps) < 2:
            raise ParameterDomainError(f"steps must be >= 2, got {steps}")

        grid = np.linspace(k1_min, k1_max, int(steps))
        with ThreadPoolExecutor(max_workers=self.config.threads(self.threads)) as pool:
            y_end = np.array(list(pool.map(self._try_shoot, grid)))
        converged = np.isfinite(y_end)
        if not converged.any():
            raise AllShotsDivergedError(f"all {len(grid)} shots on [{k1_min}, {k1_max}] diverged")
        logger.info("[scan] %d of %d shots converged on [%.6g, %.6g]", converged.sum(), len(grid), k1_min, k1_max)

        k1_ok, y_ok = grid[converged], y_end[converged]
        fold_indices = self._fold_indices(y_ok)
        folds = [Fold(k1=float(k1_ok[i]), y_end=float(y_ok[i]), kind=kind) for i, kind in fold_indices]
        pairs = [pair for pair in (self._level_pair(k1_ok, y_ok, fold_indices, position)
                                   for position in range(len(fold_indices))) if pair is not None]
        for fold in folds:
            logger.info("[scan] fold (%s) at k1 = %.6g, y(1) = %.9g", fold.kind, fold.k1, fold.y_end)
        return ScanResult(k1=grid, y_end=y_end, converged=converged, folds=folds, pairs=pairs)

    def _fold_indices(self, y: np.ndarray) -> List[Tuple[int, str]]:
        """Interior extrema: sign changes of neighbouring differences above the noise floor"""
        diffs = np.diff(y)
        signs = np.where(np.abs(diffs) > self.config.SCAN["noise_floor"], np.sign(diffs), 0.0)
        folds = []
        previous_index, previous_sign = None, 0.0
        for index, sign in enumerate(signs):
            if sign == 0.0:
                continue
            if previous_index is not None and sign != previous_sign:
                # flat stretches between the two slopes belong to the extremum
                segment = y[previous_index + 1:index + 1]
                offset = int(np.argmax(segment)) if previous_sign > 0 else int(np.argmin(segment))
                folds.append((previous_index + 1 + offset, "max" if previous_sign > 0 else "min"))
            previous_index, previous_sign = index, sign
        return folds

    def _level_pair(self, k1: np.ndarray, y: np.ndarray, folds: List[Tuple[int, str]],
                    position: int) -> Optional[LevelPair]:
        """Refine one level crossed on both sides of a fold"""
        index, kind = folds[position]
        start = folds[position - 1][0] if position > 0 else 0
        stop = folds[position + 1][0] if position + 1 < len(folds) else len(y) - 1
        left, right = y[start:index + 1], y[index:stop + 1]
        if len(left) < 2 or len(right) < 2:
            return None
        if kind == "min":
            reach = min(left.max(), right.max())
        else:
            reach = max(left.min(), right.min())
        level = float(y[index] + 0.5 * (reach - y[index]))

        brackets = []
        for lo, hi in ((start, index), (index, stop)):
            above = y[lo:hi + 1] - level
            crossings = np.flatnonzero(np.sign(above[:-1]) * np.sign(above[1:]) <= 0)
            if len(crossings) == 0:
                return None
            # take the crossing nearest the fold
            j = lo + (crossings[-1] if lo < index else crossings[0])
            brackets.append((k1[j], k1[j + 1]))

        roots = [brentq(lambda k: self.symmetric_shoot(k)[0] - level, a, b, xtol=self.config.SCAN["refine_xtol"])
                 for a, b in brackets]
        y_roots = [self.symmetric_shoot(k)[0] for k in roots]
        logger.info("[scan] level %.9g reached at k1 = %.9g and %.9g", level, roots[0], roots[1])
        return LevelPair(level=level, k1_a=float(roots[0]), k1_b=float(roots[1]),
                         y_a=float(y_roots[0]), y_b=float(y_roots[1]))

    def resolve_pair(self, pair: LevelPair) -> Tuple[BvpSolution, BvpSolution]:
        """Re-solve both shots of a level pair as Dirichlet problems with y(0) = y(1) = level"""
        dirichlet = DirichletData(a=[pair.level], b=[pair.level], u0=0.0, u1=0.0)
        solutions = []
        for k1 in (pair.k1_a, pair.k1_b):
            end = self.symmetric_shoot(k1)[1].final
            guess = ShootingUnknowns(L0=-end.L, xi0=-end.xi)
            solutions.append(self.bvp.solve_from_guess(self.space, self.params, dirichlet, guess))
        return solutions[0], solutions[1]

    # ----------------------------------------------------------------- circle

    def circle_nonexistence_check(self, lam: float, gap: float = 0.0, m: float = 0.0) -> CircleCheckResult:
        """Decide whether the circle admits a continuous solution with y(1) - y(0) = gap and u0 = u1

        With u constant the system reduces to L' = -L^2 - lambda with the closure
        integral of L equal to the gap.
        """
        circle = self.presets.circle()
        params = SystemParams(m=m, lam=lam, h2=1.0)

        if lam > 0:
            omega = float(np.sqrt(lam))
            if omega >= np.pi:
                return self._circle_unsolvable(circle, params, omega, gap)
            # L = omega tan(theta - omega t) with theta - omega t inside (-pi/2, pi/2)
            closure = lambda theta: np.log(np.cos(theta - omega)) - np.log(np.cos(theta))
            theta = _solve_monotone(closure, gap, omega - np.pi / 2, np.pi / 2)
            L0 = omega * np.tan(theta)
        elif lam == 0:
            # L = 1 / (t + C) with C = 1 / (e^gap - 1), or L = 0
            L0 = float(np.expm1(gap))
        else:
            L0 = self._hyperbolic_start(float(np.sqrt(-lam)), gap)

        witness = integrate(circle, params, PhaseState(0.0, np.zeros(1), np.array([L0]), L0), 1.0,
                            self.integrator, u0=0.0)
        logger.info("[circle] lambda = %.6g solvable with L(0) = %.12g", lam, L0)
        return CircleCheckResult(verdict=CircleVerdict.SOLVABLE, lam=lam, gap=gap, witness=witness, L0=float(L0))

    @staticmethod
    def _hyperbolic_start(omega: float, gap: float) -> float:
        """L(0) for L' = omega^2 - L^2 with integral of L over [0, 1] equal to gap"""
        if abs(gap) < omega:
            closure = lambda phi: _log_cosh(omega + phi) - _log_cosh(phi)
            bound = 1.0
            while not (closure(-bound) < gap < closure(bound)):
                bound *= 2.0
            return float(omega * np.tanh(brentq(lambda phi: closure(phi) - gap, -bound, bound, xtol=1e-15)))
        if abs(gap) == omega:
            return float(np.sign(gap) * omega)
        # coth branch, pole kept outside [0, 1]; closure decreases from +inf to omega
        closure = lambda psi: _log_sinh(omega + psi) - _log_sinh(psi)
        low, high = 1.0, 1.0
        while closure(low) <= abs(gap):
            low *= 0.5
        while closure(high) >= abs(gap):
            high *= 2.0
        psi = float(brentq(lambda x: closure(x) - abs(gap), low, high, xtol=1e-15))
        if gap > 0:
            return float(omega / np.tanh(psi))
        return float(-omega / np.tanh(omega + psi))

    def _circle_unsolvable(self, circle, params: SystemParams, omega: float, gap: float) -> CircleCheckResult:
        """Blow-up evidence: every tangent phase hits a pole before t = 1"""
        fan = self.config.CIRCLE_FAN_SIZE
        phases = -np.pi / 2 + (np.arange(fan) + 0.5) * np.pi / fan
        blowup_times = []
        for theta in phases:
            L0 = omega * np.tan(theta)
            run = integrate(circle, params, PhaseState(0.0, np.zeros(1), np.array([L0]), L0), 1.0, self.integrator)
            if run.termination is Termination.REACHED_END:
                blowup_times.append(float("inf"))
            else:
                blowup_times.append(run.blowup_time if run.blowup_time is not None else run.t_final)
        missed = int(np.sum(np.isinf(blowup_times)))
        if missed:
            logger.warning("[circle] lambda = %.6g: %d of %d fan phases reached t = 1 without blowing up; "
                           "the verdict rests on the closed form alone", params.lam, missed, fan)
        logger.info("[circle] lambda = %.6g unsolvable: pole spacing %.6g, latest blow-up at t = %.6g",
                    params.lam, np.pi / omega, max(blowup_times))
        return CircleCheckResult(verdict=CircleVerdict.UNSOLVABLE, lam=params.lam, gap=gap,
                                 pole_spacing=float(np.pi / omega), blowup_times=blowup_times)
