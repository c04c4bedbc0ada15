import logging
from dataclasses import replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from config import Config
from dynamics import integrate
from exceptions import (ContinuationStalledError, NewtonDivergedError,
                        ParameterDomainError, ShotDivergedError)
from models import (BvpOptions, BvpSolution, ContinuationState, DirichletData,
                    HomSpaceSpec, PhaseState, ShootingUnknowns, SystemParams,
                    Termination, Trajectory)

logger = logging.getLogger(__name__)

Residual = Callable[[np.ndarray], np.ndarray]


class BvpService:
    """Dirichlet problems by shooting, damped Newton and two-stage continuation

    Stage one marches the homotopy parameter p from 0 to 1 at h2 = 0, starting
    from the exact zero solution. Stage two marches h2 from 0 to its target at
    p = 1. Each continuation point is warm-started from the previous one.
    """

    def __init__(self, options: Optional[BvpOptions] = None):
        self.config = Config()
        self.options = options or BvpOptions()

    # ------------------------------------------------------------------ shooting

    def shoot(self, space: HomSpaceSpec, params: SystemParams, dirichlet: DirichletData,
              unknowns: ShootingUnknowns, u0: Optional[float] = None) -> Trajectory:
        """Integrate from t=0 with y(0)=a and the given unknowns to t=1"""
        initial = PhaseState(t=0.0, y=dirichlet.a, L=unknowns.L0, xi=unknowns.xi0)
        trajectory = integrate(space, params, initial, 1.0, self.options.integrator, u0=u0)
        if trajectory.termination is not Termination.REACHED_END:
            t_blowup = trajectory.blowup_time if trajectory.blowup_time is not None else trajectory.t_final
            raise ShotDivergedError(t_blowup, f"shot diverged ({trajectory.termination.value}) "
                                              f"at t = {t_blowup:.12g}")
        return trajectory

    @staticmethod
    def _residual_of(trajectory: Trajectory, space: HomSpaceSpec, dirichlet: DirichletData,
                     p: float) -> np.ndarray:
        end_error = trajectory.y[-1] - dirichlet.target_end(p)
        return np.append(end_error, trajectory.integral_xi - p * dirichlet.c(space.d))

    def shooting_residual(self, space: HomSpaceSpec, params: SystemParams, dirichlet: DirichletData,
                          p: float, unknowns: ShootingUnknowns) -> np.ndarray:
        """[y(1) - (a + p(b - a)), integral of xi - p c] for one shot"""
        if not 0.0 <= p <= 1.0:
            raise ParameterDomainError(f"p must lie in [0, 1], got {p}")
        self._check_dimensions(space, dirichlet, unknowns)
        return self._residual_of(self.shoot(space, params, dirichlet, unknowns), space, dirichlet, p)

    @staticmethod
    def _check_dimensions(space: HomSpaceSpec, dirichlet: DirichletData,
                          unknowns: Optional[ShootingUnknowns] = None):
        if dirichlet.n != space.n:
            raise ParameterDomainError(f"boundary data has {dirichlet.n} entries, space has {space.n} summands")
        if unknowns is not None and len(unknowns.L0) != space.n:
            raise ParameterDomainError(f"L0 has {len(unknowns.L0)} entries, space has {space.n} summands")

    # -------------------------------------------------------------------- newton

    def _jacobian(self, residual: Residual, x: np.ndarray, fx: np.ndarray) -> np.ndarray:
        jacobian = np.empty((len(fx), len(x)))
        for j in range(len(x)):
            step = max(self.options.fd_step, self.options.fd_step * abs(x[j]))
            shifted = x.copy()
            shifted[j] += step
            jacobian[:, j] = (residual(shifted) - fx) / step
        return jacobian

    def _newton(self, residual: Residual, x0: np.ndarray) -> Tuple[np.ndarray, float, int]:
        """Damped Newton with Armijo halving; returns (root, max-norm residual, iterations)"""
        opts = self.options
        x = np.array(x0, dtype=float)
        fx = residual(x)
        norm = float(np.max(np.abs(fx)))

        for iteration in range(opts.newton_max_iter + 1):
            if norm <= opts.bvp_tol:
                return x, norm, iteration
            if iteration == opts.newton_max_iter:
                break

            jacobian = self._jacobian(residual, x, fx)
            try:
                delta = np.linalg.solve(jacobian, -fx)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(jacobian, -fx, rcond=None)[0]
            if not np.all(np.isfinite(delta)):
                raise NewtonDivergedError(norm, iteration + 1)

            merit = float(np.linalg.norm(fx))
            damping = 1.0
            for _ in range(opts.max_halvings + 1):
                trial = x + damping * delta
                try:
                    f_trial = residual(trial)
                except ShotDivergedError:
                    damping *= 0.5
                    continue
                if np.linalg.norm(f_trial) <= (1.0 - opts.armijo * damping) * merit:
                    x, fx = trial, f_trial
                    norm = float(np.max(np.abs(fx)))
                    break
                damping *= 0.5
            else:
                raise NewtonDivergedError(norm, iteration + 1)

        raise NewtonDivergedError(norm, opts.newton_max_iter)

    # -------------------------------------------------------------- continuation

    def _continue(self, stage: str, residual_at: Callable[[float], Residual], x: np.ndarray,
                  start: float, target: float, point: Callable[[float], Tuple[float, float]],
                  history: List[ContinuationState]) -> np.ndarray:
        """March a scalar parameter from start to target, halving on failure and doubling on fast solves"""
        opts = self.options
        span = target - start
        value = start
        step = opts.initial_step
        while value < target:
            trial_value = target if step * span >= target - value else value + step * span
            p, h2 = point(trial_value)
            try:
                x_new, norm, iterations = self._newton(residual_at(trial_value), x)
            except (NewtonDivergedError, ShotDivergedError) as exc:
                history.append(ContinuationState(stage, p, h2, ShootingUnknowns.from_vector(x),
                                                 False, getattr(exc, "iterations", 0),
                                                 getattr(exc, "residual_norm", float("inf"))))
                step *= 0.5
                logger.info("[bvp] %s step halved to %.3g at %s = %.6g (%s)", stage, step, stage, value,
                            exc.reason)
                if step < opts.min_step:
                    p_reached, h2_reached = point(value)
                    raise ContinuationStalledError(stage, p_reached, h2_reached) from exc
                continue

            x, value = x_new, trial_value
            history.append(ContinuationState(stage, p, h2, ShootingUnknowns.from_vector(x),
                                             True, iterations, norm))
            if iterations <= opts.fast_iterations:
                step = min(opts.max_step, 2.0 * step)
        return x

    # -------------------------------------------------------------------- solves

    def solve_dirichlet(self, space: HomSpaceSpec, params: SystemParams,
                        dirichlet: DirichletData, p_target: float = 1.0) -> BvpSolution:
        """Solve the Dirichlet problem by continuation in p at h2 = 0, then in h2 at p = p_target"""
        self._check_dimensions(space, dirichlet)
        if not 0.0 <= p_target <= 1.0:
            raise ParameterDomainError(f"p must lie in [0, 1], got {p_target}")
        history: List[ContinuationState] = []
        limit = params.with_h2(0.0)

        def residual_in_p(p: float) -> Residual:
            return lambda x: self.shooting_residual(space, limit, dirichlet, p, ShootingUnknowns.from_vector(x))

        def residual_in_h2(h2: float) -> Residual:
            at_h2 = params.with_h2(h2)
            return lambda x: self.shooting_residual(space, at_h2, dirichlet, p_target,
                                                    ShootingUnknowns.from_vector(x))

        # exact root at p = 0, h2 = 0
        x, norm, iterations = self._newton(residual_in_p(0.0), np.zeros(space.n + 1))
        history.append(ContinuationState("p", 0.0, 0.0, ShootingUnknowns.from_vector(x), True, iterations, norm))

        x = self._continue("p", residual_in_p, x, 0.0, p_target, lambda p: (p, 0.0), history)
        logger.info("[bvp] stage p reached p = %.6g with %d continuation points", p_target, len(history))

        if params.h2 > 0.0:
            x = self._continue("h2", residual_in_h2, x, 0.0, params.h2, lambda h2: (p_target, h2), history)
            logger.info("[bvp] stage h2 reached h2 = %.6g", params.h2)

        return self._build_solution(space, params, dirichlet, ShootingUnknowns.from_vector(x), p_target, history)

    def solve_from_guess(self, space: HomSpaceSpec, params: SystemParams, dirichlet: DirichletData,
                         unknowns: ShootingUnknowns, p: float = 1.0) -> BvpSolution:
        """Polish a supplied guess by damped Newton at fixed (p, h2)"""
        self._check_dimensions(space, dirichlet, unknowns)
        residual = lambda x: self.shooting_residual(space, params, dirichlet, p, ShootingUnknowns.from_vector(x))
        x, norm, iterations = self._newton(residual, unknowns.as_vector())
        history = [ContinuationState("guess", p, params.h2, ShootingUnknowns.from_vector(x), True, iterations, norm)]
        return self._build_solution(space, params, dirichlet, ShootingUnknowns.from_vector(x), p, history)

    def solve_limit_system(self, d, m: float, dirichlet: DirichletData, p: float = 1.0) -> BvpSolution:
        """Solve the h2 = 0 system, which ignores the structure constants

        Targets follow y(1) - y(0) = p (b - a); the solution also reports the
        matrix a - b as printed_D.
        """
        d = np.atleast_1d(np.asarray(d))
        space = HomSpaceSpec(n=len(d), d=d, beta=np.zeros(len(d)), label="limit system")
        params = SystemParams(m=m, lam=0.0, h2=0.0)
        solution = self.solve_dirichlet(space, params, dirichlet, p_target=p)
        return replace(solution, printed_D=dirichlet.a - dirichlet.b)

    def _build_solution(self, space: HomSpaceSpec, params: SystemParams, dirichlet: DirichletData,
                        unknowns: ShootingUnknowns, p: float, history: List[ContinuationState]) -> BvpSolution:
        trajectory = self.shoot(space, params, dirichlet, unknowns, u0=dirichlet.u0)
        boundary_error = float(max(np.max(np.abs(trajectory.y[0] - dirichlet.a)),
                                   np.max(np.abs(trajectory.y[-1] - dirichlet.target_end(p)))))
        integral_error = abs(trajectory.integral_xi - p * dirichlet.c(space.d))
        potential_error = None
        if p == 1.0:
            potential_error = abs((trajectory.u[-1] - trajectory.u[0]) - (dirichlet.u1 - dirichlet.u0))
        h2_reached = max((state.h2 for state in history if state.converged), default=0.0)

        solution = BvpSolution(trajectory=trajectory, dirichlet=dirichlet, params=params,
                               boundary_error=boundary_error, integral_error=float(integral_error),
                               unknowns=unknowns, h2_reached=h2_reached,
                               newton_iterations=sum(state.newton_iters for state in history),
                               history=history, potential_error=potential_error)
        logger.info("[bvp] solved: boundary_error=%.3e integral_error=%.3e after %d Newton iterations",
                    solution.boundary_error, solution.integral_error, solution.newton_iterations)
        return solution
