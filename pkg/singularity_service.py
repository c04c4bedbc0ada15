import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from config import Config
from dynamics import blowup_magnitude, integrate, vector_field
from exceptions import (InsufficientSamplesError, NoSingularityError,
                        ParameterDomainError)
from homspace import big_R, big_R_gradient, ricci_map
from models import (BlowupReport, Direction, HomSpaceSpec, IntegratorOptions,
                    PhaseState, RescaledTrajectory, SystemParams, Termination,
                    Trajectory)

logger = logging.getLogger(__name__)

RATE_BOUND_VIOLATED = "rate-bound-violated"
LOW_DIMENSIONAL_SUMMAND = "summand-dimension-below-two"


class SingularityService:
    """Blow-up diagnostics: the functional M, singular-time and rate estimates, rescaling"""

    def __init__(self, options: Optional[IntegratorOptions] = None, threads: Optional[int] = None):
        self.config = Config()
        self.options = options or IntegratorOptions()
        self.threads = threads

    # ------------------------------------------------------------- functional

    @staticmethod
    def blowup_functional(space: HomSpaceSpec, state: PhaseState, t_origin: float = 0.0) -> Tuple[float, float]:
        """M at one state and M times the distance |t - t_origin|"""
        M = float(blowup_magnitude(space, state.y, state.L, state.xi))
        return M, M * abs(state.t - t_origin)

    @staticmethod
    def functional_series(space: HomSpaceSpec, traj: Trajectory,
                          t_origin: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """M and M |t - t_origin| at every sample"""
        M = np.asarray(blowup_magnitude(space, traj.y, traj.L, traj.xi), dtype=float)
        return M, M * np.abs(traj.t - t_origin)

    # ------------------------------------------------------- singular time fit

    def estimate_singular_time(self, traj: Trajectory) -> float:
        """Extrapolate the collapsing step sizes of the last accepted steps as a geometric series"""
        count = self.config.BLOWUP["collapse_steps"]
        steps = np.abs(np.diff(traj.t))[-count:]
        if len(steps) < 2 or np.any(steps <= 0):
            return traj.t_final
        ratio = float(np.exp(np.polyfit(np.arange(len(steps)), np.log(steps), 1)[0]))
        if not ratio < 1.0:
            return traj.t_final
        direction = np.sign(traj.t_final - traj.t_start)
        return float(traj.t_final + direction * steps[-1] * ratio / (1.0 - ratio))

    def fit_blowup_exponent(self, distances: np.ndarray, M: np.ndarray,
                            threshold: float) -> Tuple[float, float, int]:
        """Least-squares p in M ~ C dist^-p on log-log samples

        The window ends at the last sample with M below a fraction of the
        threshold and spans one decade in distance, widened a decade at a time
        until it holds enough samples.
        """
        minimum = self.config.BLOWUP["fit_min_samples"]
        usable = (distances > 0) & np.isfinite(M) & (M > 0)
        below = np.flatnonzero(usable & (M < self.config.BLOWUP["fit_fraction"] * threshold))
        if len(below) == 0:
            raise InsufficientSamplesError("no samples below the fit ceiling")
        inner = distances[below[-1]]

        outermost = distances[usable].max()
        decades = 1
        while True:
            window = usable & (distances >= inner) & (distances <= inner * 10.0 ** decades) \
                & (M < self.config.BLOWUP["fit_fraction"] * threshold)
            if window.sum() >= minimum:
                break
            if inner * 10.0 ** decades >= outermost:
                raise InsufficientSamplesError(f"only {int(window.sum())} samples available for the rate fit, "
                                               f"need {minimum}")
            decades += 1

        log_d, log_M = np.log(distances[window]), np.log(M[window])
        slope, intercept = np.polyfit(log_d, log_M, 1)
        residual = float(np.sqrt(np.mean((log_M - (slope * log_d + intercept)) ** 2)))
        return float(-slope), residual, int(window.sum())

    # ---------------------------------------------------------------- analysis

    def analyze_blowup(self, space: HomSpaceSpec, params: SystemParams, seed_state: PhaseState,
                       direction: Direction, t_end: Optional[float] = None) -> BlowupReport:
        """Integrate away from the seed until blow-up and measure the rate"""
        diagnostics: List[str] = []
        if not space.summands_at_least_two_dimensional:
            logger.warning("[singularity] '%s' has a summand of dimension below two; "
                           "the rate bound does not apply", space.label)
            diagnostics.append(LOW_DIMENSIONAL_SUMMAND)

        if t_end is None:
            t_end = seed_state.t + direction.sign * self.config.BLOWUP["span"]
        if np.sign(t_end - seed_state.t) != direction.sign:
            raise ParameterDomainError(f"t_end = {t_end} lies on the wrong side of the seed for {direction.value}")

        traj = integrate(space, params, seed_state, t_end, self.options)
        if traj.termination in (Termination.REACHED_END, Termination.STEP_LIMIT):
            raise NoSingularityError(f"integration {direction.value} ended with {traj.termination.value} "
                                     f"at t = {traj.t_final:.12g} without a singularity")

        t_sing = self.estimate_singular_time(traj)
        M, Mt = self.functional_series(space, traj, t_sing)
        distances = np.abs(traj.t - t_sing)
        exponent, fit_residual, fit_samples = self.fit_blowup_exponent(distances, M, self.options.blowup_threshold)

        if space.summands_at_least_two_dimensional and params.m > 0 \
                and exponent > self.config.BLOWUP["rate_bound"]:
            logger.warning("[singularity] fitted exponent %.4f exceeds the rate bound", exponent)
            diagnostics.append(RATE_BOUND_VIOLATED)

        report = BlowupReport(t_sing=t_sing, sup_Mt=float(np.max(Mt[np.isfinite(Mt)])), exponent=exponent,
                              fit_residual=fit_residual, fit_samples=fit_samples, direction=direction,
                              termination=traj.termination, diagnostics=diagnostics,
                              trajectory=traj, M=M, Mt=Mt)
        logger.info("[singularity] t_sing=%.12g sup_Mt=%.6g exponent=%.4f (%d samples)",
                    report.t_sing, report.sup_Mt, report.exponent, report.fit_samples)
        return report

    def anchor_scan(self, space: HomSpaceSpec, traj: Trajectory, T_values,
                    t_sing: Optional[float] = None) -> List[Dict[str, float]]:
        """For each T, the sample farther from the singularity than T maximising M(t) |t - T|"""
        if t_sing is None:
            t_sing = self.estimate_singular_time(traj)
        M, _ = self.functional_series(space, traj)
        finite = np.isfinite(M)

        def best_anchor(T: float) -> Dict[str, float]:
            candidates = finite & (np.abs(traj.t - t_sing) >= abs(T - t_sing))
            if not candidates.any():
                raise ParameterDomainError(f"no samples beyond T = {T}")
            values = np.where(candidates, M * np.abs(traj.t - T), -np.inf)
            index = int(np.argmax(values))
            return {"T": float(T), "t_anchor": float(traj.t[index]), "M_anchor": float(M[index]),
                    "value": float(values[index])}

        with ThreadPoolExecutor(max_workers=self.config.threads(self.threads)) as pool:
            return list(pool.map(best_anchor, np.atleast_1d(T_values)))

    def growth_bound(self, space: HomSpaceSpec, params: SystemParams, traj: Trajectory) -> float:
        """Empirical s with |M'| <= s M^2 along the samples, including the safety margin"""
        ratios = self.growth_ratios(space, params, traj)
        finite = ratios[np.isfinite(ratios)]
        if len(finite) == 0:
            return 0.0
        return float(self.config.BLOWUP["growth_margin"] * finite.max())

    @staticmethod
    def growth_ratios(space: HomSpaceSpec, params: SystemParams, traj: Trajectory) -> np.ndarray:
        """|M'| / M^2 at every sample, with M' from the right-hand side"""
        ratios = np.full(len(traj), np.nan)
        for index, state in enumerate(traj.samples):
            M = float(blowup_magnitude(space, state.y, state.L, state.xi))
            if M <= 0 or not np.isfinite(M):
                continue
            _, dL, dxi = vector_field(space, params, state)
            dM = (state.xi * dxi + float((state.L * dL) @ space.d)
                  + 0.5 * float(big_R_gradient(space, state.y) @ state.L)) / M
            ratios[index] = abs(dM) / M ** 2
        return ratios

    # ---------------------------------------------------------------- rescale

    def rescale(self, space: HomSpaceSpec, params: SystemParams, traj: Trajectory, t_anchor: float,
                window: float, points: int = 401) -> RescaledTrajectory:
        """Resample around t_anchor in the variables s = M_a (t - t_anchor), L / M_a, xi / M_a"""
        if not traj.covers(t_anchor):
            raise ParameterDomainError(f"anchor {t_anchor} outside trajectory range "
                                       f"[{traj.t_start}, {traj.t_final}]")
        if window < 0:
            raise ParameterDomainError("window must be non-negative")
        anchor = traj.state_at(t_anchor)
        M_anchor, _ = self.blowup_functional(space, anchor)
        if not M_anchor > 0:
            raise ParameterDomainError(f"M vanishes at the anchor t = {t_anchor}")

        t_low, t_high = sorted((traj.t_start, traj.t_final))
        s_low = max(-window, (t_low - t_anchor) * M_anchor)
        s_high = min(window, (t_high - t_anchor) * M_anchor)
        s = np.array([0.0]) if window == 0 else np.linspace(s_low, s_high, int(points))
        t = np.clip(t_anchor + s / M_anchor, t_low, t_high)

        z = np.atleast_2d(traj.augmented_at(t).T)
        n = space.n
        y, L, xi = z[:, :n], z[:, n:2 * n] / M_anchor, z[:, 2 * n] / M_anchor
        M = np.sqrt(xi ** 2 + (L * L) @ space.d + np.atleast_1d(big_R(space, y)) / M_anchor ** 2)
        logger.info("[singularity] rescaled around t=%.12g with M=%.6g on s in [%.4g, %.4g]",
                    t_anchor, M_anchor, s[0], s[-1])
        return RescaledTrajectory(t_anchor=float(t_anchor), M_anchor=float(M_anchor), s=s, y=y, L=L, xi=xi, M=M)

    @staticmethod
    def rescaled_residual(space: HomSpaceSpec, params: SystemParams, rescaled: RescaledTrajectory) -> float:
        """Largest residual of the rescaled system, derivatives from cubic splines in s"""
        if len(rescaled.s) < 4:
            raise ParameterDomainError("rescaled residual needs at least four samples")
        scale = rescaled.M_anchor ** 2
        d = space.d
        L, xi = rescaled.L, rescaled.xi
        tr_L = L @ d

        dy = CubicSpline(rescaled.s, rescaled.y).derivative()(rescaled.s)
        dL = CubicSpline(rescaled.s, L).derivative()(rescaled.s)
        dxi = CubicSpline(rescaled.s, xi).derivative()(rescaled.s)

        source = params.h2 * params.lam / scale
        ricci = np.zeros_like(L) if params.h2 == 0.0 else params.h2 * ricci_map(space, rescaled.y) / scale
        residuals = [
            dy - L,
            dL - (-xi[:, None] * L + ricci - source),
            dxi - (-(L * L) @ d - params.m * (tr_L - xi) ** 2 - source),
        ]
        return float(max(np.max(np.abs(r)) for r in residuals))
