import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import yaml

from bvp_service import BvpService
from checks import CheckChain, GrowthBoundCheck, TrajectoryCheck
from config import Config
from config_processor import ConfigProcessor
from counterexample_service import CounterexampleService
from dynamics import integrate, mu_invariant, qe_residual
from exceptions import ConfigError
from homspace import estimate_ricci_bounds
from models import (BlowupReport, BvpSolution, CircleCheckResult, DirichletData,
                    Direction, ExperimentBundle, PhaseState, RescaledTrajectory,
                    RunConfig, RunMode, ScanResult, Termination, Trajectory)
from singularity_service import SingularityService

logger = logging.getLogger(__name__)


class ExperimentManager:
    """
    Main orchestrator for one experiment run

    This class coordinates the components of the solver:
    - Configuration loading and snapshotting
    - Dispatch to the integrator, the shooting solver, the symmetric-shot scan,
      the blow-up analysis or the circle check
    - Invariant checks along the produced trajectory
    - CSV and summary emission into the output directory
    """

    def __init__(self, checks: Optional[List[TrajectoryCheck]] = None,
                 add_default_checks: Optional[bool] = True):
        self.config = Config()
        self.config_processor = ConfigProcessor()
        self._check_chain = CheckChain(checks, add_default_checks=add_default_checks)

        self._run: Optional[RunConfig] = None
        self._elapsed: Optional[float] = None

        # Results
        self.trajectory: Optional[Trajectory] = None
        self.M: Optional[np.ndarray] = None
        self.Mt: Optional[np.ndarray] = None
        self.solution: Optional[BvpSolution] = None
        self.pair_solutions: List[BvpSolution] = []
        self.scan: Optional[ScanResult] = None
        self.blowup: Optional[BlowupReport] = None
        self.rescaled: Optional[RescaledTrajectory] = None
        self.circle: Optional[CircleCheckResult] = None
        self.statistics: Dict[str, Any] = {}

    def load_config(self, run: Union[RunConfig, str, Path]) -> "ExperimentManager":
        """
        Load a run configuration

        Args:
            run: Validated RunConfig or path to a YAML file

        Returns:
            Self for method chaining
        """
        self._run = run if isinstance(run, RunConfig) else self.config_processor.load(run)
        self._reset_results()
        return self

    def _reset_results(self) -> None:
        self.trajectory = self.M = self.Mt = None
        self.solution = self.scan = self.blowup = self.rescaled = self.circle = None
        self.pair_solutions = []
        self.statistics = {}
        self._elapsed = None

    def _require_run(self) -> RunConfig:
        if self._run is None:
            raise ValueError("Must load a configuration first. Call load_config() before this method.")
        return self._run

    def execute(self) -> "ExperimentManager":
        """
        Run the experiment the configuration's mode block requests

        Returns:
            Self for method chaining
        """
        run = self._require_run()
        handlers = {
            RunMode.IVP: self._run_ivp,
            RunMode.DIRICHLET: self._run_dirichlet,
            RunMode.LIMIT: self._run_limit,
            RunMode.SCAN: self._run_scan,
            RunMode.BLOWUP: self._run_blowup,
            RunMode.RESCALE: self._run_rescale,
            RunMode.BOUNDS: self._run_bounds,
            RunMode.CIRCLE: self._run_circle,
        }
        logger.info("[run] starting %s", run.mode.value)
        started = time.perf_counter()
        handlers[run.mode](run)
        self._elapsed = time.perf_counter() - started
        logger.info("[run] %s finished in %.3f s", run.mode.value, self._elapsed)
        return self

    # ----------------------------------------------------------------- modes

    def _run_ivp(self, run: RunConfig) -> None:
        block = run.block
        initial = PhaseState(t=block["t0"], y=np.array(block["y"]), L=np.array(block["L"]), xi=block["xi"])
        self.trajectory = integrate(run.space, run.params, initial, block["t_end"], run.integrator,
                                    u0=block["u0"])
        self.M, self.Mt = SingularityService.functional_series(run.space, self.trajectory, block["t0"])

        stats: Dict[str, Any] = self._trajectory_stats(self.trajectory)
        if self.trajectory.termination is Termination.REACHED_END and self.trajectory.dense is not None:
            first, second = qe_residual(run.space, run.params, self.trajectory)
            stats["qe_residual"] = max(first, float(np.max(second)))
            if run.params.m > 0 and run.params.h2 > 0:
                mu = mu_invariant(run.params, self.trajectory)
                stats["mu_mean"] = float(np.mean(mu))
                stats["mu_spread"] = float(np.max(mu) - np.min(mu))
        self.statistics = stats

    def _run_dirichlet(self, run: RunConfig) -> None:
        block = run.block
        dirichlet = DirichletData(a=block["a"], b=block["b"], u0=block["u0"], u1=block["u1"])
        self.solution = BvpService(run.bvp).solve_dirichlet(run.space, run.params, dirichlet)
        self.trajectory = self.solution.trajectory
        self.statistics = {**self.solution.to_summary(), **self._trajectory_stats(self.trajectory)}

    def _run_limit(self, run: RunConfig) -> None:
        block = run.block
        dirichlet = DirichletData(a=block["a"], b=block["b"], u0=block["u0"], u1=block["u1"])
        self.solution = BvpService(run.bvp).solve_limit_system(block["d"], block["m"], dirichlet, p=block["p"])
        self.trajectory = self.solution.trajectory
        self.statistics = {**self.solution.to_summary(), **self._trajectory_stats(self.trajectory)}

    def _run_scan(self, run: RunConfig) -> None:
        block = run.block
        service = CounterexampleService(run.bvp, threads=run.threads)
        self.scan = service.nonuniqueness_scan(block["k1_min"], block["k1_max"], block["steps"])
        stats: Dict[str, Any] = {
            "shots": int(len(self.scan.k1)),
            "converged": int(self.scan.converged.sum()),
            "folds": [{"k1": fold.k1, "y_end": fold.y_end, "kind": fold.kind} for fold in self.scan.folds],
            "pairs": [dict(vars(pair)) for pair in self.scan.pairs],
        }
        if block["resolve_pairs"]:
            for pair in self.scan.pairs:
                self.pair_solutions.extend(service.resolve_pair(pair))
            stats["pair_boundary_errors"] = [s.boundary_error for s in self.pair_solutions]
        self.statistics = stats

    def _seed_state(self, block: Dict[str, Any]) -> PhaseState:
        return PhaseState(t=block["t"], y=np.array(block["y"]), L=np.array(block["L"]), xi=block["xi"])

    def _run_blowup(self, run: RunConfig) -> None:
        service = SingularityService(run.integrator, threads=run.threads)
        self.blowup = service.analyze_blowup(run.space, run.params, self._seed_state(run.block),
                                             Direction(run.block["direction"]), run.block["t_end"])
        self.trajectory, self.M, self.Mt = self.blowup.trajectory, self.blowup.M, self.blowup.Mt
        if not any(isinstance(check, GrowthBoundCheck) for check in self._check_chain.checks):
            self._check_chain.add_check(GrowthBoundCheck())
        self.statistics = {**self.blowup.to_summary(), **self._trajectory_stats(self.trajectory),
                           "growth_bound": service.growth_bound(run.space, run.params, self.trajectory)}

    def _run_rescale(self, run: RunConfig) -> None:
        self._run_blowup(run)
        service = SingularityService(run.integrator, threads=run.threads)
        self.rescaled = service.rescale(run.space, run.params, self.trajectory, run.block["anchor"],
                                        run.block["window"], run.block["points"])
        self.statistics["M_anchor"] = self.rescaled.M_anchor
        if len(self.rescaled.s) >= 4:
            self.statistics["rescaled_residual"] = service.rescaled_residual(run.space, run.params, self.rescaled)

    def rescale_near(self, distance: float, window: float, points: int = 401) -> RescaledTrajectory:
        """Rescale around the sup-attaining anchor for T at ``distance`` before the singular time"""
        run = self._require_run()
        if self.blowup is None:
            raise ValueError("Must run a blow-up analysis first. Call execute() with a blowup block.")
        service = SingularityService(run.integrator, threads=run.threads)
        T = self.blowup.t_sing - self.blowup.direction.sign * distance
        anchor = service.anchor_scan(run.space, self.trajectory, [T], self.blowup.t_sing)[0]
        self.rescaled = service.rescale(run.space, run.params, self.trajectory, anchor["t_anchor"], window, points)
        return self.rescaled

    def _run_bounds(self, run: RunConfig) -> None:
        estimates = estimate_ricci_bounds(run.space, run.block["samples"], run.block["box_radius"], seed=run.seed)
        self.statistics = estimates.to_dict()

    def _run_circle(self, run: RunConfig) -> None:
        block = run.block
        service = CounterexampleService(run.bvp, threads=run.threads)
        self.circle = service.circle_nonexistence_check(block["lambda"], block["gap"], block["m"])
        self.statistics = self.circle.to_summary()
        if self.circle.witness is not None:
            self.trajectory = self.circle.witness
            self.statistics.update(self._trajectory_stats(self.trajectory))

    @staticmethod
    def _trajectory_stats(trajectory: Trajectory) -> Dict[str, Any]:
        stats = {
            "termination": trajectory.termination.value,
            "t_final": trajectory.t_final,
            "samples": len(trajectory),
            "accepted_steps": int(trajectory.accepted_steps),
            "rejected_steps": int(trajectory.rejected_steps),
        }
        if trajectory.blowup_time is not None:
            stats["blowup_time"] = float(trajectory.blowup_time)
        return stats

    # -------------------------------------------------------------- getters

    def get_check_summary(self) -> Dict[str, Any]:
        """Per-check statistics of the invariant checks on the run's trajectory"""
        if self.trajectory is None:
            return {}
        self._check_chain.apply(self.trajectory)
        return {"passed": self._check_chain.passed(), **self._check_chain.get_summary_stats(),
                "checks": self._check_chain.get_check_stats()}

    def get_run_summary(self) -> Dict[str, Any]:
        """Summary report of the last executed run"""
        run = self._require_run()
        if self._elapsed is None:
            raise ValueError("Must execute first. Call execute() before this method.")
        summary: Dict[str, Any] = {
            "version": self.config.VERSION,
            "mode": run.mode.value,
            "seed": run.seed,
            "threads": self.config.threads(run.threads),
            "wall_clock_seconds": round(self._elapsed, 6),
            "statistics": _plain(self.statistics),
        }
        if run.space is not None:
            summary["space"] = run.space.label
        checks = self.get_check_summary()
        if checks:
            summary["checks"] = _plain(checks)
        return summary

    def get_scan_frame(self) -> Optional[pd.DataFrame]:
        return None if self.scan is None else self.scan.to_frame()

    def get_trajectory_frame(self) -> Optional[pd.DataFrame]:
        return None if self.trajectory is None else self.trajectory.to_frame(self.M, self.Mt)

    # -------------------------------------------------------------- export

    def export_data(self, output_dir: Optional[Union[str, Path]] = None) -> Dict[str, str]:
        """
        Write the config snapshot, CSVs and summary

        Args:
            output_dir: Target directory; defaults to the configured one

        Returns:
            Mapping of artifact type to file path
        """
        run = self._require_run()
        directory = Path(output_dir or run.output_dir or self.config.DEFAULT_OUTPUT_DIR)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {directory} is not writable: {exc.strerror}", key="output.dir")

        exported: Dict[str, str] = {}
        snapshot = directory / self.config.CONFIG_SNAPSHOT_FILE
        snapshot.write_text(self.config_processor.dump(run))
        exported["config"] = str(snapshot)

        float_format = self.config.CSV_FLOAT_FORMAT
        if self.trajectory is not None:
            self.trajectory.to_csv(directory / self.config.TRAJECTORY_FILE, self.M, self.Mt)
            exported["trajectory"] = str(directory / self.config.TRAJECTORY_FILE)
        if self.solution is not None and self.solution.history:
            history = pd.DataFrame([{"stage": state.stage, "p": state.p, "h2": state.h2,
                                     "converged": state.converged, "newton_iters": state.newton_iters,
                                     "residual_norm": state.residual_norm, "xi0": state.unknowns.xi0}
                                    for state in self.solution.history])
            history.to_csv(directory / self.config.HISTORY_FILE, index=False, float_format=float_format)
            exported["continuation"] = str(directory / self.config.HISTORY_FILE)
        if self.scan is not None:
            for key, frame, name in (("scan", self.scan.to_frame(), self.config.SCAN_FILE),
                                     ("folds", self.scan.folds_frame(), self.config.FOLDS_FILE),
                                     ("pairs", self.scan.pairs_frame(), self.config.PAIRS_FILE)):
                frame.to_csv(directory / name, index=False, float_format=float_format)
                exported[key] = str(directory / name)
        if self.rescaled is not None:
            self.rescaled.to_frame().to_csv(directory / self.config.RESCALED_FILE, index=False,
                                            float_format=float_format)
            exported["rescaled"] = str(directory / self.config.RESCALED_FILE)

        summary_path = directory / self.config.SUMMARY_FILE
        summary = self.get_run_summary()
        summary["files"] = sorted(Path(path).name for path in exported.values()) + [summary_path.name]
        summary_path.write_text(yaml.safe_dump(summary, sort_keys=False))
        exported["summary"] = str(summary_path)
        logger.info("[run] wrote %d files to %s", len(exported), directory)
        return exported

    def run(self, run: Union[RunConfig, str, Path]) -> ExperimentBundle:
        """Load, execute and export one experiment"""
        self.load_config(run).execute()
        exported = self.export_data()
        summary = yaml.safe_load(Path(exported["summary"]).read_text())
        return ExperimentBundle(output_dir=Path(exported["summary"]).parent, version=self.config.VERSION,
                                config_snapshot=Path(exported["config"]).read_text(),
                                files=sorted(exported.values()), summary=summary,
                                wall_clock=float(self._elapsed))


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays to YAML-safe builtins"""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
