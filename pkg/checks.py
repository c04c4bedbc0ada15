from abc import ABC, abstractmethod
from typing import Dict, List, Optional

import numpy as np

from models import Trajectory
from singularity_service import SingularityService


class TrajectoryCheck(ABC):
    """Abstract base class for invariants monitored along a trajectory"""

    @abstractmethod
    def violations(self, traj: Trajectory) -> int:
        """Return the number of samples (or sample pairs) violating the invariant"""
        pass

    def applies_to(self, traj: Trajectory) -> bool:
        """Whether the invariant is expected to hold for this trajectory"""
        return True

    def get_description(self) -> str:
        """Get a human-readable description of this check"""
        return self.__class__.__name__


class XiMonotonicityCheck(TrajectoryCheck):
    """xi is non-increasing in t whenever h2 * lambda >= 0"""

    def __init__(self, tol: float = 1e-9):
        self.tol = tol

    def applies_to(self, traj: Trajectory) -> bool:
        return traj.params.h2 * traj.params.lam >= 0

    def violations(self, traj: Trajectory) -> int:
        if len(traj) < 2:
            return 0
        increase = np.diff(traj.xi) * np.sign(np.diff(traj.t))
        return int(np.sum(increase > self.tol))

    def get_description(self) -> str:
        return f"xi non-increasing (tol {self.tol:g})"


class SignPreservationCheck(TrajectoryCheck):
    """Each L_i keeps its sign along the h2 = 0 system"""

    def __init__(self, tol: float = 1e-12):
        self.tol = tol

    def applies_to(self, traj: Trajectory) -> bool:
        return traj.params.h2 == 0.0

    def violations(self, traj: Trajectory) -> int:
        L = traj.L
        flips = (L[:-1] * L[1:] < 0) & (np.abs(L[:-1]) > self.tol) & (np.abs(L[1:]) > self.tol)
        return int(np.sum(flips))

    def get_description(self) -> str:
        return "L_i sign preserved at h2 = 0"


class GrowthBoundCheck(TrajectoryCheck):
    """|M'| <= s M^2 sample-wise for a given growth constant s"""

    def __init__(self, s: Optional[float] = None):
        self.s = s

    def violations(self, traj: Trajectory) -> int:
        ratios = SingularityService.growth_ratios(traj.space, traj.params, traj)
        s = self.s
        if s is None:
            s = SingularityService().growth_bound(traj.space, traj.params, traj)
        return int(np.sum(ratios[np.isfinite(ratios)] > s))

    def get_description(self) -> str:
        return "|M'| <= s M^2" if self.s is None else f"|M'| <= {self.s:g} M^2"


class FiniteStateCheck(TrajectoryCheck):
    """Every sample is finite"""

    def violations(self, traj: Trajectory) -> int:
        finite = np.all(np.isfinite(traj.y), axis=1) & np.all(np.isfinite(traj.L), axis=1) & np.isfinite(traj.xi)
        return int(np.sum(~finite))

    def get_description(self) -> str:
        return "finite state"


class CheckChain:
    """Run several trajectory checks and keep per-check statistics"""

    def __init__(self, checks: Optional[List[TrajectoryCheck]] = None,
                 add_default_checks: Optional[bool] = True):
        self.checks = list(checks or [])
        if add_default_checks:
            for default_check in self.get_default_checks():
                self.add_check(default_check)
        self.check_stats: Dict[str, Dict[str, int]] = {}

    @staticmethod
    def get_default_checks() -> List[TrajectoryCheck]:
        return [
            FiniteStateCheck(),
            XiMonotonicityCheck(),
            SignPreservationCheck(),
        ]

    def add_check(self, check: TrajectoryCheck) -> "CheckChain":
        """Add a check to the chain"""
        self.checks.append(check)
        return self

    def apply(self, traj: Trajectory) -> Dict[str, Dict[str, int]]:
        """Run every applicable check against the trajectory"""
        self.check_stats = {}
        for check in self.checks:
            applicable = check.applies_to(traj)
            self.check_stats[check.get_description()] = {
                "applicable": int(applicable),
                "violations": check.violations(traj) if applicable else 0,
                "samples": len(traj),
            }
        return self.check_stats

    def passed(self) -> bool:
        return all(stats["violations"] == 0 for stats in self.check_stats.values())

    def get_active_checks(self) -> List[str]:
        """Get descriptions of all active checks"""
        return [check.get_description() for check in self.checks]

    def get_check_stats(self) -> Dict[str, Dict[str, int]]:
        return self.check_stats

    def get_summary_stats(self) -> Dict[str, int]:
        """Get overall check summary"""
        if not self.check_stats:
            return {}
        return {
            "total_checks": len(self.checks),
            "applicable_checks": sum(stats["applicable"] for stats in self.check_stats.values()),
            "total_violations": sum(stats["violations"] for stats in self.check_stats.values()),
        }
