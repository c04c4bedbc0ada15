import os
from typing import Dict, Any, Optional


class Config:
    """Centralized configuration for the quasi-Einstein solver"""

    VERSION = "0.1.0"
    PROG = "coqe"

    # Output files
    SUMMARY_FILE = "summary.yaml"
    CONFIG_SNAPSHOT_FILE = "config.yaml"
    TRAJECTORY_FILE = "trajectory.csv"
    SCAN_FILE = "scan.csv"
    RESCALED_FILE = "rescaled.csv"
    FOLDS_FILE = "folds.csv"
    PAIRS_FILE = "pairs.csv"
    HISTORY_FILE = "continuation.csv"
    DEFAULT_OUTPUT_DIR = "coqe_output"
    CSV_FLOAT_FORMAT = "%.17g"

    # Integrator defaults
    INTEGRATOR = {
        "method": "DOP853",
        "rel_tol": 1e-10,
        "abs_tol": 1e-12,
        "blowup_threshold": 1e8,
        "min_step": 1e-14,  # relative to the interval length
        "max_steps": 200000,
    }
    INTEGRATOR_METHODS = ("DOP853", "RK45")

    # Shooting / continuation defaults
    BVP = {
        "bvp_tol": 1e-8,
        "shot_rel_tol": 1e-12,
        "shot_abs_tol": 1e-12,
        "newton_max_iter": 50,
        "fd_step": 1e-7,
        "initial_step": 0.25,
        "max_step": 0.5,
        "min_step": 1e-6,
        "armijo": 1e-4,
        "max_halvings": 12,
        "fast_iterations": 3,
    }

    # Symmetric-shot scan
    SCAN = {
        "k1_min": -1.5,
        "k1_max": 3.0,
        "steps": 200,
        "noise_floor": 1e-9,
        "refine_xtol": 1e-10,
    }

    # Blow-up analysis
    BLOWUP = {
        "span": 10.0,
        "fit_fraction": 0.1,
        "fit_min_samples": 10,
        "collapse_steps": 5,
        "rate_bound": 1.05,
        "growth_margin": 1.1,
    }

    # Circle non-existence check
    CIRCLE_FAN_SIZE = 25

    # Ricci bound sampling
    BOUNDS = {"samples": 10000, "box_radius": 3.0}

    # Homogeneous-space data
    OVERFLOW_BOUND = 300.0
    GAMMA_SYMMETRY_TOL = 1e-12
    WARN_GAMMA_ASYMMETRY = True

    # Preset definitions; `parameter` names the field a call argument fills
    PRESETS = {
        "circle": {
            "label": "circle S^1",
            "n": 1,
            "d": [1],
            "beta": [0.0],
            "gamma": [],
        },
        "sphere2": {
            "label": "round S^2 = SO(3)/SO(2)",
            "n": 1,
            "d": [2],
            "beta": [1.0],
            "gamma": [],
            "parameter": {"field": "beta", "default": 1.0, "type": "float"},
        },
        "torus": {
            "label": "flat torus T^{value}",
            "n": 1,
            "d": [2],
            "beta": [0.0],
            "gamma": [],
            "parameter": {"field": "d", "default": 2, "type": "int"},
        },
    }

    # CLI subcommand -> mode block
    COMMAND_MODES = {
        "run-ivp": "ivp",
        "solve-bvp": "dirichlet",
        "solve-limit": "limit",
        "scan-nonuniqueness": "scan",
        "analyze-blowup": "blowup",
        "rescale": "rescale",
        "check-circle": "circle",
        "estimate-bounds": "bounds",
    }

    # Environment
    THREADS_ENV = "COQE_THREADS"

    @classmethod
    def get_preset(cls, name: str) -> Optional[Dict[str, Any]]:
        """Get preset definition by name"""
        return cls.PRESETS.get(name)

    @classmethod
    def threads(cls, requested: Optional[int] = None) -> int:
        """Worker count: explicit request, then COQE_THREADS, then core count"""
        if requested:
            return max(1, int(requested))
        env_value = os.environ.get(cls.THREADS_ENV)
        if env_value:
            try:
                return max(1, int(env_value))
            except ValueError:
                pass
        return os.cpu_count() or 1
