# -*- coding: utf-8 -*-
"""
config.py - Configuration management for SheafDynamics
Holds numerical tolerances, integrator defaults and runner settings
"""

import os
import json
from pathlib import Path
from dataclasses import dataclass, asdict, fields

# Application directories
APP_NAME = "SheafDynamics"
APP_DIR = Path(os.environ.get("SHEAFDYNAMICS_HOME", Path.home() / ".sheafdynamics"))
CONFIG_FILE = APP_DIR / "config.json"


@dataclass
class Config:
    """Application configuration dataclass"""
    # Linear algebra
    rank_tol: float = 1e-10  # eigen/singular values <= rank_tol * max(1, largest) count as zero
    dense_limit: int = 4096  # total dimension above which the coboundary is assembled sparse

    # Integrators
    exact_eigen_limit: int = 512  # largest total dimension integrated by eigendecomposition
    power_iterations: int = 50
    rk4_safety: float = 0.5  # rk4 step = rk4_safety / (alpha * lambda_max)
    exact_samples: int = 1000  # sample grid for exact-eigen when no step is given
    max_steps: int = 2_000_000
    adaptive_rtol: float = 1e-11
    adaptive_atol: float = 1e-13
    divergence_factor: float = 1e6  # flag when |x| > divergence_factor * (1 + |x0|)

    # Bounded confidence
    interior_margin: float = 1e-6

    # Output
    default_record_every: int = 10
    default_t_max: float = 100.0
    csv_float_format: str = "%.17g"

    # Batch runs
    max_concurrent_runs: int = 4

    def save(self):
        """Save configuration to file"""
        APP_DIR.mkdir(parents=True, exist_ok=True)
        with open(CONFIG_FILE, 'w', encoding='utf-8') as f:
            json.dump(asdict(self), f, indent=2, ensure_ascii=False)

    @classmethod
    def load(cls) -> 'Config':
        """Load configuration from file, ignoring unknown keys"""
        if CONFIG_FILE.exists():
            try:
                with open(CONFIG_FILE, 'r', encoding='utf-8') as f:
                    data = json.load(f)
                known = {f.name for f in fields(cls)}
                return cls(**{k: v for k, v in data.items() if k in known})
            except Exception:
                pass
        return cls()


# Global config instance
config = Config.load()
