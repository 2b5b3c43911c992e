"""Generalized dimensions, extremal indices and rate functions from trajectories."""
import numba as _numba

# the bundled TBB is too old; skip it instead of warning on every import
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .dynsys import (Metric, SystemKind, SystemSpec, Trajectory, TrajectoryStream,  # noqa: E402
                     density_model, distance, distances_to, generate_trajectory, make_system, step)

__version__ = "0.1.0"
