"""Shared fixtures: the reference desk problem and a tiny fast problem.

The desk problem (12x12x12 mesh, 6x6x6 pixels, 20 patches) is built once
per session because the forward solves dominate test runtime.  The tiny
problem (4x4x4 mesh, 2x2x2 pixels, 5 patches) exists for pipeline and CLI
tests where speed matters more than resolution.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from elastinv.config import InclusionBoxConfig, RunConfig
from elastinv.pipeline import ProblemSetup, build_problem, make_difference

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


def make_tiny_config() -> RunConfig:
    """A validated configuration small enough for per-test forward solves."""
    cfg = RunConfig()
    cfg.mesh.resolution = (4, 4, 4)
    cfg.mesh.pixels = (2, 2, 2)
    cfg.patches.per_side = 1
    cfg.inclusion.boxes = [
        InclusionBoxConfig(
            lo=(0.5, 0.5, 0.5),
            hi=(1.0, 1.0, 1.0),
            gamma_lam=2.3177e6 - 6.6211e5,
            gamma_mu=2.3411e4 - 6.6892e3,
        )
    ]
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def desk_config() -> RunConfig:
    cfg = RunConfig()
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def desk_setup(desk_config) -> ProblemSetup:
    return build_problem(desk_config)


@pytest.fixture(scope="session")
def desk_exact(desk_setup):
    """Exact (noise-free) difference data on the desk problem."""
    return make_difference(desk_setup, eta=0.0)


@pytest.fixture(scope="session")
def tiny_config() -> RunConfig:
    return make_tiny_config()


@pytest.fixture(scope="session")
def tiny_setup(tiny_config) -> ProblemSetup:
    return build_problem(tiny_config)


@pytest.fixture(scope="session")
def tiny_exact(tiny_setup):
    return make_difference(tiny_setup, eta=0.0)


def chebyshev_distance_to_truth(partition, truth_mask: np.ndarray) -> np.ndarray:
    """Per-pixel Chebyshev distance (in pixel units) to the nearest true pixel."""
    grid = partition.pixel_grid
    true_pts = grid[np.asarray(truth_mask, dtype=bool)]
    diffs = np.abs(grid[:, None, :] - true_pts[None, :, :]).max(axis=2)
    return diffs.min(axis=1)
