"""Damped linearized reconstruction: optimality and parameter behavior."""

import numpy as np
import pytest

from elastinv.data import DifferenceData
from elastinv.errors import InvalidArgumentError
from elastinv.onestep import onestep_reconstruct


def synthetic_diff(sens, kappa, nu):
    """Difference data exactly explained by the linear model."""
    m = sens.n_patches
    v = sens.vol_columns() @ kappa + sens.shear_columns() @ nu
    return DifferenceData(matrix=v.reshape(m, m))


def test_normal_equations_solved_to_tolerance(tiny_setup, tiny_exact):
    result = onestep_reconstruct(tiny_setup.sens, tiny_exact, omega=1e-17, sigma=1e-13)
    assert result.gradient_norm <= 1e-8 * result.rhs_norm
    assert result.objective >= 0.0
    assert result.kappa.shape == (tiny_setup.sens.n_pixels,)


def test_solution_beats_ground_truth_objective(tiny_setup):
    """The minimizer's objective never exceeds the value at the generating truth."""
    rng = np.random.default_rng(12)
    p = tiny_setup.sens.n_pixels
    kappa_true = rng.uniform(0.0, 1e5, size=p)
    nu_true = rng.uniform(0.0, 1e3, size=p)
    diff = synthetic_diff(tiny_setup.sens, kappa_true, nu_true)
    omega, sigma = 1e-12, 1e-14
    result = onestep_reconstruct(tiny_setup.sens, diff, omega, sigma)
    truth_value = omega**2 * (kappa_true @ kappa_true) + sigma**2 * (nu_true @ nu_true)
    assert result.objective <= truth_value * (1.0 + 1e-9) + 1e-30


def test_heavier_damping_shrinks_contrasts(tiny_setup, tiny_exact):
    light = onestep_reconstruct(tiny_setup.sens, tiny_exact, omega=1e-17, sigma=1e-13)
    heavy = onestep_reconstruct(tiny_setup.sens, tiny_exact, omega=1e-6, sigma=1e-6)
    assert np.linalg.norm(heavy.kappa) < 1e-6 * max(np.linalg.norm(light.kappa), 1e-300)
    assert np.linalg.norm(heavy.nu) < np.linalg.norm(light.nu)


def test_invalid_inputs_rejected(tiny_setup, tiny_exact):
    with pytest.raises(InvalidArgumentError):
        onestep_reconstruct(tiny_setup.sens, tiny_exact, omega=0.0, sigma=1e-13)
    with pytest.raises(InvalidArgumentError):
        onestep_reconstruct(tiny_setup.sens, tiny_exact, omega=1e-17, sigma=-1.0)
    wrong = DifferenceData(matrix=np.zeros((3, 3)))
    with pytest.raises(InvalidArgumentError):
        onestep_reconstruct(tiny_setup.sens, wrong, omega=1e-17, sigma=1e-13)
