"""One-step linearized reconstruction with Tikhonov damping.

Stacks the flattened per-pixel sensitivities into a single linear model
for the difference data and solves the damped least squares problem

    min_(kappa, nu)  ||S_vol kappa + S_shear nu - v||^2
                     + omega^2 ||kappa||^2 + sigma^2 ||nu||^2

via its normal equations.  kappa collects the volumetric (first Lame)
contrasts per pixel and nu the shear contrasts.  The normal matrix is
formed explicitly, with the damping entering as omega^2 and sigma^2 on
the two diagonal blocks, and factorized by dense Cholesky; at pixel
counts where that is too big this solver is the wrong tool anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import DifferenceData
from .errors import InvalidArgumentError, NumericalFailureError
from .sensitivity import SensitivitySet


@dataclass
class OneStepResult:
    """Solution of the damped linearized problem.

    kappa and nu are per-pixel contrast estimates for the volumetric and
    shear parameters.  gradient_norm is the residual of the normal
    equations at the returned solution, reported so callers can confirm
    optimality.
    """

    kappa: np.ndarray
    nu: np.ndarray
    omega: float
    sigma: float
    residual_norm: float
    objective: float
    gradient_norm: float
    rhs_norm: float


def onestep_reconstruct(
    sens: SensitivitySet, diff: DifferenceData, omega: float, sigma: float
) -> OneStepResult:
    """Solve the damped normal equations for both contrast vectors.

    Parameters
    ----------
    sens : SensitivitySet for the background material.
    diff : DifferenceData; its matrix is vectorized row-major to match
        the sensitivity layout.
    omega, sigma : positive damping weights for kappa and nu.

    Raises
    ------
    NumericalFailureError
        If the normal matrix cannot be factorized, which indicates the
        damping is too small for the conditioning at hand.
    """
    if omega <= 0 or sigma <= 0:
        raise InvalidArgumentError(
            f"damping weights must be positive, got omega={omega}, sigma={sigma}"
        )
    if diff.n_patches != sens.n_patches:
        raise InvalidArgumentError(
            f"data has {diff.n_patches} patches, sensitivities have {sens.n_patches}"
        )
    sl = sens.vol_columns()
    sm = sens.shear_columns()
    v = diff.flatten()
    p = sens.n_pixels

    normal = np.empty((2 * p, 2 * p))
    normal[:p, :p] = sl.T @ sl + omega**2 * np.eye(p)
    normal[:p, p:] = sl.T @ sm
    normal[p:, :p] = normal[:p, p:].T
    normal[p:, p:] = sm.T @ sm + sigma**2 * np.eye(p)
    rhs = np.concatenate([sl.T @ v, sm.T @ v])

    try:
        factor = scipy.linalg.cho_factor(normal)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(
            f"normal equations not positive definite ({exc}); increase omega or sigma"
        ) from exc
    x = scipy.linalg.cho_solve(factor, rhs)
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError("non-finite solution from the normal equations")

    kappa, nu = x[:p], x[p:]
    residual = sl @ kappa + sm @ nu - v
    objective = float(
        residual @ residual + omega**2 * (kappa @ kappa) + sigma**2 * (nu @ nu)
    )
    gradient = normal @ x - rhs
    return OneStepResult(
        kappa=kappa,
        nu=nu,
        omega=float(omega),
        sigma=float(sigma),
        residual_norm=float(np.linalg.norm(residual)),
        objective=objective,
        gradient_norm=float(np.linalg.norm(gradient)),
        rhs_norm=float(np.linalg.norm(rhs)),
    )
