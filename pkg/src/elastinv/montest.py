"""Linearized monotonicity test for pixel membership.

A pixel is flagged as inside the inclusion when subtracting its weighted
sensitivity from the noisy difference data leaves a matrix that is still
positive semidefinite up to the noise shift:

    V_delta + delta * I - alpha_lam * Svol_k - alpha_mu * Sshear_k  >= 0.

With admissible weights, every truly inside pixel passes regardless of
the noise realization, so the flagged set can only over-estimate the
inclusion; shrinking the weights tightens the flagged set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DifferenceData
from .errors import InvalidArgumentError
from .sensitivity import SensitivitySet

# A matrix counts as positive semidefinite when its smallest eigenvalue is
# no lower than -PSD_REL_TOL times its spectral norm.
PSD_REL_TOL = 1e-12


@dataclass
class TestWeights:
    """Sensitivity weights of the linearized membership test."""

    alpha_lam: float
    alpha_mu: float

    def __post_init__(self):
        if self.alpha_lam < 0 or self.alpha_mu < 0:
            raise InvalidArgumentError(
                f"test weights must be >= 0, got ({self.alpha_lam}, {self.alpha_mu})"
            )
        if self.alpha_lam == 0 and self.alpha_mu == 0:
            raise InvalidArgumentError("at least one test weight must be positive")

    @classmethod
    def admissible(
        cls, lam0: float, mu0: float, lam1: float, mu1: float, scale: float = 1.0
    ) -> "TestWeights":
        """Largest weights guaranteed to keep inside pixels flagged.

        For a stiffer inclusion with parameters (lam1, mu1) over the
        background (lam0, mu0), any weights up to
        ``(lam0 / lam1) * (lam1 - lam0)`` and ``(mu0 / mu1) * (mu1 - mu0)``
        are admissible; scale shrinks both by a common factor in (0, 1].
        """
        if not (0 < lam0 < lam1 and 0 < mu0 < mu1):
            raise InvalidArgumentError(
                "admissible weights need 0 < background < inclusion parameters, "
                f"got lam {lam0} vs {lam1}, mu {mu0} vs {mu1}"
            )
        if not 0 < scale <= 1:
            raise InvalidArgumentError(f"scale must be in (0, 1], got {scale}")
        return cls(
            alpha_lam=scale * (lam0 / lam1) * (lam1 - lam0),
            alpha_mu=scale * (mu0 / mu1) * (mu1 - mu0),
        )


def is_psd(matrix: np.ndarray, rel_tol: float = PSD_REL_TOL) -> bool:
    """Eigenvalue check with a relative floor on the admissible negativity."""
    sym = 0.5 * (matrix + matrix.T)
    eigvals = np.linalg.eigvalsh(sym)
    spectral = max(abs(eigvals[0]), abs(eigvals[-1]))
    return bool(eigvals[0] >= -rel_tol * spectral)


def linearized_test(
    k: int, weights: TestWeights, diff: DifferenceData, sens: SensitivitySet
) -> bool:
    """True when pixel k passes the shifted semidefiniteness test."""
    if not 0 <= k < sens.n_pixels:
        raise InvalidArgumentError(f"pixel index {k} out of range 0..{sens.n_pixels - 1}")
    if diff.n_patches != sens.n_patches:
        raise InvalidArgumentError(
            f"data has {diff.n_patches} patches, sensitivities have {sens.n_patches}"
        )
    test = (
        0.5 * (diff.matrix + diff.matrix.T)
        + diff.delta * np.eye(diff.n_patches)
        - weights.alpha_lam * sens.vol[k]
        - weights.alpha_mu * sens.shear[k]
    )
    return is_psd(test)


def run_montest(sens: SensitivitySet, diff: DifferenceData, weights: TestWeights) -> np.ndarray:
    """Evaluate the membership test on every pixel, returning a bool mask."""
    return np.array(
        [linearized_test(k, weights, diff, sens) for k in range(sens.n_pixels)], dtype=bool
    )
