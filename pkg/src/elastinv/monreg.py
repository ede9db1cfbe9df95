"""Monotonicity-constrained reconstruction of inclusion contrasts.

The reconstruction seeks one nonnegative contrast value per pixel (shear
contrast nu, volumetric contrast kappa = tau * nu) such that the
linearized response matches the measured difference matrix, subject to
box constraints derived from monotonicity of the measurement map:

* a_max caps the contrast so the linearized comparison stays on the safe
  side of the true nonlinear change for any admissible inclusion;
* tau couples the volumetric contrast to the shear contrast so one scalar
  unknown per pixel suffices;
* beta_k caps the contrast on pixel k by the largest value whose scaled
  sensitivity stays dominated by the noisy data in the semidefinite
  order.  Pixels outside the inclusion get tiny caps, which is what
  localizes the reconstruction.

Softer-than-background inclusions are handled by the sign-mirrored
problem: negate the data and the contrast, reuse the same caps.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg

from .data import DifferenceData, symmetrized_abs
from .errors import InvalidArgumentError, NumericalFailureError
from .sensitivity import SensitivitySet, combine_tau

SIGN_CASES = ("stiffer", "softer")


@dataclass
class ContrastBounds:
    """A priori bounds on the inclusion contrasts.

    The true contrasts are assumed to satisfy
    ``lam_lo <= |lam contrast| <= lam_hi`` and likewise for mu, with the
    sign fixed by sign_case: "stiffer" inclusions add to the background,
    "softer" ones subtract.
    """

    lam_lo: float
    lam_hi: float
    mu_lo: float
    mu_hi: float
    sign_case: str = "stiffer"

    def __post_init__(self):
        if not (0 < self.lam_lo <= self.lam_hi):
            raise InvalidArgumentError(
                f"need 0 < lam_lo <= lam_hi, got ({self.lam_lo}, {self.lam_hi})"
            )
        if not (0 < self.mu_lo <= self.mu_hi):
            raise InvalidArgumentError(
                f"need 0 < mu_lo <= mu_hi, got ({self.mu_lo}, {self.mu_hi})"
            )
        if self.sign_case not in SIGN_CASES:
            raise InvalidArgumentError(
                f"sign_case must be one of {SIGN_CASES}, got {self.sign_case!r}"
            )


def compute_amax_tau(lam0: float, mu0: float, bounds: ContrastBounds) -> tuple[float, float]:
    """Largest safe contrast step a_max and the volumetric coupling tau.

    For stiffer inclusions the caps come from comparing the background
    against the smallest admissible contrast:

        a_max = mu0 - mu0^2 / (mu0 + mu_lo)
        tau   = (lam0 - lam0^2 / (lam0 + lam_lo)) / a_max

    For softer inclusions the mirrored argument gives simply

        a_max = mu_lo,  tau = lam_lo / mu_lo.
    """
    if lam0 <= 0 or mu0 <= 0:
        raise InvalidArgumentError(f"background parameters must be positive, got ({lam0}, {mu0})")
    if bounds.sign_case == "stiffer":
        a_max = mu0 - mu0**2 / (mu0 + bounds.mu_lo)
        tau = (lam0 - lam0**2 / (lam0 + bounds.lam_lo)) / a_max
    else:
        if bounds.mu_hi >= mu0 or bounds.lam_hi >= lam0:
            raise InvalidArgumentError(
                "softer-case contrast bounds must stay below the background "
                f"(lam0={lam0}, mu0={mu0}, lam_hi={bounds.lam_hi}, mu_hi={bounds.mu_hi})"
            )
        a_max = bounds.mu_lo
        tau = bounds.lam_lo / bounds.mu_lo
    return float(a_max), float(tau)


def compute_beta(s_tau_k: np.ndarray, chol_lower: np.ndarray) -> float:
    """Largest a >= 0 with ``a * S_k`` dominated by the shifted data envelope.

    The envelope is ``delta I + |V|`` given through its Cholesky factor L.
    The cap equals the reciprocal of the top eigenvalue of the congruence
    ``L^-1 S_k L^-T``; it is infinite when that matrix has no positive
    eigenvalue (only possible for vanishing sensitivity).
    """
    half = scipy.linalg.solve_triangular(chol_lower, s_tau_k, lower=True)
    congruence = scipy.linalg.solve_triangular(chol_lower, half.T, lower=True).T
    congruence = 0.5 * (congruence + congruence.T)
    eigvals = np.linalg.eigvalsh(congruence)
    if not np.all(np.isfinite(eigvals)):
        raise NumericalFailureError("non-finite eigenvalues in contrast cap computation")
    top = eigvals[-1]
    if top <= 0.0:
        return np.inf
    return float(1.0 / top)


@dataclass
class MonRegConstraints:
    """Everything defining the feasible box of the reconstruction."""

    a_max: float
    tau: float
    delta: float
    beta: np.ndarray
    sign_case: str = "stiffer"

    @property
    def caps(self) -> np.ndarray:
        """Upper bounds min(a_max, beta_k) on the contrast magnitudes."""
        return np.minimum(self.a_max, self.beta)


def build_constraints(
    sens: SensitivitySet,
    diff: DifferenceData,
    bounds: ContrastBounds,
    lam0: float,
    mu0: float,
) -> tuple[MonRegConstraints, np.ndarray]:
    """Derive the feasible box from data, bounds, and sensitivities.

    Returns the constraints together with the combined per-pixel
    sensitivities shear + tau * vol used by the residual.
    """
    a_max, tau = compute_amax_tau(lam0, mu0, bounds)
    s_tau = combine_tau(sens, tau)
    _, chol = symmetrized_abs(diff.matrix, diff.delta)
    beta = np.array([compute_beta(s_tau[k], chol) for k in range(sens.n_pixels)])
    constraints = MonRegConstraints(
        a_max=a_max, tau=tau, delta=diff.delta, beta=beta, sign_case=bounds.sign_case
    )
    return constraints, s_tau


@dataclass
class ReconstructionResult:
    """Box-constrained reconstruction output.

    nu and kappa carry the sign of the case: nonnegative for stiffer
    inclusions, nonpositive for softer ones.  The maps are absolute
    per-pixel material values (background plus contrast).
    """

    nu: np.ndarray
    kappa: np.ndarray
    lam_map: np.ndarray
    mu_map: np.ndarray
    residual_fro: float
    iterations: int
    kkt_measure: float
    constraints: MonRegConstraints
    metadata: dict = dc_field(default_factory=dict)


def solve_box_constrained(
    s_tau: np.ndarray,
    diff: DifferenceData,
    constraints: MonRegConstraints,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> tuple[np.ndarray, dict]:
    """Minimize the Frobenius misfit over the constraint box.

    Minimizes ``|| sum_k nu_k S_k - V ||_F`` subject to
    ``0 <= nu_k <= caps_k`` (mirrored for the softer case).  The problem
    is a convex quadratic; it is solved by projected gradient iteration
    with Barzilai-Borwein step seeding and exact line search along each
    projected segment, which is monotone and needs no tuning.  Every few
    hundred iterations the tentative active set is refined by an exact
    solve on the free coordinates, which finishes the ill-conditioned
    endgame the gradient iteration is slow at.

    Returns
    -------
    (nu, info)
        nu as nonnegative contrast magnitudes; callers apply the sign of
        the case.  info reports the objective, iterations, and the
        stationarity measure: the inf-norm of the projected step of
        length 1/||G||, in contrast units, relative to the box scale.

    Raises
    ------
    NumericalFailureError
        When the iteration cap is reached before stationarity; the last
        iterate is attached as ``exc.last_nu``.
    """
    p = s_tau.shape[0]
    flat = s_tau.reshape(p, -1)
    v = diff.flatten()
    if constraints.sign_case == "softer":
        v = -v
    gram = flat @ flat.T
    gram = 0.5 * (gram + gram.T)
    b = flat @ v
    const = float(v @ v)
    caps = constraints.caps
    if np.any(~np.isfinite(caps)):
        # a_max is finite, so caps are; guard anyway.
        caps = np.minimum(caps, constraints.a_max)
    if np.any(caps < 0):
        raise InvalidArgumentError("negative contrast cap")

    # Per-pixel sensitivity norms vary over orders of magnitude, so the
    # iteration runs in diagonally scaled variables y = x / d.
    diag = np.sqrt(np.maximum(gram.diagonal(), 0.0))
    d_scale = np.where(diag > 0, diag, 1.0)
    gram_s = gram / np.outer(d_scale, d_scale)
    b_s = b / d_scale
    caps_s = caps * d_scale

    lipschitz = float(np.linalg.eigvalsh(gram_s)[-1])
    if lipschitz <= 0:
        # All sensitivities vanish; zero is optimal.
        return np.zeros(p), {"objective": const, "iterations": 0, "kkt_measure": 0.0}
    scale = max(float(np.max(caps_s)), 1e-300)

    def gradient(y):
        return 2.0 * (gram_s @ y - b_s)

    def stationarity(y, g):
        return float(np.max(np.abs(y - np.clip(y - g / (2.0 * lipschitz), 0.0, caps_s))))

    y = np.zeros(p)
    g = gradient(y)
    step = 1.0 / (2.0 * lipschitz)
    kkt = np.inf
    it = 0
    polish_every = 250
    for it in range(1, max_iter + 1):
        kkt = stationarity(y, g)
        if kkt <= tol * scale:
            break
        if it % polish_every == 0:
            # The active set is usually settled by now; an exact solve on
            # the free coordinates skips the slow tail of the iteration.
            y_pol = _polish_active_set(gram, b, caps, y / d_scale, tol) * d_scale
            g_pol = gradient(y_pol)
            kkt_pol = stationarity(y_pol, g_pol)
            if kkt_pol <= tol * scale:
                y, g, kkt = y_pol, g_pol, kkt_pol
                break
            if float(y_pol @ (gram_s @ y_pol) - 2.0 * b_s @ y_pol) < float(
                y @ (gram_s @ y) - 2.0 * b_s @ y
            ):
                y, g = y_pol, g_pol
        trial = np.clip(y - step * g, 0.0, caps_s)
        d = trial - y
        gd = float(g @ d)
        dgd = float(d @ (gram_s @ d))
        # Exact minimizing step along the projected segment, backtracked
        # into (0, 1]; the objective is quadratic so no further halving
        # can improve on it.
        if dgd <= 0:
            t = 1.0
        else:
            t = min(1.0, -gd / (2.0 * dgd))
            if t <= 0:
                t = 1.0
        y_new = y + t * d
        g_new = gradient(y_new)
        s = y_new - y
        dy = g_new - g
        sdy = float(s @ dy)
        if sdy > 0:
            step = float(s @ s) / sdy
            step = min(max(step, 1e-8 / lipschitz), 1e8 / lipschitz)
        y, g = y_new, g_new
    else:
        exc = NumericalFailureError(
            f"box-constrained solve did not reach stationarity in {max_iter} iterations "
            f"(measure {kkt / scale:.3e}, tol {tol:.1e})"
        )
        exc.last_nu = y / d_scale
        raise exc

    x = y / d_scale
    polished = _polish_active_set(gram, b, caps, x, tol)
    y_pol = polished * d_scale
    kkt_pol = stationarity(y_pol, gradient(y_pol))
    if kkt_pol <= tol * scale:
        x = polished
        kkt = kkt_pol
    obj = float(x @ (gram @ x) - 2.0 * b @ x + const)
    info = {"objective": obj, "iterations": it, "kkt_measure": kkt / scale}
    return x, info


def _polish_active_set(gram, b, caps, x, tol, rounds: int = 40):
    """Refine a near-optimal box-QP iterate by exact free-subspace solves.

    Coordinates pinned at a bound with the right gradient sign stay fixed;
    the rest are solved exactly by least squares on the reduced system.
    Keeps the best feasible iterate, so the result never gets worse.
    """
    p = len(x)
    grad_scale = np.sqrt(np.maximum(gram.diagonal(), 1e-300))

    def objective(z):
        return float(z @ (gram @ z) - 2.0 * b @ z)

    best = np.clip(x, 0.0, caps)
    best_obj = objective(best)
    snap = np.maximum(caps * 1e-12, 1e-300)
    for _ in range(rounds):
        g = 2.0 * (gram @ best - b)
        at_lo = (best <= snap) & (g >= 0)
        at_hi = (best >= caps - snap) & (g <= 0)
        free = ~(at_lo | at_hi)
        trial = np.where(at_hi, caps, 0.0)
        if free.any():
            rhs = b - gram[:, ~free] @ trial[~free]
            sol, *_ = np.linalg.lstsq(gram[np.ix_(free, free)], rhs[free], rcond=None)
            trial[free] = sol
        trial = np.clip(trial, 0.0, caps)
        trial_obj = objective(trial)
        if trial_obj < best_obj - 1e-30:
            best, best_obj = trial, trial_obj
        else:
            break
    return best


def reconstruct(
    sens: SensitivitySet,
    diff: DifferenceData,
    bounds: ContrastBounds,
    lam0: float,
    mu0: float,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> ReconstructionResult:
    """Full monotonicity-constrained reconstruction from difference data."""
    constraints, s_tau = build_constraints(sens, diff, bounds, lam0, mu0)
    w, info = solve_box_constrained(s_tau, diff, constraints, tol=tol, max_iter=max_iter)
    sign = 1.0 if bounds.sign_case == "stiffer" else -1.0
    nu = sign * w
    kappa = constraints.tau * nu
    return ReconstructionResult(
        nu=nu,
        kappa=kappa,
        lam_map=lam0 + kappa,
        mu_map=mu0 + nu,
        residual_fro=float(np.sqrt(max(info["objective"], 0.0))),
        iterations=info["iterations"],
        kkt_measure=info["kkt_measure"],
        constraints=constraints,
        metadata={"tol": tol, "max_iter": max_iter},
    )
