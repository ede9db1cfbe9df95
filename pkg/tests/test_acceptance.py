"""Acceptance suite: the ten headline guarantees on the reference problem.

Each test prints one ``[criterion N] PASS/FAIL`` line with the measured
quantities before asserting, so a plain ``pytest tests/test_acceptance.py -s``
gives a complete scoreboard.  The reference (desk) problem is the default
configuration: unit cube, 12x12x12 mesh, 6x6x6 pixels, 20 patches, two
stiff inclusion boxes.
"""

import numpy as np
import pytest

from conftest import chebyshev_distance_to_truth
from test_monotonicity import contrast_energy
from test_monreg import bisection_beta, grid_search_objective, toy_instance

from elastinv.fem import assemble_stiffness, element_geometry, solve_forward, strain_fields
from elastinv.monreg import (
    ContrastBounds,
    build_constraints,
    compute_amax_tau,
    compute_beta,
    reconstruct,
    solve_box_constrained,
)
from elastinv.montest import TestWeights, run_montest
from elastinv.pipeline import make_difference, run_noise_sweep


def report(number: int, ok: bool, detail: str) -> None:
    line = f"[criterion {number}] {'PASS' if ok else 'FAIL'} {detail}"
    print(line, flush=True)
    assert ok, line


@pytest.fixture(scope="module")
def desk_inclusion_solution(desk_setup):
    return solve_forward(desk_setup.mesh, desk_setup.inclusion_field, desk_setup.patches)


def count_components(partition, flags) -> int:
    """Number of 6-connected components of a boolean pixel set."""
    flagged = {tuple(partition.pixel_grid[k]) for k in np.flatnonzero(flags)}
    seen, components = set(), 0
    for start in flagged:
        if start in seen:
            continue
        components += 1
        stack = [start]
        seen.add(start)
        while stack:
            x, y, z = stack.pop()
            for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                nb = (x + dx, y + dy, z + dz)
                if nb in flagged and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return components


def test_criterion_01_forward_model_accuracy(desk_setup, desk_inclusion_solution):
    recip0 = desk_setup.ntd_background.symmetry_defect()
    recip1 = desk_setup.ntd_inclusion.symmetry_defect()
    worst_energy = 0.0
    for field, sol in (
        (desk_setup.background_field, desk_setup.background_solution),
        (desk_setup.inclusion_field, desk_inclusion_solution),
    ):
        stiffness = assemble_stiffness(desk_setup.mesh, field)
        for k in range(desk_setup.patches.n_patches):
            u = sol.displacements[k].ravel()
            work = float(sol.loads[k].ravel() @ u)
            energy = float(u @ (stiffness @ u))
            worst_energy = max(worst_energy, abs(energy - work) / abs(work))
    elapsed = desk_setup.elapsed_forward
    ok = recip0 < 1e-10 and recip1 < 1e-10 and worst_energy <= 1e-8 and elapsed < 120.0
    report(
        1,
        ok,
        f"reciprocity {recip0:.2e}/{recip1:.2e} (<1e-10), "
        f"energy identity {worst_energy:.2e} (<=1e-8), forward {elapsed:.1f}s (<120s)",
    )


def test_criterion_02_monotonicity_ordering(desk_setup, desk_exact, desk_inclusion_solution):
    v = 0.5 * (desk_exact.matrix + desk_exact.matrix.T)
    eigs = np.linalg.eigvalsh(v)
    spectral = max(abs(eigs[0]), abs(eigs[-1]))
    psd_ok = eigs[0] >= -1e-10 * spectral

    geom = element_geometry(desk_setup.mesh)
    dlam = desk_setup.inclusion_field.lam - desk_setup.background_field.lam
    dmu = desk_setup.inclusion_field.mu - desk_setup.background_field.mu
    u_bg = desk_setup.background_solution.displacements
    u_inc = desk_inclusion_solution.displacements
    rng = np.random.default_rng(41)
    m = desk_setup.patches.n_patches
    combos = [np.eye(m)[l] for l in range(m)] + [rng.normal(size=m) for _ in range(5)]
    worst = -np.inf
    for c in combos:
        mid = float(c @ desk_exact.matrix @ c)
        div0, sym0 = strain_fields(geom, np.tensordot(c, u_bg, axes=(0, 0)))
        div1, sym1 = strain_fields(geom, np.tensordot(c, u_inc, axes=(0, 0)))
        upper = contrast_energy(geom, dlam, dmu, div0, sym0)
        lower = contrast_energy(geom, dlam, dmu, div1, sym1)
        scale = max(abs(upper), abs(lower), abs(mid))
        worst = max(worst, (lower - mid) / scale, (mid - upper) / scale)
    sandwich_ok = worst <= 1e-8
    report(
        2,
        psd_ok and sandwich_ok,
        f"min eig {eigs[0]:.2e} vs floor {-1e-10 * spectral:.2e}, "
        f"sandwich violation {worst:.2e} (<=1e-8)",
    )


def test_criterion_03_constraint_formulas():
    stiffer = ContrastBounds(
        lam_lo=1.2e6, lam_hi=1.7e6, mu_lo=1.2e4, mu_hi=1.7e4, sign_case="stiffer"
    )
    a_max, tau = compute_amax_tau(6.6211e5, 6.6892e3, stiffer)
    inc_ok = abs(a_max - 4.295e3) / 4.295e3 <= 1e-3 and abs(tau - 99.35) / 99.35 <= 1e-3

    softer = ContrastBounds(
        lam_lo=1.2e6, lam_hi=1.7e6, mu_lo=1.2e4, mu_hi=1.7e4, sign_case="softer"
    )
    a_dec, tau_dec = compute_amax_tau(2.3177e6, 2.3411e4, softer)
    dec_ok = a_dec == 1.2e4 and tau_dec == 100.0
    report(
        3,
        inc_ok and dec_ok,
        f"increase a_max {a_max:.6g} (~4.295e3), tau {tau:.6g} (~99.35); "
        f"decrease a_max {a_dec:g} (=1.2e4), tau {tau_dec:g} (=100) exact",
    )


def test_criterion_04_cap_oracle_equivalence():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(2, 9))
        a = rng.normal(size=(m, m))
        envelope = a @ a.T + 0.05 * np.eye(m)
        b = rng.normal(size=(m, m))
        s_k = (b @ b.T) * 10.0 ** rng.uniform(-3, 3)
        beta = compute_beta(s_k, np.linalg.cholesky(envelope))
        oracle = bisection_beta(envelope, s_k)
        worst = max(worst, abs(beta - oracle) / oracle)
    report(4, worst <= 1e-8, f"max relative gap to bisection oracle {worst:.2e} (<=1e-8) over 50 instances")


def test_criterion_05_qp_oracle_equivalence():
    worst = 0.0
    for seed in (101, 102, 103, 104, 105):
        s_tau, diff, cons = toy_instance(seed)
        _, info = solve_box_constrained(s_tau, diff, cons, tol=1e-12)
        grid = grid_search_objective(s_tau, diff, cons.caps, step=1e-3 * cons.a_max)
        scale = max(abs(grid), float(diff.flatten() @ diff.flatten()))
        worst = max(worst, abs(info["objective"] - grid) / scale)
    report(5, worst <= 1e-6, f"max relative objective gap to grid search {worst:.2e} (<=1e-6) over 5 instances")


def test_criterion_06_exact_support_recovery(desk_setup, desk_exact, desk_config):
    lam0, mu0 = desk_config.material.lam0, desk_config.material.mu0
    result = reconstruct(desk_setup.sens, desk_exact, desk_config.to_bounds(), lam0, mu0)
    a_max = result.constraints.a_max
    inside = desk_setup.truth_mask
    outside = chebyshev_distance_to_truth(desk_setup.partition, inside) >= 2
    min_inside = float(result.nu[inside].min())
    max_outside = float(result.nu[outside].max())
    kappa_ok = np.array_equal(result.kappa, result.constraints.tau * result.nu) and np.all(
        result.kappa[inside] > 0
    )
    ok = min_inside >= 0.99 * a_max and max_outside <= 1e-3 * a_max and kappa_ok
    report(
        6,
        ok,
        f"inside min nu {min_inside / a_max:.4f}*a_max (>=0.99), "
        f"outside max nu {max_outside / a_max:.2e}*a_max (<=1e-3), "
        f"volumetric map nonzero on all {int(inside.sum())} inclusion pixels: {kappa_ok}",
    )


def test_criterion_07_noise_stability(desk_setup, desk_config):
    rows = run_noise_sweep(desk_config, out_dir=None, setup=desk_setup)
    by_eta = {row["eta"]: row for row in rows}
    counts_down = [by_eta[eta]["monreg_misclassified"] for eta in (0.1, 0.01, 0.001, 0.0)]
    monotone = all(a >= b for a, b in zip(counts_down, counts_down[1:]))
    at_top = by_eta[0.1]
    beats = at_top["monreg_misclassified"] <= at_top["onestep_misclassified"]
    report(
        7,
        monotone and beats,
        f"misclassified {counts_down} for eta 0.1->0 (non-increasing), "
        f"at eta=0.1 monreg {at_top['monreg_misclassified']} <= onestep {at_top['onestep_misclassified']}",
    )


def test_criterion_08_noise_shift_monotonicity(desk_setup, desk_config, desk_exact):
    lam0, mu0 = desk_config.material.lam0, desk_config.material.mu0
    bounds = desk_config.to_bounds()
    noisy = make_difference(desk_setup, eta=0.01)
    cons_exact, _ = build_constraints(desk_setup.sens, desk_exact, bounds, lam0, mu0)
    cons_noisy, _ = build_constraints(desk_setup.sens, noisy, bounds, lam0, mu0)
    margin = cons_noisy.beta * (1.0 + 1e-12) - cons_exact.beta
    worst = float(margin.min())
    report(
        8,
        worst >= 0.0,
        f"exact-data caps never exceed shifted noisy caps at eta=1%: "
        f"min margin {worst:.3e} Pa over {len(margin)} pixels (slack 1e-12)",
    )


def test_criterion_09_sensitivity_imbalance(desk_setup):
    shear_norm = float(np.linalg.norm(desk_setup.sens.shear_columns(), 2))
    vol_norm = float(np.linalg.norm(desk_setup.sens.vol_columns(), 2))
    ratio = shear_norm / vol_norm
    report(9, ratio > 1e3, f"spectral norm ratio shear/volumetric {ratio:.1f} (needs >1e3)")


def test_criterion_10_membership_test(desk_setup, desk_config, desk_exact):
    lam0, mu0 = desk_config.material.lam0, desk_config.material.mu0
    inside = desk_setup.truth_mask
    admissible = TestWeights.admissible(lam0, mu0, 2.3177e6, 2.3411e4, scale=1.0)
    exact_flags = run_montest(desk_setup.sens, desk_exact, admissible)
    exact_ok = bool(np.all(exact_flags[inside]))

    scaled = TestWeights(
        alpha_lam=0.28 * (2.3177e6 - lam0), alpha_mu=0.28 * (2.3411e4 - mu0)
    )
    noisy = make_difference(desk_setup, eta=0.001)
    noisy_flags = run_montest(desk_setup.sens, noisy, scaled)
    noisy_ok = bool(np.all(noisy_flags[inside]))
    components = count_components(desk_setup.partition, noisy_flags)
    report(
        10,
        exact_ok and noisy_ok and components == 1,
        f"exact data: {int(exact_flags.sum())} flagged covers all {int(inside.sum())} "
        f"inclusion pixels: {exact_ok}; scaled weights at eta=0.1%: "
        f"{int(noisy_flags.sum())} flagged, covers inclusions: {noisy_ok}, "
        f"{components} connected component(s)",
    )
