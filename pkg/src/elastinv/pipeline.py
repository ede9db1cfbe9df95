"""End-to-end drivers: forward synthesis, reconstructions, noise sweeps.

Each driver takes a RunConfig, runs the pipeline stages with stage-labeled
error propagation, optionally writes artifacts into an output directory
(measurement CSVs, voxel maps, constraint tables, metadata, config echo,
optional VTK dumps), and returns its results for programmatic use.
"""

from __future__ import annotations

import dataclasses
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import io
from .config import RunConfig, echo_config
from .data import (
    DifferenceData,
    InclusionGeometry,
    add_noise,
    difference_data,
    noisy_difference,
    synthesize_field,
)
from .errors import InvalidArgumentError, NumericalFailureError
from .fem import ForwardSolution, LameField, NtDMatrix, ntd_from_solution, solve_forward
from .mesh import BoxMesh, PatchSet, PixelPartition, build_box_mesh, build_patch_set, build_pixel_partition
from .monreg import ReconstructionResult, build_constraints, reconstruct
from .montest import TestWeights, run_montest
from .onestep import OneStepResult, onestep_reconstruct
from .sensitivity import SensitivitySet, compute_sensitivities, sensitivity_key

NOISE_SWEEP_ETAS = (0.0, 0.001, 0.01, 0.1)


@contextmanager
def _stage(name: str):
    """Label errors with the pipeline stage they came from, once."""
    try:
        yield
    except (InvalidArgumentError, NumericalFailureError) as exc:
        if not getattr(exc, "_staged", False):
            exc._staged = True
            exc.args = (f"stage {name}: {exc.args[0]}",) + exc.args[1:]
        raise


@dataclass
class ProblemSetup:
    """Everything the reconstruction methods share for one configuration."""

    config: RunConfig
    mesh: BoxMesh
    partition: PixelPartition
    patches: PatchSet
    inclusion: InclusionGeometry
    truth_mask: np.ndarray
    background_field: LameField
    inclusion_field: LameField
    background_solution: ForwardSolution
    ntd_background: NtDMatrix
    ntd_inclusion: NtDMatrix
    sens: SensitivitySet
    elapsed_forward: float


def build_problem(config: RunConfig) -> ProblemSetup:
    """Mesh, solve both forward problems, and assemble sensitivities."""
    with _stage("mesh"):
        mesh = build_box_mesh(config.mesh.origin, config.mesh.extents, config.mesh.resolution)
        partition = build_pixel_partition(mesh, config.mesh.pixels)
        patches = build_patch_set(
            mesh, config.patches.per_side, dirichlet_face=config.patches.dirichlet_face
        )
    with _stage("phantom"):
        inclusion = config.to_inclusion_geometry()
        inclusion.validate(mesh)
        truth_mask = inclusion.pixel_mask(partition)
        if not inclusion.complement_connected(partition):
            raise InvalidArgumentError("pixels outside the inclusions must form one connected region")
        lam0, mu0 = config.material.lam0, config.material.mu0
        background_field = LameField.uniform(mesh, lam0, mu0)
        inclusion_field = synthesize_field((lam0, mu0), inclusion, mesh, partition)
    with _stage("forward"):
        t0 = time.perf_counter()
        sol0 = solve_forward(
            mesh,
            background_field,
            patches,
            tol=config.solver.tol,
            prefer_direct=config.solver.prefer_direct,
        )
        sol1 = solve_forward(
            mesh,
            inclusion_field,
            patches,
            tol=config.solver.tol,
            prefer_direct=config.solver.prefer_direct,
        )
        elapsed = time.perf_counter() - t0
        ntd0 = ntd_from_solution(sol0)
        ntd1 = ntd_from_solution(sol1)
    with _stage("sensitivity"):
        sens = compute_sensitivities(
            mesh,
            partition,
            sol0,
            key=sensitivity_key(mesh, partition, patches, lam0, mu0),
        )
    return ProblemSetup(
        config=config,
        mesh=mesh,
        partition=partition,
        patches=patches,
        inclusion=inclusion,
        truth_mask=truth_mask,
        background_field=background_field,
        inclusion_field=inclusion_field,
        background_solution=sol0,
        ntd_background=ntd0,
        ntd_inclusion=ntd1,
        sens=sens,
        elapsed_forward=elapsed,
    )


def make_difference(setup: ProblemSetup, eta: float | None = None, seed: int | None = None) -> DifferenceData:
    """Difference data for the configured (or overridden) noise level."""
    cfg = setup.config.noise
    eta = cfg.eta if eta is None else eta
    seed = cfg.seed if seed is None else seed
    with _stage("data"):
        if eta == 0.0:
            return difference_data(setup.ntd_background, setup.ntd_inclusion)
        return noisy_difference(setup.ntd_background, setup.ntd_inclusion, eta, seed)


def _base_metadata(setup: ProblemSetup, diff: DifferenceData | None = None) -> dict:
    from . import __version__

    meta = {
        "package_version": __version__,
        "mesh_hash": setup.mesh.content_hash(),
        "partition_hash": setup.partition.content_hash(),
        "patches_hash": setup.patches.content_hash(),
        "n_patches": setup.patches.n_patches,
        "n_pixels": setup.partition.n_pixels,
        "solver_background": setup.background_solution.info.as_dict(),
        "solver_inclusion": setup.ntd_inclusion.metadata.get("solver"),
        "forward_seconds": setup.elapsed_forward,
    }
    if diff is not None:
        meta["noise"] = {"eta": diff.eta, "seed": diff.seed, "delta": diff.delta}
    return meta


def _prepare_out(config: RunConfig, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    echo_config(config, os.path.join(out_dir, "config_echo.toml"))
    return out_dir


def _maybe_vtk(setup: ProblemSetup, out_dir, name: str, pixel_fields: dict) -> None:
    if not setup.config.output.emit_vtk:
        return
    cell_data = {
        key: io.pixel_field_to_cells(setup.partition, values)
        for key, values in pixel_fields.items()
    }
    io.write_vtk(os.path.join(out_dir, name), setup.mesh, cell_data)


def run_forward(config: RunConfig, out_dir=None, setup: ProblemSetup | None = None):
    """Synthesize measurements; write matrices, noise scalar, and metadata."""
    if setup is None:
        setup = build_problem(config)
    noisy_entries, delta = None, 0.0
    if config.noise.eta > 0:
        with _stage("data"):
            noisy_entries, delta = add_noise(setup.ntd_inclusion, config.noise.eta, config.noise.seed)
    if out_dir is not None:
        out_dir = _prepare_out(config, out_dir)
        io.write_matrix_csv(os.path.join(out_dir, "Lambda0.csv"), setup.ntd_background.entries)
        io.write_matrix_csv(os.path.join(out_dir, "Lambda.csv"), setup.ntd_inclusion.entries)
        io.write_matrix_csv(
            os.path.join(out_dir, "Lambda_delta.csv"),
            setup.ntd_inclusion.entries if noisy_entries is None else noisy_entries,
        )
        io.write_scalar(os.path.join(out_dir, "delta.txt"), delta)
        meta = _base_metadata(setup)
        meta["noise"] = {"eta": config.noise.eta, "seed": config.noise.seed, "delta": delta}
        io.write_metadata(os.path.join(out_dir, "metadata.json"), meta)
        if config.output.emit_vtk:
            io.write_vtk(
                os.path.join(out_dir, "material.vtk"),
                setup.mesh,
                {
                    "lambda": setup.inclusion_field.lam,
                    "mu": setup.inclusion_field.mu,
                },
            )
    return setup, delta


def _write_voxels(setup: ProblemSetup, out_dir, nu, kappa, lam_map, mu_map) -> None:
    io.write_voxel_csv(
        os.path.join(out_dir, "voxels.csv"),
        setup.partition,
        nu,
        kappa,
        lam_map,
        mu_map,
        setup.truth_mask,
    )


def run_onestep_pipeline(
    config: RunConfig,
    out_dir=None,
    setup: ProblemSetup | None = None,
    diff: DifferenceData | None = None,
    omega: float | None = None,
    sigma: float | None = None,
) -> OneStepResult:
    """Damped linearized reconstruction from (possibly noisy) data."""
    if setup is None:
        setup = build_problem(config)
    if diff is None:
        diff = make_difference(setup)
    omega = config.onestep.omega if omega is None else omega
    sigma = config.onestep.sigma if sigma is None else sigma
    with _stage("onestep"):
        result = onestep_reconstruct(setup.sens, diff, omega, sigma)
    if out_dir is not None:
        out_dir = _prepare_out(config, out_dir)
        lam0, mu0 = config.material.lam0, config.material.mu0
        _write_voxels(setup, out_dir, result.nu, result.kappa, lam0 + result.kappa, mu0 + result.nu)
        meta = _base_metadata(setup, diff)
        meta["onestep"] = {
            "omega": result.omega,
            "sigma": result.sigma,
            "residual_norm": result.residual_norm,
            "objective": result.objective,
            "gradient_norm": result.gradient_norm,
        }
        io.write_metadata(os.path.join(out_dir, "metadata.json"), meta)
        _maybe_vtk(setup, out_dir, "reconstruction.vtk", {"nu": result.nu, "kappa": result.kappa})
    return result


def run_monreg_pipeline(
    config: RunConfig,
    out_dir=None,
    setup: ProblemSetup | None = None,
    diff: DifferenceData | None = None,
    delta_override: float | None = None,
) -> ReconstructionResult:
    """Monotonicity-constrained reconstruction from (possibly noisy) data."""
    if setup is None:
        setup = build_problem(config)
    if diff is None:
        diff = make_difference(setup)
    if delta_override is not None:
        if delta_override < 0:
            raise InvalidArgumentError(f"delta override must be >= 0, got {delta_override}")
        diff = dataclasses.replace(diff, delta=float(delta_override))
    lam0, mu0 = config.material.lam0, config.material.mu0
    with _stage("monreg"):
        result = reconstruct(
            setup.sens,
            diff,
            config.to_bounds(),
            lam0,
            mu0,
            tol=config.monreg.tol,
            max_iter=config.monreg.max_iter,
        )
    if out_dir is not None:
        out_dir = _prepare_out(config, out_dir)
        _write_voxels(setup, out_dir, result.nu, result.kappa, result.lam_map, result.mu_map)
        io.write_constraints_csv(
            os.path.join(out_dir, "constraints.csv"),
            result.constraints.beta,
            result.constraints.caps,
        )
        meta = _base_metadata(setup, diff)
        meta["monreg"] = {
            "a_max": result.constraints.a_max,
            "tau": result.constraints.tau,
            "delta": result.constraints.delta,
            "sign_case": result.constraints.sign_case,
            "residual_fro": result.residual_fro,
            "iterations": result.iterations,
            "kkt_measure": result.kkt_measure,
        }
        io.write_metadata(os.path.join(out_dir, "metadata.json"), meta)
        _maybe_vtk(setup, out_dir, "reconstruction.vtk", {"nu": result.nu, "kappa": result.kappa})
    return result


def run_montest_pipeline(
    config: RunConfig,
    out_dir=None,
    setup: ProblemSetup | None = None,
    diff: DifferenceData | None = None,
    alpha_lam: float | None = None,
    alpha_mu: float | None = None,
    delta_override: float | None = None,
) -> np.ndarray:
    """Linearized membership test over all pixels."""
    if setup is None:
        setup = build_problem(config)
    if diff is None:
        diff = make_difference(setup)
    if delta_override is not None:
        if delta_override < 0:
            raise InvalidArgumentError(f"delta override must be >= 0, got {delta_override}")
        diff = dataclasses.replace(diff, delta=float(delta_override))
    if alpha_lam is None or alpha_mu is None:
        cfg_lam, cfg_mu = config.montest_weights()
        alpha_lam = cfg_lam if alpha_lam is None else alpha_lam
        alpha_mu = cfg_mu if alpha_mu is None else alpha_mu
    weights = TestWeights(alpha_lam=alpha_lam, alpha_mu=alpha_mu)
    with _stage("montest"):
        flags = run_montest(setup.sens, diff, weights)
    if out_dir is not None:
        out_dir = _prepare_out(config, out_dir)
        io.write_flags_csv(os.path.join(out_dir, "montest_map.csv"), setup.partition, flags)
        # The common voxel map carries the test weights masked by the flags,
        # so all three methods share one downstream format.
        lam0, mu0 = config.material.lam0, config.material.mu0
        nu = np.where(flags, weights.alpha_mu, 0.0)
        kappa = np.where(flags, weights.alpha_lam, 0.0)
        _write_voxels(setup, out_dir, nu, kappa, lam0 + kappa, mu0 + nu)
        meta = _base_metadata(setup, diff)
        meta["montest"] = {
            "alpha_lam": weights.alpha_lam,
            "alpha_mu": weights.alpha_mu,
            "delta": diff.delta,
            "n_flagged": int(flags.sum()),
        }
        io.write_metadata(os.path.join(out_dir, "metadata.json"), meta)
        _maybe_vtk(setup, out_dir, "montest.vtk", {"flag": flags.astype(float)})
    return flags


def misclassified_count(nu: np.ndarray, truth_mask: np.ndarray, threshold: float) -> int:
    """Pixels whose thresholded contrast disagrees with the truth."""
    detected = np.abs(np.asarray(nu)) >= threshold
    return int(np.sum(detected != np.asarray(truth_mask, dtype=bool)))


def run_noise_sweep(config: RunConfig, out_dir=None, setup: ProblemSetup | None = None) -> list[dict]:
    """Run both reconstructions over the fixed noise ladder, one seed.

    Returns one summary row per noise fraction with the misclassified
    pixel counts of each method at the common threshold a_max / 2.
    """
    if setup is None:
        setup = build_problem(config)
    lam0, mu0 = config.material.lam0, config.material.mu0
    constraints_probe, _ = build_constraints(
        setup.sens, make_difference(setup, eta=0.0), config.to_bounds(), lam0, mu0
    )
    threshold = constraints_probe.a_max / 2.0
    rows = []
    for eta in NOISE_SWEEP_ETAS:
        diff = make_difference(setup, eta=eta, seed=config.noise.seed)
        sub_dir = None
        if out_dir is not None:
            sub_dir = os.path.join(out_dir, f"eta_{eta:g}")
            os.makedirs(sub_dir, exist_ok=True)
        mon = run_monreg_pipeline(
            config,
            out_dir=None if sub_dir is None else os.path.join(sub_dir, "monreg"),
            setup=setup,
            diff=diff,
        )
        one = run_onestep_pipeline(
            config,
            out_dir=None if sub_dir is None else os.path.join(sub_dir, "onestep"),
            setup=setup,
            diff=diff,
        )
        rows.append(
            {
                "eta": eta,
                "delta": diff.delta,
                "threshold": threshold,
                "monreg_misclassified": misclassified_count(mon.nu, setup.truth_mask, threshold),
                "onestep_misclassified": misclassified_count(one.nu, setup.truth_mask, threshold),
            }
        )
    if out_dir is not None:
        out_dir = _prepare_out(config, out_dir)
        with open(os.path.join(out_dir, "sweep_summary.csv"), "w") as fh:
            fh.write("eta,delta,threshold,monreg_misclassified,onestep_misclassified\n")
            for row in rows:
                fh.write(
                    f"{row['eta']:g},{row['delta']!r},{row['threshold']!r},"
                    f"{row['monreg_misclassified']},{row['onestep_misclassified']}\n"
                )
        io.write_metadata(
            os.path.join(out_dir, "metadata.json"),
            {**_base_metadata(setup), "sweep": rows},
        )
    return rows
