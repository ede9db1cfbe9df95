"""Shape reconstruction of elastic inclusions from boundary measurements.

The package synthesizes boundary force-displacement data for a clamped
elastic block with stiff (or soft) inclusions and reconstructs the
inclusion shape from the measurement difference by three methods: a
damped one-step linearization, a pixelwise monotonicity membership test,
and a monotonicity-constrained box reconstruction.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("elastinv")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .config import RunConfig, load_config
from .data import (
    DifferenceData,
    InclusionBox,
    InclusionGeometry,
    add_noise,
    difference_data,
    noisy_difference,
    symmetrized_abs,
    synthesize_field,
)
from .errors import InvalidArgumentError, NumericalFailureError
from .fem import (
    ForwardSolution,
    LameField,
    NtDMatrix,
    assemble_stiffness,
    compute_ntd,
    solve_displacement,
    solve_forward,
)
from .mesh import (
    BoxMesh,
    PatchSet,
    PixelPartition,
    build_box_mesh,
    build_patch_set,
    build_pixel_partition,
)
from .monreg import (
    ContrastBounds,
    MonRegConstraints,
    ReconstructionResult,
    compute_amax_tau,
    compute_beta,
    solve_box_constrained,
)
from .monreg import reconstruct as monreg_reconstruct
from .montest import TestWeights, linearized_test, run_montest
from .onestep import OneStepResult, onestep_reconstruct
from .pipeline import (
    ProblemSetup,
    build_problem,
    make_difference,
    run_forward,
    run_monreg_pipeline,
    run_montest_pipeline,
    run_noise_sweep,
    run_onestep_pipeline,
)
from .sensitivity import SensitivitySet, combine_tau, compute_sensitivities

__all__ = [
    "BoxMesh",
    "ContrastBounds",
    "DifferenceData",
    "ForwardSolution",
    "InclusionBox",
    "InclusionGeometry",
    "InvalidArgumentError",
    "LameField",
    "MonRegConstraints",
    "NtDMatrix",
    "NumericalFailureError",
    "OneStepResult",
    "PatchSet",
    "PixelPartition",
    "ProblemSetup",
    "ReconstructionResult",
    "RunConfig",
    "SensitivitySet",
    "TestWeights",
    "add_noise",
    "assemble_stiffness",
    "build_box_mesh",
    "build_patch_set",
    "build_pixel_partition",
    "build_problem",
    "combine_tau",
    "compute_amax_tau",
    "compute_beta",
    "compute_ntd",
    "compute_sensitivities",
    "difference_data",
    "linearized_test",
    "load_config",
    "make_difference",
    "monreg_reconstruct",
    "noisy_difference",
    "onestep_reconstruct",
    "run_forward",
    "run_monreg_pipeline",
    "run_montest_pipeline",
    "run_noise_sweep",
    "run_onestep_pipeline",
    "run_montest",
    "solve_box_constrained",
    "solve_displacement",
    "solve_forward",
    "symmetrized_abs",
    "synthesize_field",
]
