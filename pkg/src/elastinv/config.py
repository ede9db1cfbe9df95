"""Run configuration: a TOML file of grouped keys, plus CLI overrides.

All knobs of a run live in one structured file so experiments are
reproducible from a single artifact.  Every output directory receives an
echo of the resolved configuration; floats are written in their shortest
round-tripping form, so re-reading the echo reproduces the run bit for
bit.  Unknown groups or keys are rejected loudly rather than ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import toml

from .data import InclusionBox, InclusionGeometry
from .errors import InvalidArgumentError
from .monreg import ContrastBounds

# Desk-scale defaults: unit cube, breast-tissue background with two stiff
# tumour-like boxes, and the matching a priori contrast bounds.
_THIRD = 1.0 / 3.0
_SIXTH = 1.0 / 6.0


@dataclass
class MeshConfig:
    origin: tuple = (0.0, 0.0, 0.0)
    extents: tuple = (1.0, 1.0, 1.0)
    resolution: tuple = (12, 12, 12)
    pixels: tuple = (6, 6, 6)


@dataclass
class PatchConfig:
    per_side: int = 2
    dirichlet_face: str = "z-"


@dataclass
class MaterialConfig:
    lam0: float = 6.6211e5
    mu0: float = 6.6892e3


@dataclass
class InclusionBoxConfig:
    lo: tuple
    hi: tuple
    gamma_lam: float
    gamma_mu: float


@dataclass
class InclusionConfig:
    boxes: list = dc_field(
        default_factory=lambda: [
            InclusionBoxConfig(
                lo=(_SIXTH, _SIXTH, 2 * _SIXTH),
                hi=(3 * _SIXTH, 3 * _SIXTH, 4 * _SIXTH),
                gamma_lam=2.3177e6 - 6.6211e5,
                gamma_mu=2.3411e4 - 6.6892e3,
            ),
            InclusionBoxConfig(
                lo=(4 * _SIXTH, 4 * _SIXTH, 2 * _SIXTH),
                hi=(5 * _SIXTH, 5 * _SIXTH, 4 * _SIXTH),
                gamma_lam=2.3177e6 - 6.6211e5,
                gamma_mu=2.3411e4 - 6.6892e3,
            ),
        ]
    )


@dataclass
class BoundsConfig:
    lam_lo: float = 1.2e6
    lam_hi: float = 1.7e6
    mu_lo: float = 1.2e4
    mu_hi: float = 1.7e4
    sign_case: str = "stiffer"


@dataclass
class NoiseConfig:
    eta: float = 0.0
    seed: int = 20260810


@dataclass
class SolverConfig:
    tol: float = 1e-10
    prefer_direct: bool = True


@dataclass
class OneStepConfig:
    omega: float = 1e-17
    sigma: float = 1e-13


@dataclass
class MonTestConfig:
    # alpha values <= 0 mean "derive admissible weights from the material
    # and the smallest inclusion contrast, scaled by `scale`".
    alpha_lam: float = 0.0
    alpha_mu: float = 0.0
    scale: float = 0.28


@dataclass
class MonRegConfig:
    tol: float = 1e-10
    max_iter: int = 20000


@dataclass
class OutputConfig:
    dir: str = "out"
    emit_vtk: bool = False


@dataclass
class RunConfig:
    """Complete description of one synthetic experiment."""

    mesh: MeshConfig = dc_field(default_factory=MeshConfig)
    patches: PatchConfig = dc_field(default_factory=PatchConfig)
    material: MaterialConfig = dc_field(default_factory=MaterialConfig)
    inclusion: InclusionConfig = dc_field(default_factory=InclusionConfig)
    bounds: BoundsConfig = dc_field(default_factory=BoundsConfig)
    noise: NoiseConfig = dc_field(default_factory=NoiseConfig)
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    onestep: OneStepConfig = dc_field(default_factory=OneStepConfig)
    montest: MonTestConfig = dc_field(default_factory=MonTestConfig)
    monreg: MonRegConfig = dc_field(default_factory=MonRegConfig)
    output: OutputConfig = dc_field(default_factory=OutputConfig)

    def to_inclusion_geometry(self) -> InclusionGeometry:
        boxes = [
            InclusionBox(
                lo=np.asarray(b.lo, dtype=float),
                hi=np.asarray(b.hi, dtype=float),
                contrast_lam=b.gamma_lam,
                contrast_mu=b.gamma_mu,
            )
            for b in self.inclusion.boxes
        ]
        return InclusionGeometry(boxes=boxes)

    def to_bounds(self) -> ContrastBounds:
        b = self.bounds
        return ContrastBounds(
            lam_lo=b.lam_lo, lam_hi=b.lam_hi, mu_lo=b.mu_lo, mu_hi=b.mu_hi, sign_case=b.sign_case
        )

    def montest_weights(self) -> tuple[float, float]:
        """Resolve the membership test weights, deriving them if unset."""
        mt = self.montest
        if mt.alpha_lam > 0 and mt.alpha_mu > 0:
            return mt.alpha_lam, mt.alpha_mu
        if not self.inclusion.boxes:
            raise InvalidArgumentError(
                "montest weights cannot be derived without inclusion boxes; "
                "set montest.alpha_lam and montest.alpha_mu explicitly"
            )
        if self.bounds.sign_case != "stiffer":
            raise InvalidArgumentError(
                "the membership test is implemented for stiffer inclusions only"
            )
        lam0, mu0 = self.material.lam0, self.material.mu0
        glam = min(b.gamma_lam for b in self.inclusion.boxes)
        gmu = min(b.gamma_mu for b in self.inclusion.boxes)
        lam1, mu1 = lam0 + glam, mu0 + gmu
        alpha_lam = mt.scale * (lam0 / lam1) * (lam1 - lam0)
        alpha_mu = mt.scale * (mu0 / mu1) * (mu1 - mu0)
        return alpha_lam, alpha_mu

    def validate(self) -> None:
        """Cross-field checks that individual groups cannot do alone."""
        res = np.asarray(self.mesh.resolution)
        pix = np.asarray(self.mesh.pixels)
        if res.shape != (3,) or pix.shape != (3,):
            raise InvalidArgumentError("mesh.resolution and mesh.pixels must have 3 entries")
        if np.any(res < 1) or np.any(pix < 1):
            raise InvalidArgumentError("mesh.resolution and mesh.pixels must be >= 1")
        if np.any(res % pix != 0):
            raise InvalidArgumentError(
                f"mesh.pixels {tuple(pix)} must divide mesh.resolution {tuple(res)}"
            )
        bounds = self.to_bounds()  # runs its own validation
        sign = 1.0 if bounds.sign_case == "stiffer" else -1.0
        for i, b in enumerate(self.inclusion.boxes):
            for name, gamma, lo, hi in (
                ("gamma_lam", b.gamma_lam, bounds.lam_lo, bounds.lam_hi),
                ("gamma_mu", b.gamma_mu, bounds.mu_lo, bounds.mu_hi),
            ):
                if sign * gamma <= 0:
                    raise InvalidArgumentError(
                        f"inclusion box {i}: {name}={gamma} conflicts with "
                        f"bounds.sign_case={bounds.sign_case!r}"
                    )
                if not lo <= abs(gamma) <= hi:
                    raise InvalidArgumentError(
                        f"inclusion box {i}: |{name}|={abs(gamma)} outside the "
                        f"bounds [{lo}, {hi}]"
                    )
        if self.material.lam0 <= 0 or self.material.mu0 <= 0:
            raise InvalidArgumentError("material parameters must be positive")
        if self.noise.eta < 0:
            raise InvalidArgumentError(f"noise.eta must be >= 0, got {self.noise.eta}")
        if self.noise.seed < 0 or self.noise.seed > 2**64 - 1:
            raise InvalidArgumentError("noise.seed must fit in an unsigned 64-bit integer")


# (python type, toml key) schema per group; tuples hold element type + length.
_SCHEMA = {
    "mesh": {"origin": ("f3",), "extents": ("f3",), "resolution": ("i3",), "pixels": ("i3",)},
    "patches": {"per_side": ("int",), "dirichlet_face": ("str",)},
    "material": {"lam0": ("float",), "mu0": ("float",)},
    "inclusion": {"boxes": ("boxes",)},
    "bounds": {
        "lam_lo": ("float",),
        "lam_hi": ("float",),
        "mu_lo": ("float",),
        "mu_hi": ("float",),
        "sign_case": ("str",),
    },
    "noise": {"eta": ("float",), "seed": ("int",)},
    "solver": {"tol": ("float",), "prefer_direct": ("bool",)},
    "onestep": {"omega": ("float",), "sigma": ("float",)},
    "montest": {"alpha_lam": ("float",), "alpha_mu": ("float",), "scale": ("float",)},
    "monreg": {"tol": ("float",), "max_iter": ("int",)},
    "output": {"dir": ("str",), "emit_vtk": ("bool",)},
}

_BOX_SCHEMA = {"lo": "f3", "hi": "f3", "gamma_lam": "float", "gamma_mu": "float"}


def _coerce(kind: str, value, where: str):
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidArgumentError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidArgumentError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise InvalidArgumentError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise InvalidArgumentError(f"{where}: expected a string, got {value!r}")
        return value
    if kind in ("f3", "i3"):
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            raise InvalidArgumentError(f"{where}: expected a list of 3 values, got {value!r}")
        elem = "float" if kind == "f3" else "int"
        return tuple(_coerce(elem, v, where) for v in value)
    raise AssertionError(kind)


def _parse_boxes(raw, where: str) -> list[InclusionBoxConfig]:
    if not isinstance(raw, list):
        raise InvalidArgumentError(f"{where}: expected an array of tables")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise InvalidArgumentError(f"{where}[{i}]: expected a table")
        unknown = set(entry) - set(_BOX_SCHEMA)
        if unknown:
            raise InvalidArgumentError(
                f"{where}[{i}]: unknown keys {sorted(unknown)}, valid: {sorted(_BOX_SCHEMA)}"
            )
        missing = set(_BOX_SCHEMA) - set(entry)
        if missing:
            raise InvalidArgumentError(f"{where}[{i}]: missing keys {sorted(missing)}")
        kwargs = {k: _coerce(kind, entry[k], f"{where}[{i}].{k}") for k, kind in _BOX_SCHEMA.items()}
        out.append(InclusionBoxConfig(**kwargs))
    return out


def _apply_mapping(config: RunConfig, data: dict, source: str) -> None:
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{source}: top level must be a table")
    unknown = set(data) - set(_SCHEMA)
    if unknown:
        raise InvalidArgumentError(
            f"{source}: unknown groups {sorted(unknown)}, valid: {sorted(_SCHEMA)}"
        )
    for group, entries in data.items():
        if not isinstance(entries, dict):
            raise InvalidArgumentError(f"{source}: [{group}] must be a table")
        schema = _SCHEMA[group]
        unknown = set(entries) - set(schema)
        if unknown:
            raise InvalidArgumentError(
                f"{source}: [{group}] unknown keys {sorted(unknown)}, valid: {sorted(schema)}"
            )
        target = getattr(config, group)
        for key, value in entries.items():
            where = f"{source}: {group}.{key}"
            if schema[key][0] == "boxes":
                setattr(target, key, _parse_boxes(value, where))
            else:
                setattr(target, key, _coerce(schema[key][0], value, where))


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional TOML file, and overrides.

    Parameters
    ----------
    path : TOML file path or None for all defaults.
    overrides : mapping from dotted keys ("noise.eta") to raw values, as
        collected from command line flags; applied after the file.
    """
    config = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                data = toml.load(fh)
        except FileNotFoundError:
            raise InvalidArgumentError(f"config file not found: {path}") from None
        except toml.TomlDecodeError as exc:
            raise InvalidArgumentError(f"config file {path}: {exc}") from None
        _apply_mapping(config, data, str(path))
    if overrides:
        nested: dict = {}
        for dotted, value in overrides.items():
            if value is None:
                continue
            parts = dotted.split(".")
            if len(parts) != 2:
                raise InvalidArgumentError(f"override key must be group.key, got {dotted!r}")
            nested.setdefault(parts[0], {})[parts[1]] = value
        _apply_mapping(config, nested, "command line")
    config.validate()
    return config


def config_to_dict(config: RunConfig) -> dict:
    """Nested plain-dict form of a RunConfig, suitable for TOML dumping."""
    out: dict = {}
    for group, schema in _SCHEMA.items():
        target = getattr(config, group)
        entries: dict = {}
        for key, kind in schema.items():
            value = getattr(target, key)
            if kind[0] == "boxes":
                entries[key] = [
                    {
                        "lo": list(b.lo),
                        "hi": list(b.hi),
                        "gamma_lam": b.gamma_lam,
                        "gamma_mu": b.gamma_mu,
                    }
                    for b in value
                ]
            elif kind[0] in ("f3", "i3"):
                entries[key] = list(value)
            else:
                entries[key] = value
        out[group] = entries
    return out


def echo_config(config: RunConfig, path) -> None:
    """Write the resolved configuration next to the run outputs."""
    with open(path, "w") as fh:
        toml.dump(config_to_dict(config), fh)
