"""Run configuration: a single TOML tree, fully validated at parse time.

Every block is optional except grid and time; defaults give the unit
physical coefficients, the polynomial well with unit latent heat, a pure
temperature-tracking cost, and the [-1, 1] control box.  Scalar entries
accept a number for a constant or a string path (relative to the config
file) for tabulated data.  Unknown keys anywhere in the tree are rejected
by their dotted path, as are values that violate the constructed objects'
own invariants.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python 3.10
    import tomli

from .adjoint import CostSpec
from .geometry import SpatialGrid, TimeGrid, build_grid
from .harness import Instance
from .io import read_field_csv, read_trajectory_csv
from .optimize import ControlBounds, OptimizeOptions
from .potentials import (
    PotentialSpec,
    Regularization,
    constant_latent,
    logarithmic_potential,
    regular_potential,
    tanh_latent,
)
from .state import BoundaryControl, InitialData, PhysicalParams

__all__ = ["ConfigError", "RunConfig", "parse_config"]

_SCHEMA = {
    "grid": {"dimension", "lengths", "node_counts"},
    "time": {"T", "N"},
    "params": {"sigma", "tau", "alpha", "m"},
    "potential": {"variant", "a", "lambda", "lambda_value", "epsilon"},
    "initial": {"theta0", "phi0"},
    "control": {"u0", "u_min", "u_max"},
    "cost": {"kappa1", "kappa2", "theta_Q", "phi_Omega"},
    "optimizer": {"tol", "max_iter", "s0", "c1"},
}
_TOP_KEYS = {"seed"} | set(_SCHEMA)


class ConfigError(ValueError):
    """A configuration file is malformed; the message names the key."""


def _fail(key: str, msg: str):
    raise ConfigError(f"{key}: {msg}")


def _number(tree, block, key, default):
    v = tree.get(block, {}).get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{block}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _integer(tree, block, key, default):
    v = tree.get(block, {}).get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{block}.{key}", f"expected an integer, got {v!r}")
    return int(v)


def _scalar_or_path(tree, block, key, default, base: Path):
    """A constant (number) or a tabulated-data reference (string path)."""
    v = tree.get(block, {}).get(key, default)
    if isinstance(v, str):
        p = base / v
        if not p.is_file():
            _fail(f"{block}.{key}", f"referenced file not found: {p}")
        return p
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{block}.{key}", f"expected a number or file path, got {v!r}")
    return float(v)


@dataclass
class RunConfig:
    """Validated run description; build() turns it into solver objects."""

    seed: int
    lengths: tuple[float, ...]
    node_counts: tuple[int, ...]
    horizon: float
    n_steps: int
    sigma: float
    tau: float
    alpha: float
    aperture: float | tuple[float, ...]
    potential_variant: str
    log_coefficient: float
    latent_kind: str
    latent_value: float
    epsilon: float | None
    theta0: float | Path
    phi0: float | Path
    u0: float | Path
    u_min: float
    u_max: float
    kappa1: float
    kappa2: float
    theta_q: float | Path
    phi_omega: float | Path
    optimizer: OptimizeOptions

    def build_potential(self) -> PotentialSpec:
        latent = (
            tanh_latent()
            if self.latent_kind == "tanh"
            else constant_latent(self.latent_value)
        )
        if self.potential_variant == "logarithmic":
            return logarithmic_potential(self.log_coefficient, latent=latent)
        return regular_potential(latent=latent)

    def build(self) -> Instance:
        grid = build_grid(self.lengths, self.node_counts)
        tgrid = TimeGrid(self.horizon, self.n_steps)
        params = PhysicalParams(
            sigma=self.sigma,
            tau=self.tau,
            alpha=self.alpha,
            aperture=(
                np.asarray(self.aperture, float)
                if not isinstance(self.aperture, float)
                else self.aperture
            ),
        )
        params.aperture_on(grid)  # shape check against this grid
        potential = self.build_potential()
        init = InitialData(
            theta0=_field(self.theta0, grid, "initial.theta0"),
            phi0=_field(self.phi0, grid, "initial.phi0"),
        )
        control = BoundaryControl(
            values=_control_table(self.u0, grid, tgrid, "control.u0")
        )
        cost = CostSpec(
            kappa1=self.kappa1,
            kappa2=self.kappa2,
            theta_target=_spacetime(self.theta_q, grid, tgrid, "cost.theta_Q"),
            phi_target=_field(self.phi_omega, grid, "cost.phi_Omega"),
        )
        cost.checked(grid, tgrid)
        bounds = ControlBounds(u_min=self.u_min, u_max=self.u_max)
        reg = Regularization(eps=self.epsilon) if self.epsilon is not None else None
        inst = Instance(
            grid=grid,
            tgrid=tgrid,
            params=params,
            potential=potential,
            init=init,
            control=control,
            cost=cost,
            bounds=bounds,
            regularization=reg,
        )
        inst.control.checked(grid, tgrid)
        init.checked(grid)
        return inst


def _field(spec, grid: SpatialGrid, key: str) -> np.ndarray:
    if isinstance(spec, Path):
        vals = read_field_csv(spec)
        if vals.shape != (grid.n_nodes,):
            _fail(key, f"file holds {vals.shape[0]} nodes, grid has {grid.n_nodes}")
        return vals
    return np.full(grid.n_nodes, spec)


def _spacetime(spec, grid: SpatialGrid, tgrid: TimeGrid, key: str) -> np.ndarray:
    if isinstance(spec, Path):
        vals = read_trajectory_csv(spec)
        want = (tgrid.n_steps + 1, grid.n_nodes)
        if vals.shape != want:
            _fail(key, f"file table is {vals.shape}, expected {want}")
        return vals
    return np.full((tgrid.n_steps + 1, grid.n_nodes), spec)


def _control_table(spec, grid: SpatialGrid, tgrid: TimeGrid, key: str) -> np.ndarray:
    if isinstance(spec, Path):
        vals = read_trajectory_csv(spec)
        want = (tgrid.n_steps, grid.n_boundary)
        if vals.shape != want:
            _fail(key, f"file table is {vals.shape}, expected {want}")
        return vals
    return np.full((tgrid.n_steps, grid.n_boundary), spec)


def parse_config(path) -> RunConfig:
    """Load, schema-check, and fully validate a run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            tree = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for key, val in tree.items():
        if key not in _TOP_KEYS:
            _fail(key, "unknown key")
        if key in _SCHEMA:
            if not isinstance(val, dict):
                _fail(key, "expected a table")
            for sub in val:
                if sub not in _SCHEMA[key]:
                    _fail(f"{key}.{sub}", "unknown key")
    for block in ("grid", "time"):
        if block not in tree:
            _fail(block, "required block missing")

    base = path.parent
    seed = tree.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        _fail("seed", f"expected a nonnegative integer, got {seed!r}")

    lengths = tree["grid"].get("lengths")
    counts = tree["grid"].get("node_counts")
    if not isinstance(lengths, list) or not lengths or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in lengths
    ):
        _fail("grid.lengths", "expected a list of numbers")
    if not isinstance(counts, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in counts
    ):
        _fail("grid.node_counts", "expected a list of integers")
    dim = tree["grid"].get("dimension", len(lengths))
    if dim != len(lengths) or len(lengths) != len(counts):
        _fail("grid.dimension", "dimension and per-axis lists disagree")

    variant = tree.get("potential", {}).get("variant", "regular")
    if variant not in ("regular", "logarithmic"):
        _fail("potential.variant", f"unknown variant {variant!r}")
    if variant == "logarithmic" and "a" not in tree.get("potential", {}):
        _fail("potential.a", "required for the logarithmic variant")
    latent_kind = tree.get("potential", {}).get("lambda", "constant")
    if latent_kind not in ("constant", "tanh"):
        _fail("potential.lambda", f"unknown latent choice {latent_kind!r}")
    epsilon = tree.get("potential", {}).get("epsilon")
    if epsilon is not None:
        if isinstance(epsilon, bool) or not isinstance(epsilon, (int, float)):
            _fail("potential.epsilon", f"expected a number, got {epsilon!r}")
        epsilon = float(epsilon)

    aperture = tree.get("params", {}).get("m", 1.0)
    if isinstance(aperture, list):
        if not all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in aperture
        ):
            _fail("params.m", "expected numbers in the per-node list")
        aperture = tuple(float(v) for v in aperture)
    elif isinstance(aperture, bool) or not isinstance(aperture, (int, float)):
        _fail("params.m", f"expected a number or list, got {aperture!r}")
    else:
        aperture = float(aperture)

    cfg = RunConfig(
        seed=seed,
        lengths=tuple(float(v) for v in lengths),
        node_counts=tuple(counts),
        horizon=_number(tree, "time", "T", None),
        n_steps=_integer(tree, "time", "N", None),
        sigma=_number(tree, "params", "sigma", 1.0),
        tau=_number(tree, "params", "tau", 1.0),
        alpha=_number(tree, "params", "alpha", 1.0),
        aperture=aperture,
        potential_variant=variant,
        log_coefficient=_number(tree, "potential", "a", 2.0),
        latent_kind=latent_kind,
        latent_value=_number(tree, "potential", "lambda_value", 1.0),
        epsilon=epsilon,
        theta0=_scalar_or_path(tree, "initial", "theta0", 0.0, base),
        phi0=_scalar_or_path(tree, "initial", "phi0", 0.0, base),
        u0=_scalar_or_path(tree, "control", "u0", 0.0, base),
        u_min=_number(tree, "control", "u_min", -1.0),
        u_max=_number(tree, "control", "u_max", 1.0),
        kappa1=_number(tree, "cost", "kappa1", 1.0),
        kappa2=_number(tree, "cost", "kappa2", 0.0),
        theta_q=_scalar_or_path(tree, "cost", "theta_Q", 0.0, base),
        phi_omega=_scalar_or_path(tree, "cost", "phi_Omega", 0.0, base),
        optimizer=OptimizeOptions(
            max_iter=_integer(tree, "optimizer", "max_iter", 200),
            tol=_number(tree, "optimizer", "tol", 1e-6),
            s0=_number(tree, "optimizer", "s0", 1.0),
            armijo_c1=_number(tree, "optimizer", "c1", 1e-4),
        ),
    )
    try:
        cfg.build()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
