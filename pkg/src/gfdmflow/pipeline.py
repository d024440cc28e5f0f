"""Scenario construction and end-to-end execution from a configuration."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assembly import BoundarySpec, DirichletBC, ImplicitSystem, RobinBC
from .cloud import (
    NodeCloud,
    NodeKind,
    Polygon,
    Rectangle,
    add_virtual_nodes,
    generate_cartesian_cloud,
    generate_irregular_cloud,
    read_cloud_csv,
)
from .config import ScenarioConfig, SegmentBC
from .errors import SetupError
from .fdm import FdmGrid, run_fdm
from .operators import DiffOperators, build_operators
from .physics import ReservoirModel, SimState
from .postproc import FieldSnapshot, snapshot_from_state
from .solver import SolverReport, simulate

__all__ = ["ScenarioRun", "build_cloud", "build_model", "assign_boundary_specs", "run_scenario", "run_fdm_scenario"]

_RECT_EDGE_ORDER = ("bottom", "right", "top", "left")


def _segment_kind(bc: SegmentBC) -> str:
    return "dirichlet" if bc.kind == "dirichlet" else "robin"


def _rect_vertices(config: ScenarioConfig):
    return ((0.0, 0.0), (config.width, 0.0), (config.width, config.height), (0.0, config.height))


def _polygon_edge_kinds(config: ScenarioConfig, n_edges: int) -> list[str]:
    kinds = []
    for e in range(n_edges):
        bc = config.boundaries.get(f"edge{e}", SegmentBC.noflow())
        kinds.append(_segment_kind(bc))
    return kinds


def build_cloud(config: ScenarioConfig) -> NodeCloud:
    """Cloud per the configuration, virtual nodes already inserted."""
    if config.cloud_type == "cartesian":
        kinds = {side: _segment_kind(config.boundaries[side]) for side in ("left", "right", "top", "bottom")}
        cloud = generate_cartesian_cloud(config.width, config.height, config.dx, config.dy, kinds)
        offset = min(config.dx, config.dy)
    elif config.cloud_type == "irregular":
        if config.domain_shape == "rectangle":
            vertices = _rect_vertices(config)
            edge_kinds = [_segment_kind(config.boundaries[s]) for s in _RECT_EDGE_ORDER]
        else:
            vertices = config.vertices
            edge_kinds = _polygon_edge_kinds(config, len(vertices))
        cloud = generate_irregular_cloud(
            vertices, config.spacing, config.seed, jitter=config.jitter, edge_kinds=edge_kinds
        )
        offset = config.spacing
    elif config.cloud_type == "csv":
        cloud = read_cloud_csv(config.cloud_path)
        offset = cloud.h
    else:
        raise SetupError(f"unknown cloud type {config.cloud_type!r}")
    if cloud.n_virtual == 0 and config.virtual_nodes == "auto":
        cloud = add_virtual_nodes(cloud, offset)
    return cloud


def build_model(config: ScenarioConfig, n_nodes: int) -> ReservoirModel:
    return ReservoirModel.uniform(
        n_nodes,
        permeability=config.permeability,
        phi0=config.porosity,
        Cr=config.compressibility,
        p_ref=config.reference_pressure,
        mu_o=config.oil_viscosity,
        mu_w=config.water_viscosity,
        Swc=config.connate_water,
        Sor=config.residual_oil,
    )


def _segment_to_spec(bc: SegmentBC) -> BoundarySpec:
    if bc.kind == "dirichlet":
        return BoundarySpec(DirichletBC(bc.p_value), DirichletBC(bc.sw_value))
    if bc.kind == "noflow":
        return BoundarySpec(RobinBC.noflow(), RobinBC.noflow())
    return BoundarySpec(RobinBC(*bc.p_robin), RobinBC(*bc.sw_robin))


def _point_segment_distance(px, py, a, b) -> float:
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    ee = ex * ex + ey * ey
    t = 0.0 if ee == 0 else max(0.0, min(1.0, ((px - ax) * ex + (py - ay) * ey) / ee))
    return float(np.hypot(px - (ax + t * ex), py - (ay + t * ey)))


def assign_boundary_specs(cloud: NodeCloud, config: ScenarioConfig) -> dict[int, BoundarySpec]:
    """Map each boundary node to its segment's condition.

    A node on several segments (corner) takes a segment whose kind matches
    the node's own kind, which the generators already resolved with the
    Dirichlet-wins priority rule.
    """
    if config.cloud_type == "cartesian" or (
        config.cloud_type == "csv" and config.domain_shape == "rectangle"
    ):
        segments = {
            "left": ((0.0, 0.0), (0.0, config.height)),
            "right": ((config.width, 0.0), (config.width, config.height)),
            "bottom": ((0.0, 0.0), (config.width, 0.0)),
            "top": ((0.0, config.height), (config.width, config.height)),
        }
        named = [(name, segments[name]) for name in ("left", "right", "bottom", "top")]
        bcs = {name: config.boundaries[name] for name in segments}
    else:
        if config.domain_shape == "rectangle":
            vertices = _rect_vertices(config)
            edge_bcs = {f"edge{k}": config.boundaries[s] for k, s in enumerate(_RECT_EDGE_ORDER)}
        else:
            vertices = config.vertices
            edge_bcs = {
                f"edge{k}": config.boundaries.get(f"edge{k}", SegmentBC.noflow())
                for k in range(len(vertices))
            }
        named = [
            (f"edge{k}", (vertices[k], vertices[(k + 1) % len(vertices)]))
            for k in range(len(vertices))
        ]
        bcs = edge_bcs

    tol = 1e-6 * cloud.h
    specs: dict[int, BoundarySpec] = {}
    for i in np.flatnonzero((cloud.kinds == NodeKind.DIRICHLET) | (cloud.kinds == NodeKind.ROBIN)):
        x, y = cloud.positions[i]
        kind = NodeKind(int(cloud.kinds[i]))
        want = "dirichlet" if kind == NodeKind.DIRICHLET else "robin"
        chosen = None
        for name, (a, b) in named:
            if _point_segment_distance(x, y, a, b) <= tol and _segment_kind(bcs[name]) == want:
                chosen = bcs[name]
                break
        if chosen is None:
            raise SetupError(f"boundary node {int(i)} at ({x}, {y}) matches no boundary segment")
        specs[int(i)] = _segment_to_spec(chosen)
    return specs


@dataclass
class ScenarioRun:
    cloud: NodeCloud
    ops: DiffOperators
    model: ReservoirModel
    specs: dict[int, BoundarySpec]
    system: ImplicitSystem
    states: dict[float, SimState]
    report: SolverReport

    def snapshot(self, t: float) -> FieldSnapshot:
        return snapshot_from_state(self.cloud, self.states[t])

    @property
    def final_time(self) -> float:
        return max(self.states)


def run_scenario(config: ScenarioConfig) -> ScenarioRun:
    """Execute the meshless pipeline end to end."""
    cloud = build_cloud(config)
    ops = build_operators(cloud, config.influence_radius())
    model = build_model(config, len(cloud))
    specs = assign_boundary_specs(cloud, config)
    system = ImplicitSystem(cloud, ops, model, specs)
    x0 = SimState(
        np.full(len(cloud), config.initial_pressure),
        np.full(len(cloud), config.initial_water_saturation),
    ).to_vector()
    raw, report = simulate(system, x0, config.time_control(), config.output_times)
    states = {t: SimState.from_vector(x, t) for t, x in raw.items()}
    return ScenarioRun(cloud, ops, model, specs, system, states, report)


def fdm_side_specs(config: ScenarioConfig) -> dict[str, object]:
    sides: dict[str, object] = {}
    for side in ("left", "right", "top", "bottom"):
        bc = config.boundaries[side]
        if bc.kind == "dirichlet":
            sides[side] = ("dirichlet", bc.p_value, bc.sw_value)
        elif bc.kind == "noflow" or (
            bc.kind == "robin" and bc.p_robin[0] == 0 and bc.p_robin[2] == 0
            and bc.sw_robin[0] == 0 and bc.sw_robin[2] == 0
        ):
            sides[side] = "noflow"
        else:
            raise SetupError(f"reference FDM supports dirichlet/noflow sides only, not {bc}")
    return sides


def run_fdm_scenario(
    config: ScenarioConfig,
    dx: float | None = None,
    dy: float | None = None,
    dt_max: float | None = None,
    strip_ny: int | None = None,
):
    """Reference FDM run of a rectangle scenario.

    ``strip_ny`` runs the grid on a reduced-height strip (same spacings);
    legitimate for configurations whose solution is independent of y, where
    the full-height and strip solutions coincide row-by-row.
    """
    if config.domain_shape != "rectangle":
        raise SetupError("reference FDM needs a rectangular domain")
    dx = config.dx if dx is None else dx
    dy = config.dy if dy is None else dy
    if abs(config.width / dx - round(config.width / dx)) > 1e-9:
        raise SetupError("FDM spacing must divide the domain width")
    nx = int(round(config.width / dx)) + 1
    ny = int(round(config.height / dy)) + 1 if strip_ny is None else int(strip_ny)
    grid = FdmGrid(nx=nx, ny=ny, dx=dx, dy=dy)
    model = build_model(config, grid.n_nodes)
    tc = config.time_control()
    if dt_max is not None:
        tc = replace(tc, dt_init=min(tc.dt_init, dt_max), dt_max=dt_max)
    states, report = run_fdm(
        model,
        grid,
        fdm_side_specs(config),
        tc,
        p_init=config.initial_pressure,
        sw_init=config.initial_water_saturation,
        output_times=config.output_times,
    )
    return grid, states, report
