"""Node clouds: generation, boundary metadata, virtual nodes, stencil search.

Clouds and stencils are immutable after construction and safe to query from
multiple threads (the spatial index is a read-only :class:`scipy.spatial.cKDTree`).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import CloudError, StencilUnderdeterminedError

__all__ = [
    "NodeKind",
    "Node",
    "NodeCloud",
    "Stencil",
    "Rectangle",
    "Polygon",
    "generate_cartesian_cloud",
    "generate_irregular_cloud",
    "add_virtual_nodes",
    "find_stencil",
    "write_cloud_csv",
    "read_cloud_csv",
]

#: Minimum neighbor count needed to determine the five derivative unknowns.
MIN_NEIGHBORS = 5

_COINCIDENT_TOL = 1e-9


class NodeKind(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    ROBIN = 2
    VIRTUAL = 3


_KIND_NAMES = {
    NodeKind.INTERIOR: "interior",
    NodeKind.DIRICHLET: "dirichlet",
    NodeKind.ROBIN: "robin",
    NodeKind.VIRTUAL: "virtual",
}
_KIND_FROM_NAME = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class Node:
    """One collocation node.

    ``normal`` is set exactly for Robin boundary nodes (unit outward normal);
    ``host`` is set exactly for virtual nodes and references the Robin node
    the virtual was spawned from.
    """

    id: int
    position: tuple[float, float]
    kind: NodeKind
    normal: tuple[float, float] | None = None
    host: int | None = None

    def __post_init__(self):
        if (self.kind == NodeKind.ROBIN) != (self.normal is not None):
            raise CloudError(f"node {self.id}: normal present iff kind is robin")
        if self.normal is not None:
            norm = float(np.hypot(*self.normal))
            if abs(norm - 1.0) > 1e-12:
                raise CloudError(f"node {self.id}: normal is not unit length ({norm})")
        if (self.kind == NodeKind.VIRTUAL) != (self.host is not None):
            raise CloudError(f"node {self.id}: host present iff kind is virtual")


@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x, y, tol: float = 0.0):
        x = np.asarray(x)
        y = np.asarray(y)
        return (
            (x >= self.x0 - tol)
            & (x <= self.x1 + tol)
            & (y >= self.y0 - tol)
            & (y <= self.y1 + tol)
        )

    @property
    def vertices(self) -> np.ndarray:
        return np.array(
            [(self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)]
        )


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, counter-clockwise vertex order."""

    vertices_: tuple[tuple[float, float], ...]

    @property
    def vertices(self) -> np.ndarray:
        return np.asarray(self.vertices_, dtype=float)

    @property
    def signed_area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def contains(self, x, y, tol: float = 1e-12):
        """Even-odd ray casting; points on an edge count as inside."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        v = self.vertices
        inside = np.zeros(x.shape, dtype=bool)
        on_edge = np.zeros(x.shape, dtype=bool)
        n = len(v)
        for k in range(n):
            x1, y1 = v[k]
            x2, y2 = v[(k + 1) % n]
            # crossing test against the horizontal ray toward +x
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < x_cross)
            # distance from the segment, for the boundary-inclusive rule
            ex, ey = x2 - x1, y2 - y1
            ee = ex * ex + ey * ey
            t = np.clip(((x - x1) * ex + (y - y1) * ey) / ee, 0.0, 1.0)
            d2 = (x - (x1 + t * ex)) ** 2 + (y - (y1 + t * ey)) ** 2
            on_edge |= d2 <= tol * tol
        return inside | on_edge

    def inscribed_width(self, samples: int = 60) -> float:
        """Diameter of (approximately) the largest inscribed circle."""
        v = self.vertices
        xs = np.linspace(v[:, 0].min(), v[:, 0].max(), samples)
        ys = np.linspace(v[:, 1].min(), v[:, 1].max(), samples)
        X, Y = np.meshgrid(xs, ys)
        mask = self.contains(X.ravel(), Y.ravel())
        if not mask.any():
            return 0.0
        px, py = X.ravel()[mask], Y.ravel()[mask]
        best = 0.0
        n = len(v)
        dmin = np.full(px.shape, np.inf)
        for k in range(n):
            x1, y1 = v[k]
            x2, y2 = v[(k + 1) % n]
            ex, ey = x2 - x1, y2 - y1
            ee = ex * ex + ey * ey
            t = np.clip(((px - x1) * ex + (py - y1) * ey) / ee, 0.0, 1.0)
            d2 = (px - (x1 + t * ex)) ** 2 + (py - (y1 + t * ey)) ** 2
            dmin = np.minimum(dmin, d2)
        best = float(np.sqrt(dmin.max()))
        return 2.0 * best


Domain = Rectangle | Polygon


@dataclass(frozen=True)
class NodeCloud:
    """Immutable set of nodes with boundary metadata.

    ``normals`` holds NaN rows for nodes without a normal; ``hosts`` holds -1
    for nodes without a host.  ``h`` is the characteristic spacing.
    """

    positions: np.ndarray
    kinds: np.ndarray
    normals: np.ndarray
    hosts: np.ndarray
    h: float
    domain: Domain | None = None
    _tree: cKDTree = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        positions = np.ascontiguousarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "kinds", np.asarray(self.kinds, dtype=np.int8))
        object.__setattr__(self, "normals", np.asarray(self.normals, dtype=float))
        object.__setattr__(self, "hosts", np.asarray(self.hosts, dtype=np.int64))
        self._validate()
        object.__setattr__(self, "_tree", cKDTree(positions))

    def _validate(self):
        n = len(self.positions)
        if self.positions.shape != (n, 2):
            raise CloudError("positions must have shape (n, 2)")
        if not (len(self.kinds) == len(self.normals) == len(self.hosts) == n):
            raise CloudError("field lengths disagree")
        if self.h <= 0:
            raise CloudError("characteristic spacing must be positive")
        pairs = cKDTree(self.positions).query_pairs(_COINCIDENT_TOL * self.h)
        if pairs:
            i, j = sorted(pairs)[0]
            raise CloudError(f"nodes {i} and {j} coincide")
        robin = self.kinds == NodeKind.ROBIN
        norms = np.hypot(self.normals[:, 0], self.normals[:, 1])
        if not np.all(np.abs(norms[robin] - 1.0) <= 1e-12):
            raise CloudError("robin nodes must carry unit normals")
        if not np.all(np.isnan(self.normals[~robin])):
            raise CloudError("only robin nodes may carry normals")
        virtual = self.kinds == NodeKind.VIRTUAL
        if np.any(self.hosts[virtual] < 0) or np.any(self.hosts[~virtual] != -1):
            raise CloudError("host set iff node is virtual")
        if virtual.any():
            host_kinds = self.kinds[self.hosts[virtual]]
            if not np.all(host_kinds == NodeKind.ROBIN):
                raise CloudError("virtual hosts must be robin boundary nodes")

    # -- inspection ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_interior(self) -> int:
        return int(np.sum(self.kinds == NodeKind.INTERIOR))

    @property
    def n_dirichlet(self) -> int:
        return int(np.sum(self.kinds == NodeKind.DIRICHLET))

    @property
    def n_robin(self) -> int:
        return int(np.sum(self.kinds == NodeKind.ROBIN))

    @property
    def n_virtual(self) -> int:
        return int(np.sum(self.kinds == NodeKind.VIRTUAL))

    def ids_of_kind(self, kind: NodeKind) -> np.ndarray:
        return np.flatnonzero(self.kinds == kind)

    def node(self, i: int) -> Node:
        kind = NodeKind(int(self.kinds[i]))
        normal = tuple(self.normals[i]) if kind == NodeKind.ROBIN else None
        host = int(self.hosts[i]) if kind == NodeKind.VIRTUAL else None
        return Node(int(i), (float(self.positions[i, 0]), float(self.positions[i, 1])), kind, normal, host)

    def nodes(self) -> Iterable[Node]:
        return (self.node(i) for i in range(len(self)))

    @classmethod
    def from_nodes(cls, nodes: Sequence[Node], h: float, domain: Domain | None = None) -> "NodeCloud":
        n = len(nodes)
        positions = np.empty((n, 2))
        kinds = np.empty(n, dtype=np.int8)
        normals = np.full((n, 2), np.nan)
        hosts = np.full(n, -1, dtype=np.int64)
        for k, node in enumerate(nodes):
            if node.id != k:
                raise CloudError("node ids must be contiguous and in order")
            positions[k] = node.position
            kinds[k] = node.kind
            if node.normal is not None:
                normals[k] = node.normal
            if node.host is not None:
                hosts[k] = node.host
        return cls(positions, kinds, normals, hosts, h, domain)


@dataclass(frozen=True)
class Stencil:
    """Influence-domain membership of one center node.

    Offsets follow the neighbor-minus-center convention; this is the single
    global sign choice validated by the golden coefficient tests.
    """

    center: int
    neighbors: np.ndarray
    offsets: np.ndarray
    distances: np.ndarray
    radius: float

    def __len__(self) -> int:
        return len(self.neighbors)


def find_stencil(cloud: NodeCloud, center: int, r_e: float) -> Stencil:
    """All nodes within ``r_e`` of the center (center excluded), id-ordered.

    Raises :class:`StencilUnderdeterminedError` when fewer than five
    neighbors are found.
    """
    if r_e <= 0:
        raise ValueError("influence radius must be positive")
    ids = cloud._tree.query_ball_point(cloud.positions[center], r_e)
    ids = np.array(sorted(i for i in ids if i != center), dtype=np.int64)
    if len(ids) < MIN_NEIGHBORS:
        raise StencilUnderdeterminedError(
            f"stencil underdetermined at node {center}: "
            f"{len(ids)} neighbors within r_e={r_e} (need {MIN_NEIGHBORS})"
        )
    offsets = cloud.positions[ids] - cloud.positions[center]
    distances = np.hypot(offsets[:, 0], offsets[:, 1])
    return Stencil(int(center), ids, offsets, distances, float(r_e))


def find_all_stencils(cloud: NodeCloud, r_e: float, centers: np.ndarray | None = None) -> dict[int, Stencil]:
    """Stencils for many centers against the shared spatial index."""
    if centers is None:
        centers = np.arange(len(cloud))
    return {int(c): find_stencil(cloud, int(c), r_e) for c in centers}


# -- generators ---------------------------------------------------------------


def _corner_merge(kind_a: NodeKind, kind_b: NodeKind) -> NodeKind:
    # Dirichlet is the stronger constraint and wins at corners.
    if NodeKind.DIRICHLET in (kind_a, kind_b):
        return NodeKind.DIRICHLET
    return NodeKind.ROBIN


def generate_cartesian_cloud(
    x_extent: float,
    y_extent: float,
    dx: float,
    dy: float,
    boundary_kinds: Mapping[str, str | NodeKind],
) -> NodeCloud:
    """Lattice cloud on ``[0, x_extent] x [0, y_extent]``.

    ``boundary_kinds`` maps each of ``left right top bottom`` to ``dirichlet``
    or ``robin``.  Corner nodes take the kind of the higher-priority side
    (Dirichlet beats Robin); a Robin corner's normal is the normalized sum of
    the adjoining side normals.
    """
    if dx <= 0 or dy <= 0:
        raise CloudError("spacings must be positive")
    nx = x_extent / dx
    ny = y_extent / dy
    if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9:
        raise CloudError("extents must be integer multiples of the spacings")
    nx, ny = int(round(nx)) + 1, int(round(ny)) + 1

    kinds_by_side = {}
    for side in ("left", "right", "top", "bottom"):
        k = boundary_kinds[side]
        if isinstance(k, str):
            k = _KIND_FROM_NAME[k.lower()]
        if k not in (NodeKind.DIRICHLET, NodeKind.ROBIN):
            raise CloudError(f"side {side}: boundary kind must be dirichlet or robin")
        kinds_by_side[side] = k
    side_normals = {
        "left": (-1.0, 0.0),
        "right": (1.0, 0.0),
        "bottom": (0.0, -1.0),
        "top": (0.0, 1.0),
    }

    positions = []
    kinds = []
    normals = []
    for i in range(nx):
        for j in range(ny):
            x, y = i * dx, j * dy
            sides = []
            if i == 0:
                sides.append("left")
            if i == nx - 1:
                sides.append("right")
            if j == 0:
                sides.append("bottom")
            if j == ny - 1:
                sides.append("top")
            if not sides:
                kind, normal = NodeKind.INTERIOR, (np.nan, np.nan)
            elif len(sides) == 1:
                kind = kinds_by_side[sides[0]]
                normal = side_normals[sides[0]] if kind == NodeKind.ROBIN else (np.nan, np.nan)
            else:
                kind = _corner_merge(kinds_by_side[sides[0]], kinds_by_side[sides[1]])
                if kind == NodeKind.ROBIN:
                    nvec = np.sum([side_normals[s] for s in sides], axis=0)
                    nvec = nvec / np.hypot(*nvec)
                    normal = (float(nvec[0]), float(nvec[1]))
                else:
                    normal = (np.nan, np.nan)
            positions.append((x, y))
            kinds.append(kind)
            normals.append(normal)

    n = len(positions)
    return NodeCloud(
        np.array(positions),
        np.array(kinds, dtype=np.int8),
        np.array(normals),
        np.full(n, -1, dtype=np.int64),
        h=min(dx, dy),
        domain=Rectangle(0.0, 0.0, float(x_extent), float(y_extent)),
    )


def _edge_normal(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    # outward normal of a CCW polygon edge
    e = p1 - p0
    n = np.array([e[1], -e[0]])
    return n / np.hypot(*n)


def generate_irregular_cloud(
    boundary_polygon: Sequence[tuple[float, float]],
    target_spacing: float,
    seed: int,
    jitter: float = 0.3,
    edge_kinds: Sequence[str | NodeKind] | None = None,
) -> NodeCloud:
    """Jittered-lattice cloud inside a simple CCW polygon.

    Boundary nodes (polygon vertices included) sit on the edges at roughly
    ``target_spacing``; interior nodes are lattice points displaced by
    ``jitter * target_spacing`` uniform noise, kept only when strictly inside
    and at least ``0.5 * target_spacing`` from every accepted node.
    Deterministic for a fixed ``seed``.
    """
    if target_spacing <= 0:
        raise CloudError("target spacing must be positive")
    poly = Polygon(tuple((float(x), float(y)) for x, y in boundary_polygon))
    if poly.signed_area <= 0:
        raise CloudError("polygon must be simple and counter-clockwise")
    if poly.signed_area < target_spacing**2:
        raise CloudError("degenerate polygon: area smaller than spacing^2")
    if poly.inscribed_width() < target_spacing:
        raise CloudError("spacing larger than the polygon's inscribed width")

    verts = poly.vertices
    n_edges = len(verts)
    if edge_kinds is None:
        edge_kinds = ["robin"] * n_edges
    if len(edge_kinds) != n_edges:
        raise CloudError("one boundary kind per polygon edge required")
    kinds_per_edge = []
    for k in edge_kinds:
        if isinstance(k, str):
            k = _KIND_FROM_NAME[k.lower()]
        if k not in (NodeKind.DIRICHLET, NodeKind.ROBIN):
            raise CloudError("edge kinds must be dirichlet or robin")
        kinds_per_edge.append(k)

    positions: list[tuple[float, float]] = []
    kinds: list[NodeKind] = []
    normals: list[tuple[float, float]] = []

    # vertices first: kind merged from adjoining edges
    for v in range(n_edges):
        prev_edge = (v - 1) % n_edges
        kind = _corner_merge(kinds_per_edge[prev_edge], kinds_per_edge[v])
        if kind == NodeKind.ROBIN:
            nvec = _edge_normal(verts[prev_edge], verts[v]) + _edge_normal(
                verts[v], verts[(v + 1) % n_edges]
            )
            nvec = nvec / np.hypot(*nvec)
            normal = (float(nvec[0]), float(nvec[1]))
        else:
            normal = (np.nan, np.nan)
        positions.append((float(verts[v, 0]), float(verts[v, 1])))
        kinds.append(kind)
        normals.append(normal)

    # edge-interior boundary nodes
    for e in range(n_edges):
        p0, p1 = verts[e], verts[(e + 1) % n_edges]
        length = float(np.hypot(*(p1 - p0)))
        n_seg = max(1, int(round(length / target_spacing)))
        nvec = _edge_normal(p0, p1)
        for s in range(1, n_seg):
            p = p0 + (s / n_seg) * (p1 - p0)
            positions.append((float(p[0]), float(p[1])))
            if kinds_per_edge[e] == NodeKind.ROBIN:
                kinds.append(NodeKind.ROBIN)
                normals.append((float(nvec[0]), float(nvec[1])))
            else:
                kinds.append(NodeKind.DIRICHLET)
                normals.append((np.nan, np.nan))

    # interior fill: jittered lattice with min-distance rejection
    rng = np.random.default_rng(seed)
    accepted = np.array(positions)
    min_dist = 0.5 * target_spacing
    x_lo, y_lo = verts.min(axis=0)
    x_hi, y_hi = verts.max(axis=0)
    xs = np.arange(x_lo + target_spacing, x_hi - 0.5 * target_spacing + 1e-12, target_spacing)
    ys = np.arange(y_lo + target_spacing, y_hi - 0.5 * target_spacing + 1e-12, target_spacing)
    interior: list[tuple[float, float]] = []
    for y in ys:
        for x in xs:
            delta = rng.uniform(-jitter, jitter, size=2) * target_spacing
            px, py = x + delta[0], y + delta[1]
            if not bool(poly.contains(px, py, tol=0.0)[0]):
                continue
            pool = accepted if not interior else np.vstack([accepted, np.array(interior)])
            if np.min(np.hypot(pool[:, 0] - px, pool[:, 1] - py)) < min_dist:
                continue
            interior.append((px, py))

    for p in interior:
        positions.append(p)
        kinds.append(NodeKind.INTERIOR)
        normals.append((np.nan, np.nan))

    n = len(positions)
    return NodeCloud(
        np.array(positions),
        np.array(kinds, dtype=np.int8),
        np.array(normals),
        np.full(n, -1, dtype=np.int64),
        h=float(target_spacing),
        domain=poly,
    )


def add_virtual_nodes(cloud: NodeCloud, offset: float) -> NodeCloud:
    """One virtual node per Robin node, placed ``offset`` along its normal.

    Virtual positions must fall outside the domain; a position landing inside
    (possible next to non-convex boundaries) raises :class:`CloudError`
    naming the offending node.
    """
    if offset <= 0:
        raise ValueError("virtual-node offset must be positive")
    robin_ids = cloud.ids_of_kind(NodeKind.ROBIN)
    if len(robin_ids) == 0:
        return cloud

    new_positions = cloud.positions[robin_ids] + offset * cloud.normals[robin_ids]
    if cloud.domain is not None:
        inside = np.asarray(cloud.domain.contains(new_positions[:, 0], new_positions[:, 1]))
        if inside.any():
            bad = robin_ids[np.flatnonzero(inside)[0]]
            raise CloudError(
                f"virtual node for boundary node {bad} falls inside the domain; "
                "reduce the offset near non-convex boundary sections"
            )

    positions = np.vstack([cloud.positions, new_positions])
    kinds = np.concatenate([cloud.kinds, np.full(len(robin_ids), NodeKind.VIRTUAL, dtype=np.int8)])
    normals = np.vstack([cloud.normals, np.full((len(robin_ids), 2), np.nan)])
    hosts = np.concatenate([cloud.hosts, robin_ids.astype(np.int64)])
    return NodeCloud(positions, kinds, normals, hosts, cloud.h, cloud.domain)


# -- CSV interface -------------------------------------------------------------

_CSV_HEADER = ["id", "x", "y", "kind", "n_x", "n_y", "host"]


def write_cloud_csv(cloud: NodeCloud, path) -> None:
    """Dump a cloud in the fixture CSV format (one row per node)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for node in cloud.nodes():
            nx, ny = ("", "") if node.normal is None else (
                repr(float(node.normal[0])),
                repr(float(node.normal[1])),
            )
            host = "" if node.host is None else str(node.host)
            writer.writerow(
                [
                    node.id,
                    repr(float(node.position[0])),
                    repr(float(node.position[1])),
                    _KIND_NAMES[node.kind],
                    nx,
                    ny,
                    host,
                ]
            )


def read_cloud_csv(path_or_text, h: float | None = None, domain: Domain | None = None) -> NodeCloud:
    """Load a cloud from the fixture CSV format.

    When ``h`` is omitted it is estimated as the median nearest-neighbor
    distance of the non-virtual nodes.
    """
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
        rows = list(csv.reader(fh))
    else:
        with open(path_or_text, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != _CSV_HEADER:
        raise CloudError("cloud CSV must start with the header " + ",".join(_CSV_HEADER))
    nodes = []
    for row in rows[1:]:
        if not row:
            continue
        nid, x, y, kind_name, nx, ny, host = (c.strip() for c in row)
        kind = _KIND_FROM_NAME[kind_name.lower()]
        normal = (float(nx), float(ny)) if nx else None
        nodes.append(
            Node(int(nid), (float(x), float(y)), kind, normal, int(host) if host else None)
        )
    if h is None:
        positions = np.array([n.position for n in nodes if n.kind != NodeKind.VIRTUAL])
        tree = cKDTree(positions)
        dists, _ = tree.query(positions, k=2)
        h = float(np.median(dists[:, 1]))
    return NodeCloud.from_nodes(nodes, h=h, domain=domain)
