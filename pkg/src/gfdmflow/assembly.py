"""Fully-implicit nonlinear residual assembly over a node cloud.

Unknown ordering is interleaved ``(p_0, Sw_0, p_1, Sw_1, ...)`` over all
nodes, virtual nodes included.  Every node contributes exactly two rows:

* interior and Robin nodes: backward-Euler oil and water flow residuals,
* virtual nodes: the host's derivative boundary condition for p and Sw,
* Dirichlet nodes: ``u - eta`` for both variables,

for ``2 (n1 + n2 + n3 + n3)`` equations in total.  The sparsity pattern is
precomputed once and reused for every evaluation; the Jacobian is exact,
obtained by running the residual kernels on vectorized dual numbers seeded
on the locally relevant unknowns (upwind branches are frozen at the current
iterate's pressures within each evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from . import dual
from .cloud import NodeCloud, NodeKind
from .errors import SetupError
from .operators import DiffOperators
from .physics import ReservoirModel, SimState, pair_transmissibility_parts, upwind_mobilities

__all__ = [
    "DirichletBC",
    "RobinBC",
    "BoundarySpec",
    "ImplicitSystem",
    "ResidualSystem",
    "assemble",
    "flow_residuals",
    "robin_residual",
    "dirichlet_residual",
]


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed value ``u = value`` on a boundary node."""

    value: float


@dataclass(frozen=True)
class RobinBC:
    """Derivative condition ``a*u + b*du/dn = g`` on a boundary node.

    Coefficients are named a/b/g to keep clear of the flux unit constant.
    ``noflow()`` is the common special case ``du/dn = 0``.
    """

    a: float
    b: float
    g: float

    def __post_init__(self):
        if self.a == 0.0 and self.b == 0.0:
            raise SetupError("robin condition with a = b = 0 constrains nothing")

    @classmethod
    def noflow(cls) -> "RobinBC":
        return cls(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class BoundarySpec:
    """Per-node boundary data for the two variables."""

    p: DirichletBC | RobinBC
    sw: DirichletBC | RobinBC


class PairFluxSystem:
    """Shared two-phase evaluator over an abstract node-pair table.

    Subclasses fill ``flow_ids`` (nodes carrying flow equations), the pair
    arrays ``pair_i / pair_j / pair_coef`` (constant flux prefactor per
    directed pair) and the constant linear rows, then call
    :meth:`_finalize`.  Only the flux-law physics and the bookkeeping live
    here; how the pair coefficients were obtained is entirely up to the
    subclass.
    """

    model: ReservoirModel
    n_nodes: int

    def _init_tables(self, model: ReservoirModel, n_nodes: int):
        self.model = model
        self.n_nodes = n_nodes
        self.n_unknowns = 2 * n_nodes
        if len(model.permeability) != n_nodes:
            raise SetupError("model arrays must cover every node")
        self.flow_ids = np.empty(0, dtype=np.int64)
        self.pair_i = np.empty(0, dtype=np.int64)
        self.pair_j = np.empty(0, dtype=np.int64)
        self.pair_coef = np.empty(0)
        self.pair_mu_o = np.empty(0)
        self.pair_mu_w = np.empty(0)
        # Jacobian entries of the constant (linear) rows
        self._lin_rows: list[int] = []
        self._lin_cols: list[int] = []
        self._lin_data: list[float] = []
        # residual evaluation data: value rows and difference-form rows
        self._dir_rows: list[int] = []
        self._dir_cols: list[int] = []
        self._dir_rhs: list[float] = []
        self._rb_entry_row: list[int] = []
        self._rb_entry_col: list[int] = []
        self._rb_entry_host: list[int] = []
        self._rb_entry_coef: list[float] = []
        self._rb_row: list[int] = []
        self._rb_a_coef: list[float] = []
        self._rb_a_col: list[int] = []
        self._rb_g: list[float] = []

    def _set_pairs(self, pair_i, pair_j, geometric_coef):
        """Install the directed pair table; ``geometric_coef`` multiplies the
        transmissibility into the flux prefactor."""
        self.pair_i = np.asarray(pair_i, dtype=np.int64)
        self.pair_j = np.asarray(pair_j, dtype=np.int64)
        k_h, mu_o, mu_w = pair_transmissibility_parts(self.pair_i, self.pair_j, self.model)
        self.pair_mu_o = mu_o
        self.pair_mu_w = mu_w
        self.pair_coef = self.model.unit_alpha * k_h * np.asarray(geometric_coef, dtype=float)

    def _add_dirichlet_rows(self, node: int, p_value: float, sw_value: float):
        self._lin_rows += [2 * node, 2 * node + 1]
        self._lin_cols += [2 * node, 2 * node + 1]
        self._lin_data += [1.0, 1.0]
        self._dir_rows += [2 * node, 2 * node + 1]
        self._dir_cols += [2 * node, 2 * node + 1]
        self._dir_rhs += [p_value, sw_value]

    def _add_robin_row(self, row: int, member_cols, coeffs, host_col: int, a_coef: float, g: float):
        """Row ``a*u_host + sum_k c_k (u_k - u_host) = g`` (difference form)."""
        coeffs = list(coeffs)
        self._lin_rows += [row] * (len(member_cols) + 1)
        self._lin_cols += list(member_cols) + [host_col]
        self._lin_data += coeffs + [a_coef - float(np.sum(coeffs))]
        self._rb_entry_row += [row] * len(member_cols)
        self._rb_entry_col += list(member_cols)
        self._rb_entry_host += [host_col] * len(member_cols)
        self._rb_entry_coef += coeffs
        self._rb_row.append(row)
        self._rb_a_coef.append(a_coef)
        self._rb_a_col.append(host_col)
        self._rb_g.append(g)

    def _finalize(self):
        self.lin_rows = np.asarray(self._lin_rows, dtype=np.int64)
        self.lin_cols = np.asarray(self._lin_cols, dtype=np.int64)
        self.lin_data = np.asarray(self._lin_data, dtype=float)
        self.dir_rows = np.asarray(self._dir_rows, dtype=np.int64)
        self.dir_cols = np.asarray(self._dir_cols, dtype=np.int64)
        self.dir_rhs = np.asarray(self._dir_rhs, dtype=float)
        self.rb_entry_row = np.asarray(self._rb_entry_row, dtype=np.int64)
        self.rb_entry_col = np.asarray(self._rb_entry_col, dtype=np.int64)
        self.rb_entry_host = np.asarray(self._rb_entry_host, dtype=np.int64)
        self.rb_entry_coef = np.asarray(self._rb_entry_coef, dtype=float)
        self.rb_row = np.asarray(self._rb_row, dtype=np.int64)
        self.rb_a_coef = np.asarray(self._rb_a_coef, dtype=float)
        self.rb_a_col = np.asarray(self._rb_a_col, dtype=np.int64)
        self.rb_g = np.asarray(self._rb_g, dtype=float)
        self._freeze_pattern()

    def _freeze_pattern(self):
        pi, pj = self.pair_i, self.pair_j
        ji_o = 2 * pi
        ji_w = 2 * pi + 1
        cp_i, cp_j = 2 * pi, 2 * pj
        cs_i, cs_j = 2 * pi + 1, 2 * pj + 1
        self.pat_pair_rows = np.column_stack([ji_o] * 4 + [ji_w] * 4).ravel()
        self.pat_pair_cols = np.column_stack([cp_i, cp_j, cs_i, cs_j] * 2).ravel()

        f = self.flow_ids
        self.pat_acc_rows = np.column_stack([2 * f, 2 * f, 2 * f + 1, 2 * f + 1]).ravel()
        self.pat_acc_cols = np.column_stack([2 * f, 2 * f + 1, 2 * f, 2 * f + 1]).ravel()

        self.pattern_rows = np.concatenate([self.pat_pair_rows, self.pat_acc_rows, self.lin_rows])
        self.pattern_cols = np.concatenate([self.pat_pair_cols, self.pat_acc_cols, self.lin_cols])

    # -- evaluation -------------------------------------------------------------

    def _pair_fluxes(self, p, sw, with_jac: bool):
        pi, pj = self.pair_i, self.pair_j
        if with_jac:
            p_i = dual.seed(p[pi], 0, 4)
            p_j = dual.seed(p[pj], 1, 4)
            sw_i = dual.seed(sw[pi], 2, 4)
            sw_j = dual.seed(sw[pj], 3, 4)
        else:
            p_i, p_j, sw_i, sw_j = p[pi], p[pj], sw[pi], sw[pj]
        lam_o, lam_w = upwind_mobilities(
            p_i, p_j, sw_i, sw_j, self.model, self.pair_mu_o, self.pair_mu_w
        )
        dp = p_j - p_i
        f_o = lam_o * dp * self.pair_coef
        f_w = lam_w * dp * self.pair_coef
        return f_o, f_w

    def _accumulations(self, p, sw, p_old, sw_old, dt, with_jac: bool):
        f = self.flow_ids
        if with_jac:
            p_c = dual.seed(p[f], 0, 2)
            sw_c = dual.seed(sw[f], 1, 2)
        else:
            p_c, sw_c = p[f], sw[f]
        model = self.model
        phi_new = model.phi0 + model.Cr * (p_c - model.p_ref)
        phi_old = model.phi0 + model.Cr * (p_old[f] - model.p_ref)
        acc_o = (phi_new * (1.0 - sw_c) - phi_old * (1.0 - sw_old[f])) / dt
        acc_w = (phi_new * sw_c - phi_old * sw_old[f]) / dt
        return acc_o, acc_w

    def _evaluate(self, x, x_old, dt, with_jac: bool):
        p, sw = x[0::2], x[1::2]
        p_old, sw_old = x_old[0::2], x_old[1::2]
        f_o, f_w = self._pair_fluxes(p, sw, with_jac)
        acc_o, acc_w = self._accumulations(p, sw, p_old, sw_old, dt, with_jac)

        residual = np.zeros(self.n_unknowns)
        residual[self.dir_rows] = x[self.dir_cols] - self.dir_rhs
        if len(self.rb_row):
            diffs = self.rb_entry_coef * (x[self.rb_entry_col] - x[self.rb_entry_host])
            residual += np.bincount(self.rb_entry_row, weights=diffs, minlength=self.n_unknowns)
            residual[self.rb_row] += self.rb_a_coef * x[self.rb_a_col] - self.rb_g
        n = self.n_nodes
        residual[0::2] += np.bincount(self.pair_i, weights=dual.value(f_o), minlength=n)
        residual[1::2] += np.bincount(self.pair_i, weights=dual.value(f_w), minlength=n)
        f = self.flow_ids
        residual[2 * f] += self.model.q_o[f] - dual.value(acc_o)
        residual[2 * f + 1] += self.model.q_w[f] - dual.value(acc_w)

        if not with_jac:
            return residual, None
        pair_data = np.column_stack([f_o.tan, f_w.tan]).ravel()
        acc_data = np.column_stack([-acc_o.tan, -acc_w.tan]).ravel()
        data = np.concatenate([pair_data, acc_data, self.lin_data])
        jac = sp.coo_matrix(
            (data, (self.pattern_rows, self.pattern_cols)),
            shape=(self.n_unknowns, self.n_unknowns),
        ).tocsr()
        return residual, jac

    def residual(self, x: np.ndarray, x_old: np.ndarray, dt: float) -> np.ndarray:
        r, _ = self._evaluate(x, x_old, dt, with_jac=False)
        return r

    def residual_and_jacobian(self, x: np.ndarray, x_old: np.ndarray, dt: float):
        return self._evaluate(x, x_old, dt, with_jac=True)


class ImplicitSystem(PairFluxSystem):
    """Meshless residual/Jacobian evaluator for one cloud and radius.

    The constructor validates the setup (operators present for all flow
    nodes, complete boundary specs, virtual nodes resolvable in their host
    stencils) and freezes the sparsity pattern.  Pair coefficients are the
    Laplacian rows ``e3 + e4`` of the difference operators.
    """

    def __init__(
        self,
        cloud: NodeCloud,
        ops: DiffOperators,
        model: ReservoirModel,
        specs: Mapping[int, BoundarySpec],
    ):
        self._init_tables(model, len(cloud))
        self.cloud = cloud
        self.ops = ops
        self.specs = dict(specs)

        kinds = cloud.kinds
        self.flow_ids = np.flatnonzero((kinds == NodeKind.INTERIOR) | (kinds == NodeKind.ROBIN))
        self.dirichlet_ids = cloud.ids_of_kind(NodeKind.DIRICHLET)
        self.virtual_ids = cloud.ids_of_kind(NodeKind.VIRTUAL)
        covered = len(self.flow_ids) + len(self.dirichlet_ids) + len(self.virtual_ids)
        if covered != self.n_nodes:
            raise SetupError("some node has no assembly rule (unknown kind)")
        missing = [int(i) for i in self.flow_ids if int(i) not in ops]
        if missing:
            raise SetupError(f"missing operators for flow nodes {missing[:5]}")

        pi, pj, cl = [], [], []
        for i in self.flow_ids:
            stencil = ops.stencil(int(i))
            pi.append(np.full(len(stencil), i, dtype=np.int64))
            pj.append(stencil.neighbors)
            cl.append(ops.laplacian_row(int(i)))
        if pi:
            self._set_pairs(np.concatenate(pi), np.concatenate(pj), np.concatenate(cl))

        for c in self.dirichlet_ids:
            spec = self.specs.get(int(c))
            if spec is None or not isinstance(spec.p, DirichletBC) or not isinstance(spec.sw, DirichletBC):
                raise SetupError(f"dirichlet node {int(c)} needs Dirichlet values for p and Sw")
            self._add_dirichlet_rows(int(c), spec.p.value, spec.sw.value)

        for b in self.virtual_ids:
            a_host = int(cloud.hosts[b])
            spec = self.specs.get(a_host)
            if spec is None or not isinstance(spec.p, RobinBC) or not isinstance(spec.sw, RobinBC):
                raise SetupError(f"robin node {a_host} needs Robin triples for p and Sw")
            stencil = ops.stencil(a_host)
            if int(b) not in set(int(x) for x in stencil.neighbors):
                raise SetupError(
                    f"virtual node {int(b)} is outside the stencil of host {a_host}; "
                    "influence radius too small"
                )
            normal = cloud.normals[a_host]
            cdir = ops.directional_row(a_host, (normal[0], normal[1]))
            for offset, bc in ((0, spec.p), (1, spec.sw)):
                member_cols = [2 * int(nbr) + offset for nbr in stencil.neighbors]
                self._add_robin_row(
                    2 * int(b) + offset, member_cols, bc.b * cdir, 2 * a_host + offset, bc.a, bc.g
                )

        self._finalize()


@dataclass(frozen=True)
class ResidualSystem:
    """Assembled residual vector plus the frozen sparsity pattern."""

    residual: np.ndarray
    pattern_rows: np.ndarray
    pattern_cols: np.ndarray
    system: ImplicitSystem

    @property
    def n_rows(self) -> int:
        return len(self.residual)


def assemble(
    state_new: SimState,
    state_old: SimState,
    dt: float,
    cloud: NodeCloud,
    ops: DiffOperators,
    model: ReservoirModel,
    specs: Mapping[int, BoundarySpec],
) -> ResidualSystem:
    """One-shot residual assembly (builds and discards the evaluator)."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    system = ImplicitSystem(cloud, ops, model, specs)
    residual = system.residual(state_new.to_vector(), state_old.to_vector(), dt)
    return ResidualSystem(residual, system.pattern_rows, system.pattern_cols, system)


# -- single-node reference forms ------------------------------------------------


def flow_residuals(
    node: int,
    state_new: SimState,
    state_old: SimState,
    dt: float,
    ops: DiffOperators,
    model: ReservoirModel,
):
    """Backward-Euler oil/water residual pair at one interior or Robin node."""
    stencil = ops.stencil(node)
    lap = ops.laplacian_row(node)
    nbr = stencil.neighbors
    k_h, mu_o, mu_w = pair_transmissibility_parts(np.full(len(nbr), node), nbr, model)
    lam_o, lam_w = upwind_mobilities(
        state_new.p[node], state_new.p[nbr], state_new.sw[node], state_new.sw[nbr], model, mu_o, mu_w
    )
    dp = state_new.p[nbr] - state_new.p[node]
    base = model.unit_alpha * k_h * lap * dp
    flux_o = float(np.sum(base * lam_o))
    flux_w = float(np.sum(base * lam_w))
    phi_new = model.phi0 + model.Cr * (state_new.p[node] - model.p_ref)
    phi_old = model.phi0 + model.Cr * (state_old.p[node] - model.p_ref)
    acc_o = (phi_new * (1.0 - state_new.sw[node]) - phi_old * (1.0 - state_old.sw[node])) / dt
    acc_w = (phi_new * state_new.sw[node] - phi_old * state_old.sw[node]) / dt
    r_oil = flux_o + float(model.q_o[node]) - acc_o
    r_water = flux_w + float(model.q_w[node]) - acc_w
    return r_oil, r_water


def robin_residual(
    virtual: int,
    var: str,
    state_new: SimState,
    cloud: NodeCloud,
    ops: DiffOperators,
    spec: RobinBC,
) -> float:
    """Derivative boundary condition written at a virtual node's row.

    The directional derivative uses the difference form
    ``sum_j c_j (u_j - u_host)`` so it vanishes exactly on constants.
    """
    host = int(cloud.hosts[virtual])
    stencil = ops.stencil(host)
    if virtual not in set(int(x) for x in stencil.neighbors):
        raise SetupError(
            f"virtual node {virtual} is outside the stencil of host {host}; "
            "influence radius too small"
        )
    normal = cloud.normals[host]
    cdir = ops.directional_row(host, (normal[0], normal[1]))
    u = state_new.p if var == "p" else state_new.sw
    du_dn = float(np.sum(cdir * (u[stencil.neighbors] - u[host])))
    return spec.a * float(u[host]) + spec.b * du_dn - spec.g


def dirichlet_residual(node: int, var: str, state_new: SimState, spec: DirichletBC) -> float:
    u = state_new.p if var == "p" else state_new.sw
    return float(u[node]) - spec.value
