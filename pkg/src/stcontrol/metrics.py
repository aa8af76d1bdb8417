"""Error metrics and convergence reporting.

The mesh-dependent seminorm |||w||| is the kappa-weighted L2 norm of the
spatial gradient over the fitted subdomains; the star seminorm adds the
seminorm of the discrete Riesz representative of dt w.  The energy error
curly-E integrates the unweighted spatial-gradient mismatch of state and
adjoint against the exact pair; the reference variant replaces the exact
pair by a discrete solution on a finer mesh, located pointwise through a
uniform-grid bucket accelerator.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from typing import Optional

import numpy as np

from . import fem, solver
from .errors import PointLocationError, SolverError
from .mesh import SpaceTimeMesh
from .problem import ProblemSpec

__all__ = [
    "triple_norm",
    "star_norm",
    "energy_error",
    "reference_error",
    "PointLocator",
    "compute_eoc",
    "ConvergenceReport",
]

RIESZ_IDENTITY_RTOL = 1e-10


def _triple_sq(mesh: SpaceTimeMesh, spec: ProblemSpec, w: np.ndarray) -> float:
    _, _, area, dldx, _ = fem.triangle_geometry(mesh)
    dxw = np.einsum("mj,mj->m", w[mesh.triangles], dldx)
    kap = spec.kappa_of_region(mesh.regions)
    return float(np.sum(kap * area * dxw * dxw))


def triple_norm(mesh: SpaceTimeMesh, spec: ProblemSpec, w: np.ndarray) -> float:
    """|||w||| = (sum_i kappa_i || dx w ||^2_{Q_i})^(1/2) for nodal w."""
    return math.sqrt(_triple_sq(mesh, spec, w))


def star_norm(mesh: SpaceTimeMesh, spec: ProblemSpec, w: np.ndarray) -> float:
    """|||w|||_* = (|||w|||^2 + |||z_h(dt w)|||^2)^(1/2), where z_h solves
    the discrete Riesz problem in W for the time-derivative functional.

    Verifies the discrete Riesz identity rhs.z = |||z|||^2 on every call."""
    dofs_w = fem.adjoint_dofmap(mesh, "W")
    r = fem.assemble_time_weighted_load(mesh, w, dofs_w)
    z = solver.solve_riesz(mesh, spec, r)
    lhs = float(r @ z)
    rhs = _triple_sq(mesh, spec, z)
    if abs(lhs - rhs) > RIESZ_IDENTITY_RTOL * max(abs(lhs), abs(rhs)):
        raise SolverError(
            f"discrete Riesz identity violated: rhs.z={lhs!r} vs |||z|||^2={rhs!r}"
        )
    return math.sqrt(_triple_sq(mesh, spec, w) + rhs)


def energy_error(mesh: SpaceTimeMesh, spec: ProblemSpec, u: np.ndarray,
                 p: np.ndarray, subdiv: int = 1,
                 spacetime_gradient: bool = False) -> float:
    """curly-E: unweighted L2 mismatch of the (spatial) gradients of state
    and adjoint against the exact pair, by composite degree-5 quadrature
    with true-subdomain branch selection."""
    if spec.exact_state is None or spec.exact_adjoint is None:
        raise ValueError("energy_error requires exact state and adjoint fields")
    x, t, area, _, _ = fem.triangle_geometry(mesh)
    dxu, dtu = fem.element_gradients(mesh, u)
    dxp, dtp = fem.element_gradients(mesh, p)
    rule = fem.subdivided_rule(fem.rule_degree5(), subdiv)
    acc = np.zeros(mesh.num_triangles)
    for lam, w in zip(rule.points, rule.weights):
        xq = x @ lam
        tq = t @ lam
        eu = np.asarray(spec.exact_state.evaluate(spec, xq, tq, "dx")) - dxu
        ep = np.asarray(spec.exact_adjoint.evaluate(spec, xq, tq, "dx")) - dxp
        point = eu * eu + ep * ep
        if spacetime_gradient:
            fu = np.asarray(spec.exact_state.evaluate(spec, xq, tq, "dt")) - dtu
            fp = np.asarray(spec.exact_adjoint.evaluate(spec, xq, tq, "dt")) - dtp
            point = point + fu * fu + fp * fp
        acc += w * point
    return math.sqrt(float(np.sum(acc * area)))


class PointLocator:
    """Uniform-grid bucket accelerator over a triangulation with a
    barycentric containment test (boundary tolerance 1e-12)."""

    def __init__(self, mesh: SpaceTimeMesh, tol: float = 1e-12):
        self.mesh = mesh
        self.tol = tol
        v = mesh.vertices
        tri = mesh.triangles
        self.x0 = float(np.min(v[:, 0]))
        self.t0 = float(np.min(v[:, 1]))
        x1 = float(np.max(v[:, 0]))
        t1 = float(np.max(v[:, 1]))
        target = max(mesh.h, 1e-12)
        self.nx = max(1, int((x1 - self.x0) / target))
        self.nt = max(1, int((t1 - self.t0) / target))
        self.cx = (x1 - self.x0) / self.nx
        self.ct = (t1 - self.t0) / self.nt

        p = v[tri]
        self.origin = p[:, 0, :]
        col1 = p[:, 1, :] - p[:, 0, :]
        col2 = p[:, 2, :] - p[:, 0, :]
        det = col1[:, 0] * col2[:, 1] - col2[:, 0] * col1[:, 1]
        inv = np.empty((len(tri), 2, 2))
        inv[:, 0, 0] = col2[:, 1]
        inv[:, 0, 1] = -col2[:, 0]
        inv[:, 1, 0] = -col1[:, 1]
        inv[:, 1, 1] = col1[:, 0]
        self.inv = inv / det[:, None, None]

        i0 = self._cell_x(np.min(p[..., 0], axis=1))
        i1 = self._cell_x(np.max(p[..., 0], axis=1))
        j0 = self._cell_t(np.min(p[..., 1], axis=1))
        j1 = self._cell_t(np.max(p[..., 1], axis=1))
        buckets: dict[int, list[int]] = {}
        for k in range(len(tri)):
            for i in range(i0[k], i1[k] + 1):
                for j in range(j0[k], j1[k] + 1):
                    buckets.setdefault(i * self.nt + j, []).append(k)
        self.buckets = {key: np.asarray(val) for key, val in buckets.items()}

    def _cell_x(self, x):
        return np.clip(((np.asarray(x) - self.x0) / self.cx).astype(np.int64), 0, self.nx - 1)

    def _cell_t(self, t):
        return np.clip(((np.asarray(t) - self.t0) / self.ct).astype(np.int64), 0, self.nt - 1)

    def locate(self, x, t) -> np.ndarray:
        """Element index containing each point (lowest index on ties);
        raises PointLocationError for points outside the mesh."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full(len(x), -1, dtype=np.int64)
        bid = self._cell_x(x) * self.nt + self._cell_t(t)
        order = np.argsort(bid, kind="stable")
        sorted_bid = bid[order]
        starts = np.flatnonzero(np.concatenate(([True], np.diff(sorted_bid) != 0)))
        ends = np.concatenate((starts[1:], [len(sorted_bid)]))
        for s, e in zip(starts, ends):
            idx = order[s:e]
            cand = self.buckets.get(int(sorted_bid[s]))
            if cand is None:
                raise PointLocationError(
                    "point outside the mesh", point=(x[idx[0]], t[idx[0]])
                )
            d = np.stack([x[idx], t[idx]], axis=1)[:, None, :] - self.origin[cand][None, :, :]
            lam = np.einsum("cij,ncj->nci", self.inv[cand], d)
            lam0 = 1.0 - lam[..., 0] - lam[..., 1]
            ok = (lam[..., 0] >= -self.tol) & (lam[..., 1] >= -self.tol) & (lam0 >= -self.tol)
            found = np.any(ok, axis=1)
            if not np.all(found):
                bad = idx[np.flatnonzero(~found)[0]]
                raise PointLocationError(
                    "point not contained in any candidate element",
                    point=(x[bad], t[bad]),
                )
            out[idx] = cand[np.argmax(ok, axis=1)]
        return out


def reference_error(coarse_mesh: SpaceTimeMesh, u: np.ndarray, p: np.ndarray,
                    ref_mesh: SpaceTimeMesh, u_ref: np.ndarray,
                    p_ref: np.ndarray, subdiv: int = 1,
                    locator: Optional[PointLocator] = None) -> float:
    """curly-E_r: same integrand as energy_error with the exact gradients
    replaced by those of a reference solution on a finer mesh."""
    x, t, area, _, _ = fem.triangle_geometry(coarse_mesh)
    dxu, _ = fem.element_gradients(coarse_mesh, u)
    dxp, _ = fem.element_gradients(coarse_mesh, p)
    rxu, _ = fem.element_gradients(ref_mesh, u_ref)
    rxp, _ = fem.element_gradients(ref_mesh, p_ref)
    if locator is None:
        locator = PointLocator(ref_mesh)
    rule = fem.subdivided_rule(fem.rule_degree5(), subdiv)
    acc = np.zeros(coarse_mesh.num_triangles)
    for lam, w in zip(rule.points, rule.weights):
        xq = x @ lam
        tq = t @ lam
        eid = locator.locate(xq, tq)
        eu = rxu[eid] - dxu
        ep = rxp[eid] - dxp
        acc += w * (eu * eu + ep * ep)
    return math.sqrt(float(np.sum(acc * area)))


def compute_eoc(hs, errors):
    """Observed orders log(e_{k-1}/e_k) / log(h_{k-1}/h_k); first entry is
    None, non-monotone sequences yield negative orders verbatim."""
    hs = [float(v) for v in hs]
    errors = [float(v) for v in errors]
    if len(hs) != len(errors):
        raise ValueError("hs and errors must have equal length")
    orders: list[Optional[float]] = [None]
    for k in range(1, len(hs)):
        orders.append(
            math.log(errors[k - 1] / errors[k]) / math.log(hs[k - 1] / hs[k])
        )
    return orders


@dataclasses.dataclass
class ConvergenceReport:
    """Rows of (dofs, h, error, order); serializes to the four-column CSV."""

    dofs: list
    h: list
    error: list
    order: list

    @classmethod
    def from_results(cls, dofs, hs, errors) -> "ConvergenceReport":
        return cls(
            dofs=[int(d) for d in dofs],
            h=[float(v) for v in hs],
            error=[float(v) for v in errors],
            order=compute_eoc(hs, errors),
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["dofs", "h", "error", "order"])
            for d, h, e, o in zip(self.dofs, self.h, self.error, self.order):
                writer.writerow(
                    [d, f"{h:.17g}", f"{e:.17g}", "" if o is None else f"{o:.17g}"]
                )

    @classmethod
    def read_csv(cls, path) -> "ConvergenceReport":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != ["dofs", "h", "error", "order"]:
                raise ValueError(f"unexpected report header {header!r}")
            dofs, hs, errors, orders = [], [], [], []
            for row in reader:
                dofs.append(int(row[0]))
                hs.append(float(row[1]))
                errors.append(float(row[2]))
                orders.append(None if row[3] == "" else float(row[3]))
        return cls(dofs=dofs, h=hs, error=errors, order=orders)
