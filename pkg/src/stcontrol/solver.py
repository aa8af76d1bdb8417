"""Coupled optimality system for the energy-regularized control problem.

With A the state form matrix, K the kappa-weighted spatial stiffness and M
the mass matrix, the discrete first-order optimality conditions couple the
state u and the scaled adjoint p through

    [ A   (1/eta) K ] [u]   [ 0 ]
    [ M      -A^T   ] [p] = [b_d],

where b_d is the load of the desired state against the second test space.
By default trial and test spaces are both U x U (state space for both
fields); the theoretical pairing with the adjoint in W is available through
``adjoint_space="W"``.  The discrete control is recovered from the adjoint
via the Riesz relation z_f = -p / eta.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from . import fem, linalg
from .mesh import SpaceTimeMesh
from .problem import ProblemSpec, desired_state_function

__all__ = [
    "BlockSystem",
    "DiscreteSolution",
    "build_block_system",
    "solve_optimality",
    "recover_control_riesz",
    "solve_riesz",
]


@dataclasses.dataclass
class BlockSystem:
    """Assembled coupled operator plus the blocks it was built from."""

    combined: sp.csr_matrix
    rhs: np.ndarray
    state_matrix: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    eta: float
    state_dofs: fem.DofMap
    adjoint_dofs: fem.DofMap
    adjoint_space: str


@dataclasses.dataclass
class DiscreteSolution:
    """Nodal state/adjoint vectors with the solve's relative residual."""

    mesh: SpaceTimeMesh
    u: np.ndarray
    p: np.ndarray
    residual: float


def build_block_system(mesh: SpaceTimeMesh, spec: ProblemSpec,
                       adjoint_space: str = "U",
                       quad_subdiv: int = 1) -> BlockSystem:
    dofs_u = fem.state_dofmap(mesh)
    dofs_p = fem.adjoint_dofmap(mesh, adjoint_space)

    # Block rows: first tested against the adjoint space, second against the
    # state space; trial columns are (u in U, p in adjoint space).
    A = fem.assemble_state_matrix(mesh, spec, dofs=dofs_u, row_dofs=dofs_p)
    K = fem.assemble_spatial_stiffness(mesh, spec, dofs=dofs_p)
    M = fem.assemble_mass(mesh, dofs=dofs_u)
    b_d = fem.assemble_load(mesh, desired_state_function(spec), dofs=dofs_u,
                            subdiv=quad_subdiv)

    minus_at = -A.transpose().tocsr()
    combined = sp.bmat(
        [[A, K.multiply(1.0 / spec.eta)], [M, minus_at]], format="csr"
    )
    combined.sort_indices()
    rhs = np.concatenate([np.zeros(mesh.num_vertices), b_d])
    return BlockSystem(
        combined=combined,
        rhs=rhs,
        state_matrix=A,
        stiffness=K,
        mass=M,
        eta=spec.eta,
        state_dofs=dofs_u,
        adjoint_dofs=dofs_p,
        adjoint_space=adjoint_space,
    )


def solve_optimality(mesh: SpaceTimeMesh, spec: ProblemSpec,
                     adjoint_space: str = "U",
                     quad_subdiv: int = 1,
                     system: BlockSystem | None = None) -> DiscreteSolution:
    """Assemble (unless given) and solve the coupled system."""
    if system is None:
        system = build_block_system(mesh, spec, adjoint_space, quad_subdiv)
    fact = linalg.factorize(system.combined)
    x, residual = linalg.solve(fact, system.rhs)
    n = mesh.num_vertices
    return DiscreteSolution(mesh=mesh, u=x[:n], p=x[n:], residual=residual)


def recover_control_riesz(solution: DiscreteSolution, spec: ProblemSpec) -> np.ndarray:
    """Riesz representative of the optimal control: z_f = -p / eta."""
    return -solution.p / spec.eta


def solve_riesz(mesh: SpaceTimeMesh, spec: ProblemSpec, rhs: np.ndarray) -> np.ndarray:
    """Solve the discrete Riesz problem in W: (kappa_h dx z, dx zeta) =
    rhs[zeta].  ``rhs`` must already be zeroed on constrained entries."""
    dofs_w = fem.adjoint_dofmap(mesh, "W")
    K = fem.assemble_spatial_stiffness(mesh, spec, dofs=dofs_w)
    fact = linalg.factorize(K, spd=True)
    z, _ = linalg.solve(fact, rhs)
    return z
