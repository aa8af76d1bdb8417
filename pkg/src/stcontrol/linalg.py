"""Sparse direct solves with mandatory residual reporting.

Wraps SuperLU (scipy.sparse.linalg.splu).  General systems use partial
pivoting with COLAMD fill-reducing ordering; SPD systems switch to the
symmetric mode (MMD_AT_PLUS_A ordering, tiny pivot threshold).  Every solve
computes the relative residual and refuses to return garbage silently.
"""

from __future__ import annotations

import dataclasses
import re
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrixError, SolverError

__all__ = ["Factorization", "SolveResult", "factorize", "solve"]

RESIDUAL_LIMIT = 1e-8


@dataclasses.dataclass
class Factorization:
    """An LU (or Cholesky-type) factorization bound to its matrix so that
    solves can report true residuals."""

    lu: object
    matrix: sp.csr_matrix
    spd: bool


class SolveResult(NamedTuple):
    x: np.ndarray
    residual: float


def factorize(matrix, spd: bool = False) -> Factorization:
    """Factor a square sparse matrix; raises SingularMatrixError on exact
    singularity (with the pivot index when the backend reports one)."""
    matrix = sp.csr_matrix(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"matrix must be square, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix.data)):
        raise ValueError("matrix contains non-finite entries")
    csc = matrix.tocsc()
    try:
        if spd:
            lu = spla.splu(
                csc,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        else:
            lu = spla.splu(csc, permc_spec="COLAMD")
    except RuntimeError as exc:
        match = re.search(r"\d+", str(exc))
        pivot = int(match.group()) if match else None
        raise SingularMatrixError(f"factorization failed: {exc}", pivot=pivot) from exc
    return Factorization(lu=lu, matrix=matrix, spd=spd)


def solve(fact: Factorization, b, residual_limit: float = RESIDUAL_LIMIT) -> SolveResult:
    """Solve with a prior factorization; returns the solution together with
    the relative residual ||Ax - b|| / ||b|| (absolute when b = 0), and
    raises SolverError when it exceeds ``residual_limit``."""
    b = np.asarray(b, dtype=float)
    if b.shape != (fact.matrix.shape[0],):
        raise ValueError(f"right-hand side shape {b.shape} does not match matrix")
    x = fact.lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("solve produced non-finite values")
    norm_b = float(np.linalg.norm(b))
    norm_r = float(np.linalg.norm(fact.matrix @ x - b))
    residual = norm_r / norm_b if norm_b > 0.0 else norm_r
    if residual > residual_limit:
        raise SolverError(
            f"relative residual {residual:.3e} exceeds {residual_limit:.1e}"
        )
    return SolveResult(x=x, residual=residual)
