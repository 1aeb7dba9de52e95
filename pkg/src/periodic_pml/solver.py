"""Direct sparse solve of the assembled PML system and stability diagnostics."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EmptySystemError, ResidualFailure, SingularSystemError, SolveError, ValidationError
from .fem import AssembledSystem, DofMap, Mesh

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
PIVOT_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class Field:
    """Complex nodal values on every mesh node, shape (Ny+1, Nt+1)."""

    mesh: Mesh
    alpha: float
    values: np.ndarray
    residual: float = 0.0

    @property
    def flat(self) -> np.ndarray:
        """Values ordered by node id (row-major in t)."""
        return self.values.T.ravel()

    @classmethod
    def from_flat(cls, mesh: Mesh, alpha: float, flat, residual: float = 0.0) -> "Field":
        vals = np.asarray(flat, dtype=complex).reshape(mesh.Nt + 1, mesh.Ny + 1).T.copy()
        return cls(mesh=mesh, alpha=alpha, values=vals, residual=residual)

    @classmethod
    def from_function(cls, mesh: Mesh, alpha: float, func) -> "Field":
        """Nodal interpolant of ``func(y, t)``; the right edge is set by quasi-periodicity."""
        Y = np.broadcast_to(mesh.y[:, None], mesh.t.shape)
        vals = np.asarray(func(Y, mesh.t), dtype=complex) * np.ones(mesh.t.shape)
        vals[-1] = np.exp(2j * np.pi * alpha) * vals[0]
        return cls(mesh=mesh, alpha=alpha, values=vals)


def matrix_norm(A: sp.spmatrix) -> float:
    return float(abs(A).sum(axis=1).max()) if A.nnz else 0.0


def solve(system: AssembledSystem, max_refine: int = 3) -> Field:
    """Factor with SuperLU, refine iteratively, certify the relative residual."""
    A = system.matrix
    b = system.rhs
    if A.shape[0] == 0:
        raise EmptySystemError("empty system")
    dofmap: DofMap = system.dofmap
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x = np.zeros(A.shape[0], dtype=complex)
        res = 0.0
    else:
        anorm = matrix_norm(A)
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise SingularSystemError(str(exc)) from exc
        pivots = np.abs(lu.U.diagonal())
        if pivots.min() <= PIVOT_RTOL * anorm:
            raise SingularSystemError(
                f"pivot {pivots.min():.3e} below {PIVOT_RTOL:g} * ||A|| = {PIVOT_RTOL * anorm:.3e}")
        x = lu.solve(b)
        scale = max(bnorm, np.finfo(float).tiny)
        res = float(np.linalg.norm(A @ x - b)) / scale
        rounds = 0
        while res > RESIDUAL_TOL and rounds < max_refine:
            x = x + lu.solve(b - A @ x)
            res = float(np.linalg.norm(A @ x - b)) / scale
            rounds += 1
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("non-finite solution")
        if res > RESIDUAL_TOL:
            raise ResidualFailure(f"relative residual {res:.3e} > {RESIDUAL_TOL:g} after {rounds} refinements")
    nodal = dofmap.prolong @ x
    if system.lifting is not None:
        nodal = nodal + system.lifting
    return Field.from_flat(dofmap.mesh, dofmap.alpha, nodal, residual=res)


def residual(system: AssembledSystem, field: Field) -> float:
    """Relative residual of a field against a system (recomputed from nodal values)."""
    idx = system.dofmap.index[:-1, 1:-1].T.ravel()
    x = np.empty(system.n, dtype=complex)
    x[idx] = field.values[:-1, 1:-1].T.ravel()
    b = system.rhs
    return float(np.linalg.norm(system.matrix @ x - b)) / max(float(np.linalg.norm(b)), np.finfo(float).tiny)


@dataclass
class StabilityRow:
    R: float
    norm_h1: float
    seconds: float = 0.0


def stability_scan(config, R_values) -> list[StabilityRow]:
    """Discrete H^1(E^R) norm of v^R for each R at the configuration's fixed element size."""
    import time

    from .config import build_field  # local: config depends on this module
    from .oracle import norm_weighted

    R_values = [float(r) for r in R_values]
    if not R_values:
        raise ValidationError("empty R list")
    if any(b <= a for a, b in zip(R_values, R_values[1:])):
        raise ValidationError("R values must be strictly increasing")
    if R_values[0] <= config.T:
        raise ValidationError(f"R={R_values[0]} must exceed T={config.T}")
    rows = []
    for R in R_values:
        t0 = time.perf_counter()
        try:
            field = build_field(config, R=R)
        except SolveError as exc:
            raise type(exc)(f"R={R}: {exc}") from exc
        rows.append(StabilityRow(R, norm_weighted(field, "ER", "H1"), time.perf_counter() - t0))
    return rows
