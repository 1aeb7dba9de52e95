"""Bilinear (Q1) finite elements for the truncated PML problem.

The weak form assembled here is, for trial v and test w,

    -e^{-i phi} int_{t<T} (v_y w_y + v_t w_t - (q + k^2) v w)
    -           int_{t>T} (v_y w_y + e^{-2 i phi} v_t w_t - (q_T^phi + k^2) v w)
        = e^{-i phi} int_{t<T} F w + int_{t>T} F_scaled w.

Test functions enter unconjugated.  Trial functions carry the Bloch multiplier
e^{2 pi i alpha} on the right edge and test functions the conjugate multiplier,
so the interface relation v_t(T-) = e^{-i phi} v_t(T+) is imposed weakly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElementError, EmptySystemError, SizeMismatchError, ValidationError
from .model import (Geometry, PotentialSpec, SourceSpec, potential_eval, potential_scaled_eval,
                    source_eval, source_scaled_eval)

GAUSS = np.array([-1.0, 1.0]) / math.sqrt(3.0)
# local node order: (j, m), (j+1, m), (j+1, m+1), (j, m+1)
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


def _shape(xi, eta):
    N = 0.25 * (1 + _XI * xi) * (1 + _ETA * eta)
    dxi = 0.25 * _XI * (1 + _ETA * eta)
    deta = 0.25 * _ETA * (1 + _XI * xi)
    return N, dxi, deta


_GP = [(xi, eta) for eta in GAUSS for xi in GAUSS]
_SHAPES = [_shape(xi, eta) for xi, eta in _GP]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured grid over [-pi, pi] x [g(y), R]; columns are y-lines."""

    y: np.ndarray            # (Ny+1,)
    t: np.ndarray            # (Ny+1, Nt+1)
    i_T: int                 # row index of the line t = T
    T: float
    R: float

    @property
    def Ny(self) -> int:
        return len(self.y) - 1

    @property
    def Nt(self) -> int:
        return self.t.shape[1] - 1

    @property
    def n_nodes(self) -> int:
        return (self.Ny + 1) * (self.Nt + 1)

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.t == self.t[:1, :]))

    def node_id(self, j, m):
        return np.asarray(m) * (self.Ny + 1) + np.asarray(j)

    def row_t(self, m: int) -> float:
        """t-coordinate of a flat mesh row."""
        return float(self.t[0, m])

    @cached_property
    def elements(self) -> np.ndarray:
        """(n_el, 4) node ids, element index e = m * Ny + j."""
        j, m = np.meshgrid(np.arange(self.Ny), np.arange(self.Nt))
        j, m = j.ravel(), m.ravel()
        return np.stack([self.node_id(j, m), self.node_id(j + 1, m),
                         self.node_id(j + 1, m + 1), self.node_id(j, m + 1)], axis=1)

    @cached_property
    def element_rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.Nt), self.Ny)

    @cached_property
    def quadrature(self) -> "Quadrature":
        return _quadrature(self)

    def region_mask(self, region: str) -> np.ndarray:
        """Element mask for 'ET' (t < T), 'PML' (T < t < R) or 'ER' (all)."""
        rows = self.element_rows
        if region == "ET":
            return rows < self.i_T
        if region == "PML":
            return rows >= self.i_T
        if region == "ER":
            return np.ones_like(rows, dtype=bool)
        raise ValidationError(f"unknown region {region!r}")


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Per element, per Gauss point data (2x2 rule)."""

    y: np.ndarray        # (n_el, 4)
    t: np.ndarray        # (n_el, 4)
    wdet: np.ndarray     # (n_el, 4) weight * det J
    N: np.ndarray        # (4, 4) [gp, local node]
    dNy: np.ndarray      # (n_el, 4, 4)
    dNt: np.ndarray      # (n_el, 4, 4)


def _quadrature(mesh: Mesh) -> Quadrature:
    el = mesh.elements
    Y = np.broadcast_to(mesh.y[:, None], mesh.t.shape).T.ravel()[el]
    Tt = mesh.t.T.ravel()[el]
    n_el = el.shape[0]
    ys = np.empty((n_el, 4))
    ts = np.empty((n_el, 4))
    wdet = np.empty((n_el, 4))
    dNy = np.empty((n_el, 4, 4))
    dNt = np.empty((n_el, 4, 4))
    Ns = np.empty((4, 4))
    for g, (N, dxi, deta) in enumerate(_SHAPES):
        Ns[g] = N
        ys[:, g] = Y @ N
        ts[:, g] = Tt @ N
        y_xi, y_eta = Y @ dxi, Y @ deta
        t_xi, t_eta = Tt @ dxi, Tt @ deta
        det = y_xi * t_eta - y_eta * t_xi
        bad = np.flatnonzero(det <= 0)
        if bad.size:
            e = int(bad[0])
            raise DegenerateElementError((e % mesh.Ny, e // mesh.Ny), float(det[e]))
        wdet[:, g] = det  # Gauss weights are 1 for the 2x2 rule
        # inverse-transpose Jacobian applied to reference gradients
        dNy[:, g, :] = (t_eta[:, None] * dxi[None, :] - t_xi[:, None] * deta[None, :]) / det[:, None]
        dNt[:, g, :] = (-y_eta[:, None] * dxi[None, :] + y_xi[:, None] * deta[None, :]) / det[:, None]
    return Quadrature(ys, ts, wdet, Ns, dNy, dNt)


def build_mesh(geometry: Geometry, Ny: int, Nt_phys: int, Nt_pml: int) -> Mesh:
    """Boundary-fitted grid: t-lines blend from g(y) to t = T, uniform layers up to R."""
    geometry.validate()
    if Ny < 4 or Ny % 2:
        raise ValidationError(f"Ny must be even and >= 4, got {Ny}")
    if Nt_phys < 2 or Nt_pml < 2:
        raise ValidationError("Nt_phys and Nt_pml must be >= 2")
    T, R = geometry.T, geometry.R
    y = np.linspace(-np.pi, np.pi, Ny + 1)
    g = np.asarray(geometry.g(y), dtype=float)
    g[-1] = g[0]  # exact periodicity of the bottom row
    s = np.arange(Nt_phys + 1) / Nt_phys
    lower = g[:, None] + (T - g[:, None]) * s[None, :]
    lower[:, -1] = T
    upper = T + (R - T) * (np.arange(1, Nt_pml + 1) / Nt_pml)
    upper[-1] = R
    t = np.concatenate([lower, np.broadcast_to(upper, (Ny + 1, Nt_pml))], axis=1)
    mesh = Mesh(y=y, t=t, i_T=Nt_phys, T=float(T), R=float(R))
    mesh.quadrature  # Jacobian check
    return mesh


@dataclass(frozen=True, eq=False)
class DofMap:
    """Node -> equation index with Bloch identification and Dirichlet masks."""

    mesh: Mesh
    alpha: float
    index: np.ndarray        # (Ny+1, Nt+1), -1 on Dirichlet nodes
    multiplier: np.ndarray   # (Ny+1, Nt+1), e^{2 pi i alpha} on the right edge, else 1
    n_dof: int

    @property
    def bloch(self) -> complex:
        return complex(np.exp(2j * np.pi * self.alpha))

    @cached_property
    def prolong(self) -> sp.csr_matrix:
        """P with nodal values = P @ dofs (trial space)."""
        idx = self.index.T.ravel()
        mult = self.multiplier.T.ravel()
        rows = np.flatnonzero(idx >= 0)
        return sp.csr_matrix((mult[rows], (rows, idx[rows])), shape=(self.mesh.n_nodes, self.n_dof))

    @property
    def dirichlet_bottom(self) -> np.ndarray:
        return self.mesh.node_id(np.arange(self.mesh.Ny + 1), 0)

    @property
    def dirichlet_top(self) -> np.ndarray:
        return self.mesh.node_id(np.arange(self.mesh.Ny + 1), self.mesh.Nt)


def build_dofmap(mesh: Mesh, alpha: float) -> DofMap:
    Ny, Nt = mesh.Ny, mesh.Nt
    if Nt < 2:
        raise EmptySystemError("mesh has no interior rows: zero free degrees of freedom")
    index = -np.ones((Ny + 1, Nt + 1), dtype=np.int64)
    j, m = np.meshgrid(np.arange(Ny), np.arange(1, Nt), indexing="ij")
    index[:Ny, 1:Nt] = (m - 1) * Ny + j
    index[Ny, 1:Nt] = index[0, 1:Nt]
    multiplier = np.ones((Ny + 1, Nt + 1), dtype=complex)
    multiplier[Ny, :] = np.exp(2j * np.pi * alpha)
    n_dof = Ny * (Nt - 1)
    return DofMap(mesh=mesh, alpha=float(alpha), index=index, multiplier=multiplier, n_dof=n_dof)


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    nodal_matrix: sp.csr_matrix
    nodal_load: np.ndarray
    dofmap: DofMap
    lifting: np.ndarray = field(default=None)
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def scaled(self, c: complex) -> "AssembledSystem":
        return replace(self, matrix=(c * self.matrix).tocsr(), rhs=c * self.rhs)


def _region_weights(mesh: Mesh, phi: float):
    """Per-element coefficients (c_y, c_t, c_mass, c_load)."""
    pml = mesh.element_rows >= mesh.i_T
    e1 = np.exp(-1j * phi)
    cy = np.where(pml, -1.0 + 0j, -e1)
    ct = np.where(pml, -np.exp(-2j * phi), -e1)
    cm = np.where(pml, 1.0 + 0j, e1)
    return cy, ct, cm, pml


def element_coefficients(mesh: Mesh, potential: PotentialSpec, source: SourceSpec,
                         k: float, alpha: float, phi: float, T: float):
    """(q + k^2) and F at every Gauss point, scaled beyond T."""
    q = mesh.quadrature
    _, _, _, pml = _region_weights(mesh, phi)
    react = np.empty(q.t.shape, dtype=complex)
    load = np.empty(q.t.shape, dtype=complex)
    phys = ~pml
    react[phys] = potential_eval(potential, q.y[phys], q.t[phys]) + k * k
    react[pml] = potential_scaled_eval(potential, q.y[pml], q.t[pml], T, phi) + k * k
    load[phys] = source_eval(source, alpha, q.y[phys], q.t[phys])
    load[pml] = source_scaled_eval(source, alpha, q.y[pml], q.t[pml], T, phi)
    if not (np.all(np.isfinite(react)) and np.all(np.isfinite(load))):
        raise AssertionError("non-finite coefficient at a quadrature point")
    return react, load


def assemble(mesh: Mesh, dofmap: DofMap, potential: PotentialSpec, source: SourceSpec,
             k: float, alpha: float, phi: float, T: float) -> AssembledSystem:
    if abs(T - mesh.T) > 1e-12:
        raise ValidationError("T does not match the mesh interface line")
    quad = mesh.quadrature
    cy, ct, cm, _ = _region_weights(mesh, phi)
    react, load = element_coefficients(mesh, potential, source, k, alpha, phi, T)

    w = quad.wdet
    Kyy = np.einsum("eg,ega,egb->eab", w, quad.dNy, quad.dNy)
    Ktt = np.einsum("eg,ega,egb->eab", w, quad.dNt, quad.dNt)
    Mq = np.einsum("eg,ga,gb->eab", w * react, quad.N, quad.N)
    Ke = cy[:, None, None] * Kyy + ct[:, None, None] * Ktt + cm[:, None, None] * Mq
    fe = cm[:, None] * np.einsum("eg,ga->ea", w * load, quad.N)

    el = mesh.elements
    rows = np.repeat(el, 4, axis=1).ravel()
    cols = np.tile(el, (1, 4)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    f = np.bincount(el.ravel(), weights=fe.real.ravel(), minlength=mesh.n_nodes) \
        + 1j * np.bincount(el.ravel(), weights=fe.imag.ravel(), minlength=mesh.n_nodes)

    P = dofmap.prolong
    PH = P.conj().T.tocsr()
    A = (PH @ K @ P).tocsr()
    A.sort_indices()
    return AssembledSystem(matrix=A, rhs=PH @ f, nodal_matrix=K, nodal_load=f, dofmap=dofmap,
                           lifting=np.zeros(mesh.n_nodes, dtype=complex),
                           params=dict(k=k, alpha=alpha, phi=phi, T=T))


def apply_dirichlet(system: AssembledSystem, dofmap: DofMap, G) -> AssembledSystem:
    """Impose v = G on the top row t = R by lifting; G has one value per top node."""
    G = np.asarray(G, dtype=complex)
    top = dofmap.dirichlet_top
    if G.shape != top.shape:
        raise SizeMismatchError(f"G has {G.size} values, top row has {top.size} nodes")
    g = np.zeros(dofmap.mesh.n_nodes, dtype=complex)
    g[top] = G
    PH = dofmap.prolong.conj().T
    rhs = PH @ (system.nodal_load - system.nodal_matrix @ g)
    return replace(system, rhs=rhs, lifting=g)


def dump_matrix(system: AssembledSystem, path) -> None:
    """Coordinate text: one 'row col re im' line per stored entry (0-based)."""
    A = system.matrix.tocoo()
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


# ---------------------------------------------------------------------------
# 1D analogue (single y-mode), used by the high-resolution reference


@dataclass(frozen=True, eq=False)
class System1D:
    t: np.ndarray            # nodes, t[0] = bottom, t[-1] = R
    i_T: int
    matrix: sp.csr_matrix    # on interior nodes 1..N-1
    rhs: np.ndarray


def assemble_1d(t: np.ndarray, i_T: int, k: float, shift: float, phi: float, T: float,
                q_phys=None, q_scaled=None, f_phys=None, f_scaled=None) -> System1D:
    """Linear elements for the y-reduced form with (n + alpha)^2 = shift^2.

    Coefficient callables take arrays of real t; ``None`` means zero.
    Homogeneous Dirichlet data at both ends.
    """
    t = np.asarray(t, dtype=float)
    h = np.diff(t)
    if np.any(h <= 0):
        raise ValidationError("1D nodes must be strictly increasing")
    if abs(t[i_T] - T) > 1e-12:
        raise ValidationError("node i_T must sit at t = T")
    ne = len(h)
    pml = np.arange(ne) >= i_T
    e1 = np.exp(-1j * phi)
    c_stiff = np.where(pml, -np.exp(-2j * phi), -e1)
    c_mass = np.where(pml, 1.0 + 0j, e1)

    N0 = (1 - GAUSS) / 2
    N1 = (1 + GAUSS) / 2
    tg = t[:-1, None] + h[:, None] * N1[None, :]
    wg = h[:, None] * 0.5 * np.ones(2)[None, :]

    def _eval(fp, fs):
        out = np.zeros(tg.shape, dtype=complex)
        if fp is not None and np.any(~pml):
            out[~pml] = fp(tg[~pml])
        if fs is not None and np.any(pml):
            out[pml] = fs(tg[pml])
        return out

    react = k * k - shift * shift + _eval(q_phys, q_scaled)
    load = _eval(f_phys, f_scaled)

    stiff = c_stiff / h
    m00 = c_mass * np.sum(wg * react * N0 * N0, axis=1)
    m01 = c_mass * np.sum(wg * react * N0 * N1, axis=1)
    m11 = c_mass * np.sum(wg * react * N1 * N1, axis=1)
    f0 = c_mass * np.sum(wg * load * N0, axis=1)
    f1 = c_mass * np.sum(wg * load * N1, axis=1)

    n = len(t)
    diag = np.zeros(n, dtype=complex)
    diag[:-1] += stiff + m00
    diag[1:] += stiff + m11
    off = -stiff + m01
    rhs = np.zeros(n, dtype=complex)
    rhs[:-1] += f0
    rhs[1:] += f1
    A = sp.diags([off[1:-1], diag[1:-1], off[1:-1]], [-1, 0, 1], format="csr")
    return System1D(t=t, i_T=i_T, matrix=A, rhs=rhs[1:-1])
