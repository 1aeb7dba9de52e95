import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from periodic_pml.errors import DegenerateElementError, EmptySystemError, SizeMismatchError, ValidationError
from periodic_pml.fem import (Mesh, apply_dirichlet, assemble, assemble_1d, build_dofmap, build_mesh,
                              dump_matrix)
from periodic_pml.model import (BumpProfile, ExpDecayProfile, Geometry, ModalComponent, PotentialSpec,
                                SourceSpec, TrigPoly)
from periodic_pml.modes import lambda_minus
from periodic_pml.solver import solve

FLAT = Geometry(TrigPoly(), T=2.0, R=4.0)
SRC = SourceSpec(components=(ModalComponent(0, BumpProfile(0.5, 1.5)), ModalComponent(1, BumpProfile(0.2, 1.0), 0.5j)))
POT = PotentialSpec(kind="power_decay", amplitude=0.5, nu=-1.0, offset=1.0,
                    y_factor=TrigPoly(cos=(1.0, 0.4)))
CURVED = Geometry(TrigPoly(cos=(-0.2, -0.1)), T=2.0, R=3.0)


def system(alpha=0.0, geom=CURVED, Ny=8, Nt_phys=4, Nt_pml=4, pot=POT, src=SRC, k=1.5, phi=0.6):
    mesh = build_mesh(geom, Ny, Nt_phys, Nt_pml)
    dm = build_dofmap(mesh, alpha)
    return mesh, dm, assemble(mesh, dm, pot, src, k, alpha, phi, geom.T)


class TestMesh:
    def test_flat(self):
        m = build_mesh(FLAT, 4, 2, 2)
        assert (m.Ny, m.Nt) == (4, 4)
        assert m.t.shape == (5, 5)
        assert np.allclose(m.t[0], [0, 1, 2, 3, 4])
        assert m.is_flat and m.i_T == 2
        assert m.elements.shape == (16, 4)

    def test_curved(self):
        m = build_mesh(Geometry(TrigPoly(cos=(-0.2, -0.1)), 2.0, 3.0), 8, 4, 2)
        assert np.array_equal(m.t[:, 0], -0.2 - 0.1 * np.cos(m.y)) or np.allclose(m.t[:-1, 0], -0.2 - 0.1 * np.cos(m.y[:-1]), atol=0)
        assert np.all(m.t[:, m.i_T] == 2.0)
        assert np.all(m.t[:, -1] == 3.0)
        assert not m.is_flat

    def test_positive_g(self):
        with pytest.raises(ValidationError):
            build_mesh(Geometry(TrigPoly(cos=(0.0, 0.5)), 2.0, 3.0), 8, 4, 2)

    def test_degenerate(self):
        y = np.linspace(-np.pi, np.pi, 5)
        t = np.tile([0.0, 1.0, 2.0, 3.0], (5, 1))
        t[2, 1] = 2.5  # pushes a node above its upper neighbour
        mesh = Mesh(y=y, t=t, i_T=2, T=2.0, R=3.0)
        with pytest.raises(DegenerateElementError) as exc:
            mesh.quadrature
        assert exc.value.cell is not None

    @pytest.mark.parametrize("Ny,a,b", [(3, 2, 2), (5, 2, 2), (4, 1, 2), (4, 2, 1)])
    def test_bad_sizes(self, Ny, a, b):
        with pytest.raises(ValidationError):
            build_mesh(FLAT, Ny, a, b)

    def test_quadrature_area(self):
        m = build_mesh(CURVED, 16, 6, 3)
        area = m.quadrature.wdet.sum()
        # area of {g(y) < t < 3}, g = -0.2 - 0.1 cos y, is 2 pi * 3.2
        assert area == pytest.approx(2 * np.pi * 3.2, rel=1e-12)


class TestDofMap:
    def test_count(self):
        dm = build_dofmap(build_mesh(FLAT, 4, 2, 2), 0.0)
        assert dm.n_dof == 12
        assert dm.prolong.shape == (25, 12)

    def test_multiplier(self):
        dm = build_dofmap(build_mesh(FLAT, 4, 2, 2), 0.25)
        assert dm.n_dof == 12
        assert dm.bloch == pytest.approx(1j)
        assert np.allclose(dm.multiplier[-1], 1j)
        assert np.array_equal(dm.index[-1], dm.index[0])

    def test_empty(self):
        y = np.linspace(-np.pi, np.pi, 5)
        t = np.tile([0.0, 2.0], (5, 1))
        mesh = Mesh(y=y, t=t, i_T=1, T=2.0, R=2.0)
        with pytest.raises(EmptySystemError):
            build_dofmap(mesh, 0.0)

    def test_each_free_node_once(self):
        mesh = build_mesh(CURVED, 6, 3, 3)
        dm = build_dofmap(mesh, 0.3)
        idx = dm.index[:-1, 1:-1].ravel()
        assert sorted(idx) == list(range(dm.n_dof))
        assert np.all(dm.index[:, 0] == -1) and np.all(dm.index[:, -1] == -1)


class TestAssemble:
    def test_zero_rhs(self):
        _, _, s = system(src=SourceSpec(), pot=PotentialSpec())
        assert not np.any(s.rhs)

    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    def test_symmetric(self, alpha):
        _, _, s = system(alpha=alpha)
        A = s.matrix
        d = abs(A - A.T)
        assert (d.max() if d.nnz else 0.0) <= 1e-14 * abs(A).max()

    @given(st.floats(0.0, 0.99))
    def test_transpose_is_conjugate_phase(self, alpha):
        # A(alpha)^T = A(-alpha) = A(1 - alpha) for every Bloch parameter
        _, _, s1 = system(alpha=alpha, Ny=6, Nt_phys=3, Nt_pml=3)
        _, _, s2 = system(alpha=(1.0 - alpha) % 1.0, Ny=6, Nt_phys=3, Nt_pml=3)
        d = abs(s1.matrix.T - s2.matrix)
        assert (d.max() if d.nnz else 0.0) <= 1e-14 * abs(s1.matrix).max()

    def test_bloch_shift(self):
        # alpha -> alpha + 1 relabels the modes n -> n + 1 and leaves the matrix alone
        src = SourceSpec(components=(ModalComponent(1, BumpProfile(0.5, 1.5)),))
        shifted = SourceSpec(components=(ModalComponent(0, BumpProfile(0.5, 1.5)),))
        _, _, s1 = system(alpha=0.3, src=src)
        _, _, s2 = system(alpha=1.3, src=shifted)
        assert abs(s1.matrix - s2.matrix).max() <= 1e-14 * abs(s1.matrix).max()
        assert np.allclose(s1.rhs, s2.rhs, rtol=0, atol=1e-13)

    def test_stencil(self):
        _, _, s = system(alpha=0.2, Ny=8)
        nnz = np.diff(s.matrix.indptr)
        assert nnz.max() <= 9

    def test_patch(self):
        # pure Laplacian (k = q = 0, phi = 0): rows of interior nodes annihilate constants
        mesh = build_mesh(CURVED, 8, 4, 4)
        dm = build_dofmap(mesh, 0.0)
        s = assemble(mesh, dm, PotentialSpec(), SourceSpec(), 0.0, 0.0, 0.0, 2.0)
        sums = np.asarray(s.nodal_matrix.sum(axis=1)).ravel().reshape(mesh.Nt + 1, mesh.Ny + 1)
        assert np.max(np.abs(sums[1:-1, 1:-1])) <= 1e-13
        # with the identification the periodic columns close up too
        assert np.max(np.abs(s.matrix.sum(axis=1))[:]) > 0  # Dirichlet rows are eliminated
        ones = np.ones(dm.n_dof)
        inner = s.matrix @ ones
        rows = dm.index[:-1, 2:-2].ravel()
        assert np.max(np.abs(inner[rows])) <= 1e-13

    def test_T_mismatch(self):
        mesh = build_mesh(FLAT, 4, 2, 2)
        with pytest.raises(ValidationError):
            assemble(mesh, build_dofmap(mesh, 0.0), PotentialSpec(), SRC, 1.5, 0.0, 0.5, 2.5)

    def test_dump(self, tmp_path):
        _, _, s = system(Ny=4, Nt_phys=2, Nt_pml=2)
        p = tmp_path / "A.txt"
        dump_matrix(s, p)
        rows = np.loadtxt(p)
        A = sp.coo_matrix((rows[:, 2] + 1j * rows[:, 3], (rows[:, 0].astype(int), rows[:, 1].astype(int))),
                          shape=s.matrix.shape)
        assert abs(A - s.matrix).max() == 0


class TestDirichlet:
    def test_zero(self):
        mesh, dm, s = system()
        s2 = apply_dirichlet(s, dm, np.zeros(mesh.Ny + 1))
        assert np.array_equal(s2.rhs, s.rhs)

    def test_size(self):
        mesh, dm, s = system()
        with pytest.raises(SizeMismatchError):
            apply_dirichlet(s, dm, np.zeros(mesh.Ny))

    def test_linearity(self):
        mesh, dm, s = system()
        rng = np.random.default_rng(0)
        G = rng.normal(size=mesh.Ny + 1) + 1j * rng.normal(size=mesh.Ny + 1)
        s1 = apply_dirichlet(s, dm, G)
        s0 = apply_dirichlet(s1, dm, np.zeros(mesh.Ny + 1))
        assert np.array_equal(s0.rhs, s.rhs)

    def test_matched_mode(self):
        # boundary data = scaled outgoing mode at t = R, no source: the field is that mode
        k, alpha, phi, T, R, n = 1.5, 0.2, math.pi / 4, 2.0, 3.0, 1
        lam = complex(lambda_minus(k, alpha, n))
        geom = Geometry(TrigPoly(), T=T, R=R)
        mesh = build_mesh(geom, 64, 80, 80)
        dm = build_dofmap(mesh, alpha)
        s = assemble(mesh, dm, PotentialSpec(), SourceSpec(), k, alpha, phi, T)

        # sin(lambda z) vanishes on the bottom, so only the top carries data
        def exact(y, t):
            z = np.where(t <= T, t + 0j, T + np.exp(1j * phi) * (t - T))
            return np.sin(lam * z) * np.exp(1j * (n + alpha) * y)
        G = exact(mesh.y, np.full(mesh.Ny + 1, R))
        f = solve(apply_dirichlet(s, dm, G))
        ref = exact(mesh.y[:, None], mesh.t)
        assert np.max(np.abs(f.values - ref)) < 5e-3 * np.max(np.abs(ref))
        assert np.allclose(f.values[:, -1], G)


class TestOneD:
    def test_interface_row(self):
        phi, h = 0.7, 0.1
        t = np.arange(0, 41) * h
        s = assemble_1d(t, 20, 0.0, 0.0, phi, 2.0)
        A = s.matrix.toarray()
        r = 20 - 1  # interior numbering starts at node 1
        assert A[r, r - 1] == pytest.approx(np.exp(-1j * phi) / h)
        assert A[r, r + 1] == pytest.approx(np.exp(-2j * phi) / h)
        assert A[r, r] == pytest.approx(-(np.exp(-1j * phi) + np.exp(-2j * phi)) / h)

    def test_jump_condition(self):
        k, phi, T = 1.5, 0.6, 2.0
        src = BumpProfile(0.5, 1.5)
        errs = []
        for N in (50, 100, 200, 400):
            h = T / N
            t = np.concatenate([np.linspace(0, T, N + 1), T + h * np.arange(1, 3 * N + 1)])
            s = assemble_1d(t, N, k, 0.0, phi, T, f_phys=src)
            u = np.concatenate([[0], spla.spsolve(s.matrix.tocsc(), s.rhs), [0]])
            dminus = (u[N] - u[N - 1]) / h
            dplus = (u[N + 1] - u[N]) / h
            errs.append(abs(dminus - np.exp(-1j * phi) * dplus) / abs(dplus))
        assert all(b < a for a, b in zip(errs, errs[1:]))
        rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert rates[-1] > 0.8

    def test_bad_nodes(self):
        with pytest.raises(ValidationError):
            assemble_1d(np.array([0, 1, 1, 2.0]), 1, 1.0, 0.0, 0.5, 1.0)
        with pytest.raises(ValidationError):
            assemble_1d(np.array([0, 1, 2, 3.0]), 1, 1.0, 0.0, 0.5, 1.5)


def test_2d_equals_1d():
    # n = 0, alpha = 0, flat bottom, t-only potential: the 2D solution is the 1D one
    k, phi, T, R = 1.5, 0.7, 2.0, 4.0
    pot = PotentialSpec(kind="power_decay", amplitude=0.5)
    src = SourceSpec(components=(ModalComponent(0, BumpProfile(0.5, 1.5)),))
    mesh = build_mesh(Geometry(TrigPoly(), T, R), 4, 20, 20)
    dm = build_dofmap(mesh, 0.0)
    f = solve(assemble(mesh, dm, pot, src, k, 0.0, phi, T))
    from periodic_pml.model import potential_eval, potential_scaled_eval
    s = assemble_1d(mesh.t[0], mesh.i_T, k, 0.0, phi, T,
                    q_phys=lambda t: potential_eval(pot, 0.0, t),
                    q_scaled=lambda t: potential_scaled_eval(pot, 0.0, t, T, phi),
                    f_phys=src.components[0].profile)
    u = spla.spsolve(s.matrix.tocsc(), s.rhs)
    # 2D integrates over y in (-pi, pi): identical up to the factor in both sides
    assert np.allclose(f.values[0, 1:-1], u, rtol=1e-10, atol=1e-13)
    assert np.allclose(f.values, f.values[:1], rtol=1e-10, atol=1e-13)


def test_exp_source_assembles():
    src = SourceSpec(components=(ModalComponent(0, ExpDecayProfile(2.0, 0.0)),), tau=1.0)
    _, _, s = system(src=src)
    assert np.all(np.isfinite(s.rhs)) and np.any(s.rhs)
