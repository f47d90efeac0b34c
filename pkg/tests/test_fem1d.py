import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermistor_opt import (
    Mesh1D,
    SingularSystemError,
    Tridiagonal,
    assemble_mass,
    assemble_stiffness,
    boundary_trace,
    integrate_nodal,
    star_norm_sq,
    thomas_solve,
)
from thermistor_opt.diagnostics import element_matrices_oracle


def test_mesh_basics():
    mesh = Mesh1D(4)
    assert mesh.h == 0.25
    assert mesh.nodes.tolist() == [0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        Mesh1D(0)


def test_mass_interior_row_n4():
    A = assemble_mass(Mesh1D(4))
    assert A.row(2) == pytest.approx((0.25 / 6, 2 * 0.25 / 3, 0.25 / 6), abs=1e-16)


@pytest.mark.parametrize("n", [4, 10, 100])
def test_mass_row_sums_match_basis_integrals(n):
    A = assemble_mass(Mesh1D(n)).to_dense()
    sums = A.sum(axis=1)
    assert np.allclose(sums[1:-1], 1.0 / n, rtol=0, atol=1e-15)
    assert sums[0] == pytest.approx(0.5 / n)


def test_mass_and_stiffness_n2_against_quadrature():
    mass, stiff = element_matrices_oracle(2)
    assert np.allclose(assemble_mass(Mesh1D(2)).to_dense(), mass, atol=1e-15)
    assert np.allclose(assemble_stiffness(Mesh1D(2)).to_dense(), stiff, atol=1e-13)


def test_stiffness_interior_row_n4():
    assert assemble_stiffness(Mesh1D(4)).row(1) == (-4.0, 8.0, -4.0)


@pytest.mark.parametrize("n", [2, 7, 64])
def test_stiffness_rows_sum_to_zero(n):
    assert np.max(np.abs(assemble_stiffness(Mesh1D(n)).to_dense().sum(axis=1))) <= 1e-12


@settings(max_examples=40)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_mass_spd_and_stiffness_kernel(n, seed):
    rng = np.random.default_rng(seed)
    mesh = Mesh1D(n)
    g = rng.standard_normal(n + 1)
    assert g @ assemble_mass(mesh).matvec(g) > 0
    ones = np.full(n + 1, 3.0)
    assert abs(ones @ assemble_stiffness(mesh).matvec(ones)) <= 1e-12 * n
    assert g @ assemble_stiffness(mesh).matvec(g) >= -1e-12


def test_thomas_identity():
    t = Tridiagonal(np.zeros(2), np.ones(3), np.zeros(2))
    assert thomas_solve(t, [3, -1, 4]).tolist() == [3, -1, 4]


def test_thomas_hand_solved_2x2():
    t = Tridiagonal([1.0], [2.0, 2.0], [1.0])
    assert np.allclose(thomas_solve(t, [3.0, 3.0]), [1.0, 1.0], atol=1e-15)


def test_thomas_zero_pivot():
    t = Tridiagonal([1.0], [0.0, 1.0], [1.0])
    with pytest.raises(SingularSystemError) as info:
        thomas_solve(t, [1.0, 1.0])
    assert info.value.row == 0


def test_thomas_shape_check():
    with pytest.raises(ValueError):
        thomas_solve(Tridiagonal([1.0], [3.0, 3.0], [1.0]), [1.0, 2.0, 3.0])


@settings(max_examples=60)
@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_thomas_matches_dense_oracle(n, seed):
    rng = np.random.default_rng(seed)
    sub, sup = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    diag = 2.0 + rng.uniform(0, 1, n)
    t = Tridiagonal(sub, diag, sup)
    rhs = rng.uniform(-1, 1, n)
    ref = np.linalg.solve(t.to_dense(), rhs)
    assert np.max(np.abs(thomas_solve(t, rhs) - ref)) <= 1e-9 * max(1.0, np.max(np.abs(ref)))


@settings(max_examples=30)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_thomas_round_trip_spd(n, seed):
    mesh = Mesh1D(n)
    t = assemble_mass(mesh) + 0.01 * assemble_stiffness(mesh)
    x = np.random.default_rng(seed).standard_normal(n + 1)
    rhs = t.matvec(x)
    assert np.max(np.abs(thomas_solve(t, rhs) - x)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_integrate_constant_and_linear():
    mesh = Mesh1D(10)
    assert integrate_nodal(mesh, np.ones(11)) == pytest.approx(1.0, abs=1e-15)
    assert integrate_nodal(mesh, mesh.nodes) == pytest.approx(0.5, abs=1e-15)


def test_integrate_quadratic_error_bound():
    mesh = Mesh1D(10)
    assert abs(integrate_nodal(mesh, mesh.nodes**2) - 1 / 3) <= 2e-3


def test_integrate_along_last_axis():
    mesh = Mesh1D(4)
    stack = np.vstack([np.ones(5), 2 * np.ones(5)])
    assert np.allclose(integrate_nodal(mesh, stack), [1.0, 2.0])


def test_star_norm_examples():
    mesh = Mesh1D(10)
    assert star_norm_sq(mesh, np.zeros(11), 1.0) == 0.0
    assert star_norm_sq(mesh, np.ones(11), 2.0) == pytest.approx(4.0)
    assert star_norm_sq(mesh, mesh.nodes, 1.0) == pytest.approx(2.0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=30), st.floats(0.01, 10))
def test_star_norm_dominates_h1_plus_boundary(values, m):
    g = np.array(values)
    mesh = Mesh1D(g.size - 1)
    semi = np.sum(np.diff(g) ** 2) / mesh.h
    lower = min(1.0, m) * (semi + g[0] ** 2 + g[-1] ** 2)
    assert star_norm_sq(mesh, g, m) >= lower * (1 - 1e-12) - 1e-300


def test_boundary_trace_examples():
    assert boundary_trace([5, 0, 0, 7]) == (5, 7)
    assert boundary_trace(np.full(4, 3.0)) == (3, 3)
    assert boundary_trace(Mesh1D(10).nodes) == (0, 1)


def test_tridiagonal_algebra():
    A = assemble_mass(Mesh1D(3))
    B = assemble_stiffness(Mesh1D(3))
    C = A + 2.0 * B
    assert np.allclose(C.to_dense(), A.to_dense() + 2 * B.to_dense())
    x = np.arange(4.0)
    assert np.allclose(C.add_to_diagonal([1, 0, 0, 1]).matvec(x), (C.to_dense() + np.diag([1, 0, 0, 1])) @ x)
