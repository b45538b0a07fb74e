import dataclasses

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from rotframe.errors import (GaugeViolationError, HorizonError, InvalidMassError,
                             NonOrthogonalGaugeError, NotPrincipalAxesError, RankDeficientError,
                             SingularInertiaError, TranslationInvarianceError)
from rotframe.gauge import (Configuration, GaugeSpec, completeness_residual, eckart_gauge,
                            embed_coords, eval_gauge, eval_geometry, eval_quantum_potentials,
                            extend_basis, mass_inner, numeric, project_coords, random_gauge_spec)
from rotframe.rotation import random_rotation
from rotframe.systems import TRIANGLE_UNIT, axis_gauge, triangle

from oracles import brute_q


def principal(rng, n, masses):
    z = rng.normal(size=(n, 3))
    z -= (masses[:, None] * z).sum(0) / masses.sum()
    _, v = np.linalg.eigh(np.einsum("a,ai,aj->ij", masses, z, z))
    return z @ v


def test_eval_gauge_definition(rng):
    spec = axis_gauge()
    r = rng.normal(size=(3, 3))
    assert np.allclose(eval_gauge(spec, r), [r[0, 1], r[0, 2], r[1, 1]])


def test_axis_gauge_determinant(rng):
    spec = axis_gauge()
    for _ in range(20):
        r = rng.normal(size=(3, 3))
        r[0, 1:] = 0.0
        r[1, 1] = 0.0
        geo = eval_geometry(spec, Configuration(r))
        assert np.linalg.det(geo.Q) == pytest.approx(-r[0, 0] ** 2 * r[1, 2], rel=1e-12)
        assert geo.jacobian == pytest.approx(abs(np.linalg.det(geo.Q)), rel=1e-12)


def test_q_matrix_matches_loops(rng):
    spec = random_gauge_spec(rng, 4).numeric()
    r = rng.normal(size=(4, 3))
    geo = eval_geometry(spec, r)
    assert np.allclose(geo.Q, brute_q(spec.masses, spec.gamma, r), atol=1e-12)
    n = geo.Q.T @ np.diag(1 / spec.norms_sq) @ geo.Q
    assert np.allclose(geo.N, n)
    assert np.allclose(geo.N_inv @ geo.N, np.eye(3), atol=1e-9)
    assert geo.jacobian == pytest.approx(np.sqrt(np.linalg.det(geo.N)), rel=1e-10)


def test_zero_configuration_is_singular():
    geo = eval_geometry(axis_gauge(), np.zeros((3, 3)))
    assert np.all(geo.Q == 0) and geo.jacobian == 0 and geo.singular


def test_particle_at_origin_kills_jacobian(rng):
    r = rng.normal(size=(3, 3))
    r[0] = 0.0
    assert eval_geometry(axis_gauge(), r).jacobian == 0.0


def test_eckart_q_at_equilibrium(triangle_model):
    spec, basis = triangle_model.spec, triangle_model.basis
    q = eval_geometry(spec, numeric(basis.origin)).Q
    assert np.allclose(q, np.diag(numeric(spec.norms_sq)), atol=1e-9)


def test_triangle_and_tetrahedron_moments(triangle_model, tetrahedron_model):
    a2 = 400  # a = 1/epsilon = 20
    assert list(triangle_model.spec.norms_sq) == [a2 // 2, a2 // 2, a2]
    assert list(tetrahedron_model.spec.norms_sq) == [a2, a2, a2]
    assert triangle_model.spec.translation_invariant


def test_rotational_covariance(rng):
    spec = random_gauge_spec(rng, 4).numeric()
    r = rng.normal(size=(4, 3))
    v = random_rotation(rng)
    rotated = GaugeSpec(spec.masses, spec.gamma @ v.T, spec.norms_sq)
    q, q_rot = eval_geometry(spec, r).Q, eval_geometry(rotated, r @ v.T).Q
    assert np.allclose(q_rot, q @ v.T, atol=1e-10)


@given(st.integers(0, 10**6), st.integers(2, 5), st.booleans())
def test_random_specs_are_exactly_orthogonal(seed, n, ti):
    spec = random_gauge_spec(np.random.default_rng(seed), n, ti)
    assert spec.exact
    for a in range(3):
        for b in range(3):
            target = spec.norms_sq[a] if a == b else 0
            assert sympy.simplify(mass_inner(spec.masses, spec.gamma[a], spec.gamma[b]) - target) == 0
    if ti:
        for a in range(3):
            assert all(sum(spec.masses[k] * spec.gamma[a, k, i] for k in range(n)) == 0
                       for i in range(3))


@given(st.integers(0, 10**6), st.integers(2, 5), st.booleans())
def test_extended_basis_round_trip(seed, n, ti):
    rng = np.random.default_rng(seed)
    spec = random_gauge_spec(rng, n, ti).numeric()
    basis = extend_basis(spec, norm_sq=rng.uniform(0.5, 2.0))
    assert completeness_residual(basis) < 1e-10
    coords = rng.normal(size=basis.n_modes)
    r = embed_coords(basis, coords)
    assert np.max(np.abs(eval_gauge(spec, r))) < 1e-10
    if ti:
        assert np.allclose((spec.masses[:, None] * r).sum(0), 0, atol=1e-10)
    assert np.allclose(project_coords(basis, r), coords, atol=1e-10)


def test_exact_basis_stays_exact(triangle_model):
    assert triangle_model.basis.exact
    assert completeness_residual(triangle_model.basis) < 1e-12


def test_pure_mode_projects_to_unit_coordinate(triangle_model):
    basis = triangle_model.basis.numeric()
    r = basis.origin + basis.mode_rows[0]
    assert np.allclose(project_coords(basis, r), [1, 0, 0], atol=1e-12)
    assert np.allclose(project_coords(basis, basis.origin), 0)


def test_project_rejects_gauge_violation(triangle_model):
    basis = triangle_model.basis.numeric()
    r = basis.origin + 1e-3 * basis.gamma[0]
    with pytest.raises(GaugeViolationError):
        project_coords(basis, r)
    with pytest.raises(GaugeViolationError):
        project_coords(basis, basis.origin + 1e-3)


def test_extend_basis_seed_errors():
    spec = axis_gauge()
    seed = np.zeros((3, 3))
    seed[0, 1] = 1.0  # lies along the first gauge row
    with pytest.raises(RankDeficientError):
        extend_basis(spec, seeds=[seed])
    with pytest.raises(RankDeficientError):
        extend_basis(spec, seeds=np.eye(9).reshape(9, 3, 3)[:7])


def test_construction_errors():
    g = np.zeros((3, 2, 3))
    g[0, 0, 0] = g[1, 0, 1] = g[2, 0, 2] = 1.0
    with pytest.raises(InvalidMassError):
        GaugeSpec([0.0, 1.0], g, [0.0, 1.0, 1.0])
    with pytest.raises(NonOrthogonalGaugeError):
        GaugeSpec([1.0, 1.0], g, [2.0, 1.0, 1.0])
    bad = g.copy()
    bad[1, 0, 0] = 1.0
    with pytest.raises(NonOrthogonalGaugeError):
        GaugeSpec([1.0, 1.0], bad, [1.0, 2.0, 1.0])
    with pytest.raises(TranslationInvarianceError):
        GaugeSpec([1.0, 1.0], g, [1.0, 1.0, 1.0], translation_invariant=True)
    with pytest.raises(RankDeficientError):
        GaugeSpec.from_rows([1, 1], [g[0], g[0], g[1]])
    with pytest.raises(ValueError):
        GaugeSpec([1.0], g, [1.0, 1.0, 1.0])


def test_configuration_validation():
    with pytest.raises(ValueError):
        Configuration(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Configuration(np.zeros((3, 3)), frame="moving")


def test_eckart_errors(rng):
    z = np.array(TRIANGLE_UNIT, dtype=float)
    with pytest.raises(NotPrincipalAxesError):
        eckart_gauge([1, 1, 1], z + 0.1)
    with pytest.raises(NotPrincipalAxesError):
        eckart_gauge([1, 1, 1], z @ random_rotation(rng).T)
    line = np.array([[-1.0, 0, 0], [0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(SingularInertiaError):
        eckart_gauge([1, 1, 1], line)


def test_eckart_gauge_rows_and_moments(rng):
    m = rng.uniform(0.5, 2.0, 4)
    z = principal(rng, 4, m)
    spec = eckart_gauge(m, z)
    inertia = np.einsum("a,ai,ai->", m, z, z) * np.eye(3) - np.einsum("a,ai,aj->ij", m, z, z)
    assert np.allclose(spec.norms_sq, np.diag(inertia))
    for a in range(3):
        assert np.allclose(spec.gamma[a], np.cross(np.eye(3)[a], z))


def test_quantum_potentials_scale_inverse_square(rng):
    m = rng.uniform(0.5, 2.0, 4)
    z = principal(rng, 4, m)
    for ti in (False, True):
        spec = dataclasses.replace(eckart_gauge(m, z), translation_invariant=ti)
        basis = extend_basis(spec, origin=z)
        r = embed_coords(basis, 0.2 * rng.normal(size=basis.n_modes))
        v1, v2 = eval_quantum_potentials(spec, r)
        for c in (0.3, 2.5, 11.0):
            w1, w2 = eval_quantum_potentials(spec, c * r)
            assert w1 * c**2 == pytest.approx(v1, rel=1e-8)
            assert w2 * c**2 == pytest.approx(v2, rel=1e-8)


def test_v1_configuration_dependence_is_third_order():
    q = np.array([0.3, -0.5, 0.4])
    diffs = []
    for eps in ("1/20", "1/40", "1/80"):
        model = triangle(eps)
        basis = model.basis.numeric()
        v = eval_quantum_potentials(model.spec, embed_coords(basis, q))[0]
        v0 = eval_quantum_potentials(model.spec, basis.origin)[0]
        diffs.append(v - v0)
    ratios = [diffs[0] / diffs[1], diffs[1] / diffs[2]]
    assert all(7.0 < r < 9.0 for r in ratios)


def test_quantum_potentials_horizon():
    with pytest.raises(HorizonError):
        eval_quantum_potentials(axis_gauge(), np.zeros((3, 3)))


def test_axis_gauge_values():
    spec = axis_gauge()
    r = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, -1.0], [0.3, 0.2, 0.1]])
    assert np.allclose(eval_gauge(spec, r), 0)
    r = np.zeros((3, 3))
    assert np.allclose(eval_gauge(spec, r), 0)
    r[0] = [0.0, 1.0, 0.0]
    assert eval_gauge(spec, r)[0] == 1.0


def test_inverse_metric_from_q_inverse(rng):
    spec = random_gauge_spec(rng, 4).numeric()
    geo = eval_geometry(spec, rng.normal(size=(4, 3)))
    qi = np.linalg.inv(geo.Q)
    n_inv = np.einsum("d,jd,kd->jk", spec.norms_sq, qi, qi)
    assert np.allclose(n_inv, geo.N_inv, rtol=1e-9)
    w = np.linalg.eigvalsh(geo.N)
    assert np.all(w >= -1e-12) and geo.jacobian >= 0


def test_translation_rows_and_orthogonality(triangle_model):
    basis = triangle_model.basis.numeric()
    m = basis.spec.masses
    total = m.sum()
    n = len(basis.gamma) - 3
    for k in range(3):
        row = basis.gamma[n + k]
        r = np.sqrt(basis.norms_sq[n + k])
        expected = np.zeros_like(row)
        expected[:, k] = r / np.sqrt(total)
        assert np.allclose(row, expected)
    for b in range(n):
        assert np.allclose(np.einsum("a,ai->i", m, basis.gamma[b]), 0, atol=1e-10)
    # completeness of the full set of rows
    full = np.einsum("a,b,c,cai,cbj->aibj", m, m, 1 / basis.norms_sq, basis.gamma, basis.gamma)
    eye = np.einsum("a,ab,ij->aibj", m, np.eye(3), np.eye(3))
    assert np.allclose(full, eye, atol=1e-9)
