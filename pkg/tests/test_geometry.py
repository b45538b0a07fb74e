import dataclasses
import math

import numpy as np
import pytest

import oracles as O
from rotframe.errors import HorizonError, QuadratureError
from rotframe.gauge import eckart_gauge, embed_coords, extend_basis
from rotframe.geometry import (CoordinateMap, GaussianWave, compare_with_oracles,
                               curvilinear_laplacian, fd_jacobian, fd_metric, gauss_hermite_nodes,
                               inner_product, lab_coordinates, matrix_elements, metric_blocks,
                               random_point)
from rotframe.rotation import rotation
from rotframe.spectra import OscillatorBasis, SectorOperator, full_hamiltonian_operator
from rotframe.systems import axis_gauge


def generic_basis(seed, n=4, ti=False):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0.5, 2.0, n)
    z = rng.normal(size=(n, 3))
    z -= (m[:, None] * z).sum(0) / m.sum()
    _, v = np.linalg.eigh(np.einsum("a,ai,aj->ij", m, z, z))
    z = z @ v
    spec = dataclasses.replace(eckart_gauge(m, z), translation_invariant=ti)
    return extend_basis(spec, origin=z), rng


def test_lab_coordinates_compose_rotation(triangle_model):
    basis = triangle_model.basis.numeric()
    theta, q = np.array([0.2, -0.4, 0.1]), np.array([0.3, 0.1, -0.2])
    flat = lab_coordinates(basis, theta, q)
    # flat coordinates are orthonormal components along the mass-weighted frame
    lab = np.einsum("c,cbi->bi", flat / np.sqrt(basis.norms_sq), basis.gamma)
    assert np.allclose(lab, embed_coords(basis, q) @ rotation(theta))
    m = basis.spec.masses
    assert np.dot(flat, flat) == pytest.approx(np.einsum("b,bi,bi->", m, lab, lab))


@pytest.mark.parametrize("chart", ["exponential", "euler-zyz"])
@pytest.mark.parametrize("ti", [False, True])
def test_closed_forms_match_oracles(chart, ti):
    basis, rng = generic_basis(11 + ti, ti=ti)
    for _ in range(3):
        cmap = random_point(basis, rng, chart, spread=0.1)
        c = compare_with_oracles(cmap)
        assert c.metric < 1e-6 and c.jacobian < 1e-6
        assert c.quantum_potential < 1e-5 and c.scaling < 1e-8


def test_model_oracles(triangle_model, tetrahedron_model):
    rng = np.random.default_rng(2)
    for model in (triangle_model, tetrahedron_model):
        cmap = random_point(model.basis, rng, "euler-zyz", spread=0.5)
        c = compare_with_oracles(cmap)
        assert max(c.metric, c.jacobian) < 1e-6 and c.quantum_potential < 1e-5


def test_inverse_jacobians(triangle_model):
    cmap = CoordinateMap(triangle_model.basis, [0.1, 0.2, -0.3], [0.2, -0.1, 0.05])
    assert np.allclose(cmap.dq_dcurv(), fd_jacobian(cmap), rtol=1e-6, atol=1e-8)
    m_inv, j = fd_metric(cmap)
    blocks = metric_blocks(cmap)
    assert np.allclose(blocks.full, blocks.full.T)
    assert np.allclose(blocks.full, m_inv, rtol=1e-6, atol=1e-9)
    assert blocks.J == pytest.approx(j, rel=1e-6)


def test_jacobian_uses_row_norms(triangle_model):
    basis = triangle_model.basis.numeric()
    cmap = CoordinateMap(basis, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    expected = np.prod(np.sqrt(basis.norms_sq[3:])) * cmap.geometry.jacobian
    assert metric_blocks(cmap).J == pytest.approx(expected, rel=1e-12)


def test_horizon_raises():
    spec = axis_gauge()
    basis = extend_basis(spec)
    with pytest.raises(HorizonError):
        CoordinateMap(basis, [0.1, 0.1, 0.1], np.zeros(basis.n_modes))


@pytest.mark.parametrize("ti", [False, True])
def test_laplacian_of_polynomial(ti):
    basis, rng = generic_basis(5, ti=ti)
    n = 12
    a = rng.normal(size=(n, n))
    a = a + a.T
    c = rng.normal(size=n)

    def grad(q):
        return 2 * a @ q + 3 * c * q**2

    coords = rng.normal(size=basis.n_modes + 3 * ti) * 0.3
    cmap = CoordinateMap(basis, rng.uniform(-1, 1, 3), coords)
    q = lab_coordinates(basis, cmap.theta, cmap.all_coords)
    exact = 2 * np.trace(a) + 6 * c @ q
    assert curvilinear_laplacian(cmap, grad) == pytest.approx(exact, rel=1e-7)


# ---------------------------------------------------------------- quadrature

def test_gauss_hermite_moments():
    sigma = [1.5, 3.0]
    nodes, w = gauss_hermite_nodes(sigma, 8)
    assert w.sum() == pytest.approx(math.pi / math.sqrt(4.5))
    # <Q_0^2> under exp(-sigma Q^2) is 1 / (2 sigma)
    assert (w * nodes[:, 0] ** 2).sum() / w.sum() == pytest.approx(1 / 3.0)


def test_oscillator_functions_orthonormal(triangle_model):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    basis = OscillatorBasis(sigma, 3)
    fs = [GaussianWave.oscillator(names, sigma, s) for s in basis.states]
    gram = matrix_elements(fs, SectorOperator(0, names, [], 1.0))
    assert np.allclose(gram, np.eye(len(fs)), atol=1e-12)


def test_jacobian_weight_against_independent_quadrature(triangle_model):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    f = GaussianWave.oscillator(names, sigma, (1, 0, 0))
    got = inner_product(f, f, "with_jacobian", basis=triangle_model.basis)
    b = triangle_model.basis.numeric()
    spec = b.spec
    t, w = np.polynomial.hermite.hermgauss(12)
    total = 0.0
    for i, j, k in np.ndindex(12, 12, 12):
        q = np.array([t[i], t[j], t[k]]) / np.sqrt(sigma)
        weight = w[i] * w[j] * w[k] / np.prod(np.sqrt(sigma))
        r = b.origin + np.einsum("c,cbi->bi", q, b.mode_rows)
        det = np.linalg.det(O.brute_q(spec.masses, spec.gamma, r)) / np.sqrt(np.prod(spec.norms_sq))
        # normalised first excited state along Q4: sqrt(2 sigma) Q4 times the ground state
        psi2 = (sigma / math.pi).prod() ** 0.5 * 2 * sigma[0] * q[0] ** 2
        total += weight * psi2 * max(det, 0.0)
    assert got.real == pytest.approx(total, rel=1e-10)


def test_quadrature_order_checked(triangle_model):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    f = GaussianWave.oscillator(names, sigma, (6, 0, 0))
    with pytest.raises(QuadratureError):
        inner_product(f, f, order=5)
    with pytest.raises(ValueError):
        inner_product(f, f, weight="flat")


@pytest.mark.parametrize("l", [0, 1])
def test_hamw4_hermitian_on_oscillator_functions(triangle_model, l):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    op = full_hamiltonian_operator(triangle_model, l, "hamW4", 2)
    basis = OscillatorBasis(sigma, 4, names)
    fs = [GaussianWave.oscillator(names, sigma, s, l, m)
          for s in basis.states for m in range(2 * l + 1)][:30]
    h = matrix_elements(fs, op)
    assert np.max(np.abs(h - h.conj().T)) <= 1e-8 * np.max(np.abs(h))
    rendered = op.matrix(basis).toarray()[:30, :30]
    assert np.allclose(h, rendered, atol=1e-11)


def test_wave_sector_mismatch(triangle_model):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    f = GaussianWave.oscillator(names, sigma, (0, 0, 0), l=1)
    with pytest.raises(ValueError):
        f.apply(SectorOperator(0, names, [], 1.0))
    with pytest.raises(ValueError):
        GaussianWave(names, sigma, 1, [])


def test_vibrational_angular_momentum_states_orthogonal(triangle_model):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    x = GaussianWave.oscillator(names, sigma, (1, 0, 0)).components[0]
    y = GaussianWave.oscillator(names, sigma, (0, 1, 0)).components[0]
    plus = GaussianWave(names, sigma, 0, [(x + y.scale(1j)).scale(2 ** -0.5)])
    minus = GaussianWave(names, sigma, 0, [(x - y.scale(1j)).scale(2 ** -0.5)])
    assert abs(inner_product(plus, minus)) < 1e-13
    assert inner_product(plus, plus) == pytest.approx(1.0)
    assert inner_product(minus, minus) == pytest.approx(1.0)


def test_oracle_split_matches_each_potential():
    from rotframe.gauge import eval_quantum_potentials
    from rotframe.geometry import chart_potential_term, quantum_potential_oracle
    basis, rng = generic_basis(3)
    for chart in ("exponential", "euler-zyz"):
        cmap = random_point(basis, rng, chart, spread=0.3)
        terms = quantum_potential_oracle(cmap)
        v1, v2 = eval_quantum_potentials(cmap.spec, cmap.R)
        assert terms.internal == pytest.approx(v2, rel=1e-5)
        assert terms.rotational == pytest.approx(v1 + chart_potential_term(cmap), rel=1e-5)


def test_equilibrium_rotational_block(triangle_model):
    basis = triangle_model.basis.numeric()
    cmap = CoordinateMap(basis, [0.0, 0.0, 0.0], np.zeros(basis.n_modes))
    blocks = metric_blocks(cmap)
    assert np.allclose(blocks.theta_theta, np.diag(1 / basis.spec.norms_sq), rtol=1e-12)
    assert np.allclose(blocks.theta_q, 0.0, atol=1e-15)


def test_ground_function_norm(triangle_model):
    names, sigma = triangle_model.mode_names, triangle_model.sigma
    f = GaussianWave.oscillator(names, sigma, (0, 0, 0))
    assert inner_product(f, f).real == pytest.approx(1.0, abs=1e-13)
    g = GaussianWave(names, sigma, 0, [f.components[0].scale(3.0)])
    norm = inner_product(g, g).real
    assert norm > 0 and inner_product(g, g) / norm == pytest.approx(1.0)
