import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from rotframe.errors import IncompatibleSpaceError
from rotframe.gauge import random_gauge_spec
from rotframe.systems import axis_gauge
from rotframe.weylalg import (FLOAT, AngularSector, CommutatorAudit, DiffOperator, anomaly_rhs,
                              commutator, exact_ring, momentum_operators, normal_pullback,
                              position_operators, q_operators, residual_angular_momentum,
                              ring_for, weyl_symmetrize)

NAMES = ("x", "y", "z")
RING = exact_ring()


def x(name):
    return DiffOperator.coordinate(NAMES, RING, name)


def d(name):
    return DiffOperator.derivative(NAMES, RING, name)


def one():
    return DiffOperator.identity(NAMES, RING)


@st.composite
def operators(draw, max_terms=4):
    n_terms = draw(st.integers(0, max_terms))
    terms = {}
    for _ in range(n_terms):
        mono = tuple(draw(st.integers(0, 2)) for _ in NAMES)
        deriv = tuple(draw(st.integers(0, 2)) for _ in NAMES)
        re, im = draw(st.integers(-3, 3)), draw(st.integers(-3, 3))
        terms[(mono, deriv)] = RING(re + im * sympy.I)
    return DiffOperator(NAMES, RING, terms)


def test_canonical_pair():
    assert commutator(d("x"), x("x")) == one()
    assert commutator(x("x"), d("x")) == -one()
    assert commutator(d("x"), x("y")).is_zero()
    assert commutator(d("x"), d("y")).is_zero()


def test_composition_order():
    # d/dx acting after multiplication by x: x d + 1
    op = d("x") * x("x")
    assert op == x("x") * d("x") + one()
    poly = x("x") ** 3
    assert d("x").apply(poly) == (x("x") ** 2).scale(3)


def test_evaluate_and_degree():
    p = x("x") * x("y") + x("z").scale(2)
    assert p.evaluate([2, 3, 5]) == pytest.approx(16)
    assert p.degree == 2 and p.order == 0
    q = p * d("z") * d("z")
    assert q.order == 2 and q.total_degree == 4
    with pytest.raises(ValueError):
        q.evaluate([1, 1, 1])


@given(operators(), operators())
def test_commutator_matches_products(a, b):
    assert commutator(a, b) == a * b - b * a


@given(operators(), operators())
def test_antisymmetry(a, b):
    assert commutator(a, b) == -commutator(b, a)


@given(operators(3), operators(3), operators(3))
def test_jacobi_identity(a, b, c):
    total = (commutator(a, commutator(b, c)) + commutator(b, commutator(c, a))
             + commutator(c, commutator(a, b)))
    assert total.is_zero()


@given(operators(3), operators(3), operators(3))
def test_associativity(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(operators())
def test_json_round_trip(a):
    back = DiffOperator.from_json(a.to_json(), RING)
    assert back == a
    assert back.dumps() == a.dumps()


def test_weyl_symmetrize_expansion():
    c = x("x") * x("y")
    w = weyl_symmetrize(c, "x", "y")
    half = sympy.Rational(1, 2)
    expected = (c * d("x") * d("y") + (x("y") * d("y") + x("x") * d("x")).scale(half)
                + one().scale(sympy.Rational(1, 4)))
    assert w == expected


def test_incompatible_spaces():
    other = DiffOperator.coordinate(("u",), RING, "u")
    with pytest.raises(IncompatibleSpaceError):
        x("x") + other
    with pytest.raises(IncompatibleSpaceError):
        commutator(x("x"), DiffOperator.coordinate(NAMES, FLOAT, "x"))
    with pytest.raises(IncompatibleSpaceError):
        DiffOperator.coordinate(NAMES, RING, "w")


def test_axis_gauge_commutators():
    spec = axis_gauge()
    ring = ring_for(spec)
    r = position_operators(spec, ring=ring)
    p = momentum_operators(spec, ring=ring)
    i = DiffOperator.scalar(r[0][0].coords, ring, sympy.I)
    assert commutator(r[0][0], p[0][0]) == i
    assert commutator(r[0][1], p[0][1]).is_zero()
    assert commutator(r[0][2], p[0][2]).is_zero()
    assert commutator(r[1][1], p[1][1]).is_zero()
    assert commutator(r[1][2], p[1][2]) == i
    assert commutator(r[2][1], p[2][1]) == i


@pytest.mark.parametrize("seed", range(6))
def test_random_gauge_audit_is_exact(seed):
    rng = np.random.default_rng(seed)
    spec = random_gauge_spec(rng, 2 + seed % 3, translation_invariant=bool(seed % 2))
    audit = CommutatorAudit(spec)
    assert audit.exact, audit.to_dict()


def test_audit_detects_wrong_rhs():
    spec = random_gauge_spec(np.random.default_rng(3), 3)
    ring = ring_for(spec)
    lam = residual_angular_momentum(spec, ring=ring)
    naive = lam[2].scale(ring.i)
    assert not (commutator(lam[0], lam[1]) - naive).is_zero()
    assert commutator(lam[0], lam[1]) == anomaly_rhs(spec, 0, 1, ring)


def test_triangle_residual_angular_momentum(triangle_model):
    spec, basis = triangle_model.spec, triangle_model.basis
    ring = ring_for(spec, basis)
    lam = residual_angular_momentum(spec, basis, "normal", ring)
    names = basis.mode_names
    q4 = DiffOperator.coordinate(names, ring, "Q4")
    q5 = DiffOperator.coordinate(names, ring, "Q5")
    d4 = DiffOperator.derivative(names, ring, "Q4")
    d5 = DiffOperator.derivative(names, ring, "Q5")
    assert lam[0].is_zero() and lam[1].is_zero()
    assert lam[2] == (q5 * d4 - q4 * d5).scale(-ring.i)


def test_normal_form_agrees_with_pullback(triangle_model):
    spec, basis = triangle_model.spec, triangle_model.basis
    ring = ring_for(spec, basis)
    cart = residual_angular_momentum(spec, None, "cartesian", ring)
    normal = residual_angular_momentum(spec, basis, "normal", ring)
    for c, n in zip(cart, normal):
        assert normal_pullback(c, spec, basis, ring) == n


def test_tetrahedron_identities(tetrahedron_model):
    spec, basis = tetrahedron_model.spec, tetrahedron_model.basis
    ring = ring_for(spec, basis)
    lam = residual_angular_momentum(spec, basis, "normal", ring)
    two = [op.scale(2) for op in lam]
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        assert commutator(two[i], two[j]) == two[k].scale(ring.i)
        assert commutator(lam[i], lam[j]) != lam[k].scale(ring.i)
    names = basis.mode_names
    q = [DiffOperator.coordinate(names, ring, nm) for nm in names]
    radial = q[0] * q[0]
    for k in range(1, 5):
        radial = radial + q[k] * q[k]
    for op in lam:
        assert commutator(op, q[5]).is_zero()
        assert commutator(op, radial).is_zero()
    rows = q_operators(spec, basis.mode_rows, basis, "normal", ring)
    assert all(op.is_zero() for op in rows[5])


def test_angular_sector():
    for l in range(4):
        sec = AngularSector(l)
        s = sec.s
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            assert np.allclose(s[i] @ s[j] - s[j] @ s[i], 1j * s[k])
        assert np.allclose(sec.casimir(), l * (l + 1) * np.eye(sec.dim))
        assert np.allclose(np.diag(s[2]).real, np.arange(l, -l - 1, -1))
    with pytest.raises(ValueError):
        AngularSector(-1)


@pytest.mark.parametrize("seed", range(4))
def test_residual_angular_momentum_has_no_ordering_ambiguity(seed):
    spec = random_gauge_spec(np.random.default_rng(100 + seed), 3, bool(seed % 2))
    ring = ring_for(spec)
    r, p = position_operators(spec, ring=ring), momentum_operators(spec, ring=ring)
    lam = residual_angular_momentum(spec, ring=ring)
    for n, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        swapped = DiffOperator.zero(r[0][0].coords, ring)
        for g in range(spec.n_particles):
            swapped = swapped + p[g][b] * r[g][a] - p[g][a] * r[g][b]
        assert swapped == lam[n]


def test_weyl_symmetrize_constant_is_noop():
    c = one().scale(3)
    assert weyl_symmetrize(c, "x", "y") == c * d("x") * d("y")


@given(operators(2))
def test_weyl_correction_is_lower_order(seed_op):
    poly = DiffOperator(NAMES, RING, {k: v for k, v in seed_op.terms if not any(k[1])})
    for a, b in (("x", "x"), ("x", "z")):
        diff = weyl_symmetrize(poly, a, b) - poly * d(a) * d(b)
        assert diff.order <= 1
