import warnings

import numpy as np
import pytest

from rotframe.errors import HorizonError
from rotframe.gauge import eval_gauge, eval_geometry
from rotframe.gribov import (SearchQualityWarning, euler_grid, find_copies, geodesic_distance,
                             random_lab_configurations, verify_identity_resolution)
from rotframe.rotation import random_rotation
from rotframe.systems import axis_gauge, axis_gauge_predicates


def analytic_axis_copies(r):
    """The four rotations placing particle 1 on the x axis and particle 2 in the xz plane."""
    out = []
    for s1 in (1, -1):
        ex = s1 * r[0] / np.linalg.norm(r[0])
        for s2 in (1, -1):
            perp = r[1] - (r[1] @ ex) * ex
            ez = s2 * perp / np.linalg.norm(perp)
            ey = np.cross(ez, ex)
            out.append(np.array([ex, ey, ez]))
    return out


def test_euler_grid_is_rotations():
    g = euler_grid(4)
    assert g.shape == (64, 3, 3)
    assert np.allclose(np.einsum("kij,kil->kjl", g, g), np.eye(3), atol=1e-12)
    assert np.allclose(np.linalg.det(g), 1.0)


def test_geodesic_distance():
    rng = np.random.default_rng(0)
    u = random_rotation(rng)
    assert geodesic_distance(u, u) == pytest.approx(0.0, abs=1e-7)
    flip = np.diag([1.0, -1.0, -1.0])
    assert geodesic_distance(u, flip @ u) == pytest.approx(np.pi)


def test_axis_gauge_roots_match_analytic():
    spec, preds = axis_gauge(), axis_gauge_predicates()
    rng = np.random.default_rng(4)
    for r in random_lab_configurations(3, 3, rng):
        rep = find_copies(spec, r, preds, grid=12)
        ref = analytic_axis_copies(r)
        assert rep.total_count == 4
        for root in rep.roots:
            assert min(np.linalg.norm(root.rotation - v) for v in ref) < 1e-8
            body = r @ root.rotation.T
            assert np.max(np.abs(eval_gauge(spec, body))) < 1e-9
            geo = eval_geometry(spec, body)
            assert root.jacobian == pytest.approx(geo.jacobian, rel=1e-10)
            assert root.det_sign == np.sign(np.linalg.det(geo.Q))
        assert (rep.count_jac_positive, rep.count_fully_fixed) == (2, 1)
        assert rep.roots[0].det_sign > 0 and all(rep.roots[0].flags)


def test_roots_are_equivariant():
    spec = axis_gauge()
    rng = np.random.default_rng(8)
    r = random_lab_configurations(3, 1, rng)[0]
    v = random_rotation(rng)
    a = find_copies(spec, r, grid=12)
    b = find_copies(spec, r @ v.T, grid=12)
    assert a.total_count == b.total_count
    for root in a.roots:
        assert min(np.linalg.norm(root.rotation @ v.T - x.rotation) for x in b.roots) < 1e-8


def test_gauge_satisfying_configuration_has_identity_root():
    spec = axis_gauge()
    # det Q = -R_1x^2 R_2z, so the identity copy has J < 0 here
    r = np.array([[1.3, 0.0, 0.0], [0.4, 0.0, 0.9], [-0.2, 0.5, 0.3]])
    rep = find_copies(spec, r, axis_gauge_predicates(), grid=12)
    ident = [x for x in rep.roots if np.allclose(x.rotation, np.eye(3), atol=1e-9)]
    assert len(ident) == 1 and ident[0].det_sign == -1 and all(ident[0].flags)
    fixed = [x for x in rep.roots if x.det_sign > 0 and all(x.flags)]
    assert len(fixed) == 1
    assert np.allclose(fixed[0].rotation, np.diag([1.0, -1.0, -1.0]), atol=1e-9)


def test_near_horizon_roots_merge():
    spec = axis_gauge((1, 1))
    gaps = []
    for z in (1e-1, 1e-2, 1e-3):
        r = np.array([[1.1, 0.0, 0.0], [0.5, z, z / 2]])
        rep = find_copies(spec, r, grid=12)
        # copies are compared through their body-frame positions
        body = [r @ x.rotation.T for x in rep.roots]
        gaps.append(min(np.linalg.norm(a - b) for k, a in enumerate(body) for b in body[k + 1:]))
        assert min(x.jacobian for x in rep.roots) < 2 * z
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_identity_resolution_report():
    spec = axis_gauge()
    samples = random_lab_configurations(3, 4, np.random.default_rng(1))
    rep = verify_identity_resolution(spec, samples, axis_gauge_predicates(), grid=12)
    assert rep.total == [4] * 4 and rep.multiplicity == 2 and rep.constant and rep.resolved
    plain = verify_identity_resolution(spec, samples, grid=12)
    assert plain.multiplicity == 2 and not plain.resolved


def test_horizon_configuration():
    spec = axis_gauge()
    # particles 1 and 2 collinear with the origin: R_2 cannot be rotated off the x axis
    r = np.array([[1.0, 0.2, 0.1], [2.0, 0.4, 0.2], [0.3, -0.5, 0.8]])
    with pytest.raises(HorizonError), warnings.catch_warnings():
        warnings.simplefilter("ignore", SearchQualityWarning)
        find_copies(spec, r, grid=8)


def test_report_json():
    spec = axis_gauge()
    r = random_lab_configurations(3, 1, np.random.default_rng(2))[0]
    text = find_copies(spec, r, axis_gauge_predicates(), grid=8).to_json()
    assert '"total_count": 4' in text and '"count_fully_fixed": 1' in text


def test_gauge_fixed_configuration_keeps_identity_copy():
    spec = axis_gauge()
    r = np.array([[1.3, 0.0, 0.0], [0.4, 0.0, -0.9], [-0.2, 0.5, 0.3]])
    rep = find_copies(spec, r, axis_gauge_predicates(), grid=12)
    fixed = [x for x in rep.roots if x.det_sign > 0 and all(x.flags)]
    assert len(fixed) == 1 and np.allclose(fixed[0].rotation, np.eye(3), atol=1e-9)
