"""Rotation group SO(3): generators, charts and Haar integration.

Generators follow the component convention ``(T_j)_{ik} = eps_{ijk}``, so that
``T_j v = e_j x v``. A chart maps three parameters ``theta`` to a rotation
``U(theta)``; its two Jacobian matrices are defined by

    dU/dtheta_a U^T = Lambda_{ai} T_i,      U^T dU/dtheta_a = lambda_{ai} T_i,

and ``|Lambda|`` is the Haar density of the chart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ChartSingularError, OutOfChartError, QuadratureError

CHARTS = ("exponential", "euler-zyz")
SINGULAR_THRESHOLD = 1e-10
HAAR_VOLUME = 8.0 * np.pi**2
MIN_POINTS = 8

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0

# GENERATORS[j] is the matrix T_j with entries eps_{ijk}.
GENERATORS = np.ascontiguousarray(LEVI_CIVITA.transpose(1, 0, 2))


@dataclass(frozen=True)
class ChartMatrices:
    """Jacobian data of a chart at one parameter point."""

    Lambda: np.ndarray
    lam: np.ndarray
    haar_weight: float


def hat(v: np.ndarray) -> np.ndarray:
    """Return ``v_j T_j``, the matrix acting as ``x -> v x x``."""
    v = np.asarray(v, dtype=float)
    return np.einsum("ijk,j->ik", LEVI_CIVITA, v)


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat` on the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.einsum("ijk,ik->j", LEVI_CIVITA, m)


def _check_chart(chart: str) -> None:
    if chart not in CHARTS:
        raise ValueError(f"unknown chart {chart!r}; expected one of {CHARTS}")


def _series_coefficients(phi: float) -> tuple[float, float, float]:
    """sin(phi)/phi, (1-cos phi)/phi^2 and (phi-sin phi)/phi^3, stable at 0."""
    if phi < 1e-4:
        p2 = phi * phi
        return (1.0 - p2 / 6.0 + p2 * p2 / 120.0,
                0.5 - p2 / 24.0 + p2 * p2 / 720.0,
                1.0 / 6.0 - p2 / 120.0 + p2 * p2 / 5040.0)
    return (np.sin(phi) / phi,
            (1.0 - np.cos(phi)) / phi**2,
            (phi - np.sin(phi)) / phi**3)


def _rz(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _check_domain(theta: np.ndarray, chart: str) -> None:
    if theta.shape != (3,) or not np.all(np.isfinite(theta)):
        raise OutOfChartError(f"chart parameters must be 3 finite numbers, got {theta}")
    if chart == "exponential":
        if np.linalg.norm(theta) >= np.pi:
            raise OutOfChartError(
                f"exponential chart needs |theta| < pi, got {np.linalg.norm(theta):.6g}")
    else:
        alpha, beta, gamma = theta
        if not (-np.pi < alpha <= np.pi and -np.pi < gamma <= np.pi and 0.0 <= beta <= np.pi):
            raise OutOfChartError(
                f"euler-zyz chart needs alpha, gamma in (-pi, pi] and beta in [0, pi], got {theta}")


def rotation(theta, chart: str = "exponential") -> np.ndarray:
    """Rotation matrix ``U(theta)`` for the given chart."""
    _check_chart(chart)
    theta = np.asarray(theta, dtype=float)
    _check_domain(theta, chart)
    if chart == "exponential":
        phi = float(np.linalg.norm(theta))
        a, b, _ = _series_coefficients(phi)
        k = hat(theta)
        return np.eye(3) + a * k + b * (k @ k)
    alpha, beta, gamma = theta
    return _rz(alpha) @ _ry(beta) @ _rz(gamma)


def chart_matrices(theta, chart: str = "exponential") -> ChartMatrices:
    """Closed-form ``Lambda``, ``lambda`` and Haar weight ``|Lambda|``.

    For the exponential chart ``Lambda^T`` is the left Jacobian of the
    exponential map. For Euler angles ``U = Rz(alpha) Ry(beta) Rz(gamma)`` the
    determinant of ``Lambda`` is ``-sin(beta)``; the Haar weight is its modulus.

    Raises:
        ChartSingularError: if ``|Lambda|`` falls below 1e-10.
        OutOfChartError: if ``theta`` lies outside the chart domain.
    """
    _check_chart(chart)
    theta = np.asarray(theta, dtype=float)
    _check_domain(theta, chart)
    u = rotation(theta, chart)
    if chart == "exponential":
        phi = float(np.linalg.norm(theta))
        _, b, c = _series_coefficients(phi)
        k = hat(theta)
        left = np.eye(3) + b * k + c * (k @ k)
        lam_big = left.T
    else:
        alpha, beta, _ = theta
        ca, sa, cb, sb = np.cos(alpha), np.sin(alpha), np.cos(beta), np.sin(beta)
        lam_big = np.array([
            [0.0, 0.0, 1.0],
            [-sa, ca, 0.0],
            [ca * sb, sa * sb, cb],
        ])
    weight = abs(float(np.linalg.det(lam_big)))
    if weight < SINGULAR_THRESHOLD:
        raise ChartSingularError(f"|Lambda| = {weight:.3g} at theta = {theta}")
    return ChartMatrices(Lambda=lam_big, lam=lam_big @ u, haar_weight=weight)


def chart_parameters(u: np.ndarray, chart: str = "exponential") -> np.ndarray:
    """Chart parameters of a rotation matrix (principal branch)."""
    _check_chart(chart)
    u = np.asarray(u, dtype=float)
    if chart == "exponential":
        cos_phi = np.clip(0.5 * (np.trace(u) - 1.0), -1.0, 1.0)
        phi = float(np.arccos(cos_phi))
        if phi < 1e-7:
            return vee(u)
        if np.pi - phi < 1e-6:
            raise OutOfChartError("rotation by pi lies on the boundary of the exponential chart")
        return vee(u) * phi / np.sin(phi)
    beta = float(np.arccos(np.clip(u[2, 2], -1.0, 1.0)))
    alpha = float(np.arctan2(u[1, 2], u[0, 2]))
    gamma = float(np.arctan2(u[2, 1], -u[2, 0]))
    if alpha <= -np.pi:
        alpha += 2 * np.pi
    if gamma <= -np.pi:
        gamma += 2 * np.pi
    return np.array([alpha, beta, gamma])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotation from a uniformly random unit quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def haar_integrate(f: Callable[[np.ndarray], complex], chart: str = "exponential",
                   points: int = 16) -> complex:
    """Integrate ``f(U)`` over SO(3) with measure ``|Lambda| d^3 theta``.

    Uses Gauss-Legendre nodes along non-periodic directions and the periodic
    trapezoidal rule along angles. ``points`` is the resolution per parameter;
    periodic angles get twice as many nodes.

    Raises:
        QuadratureError: if ``points`` is below 8.
    """
    _check_chart(chart)
    if points < MIN_POINTS:
        raise QuadratureError(f"need at least {MIN_POINTS} points per parameter, got {points}")
    x, w = np.polynomial.legendre.leggauss(points)
    n_periodic = 2 * points
    ang = -np.pi + 2 * np.pi * (np.arange(n_periodic) + 0.5) / n_periodic
    d_ang = 2 * np.pi / n_periodic
    total = 0.0
    if chart == "exponential":
        # Spherical coordinates: the phi^2 volume factor cancels the 1/phi^2
        # in the density 2(1 - cos phi)/phi^2.
        phis = 0.5 * np.pi * (x + 1.0)
        w_phi = 0.5 * np.pi * w
        for phi, wp in zip(phis, w_phi):
            radial = 2.0 * (1.0 - np.cos(phi)) * wp
            for ct, wt in zip(x, w):
                st = np.sqrt(1.0 - ct * ct)
                for psi in ang:
                    axis = np.array([st * np.cos(psi), st * np.sin(psi), ct])
                    total = total + radial * wt * d_ang * f(rotation(phi * axis, chart))
        return total
    betas = 0.5 * np.pi * (x + 1.0)
    w_beta = 0.5 * np.pi * w
    for beta, wb in zip(betas, w_beta):
        weight = np.sin(beta) * wb * d_ang * d_ang
        for alpha in ang:
            for gamma in ang:
                total = total + weight * f(_rz(alpha) @ _ry(beta) @ _rz(gamma))
    return total
