"""Reference systems: Eckart models of small clusters and the axis gauge.

Units are hbar = m = omega = 1, so internal rows have squared norm
``hbar/omega = 1`` and the equilibrium size is ``a = 1/epsilon`` with
``epsilon = sqrt(hbar / (m omega a^2))``. Exact models keep every array in
sympy numbers; ``epsilon`` is taken as an exact rational.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy

from .gauge import (ExtendedBasis, GaugeSpec, as_array, eckart_gauge, extend_basis,
                    is_exact, mass_inner, numeric)

_S3 = sympy.sqrt(3)
_S2 = sympy.sqrt(2)
_H = sympy.Rational(1, 2)

# Equilateral triangle of unit side on its principal axes.
TRIANGLE_UNIT = [[-_H, -1 / (2 * _S3), 0], [_H, -1 / (2 * _S3), 0], [0, 1 / _S3, 0]]

# Degenerate pair (sigma^2 = 3/2) and breathing mode (sigma^2 = 3) of the
# triangle, unit mass-weighted norm, particle-major (x, y, z) components.
TRIANGLE_MODES = [
    [[_H, -1 / (2 * _S3), 0], [-_H, -1 / (2 * _S3), 0], [0, 1 / _S3, 0]],
    [[-1 / (2 * _S3), -_H, 0], [-1 / (2 * _S3), _H, 0], [1 / _S3, 0, 0]],
    [[-_H, -1 / (2 * _S3), 0], [_H, -1 / (2 * _S3), 0], [0, 1 / _S3, 0]],
]

# Regular tetrahedron of unit side on its principal axes.
TETRAHEDRON_UNIT = [[s * v / (2 * _S2) for v in vec] for s, vec in
                    [(1, (1, 1, 1)), (1, (1, -1, -1)), (1, (-1, 1, -1)), (1, (-1, -1, 1))]]


def as_rational(value) -> sympy.Rational:
    """Exact rational from an int, Fraction, decimal string or float."""
    if isinstance(value, sympy.Rational):
        return value
    f = Fraction(str(value)) if isinstance(value, (str, float)) else Fraction(value)
    return sympy.Rational(f.numerator, f.denominator)


def pairwise_harmonic_hessian(reference, masses, omega=1) -> np.ndarray:
    """Hessian of ``sum_{a<b} (k/2) (e_ab . (dR_a - dR_b))^2`` with ``k = m omega^2``.

    ``e_ab`` is the unit bond vector of the reference. For unequal masses the
    spring constant uses the mean mass.
    """
    z = as_array(reference)
    exact = is_exact(z)
    n = z.shape[0]
    m = as_array(masses, exact=exact or None)
    k = sum(m) / n * (omega**2 if exact else float(omega) ** 2)
    h = np.empty((3 * n, 3 * n), dtype=object if exact else float)
    h[:] = sympy.Integer(0) if exact else 0.0
    for a in range(n):
        for b in range(a + 1, n):
            d = z[a] - z[b]
            d2 = sum(x * x for x in d)
            block = np.empty((3, 3), dtype=h.dtype)
            for i in range(3):
                for j in range(3):
                    v = k * d[i] * d[j] / d2
                    block[i, j] = sympy.radsimp(v) if exact else v
            for (p, q, s) in ((a, a, 1), (b, b, 1), (a, b, -1), (b, a, -1)):
                h[3 * p:3 * p + 3, 3 * q:3 * q + 3] = h[3 * p:3 * p + 3, 3 * q:3 * q + 3] + s * block
    return h


def normal_modes(spec: GaugeSpec, hessian, n_modes: int | None = None):
    """Numeric normal modes orthogonal to the gauge and translation rows.

    Returns ``(sigma_sq, rows)`` with ``rows[c]`` of shape ``(N, 3)`` and unit
    mass-weighted norm, sorted by ascending ``sigma_sq``.
    """
    s = spec.numeric()
    m = np.repeat(s.masses, 3)
    h = numeric(hessian)
    proj_rows = [g.reshape(-1) for g in s.gamma]
    if s.translation_invariant:
        for i in range(3):
            t = np.zeros((s.n_particles, 3))
            t[:, i] = 1.0
            proj_rows.append(t.reshape(-1))
    w = np.sqrt(m)
    b = np.array([w * r for r in proj_rows]).T
    qb, _ = np.linalg.qr(b)
    proj = np.eye(len(m)) - qb @ qb.T
    hw = proj @ (h / np.outer(w, w)) @ proj
    vals, vecs = np.linalg.eigh(hw)
    keep = [k for k in range(len(vals)) if np.linalg.norm(qb.T @ vecs[:, k]) < 1e-8]
    keep = sorted(keep, key=lambda k: vals[k])
    if n_modes is not None:
        keep = keep[:n_modes]
    rows = np.array([(vecs[:, k] / w).reshape(s.n_particles, 3) for k in keep])
    return vals[keep], rows


def exact_normal_modes(spec: GaugeSpec, hessian):
    """Exact normal modes via eigenspaces of the mass-weighted Hessian.

    Eigenvalues are recognised from their numeric values and each eigenspace is
    computed as an exact null space, then mass-orthogonalised and normalised.
    """
    n = spec.n_particles
    count = 3 * n - 6 if spec.translation_invariant else 3 * n - 3
    approx, _ = normal_modes(spec, hessian)
    m = list(spec.masses)
    h = sympy.Matrix(hessian)
    mw = sympy.diag(*[m[k // 3] for k in range(3 * n)])
    constraints = [sympy.Matrix([m[k // 3] * g[k // 3, k % 3] for k in range(3 * n)]).T
                   for g in spec.gamma]
    if spec.translation_invariant:
        for i in range(3):
            constraints.append(sympy.Matrix([m[k // 3] if k % 3 == i else 0
                                             for k in range(3 * n)]).T)
    cmat = sympy.Matrix.vstack(*constraints)
    sigma_sq, rows = [], []
    for value in sorted({round(float(v), 9) for v in approx}):
        lam = sympy.nsimplify(value, [_S2, _S3], tolerance=1e-8, rational=False)
        system = sympy.Matrix.vstack(h - lam * mw, cmat)
        space = system.nullspace(simplify=True)
        vecs = []
        for v in space:
            w = np.array([sympy.radsimp(x) for x in v], dtype=object).reshape(n, 3)
            for u in vecs:
                w = w - (mass_inner(spec.masses, w, u) / mass_inner(spec.masses, u, u)) * u
            w = np.vectorize(sympy.radsimp, otypes=[object])(w)
            vecs.append(w)
        for w in vecs:
            norm = mass_inner(spec.masses, w, w)
            rows.append(np.vectorize(sympy.radsimp, otypes=[object])(w / sympy.sqrt(norm)))
            sigma_sq.append(lam)
    if len(rows) != count:
        raise ValueError(f"found {len(rows)} exact modes, expected {count}")
    return sigma_sq, np.array(rows, dtype=object)


@dataclass(frozen=True)
class EckartModel:
    """Harmonic cluster in the Eckart gauge with exact normal modes."""

    name: str
    spec: GaugeSpec
    basis: ExtendedBasis
    sigma_sq: tuple
    epsilon: sympy.Rational
    hessian: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.array([float(v) for v in self.sigma_sq]))

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    @property
    def mode_names(self) -> tuple[str, ...]:
        return self.basis.mode_names

    @property
    def inertia_unit(self) -> np.ndarray:
        """Principal moments divided by ``a^2`` (so that ``N^{-1} = eps^2 / d``)."""
        return numeric(self.spec.norms_sq) * float(self.epsilon) ** 2


def eckart_model(name: str, unit_reference, epsilon, seeds=None, masses=None) -> EckartModel:
    """Eckart model of a cluster with bond springs of equal stiffness."""
    eps = as_rational(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    unit = as_array(unit_reference, exact=True)
    n = unit.shape[0]
    ms = as_array(masses if masses is not None else [1] * n, exact=True)
    z = unit / eps
    spec = eckart_gauge(ms, z)
    hessian = pairwise_harmonic_hessian(unit, ms)
    if seeds is None:
        sigma_sq, rows = exact_normal_modes(spec, hessian)
    else:
        rows = as_array(seeds, exact=True)
        sigma_sq = []
        hm = sympy.Matrix(hessian)
        for r in rows:
            v = sympy.Matrix(list(r.reshape(-1)))
            sigma_sq.append(sympy.radsimp((v.T * hm * v)[0] / mass_inner(ms, r, r)))
    basis = extend_basis(spec, seeds=rows, norm_sq=1, origin=z)
    return EckartModel(name, spec, basis, tuple(sigma_sq), eps, hessian)


def triangle(epsilon="1/20") -> EckartModel:
    """Three equal masses at the corners of an equilateral triangle."""
    return eckart_model("triangle", TRIANGLE_UNIT, epsilon, seeds=TRIANGLE_MODES)


def tetrahedron(epsilon="1/20") -> EckartModel:
    """Four equal masses at the corners of a regular tetrahedron."""
    return eckart_model("tetrahedron", TETRAHEDRON_UNIT, epsilon)


def axis_gauge(masses=(1, 1, 1)) -> GaugeSpec:
    """Gauge ``S = (R_1y, R_1z, R_2y)`` (unit masses by default).

    Particle 1 lies on the body x axis and particle 2 in the body xz plane.
    """
    n = len(masses)
    if n < 2:
        raise ValueError("the axis gauge needs at least two particles")
    m = np.asarray(masses, dtype=float)
    rows = np.zeros((3, n, 3))
    rows[0, 0, 1] = 1.0
    rows[1, 0, 2] = 1.0
    rows[2, 1, 1] = 1.0
    norms = np.array([m[0], m[0], m[1]])
    return GaugeSpec(m, rows, norms)


def axis_gauge_predicates():
    """Discrete conditions selecting one axis-gauge copy: ``R_1x > 0``."""
    return [lambda r: r[0, 0]]
