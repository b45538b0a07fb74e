"""Curvilinear geometry of the gauge-fixed configuration space.

Laboratory coordinates ``q_c = sum_b (m_b / R_c) Gamma[c, b] . r_b`` (all 3N
rows of an extended basis) are flat: the kinetic energy is ``-1/2`` times
their Laplacian. The curvilinear coordinates are the chart parameters
``theta`` of the frame rotation ``U`` and the internal coordinates ``Q`` of
the body-frame positions ``R = origin + sum_c Q_c Gamma_c``, with
``r = U^T R``.

This module evaluates the inverse metric and its determinant in closed form,
provides finite-difference oracles for them and for the quantum potential,
and computes quadrature inner products of oscillator wave functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import HorizonError, QuadratureError
from .gauge import (ExtendedBasis, SINGULAR_RTOL, embed_coords, eval_geometry,
                    eval_quantum_potentials, q_matrix)
from .rotation import chart_matrices, rotation
from .weylalg import FLOAT, DiffOperator

FD_STEP = 1e-5
GH_ORDER = 20


# ---------------------------------------------------------------- coordinate map

@dataclass(frozen=True)
class MetricBlocks:
    """Blocks of ``M^{-1}`` in the order (theta, Q) and the volume factor ``J``.

    For translation-invariant gauges the ``Q`` block also covers the three
    centre-of-mass coordinates.
    """

    theta_theta: np.ndarray
    theta_q: np.ndarray
    q_theta: np.ndarray
    q_q: np.ndarray
    J: float

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.theta_theta, self.theta_q], [self.q_theta, self.q_q]])


class CoordinateMap:
    """Point ``(theta, Q)`` of the curvilinear coordinates of an extended basis.

    Raises:
        HorizonError: if ``det Q`` vanishes at the point.
        OutOfChartError, ChartSingularError: for invalid chart parameters.
    """

    def __init__(self, basis: ExtendedBasis, theta, coords, chart: str = "exponential"):
        self.basis = basis.numeric()
        self.spec = self.basis.spec
        self.chart = chart
        self.theta = np.asarray(theta, dtype=float)
        coords = np.asarray(coords, dtype=float)
        n_int = self.basis.n_modes
        n_tr = 3 if self.spec.translation_invariant else 0
        if coords.shape == (n_int,):
            coords = np.concatenate([coords, np.zeros(n_tr)])
        if coords.shape != (n_int + n_tr,):
            raise ValueError(f"expected {n_int} internal (+{n_tr} translation) coordinates")
        self.all_coords = coords
        self.coords = coords[:n_int]
        self.translation = coords[n_int:]
        self.cm = chart_matrices(self.theta, chart)
        self.U = rotation(self.theta, chart)
        self.R = embed_coords(self.basis, self.coords)
        geo = eval_geometry(self.spec, self.R)
        if geo.singular:
            raise HorizonError(f"det Q vanishes at Q = {self.coords}")
        self.geometry = geo

    @property
    def n_coords(self) -> int:
        return 3 + len(self.all_coords)

    @cached_property
    def lab_positions(self) -> np.ndarray:
        return _lab_positions(self.basis, self.U, self.R, self.translation)

    @cached_property
    def mode_q(self) -> np.ndarray:
        """``Q`` matrix rows of the internal directions, shape ``(n_modes, 3)``."""
        return q_matrix(self.spec.masses, self.basis.mode_rows, self.R)

    def dcurv_dq(self) -> np.ndarray:
        """Closed-form ``d(theta, Q)/dq``, shape ``(3N, 3N)``."""
        b = self.basis
        m = self.spec.masses
        rows = b.gamma
        inv_norm = 1.0 / np.sqrt(b.norms_sq)
        # A[d, c] = sum_b m_b Gamma[d, b, k] U[k, j] Gamma[c, b, j] / R_c
        a = np.einsum("b,dbk,kj,cbj,c->dc", m, rows, self.U, rows, inv_norm)
        qi = np.linalg.inv(self.geometry.Q)
        a_g = a[:3]
        a_m = a[3:]
        lam_inv = np.linalg.inv(self.cm.Lambda)
        d_theta = -lam_inv.T @ qi @ a_g
        n_int = b.n_modes
        d_q = (a_m[:n_int] - self.mode_q @ qi @ a_g) / b.mode_norms_sq[:, None]
        # Translations are not rotated: Q_t = q_t / R_t.
        n_rows = len(b.norms_sq)
        d_t = np.zeros((n_rows - 3 - n_int, n_rows))
        for k in range(len(d_t)):
            c = 3 + n_int + k
            d_t[k, c] = 1.0 / math.sqrt(b.norms_sq[c])
        return np.vstack([d_theta, d_q, d_t])

    def dq_dcurv(self) -> np.ndarray:
        return np.linalg.inv(self.dcurv_dq())


def _lab_positions(basis, u, body, translation) -> np.ndarray:
    r = body @ u
    if len(translation):
        r = r + np.einsum("t,tbi->bi", translation, basis.gamma[3 + basis.n_modes:])
    return r


def lab_coordinates(basis: ExtendedBasis, theta, coords, chart: str = "exponential") -> np.ndarray:
    """Flat coordinates ``q`` of the point ``(theta, Q[, X])``."""
    b = basis.numeric()
    coords = np.asarray(coords, dtype=float)
    n_int = b.n_modes
    r = _lab_positions(b, rotation(theta, chart), embed_coords(b, coords[:n_int]),
                       coords[n_int:])
    return np.einsum("b,cbj,bj->c", b.spec.masses, b.gamma, r) / np.sqrt(b.norms_sq)


def metric_blocks(cmap: CoordinateMap) -> MetricBlocks:
    """Inverse metric ``M^{-1}`` in closed form and ``J = prod(R_c) |Lambda| J_gauge``.

    The product runs over all non-gauge rows, so it is ``R^{3N-3}`` when they
    share the squared norm ``R^2``.
    """
    b = cmap.basis
    n_inv = cmap.geometry.N_inv
    lam_inv = np.linalg.inv(cmap.cm.Lambda)
    qm = cmap.mode_q / b.mode_norms_sq[:, None]
    tt = lam_inv.T @ n_inv @ lam_inv
    tq = lam_inv.T @ n_inv @ qm.T
    qq = np.diag(1.0 / b.mode_norms_sq) + qm @ n_inv @ qm.T
    n_tr = len(cmap.translation)
    if n_tr:
        # Translations decouple with inverse metric 1/R_t^2.
        tq = np.hstack([tq, np.zeros((3, n_tr))])
        qq = np.block([[qq, np.zeros((len(qq), n_tr))],
                       [np.zeros((n_tr, len(qq))), np.diag(1.0 / b.norms_sq[3 + b.n_modes:])]])
    j = float(np.prod(np.sqrt(b.norms_sq[3:]))) * cmap.cm.haar_weight * cmap.geometry.jacobian
    return MetricBlocks(tt, tq, tq.T.copy(), qq, j)


def _curv_point(cmap: CoordinateMap, x: np.ndarray) -> CoordinateMap:
    return CoordinateMap(cmap.basis, x[:3], x[3:], cmap.chart)


def _point(cmap: CoordinateMap) -> np.ndarray:
    return np.concatenate([cmap.theta, cmap.all_coords])


def fd_jacobian(cmap: CoordinateMap, step: float = FD_STEP) -> np.ndarray:
    """Central-difference ``dq/d(theta, Q)``."""
    x0 = _point(cmap)
    n = len(x0)
    out = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        qp = lab_coordinates(cmap.basis, (x0 + e)[:3], (x0 + e)[3:], cmap.chart)
        qm = lab_coordinates(cmap.basis, (x0 - e)[:3], (x0 - e)[3:], cmap.chart)
        out[:, k] = (qp - qm) / (2 * step)
    return out


def fd_metric(cmap: CoordinateMap, step: float = FD_STEP) -> tuple[np.ndarray, float]:
    """Finite-difference oracle: ``M^{-1}`` and ``|det dq/d(theta, Q)|``."""
    jac = fd_jacobian(cmap, step)
    inv = np.linalg.inv(jac)
    return inv @ inv.T, abs(float(np.linalg.det(jac)))


def _d_dcurv(cmap: CoordinateMap, step: float) -> np.ndarray:
    """``D[b, a, c] = d/dx_b (dx_a/dq_c)`` by central differences."""
    x0 = _point(cmap)
    n = len(x0)
    out = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        kp = _curv_point(cmap, x0 + e).dcurv_dq()
        km = _curv_point(cmap, x0 - e).dcurv_dq()
        out[k] = (kp - km) / (2 * step)
    return out


@dataclass(frozen=True)
class QuantumPotentialTerms:
    """Oracle value ``V_Q`` with its internal-internal part ``V_Q0``."""

    total: float
    internal: float
    rotational: float


def quantum_potential_oracle(cmap: CoordinateMap, step: float = FD_STEP) -> QuantumPotentialTerms:
    """``V_Q = (1/8) sum (d_b dx_a/dq_c)(d_a dx_b/dq_c)`` by differencing the closed form.

    ``internal`` restricts ``a, b`` to the internal coordinates; ``rotational``
    is the remainder.
    """
    d = _d_dcurv(cmap, step)
    terms = 0.125 * np.einsum("bac,abc->ab", d, d)
    n_int = cmap.basis.n_modes
    internal = float(terms[3:3 + n_int, 3:3 + n_int].sum())
    total = float(terms.sum())
    return QuantumPotentialTerms(total, internal, total - internal)


def chart_potential_term(cmap: CoordinateMap, step: float = FD_STEP) -> float:
    """``(1/8) N^{-1}_{ll'} d_a (Lambda^{-1})_{l'a'} d_a' (Lambda^{-1})_{la}``.

    The chart contribution to ``V_Q``; derivatives of ``Lambda^{-1}`` are
    central differences of the closed-form chart matrix.
    """
    n_inv = cmap.geometry.N_inv
    d = np.empty((3, 3, 3))
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        lp = np.linalg.inv(chart_matrices(cmap.theta + e, cmap.chart).Lambda)
        lm = np.linalg.inv(chart_matrices(cmap.theta - e, cmap.chart).Lambda)
        d[a] = (lp - lm) / (2 * step)
    # d[a, l, a'] = d/dtheta_a (Lambda^{-1})_{l a'}
    return float(0.125 * np.einsum("lm,amb,bla->", n_inv, d, d))


def curvilinear_laplacian(cmap: CoordinateMap, grad_f: Callable[[np.ndarray], np.ndarray],
                          step: float = FD_STEP) -> float:
    """``(1/J) d_a (M^{-1}_ab J d_b F)`` at ``cmap`` for ``F(theta, Q) = f(q)``.

    ``grad_f`` returns the flat gradient of ``f`` at ``q``; the inner
    derivative uses the chain rule, the outer one central differences.
    """
    x0 = _point(cmap)
    n = len(x0)

    def flux(x):
        cm = _curv_point(cmap, x)
        blocks = metric_blocks(cm)
        q = lab_coordinates(cm.basis, x[:3], x[3:], cm.chart)
        dfd = cm.dq_dcurv().T @ grad_f(q)
        return blocks.J * (blocks.full @ dfd), blocks.J

    total = 0.0
    for a in range(n):
        e = np.zeros(n)
        e[a] = step
        total += (flux(x0 + e)[0][a] - flux(x0 - e)[0][a]) / (2 * step)
    return total / flux(x0)[1]


@dataclass(frozen=True)
class OracleComparison:
    """Relative deviations of the closed forms from the finite-difference oracles."""

    metric: float
    jacobian: float
    quantum_potential: float
    scaling: float

    def to_dict(self) -> dict:
        return {"metric": self.metric, "jacobian": self.jacobian,
                "quantum_potential": self.quantum_potential, "scaling": self.scaling}


def random_point(basis: ExtendedBasis, rng: np.random.Generator, chart: str = "exponential",
                 spread: float = 0.1, max_tries: int = 100) -> CoordinateMap:
    """Random regular point: chart parameters inside the valid box, small ``Q``."""
    for _ in range(max_tries):
        if chart == "exponential":
            theta = rng.uniform(-1.0, 1.0, 3)
        else:
            theta = np.array([rng.uniform(-3.0, 3.0), rng.uniform(0.3, 2.8), rng.uniform(-3.0, 3.0)])
        try:
            return CoordinateMap(basis, theta, rng.normal(scale=spread, size=basis.n_modes), chart)
        except HorizonError:
            continue
    raise HorizonError("no regular point found")


def compare_with_oracles(cmap: CoordinateMap, scale: float = 1.7,
                         step: float = FD_STEP) -> OracleComparison:
    """Closed-form metric, ``J`` and ``V_Q`` against their oracles at one point.

    ``scaling`` is the larger relative deviation of ``V_1(cR) c^2`` and
    ``V_2(cR) c^2`` from their values at ``R``.
    """
    blocks = metric_blocks(cmap)
    m_fd, j_fd = fd_metric(cmap, step)
    metric = float(np.max(np.abs(blocks.full - m_fd)) / np.max(np.abs(m_fd)))
    jac = abs(blocks.J - j_fd) / j_fd
    oracle = quantum_potential_oracle(cmap, step)
    v1, v2 = eval_quantum_potentials(cmap.spec, cmap.R)
    closed = chart_potential_term(cmap, step) + v1 + v2
    vq = abs(oracle.total - closed) / max(abs(oracle.total), 1e-300)
    w1, w2 = eval_quantum_potentials(cmap.spec, scale * cmap.R)
    sc = max(abs(w1 * scale**2 - v1) / abs(v1), abs(w2 * scale**2 - v2) / abs(v2))
    return OracleComparison(metric, float(jac), float(vq), float(sc))


# ---------------------------------------------------------------- wave functions

def _poly_values(poly: DiffOperator, points: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial operator at many points, shape ``(K,)``."""
    out = np.zeros(points.shape[0], dtype=complex)
    cache: dict = {}
    for (mono, _), c in poly.terms:
        v = np.full(points.shape[0], poly.ring.to_complex(c), dtype=complex)
        for k, e in enumerate(mono):
            if e:
                key = (k, e)
                if key not in cache:
                    cache[key] = points[:, k] ** e
                v = v * cache[key]
        out += v
    return out


def _hermite_polynomial(n: int) -> np.ndarray:
    """Power-series coefficients of the physicists' Hermite polynomial ``H_n``."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    return np.polynomial.hermite.herm2poly(c)


class GaussianWave:
    """Wave function ``sum_m p_m(Q) exp(-sum_a sigma_a Q_a^2 / 2) |m>``.

    ``components[k]`` is the polynomial (an operator without derivatives)
    attached to the angular state ``m = l - k``.
    """

    def __init__(self, names, sigma, l: int, components: Sequence[DiffOperator]):
        self.names = tuple(names)
        self.sigma = np.asarray(sigma, dtype=float)
        self.l = int(l)
        if len(components) != 2 * self.l + 1:
            raise ValueError("one polynomial per angular state is required")
        self.components = list(components)

    @classmethod
    def oscillator(cls, names, sigma, occupation, l: int = 0, m_index: int = 0) -> "GaussianWave":
        """Normalised product of 1D oscillator eigenfunctions times ``|m>``."""
        sigma = np.asarray(sigma, dtype=float)
        n = len(names)
        poly = DiffOperator.identity(names, FLOAT)
        for k, (nk, s) in enumerate(zip(occupation, sigma)):
            coeffs = _hermite_polynomial(nk)
            norm = (s / math.pi) ** 0.25 / math.sqrt(2.0**nk * math.factorial(nk))
            terms = {}
            for p, c in enumerate(coeffs):
                if c:
                    e = tuple(p if j == k else 0 for j in range(n))
                    terms[(e, (0,) * n)] = complex(norm * c * s ** (p / 2))
            poly = poly * DiffOperator(names, FLOAT, terms)
        comps = [DiffOperator.zero(names, FLOAT) for _ in range(2 * l + 1)]
        comps[m_index] = poly
        return cls(names, sigma, l, comps)

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.components), default=0)

    def poly_values(self, points: np.ndarray) -> np.ndarray:
        """Polynomial parts at ``points``, shape ``(K, 2l+1)``."""
        return np.stack([_poly_values(p, points) for p in self.components], axis=1)

    def _dressed(self, op: DiffOperator) -> DiffOperator:
        """``op`` conjugated by the Gaussian: ``d_a -> d_a - sigma_a Q_a``."""
        names = self.names
        shifted = []
        for k, nm in enumerate(names):
            shifted.append(DiffOperator.derivative(names, FLOAT, nm)
                           - DiffOperator.coordinate(names, FLOAT, nm).scale(float(self.sigma[k])))
        coords = [DiffOperator.coordinate(names, FLOAT, nm) for nm in names]
        out = DiffOperator.zero(names, FLOAT)
        ident = DiffOperator.identity(names, FLOAT)
        for (mono, deriv), c in op.terms:
            t = ident.scale(op.ring.to_complex(c))
            for k, e in enumerate(mono):
                for _ in range(e):
                    t = t * coords[k]
            for k, e in enumerate(deriv):
                for _ in range(e):
                    t = t * shifted[k]
            out = out + t
        return out

    def apply(self, op) -> "GaussianWave":
        """Apply a scalar :class:`DiffOperator` or a spectra ``SectorOperator``."""
        if isinstance(op, DiffOperator):
            d = self._dressed(op)
            return GaussianWave(self.names, self.sigma, self.l,
                                [d.apply(p) for p in self.components])
        if op.l != self.l:
            raise ValueError("angular sector mismatch")
        dim = 2 * self.l + 1
        out = [DiffOperator.zero(self.names, FLOAT) for _ in range(dim)]
        for ang, dop in op.terms:
            d = self._dressed(dop)
            applied = [d.apply(p) if not p.is_zero() else p for p in self.components]
            for r in range(dim):
                for s in range(dim):
                    if ang[r, s] != 0 and not applied[s].is_zero():
                        out[r] = out[r] + applied[s].scale(complex(ang[r, s]))
        if op.constant:
            for r in range(dim):
                out[r] = out[r] + self.components[r].scale(float(op.constant))
        return GaussianWave(self.names, self.sigma, self.l, out)


WEIGHTS = ("reduced", "with_jacobian")


def gauss_hermite_nodes(sigma, order: int = GH_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss-Hermite rule for ``int p(Q) exp(-sum sigma Q^2) dQ``.

    Returns nodes ``(K, n)`` and weights ``(K,)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    t, w = np.polynomial.hermite.hermgauss(order)
    grids = np.meshgrid(*[t / math.sqrt(s) for s in sigma], indexing="ij")
    wgrids = np.meshgrid(*[w / math.sqrt(s) for s in sigma], indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.prod(np.stack([g.reshape(-1) for g in wgrids], axis=1), axis=1)
    return nodes, weights


def inner_product(f: GaussianWave, g: GaussianWave, weight: str = "reduced",
                  basis: ExtendedBasis | None = None, order: int = GH_ORDER,
                  predicates: Sequence[Callable[[np.ndarray], float]] = ()) -> complex:
    """``<f|g>`` over the internal coordinates with the angular sector contracted.

    ``reduced`` integrates with ``dQ``; ``with_jacobian`` includes the gauge
    Jacobian ``J(Q) Theta(J)`` (needs ``basis``). ``predicates`` are functions
    of body-frame positions; nodes where any is non-positive get zero weight.

    Raises:
        QuadratureError: if ``order`` is below twice the largest polynomial
            degree, or the rule is not exact for the integrand.
    """
    if weight not in WEIGHTS:
        raise ValueError(f"unknown weight {weight!r}; expected one of {WEIGHTS}")
    if f.names != g.names or f.l != g.l or not np.allclose(f.sigma, g.sigma):
        raise ValueError("wave functions live on different spaces")
    deg = max(f.degree, g.degree)
    needed = f.degree + g.degree + (3 if weight == "with_jacobian" else 0)
    if order < 2 * deg or 2 * order - 1 < needed:
        raise QuadratureError(f"order {order} too low for polynomial degree {deg}")
    nodes, w = gauss_hermite_nodes(f.sigma, order)
    if weight == "with_jacobian" or predicates:
        if basis is None:
            raise ValueError("this weight needs the extended basis")
        b = basis.numeric()
        pos = embed_coords(b, nodes)
        if weight == "with_jacobian":
            q = q_matrix(b.spec.masses, b.spec.gamma, pos)
            det = np.linalg.det(q)
            jac = det / math.sqrt(float(np.prod(b.spec.norms_sq)))
            w = w * np.where(det > 0, jac, 0.0)
        for pred in predicates:
            keep = np.array([pred(p) > 0 for p in pos])
            w = w * keep
    fv = f.poly_values(nodes)
    gv = g.poly_values(nodes)
    return complex(np.sum(w * np.einsum("km,km->k", fv.conj(), gv)))


def matrix_elements(functions: Sequence[GaussianWave], op, weight: str = "reduced",
                    basis: ExtendedBasis | None = None, order: int = GH_ORDER) -> np.ndarray:
    """``H[i, j] = <f_i | op f_j>`` on one shared quadrature grid."""
    if weight == "with_jacobian" and basis is None:
        raise ValueError("this weight needs the extended basis")
    applied = [f.apply(op) for f in functions]
    deg = max(max(f.degree for f in functions), max(a.degree for a in applied))
    need = 2 * deg + (3 if weight == "with_jacobian" else 0)
    if order < 2 * deg or 2 * order - 1 < need:
        raise QuadratureError(f"order {order} too low for polynomial degree {deg}")
    nodes, w = gauss_hermite_nodes(functions[0].sigma, order)
    if weight == "with_jacobian":
        b = basis.numeric()
        q = q_matrix(b.spec.masses, b.spec.gamma, embed_coords(b, nodes))
        det = np.linalg.det(q)
        w = w * np.where(det > 0, det / math.sqrt(float(np.prod(b.spec.norms_sq))), 0.0)
    fv = np.stack([f.poly_values(nodes) for f in functions])
    av = np.stack([a.poly_values(nodes) for a in applied])
    return np.einsum("k,ikm,jkm->ij", w, fv.conj(), av)


__all__ = [
    "CoordinateMap", "MetricBlocks", "QuantumPotentialTerms", "GaussianWave",
    "metric_blocks", "lab_coordinates", "fd_jacobian", "fd_metric",
    "quantum_potential_oracle", "chart_potential_term", "curvilinear_laplacian",
    "OracleComparison", "random_point", "compare_with_oracles",
    "gauss_hermite_nodes", "inner_product", "matrix_elements",
    "eval_quantum_potentials", "SINGULAR_RTOL",
]
