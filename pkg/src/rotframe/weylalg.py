"""Weyl algebra of polynomial differential operators.

An operator is a finite sum ``c * x^mono * d^deriv`` kept in canonical form:
coordinates to the left of derivatives, zero coefficients dropped and terms
ordered graded-lexicographically on ``(deriv, mono)``. Coefficients live in a
scalar ring. Exact rings are sympy number fields that contain the imaginary
unit (Gaussian rationals for rational input), so commutator identities can be
checked with zero residual. :class:`FloatRing` carries complex floats for
assembling Hamiltonians that are rendered to matrices anyway.
"""

from __future__ import annotations

import json
from itertools import product
from math import comb, perm
from typing import Iterable, Sequence

import numpy as np
import sympy
from sympy.polys.constructor import construct_domain
from sympy.polys.domains import QQ_I

from .errors import IncompatibleSpaceError
from .gauge import ExtendedBasis, GaugeSpec, is_exact
from .rotation import LEVI_CIVITA

AXES = "xyz"


# ---------------------------------------------------------------- scalar rings

class ExactRing:
    """Exact scalars: a sympy domain containing ``I``."""

    exact = True

    def __init__(self, domain):
        self.domain = domain
        self.zero = domain.zero
        self.one = domain.one
        self.i = domain.from_sympy(sympy.I)
        self._complex: dict = {}
        self._cache: dict = {}

    def __call__(self, value):
        if isinstance(value, (int, np.integer)):
            return self.domain.convert(int(value))
        expr = sympy.sympify(value)
        out = self._cache.get(expr)
        if out is None:
            out = self.domain.from_sympy(expr)
            self._cache[expr] = out
        return out

    def to_sympy(self, c):
        return self.domain.to_sympy(c)

    def to_complex(self, c) -> complex:
        key = repr(c)
        val = self._complex.get(key)
        if val is None:
            val = complex(sympy.N(self.to_sympy(c), 20))
            self._complex[key] = val
        return val

    def __eq__(self, other):
        return isinstance(other, ExactRing) and self.domain == other.domain

    def __hash__(self):
        return hash(self.domain)

    def __repr__(self):
        return f"ExactRing({self.domain})"


class FloatRing:
    """Complex floating-point scalars."""

    exact = False
    zero = 0j
    one = 1 + 0j
    i = 1j

    def __call__(self, value):
        return complex(value)

    def to_sympy(self, c):
        return sympy.Float(c.real) + sympy.I * sympy.Float(c.imag) if c.imag else sympy.Float(c.real)

    def to_complex(self, c) -> complex:
        return complex(c)

    def __eq__(self, other):
        return isinstance(other, FloatRing)

    def __hash__(self):
        return hash("FloatRing")

    def __repr__(self):
        return "FloatRing()"


FLOAT = FloatRing()


def exact_ring(values: Iterable = ()) -> ExactRing:
    """Smallest sympy field holding ``values`` together with ``I``."""
    exprs = {sympy.sympify(v) for v in values}
    exprs.add(sympy.I)
    if all(e.is_rational or e == sympy.I for e in exprs):
        return ExactRing(QQ_I)
    domain, _ = construct_domain(sorted(exprs, key=sympy.default_sort_key), extension=True)
    if not domain.is_Field:
        domain = domain.get_field()
    return ExactRing(domain)


def ring_for(spec: GaugeSpec, basis: ExtendedBasis | None = None, extra: Iterable = ()):
    """Exact ring for an exact gauge (and basis), else :data:`FLOAT`."""
    if not spec.exact or (basis is not None and not basis.exact):
        return FLOAT
    vals = list(spec.masses.flat) + list(spec.gamma.flat) + list(spec.norms_sq.flat)
    if basis is not None:
        vals += list(basis.gamma.flat) + list(basis.norms_sq.flat) + list(basis.origin.flat)
    return exact_ring(list(vals) + list(extra))


# ---------------------------------------------------------------- operators

def _add(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def _term_key(item):
    (mono, deriv), _ = item
    return (sum(deriv), deriv, sum(mono), mono)


class DiffOperator:
    """Polynomial differential operator in canonical form.

    ``coords`` names the coordinates. Terms map ``(mono, deriv)`` exponent
    tuples to ring elements. Operators support ``+``, ``-``, scalar
    multiplication and composition ``A * B`` (apply ``B`` first).
    """

    __slots__ = ("coords", "ring", "_terms")

    def __init__(self, coords: Sequence[str], ring, terms: dict | None = None):
        self.coords = tuple(coords)
        self.ring = ring
        self._terms = {k: c for k, c in (terms or {}).items() if c}

    # construction
    @classmethod
    def zero(cls, coords, ring) -> "DiffOperator":
        return cls(coords, ring)

    @classmethod
    def scalar(cls, coords, ring, value) -> "DiffOperator":
        n = len(coords)
        c = value if not isinstance(value, (int, float, complex, sympy.Basic)) else ring(value)
        return cls(coords, ring, {((0,) * n, (0,) * n): c})

    @classmethod
    def identity(cls, coords, ring) -> "DiffOperator":
        return cls.scalar(coords, ring, ring.one)

    @classmethod
    def coordinate(cls, coords, ring, name: str) -> "DiffOperator":
        coords = tuple(coords)
        e = tuple(int(c == name) for c in coords)
        if name not in coords:
            raise IncompatibleSpaceError(f"unknown coordinate {name!r}")
        return cls(coords, ring, {(e, (0,) * len(coords)): ring.one})

    @classmethod
    def derivative(cls, coords, ring, name: str) -> "DiffOperator":
        coords = tuple(coords)
        e = tuple(int(c == name) for c in coords)
        if name not in coords:
            raise IncompatibleSpaceError(f"unknown coordinate {name!r}")
        return cls(coords, ring, {((0,) * len(coords), e): ring.one})

    # inspection
    @property
    def terms(self) -> list:
        """Canonically ordered ``((mono, deriv), coefficient)`` pairs."""
        return sorted(self._terms.items(), key=_term_key)

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def order(self) -> int:
        return max((sum(d) for (_, d) in self._terms), default=0)

    @property
    def degree(self) -> int:
        return max((sum(m) for (m, _) in self._terms), default=0)

    @property
    def total_degree(self) -> int:
        return max((sum(m) + sum(d) for (m, d) in self._terms), default=0)

    def coefficient(self, mono: tuple, deriv: tuple):
        return self._terms.get((tuple(mono), tuple(deriv)), self.ring.zero)

    # arithmetic
    def _check(self, other: "DiffOperator") -> None:
        if not isinstance(other, DiffOperator):
            raise TypeError(f"expected DiffOperator, got {type(other).__name__}")
        if self.coords != other.coords:
            raise IncompatibleSpaceError(f"coordinate lists differ: {self.coords} vs {other.coords}")
        if self.ring != other.ring:
            raise IncompatibleSpaceError(f"scalar rings differ: {self.ring} vs {other.ring}")

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        self._check(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out[k] + c if k in out else c
        return DiffOperator(self.coords, self.ring, out)

    def __neg__(self) -> "DiffOperator":
        return DiffOperator(self.coords, self.ring, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return self + (-other)

    def scale(self, c) -> "DiffOperator":
        if isinstance(c, (int, float, complex, sympy.Basic)):
            c = self.ring(c)
        return DiffOperator(self.coords, self.ring, {k: c * v for k, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, DiffOperator):
            self._check(other)
            out: dict = {}
            for t1 in self._terms.items():
                for t2 in other._terms.items():
                    _leibniz(t1, t2, self.ring, out, skip_leading=False)
            return DiffOperator(self.coords, self.ring, out)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, k: int) -> "DiffOperator":
        out = DiffOperator.identity(self.coords, self.ring)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return (self.coords == other.coords and self.ring == other.ring
                and (self - other).is_zero())

    def __hash__(self):
        return hash((self.coords, tuple((k, repr(c)) for k, c in self.terms)))

    # action
    def apply(self, poly: "DiffOperator") -> "DiffOperator":
        """Act on a polynomial (an operator without derivatives)."""
        if poly.order:
            raise ValueError("apply() expects a polynomial operand")
        res = self * poly
        n = len(self.coords)
        return DiffOperator(self.coords, self.ring,
                            {k: c for k, c in res._terms.items() if k[1] == (0,) * n})

    def evaluate(self, point) -> complex:
        """Value of a polynomial at ``point`` (complex floats)."""
        if self.order:
            raise ValueError("evaluate() expects a polynomial")
        x = np.asarray(point, dtype=complex)
        total = 0j
        for (mono, _), c in self._terms.items():
            total += self.ring.to_complex(c) * np.prod(x ** np.array(mono))
        return total

    def to_float(self) -> "DiffOperator":
        r = self.ring
        return DiffOperator(self.coords, FLOAT, {k: r.to_complex(c) for k, c in self._terms.items()})

    def map_coefficients(self, ring, f) -> "DiffOperator":
        return DiffOperator(self.coords, ring, {k: f(c) for k, c in self._terms.items()})

    # printing and serialisation
    def _factor(self, exps: tuple, fmt: str) -> list[str]:
        out = []
        for name, e in zip(self.coords, exps):
            if e:
                base = fmt.format(name)
                out.append(base if e == 1 else f"{base}^{e}")
        return out

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for (mono, deriv), c in self.terms:
            coef = self.ring.to_sympy(c)
            factors = self._factor(mono, "{}") + self._factor(deriv, "d[{}]")
            parts.append(f"({coef})" + ("*" + "*".join(factors) if factors else ""))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"DiffOperator({self})"

    def to_json(self) -> dict:
        return {
            "coords": list(self.coords),
            "terms": [{"coefficient": str(self.ring.to_sympy(c)),
                       "monomial": list(mono), "derivative": list(deriv)}
                      for (mono, deriv), c in self.terms],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: dict, ring) -> "DiffOperator":
        coords = tuple(data["coords"])
        terms = {}
        for t in data["terms"]:
            key = (tuple(t["monomial"]), tuple(t["derivative"]))
            terms[key] = ring(sympy.sympify(t["coefficient"]))
        return cls(coords, ring, terms)


def _leibniz(t1, t2, ring, out: dict, skip_leading: bool) -> None:
    """Accumulate ``x^a d^b . x^c d^d`` into ``out`` (optionally without k = 0)."""
    (a, b), c1 = t1
    (c, d), c2 = t2
    idx = [j for j in range(len(a)) if b[j] and c[j]]
    coef = c1 * c2
    if not idx:
        if skip_leading:
            return
        key = (_add(a, c), _add(b, d))
        out[key] = out[key] + coef if key in out else coef
        return
    base_m = _add(a, c)
    base_d = _add(b, d)
    for ks in product(*[range(min(b[j], c[j]) + 1) for j in idx]):
        if skip_leading and not any(ks):
            continue
        factor = 1
        mono = list(base_m)
        der = list(base_d)
        for j, k in zip(idx, ks):
            if k:
                factor *= comb(b[j], k) * perm(c[j], k)
                mono[j] -= k
                der[j] -= k
        val = coef if factor == 1 else coef * ring(factor)
        key = (tuple(mono), tuple(der))
        out[key] = out[key] + val if key in out else val


def commutator(a: DiffOperator, b: DiffOperator) -> DiffOperator:
    """``[a, b] = a b - b a``; top-order cancellations are skipped, not computed."""
    a._check(b)
    out: dict = {}
    for t1 in a._terms.items():
        for t2 in b._terms.items():
            _leibniz(t1, t2, a.ring, out, skip_leading=True)
    neg: dict = {}
    for t2 in b._terms.items():
        for t1 in a._terms.items():
            _leibniz(t2, t1, a.ring, neg, skip_leading=True)
    for k, c in neg.items():
        out[k] = out[k] - c if k in out else -c
    return DiffOperator(a.coords, a.ring, out)


def weyl_symmetrize(c: DiffOperator, first: str, second: str) -> DiffOperator:
    """``(c d_a d_b)_W = (c d_a d_b + d_a c d_b + d_b c d_a + d_a d_b c) / 4``."""
    if c.order:
        raise ValueError("the symmetrised coefficient must be a polynomial")
    da = DiffOperator.derivative(c.coords, c.ring, first)
    db = DiffOperator.derivative(c.coords, c.ring, second)
    total = c * da * db + da * c * db + db * c * da + da * db * c
    return total.scale(c.ring(sympy.Rational(1, 4)) if c.ring.exact else 0.25)


def polynomial_from_linear(coords, ring, constant, coefficients) -> DiffOperator:
    """``constant + sum_k coefficients[k] x_k`` as a multiplication operator."""
    n = len(coords)
    terms = {((0,) * n, (0,) * n): constant}
    for k, c in enumerate(coefficients):
        e = tuple(int(j == k) for j in range(n))
        terms[(e, (0,) * n)] = c
    return DiffOperator(coords, ring, terms)


def substitute(op: DiffOperator, new_coords, ring, values: Sequence[DiffOperator],
               derivatives: Sequence[DiffOperator]) -> DiffOperator:
    """Rewrite ``op`` in new coordinates.

    ``values[k]`` is old coordinate ``k`` as a polynomial in the new ones and
    ``derivatives[k]`` is ``d/dx_k`` as a constant-coefficient first-order
    operator in the new ones. Valid when the new coordinates are affine
    functions of the old.
    """
    result = DiffOperator.zero(new_coords, ring)
    ident = DiffOperator.identity(new_coords, ring)
    for (mono, deriv), c in op.terms:
        coef = ident.scale(ring(op.ring.to_sympy(c)) if op.ring != ring else c)
        for k, e in enumerate(mono):
            for _ in range(e):
                coef = coef * values[k]
        d = ident
        for k, e in enumerate(deriv):
            for _ in range(e):
                d = d * derivatives[k]
        result = result + coef * d
    return result


# ---------------------------------------------------------------- gauge operators

def cartesian_names(n_particles: int) -> tuple[str, ...]:
    return tuple(f"R{b + 1}{ax}" for b in range(n_particles) for ax in AXES)


def _convert(ring, arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = ring(v)
    return out


def _default_ring(spec, basis, ring):
    if ring is not None:
        return ring
    return ring_for(spec, basis)


def momentum_operators(spec: GaugeSpec, basis: ExtendedBasis | None = None,
                       coords: str = "cartesian", ring=None) -> list[list[DiffOperator]]:
    """Gauge-projected momenta ``P[alpha][j]``.

    In cartesian coordinates (``R1x, R1y, ...``) the projector removes the
    gauge directions and, for translation-invariant gauges, the centre of mass
    motion. In normal coordinates (``Q4, Q5, ...``) they are
    ``sum_c m_b Gamma[c, b, j] / R_c^2 (1/i) d/dQ_c``.
    """
    ring = _default_ring(spec, basis, ring)
    n = spec.n_particles
    m = _convert(ring, spec.masses)
    mi = ring.i
    if coords == "cartesian":
        names = cartesian_names(n)
        g = _convert(ring, spec.gamma)
        inv_norm = [ring.one / ring(v) for v in spec.norms_sq]
        total = sum(m[1:], m[0])
        d = [[DiffOperator.derivative(names, ring, names[3 * b + i]) for i in range(3)]
             for b in range(n)]
        gauge_d = []
        for a in range(3):
            acc = DiffOperator.zero(names, ring)
            for b in range(n):
                for k in range(3):
                    if g[a, b, k]:
                        acc = acc + d[b][k].scale(g[a, b, k])
            gauge_d.append(acc)
        com_d = []
        for i in range(3):
            acc = DiffOperator.zero(names, ring)
            for b in range(n):
                acc = acc + d[b][i]
            com_d.append(acc)
        out = []
        for b in range(n):
            row = []
            for j in range(3):
                p = d[b][j].scale(-mi)
                for a in range(3):
                    if g[a, b, j]:
                        p = p + gauge_d[a].scale(mi * m[b] * g[a, b, j] * inv_norm[a])
                if spec.translation_invariant:
                    p = p + com_d[j].scale(mi * m[b] / total)
                row.append(p)
            out.append(row)
        return out
    if coords == "normal":
        if basis is None:
            raise ValueError("normal coordinates need an extended basis")
        names = basis.mode_names
        rows = _convert(ring, basis.mode_rows)
        norms = [ring(v) for v in basis.mode_norms_sq]
        d = [DiffOperator.derivative(names, ring, nm) for nm in names]
        out = []
        for b in range(n):
            row = []
            for j in range(3):
                p = DiffOperator.zero(names, ring)
                for c in range(basis.n_modes):
                    if rows[c, b, j]:
                        p = p + d[c].scale(-mi * m[b] * rows[c, b, j] / norms[c])
                row.append(p)
            out.append(row)
        return out
    raise ValueError(f"unknown coordinate system {coords!r}")


def position_operators(spec: GaugeSpec, basis: ExtendedBasis | None = None,
                       coords: str = "cartesian", ring=None) -> list[list[DiffOperator]]:
    """Body-frame positions ``R[alpha][i]`` as multiplication operators."""
    ring = _default_ring(spec, basis, ring)
    n = spec.n_particles
    if coords == "cartesian":
        names = cartesian_names(n)
        return [[DiffOperator.coordinate(names, ring, names[3 * b + i]) for i in range(3)]
                for b in range(n)]
    if coords == "normal":
        names = basis.mode_names
        rows = _convert(ring, basis.mode_rows)
        origin = _convert(ring, basis.origin)
        return [[polynomial_from_linear(names, ring, origin[b, i], rows[:, b, i])
                 for i in range(3)] for b in range(n)]
    raise ValueError(f"unknown coordinate system {coords!r}")


def gauge_value_operators(spec: GaugeSpec, ring=None) -> list[DiffOperator]:
    """``S_a`` as multiplication operators in cartesian coordinates."""
    ring = _default_ring(spec, None, ring)
    names = cartesian_names(spec.n_particles)
    m = _convert(ring, spec.masses)
    g = _convert(ring, spec.gamma)
    n = len(names)
    return [polynomial_from_linear(names, ring, ring.zero,
                                   [m[k // 3] * g[a, k // 3, k % 3] for k in range(n)])
            for a in range(3)]


def _linear_position_coefficients(spec, basis, coords, ring):
    """Positions as ``const[b, k] + sum_v lin[b, k, v] x_v`` over ring scalars."""
    n = spec.n_particles
    if coords == "cartesian":
        names = cartesian_names(n)
        const = np.full((n, 3), ring.zero, dtype=object)
        lin = np.full((n, 3, 3 * n), ring.zero, dtype=object)
        for b in range(n):
            for k in range(3):
                lin[b, k, 3 * b + k] = ring.one
        return names, const, lin
    if coords == "normal":
        names = basis.mode_names
        rows = _convert(ring, basis.mode_rows)
        const = _convert(ring, basis.origin)
        lin = np.transpose(rows, (1, 2, 0))
        return names, const, lin
    raise ValueError(f"unknown coordinate system {coords!r}")


def q_operators(spec: GaugeSpec, rows: np.ndarray, basis: ExtendedBasis | None = None,
                coords: str = "cartesian", ring=None) -> list[list[DiffOperator]]:
    """``Q[c][i] = sum_b m_b rows[c, b, j] eps_{jik} R[b, k]`` as polynomials."""
    ring = _default_ring(spec, basis, ring)
    names, const, lin = _linear_position_coefficients(spec, basis, coords, ring)
    m = _convert(ring, spec.masses)
    r = _convert(ring, np.asarray(rows))
    nv = len(names)
    out = []
    for c in range(r.shape[0]):
        row = []
        for i in range(3):
            c0 = ring.zero
            cl = [ring.zero] * nv
            for b in range(spec.n_particles):
                for j in range(3):
                    if not r[c, b, j]:
                        continue
                    for k in range(3):
                        e = int(LEVI_CIVITA[j, i, k])
                        if not e:
                            continue
                        w = m[b] * r[c, b, j] if e > 0 else -(m[b] * r[c, b, j])
                        if const[b, k]:
                            c0 = c0 + w * const[b, k]
                        for v in range(nv):
                            if lin[b, k, v]:
                                cl[v] = cl[v] + w * lin[b, k, v]
            row.append(polynomial_from_linear(names, ring, c0, cl))
        out.append(row)
    return out


def residual_angular_momentum(spec: GaugeSpec, basis: ExtendedBasis | None = None,
                              coords: str = "cartesian", ring=None) -> list[DiffOperator]:
    """Residual angular momentum ``Lambda_n``.

    Cartesian: ``sum_g eps_{npq} R[g][p] P[g][q]``. Normal coordinates:
    ``sum_c Q[c][n](R(Q)) / R_c^2 (1/i) d/dQ_c`` with ``Q`` built from the
    internal rows.
    """
    ring = _default_ring(spec, basis, ring)
    if coords == "cartesian":
        pos = position_operators(spec, basis, coords, ring)
        mom = momentum_operators(spec, basis, coords, ring)
        names = pos[0][0].coords
        out = []
        for nn in range(3):
            acc = DiffOperator.zero(names, ring)
            for g in range(spec.n_particles):
                for p in range(3):
                    for q in range(3):
                        e = int(LEVI_CIVITA[nn, p, q])
                        if e:
                            acc = acc + (pos[g][p] * mom[g][q]).scale(ring(e))
            out.append(acc)
        return out
    if coords == "normal":
        names = basis.mode_names
        qm = q_operators(spec, basis.mode_rows, basis, coords, ring)
        norms = [ring(v) for v in basis.mode_norms_sq]
        out = []
        for nn in range(3):
            acc = DiffOperator.zero(names, ring)
            for c, nm in enumerate(names):
                d = DiffOperator.derivative(names, ring, nm)
                acc = acc + (qm[c][nn] * d).scale(-ring.i / norms[c])
            out.append(acc)
        return out
    raise ValueError(f"unknown coordinate system {coords!r}")


def anomaly_rhs(spec: GaugeSpec, i: int, j: int, ring=None) -> DiffOperator:
    """Right-hand side of the residual angular momentum commutator, cartesian.

    ``i eps_{ijk} Lambda_k - i sum_{alpha, a} Gamma[a, alpha, m] / R_a^2
    (eps_{imn} Q[a][j] - eps_{jmn} Q[a][i]) P[alpha][n]``
    """
    ring = _default_ring(spec, None, ring)
    lam = residual_angular_momentum(spec, None, "cartesian", ring)
    mom = momentum_operators(spec, None, "cartesian", ring)
    qg = q_operators(spec, spec.gamma, None, "cartesian", ring)
    g = _convert(ring, spec.gamma)
    inv_norm = [ring.one / ring(v) for v in spec.norms_sq]
    names = lam[0].coords
    acc = DiffOperator.zero(names, ring)
    for k in range(3):
        e = int(LEVI_CIVITA[i, j, k])
        if e:
            acc = acc + lam[k].scale(ring.i * ring(e))
    for a in range(3):
        for alpha in range(spec.n_particles):
            for mm in range(3):
                if not g[a, alpha, mm]:
                    continue
                for nn in range(3):
                    coef = DiffOperator.zero(names, ring)
                    e1 = int(LEVI_CIVITA[i, mm, nn])
                    e2 = int(LEVI_CIVITA[j, mm, nn])
                    if e1:
                        coef = coef + qg[a][j].scale(ring(e1))
                    if e2:
                        coef = coef - qg[a][i].scale(ring(e2))
                    if coef.is_zero():
                        continue
                    acc = acc - (coef * mom[alpha][nn]).scale(ring.i * g[a, alpha, mm]
                                                            * inv_norm[a])
    return acc


def normal_pullback(op: DiffOperator, spec: GaugeSpec, basis: ExtendedBasis,
                    ring=None) -> DiffOperator:
    """Restrict a cartesian operator to the gauge surface in normal coordinates.

    Cartesian ``R`` becomes ``origin + sum_c Q_c Gamma_c`` and ``d/dR[b][k]``
    becomes ``sum_c m_b Gamma[c, b, k] / R_c^2 d/dQ_c``. Only operators
    tangent to the gauge surface are meaningful under this map.
    """
    ring = ring or op.ring
    names = basis.mode_names
    pos = position_operators(spec, basis, "normal", ring)
    m = _convert(ring, spec.masses)
    rows = _convert(ring, basis.mode_rows)
    norms = [ring(v) for v in basis.mode_norms_sq]
    values, derivs = [], []
    for b in range(spec.n_particles):
        for k in range(3):
            values.append(pos[b][k])
            acc = DiffOperator.zero(names, ring)
            for c, nm in enumerate(names):
                if rows[c, b, k]:
                    acc = acc + DiffOperator.derivative(names, ring, nm).scale(
                        m[b] * rows[c, b, k] / norms[c])
            derivs.append(acc)
    return substitute(op, names, ring, values, derivs)


# ---------------------------------------------------------------- angular sector

class AngularSector:
    """Spin-``l`` matrices ``s_1, s_2, s_3`` on the basis ``m = l, l-1, ..., -l``.

    They satisfy ``[s_i, s_j] = i eps_{ijk} s_k``; on states they act as
    minus the body-frame angular momentum.
    """

    def __init__(self, l: int):
        if l < 0 or int(l) != l:
            raise ValueError(f"l must be a non-negative integer, got {l}")
        self.l = int(l)
        ms = np.arange(self.l, -self.l - 1, -1)
        self.m_values = ms
        dim = len(ms)
        up = np.zeros((dim, dim))
        for k in range(1, dim):
            m = ms[k]
            up[k - 1, k] = np.sqrt(self.l * (self.l + 1) - m * (m + 1))
        down = up.T
        self.s = np.array([0.5 * (up + down), -0.5j * (up - down), np.diag(ms).astype(complex)],
                          dtype=complex)

    @property
    def dim(self) -> int:
        return 2 * self.l + 1

    def casimir(self) -> np.ndarray:
        return sum(si @ si for si in self.s)


# ---------------------------------------------------------------- audits

def expected_rp_commutator(spec: GaugeSpec, alpha: int, i: int, beta: int, j: int, ring=None):
    """``i (d_ab d_ij - [m_b/M d_ij] - sum_a m_b Gamma[a,alpha,i] Gamma[a,beta,j] / R_a^2)``.

    The bracketed centre-of-mass term is present for translation-invariant gauges.
    """
    ring = _default_ring(spec, None, ring)
    m = [ring(v) for v in spec.masses]
    g = spec.gamma
    val = ring.one if (alpha == beta and i == j) else ring.zero
    if spec.translation_invariant and i == j:
        val = val - m[beta] / sum(m[1:], m[0])
    for a in range(3):
        if g[a, alpha, i] and g[a, beta, j]:
            val = val - m[beta] * ring(g[a, alpha, i]) * ring(g[a, beta, j]) / ring(spec.norms_sq[a])
    return ring.i * val


class CommutatorAudit:
    """Exact residual counts of the canonical algebra of one gauge.

    Every count is the number of pairs whose residual operator is not zero.
    """

    def __init__(self, spec: GaugeSpec, ring=None, anomaly: bool = True):
        ring = _default_ring(spec, None, ring)
        pos = position_operators(spec, None, "cartesian", ring)
        mom = momentum_operators(spec, None, "cartesian", ring)
        n = spec.n_particles
        names = pos[0][0].coords
        flat_r = [(b, k, pos[b][k]) for b in range(n) for k in range(3)]
        flat_p = [(b, k, mom[b][k]) for b in range(n) for k in range(3)]
        self.rp = 0
        for (a, i, r) in flat_r:
            for (b, j, p) in flat_p:
                expect = DiffOperator.scalar(names, ring, expected_rp_commutator(spec, a, i, b, j, ring))
                if not (commutator(r, p) - expect).is_zero():
                    self.rp += 1
        self.pp = sum(not commutator(p1, p2).is_zero()
                      for x, (_, _, p1) in enumerate(flat_p) for (_, _, p2) in flat_p[x + 1:])
        g = _convert(ring, spec.gamma)
        self.gauge_momentum = 0
        for a in range(3):
            acc = DiffOperator.zero(names, ring)
            for b in range(n):
                for k in range(3):
                    if g[a, b, k]:
                        acc = acc + mom[b][k].scale(g[a, b, k])
            self.gauge_momentum += not acc.is_zero()
        self.total_momentum = None
        if spec.translation_invariant:
            self.total_momentum = sum(
                not sum((mom[b][k] for b in range(1, n)), mom[0][k]).is_zero() for k in range(3))
        self.anomaly = None
        if anomaly:
            lam = residual_angular_momentum(spec, None, "cartesian", ring)
            self.anomaly = sum(not (commutator(lam[i], lam[j]) - anomaly_rhs(spec, i, j, ring)).is_zero()
                               for i, j in ((0, 1), (1, 2), (2, 0)))

    @property
    def exact(self) -> bool:
        return (self.rp == 0 and self.pp == 0 and self.gauge_momentum == 0
                and not self.total_momentum and not self.anomaly)

    def to_dict(self) -> dict:
        return {"rp": self.rp, "pp": self.pp, "gauge_momentum": self.gauge_momentum,
                "total_momentum": self.total_momentum, "anomaly": self.anomaly}
