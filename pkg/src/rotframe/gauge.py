"""Linear rotational gauges, their extended bases and gauge-derived geometry.

A gauge is given by three rows ``Gamma[a, alpha, i]`` and masses ``m[alpha]``.
Its value on a body-frame configuration ``R`` is

    S_a(R) = sum_alpha m_alpha Gamma[a, alpha, :] . R[alpha, :]

and the rows are mass-orthogonal with squared norms ``norms_sq[a]``. Arrays may
hold floats or exact sympy numbers; exact arrays stay exact through
:func:`extend_basis`, :func:`eckart_gauge` and :meth:`GaugeSpec.from_rows` so that
operator identities can later be checked in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy

from .errors import (GaugeViolationError, HorizonError, InvalidMassError,
                     NonOrthogonalGaugeError, NotPrincipalAxesError,
                     RankDeficientError, SingularInertiaError,
                     TranslationInvarianceError)
from .rotation import LEVI_CIVITA

ORTHO_RTOL = 1e-10
GAUGE_TOL = 1e-8
SEED_RANK_RTOL = 1e-10
SINGULAR_RTOL = 1e-12


# ---------------------------------------------------------------- exact helpers

def _to_exact(x):
    if isinstance(x, sympy.Basic):
        return x
    if isinstance(x, Fraction):
        return sympy.Rational(x.numerator, x.denominator)
    if isinstance(x, (int, np.integer)):
        return sympy.Integer(int(x))
    if isinstance(x, (float, np.floating)) and np.isfinite(x):
        f = Fraction(float(x))
        return sympy.Rational(f.numerator, f.denominator)
    raise TypeError(f"cannot represent {x!r} exactly")


def _is_exact_value(x) -> bool:
    return isinstance(x, (sympy.Basic, Fraction, int, np.integer)) and not isinstance(x, bool)


def as_array(values, exact: bool | None = None) -> np.ndarray:
    """Array of floats, or of sympy numbers when every entry is exact.

    Integers alone give a float array unless ``exact=True``.
    """
    arr = np.asarray(values, dtype=object)
    flat = list(arr.flat)
    if exact is None:
        exact = bool(flat) and all(_is_exact_value(v) for v in flat) and any(
            isinstance(v, (sympy.Basic, Fraction)) for v in flat)
    if exact:
        out = np.empty(arr.shape, dtype=object)
        for idx, v in np.ndenumerate(arr):
            out[idx] = _to_exact(v)
        return out
    return np.asarray(np.asarray(values, dtype=object).astype(float), dtype=float)


def is_exact(arr: np.ndarray) -> bool:
    return np.asarray(arr).dtype == object


def numeric(arr) -> np.ndarray:
    """Float copy of a (possibly exact) array."""
    arr = np.asarray(arr)
    if arr.dtype == object:
        return np.array([float(sympy.N(v, 30)) for v in arr.flat]).reshape(arr.shape)
    return np.asarray(arr, dtype=float)


def _simplify(x):
    return sympy.radsimp(sympy.expand(x)) if isinstance(x, sympy.Basic) else x


def _is_zero(x, scale: float = 1.0, rtol: float = ORTHO_RTOL) -> bool:
    if isinstance(x, sympy.Basic):
        s = _simplify(x)
        if s == 0:
            return True
        return bool(sympy.simplify(s) == 0)
    return abs(x) <= rtol * max(scale, 1e-300)


def mass_inner(masses: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Mass-weighted inner product ``sum_alpha m_alpha u_alpha . v_alpha``."""
    total = 0
    for a in range(len(masses)):
        for i in range(3):
            total = total + masses[a] * u[a, i] * v[a, i]
    if isinstance(total, sympy.Basic):
        return _simplify(total)
    return total


def _sqrt(x):
    return sympy.sqrt(x) if isinstance(x, sympy.Basic) else np.sqrt(x)


# ---------------------------------------------------------------- data types

@dataclass(frozen=True)
class Configuration:
    """Particle positions, shape ``(N, 3)``, in the lab or body frame."""

    positions: np.ndarray
    frame: str = "body"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
        if self.frame not in ("lab", "body"):
            raise ValueError(f"frame must be 'lab' or 'body', got {self.frame!r}")
        object.__setattr__(self, "positions", pos)


@dataclass(frozen=True)
class GaugeSpec:
    """Three mass-orthogonal gauge rows with their squared norms."""

    masses: np.ndarray
    gamma: np.ndarray
    norms_sq: np.ndarray
    translation_invariant: bool = False

    def __post_init__(self):
        masses = as_array(self.masses)
        gamma = as_array(self.gamma)
        norms = as_array(self.norms_sq)
        n = masses.shape[0] if masses.ndim == 1 else -1
        if n < 1 or gamma.shape != (3, n, 3) or norms.shape != (3,):
            raise ValueError(
                f"expected masses (N,), gamma (3, N, 3), norms_sq (3,); got "
                f"{masses.shape}, {gamma.shape}, {norms.shape}")
        for m in numeric(masses):
            if not np.isfinite(m) or m <= 0:
                raise InvalidMassError(f"masses must be positive and finite, got {m}")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "norms_sq", norms)
        _check_rows(masses, list(gamma), norms)
        if self.translation_invariant:
            for a in range(3):
                for i in range(3):
                    s = sum(masses[b] * gamma[a, b, i] for b in range(n))
                    scale = float(np.sqrt(numeric(norms)[a] * numeric(masses).sum()))
                    if not _is_zero(s, scale):
                        raise TranslationInvarianceError(
                            f"row {a + 1} has mass-weighted sum {s} along axis {i}")

    @property
    def n_particles(self) -> int:
        return self.masses.shape[0]

    @property
    def exact(self) -> bool:
        return is_exact(self.gamma)

    @property
    def total_mass(self):
        return sum(self.masses)

    def numeric(self) -> "GaugeSpec":
        if not self.exact:
            return self
        return GaugeSpec(numeric(self.masses), numeric(self.gamma), numeric(self.norms_sq),
                         self.translation_invariant)

    @classmethod
    def from_rows(cls, masses, rows, translation_invariant: bool = False) -> "GaugeSpec":
        """Mass-orthogonalise three rows (Gram-Schmidt, no normalisation)."""
        masses = as_array(masses)
        rows = as_array(rows)
        if is_exact(masses) or is_exact(rows):
            masses = as_array(masses, exact=True)
            rows = as_array(rows, exact=True)
        if rows.shape[0] != 3:
            raise ValueError("a gauge has exactly three rows")
        out = []
        for v in rows:
            w = v.copy()
            for u in out:
                w = w - (mass_inner(masses, w, u) / mass_inner(masses, u, u)) * u
            if is_exact(w):
                w = np.vectorize(_simplify, otypes=[object])(w)
            n2 = mass_inner(masses, w, w)
            if _is_zero(n2, float(mass_inner(numeric(masses), numeric(v), numeric(v)))):
                raise RankDeficientError("gauge rows are linearly dependent")
            out.append(w)
        norms = [mass_inner(masses, w, w) for w in out]
        return cls(masses, np.array(out), np.array(norms, dtype=object if is_exact(rows) else float),
                   translation_invariant)


def _check_rows(masses, rows, norms) -> None:
    for a, u in enumerate(rows):
        for b, v in enumerate(rows):
            if b < a:
                continue
            g = mass_inner(masses, u, v)
            target = norms[a] if a == b else 0
            scale = float(np.sqrt(abs(numeric(np.array([norms[a]]))[0]
                                      * numeric(np.array([norms[b]]))[0])))
            if not _is_zero(g - target, scale):
                raise NonOrthogonalGaugeError(
                    f"rows {a + 1} and {b + 1}: mass inner product {g}, expected {target}")


@dataclass(frozen=True)
class ExtendedBasis:
    """Complete mass-orthogonal basis built on a gauge.

    Rows ``0..2`` are the gauge rows. Rows ``3..3+n_modes-1`` are internal
    displacement modes with coordinates ``Q``. For translation-invariant gauges
    the last three rows are uniform translations. ``origin`` is the reference
    configuration that internal displacements are measured from.
    """

    spec: GaugeSpec
    gamma: np.ndarray
    norms_sq: np.ndarray
    origin: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.spec.n_particles
        if self.origin is None:
            origin = np.zeros((n, 3), dtype=object if self.spec.exact else float)
            if self.spec.exact:
                origin[:] = sympy.Integer(0)
            object.__setattr__(self, "origin", origin)

    @property
    def n_modes(self) -> int:
        n = 3 * self.spec.n_particles
        return n - 6 if self.spec.translation_invariant else n - 3

    @property
    def mode_rows(self) -> np.ndarray:
        return self.gamma[3:3 + self.n_modes]

    @property
    def mode_norms_sq(self) -> np.ndarray:
        return self.norms_sq[3:3 + self.n_modes]

    @property
    def mode_names(self) -> tuple[str, ...]:
        return tuple(f"Q{c + 4}" for c in range(self.n_modes))

    @property
    def exact(self) -> bool:
        return is_exact(self.gamma)

    def numeric(self) -> "ExtendedBasis":
        if not self.exact:
            return self
        return ExtendedBasis(self.spec.numeric(), numeric(self.gamma), numeric(self.norms_sq),
                             numeric(self.origin))


@dataclass(frozen=True)
class GaugeGeometry:
    """Gauge matrices at one configuration.

    ``jacobian`` is ``|det Q| / prod(norms)`` and ``det_sign`` the sign of
    ``det Q``. At singular points ``N_inv`` is filled with NaN.
    """

    Q: np.ndarray
    N: np.ndarray
    N_inv: np.ndarray
    jacobian: float
    det_sign: int
    singular: bool


# ---------------------------------------------------------------- evaluation

def _positions(cfg) -> np.ndarray:
    if isinstance(cfg, Configuration):
        return cfg.positions
    return np.asarray(cfg, dtype=float)


def eval_gauge(spec: GaugeSpec, cfg) -> np.ndarray:
    """Gauge values ``S_a`` at a configuration."""
    s = spec.numeric()
    r = _positions(cfg)
    return np.einsum("b,abj,bj->a", s.masses, s.gamma, r)


def q_matrix(masses: np.ndarray, rows: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """``Q[a, i] = sum_b m_b rows[a, b, j] eps_{jik} R[b, k]``; batched over leading axes."""
    w = np.einsum("b,abj,jik->aibk", masses, rows, LEVI_CIVITA)
    return np.tensordot(positions, w, axes=([-2, -1], [2, 3]))


def eval_geometry(spec: GaugeSpec, cfg) -> GaugeGeometry:
    """Matrices ``Q``, ``N``, ``N^{-1}`` and the Jacobian ``J`` at ``cfg``."""
    s = spec.numeric()
    q = q_matrix(s.masses, s.gamma, _positions(cfg))
    n_mat = q.T @ (q / s.norms_sq[:, None])
    det = float(np.linalg.det(q))
    scale = float(np.linalg.norm(q)) ** 3
    singular = abs(det) <= SINGULAR_RTOL * scale or det == 0.0
    jac = abs(det) / float(np.sqrt(np.prod(s.norms_sq)))
    if singular:
        n_inv = np.full((3, 3), np.nan)
    else:
        qi = np.linalg.inv(q)
        n_inv = qi @ np.diag(s.norms_sq) @ qi.T
    return GaugeGeometry(Q=q, N=n_mat, N_inv=n_inv, jacobian=0.0 if singular else jac,
                         det_sign=int(np.sign(det)), singular=singular)


def eval_quantum_potentials(spec: GaugeSpec, cfg) -> tuple[float, float]:
    """The two gauge-induced potentials ``(V1, V2)`` in units with hbar = 1.

    Raises:
        HorizonError: if ``det Q`` vanishes at ``cfg``.
    """
    s = spec.numeric()
    r = _positions(cfg)
    geo = eval_geometry(s, r)
    if geo.singular:
        raise HorizonError("quantum potentials diverge where det Q = 0")
    eps = LEVI_CIVITA
    qi = np.linalg.inv(geo.Q)
    m = s.masses
    # A[alpha, l', l] = sum_c Qinv[l', c] Gamma[c, alpha, l]
    a = np.einsum("pc,cal->apl", qi, s.gamma)
    v1 = -0.125 * np.einsum("a,apl,amk,kpq,qlm->", m, a, a, eps, eps)
    n = s.n_particles
    eye = np.eye(n)
    # Projected derivatives also remove the centre-of-mass direction.
    d_x = eye - (m[:, None] / m.sum() if s.translation_invariant else 0.0)
    d_y = eye - (m[None, :] / m.sum() if s.translation_invariant else 0.0)
    # X[b, g, l', n] = d_bg d_l'n - eps_{l'gs} R[g, s] m_b sum_a Qinv[g, a] Gamma[a, b, n]
    w = m[:, None, None] * a
    x = (np.einsum("bg,pn->bgpn", d_x, np.eye(3))
         - np.einsum("pgs,cs,bgn->bcpn", eps, r, w))
    # Y[b, g, n', l] = d_bg d_n'l - eps_{lmp} R[b, p] m_g sum_b' Qinv[m, b'] Gamma[b', g, n']
    y = (np.einsum("bg,nl->bgnl", d_y, np.eye(3))
         - np.einsum("lmp,bp,gmn->bgnl", eps, r, w))
    v2 = -0.125 * np.einsum("nlk,kh,hpq,bgpn,bgql->", eps, geo.N_inv, eps, x, y)
    return float(v1), float(v2)


# ---------------------------------------------------------------- construction

def eckart_gauge(masses, reference) -> GaugeSpec:
    """Eckart gauge of a reference configuration on its principal axes.

    Rows are ``Gamma[a, alpha, i] = eps_{aji} Z[alpha, j]``; their squared
    norms are the principal moments of inertia. The gauge is translation
    invariant because the reference is centred.

    Raises:
        NotPrincipalAxesError: if ``reference`` is not centred or its second
            moment tensor is not diagonal.
        SingularInertiaError: if a principal moment vanishes.
    """
    masses = as_array(masses)
    z = as_array(reference)
    exact = is_exact(z)
    n = z.shape[0]
    if exact and not is_exact(masses):
        masses = as_array(masses, exact=True) if all(float(v).is_integer() for v in masses) \
            else masses
    zf, mf = numeric(z), numeric(masses)
    scale = float(np.einsum("a,ai,ai->", mf, zf, zf))
    if scale == 0.0:
        raise SingularInertiaError("reference configuration is a single point")
    for i in range(3):
        com = sum(masses[b] * z[b, i] for b in range(n))
        if not _is_zero(com, np.sqrt(scale * mf.sum())):
            raise NotPrincipalAxesError(f"reference is not centred along axis {i}")
        for j in range(i + 1, 3):
            second = sum(masses[b] * z[b, i] * z[b, j] for b in range(n))
            if not _is_zero(second, scale):
                raise NotPrincipalAxesError(
                    f"second moment ({i}, {j}) = {second} is not zero")
    gamma = np.empty((3, n, 3), dtype=object if exact else float)
    for a in range(3):
        for b in range(n):
            for i in range(3):
                gamma[a, b, i] = sum(int(LEVI_CIVITA[a, j, i]) * z[b, j] for j in range(3))
    norms = []
    for a in range(3):
        moment = mass_inner(masses, gamma[a], gamma[a])
        if _is_zero(moment, scale):
            raise SingularInertiaError(f"principal moment {a + 1} vanishes")
        norms.append(moment)
    return GaugeSpec(masses, gamma, np.array(norms, dtype=object if exact else float),
                     translation_invariant=True)


def translation_rows(masses: np.ndarray, norm_sq) -> np.ndarray:
    """Uniform translations with squared norm ``norm_sq``: ``sqrt(norm_sq/M) e_i``."""
    total = sum(masses)
    factor = _sqrt(norm_sq / total) if not isinstance(total, sympy.Basic) else \
        sympy.sqrt(sympy.sympify(norm_sq) / total)
    n = len(masses)
    rows = np.empty((3, n, 3), dtype=object if isinstance(factor, sympy.Basic) else float)
    rows[:] = 0 if rows.dtype == object else 0.0
    for i in range(3):
        for b in range(n):
            rows[i, b, i] = factor
    if rows.dtype == object:
        rows = np.vectorize(sympy.sympify, otypes=[object])(rows)
    return rows


def extend_basis(spec: GaugeSpec, seeds=None, norm_sq=1.0, origin=None) -> ExtendedBasis:
    """Complete the gauge rows to a mass-orthogonal basis.

    Seeds are orthogonalised first (two Gram-Schmidt passes), then canonical
    axis vectors fill the remaining directions. Every internal row is scaled to
    squared norm ``norm_sq``; with ``norm_sq=None`` rows keep their
    Gram-Schmidt norms, which keeps rational input rational.

    Raises:
        RankDeficientError: if a seed is dependent on earlier rows, or if there
            are more seeds than free directions.
    """
    masses = spec.masses
    n = spec.n_particles
    exact = spec.exact
    if exact and norm_sq is not None and not isinstance(norm_sq, sympy.Basic):
        norm_sq = _to_exact(Fraction(norm_sq).limit_denominator(10**12)
                            if isinstance(norm_sq, float) else norm_sq)
    fixed = [spec.gamma[a] for a in range(3)]
    trans = []
    if spec.translation_invariant:
        trans = list(translation_rows(masses, sum(masses) if norm_sq is None else norm_sq))
    n_modes = 3 * n - 3 - (3 if spec.translation_invariant else 0)
    basis_so_far = fixed + trans
    modes: list[np.ndarray] = []

    def orthogonalise(v):
        w = v.copy()
        for _ in range(2):
            for u in basis_so_far + modes:
                w = w - (mass_inner(masses, w, u) / mass_inner(masses, u, u)) * u
            if exact:
                w = np.vectorize(_simplify, otypes=[object])(w)
        return w

    def normalised(w):
        n2 = mass_inner(masses, w, w)
        if norm_sq is None:
            return w
        out = w * _sqrt(norm_sq / n2) if exact else w * np.sqrt(norm_sq / n2)
        if exact:
            out = np.vectorize(_simplify, otypes=[object])(out)
        return out

    if seeds is not None:
        seeds = as_array(seeds, exact=exact or None)
        if exact and not is_exact(seeds):
            raise TypeError("an exact gauge needs exact seed vectors")
        seeds = seeds.reshape(-1, n, 3)
        if len(seeds) > n_modes:
            raise RankDeficientError(f"{len(seeds)} seeds exceed the {n_modes} free directions")
        for k, v in enumerate(seeds):
            w = orthogonalise(v)
            before = float(mass_inner(numeric(masses), numeric(v), numeric(v)))
            if _is_zero(mass_inner(masses, w, w), before, SEED_RANK_RTOL):
                raise RankDeficientError(f"seed {k} is dependent on earlier rows")
            modes.append(normalised(w))
    for b in range(n):
        for i in range(3):
            if len(modes) == n_modes:
                break
            e = np.zeros((n, 3), dtype=object if exact else float)
            if exact:
                e[:] = sympy.Integer(0)
                e[b, i] = sympy.Integer(1)
            else:
                e[b, i] = 1.0
            w = orthogonalise(e)
            before = float(numeric(masses)[b])
            if _is_zero(mass_inner(masses, w, w), before, 1e-8):
                continue
            modes.append(normalised(w))
    rows = fixed + modes + trans
    norms = list(spec.norms_sq) + [mass_inner(masses, w, w) for w in modes + trans]
    gamma = np.array(rows, dtype=object if exact else float)
    norms_arr = np.array(norms, dtype=object if exact else float)
    if origin is not None:
        origin = as_array(origin, exact=exact or None)
    return ExtendedBasis(spec, gamma, norms_arr, origin)


def project_coords(basis: ExtendedBasis, cfg, tol: float = GAUGE_TOL) -> np.ndarray:
    """Internal coordinates ``Q_c`` of a body-frame configuration.

    Raises:
        GaugeViolationError: if the displacement from ``basis.origin`` breaks
            the gauge (or, for translation-invariant gauges, moves the centre
            of mass) by more than ``tol`` relative to its size.
    """
    b = basis.numeric()
    d = _positions(cfg) - b.origin
    m = b.spec.masses
    size = max(float(np.sqrt(np.einsum("a,ai,ai->", m, d, d))), 1.0)
    gauge = np.einsum("a,cai,ai->c", m, b.gamma[:3], d) / np.sqrt(b.norms_sq[:3])
    if np.max(np.abs(gauge)) > tol * size:
        raise GaugeViolationError(f"gauge residual {np.max(np.abs(gauge)):.3g} exceeds tolerance")
    if b.spec.translation_invariant:
        com = np.einsum("a,ai->i", m, d) / np.sqrt(m.sum())
        if np.max(np.abs(com)) > tol * size:
            raise GaugeViolationError(f"centre-of-mass shift {np.max(np.abs(com)):.3g}")
    rows = b.mode_rows
    return np.einsum("a,cai,ai->c", m, rows, d) / b.mode_norms_sq


def embed_coords(basis: ExtendedBasis, coords) -> np.ndarray:
    """Body-frame positions ``origin + sum_c Q_c Gamma_c``."""
    b = basis.numeric()
    q = np.asarray(coords, dtype=float)
    if q.shape[-1] != b.n_modes:
        raise ValueError(f"expected {b.n_modes} coordinates, got {q.shape[-1]}")
    return b.origin + np.einsum("...c,cai->...ai", q, b.mode_rows)


def completeness_residual(basis: ExtendedBasis) -> float:
    """Largest deviation of ``sum_a m_a m_b Gamma_a Gamma_b / R_a^2`` from ``m_a delta``."""
    b = basis.numeric()
    m = b.spec.masses
    lhs = np.einsum("a,b,cai,cbj,c->aibj", m, m, b.gamma, b.gamma, 1.0 / b.norms_sq)
    n = len(m)
    rhs = np.einsum("a,ab,ij->aibj", m, np.eye(n), np.eye(3))
    return float(np.max(np.abs(lhs - rhs)) / np.max(m))


def random_gauge_spec(rng: np.random.Generator, n_particles: int,
                      translation_invariant: bool = False, max_tries: int = 50) -> GaugeSpec:
    """Exact random gauge: rational masses and integer rows, mass-orthogonalised.

    For translation-invariant gauges the rows are first made orthogonal to
    uniform translations.
    """
    if translation_invariant and n_particles < 2:
        raise ValueError("a translation-invariant gauge needs at least two particles")
    for _ in range(max_tries):
        masses = [sympy.Rational(int(rng.integers(1, 7)), int(rng.integers(1, 4)))
                  for _ in range(n_particles)]
        rows = np.empty((3, n_particles, 3), dtype=object)
        for idx in np.ndindex(rows.shape):
            rows[idx] = sympy.Integer(int(rng.integers(-3, 4)))
        if translation_invariant:
            total = sum(masses)
            for a in range(3):
                mean = sum((masses[b] * rows[a, b] for b in range(n_particles)),
                           np.zeros(3, dtype=object)) / total
                rows[a] = rows[a] - mean
        try:
            return GaugeSpec.from_rows(masses, rows, translation_invariant)
        except RankDeficientError:
            continue
    raise RankDeficientError("could not draw independent gauge rows")
