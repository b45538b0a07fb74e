"""Oscillator-basis Hamiltonians and spectra of Eckart cluster models.

Energies are in units of hbar*omega. Operators in normal coordinates are
rendered on a truncated product oscillator basis (total quanta <= n_max) as
*compressions*: every matrix element between retained states is the exact
element of the untruncated operator. This is achieved by building ladder
matrices on a larger basis with enough headroom for the operator degree and
cutting back afterwards.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (AmbiguousDegeneracyError, ConvergenceError, NonHermitianError,
                     UnsupportedModelError, UnsupportedOrderError)
from .gauge import eval_geometry, eval_quantum_potentials, numeric, q_matrix
from .systems import EckartModel
from .weylalg import (FLOAT, AngularSector, DiffOperator, momentum_operators,
                      polynomial_from_linear, residual_angular_momentum, ring_for)

HERMITIAN_RTOL = 1e-12
JACOBI_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 60
GROUP_TOL = 1e-9
FORMS = ("hamS3", "redham", "hamW4")


# ---------------------------------------------------------------- basis

def _states(n_modes: int, n_max: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(n_max + 1):
        level = [s for s in product(range(total + 1), repeat=n_modes) if sum(s) == total]
        out.extend(sorted(level, reverse=True))
    return out


class OscillatorBasis:
    """Product oscillator states with total quanta at most ``n_max``.

    States are ordered by total quanta, so truncating to a lower ``n_max``
    keeps a leading block. Mode ``k`` has frequency ``sigma[k]``.
    """

    def __init__(self, sigma, n_max: int, names=None):
        self.sigma = np.asarray(sigma, dtype=float).reshape(-1)
        if n_max < 0:
            raise ValueError("n_max must be non-negative")
        self.n_max = int(n_max)
        self.n_modes = len(self.sigma)
        self.names = tuple(names) if names is not None else tuple(
            f"Q{k + 4}" for k in range(self.n_modes))
        self.states = _states(self.n_modes, self.n_max) if self.n_modes else [()]
        self.index = {s: k for k, s in enumerate(self.states)}
        self._ladder = None
        self._larger: dict[int, OscillatorBasis] = {}

    @property
    def dim(self) -> int:
        return len(self.states)

    def totals(self) -> np.ndarray:
        return np.array([sum(s) for s in self.states], dtype=int)

    def energies(self) -> np.ndarray:
        occ = np.array(self.states, dtype=float).reshape(self.dim, self.n_modes)
        return occ @ self.sigma + 0.5 * self.sigma.sum()

    def lowering(self) -> list[sp.csr_matrix]:
        if self._ladder is None:
            mats = []
            for k in range(self.n_modes):
                rows, cols, vals = [], [], []
                for j, s in enumerate(self.states):
                    if s[k]:
                        t = s[:k] + (s[k] - 1,) + s[k + 1:]
                        rows.append(self.index[t])
                        cols.append(j)
                        vals.append(math.sqrt(s[k]))
                mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)))
            self._ladder = mats
        return self._ladder

    def larger(self, extra: int) -> "OscillatorBasis":
        if extra not in self._larger:
            self._larger[extra] = OscillatorBasis(self.sigma, self.n_max + extra, self.names)
        return self._larger[extra]


def render(op: DiffOperator, basis: OscillatorBasis) -> sp.csr_matrix:
    """Compression of a normal-coordinate operator onto ``basis``.

    ``Q_k = (a_k + a_k^+)/sqrt(2 sigma_k)`` and ``d/dQ_k = sqrt(sigma_k/2)(a_k - a_k^+)``.
    """
    if op.coords != basis.names:
        raise ValueError(f"operator coordinates {op.coords} do not match basis {basis.names}")
    dim = basis.dim
    if op.is_zero():
        return sp.csr_matrix((dim, dim), dtype=complex)
    big = basis.larger(op.total_degree)
    low = big.lowering()
    q_mats, d_mats = [], []
    for k, s in enumerate(basis.sigma):
        a, ad = low[k], low[k].T.tocsr()
        q_mats.append(((a + ad) / math.sqrt(2.0 * s)).tocsr())
        d_mats.append(((a - ad) * math.sqrt(0.5 * s)).tocsr())
    ident = sp.identity(big.dim, dtype=complex, format="csr")
    total = sp.csr_matrix((big.dim, big.dim), dtype=complex)
    cache: dict = {}

    def power(kind, k, e):
        key = (kind, k, e)
        if key not in cache:
            base = q_mats[k] if kind == "q" else d_mats[k]
            m = ident
            for _ in range(e):
                m = m @ base
            cache[key] = m
        return cache[key]

    for (mono, deriv), c in op.terms:
        m = ident
        for k, e in enumerate(mono):
            if e:
                m = m @ power("q", k, e)
        for k, e in enumerate(deriv):
            if e:
                m = m @ power("d", k, e)
        total = total + op.ring.to_complex(c) * m
    return total[:dim, :dim].tocsr()


# ---------------------------------------------------------------- diagonalisation

def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        rounds.append((np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi sweeps for a real symmetric matrix.

    Each sweep visits every off-diagonal pair once; pairs are grouped into
    rounds of disjoint rotations, which commute and are applied together.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 1 or norm == 0.0:
        return np.diag(a).copy(), v
    rounds = _round_robin(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= JACOBI_RTOL * norm:
            return np.diag(a).copy(), v
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            safe = np.where(big, 1.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0),
                         np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0)))
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap, aq = a[:, p], a[:, q]
            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
            ap, aq = a[p, :], a[q, :]
            a[p, :], a[q, :] = c[:, None] * ap - s[:, None] * aq, s[:, None] * ap + c[:, None] * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    raise ConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")


def _hermitian_block(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a dense Hermitian block through its real embedding."""
    if not np.any(h.imag):
        w, v = _jacobi(h.real)
        order = np.argsort(w, kind="stable")
        return w[order], v[:, order].astype(complex)
    n = h.shape[0]
    a, b = h.real, h.imag
    emb = np.block([[a, -b], [b, a]])
    w, v = _jacobi(emb)
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    cand = v[:n, :] + 1j * v[n:, :]
    scale = max(np.max(np.abs(w)), 1.0)
    vals, vecs = [], []
    k = 0
    while k < 2 * n:
        j = k + 1
        while j < 2 * n and w[j] - w[j - 1] <= 1e-9 * scale:
            j += 1
        size = j - k
        if size % 2:
            raise ConvergenceError("real embedding produced an unpaired eigenvalue")
        u, _, _ = np.linalg.svd(cand[:, k:j], full_matrices=False)
        vecs.append(u[:, :size // 2])
        vals.extend(w[k:j:2] if size == 2 else np.sort(w[k:j])[::2])
        k = j
    return np.array(vals), np.hstack(vecs)


def _as_dense(h) -> np.ndarray:
    return h.toarray() if sp.issparse(h) else np.asarray(h)


def check_hermitian(h, rtol: float = HERMITIAN_RTOL) -> None:
    d = _as_dense(h)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise NonHermitianError(f"matrix must be square, got {d.shape}")
    norm = np.linalg.norm(d)
    dev = np.linalg.norm(d - d.conj().T)
    if dev > rtol * max(norm, 1e-300):
        raise NonHermitianError(f"|H - H^+| = {dev:.3g} exceeds {rtol:g} |H| = {rtol * norm:.3g}")


def diagonalize(h) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.

    The matrix is split into the connected blocks of its sparsity graph and
    each block is diagonalised by cyclic Jacobi sweeps (complex blocks through
    the real embedding ``[[A, -B], [B, A]]``). Sweeps stop once the off-diagonal
    Frobenius norm drops below ``1e-12 |H|``.

    Raises:
        NonHermitianError: if ``|H - H^+| > 1e-12 |H|``.
        ConvergenceError: if the sweeps do not converge.
    """
    check_hermitian(h)
    d = _as_dense(h).astype(complex)
    n = d.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=complex)
    d = 0.5 * (d + d.conj().T)
    pattern = np.abs(d) > 1e-15 * max(np.max(np.abs(d)), 1e-300)
    n_blocks, labels = connected_components(sp.csr_matrix(pattern), directed=False)
    vals = np.zeros(n)
    vecs = np.zeros((n, n), dtype=complex)
    col = 0
    for blk in range(n_blocks):
        idx = np.flatnonzero(labels == blk)
        w, v = _hermitian_block(d[np.ix_(idx, idx)])
        vals[col:col + len(idx)] = w
        vecs[idx, col:col + len(idx)] = v
        col += len(idx)
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def eigenvalues(h) -> np.ndarray:
    """Sorted eigenvalues; real parts of a general eigensolve if not Hermitian."""
    try:
        return diagonalize(h)[0]
    except NonHermitianError:
        w = np.linalg.eigvals(_as_dense(h))
        return np.sort(w.real)


# ---------------------------------------------------------------- tables

COLUMNS = ("E", "n", "lambda", "n_zeta", "l", "m", "degeneracy")


@dataclass
class SpectrumTable:
    """Rows of energies with optional quantum-number labels and degeneracies."""

    rows: list = field(default_factory=list)

    def add(self, energy: float, degeneracy: int = 1, **labels) -> None:
        row = {c: None for c in COLUMNS}
        row.update(labels)
        row["E"] = float(energy)
        row["degeneracy"] = int(degeneracy)
        self.rows.append(row)

    def sort(self) -> None:
        def key(r):
            return (r["E"],) + tuple(-10**9 if r[c] is None else r[c] for c in COLUMNS[1:6])
        self.rows.sort(key=key)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r["E"] for r in self.rows])

    @property
    def total_degeneracy(self) -> int:
        return sum(r["degeneracy"] for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(r["E"])] + ["" if r[c] is None else r[c] for c in COLUMNS[1:]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns": list(COLUMNS), "rows": self.rows}, indent=1)

    @classmethod
    def from_csv(cls, text: str) -> "SpectrumTable":
        t = cls()
        for r in csv.DictReader(io.StringIO(text)):
            labels = {c: int(r[c]) for c in COLUMNS[1:6] if r[c] != ""}
            t.add(float(r["E"]), int(r["degeneracy"]), **labels)
        return t


def closed_form_spectrum_n3(n_max: int, l_max: int, epsilon: float) -> SpectrumTable:
    """Triangle levels through second order in ``epsilon``.

    ``E = sqrt(3)(n_zeta + 1/2) + sqrt(3/2)(2n + |lambda| + 1)
    + eps^2 (l(l+1) - m^2 + (m + lambda)^2 / 2)`` for every label set with
    ``2n + |lambda| + n_zeta <= n_max``.
    """
    eps2 = float(epsilon) ** 2
    s3, s32 = math.sqrt(3.0), math.sqrt(1.5)
    table = SpectrumTable()
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            for nz in range(n_max + 1):
                for k in range(n_max - nz + 1):
                    for lam in range(-k, k + 1, 2):
                        n = (k - abs(lam)) // 2
                        e = (s3 * (nz + 0.5) + s32 * (k + 1)
                             + eps2 * (l * (l + 1) - m * m + 0.5 * (m + lam) ** 2))
                        table.add(e, 1, n=n, **{"lambda": lam}, n_zeta=nz, l=l, m=m)
    table.sort()
    return table


# ---------------------------------------------------------------- model operators

def _require_eckart(model) -> None:
    if not isinstance(model, EckartModel):
        raise UnsupportedModelError("this construction needs an Eckart cluster model")


class _ModelOperators:
    """Normal-coordinate operators of a model in the float ring (cached)."""

    _cache: dict = {}

    def __init__(self, model: EckartModel):
        self.model = model
        self.spec = model.spec.numeric()
        self.basis = model.basis.numeric()
        self.names = model.mode_names
        self.lam = [op.to_float() for op in residual_angular_momentum(
            model.spec, model.basis, "normal", ring_for(model.spec, model.basis))]
        self.mom = momentum_operators(self.spec, self.basis, "normal", FLOAT)
        geo = eval_geometry(self.spec, self.basis.origin)
        self.n_inv0 = geo.N_inv

    @classmethod
    def of(cls, model: EckartModel) -> "_ModelOperators":
        key = id(model)
        hit = cls._cache.get(key)
        if hit is None or hit.model is not model:
            hit = cls(model)
            cls._cache[key] = hit
        return hit


def model_operators(model: EckartModel) -> _ModelOperators:
    _require_eckart(model)
    return _ModelOperators.of(model)


def _kron(osc: sp.spmatrix, ang: np.ndarray) -> sp.csr_matrix:
    return sp.kron(osc, sp.csr_matrix(ang), format="csr")


def build_h0(model, n_max: int, l: int = 0) -> sp.csr_matrix:
    """Harmonic Hamiltonian ``sum_a sigma_a (n_a + 1/2)`` on oscillator x spin-l."""
    sigma = model.sigma if isinstance(model, EckartModel) else np.asarray(model, dtype=float)
    basis = OscillatorBasis(sigma, n_max)
    diag = basis.energies() if basis.n_modes else np.zeros(1)
    return sp.kron(sp.diags(diag), sp.identity(2 * l + 1), format="csr").astype(complex)


def build_h1(model, n_max: int, l: int = 0) -> sp.csr_matrix:
    """Second-order rotational coupling ``(1/2) sum_jk N0inv_jk (s+Lambda)_j (s+Lambda)_k``.

    ``N0inv`` is evaluated at equilibrium and ``Lambda`` is the residual
    angular momentum in normal coordinates; products are rendered as
    compressions of the exact operator products.
    """
    _require_eckart(model)
    ops = model_operators(model)
    ang = AngularSector(l)
    basis = OscillatorBasis(model.sigma, n_max, model.mode_names)
    n_inv = ops.n_inv0
    dim_a = ang.dim
    eye_o = sp.identity(basis.dim, dtype=complex, format="csr")
    eye_a = np.eye(dim_a)
    total = sp.csr_matrix((basis.dim * dim_a, basis.dim * dim_a), dtype=complex)
    lam_m = [render(op, basis) for op in ops.lam]
    for j in range(3):
        for k in range(3):
            w = 0.5 * n_inv[j, k]
            if abs(w) < 1e-300:
                continue
            total = total + w * (_kron(eye_o, ang.s[j] @ ang.s[k])
                                 + _kron(lam_m[k], ang.s[j]) + _kron(lam_m[j], ang.s[k])
                                 + _kron(render(ops.lam[j] * ops.lam[k], basis), eye_a))
    return total.tocsr()


def perturbative_spectrum(model, n_max: int, l_max: int) -> dict[int, np.ndarray]:
    """Ascending eigenvalues of ``h0 + h1`` for each ``l <= l_max``."""
    out = {}
    for l in range(l_max + 1):
        w, _ = diagonalize(build_h0(model, n_max, l) + build_h1(model, n_max, l))
        out[l] = np.sort(w)
    return out


# ---------------------------------------------------------------- full forms

@dataclass
class SectorOperator:
    """``constant + sum_k angular[k] (x) differential[k]`` on oscillator x spin-l."""

    l: int
    names: tuple
    terms: list = field(default_factory=list)
    constant: float = 0.0

    def add(self, angular: np.ndarray, op: DiffOperator) -> None:
        if not op.is_zero():
            self.terms.append((np.asarray(angular, dtype=complex), op))

    def matrix(self, basis: OscillatorBasis) -> sp.csr_matrix:
        dim_a = 2 * self.l + 1
        n = basis.dim * dim_a
        total = sp.csr_matrix((n, n), dtype=complex)
        rendered: dict = {}
        for ang, op in self.terms:
            key = id(op)
            if key not in rendered:
                rendered[key] = render(op, basis)
            total = total + _kron(rendered[key], ang)
        if self.constant:
            total = total + self.constant * sp.identity(n, dtype=complex, format="csr")
        return total.tocsr()


def _poly_truncate(op: DiffOperator, max_degree: int) -> DiffOperator:
    return DiffOperator(op.coords, op.ring,
                        {k: c for k, c in op.terms if sum(k[0]) <= max_degree})


def full_hamiltonian_operator(model, l: int, form: str = "hamW4", order: int = 2) -> SectorOperator:
    """A Hamiltonian form expanded through ``epsilon**order`` about equilibrium.

    ``hamW4`` is the Weyl-ordered Hamiltonian with the two gauge-induced
    potentials; ``redham`` carries the Jacobian-weighted kinetic term and is
    Hermitian only under the Jacobian measure; ``hamS3`` is ``redham`` with the
    body-frame angular momentum acting as ``-s`` on states.

    Raises:
        UnsupportedModelError: for non-Eckart models.
        UnsupportedOrderError: for ``order`` outside ``0..2``.
    """
    _require_eckart(model)
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}; expected one of {FORMS}")
    if order not in (0, 1, 2):
        raise UnsupportedOrderError(f"order {order} is not supported (0, 1 or 2)")
    ops = model_operators(model)
    spec, basis, names = ops.spec, ops.basis, ops.names
    ang = AngularSector(l)
    eye_a = np.eye(ang.dim)
    out = SectorOperator(l, names)
    n = spec.n_particles
    masses = spec.masses

    kinetic = DiffOperator.zero(names, FLOAT)
    for b in range(n):
        for j in range(3):
            kinetic = kinetic + (ops.mom[b][j] * ops.mom[b][j]).scale(0.5 / masses[b])
    rows = basis.mode_rows.reshape(basis.n_modes, -1)
    hq = rows @ numeric(model.hessian) @ rows.T
    potential = DiffOperator.zero(names, FLOAT)
    for a in range(basis.n_modes):
        for c in range(basis.n_modes):
            if abs(hq[a, c]) > 1e-14:
                qa = DiffOperator.coordinate(names, FLOAT, names[a])
                qc = DiffOperator.coordinate(names, FLOAT, names[c])
                potential = potential + (qa * qc).scale(0.5 * hq[a, c])
    out.add(eye_a, kinetic + potential)

    if form in ("redham", "hamS3") and order >= 1:
        # (1/J)[P, J] P with ln J expanded to the requested order.
        q0 = q_matrix(masses, spec.gamma, basis.origin)
        q0i = np.linalg.inv(q0)
        qa = [q_matrix(masses, spec.gamma, basis.mode_rows[a]) for a in range(basis.n_modes)]
        grad = []
        for c in range(basis.n_modes):
            const = np.trace(q0i @ qa[c])
            lin = [-np.trace(q0i @ qa[a] @ q0i @ qa[c]) if order >= 2 else 0.0
                   for a in range(basis.n_modes)]
            grad.append(polynomial_from_linear(names, FLOAT, complex(const), [complex(x) for x in lin]))
        corr = DiffOperator.zero(names, FLOAT)
        for b in range(n):
            for j in range(3):
                g = DiffOperator.zero(names, FLOAT)
                for c in range(basis.n_modes):
                    w = masses[b] * basis.mode_rows[c, b, j] / basis.mode_norms_sq[c]
                    if w:
                        g = g + grad[c].scale(w)
                corr = corr + (g * ops.mom[b][j]).scale(-0.5j / masses[b])
        out.add(eye_a, corr)

    if order < 2:
        return out

    n_inv = ops.n_inv0
    if form == "hamW4":
        pos_rows = basis.mode_rows
        dmat = []  # D[b][r][j] = eps_{rjk} R[b, k](Q)
        for b in range(n):
            per_r = []
            for r in range(3):
                per_j = []
                for j in range(3):
                    c0 = 0.0
                    lin = np.zeros(basis.n_modes)
                    for k in range(3):
                        e = _eps(r, j, k)
                        if e:
                            c0 += e * basis.origin[b, k]
                            lin += e * pos_rows[:, b, k]
                    per_j.append(polynomial_from_linear(names, FLOAT, complex(c0),
                                                        [complex(x) for x in lin]))
                per_r.append(per_j)
            dmat.append(per_r)
        weyl = DiffOperator.zero(names, FLOAT)
        pairs = [(b, r) for b in range(n) for r in range(3)]
        for (b, r) in pairs:
            for (g, s) in pairs:
                coef = DiffOperator.zero(names, FLOAT)
                for j in range(3):
                    for k in range(3):
                        if abs(n_inv[j, k]) > 0:
                            coef = coef + (dmat[b][r][j] * dmat[g][s][k]).scale(n_inv[j, k])
                if coef.is_zero():
                    continue
                pb, pg = ops.mom[b][r], ops.mom[g][s]
                weyl = weyl + (coef * pb * pg + (pb * coef * pg).scale(2.0) + pb * pg * coef)
        weyl = weyl.scale(0.125)
        out.add(eye_a, _poly_truncate(weyl, 4))
        for j in range(3):
            for k in range(3):
                if abs(n_inv[j, k]) > 0:
                    out.add(ang.s[j] * n_inv[j, k], ops.lam[k])
        v1, v2 = eval_quantum_potentials(spec, basis.origin)
        out.constant = v1 + v2
    else:
        for j in range(3):
            for k in range(3):
                if abs(n_inv[j, k]) > 0:
                    w = 0.5 * n_inv[j, k]
                    out.add(ang.s[j] * w, ops.lam[k])
                    out.add(ang.s[k] * w, ops.lam[j])
                    out.add(eye_a * w, ops.lam[j] * ops.lam[k])
    spin = sum(0.5 * n_inv[j, k] * ang.s[j] @ ang.s[k] for j in range(3) for k in range(3))
    out.add(spin, DiffOperator.identity(names, FLOAT))
    return out


def _eps(i: int, j: int, k: int) -> int:
    return int((i - j) * (j - k) * (k - i) / 2)


def assemble_full_hamiltonian(model, n_max: int, l: int, form: str = "hamW4",
                              order: int = 2) -> sp.csr_matrix:
    """Matrix of :func:`full_hamiltonian_operator` on the oscillator x spin-l basis."""
    op = full_hamiltonian_operator(model, l, form, order)
    basis = OscillatorBasis(model.sigma, n_max, model.mode_names)
    return op.matrix(basis)


# ---------------------------------------------------------------- perturbation theory

def group_levels(values, tol: float = GROUP_TOL) -> list[np.ndarray]:
    """Indices of equal values (within ``tol``), ascending.

    Raises:
        AmbiguousDegeneracyError: if two values differ by more than ``tol`` but
            less than ``1000 * tol``.
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    groups = [[order[0]]] if len(order) else []
    for prev, cur in zip(order[:-1], order[1:]):
        gap = values[cur] - values[prev]
        if gap <= tol:
            groups[-1].append(cur)
        elif gap < 1000 * tol:
            raise AmbiguousDegeneracyError(
                f"levels {values[prev]:.15g} and {values[cur]:.15g} differ by {gap:.3g}")
        else:
            groups.append([cur])
    return [np.array(sorted(g)) for g in groups]


def degenerate_perturbation(h0, h1, n_levels: int = 3, tol: float = GROUP_TOL):
    """First-order corrections for the lowest ``n_levels`` levels of a diagonal ``h0``.

    Returns a list of ``(E0, corrections)`` with the eigenvalues of ``P h1 P``
    on each degenerate subspace, and a :class:`SpectrumTable` of ``E0 + dE``
    rows with degeneracies.
    """
    d0 = _as_dense(h0)
    off = d0 - np.diag(np.diag(d0))
    if np.max(np.abs(off), initial=0.0) > 1e-12 * max(np.max(np.abs(d0)), 1.0):
        raise ValueError("h0 must be diagonal in the working basis")
    e0 = np.diag(d0).real
    groups = group_levels(e0, tol)[:n_levels]
    h1d = _as_dense(h1)
    results = []
    table = SpectrumTable()
    for idx in groups:
        block = h1d[np.ix_(idx, idx)]
        corr, _ = diagonalize(block)
        level = float(np.mean(e0[idx]))
        results.append((level, corr))
        for sub in group_levels(corr, tol):
            table.add(level + float(np.mean(corr[sub])), len(sub))
    table.sort()
    return results, table
