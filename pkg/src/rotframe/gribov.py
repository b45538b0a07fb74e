"""Gauge-equivalent frames (Gribov copies) of a laboratory configuration.

For positions ``r`` the frames are the rotations ``U`` with
``S_a(U r) = 0``. Roots are found by Newton iteration on SO(3) started from an
Euler-angle grid, merged by geodesic distance and classified by the sign of
``det Q`` and by caller-supplied sign predicates.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import HorizonError
from .gauge import Configuration, GaugeSpec, eval_geometry, q_matrix
from .rotation import hat, random_rotation

GRID = 24
MERGE_RADIUS = 1e-4
MAX_ITER = 50
MAX_HALVINGS = 12
CONVERGENCE_RTOL = 1e-12
ROOT_ATOL = 1e-9
HORIZON_DET = 1e-6
FAILURE_FRACTION = 0.05


class SearchQualityWarning(UserWarning):
    """Too many Newton seeds failed to converge."""


@dataclass(frozen=True)
class Root:
    rotation: np.ndarray
    det_sign: int
    jacobian: float
    flags: tuple

    def to_dict(self) -> dict:
        return {"rotation": [float(x) for x in self.rotation.reshape(-1)],
                "det_sign": self.det_sign, "jacobian": self.jacobian,
                "flags": list(self.flags)}


@dataclass
class CopyReport:
    roots: list
    converged_fraction: float
    min_abs_det: float

    @property
    def total_count(self) -> int:
        return len(self.roots)

    @property
    def count_jac_positive(self) -> int:
        return sum(r.det_sign > 0 for r in self.roots)

    @property
    def count_fully_fixed(self) -> int:
        return sum(r.det_sign > 0 and all(r.flags) for r in self.roots)

    def to_json(self) -> str:
        return json.dumps({
            "total_count": self.total_count,
            "count_jac_positive": self.count_jac_positive,
            "count_fully_fixed": self.count_fully_fixed,
            "converged_fraction": self.converged_fraction,
            "roots": [r.to_dict() for r in self.roots],
        }, indent=1)


def _positions(cfg) -> np.ndarray:
    return cfg.positions if isinstance(cfg, Configuration) else np.asarray(cfg, dtype=float)


def _expm_batch(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula for a batch of rotation vectors, shape ``(K, 3, 3)``."""
    phi = np.linalg.norm(w, axis=1)
    small = phi < 1e-8
    safe = np.where(small, 1.0, phi)
    a = np.where(small, 1.0 - phi**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - phi**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    k = np.zeros((len(w), 3, 3))
    k[:, 0, 1], k[:, 0, 2], k[:, 1, 2] = -w[:, 2], w[:, 1], -w[:, 0]
    k[:, 1, 0], k[:, 2, 0], k[:, 2, 1] = w[:, 2], -w[:, 1], w[:, 0]
    return np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)


def euler_grid(cells: int = GRID) -> np.ndarray:
    """Rotations at the cell centres of a ``cells^3`` ZYZ Euler-angle grid."""
    ang = -np.pi + 2 * np.pi * (np.arange(cells) + 0.5) / cells
    beta = np.pi * (np.arange(cells) + 0.5) / cells
    a, b, g = np.meshgrid(ang, beta, ang, indexing="ij")
    a, b, g = a.reshape(-1), b.reshape(-1), g.reshape(-1)

    def rz(t):
        c, s = np.cos(t), np.sin(t)
        m = np.zeros((len(t), 3, 3))
        m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1], m[:, 2, 2] = c, -s, s, c, 1.0
        return m

    def ry(t):
        c, s = np.cos(t), np.sin(t)
        m = np.zeros((len(t), 3, 3))
        m[:, 0, 0], m[:, 0, 2], m[:, 2, 0], m[:, 2, 2], m[:, 1, 1] = c, s, -s, c, 1.0
        return m

    return rz(a) @ ry(b) @ rz(g)


def geodesic_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Rotation angle of ``u^T v``."""
    c = 0.5 * (np.trace(u.T @ v) - 1.0)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _newton(spec: GaugeSpec, r: np.ndarray, u: np.ndarray, tol: float, max_iter: int):
    """Damped Newton iteration ``U <- exp(hat(w)) U`` with ``Q w = -S``."""
    m, g = spec.masses, spec.gamma

    weights = m[None, :, None] * g

    def residual(uu):
        rr = np.matmul(uu, r.T).transpose(0, 2, 1)
        return np.tensordot(rr, weights, axes=([1, 2], [1, 2])), rr

    s, rr = residual(u)
    norm = np.linalg.norm(s, axis=1)
    done = norm <= tol
    failed = np.zeros(len(u), dtype=bool)
    singular = np.zeros(len(u), dtype=bool)
    for _ in range(max_iter):
        act = ~(done | failed)
        if not np.any(act):
            break
        idx = np.flatnonzero(act)
        q = q_matrix(m, g, rr[idx])
        det = np.linalg.det(q)
        bad = np.abs(det) < 1e-14 * np.linalg.norm(q, axis=(1, 2)) ** 3
        failed[idx[bad]] = True
        singular[idx[bad]] = True
        idx, q = idx[~bad], q[~bad]
        if not len(idx):
            continue
        w = -np.linalg.solve(q, s[idx][:, :, None])[:, :, 0]
        step = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        new_u = u[idx].copy()
        new_s = s[idx].copy()
        new_rr = rr[idx].copy()
        for _ in range(MAX_HALVINGS):
            pend = ~accepted
            if not np.any(pend):
                break
            trial = _expm_batch(w[pend] * step[pend, None]) @ u[idx[pend]]
            ts, trr = residual(trial)
            ok = np.linalg.norm(ts, axis=1) < norm[idx[pend]]
            sel = np.flatnonzero(pend)[ok]
            new_u[sel], new_s[sel], new_rr[sel] = trial[ok], ts[ok], trr[ok]
            accepted[sel] = True
            step[pend] *= 0.5
        failed[idx[~accepted]] = True
        u[idx], s[idx], rr[idx] = new_u, new_s, new_rr
        norm[idx] = np.linalg.norm(s[idx], axis=1)
        done[idx] = norm[idx] <= tol
    return u, done, singular


def _canonical_key(u: np.ndarray) -> tuple:
    return tuple(np.round(u.reshape(-1), 6))


def _merge(found: np.ndarray, radius: float) -> list[np.ndarray]:
    """Greedy clustering by geodesic distance in a deterministic order."""
    if not len(found):
        return []
    flat = np.round(found.reshape(len(found), -1), 6)
    order = np.lexsort(flat.T[::-1])
    rest = found[order]
    unique = []
    cos_r = np.cos(radius)
    while len(rest):
        head = rest[0]
        c = 0.5 * (np.einsum("ij,kij->k", head, rest) - 1.0)
        near = c >= cos_r
        near[0] = True
        unique.append(head)
        rest = rest[~near]
    return unique


def find_copies(spec: GaugeSpec, cfg_lab, predicates: Sequence[Callable[[np.ndarray], float]] = (),
                grid: int = GRID, merge_radius: float = MERGE_RADIUS,
                max_iter: int = MAX_ITER) -> CopyReport:
    """All rotations ``U`` with ``S(U r) = 0`` for laboratory positions ``r``.

    ``predicates`` are functions of the body-frame positions ``R = U r``; a
    root passes one when its value is positive.

    Raises:
        HorizonError: if some root has ``|det Q| < 1e-6``, or if no seed
            converges and the iterations ran into a singular ``Q``.

    Warns:
        SearchQualityWarning: if more than 5% of the seeds fail to converge.
    """
    s = spec.numeric()
    r = _positions(cfg_lab)
    scale = float(np.sqrt(np.sum(s.norms_sq)) * np.sqrt(np.einsum("b,bi,bi->", s.masses, r, r)))
    tol = CONVERGENCE_RTOL * max(scale, 1e-300)
    seeds = euler_grid(grid)
    u, ok, singular = _newton(s, r, seeds.copy(), tol, max_iter)
    fraction = float(np.mean(ok))
    if not np.any(ok) and np.any(singular):
        raise HorizonError("no seed converged and det Q vanished along the search")
    if 1.0 - fraction > FAILURE_FRACTION:
        warnings.warn(f"{100 * (1 - fraction):.1f}% of Newton seeds did not converge",
                      SearchQualityWarning, stacklevel=2)
    unique = _merge(u[ok], merge_radius)
    roots = []
    min_det = np.inf
    for v in unique:
        body = r @ v.T
        geo = eval_geometry(s, body)
        det = float(np.linalg.det(geo.Q))
        min_det = min(min_det, abs(det))
        flags = tuple(bool(p(body) > 0) for p in predicates)
        jac = abs(det) / float(np.sqrt(np.prod(s.norms_sq)))
        roots.append(Root(v, int(np.sign(det)), jac, flags))
    if roots and min_det < HORIZON_DET:
        raise HorizonError(f"configuration lies on a horizon: min |det Q| = {min_det:.3g}")
    roots.sort(key=lambda rt: (-rt.det_sign, tuple(not f for f in rt.flags), _canonical_key(rt.rotation)))
    return CopyReport(roots, fraction, float(min_det))


@dataclass
class IdentityReport:
    """Per-sample copy counts and whether they are constant."""

    total: list = field(default_factory=list)
    jac_positive: list = field(default_factory=list)
    fully_fixed: list = field(default_factory=list)

    @property
    def multiplicity(self) -> int | None:
        """Common number of ``J > 0`` copies, or ``None`` if it varies."""
        vals = set(self.jac_positive)
        return vals.pop() if len(vals) == 1 else None

    @property
    def constant(self) -> bool:
        return self.multiplicity is not None

    @property
    def resolved(self) -> bool:
        """Every sample has exactly one fully gauge-fixed copy."""
        return bool(self.fully_fixed) and all(c == 1 for c in self.fully_fixed)


def verify_identity_resolution(spec: GaugeSpec, samples, predicates=(), **search) -> IdentityReport:
    """Count copies for each laboratory configuration in ``samples``.

    With predicates, ``resolved`` reports whether each sample has exactly one
    fully fixed copy; without them ``multiplicity`` gives the constant number
    of ``J > 0`` copies (``None`` when it is not constant).
    """
    report = IdentityReport()
    for cfg in samples:
        rep = find_copies(spec, cfg, predicates, **search)
        report.total.append(rep.total_count)
        report.jac_positive.append(rep.count_jac_positive)
        report.fully_fixed.append(rep.count_fully_fixed)
    return report


def random_lab_configurations(n_particles: int, count: int, rng: np.random.Generator,
                              spread: float = 1.0) -> list[np.ndarray]:
    """Generic laboratory configurations (Gaussian positions, random orientation)."""
    out = []
    for _ in range(count):
        r = rng.normal(scale=spread, size=(n_particles, 3))
        out.append(r @ random_rotation(rng).T)
    return out


__all__ = ["Root", "CopyReport", "IdentityReport", "SearchQualityWarning", "find_copies",
           "verify_identity_resolution", "random_lab_configurations", "euler_grid",
           "geodesic_distance", "hat"]
