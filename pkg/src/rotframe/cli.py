"""Command line interface: validated JSON configs, named experiments, manifests.

Usage::

    rotframe run --config exp.json [--out DIR] [--seed N] [--verbose]
    rotframe validate --config exp.json

Exit status is 0 when every assertion of the experiment passes, 1 when one
fails, 2 for an invalid configuration and 3 when a numerical routine does not
converge. Every run writes the experiment output and a ``manifest.json``
recording the resolved inputs, tolerances and per-assertion results. Energies
are in units of hbar*omega and lengths in units of the bond length ``a``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import re
import sys
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import sympy

from . import geometry, gribov, spectra, systems
from .errors import ConfigError, ConvergenceError, RotframeError
from .gauge import (Configuration, GaugeSpec, completeness_residual, eckart_gauge, embed_coords,
                    eval_gauge, eval_geometry, extend_basis, is_exact, numeric, project_coords,
                    random_gauge_spec)
from .weylalg import CommutatorAudit

log = logging.getLogger("rotframe")

SCHEMA_VERSION = 1
EXPERIMENTS = ("gauge-validate", "commutator-audit", "spectrum3", "spectrum4",
               "gribov-count", "appendix-oracle")
PRESETS = ("triangle", "tetrahedron", "axis-gauge")
UNITS = {"energy": "hbar*omega", "length": "a"}
MAX_SEED = 2**64 - 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "spectrum": 1e-10,
    "perturbation": 1e-9,
    "metric": 1e-6,
    "jacobian": 1e-6,
    "quantum_potential": 1e-5,
    "scaling": 1e-8,
    "round_trip": 1e-10,
}

_NUMBER = {"oneOf": [{"type": "number"},
                     {"type": "string", "pattern": r"^\s*[-+]?\d+(\.\d+)?(\s*/\s*\d+)?\s*$"}]}
_EXACT = {"oneOf": [{"type": "number"},
                    {"type": "string", "pattern": r"^[0-9+\-*/(). sqrt]+$"}]}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3}

GAUGE_SPEC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["masses", "gamma", "norms_sq"],
    "properties": {
        "masses": {"type": "array", "items": _EXACT, "minItems": 1},
        "gamma": {"type": "array", "minItems": 3, "maxItems": 3,
                  "items": {"type": "array", "minItems": 1,
                            "items": {"type": "array", "items": _EXACT,
                                      "minItems": 3, "maxItems": 3}}},
        "norms_sq": {"type": "array", "items": _EXACT, "minItems": 3, "maxItems": 3},
        "translation_invariant": {"type": "boolean"},
    },
}

CONFIGURATION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["positions"],
    "properties": {
        "positions": {"type": "array", "minItems": 1,
                      "items": {"type": "array", "items": {"type": "number"},
                                "minItems": 3, "maxItems": 3}},
        "frame": {"enum": ["lab", "body"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "experiment"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(PRESETS)},
                "masses": {"type": "array", "items": _NUMBER, "minItems": 2},
                "equilibrium": {"type": "array", "minItems": 2, "items": _VECTOR},
                "gamma": {"type": "array", "minItems": 3, "maxItems": 3,
                          "items": {"type": "array", "minItems": 2, "items": _VECTOR}},
                "translation_invariant": {"type": "boolean"},
                "potential": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type"],
                    "properties": {
                        "type": {"const": "pairwise-harmonic"},
                        "omega": {"type": "number", "exclusiveMinimum": 0},
                        "a": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "experiment": {"oneOf": [
            {"enum": list(EXPERIMENTS)},
            {"type": "array", "items": {"enum": list(EXPERIMENTS)}, "minItems": 1, "maxItems": 1},
        ]},
        "numeric": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                                      _NUMBER["oneOf"][1]]},
                "n_max": {"type": "integer", "minimum": 0, "maximum": 12},
                "l_max": {"type": "integer", "minimum": 0, "maximum": 4},
                "grid": {"type": "integer", "minimum": 4, "maximum": 64},
                "seeds": {"type": "integer", "minimum": 0, "maximum": MAX_SEED},
                "samples": {"type": "integer", "minimum": 1, "maximum": 10000},
                "tolerances": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                                   for k in DEFAULT_TOLERANCES},
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "format": {"enum": ["csv", "json"]},
                "path": {"type": "string", "minLength": 1},
            },
        },
    },
}


# ---------------------------------------------------------------- serialization

def _parse_exact(value):
    if isinstance(value, str):
        if not re.fullmatch(r"[0-9+\-*/(). sqrt]+", value):
            raise ConfigError(f"not an exact number: {value!r}")
        return sympy.nsimplify(sympy.sympify(value, rational=True))
    if isinstance(value, int):
        return sympy.Integer(value)
    return value


def _render_exact(value):
    if isinstance(value, sympy.Basic):
        return int(value) if value.is_Integer else str(value)
    return float(value)


def spec_to_json(spec: GaugeSpec) -> dict:
    """Plain-JSON form of a gauge; exact entries become strings such as ``"sqrt(3)/2"``."""
    def conv(arr):
        return np.vectorize(_render_exact, otypes=[object])(arr).tolist()
    return {"masses": conv(spec.masses), "gamma": conv(spec.gamma),
            "norms_sq": conv(spec.norms_sq),
            "translation_invariant": bool(spec.translation_invariant)}


def spec_from_json(data: dict) -> GaugeSpec:
    """Inverse of :func:`spec_to_json`; validates against :data:`GAUGE_SPEC_SCHEMA`."""
    _validate(data, GAUGE_SPEC_SCHEMA)
    exact = any(isinstance(v, (str, int)) for v in _flatten(data["gamma"]))

    def conv(x):
        arr = np.vectorize(_parse_exact, otypes=[object])(np.array(x, dtype=object))
        return arr if exact else arr.astype(float)
    return GaugeSpec(conv(data["masses"]), conv(data["gamma"]), conv(data["norms_sq"]),
                     bool(data.get("translation_invariant", False)))


def configuration_to_json(cfg: Configuration) -> dict:
    return {"positions": [[float(x) for x in row] for row in cfg.positions], "frame": cfg.frame}


def configuration_from_json(data: dict) -> Configuration:
    _validate(data, CONFIGURATION_SCHEMA)
    return Configuration(np.array(data["positions"], dtype=float), data.get("frame", "body"))


def _flatten(x):
    if isinstance(x, list):
        for y in x:
            yield from _flatten(y)
    else:
        yield x


def _validate(data, schema) -> None:
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    """A validated experiment description with defaults filled in."""

    experiment: str
    system: dict
    numeric: dict
    output: dict
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        _validate(data, CONFIG_SCHEMA)
        exp = data["experiment"]
        if isinstance(exp, list):
            exp = exp[0]
        system = dict(data.get("system", {}))
        _check_system(system)
        num = dict(data.get("numeric", {}))
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(num.get("tolerances", {}))
        num["tolerances"] = tol
        out = dict(data.get("output", {}))
        out.setdefault("format", "csv")
        out.setdefault("path", f"{exp}.{out['format']}")
        if Path(out["path"]).is_absolute() or ".." in Path(out["path"]).parts:
            raise ConfigError("output.path must be relative to the output directory")
        return cls(exp, system, num, out, data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        return cls.from_dict(data)

    def epsilon(self) -> sympy.Rational:
        if "epsilon" in self.numeric:
            return systems.as_rational(self.numeric["epsilon"])
        pot = self.system.get("potential")
        if pot is None:
            return sympy.Rational(1, 20)
        # epsilon^2 = hbar / (m omega a^2) with hbar = 1 and unit masses
        masses = [float(systems.as_rational(m)) for m in self.system.get("masses", [1])]
        m = sum(masses) / len(masses)
        return systems.as_rational(1.0 / (pot.get("a", 1.0) * math.sqrt(m * pot.get("omega", 1.0))))


def _check_system(system: dict) -> None:
    if "preset" in system:
        extra = set(system) - {"preset", "potential"}
        if extra:
            raise ConfigError(f"system: preset cannot be combined with {sorted(extra)}")
        return
    if not system:
        return
    if "masses" not in system:
        raise ConfigError("system: masses are required without a preset")
    n = len(system["masses"])
    if ("equilibrium" in system) == ("gamma" in system):
        raise ConfigError("system: give exactly one of equilibrium or gamma")
    if "equilibrium" in system and len(system["equilibrium"]) != n:
        raise ConfigError("system: equilibrium needs one position per mass")
    if "gamma" in system and any(len(row) != n for row in system["gamma"]):
        raise ConfigError("system: every gamma row needs one vector per mass")
    if "equilibrium" in system and "translation_invariant" in system:
        raise ConfigError("system: an Eckart gauge is always translation invariant")


def _exact_array(values):
    return np.vectorize(systems.as_rational, otypes=[object])(np.array(values, dtype=object))


@dataclass
class System:
    """Gauge, extended basis and (for presets) the Eckart model of a config."""

    name: str
    spec: GaugeSpec
    basis: object = None
    model: object = None
    predicates: list = field(default_factory=list)


def build_system(cfg: ExperimentConfig) -> System:
    """Construct the system described by ``cfg.system``.

    Raises:
        ConfigError: if the system is missing or inconsistent.
    """
    s = cfg.system
    if not s:
        raise ConfigError(f"experiment {cfg.experiment} needs a system")
    try:
        if s.get("preset") in ("triangle", "tetrahedron"):
            model = getattr(systems, s["preset"])(cfg.epsilon())
            return System(s["preset"], model.spec, model.basis, model)
        if s.get("preset") == "axis-gauge":
            spec = systems.axis_gauge()
            return System("axis-gauge", spec, extend_basis(spec), None,
                          systems.axis_gauge_predicates())
        masses = _exact_array(s["masses"])
        if "equilibrium" in s:
            z = _exact_array(s["equilibrium"])
            spec = eckart_gauge(masses, z)
            return System("eckart", spec, extend_basis(spec, origin=z))
        spec = GaugeSpec.from_rows(masses, _exact_array(s["gamma"]),
                                   bool(s.get("translation_invariant", False)))
        return System("custom", spec, extend_basis(spec))
    except RotframeError as exc:
        if isinstance(exc, ValueError):
            raise ConfigError(f"system: {exc}") from None
        raise


# ---------------------------------------------------------------- results

@dataclass
class Result:
    """Rows for the output file plus named assertions."""

    columns: tuple
    rows: list
    assertions: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def check(self, name: str, passed: bool, value=None, tolerance=None) -> None:
        self.assertions.append({"name": name, "passed": bool(passed),
                                "value": _jsonable(value), "tolerance": tolerance})

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps({"columns": list(self.columns), "rows": self.rows,
                               "summary": self.summary}, indent=1, sort_keys=True) + "\n"
        lines = [",".join(self.columns)]
        for r in self.rows:
            lines.append(",".join(_csv_cell(r.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    text = str(v)
    return f'"{text}"' if any(c in text for c in ',"\n') else text


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _threads() -> int:
    raw = os.environ.get("ROTFRAME_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ROTFRAME_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"ROTFRAME_THREADS must be a positive integer, got {raw!r}")
    return n


def _map(fn, items, threads: int) -> list:
    """Ordered map, threaded when ``threads > 1``."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- experiments

def _gauge_validate(cfg, rng, threads) -> Result:
    system = build_system(cfg)
    spec, basis = system.spec, system.basis
    tol = cfg.numeric["tolerances"]["round_trip"]
    res = Result(("sample", "gauge_residual", "round_trip", "det_Q", "jacobian"), [])
    num = spec.numeric()
    norms = numeric(spec.norms_sq)
    res.summary = {"system": system.name, "n_particles": spec.n_particles,
                   "norms_sq": [float(x) for x in norms],
                   "translation_invariant": bool(spec.translation_invariant),
                   "n_modes": basis.n_modes}
    res.check("completeness", completeness_residual(basis) <= tol,
              completeness_residual(basis), tol)
    worst_gauge = worst_trip = 0.0
    for k in range(cfg.numeric.get("samples", 20)):
        coords = rng.normal(size=basis.n_modes)
        r = embed_coords(basis, coords)
        scale = max(1.0, float(np.max(np.abs(r))))
        g = float(np.max(np.abs(eval_gauge(num, r)))) / scale
        back = project_coords(basis, r)
        trip = float(np.max(np.abs(back - coords)))
        geo = eval_geometry(num, r)
        worst_gauge, worst_trip = max(worst_gauge, g), max(worst_trip, trip)
        res.rows.append({"sample": k, "gauge_residual": g, "round_trip": trip,
                         "det_Q": float(np.linalg.det(geo.Q)), "jacobian": float(geo.jacobian)})
    res.check("gauge_satisfied", worst_gauge <= tol, worst_gauge, tol)
    res.check("round_trip", worst_trip <= tol, worst_trip, tol)
    if basis.origin is not None and np.any(numeric(basis.origin)):
        q0 = eval_geometry(num, numeric(basis.origin)).Q
        dev = float(np.max(np.abs(q0 - np.diag(norms))) / np.max(norms))
        res.check("eckart_Q_at_equilibrium", dev <= tol, dev, tol)
    return res


def _commutator_audit(cfg, rng, threads) -> Result:
    if cfg.system:
        system = build_system(cfg)
        specs = [(system.name, system.spec)]
    else:
        count = cfg.numeric.get("samples", 52)
        specs = [(f"random-{k}", random_gauge_spec(rng, 2 + k % 4, bool((k // 4) % 2)))
                 for k in range(count)]
    res = Result(("spec", "n_particles", "translation_invariant", "exact_arithmetic",
                  "rp", "pp", "gauge_momentum", "total_momentum", "anomaly"), [])
    for name, spec in specs:
        audit = CommutatorAudit(spec)
        row = {"spec": name, "n_particles": spec.n_particles,
               "translation_invariant": bool(spec.translation_invariant),
               "exact_arithmetic": bool(spec.exact)}
        row.update(audit.to_dict())
        res.rows.append(row)
        res.check(f"{name}: canonical algebra", audit.exact, audit.to_dict(), 0)
    res.summary = {"specs": len(specs)}
    return res


def _require_model(cfg, preset: str):
    if cfg.system.get("preset") != preset:
        raise ConfigError(f"experiment {cfg.experiment} requires system.preset = {preset!r}")
    return build_system(cfg).model


def _spectrum3(cfg, rng, threads) -> Result:
    model = _require_model(cfg, "triangle")
    n_max, l_max = cfg.numeric.get("n_max", 8), cfg.numeric.get("l_max", 2)
    tol = cfg.numeric["tolerances"]["spectrum"]
    eps = float(model.epsilon)
    computed = spectra.perturbative_spectrum(model, n_max, l_max)
    reference = spectra.closed_form_spectrum_n3(n_max, l_max, eps)
    res = Result(spectra.COLUMNS + ("E_closed_form",), [])
    worst = 0.0
    count_ok = True
    for l in range(l_max + 1):
        ref_rows = [r for r in reference.rows if r["l"] == l]
        got = computed[l]
        if len(ref_rows) != len(got):
            count_ok = False
            continue
        # labels follow the closed form; degenerate rows share an energy
        for e, ref in zip(got, ref_rows):
            row = dict(ref)
            row["E"], row["E_closed_form"] = float(e), ref["E"]
            res.rows.append(row)
            worst = max(worst, abs(e - ref["E"]) / abs(ref["E"]))
    res.check("level_count", count_ok, None, None)
    res.check("closed_form", count_ok and worst <= tol, worst, tol)
    ground = math.sqrt(3.0) / 2 + math.sqrt(1.5)
    e0 = float(computed[0][0])
    res.check("ground_level", abs(e0 - ground) / ground <= tol, abs(e0 - ground) / ground, tol)
    res.summary = {"epsilon": str(model.epsilon), "n_max": n_max, "l_max": l_max,
                   "max_relative_error": worst}
    return res


def _spectrum4(cfg, rng, threads) -> Result:
    model = _require_model(cfg, "tetrahedron")
    n_max, l_max = cfg.numeric.get("n_max", 2), cfg.numeric.get("l_max", 1)
    tol = cfg.numeric["tolerances"]["perturbation"]
    res = Result(("l", "level", "E0", "dE", "E", "degeneracy"), [])
    worst = 0.0
    for l in range(l_max + 1):
        runs = []
        for n in (max(n_max, 1), max(n_max, 1) + 1):
            h0, h1 = spectra.build_h0(model, n, l), spectra.build_h1(model, n, l)
            spectra.check_hermitian(h1)
            runs.append(spectra.degenerate_perturbation(h0, h1, 3)[0])
        for k, ((e0, corr), (_, corr2)) in enumerate(zip(*runs)):
            worst = max(worst, float(np.max(np.abs(corr - corr2))) if len(corr) == len(corr2)
                        else math.inf)
            for sub in spectra.group_levels(corr):
                de = float(np.mean(corr[sub]))
                res.rows.append({"l": l, "level": k, "E0": e0, "dE": de, "E": e0 + de,
                                 "degeneracy": len(sub)})
    res.check("truncation_independent", worst <= tol, worst, tol)
    res.summary = {"epsilon": str(model.epsilon), "n_max": n_max, "l_max": l_max}
    return res


def _gribov_count(cfg, rng, threads) -> Result:
    system = build_system(cfg)
    spec = system.spec
    grid = cfg.numeric.get("grid", gribov.GRID)
    samples = gribov.random_lab_configurations(spec.n_particles, cfg.numeric.get("samples", 100), rng)
    preds = system.predicates
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", gribov.SearchQualityWarning)
        reports = _map(lambda r: gribov.find_copies(spec, r, preds, grid=grid), samples, threads)
    res = Result(("sample", "total", "jac_positive", "fully_fixed", "converged_fraction"), [])
    for k, rep in enumerate(reports):
        res.rows.append({"sample": k, "total": rep.total_count,
                         "jac_positive": rep.count_jac_positive,
                         "fully_fixed": rep.count_fully_fixed if preds else None,
                         "converged_fraction": rep.converged_fraction})
    totals = sorted({r["total"] for r in res.rows})
    positive = sorted({r["jac_positive"] for r in res.rows})
    res.summary = {"system": system.name, "grid": grid, "totals": totals,
                   "jac_positive": positive,
                   "multiplicity": positive[0] if len(positive) == 1 else None}
    res.check("search_quality", not caught, len(caught), gribov.FAILURE_FRACTION)
    if system.name == "axis-gauge":
        res.check("total_count_4", totals == [4], totals, None)
        res.check("jac_positive_2", positive == [2], positive, None)
        fixed = sorted({r["fully_fixed"] for r in res.rows})
        res.check("fully_fixed_1", fixed == [1], fixed, None)
    return res


def _appendix_oracle(cfg, rng, threads) -> Result:
    system = build_system(cfg)
    tol = cfg.numeric["tolerances"]
    spread = 0.1 if system.model is not None else 0.5
    charts = ("exponential", "euler-zyz")
    points = [geometry.random_point(system.basis, rng, charts[k % 2], spread)
              for k in range(cfg.numeric.get("samples", 20))]
    comps = _map(geometry.compare_with_oracles, points, threads)
    res = Result(("point", "chart", "metric", "jacobian", "quantum_potential", "scaling"), [])
    for k, (p, c) in enumerate(zip(points, comps)):
        row = {"point": k, "chart": p.chart}
        row.update(c.to_dict())
        res.rows.append(row)
    for key in ("metric", "jacobian", "quantum_potential", "scaling"):
        worst = max(r[key] for r in res.rows)
        res.check(key, worst <= tol[key], worst, tol[key])
    res.summary = {"system": system.name, "points": len(points)}
    return res


_RUNNERS = {
    "gauge-validate": _gauge_validate,
    "commutator-audit": _commutator_audit,
    "spectrum3": _spectrum3,
    "spectrum4": _spectrum4,
    "gribov-count": _gribov_count,
    "appendix-oracle": _appendix_oracle,
}


# ---------------------------------------------------------------- run

def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: ExperimentConfig, out_dir=".", seed: int | None = None) -> int:
    """Execute one experiment and write its output and manifest; returns the exit code."""
    if seed is None:
        seed = cfg.numeric.get("seeds", 0)
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    threads = _threads()
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    log.info("running %s (seed %d, %d thread(s))", cfg.experiment, seed, threads)
    result = _RUNNERS[cfg.experiment](cfg, rng, threads)
    text = result.render(cfg.output["format"])
    target = out_dir / cfg.output["path"]
    _write_atomic(target, text)
    manifest = {
        "schema": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "seed": seed,
        "threads": threads,
        "units": UNITS,
        "tolerances": cfg.numeric["tolerances"],
        "assertions": result.assertions,
        "summary": result.summary,
        "outputs": [{"path": cfg.output["path"], "format": cfg.output["format"],
                     "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest()}],
        "status": "pass" if result.passed else "fail",
    }
    _write_atomic(out_dir / "manifest.json",
                  json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    for a in result.assertions:
        log.info("%s %s (value %s, tolerance %s)", "PASS" if a["passed"] else "FAIL",
                 a["name"], a["value"], a["tolerance"])
    return EXIT_OK if result.passed else EXIT_FAIL


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotframe", description="Rotating-frame quantization experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment of a config file")
    r.add_argument("--config", required=True, help="JSON experiment config")
    r.add_argument("--out", default=".", help="output directory (default: current)")
    r.add_argument("--seed", type=_seed, default=None, help="RNG seed (unsigned 64-bit)")
    r.add_argument("--verbose", action="store_true", help="log progress to stderr")
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("--config", required=True, help="JSON experiment config")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.command == "validate":
            if cfg.system:
                build_system(cfg)
            print(f"{args.config}: valid ({cfg.experiment})")
            return EXIT_OK
        return run(cfg, args.out, args.seed)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except RotframeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
