"""Experiment configuration: TOML text in, fully resolved nested dict out.

Every section and key is checked against a schema; unknown names are
rejected, defaults are filled in, and the resolved dict is what gets echoed
into output files (and hashed for provenance).
"""

import copy
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import tomli

from .errors import ParseError, ValidationError
from .fields import ScalarField
from .geometry import DEFAULT_H_MIN
from .oscillator import FIG1_P_VALUES

_REQUIRED = object()

# section -> key -> default (``_REQUIRED`` for mandatory keys, None for optional)
SCHEMA = {
    "system": {
        "kind": _REQUIRED, "n": 1, "shift": None, "offset": None, "strength": None, "value": None,
        "terms": None, "fd_step": 0.0, "gamma": None, "h_min": DEFAULT_H_MIN,
    },
    "dynamics": {
        "mu": None, "horizon": 1.0, "rel_tol": 1e-10, "abs_tol": 1e-14, "max_step": None,
        "sample_interval": None, "max_steps": 20_000_000,
    },
    "initial": {"x": None, "v": None, "E": 1.0, "l": 0.25, "radial_sign": 1},
    "oracle": {"periods": 3.0},
    "sweep": {
        "mu": [0.1, 0.05, 0.02, 0.01, 0.005, 0.002], "E": 1.0, "l": 0.25, "x0": [1.0, 0.0],
        "horizon": math.pi, "rel_tol": 1e-10, "abs_tol": 1e-14,
    },
    "spectrum": {
        "hbar": 0.1, "L": 3.0, "N": 192, "k": 6, "gauge": "symmetric", "sigma": 0.0,
        "wall_check": "report", "levels": 3,
    },
    "fig1": {
        "p_values": list(FIG1_P_VALUES), "E": 1.0, "l": 0.25, "x0": [1.0, 0.0], "periods": 3.0,
        "powerlaw_horizon": 50.0, "collapse_horizon": 20.0, "samples": 400, "rel_tol": 1e-10,
        "abs_tol": 1e-15,
    },
    "output": {"dir": "out"},
}

FIELD_KINDS = ("harmonic", "shifted-harmonic", "polynomial", "pendulum-offset", "constant")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration; ``data`` is a plain nested dict."""

    data: dict

    def section(self, name):
        return self.data.get(name)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def canonical_json(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def scalar_field(self):
        return build_field(self.data["system"])


def _line_of(text, section, key=None):
    """Best-effort 1-based line number of a section header or key."""
    lines = text.splitlines()
    in_section = section is None
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("["):
            name = s.strip("[] \t")
            in_section = name == section
            if key is None and in_section:
                return i
            continue
        if key is not None and in_section and s.split("=", 1)[0].strip() == key:
            return i
    return None


def _number(field, val, positive=False, integer=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(field, f"expected a number, got {val!r}")
    if integer and not float(val).is_integer():
        raise ValidationError(field, f"expected an integer, got {val!r}")
    if not math.isfinite(val):
        raise ValidationError(field, "must be finite")
    if positive and not val > 0:
        raise ValidationError(field, f"must be positive, got {val!r}")
    return int(val) if integer else float(val)


def _vector(field, val, length=None):
    if not isinstance(val, list) or not val:
        raise ValidationError(field, f"expected a nonempty list, got {val!r}")
    out = [_number(f"{field}[{i}]", x) for i, x in enumerate(val)]
    if length is not None and len(out) != length:
        raise ValidationError(field, f"expected {length} entries, got {len(out)}")
    return out


def build_field(sys_cfg):
    """ScalarField from a resolved [system] table."""
    kind, n = sys_cfg["kind"], sys_cfg["n"]
    if kind == "harmonic":
        return ScalarField.harmonic(n)
    if kind == "shifted-harmonic":
        return ScalarField.shifted_harmonic(sys_cfg["shift"], n)
    if kind == "pendulum-offset":
        return ScalarField.pendulum_offset(sys_cfg["offset"], sys_cfg["strength"], n)
    if kind == "constant":
        return ScalarField.constant(sys_cfg["value"], n)
    terms = [(tuple(e), c) for e, c in sys_cfg["terms"]]
    return ScalarField.polynomial(terms, n=n, fd_step=sys_cfg["fd_step"])


def _validate_system(s):
    kind = s["kind"]
    if kind not in FIELD_KINDS:
        raise ValidationError("system.kind", f"must be one of {', '.join(FIELD_KINDS)}, got {kind!r}")
    s["n"] = _number("system.n", s["n"], positive=True, integer=True)
    dim = 2 * s["n"]
    s["fd_step"] = _number("system.fd_step", s["fd_step"])
    s["h_min"] = _number("system.h_min", s["h_min"])
    needs = {"shifted-harmonic": ("shift",), "pendulum-offset": ("offset",), "constant": ("value",),
             "polynomial": ("terms",)}.get(kind, ())
    for key in needs:
        if s[key] is None:
            raise ValidationError(f"system.{key}", f"required for kind {kind!r}")
    if kind == "shifted-harmonic":
        s["shift"] = _number("system.shift", s["shift"], positive=True)
    if kind == "pendulum-offset":
        s["offset"] = _number("system.offset", s["offset"], positive=True)
        s["strength"] = 1.0 if s["strength"] is None else _number("system.strength", s["strength"])
    if kind == "constant":
        s["value"] = _number("system.value", s["value"], positive=True)
    if kind == "polynomial":
        terms = s["terms"]
        if not isinstance(terms, list) or not terms:
            raise ValidationError("system.terms", "expected a list of [exponents, coefficient] pairs")
        clean = []
        for i, term in enumerate(terms):
            if not (isinstance(term, list) and len(term) == 2 and isinstance(term[0], list)):
                raise ValidationError(f"system.terms[{i}]", "expected [[e_1, ..., e_2n], coefficient]")
            exps = [_number(f"system.terms[{i}]", e, integer=True) for e in term[0]]
            if len(exps) != dim or min(exps) < 0:
                raise ValidationError(f"system.terms[{i}]", f"need {dim} nonnegative integer exponents")
            clean.append([exps, _number(f"system.terms[{i}]", term[1])])
        s["terms"] = clean
    if s["gamma"] is not None:
        g = s["gamma"]
        if not isinstance(g, list) or len(g) != dim:
            raise ValidationError("system.gamma", f"expected a {dim}x{dim} matrix")
        s["gamma"] = [_vector(f"system.gamma[{i}]", row, dim) for i, row in enumerate(g)]
        gm = np.array(s["gamma"])
        if not np.allclose(gm, gm.T) or abs(np.linalg.det(gm) - 1) > 1e-12 or np.any(np.linalg.eigvalsh(gm) <= 0):
            raise ValidationError("system.gamma", "must be symmetric positive definite with unit determinant")
    # drop keys that do not apply to this kind so the echo stays minimal
    keep = {"kind", "n", "fd_step", "gamma", "h_min"} | set(needs)
    if kind == "pendulum-offset":
        keep.add("strength")
    for key in list(s):
        if key not in keep:
            if s[key] is not None:
                raise ValidationError(f"system.{key}", f"not used by kind {kind!r}")
            del s[key]
    if s["gamma"] is None:
        del s["gamma"]


def _validate(data):
    _validate_system(data["system"])
    dim = 2 * data["system"]["n"]
    d = data.get("dynamics")
    if d is not None:
        if d["mu"] is not None:
            d["mu"] = _number("dynamics.mu", d["mu"], positive=True)
        d["horizon"] = _number("dynamics.horizon", d["horizon"], positive=True)
        for key in ("rel_tol", "abs_tol"):
            d[key] = _number(f"dynamics.{key}", d[key], positive=True)
            if not d[key] < 1:
                raise ValidationError(f"dynamics.{key}", "must be below 1")
        for key in ("max_step", "sample_interval"):
            if d[key] is not None:
                d[key] = _number(f"dynamics.{key}", d[key], positive=True)
        if d["sample_interval"] is not None and d["sample_interval"] > d["horizon"]:
            raise ValidationError("dynamics.sample_interval", "must not exceed horizon")
        d["max_steps"] = _number("dynamics.max_steps", d["max_steps"], positive=True, integer=True)
    ini = data.get("initial")
    if ini is not None:
        if ini["x"] is None:
            ini["x"] = [1.0] + [0.0] * (dim - 1)
        ini["x"] = _vector("initial.x", ini["x"], dim)
        if ini["v"] is not None:
            ini["v"] = _vector("initial.v", ini["v"], dim)
            ini.pop("E"), ini.pop("l"), ini.pop("radial_sign")
        else:
            if dim != 2:
                raise ValidationError("initial.v", "required when n > 1")
            ini.pop("v")
            ini["E"] = _number("initial.E", ini["E"], positive=True)
            ini["l"] = _number("initial.l", ini["l"])
            if ini["radial_sign"] not in (1, -1):
                raise ValidationError("initial.radial_sign", "must be 1 or -1")
    o = data.get("oracle")
    if o is not None:
        o["periods"] = _number("oracle.periods", o["periods"], positive=True)
    sw = data.get("sweep")
    if sw is not None:
        mus = _vector("sweep.mu", sw["mu"])
        if any(m <= 0 for m in mus) or len(set(mus)) != len(mus):
            raise ValidationError("sweep.mu", "values must be positive and distinct")
        sw["mu"] = sorted(mus, reverse=True)
        for key in ("E", "horizon", "rel_tol", "abs_tol"):
            sw[key] = _number(f"sweep.{key}", sw[key], positive=True)
        sw["l"] = _number("sweep.l", sw["l"])
        sw["x0"] = _vector("sweep.x0", sw["x0"], 2)
    sp = data.get("spectrum")
    if sp is not None:
        sp["hbar"] = _number("spectrum.hbar", sp["hbar"], positive=True)
        sp["L"] = _number("spectrum.L", sp["L"], positive=True)
        sp["N"] = _number("spectrum.N", sp["N"], positive=True, integer=True)
        if sp["N"] < 64:
            raise ValidationError("spectrum.N", "must be at least 64")
        sp["k"] = _number("spectrum.k", sp["k"], positive=True, integer=True)
        sp["levels"] = _number("spectrum.levels", sp["levels"], positive=True, integer=True)
        sp["sigma"] = _number("spectrum.sigma", sp["sigma"])
        if sp["gauge"] not in ("symmetric", "landau"):
            raise ValidationError("spectrum.gauge", "must be 'symmetric' or 'landau'")
        if sp["wall_check"] not in ("report", "raise"):
            raise ValidationError("spectrum.wall_check", "must be 'report' or 'raise'")
        if data["system"]["n"] != 1:
            raise ValidationError("system.n", "the spectrum command needs n = 1")
    f1 = data.get("fig1")
    if f1 is not None:
        pv = _vector("fig1.p_values", f1["p_values"])
        if any(p <= 0 for p in pv):
            raise ValidationError("fig1.p_values", "values must be positive")
        f1["p_values"] = pv
        for key in ("E", "periods", "powerlaw_horizon", "collapse_horizon", "rel_tol", "abs_tol"):
            f1[key] = _number(f"fig1.{key}", f1[key], positive=True)
        f1["samples"] = _number("fig1.samples", f1["samples"], positive=True, integer=True)
        f1["l"] = _number("fig1.l", f1["l"], positive=True)
        f1["x0"] = _vector("fig1.x0", f1["x0"], 2)
    out = data["output"]
    if not isinstance(out["dir"], str) or not out["dir"]:
        raise ValidationError("output.dir", "expected a nonempty string")


def resolve(raw, text=None):
    """Apply the schema to a raw nested dict (from TOML or an embedded JSON echo)."""
    if not isinstance(raw, dict):
        raise ValidationError("<root>", "configuration must be a table")
    data = {}
    for section, table in raw.items():
        if section not in SCHEMA:
            line = _line_of(text, section) if text else None
            where = f" (line {line})" if line else ""
            raise ValidationError(section, f"unknown section {section!r}{where}")
        if not isinstance(table, dict):
            raise ValidationError(section, "expected a table")
        resolved = {}
        for key, val in table.items():
            if key not in SCHEMA[section]:
                line = _line_of(text, section, key) if text else None
                where = f" (line {line})" if line else ""
                raise ValidationError(f"{section}.{key}", f"unknown key {key!r}{where}")
            resolved[key] = val
        for key, default in SCHEMA[section].items():
            if key not in resolved:
                if default is _REQUIRED:
                    raise ValidationError(f"{section}.{key}", "missing required key")
                resolved[key] = copy.deepcopy(default)
        data[section] = resolved
    if "system" not in data:
        raise ValidationError("system", "missing required section")
    if "output" not in data:
        data["output"] = copy.deepcopy(SCHEMA["output"])
    _validate(data)
    return ExperimentConfig(data)


def parse_config(text):
    """Parse TOML text into a resolved ExperimentConfig."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(line, msg) from exc
    return resolve(raw, text)


def with_section(config, name):
    """Copy of ``config`` with section ``name`` present (defaults filled)."""
    data = config.to_dict()
    if name not in data:
        data[name] = {}
    return resolve(data)
