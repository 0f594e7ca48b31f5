"""JSON run configuration: schema, validation and operator literals.

Operators are given either as a named preset (``"pauli_x"``, ``"pauli_y"``,
``"pauli_z"``, ``"zero"``, ``"rabi(<omega>)"``) or as a matrix literal whose
entries are real numbers or ``[re, im]`` pairs. Initial states are
``"basis(<k>)"`` or a vector literal in the same entry format.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    HermiticityError,
    Operator,
    basis_state,
    max_asymmetry,
    pauli_x,
    pauli_y,
    pauli_z,
    rabi,
    zero_operator,
)

MODES = ("selective", "master", "ensemble", "zeno", "decoherence", "error_scaling",
         "projective_limit")
FORMATS = ("csv", "json", "svg")

SCHEMA = {
    "system": {"dim", "hamiltonian", "initial_state"},
    "measurement": {"observable", "kappa", "T", "steps"},
    "run": {"mode", "n_traj", "seed", "readout_file", "params"},
    "output": {"directory", "formats"},
}

# mode -> (required fields, optional fields); anything else present is an error
_ALWAYS = {"run.mode", "run.seed", "output.directory", "output.formats", "system.dim"}
MODE_FIELDS = {
    "selective": ({"system.hamiltonian", "measurement.observable", "measurement.kappa",
                   "measurement.T", "run.readout_file"},
                  {"system.initial_state", "measurement.steps"}),
    "master": ({"system.hamiltonian", "measurement.observable", "measurement.kappa",
                "measurement.T"},
               {"system.initial_state", "measurement.steps"}),
    "ensemble": ({"system.hamiltonian", "measurement.observable", "measurement.kappa",
                  "measurement.T", "run.n_traj"},
                 {"system.initial_state", "measurement.steps"}),
    "zeno": ({"run.params"}, {"run.n_traj"}),
    "decoherence": ({"system.hamiltonian", "measurement.observable", "measurement.kappa",
                     "measurement.T"},
                    {"measurement.steps"}),
    "error_scaling": ({"measurement.observable", "measurement.kappa", "run.params"},
                      {"run.n_traj"}),
    "projective_limit": ({"measurement.observable", "measurement.T", "system.initial_state",
                          "run.params"},
                         {"run.n_traj"}),
}
# mode -> (required params, optional params)
MODE_PARAMS = {
    "zeno": ({"omega"}, {"kappa_over_omega", "T"}),
    "error_scaling": ({"T_values"}, {"level"}),
    "projective_limit": ({"kappa_values"}, set()),
}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class SimConfig:
    mode: str
    dim: int | None = None
    hamiltonian: Operator | None = None
    initial_state: np.ndarray | None = None
    observable: Operator | None = None
    kappa: float | None = None
    T: float | None = None
    steps: int | None = None
    n_traj: int | None = None
    seed: int = 0
    readout_file: Path | None = None
    params: dict = field(default_factory=dict)
    output_dir: Path = Path("rpi_out")
    formats: tuple[str, ...] = ("csv", "json")
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_RABI = re.compile(r"^rabi\(\s*([-+0-9.eE]+)\s*\)$")
_BASIS = re.compile(r"^basis\(\s*(\d+)\s*\)$")


def _entry(x, where: str) -> complex:
    if isinstance(x, bool):
        raise ConfigError(f"{where}: booleans are not matrix entries")
    if isinstance(x, (int, float)):
        return complex(float(x), 0.0)
    if (isinstance(x, list) and len(x) == 2
            and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in x)):
        return complex(float(x[0]), float(x[1]))
    raise ConfigError(f"{where}: entry {x!r} must be a number or an [re, im] pair")


def parse_operator(value, where: str, dim: int | None = None) -> Operator:
    """Parse a preset name or matrix literal into a certified Hermitian operator."""
    if isinstance(value, str):
        name = value.strip()
        presets = {"pauli_x": pauli_x, "pauli_y": pauli_y, "pauli_z": pauli_z}
        if name in presets:
            return presets[name]()
        if name == "zero":
            if dim is None:
                raise ConfigError(f"{where}: preset 'zero' needs system.dim")
            return zero_operator(dim)
        m = _RABI.match(name)
        if m:
            try:
                return rabi(float(m.group(1)))
            except ValueError as exc:
                raise ConfigError(f"{where}: bad rabi frequency in {name!r}") from exc
        raise ConfigError(f"{where}: unknown operator preset {name!r}")
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{where}: expected a preset name or a square matrix literal")
    n = len(value)
    if any(len(r) != n for r in value):
        raise ConfigError(f"{where}: matrix literal is not square")
    m = np.array([[_entry(x, where) for x in row] for row in value], dtype=complex)
    asym = max_asymmetry(m)
    if asym > 1e-12:
        raise ConfigError(f"{where}: matrix is not Hermitian (max asymmetry {asym:.6g})")
    try:
        return Operator.herm(m)
    except (HermiticityError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_state(value, dim: int, where: str = "system.initial_state") -> np.ndarray:
    if isinstance(value, str):
        m = _BASIS.match(value.strip())
        if not m:
            raise ConfigError(f"{where}: expected 'basis(k)' or a vector literal, got {value!r}")
        k = int(m.group(1))
        if k >= dim:
            raise ConfigError(f"{where}: basis index {k} out of range for dim {dim}")
        return basis_state(dim, k)
    if not isinstance(value, list) or len(value) != dim:
        raise ConfigError(f"{where}: expected a vector literal of length {dim}")
    v = np.array([_entry(x, where) for x in value], dtype=complex)
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > 1e-10:
        raise ConfigError(f"{where}: state must be normalized (norm is {nrm!r})")
    return v


def _number(value, where: str, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and (not isinstance(value, int) and not float(value).is_integer()):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be > 0, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{where}: must be >= 0, got {value!r}")
    return int(value) if integer else float(value)


def validate_config(raw: dict, base_dir: Path | None = None) -> SimConfig:
    """Validate a decoded JSON configuration and build a :class:`SimConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    present = set()
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown key {section!r} at top level")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section {section!r}")
            present.add(f"{section}.{key}")
    if "run.mode" not in present:
        raise ConfigError("missing required field run.mode")
    mode = raw["run"]["mode"]
    if mode not in MODES:
        raise ConfigError(f"run.mode: unknown mode {mode!r} (expected one of {', '.join(MODES)})")
    required, optional = MODE_FIELDS[mode]
    for name in sorted(required - present):
        raise ConfigError(f"missing required field {name} for mode {mode!r}")
    for name in sorted(present - required - optional - _ALWAYS):
        raise ConfigError(f"field {name} is not used by mode {mode!r}")

    def get(name, default=None):
        section, key = name.split(".")
        return raw.get(section, {}).get(key, default)

    cfg = SimConfig(mode=mode, raw=raw)
    if "system.dim" in present:
        cfg.dim = _number(get("system.dim"), "system.dim", positive=True, integer=True)
    if "measurement.observable" in present:
        cfg.observable = parse_operator(get("measurement.observable"), "measurement.observable",
                                        cfg.dim)
    if "system.hamiltonian" in present:
        cfg.hamiltonian = parse_operator(get("system.hamiltonian"), "system.hamiltonian",
                                         cfg.dim or (cfg.observable.dim if cfg.observable else None))
    dims = {op.dim for op in (cfg.observable, cfg.hamiltonian) if op is not None}
    if cfg.dim is not None:
        dims.add(cfg.dim)
    if len(dims) > 1:
        raise ConfigError(f"dimension mismatch between system and measurement: {sorted(dims)}")
    if dims:
        cfg.dim = dims.pop()
    if "system.initial_state" in present:
        if cfg.dim is None:
            raise ConfigError("system.initial_state needs system.dim or an operator to fix the dimension")
        cfg.initial_state = parse_state(get("system.initial_state"), cfg.dim)
    elif cfg.dim is not None:
        cfg.initial_state = basis_state(cfg.dim, 0)
    if "measurement.kappa" in present:
        cfg.kappa = _number(get("measurement.kappa"), "measurement.kappa", nonneg=True)
    if "measurement.T" in present:
        cfg.T = _number(get("measurement.T"), "measurement.T", positive=True)
    if "measurement.steps" in present:
        cfg.steps = _number(get("measurement.steps"), "measurement.steps", positive=True,
                            integer=True)
    if "run.n_traj" in present:
        cfg.n_traj = _number(get("run.n_traj"), "run.n_traj", positive=True, integer=True)
    if "run.seed" in present:
        seed = _number(get("run.seed"), "run.seed", nonneg=True, integer=True)
        if seed >= 2**64:
            raise ConfigError("run.seed must fit in an unsigned 64-bit integer")
        cfg.seed = seed
    if "run.readout_file" in present:
        rf = get("run.readout_file")
        if not isinstance(rf, str):
            raise ConfigError("run.readout_file must be a path string")
        p = Path(rf)
        cfg.readout_file = p if p.is_absolute() or base_dir is None else base_dir / p
    if mode in ("ensemble",) and cfg.kappa == 0:
        raise ConfigError("measurement.kappa must be > 0 for ensemble sampling")
    if mode in MODE_PARAMS:
        params = get("run.params")
        if not isinstance(params, dict):
            raise ConfigError("run.params must be an object")
        req, opt = MODE_PARAMS[mode]
        for key in params:
            if key not in req | opt:
                raise ConfigError(f"unknown key {key!r} in run.params for mode {mode!r}")
        for key in sorted(req - set(params)):
            raise ConfigError(f"missing required field run.params.{key} for mode {mode!r}")
        cfg.params = _validate_params(mode, params)
    if "output.directory" in present:
        d = get("output.directory")
        if not isinstance(d, str) or not d:
            raise ConfigError("output.directory must be a non-empty string")
        cfg.output_dir = Path(d) if Path(d).is_absolute() or base_dir is None else base_dir / d
    if "output.formats" in present:
        fmts = get("output.formats")
        if isinstance(fmts, str):
            fmts = [fmts]
        if not isinstance(fmts, list) or not fmts:
            raise ConfigError("output.formats must be a non-empty list")
        for f in fmts:
            if f not in FORMATS:
                raise ConfigError(f"output.formats: unknown format {f!r}")
        cfg.formats = tuple(dict.fromkeys(fmts))
    return cfg


def _validate_params(mode: str, params: dict) -> dict:
    out = {}
    for key, value in params.items():
        where = f"run.params.{key}"
        if key in ("omega", "T"):
            out[key] = _number(value, where, positive=True)
        elif key == "level":
            out[key] = _number(value, where, nonneg=True, integer=True)
        elif key in ("kappa_over_omega", "kappa_values", "T_values"):
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{where}: expected a non-empty list of numbers")
            out[key] = [_number(v, where, nonneg=True, positive=(key != "kappa_over_omega"))
                        for v in value]
    return out


def parse_config(path) -> SimConfig:
    """Read and validate a JSON configuration file.

    Relative ``run.readout_file`` and ``output.directory`` paths resolve
    against the configuration file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return validate_config(raw, base_dir=path.parent)
