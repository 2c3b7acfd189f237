"""Problem-definition files (TOML primary, JSON accepted) and strict
parsing.  Unknown keys are rejected everywhere: configs drive long
computations, so a typo must fail fast rather than silently fall back to a
default."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:             # py < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .problem import (Problem, PulseProblem, block_diagonal, constant_potential,
                      decoupled_pulse_system, poeschl_teller,
                      build_from_gradient_rd, scalar_pulse_system,
                      tabulated_potential)

_TOP_KEYS = {"name", "n", "D", "potential", "grid", "tolerances"}
_GRID_KEYS = {"x_min", "x_max", "n_points"}
_TOL_KEYS = {"tol_s", "tol_rank", "tol_lag", "tol_asym", "tol_sym",
             "tol_steady", "rtol_ode", "atol_ode", "oracle_h"}
_POTENTIAL_KEYS = {"kind", "params", "csv_path"}


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}; "
                          f"allowed: {sorted(allowed)}")


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"problem file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            cfg = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                cfg = tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    _check_keys(cfg, _TOP_KEYS, str(path))
    if "potential" not in cfg:
        raise ConfigError(f"{path}: missing required 'potential' section")
    _check_keys(cfg["potential"], _POTENTIAL_KEYS, f"{path}:potential")
    if "grid" in cfg:
        _check_keys(cfg["grid"], _GRID_KEYS, f"{path}:grid")
    if "tolerances" in cfg:
        _check_keys(cfg["tolerances"], _TOL_KEYS, f"{path}:tolerances")
    cfg["_base_dir"] = str(path.parent)
    return cfg


def load_tabulated_csv(path):
    """column 1: x ascending; columns 2..1+n^2: row-major potential entries."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: need at least two columns (x, entries)")
    nsq = data.shape[1] - 1
    n = int(round(math.sqrt(nsq)))
    if n * n != nsq:
        raise ConfigError(f"{path}: {nsq} entry columns is not a square count")
    return data[:, 0], data[:, 1:]


@dataclass(frozen=True)
class PotentialSpec:
    """Parsed potential description; build() produces the Problem."""

    kind: str
    params: dict = field(default_factory=dict)
    base_dir: str = "."

    def build(self, d=None, x_span=None) -> Problem:
        kind, params = self.kind, dict(self.params)
        if kind == "poeschl-teller":
            c = float(params.pop("c"))
            m = float(params.pop("m"))
            dd = float(params.pop("d", 1.0 if d is None else d[0]))
            self._done(params)
            return poeschl_teller(c, m, d=dd, x_span=x_span)
        if kind in ("shifted-sech-pulse", "gradient-rd"):
            return build_from_gradient_rd(self.build_pulse())
        if kind == "constant":
            matrix = params.pop("matrix")
            self._done(params)
            return constant_potential(matrix, d=d, x_span=x_span)
        if kind == "block-diagonal":
            blocks = params.pop("blocks")
            self._done(params)
            specs = [PotentialSpec(b["kind"], b.get("params", {}), self.base_dir)
                     for b in blocks]
            return block_diagonal([s.build() for s in specs])
        if kind == "tabulated":
            csv_path = params.pop("csv_path", None) or self.params.get("csv_path")
            self._done(params)
            if csv_path is None:
                raise ConfigError("tabulated potential needs csv_path")
            grid, samples = load_tabulated_csv(Path(self.base_dir) / csv_path)
            return tabulated_potential(grid, samples, d=d, x_span=x_span)
        raise ConfigError(f"unknown potential kind {kind!r}")

    def build_pulse(self) -> PulseProblem:
        params = dict(self.params)
        if self.kind == "shifted-sech-pulse":
            center = float(params.pop("center", 0.0))
            self._done(params)
            return scalar_pulse_system(center)
        if self.kind == "gradient-rd":
            family = params.pop("family", "shifted-sech-pulse")
            center = float(params.pop("center", 0.0))
            copies = int(params.pop("copies", 1))
            self._done(params)
            if family == "shifted-sech-pulse" and copies == 1:
                return scalar_pulse_system(center)
            if family in ("shifted-sech-pulse", "decoupled-sech-pulse"):
                return decoupled_pulse_system(copies, center)
            raise ConfigError(f"unknown gradient-rd family {family!r}")
        raise ConfigError(
            f"potential kind {self.kind!r} does not define a pulse system")

    @staticmethod
    def _done(params: dict) -> None:
        if params:
            raise ConfigError(f"unknown potential parameter(s) {sorted(params)}")


def problem_from_config(cfg: dict) -> Problem:
    spec = PotentialSpec(cfg["potential"]["kind"],
                         cfg["potential"].get("params", {}),
                         cfg.get("_base_dir", "."))
    if "csv_path" in cfg["potential"]:
        spec = PotentialSpec(spec.kind,
                             {**spec.params, "csv_path": cfg["potential"]["csv_path"]},
                             spec.base_dir)
    d = None
    if "D" in cfg:
        d = np.asarray(cfg["D"], dtype=float)
    x_span = None
    if "grid" in cfg:
        x_span = (float(cfg["grid"]["x_min"]), float(cfg["grid"]["x_max"]))
    prob = spec.build(d=d, x_span=x_span)
    if "n" in cfg and int(cfg["n"]) != prob.n:
        raise ConfigError(f"config says n={cfg['n']} but the potential has n={prob.n}")
    if "name" in cfg:
        prob = Problem(n=prob.n, D=prob.D, V=prob.V, V_minus=prob.V_minus,
                       V_plus=prob.V_plus, decay_rate=prob.decay_rate,
                       x_span=prob.x_span, name=str(cfg["name"]))
    return prob


def pulse_problem_from_config(cfg: dict) -> PulseProblem:
    spec = PotentialSpec(cfg["potential"]["kind"],
                         cfg["potential"].get("params", {}),
                         cfg.get("_base_dir", "."))
    return spec.build_pulse()


def tolerances_from_config(cfg: dict) -> dict:
    return dict(cfg.get("tolerances", {}))
