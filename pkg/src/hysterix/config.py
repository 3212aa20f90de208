"""JSON run configuration: loading, preset expansion, ``key=value`` overrides and validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import presets
from .backstepping import BacksteppingCertificate
from .expr import ExprError
from .hysteresis import LocalCertificate
from .integrator import IntegratorConfig
from .plant import PRELIMINARY_EXAMPLE_TEXT, PAPER_EXAMPLE_TEXT, PlantError, PlantModel
from .sampling import SampleConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "PLANT_PRESETS",
    "default_config_dict",
    "expand_presets",
    "apply_overrides",
    "load_config",
]

CONTROLLER_TYPES = ("hybrid", "global", "local", "classical")
PLANT_PRESETS = {"paper_example": PAPER_EXAMPLE_TEXT, "preliminary_example": PRELIMINARY_EXAMPLE_TEXT}


class ConfigError(ValueError):
    """Anything wrong with a run configuration (CLI exit code 2)."""


def default_config_dict() -> dict:
    """The worked-example run, in shorthand form."""
    return {
        "plant": {"preset": "paper_example", "theta": 1e-3},
        "certificate": {"preset": "paper_example", "theta": 1e-3, "rho": 2.0},
        "local": {"preset": "paper_example", "theta": 1e-3,
                  "v_ell": presets.PAPER_V_ELL, "v_ell_tilde": presets.PAPER_V_ELL_TILDE},
        "synthesis": {"a": presets.PAPER_A, "c": presets.PAPER_C, "quad_order": 8, "variant": "derived"},
        "controller": {"type": "hybrid", "c1": 1.0, "c2": 1.0},
        "integrator": IntegratorConfig().as_dict(),
        "sampling": {"n_samples": 10_000, "seed": 0, "box": 10.0},
        "initial_conditions": [{"x": list(presets.PAPER_X0), "q": presets.PAPER_Q0}],
        "output": {"dir": "out", "prefix": "run"},
    }


def _expand_plant(d: dict) -> dict:
    if "preset" not in d:
        return d
    name = d["preset"]
    if name not in PLANT_PRESETS:
        raise ConfigError(f"unknown plant preset {name!r}; expected one of {sorted(PLANT_PRESETS)}")
    t = PLANT_PRESETS[name]
    extra = set(d) - {"preset", "theta"}
    if extra:
        raise ConfigError(f"unexpected plant keys {sorted(extra)}")
    return {"n": t["n"], "f1": list(t["f1"]), "f2": t["f2"], "h1": list(t["h1"]), "h2": t["h2"],
            "params": {"theta": float(d.get("theta", 1e-3))}, "name": name}


def _expand_certificate(d: dict) -> dict:
    if "preset" not in d:
        return d
    if d["preset"] != "paper_example":
        raise ConfigError(f"unknown certificate preset {d['preset']!r}")
    return presets.certificate_text(float(d.get("theta", 1e-3)), float(d.get("rho", 2.0)))


def _expand_local(d: dict) -> dict:
    if "preset" not in d:
        return d
    if d["preset"] != "paper_example":
        raise ConfigError(f"unknown local-certificate preset {d['preset']!r}")
    return presets.local_text(float(d.get("theta", 1e-3)),
                              float(d.get("v_ell", presets.PAPER_V_ELL)),
                              float(d.get("v_ell_tilde", presets.PAPER_V_ELL_TILDE)))


def expand_presets(raw: Mapping[str, Any]) -> dict:
    """Merge ``raw`` over the defaults and replace preset shorthands by explicit expressions."""
    d = default_config_dict()
    for key, val in raw.items():
        if key not in d:
            raise ConfigError(f"unknown config section {key!r}")
        if isinstance(d[key], dict) and isinstance(val, dict):
            # a section given with its own preset replaces the default section wholesale
            if "preset" in val or key in ("plant", "certificate", "local"):
                d[key] = copy.deepcopy(val)
            else:
                d[key].update(copy.deepcopy(val))
        else:
            d[key] = copy.deepcopy(val)
    try:
        d["plant"] = _expand_plant(d["plant"])
        d["certificate"] = _expand_certificate(d["certificate"])
        d["local"] = _expand_local(d["local"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return d


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are JSON when they parse, else strings.

    Integer path components index into lists (``initial_conditions.0.q=2``).
    """
    d = copy.deepcopy(d)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        path = key.strip().split(".")
        if not path or not all(path):
            raise ConfigError(f"bad override key {key!r}")
        node = d
        for p in path[:-1]:
            node = _child(node, p, key)
        last = path[-1]
        if isinstance(node, list):
            node[_index(node, last, key)] = _parse_value(text)
        elif isinstance(node, dict):
            node[last] = _parse_value(text)
        else:
            raise ConfigError(f"cannot set {key!r}: parent is not a section")
    return d


def _index(lst, p, key):
    try:
        i = int(p)
        lst[i]
    except (ValueError, IndexError):
        raise ConfigError(f"bad list index {p!r} in {key!r}") from None
    return i


def _child(node, p, key):
    if isinstance(node, list):
        return node[_index(node, p, key)]
    if isinstance(node, dict):
        if p not in node:
            node[p] = {}
        return node[p]
    raise ConfigError(f"cannot descend into {p!r} in {key!r}")


@dataclass
class RunConfig:
    plant: dict
    certificate: dict
    local: dict
    synthesis: dict
    controller: dict
    integrator: dict
    sampling: dict
    initial_conditions: list = field(default_factory=list)
    output: dict = field(default_factory=dict)

    # ----------------------------------------------------------- (de)serialization

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], overrides: Sequence[str] = ()) -> "RunConfig":
        if not isinstance(raw, Mapping):
            raise ConfigError("configuration must be a JSON object")
        # overrides may edit expanded expressions or install a new preset section
        d = expand_presets(apply_overrides(expand_presets(raw), overrides))
        cfg = cls(**{k: d[k] for k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    # ----------------------------------------------------------- validation

    def validate(self) -> None:
        p = self.plant
        for key in ("n", "f1", "f2", "h1", "h2"):
            if key not in p:
                raise ConfigError(f"plant.{key} is required")
        for key in ("V1", "phi1", "alpha", "Psi", "epsilon", "M"):
            if key not in self.certificate:
                raise ConfigError(f"certificate.{key} is required")
        for key in ("V_ell", "phi_ell", "v_ell", "v_ell_tilde"):
            if key not in self.local:
                raise ConfigError(f"local.{key} is required")
        try:
            v, vt = float(self.local["v_ell"]), float(self.local["v_ell_tilde"])
        except (TypeError, ValueError):
            raise ConfigError("local.v_ell and local.v_ell_tilde must be numbers") from None
        if not 0 < vt < v:
            raise ConfigError(f"need 0 < v_ell_tilde < v_ell, got {vt} and {v}")
        s = self.synthesis
        if not _is_pos(s.get("a")):
            raise ConfigError("synthesis.a must be a positive number")
        c = s.get("c", "auto")
        if c != "auto" and not _is_pos(c):
            raise ConfigError('synthesis.c must be "auto" or a positive number')
        if not isinstance(s.get("quad_order", 8), int) or s.get("quad_order", 8) < 2:
            raise ConfigError("synthesis.quad_order must be an integer >= 2")
        if s.get("variant", "derived") not in ("derived", "paper-literal"):
            raise ConfigError('synthesis.variant must be "derived" or "paper-literal"')
        if self.controller.get("type") not in CONTROLLER_TYPES:
            raise ConfigError(f"controller.type must be one of {CONTROLLER_TYPES}")
        try:
            self.integrator_config()
            self.sample_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        ics = self.initial_conditions
        if not isinstance(ics, list) or not ics:
            raise ConfigError("initial_conditions must be a non-empty list")
        n = int(p["n"])
        for i, ic in enumerate(ics):
            if not isinstance(ic, dict) or "x" not in ic:
                raise ConfigError(f"initial_conditions[{i}] needs an 'x' entry")
            x = ic["x"]
            if not isinstance(x, list) or len(x) != n or not all(_is_num(v) for v in x):
                raise ConfigError(f"initial_conditions[{i}].x must be {n} numbers")
            if ic.get("q", 1) not in (1, 2):
                raise ConfigError(f"initial_conditions[{i}].q must be 1 or 2")

    # ----------------------------------------------------------- builders

    def build_plant(self) -> PlantModel:
        p = self.plant
        name = p.get("name", "custom")
        ref = PLANT_PRESETS.get(name)
        if ref is not None and any(p.get(k) != ref[k] for k in ("n", "f1", "f2", "h1", "h2")):
            name = "custom"  # edited preset: no longer the built-in system
        try:
            return PlantModel.from_strings(int(p["n"]), p["f1"], str(p["f2"]), p["h1"], str(p["h2"]),
                                           p.get("params", {}), name)
        except (ExprError, PlantError, TypeError, ValueError) as exc:
            raise ConfigError(f"plant: {exc}") from exc

    def build_certificate(self) -> BacksteppingCertificate:
        c = self.certificate
        try:
            return BacksteppingCertificate.from_strings(
                int(self.plant["n"]), c["V1"], c["phi1"], c["alpha"], c["Psi"],
                float(c["epsilon"]), float(c["M"]), c.get("params", {}),
            )
        except (ExprError, TypeError, ValueError) as exc:
            raise ConfigError(f"certificate: {exc}") from exc

    def build_local(self) -> LocalCertificate:
        c = self.local
        try:
            return LocalCertificate.from_strings(int(self.plant["n"]), c["V_ell"], c["phi_ell"],
                                                 float(c["v_ell"]), c.get("params", {}))
        except (ExprError, TypeError, ValueError) as exc:
            raise ConfigError(f"local: {exc}") from exc

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(**self.integrator)

    def sample_config(self) -> SampleConfig:
        s = dict(self.sampling)
        if "u_range" in s:
            s["u_range"] = tuple(s["u_range"])
        return SampleConfig(**s)

    def ics(self) -> list[tuple[tuple[float, ...], int]]:
        return [(tuple(float(v) for v in ic["x"]), int(ic.get("q", 1))) for ic in self.initial_conditions]


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_pos(v) -> bool:
    return _is_num(v) and v > 0


def load_config(path: str | Path | None, overrides: Sequence[str] = ()) -> RunConfig:
    """Read a JSON config (``None`` means the built-in defaults)."""
    if path is None:
        raw = {}
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return RunConfig.from_dict(raw, overrides)
