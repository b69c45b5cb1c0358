"""Run configuration: TOML files with strict key checking.

A config has top-level scalars (``master_seed``, ``output_dir``), a
``[model]`` table, an optional ``[tolerances]`` table and one table per
subcommand.  Unknown keys anywhere are errors.  :func:`resolve` fills in
defaults so the manifest can echo the fully-resolved configuration.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Mapping

import tomli

from .errors import ConfigError

COMMANDS = ("simulate", "mc", "check", "compare", "classify", "modulus", "uniqueness")

TOP_LEVEL = {"master_seed", "output_dir", "model", "tolerances", *COMMANDS}

TOLERANCES = {"eps_hit": 1e-4, "C_tol": 5.0}

DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"x0": None, "T": 1.0, "dt": 1e-3, "scheme": "full_truncation",
                 "boundary_policy": "continue", "eps_hit": None, "path_index": 0},
    "mc": {"x0": None, "T": 1.0, "dt": 1e-3, "paths": 1000, "scheme": "full_truncation",
           "checkpoints": None, "eps_hit": None, "boundary_policy": "continue", "block_size": 1024},
    "check": {"assumptions": None, "R": 10.0, "delta": 0.1, "samples": 256, "band_samples": 1024,
              "r_min": 1e-3, "r_count": 61, "r_grid": None, "sigma_tilde": None, "modulus": "sqrt",
              "alpha": 0.5, "epsilon": 1.0, "pairs": 2000, "R_list": [1.0, 10.0, 100.0, 1000.0]},
    "compare": {"i": 1, "x0": None, "T": 1.0, "dt": 1e-3, "C_tol": None, "eps_hit": None,
                "scheme": "full_truncation", "R": 10.0, "samples": 256, "path_index": 0, "series": True},
    "classify": {"diffusion": None, "n": 2, "kappa": None, "c": None, "p": None, "q": None,
                 "drift": None, "diff_sq": None, "interval": None, "y0": None, "endpoints": None},
    "modulus": {"rho": "sqrt", "alpha": 0.5, "epsilon": 1.0, "K": 8, "grid_points": 4096,
                "t_min": -3.0, "t_max": 3.0, "t_count": 1001},
    "uniqueness": {"x0": None, "T": 1.0, "dt": 1e-2, "scheme_a": "euler", "scheme_b": "full_truncation",
                   "refinements": 3, "paths": 1, "eps_hit": None},
}

MODEL_KEYS = {"kind", "n", "mu", "sigma", "c", "theta", "beta", "domain", "name"}

# commands that simulate or audit a model need the [model] table
NEEDS_MODEL = {"simulate", "mc", "check", "compare", "uniqueness"}


def load(path) -> dict:
    """Parse a TOML config file; missing or malformed files raise :class:`ConfigError`."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with p.open("rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def parse_value(text: str):
    """TOML value syntax for ``--set``; bare words fall back to strings."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``section.key=value`` (or ``key=value`` at top level) assignments."""
    out = copy.deepcopy(raw)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part!r} is not a table")
        node[parts[-1]] = parse_value(value.strip())
    return out


def validate(raw: Mapping) -> None:
    unknown = set(raw) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    for name in COMMANDS:
        if name in raw:
            if not isinstance(raw[name], Mapping):
                raise ConfigError(f"[{name}] must be a table")
            bad = set(raw[name]) - set(DEFAULTS[name])
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
    if "model" in raw:
        if not isinstance(raw["model"], Mapping):
            raise ConfigError("[model] must be a table")
        bad = set(raw["model"]) - MODEL_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) in [model]: {sorted(bad)}")
    if "tolerances" in raw:
        bad = set(raw["tolerances"]) - set(TOLERANCES)
        if bad:
            raise ConfigError(f"unknown key(s) in [tolerances]: {sorted(bad)}")


def resolve(raw: Mapping, command: str) -> dict:
    """Validated config for ``command`` with every default filled in."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    validate(raw)
    if command in NEEDS_MODEL and "model" not in raw:
        raise ConfigError(f"command {command!r} needs a [model] table")
    tol = {**TOLERANCES, **raw.get("tolerances", {})}
    section = {**DEFAULTS[command], **raw.get(command, {})}
    for key in ("eps_hit", "C_tol"):
        if key in section and section[key] is None:
            section[key] = tol[key]
    seed = raw.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("master_seed must be a non-negative integer")
    out = {"master_seed": seed, "tolerances": tol, command: section}
    if "model" in raw:
        out["model"] = dict(raw["model"])
    if "output_dir" in raw:
        out["output_dir"] = str(raw["output_dir"])
    return out
