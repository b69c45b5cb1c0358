"""Report, CSV and manifest writers.

Every file starts with a format version: JSON documents carry a leading
``format_version`` key, CSV files a ``# format_version: 1`` comment line.
Floats are written so that they read back bit-identically.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
OUTPUT_ENV = "DEGSDE_OUTPUT_DIR"
DEFAULT_OUTPUT = "degsde-out"


def output_dir(cli_value: str | None, config_value: str | None) -> Path:
    """``--out`` beats the config's ``output_dir``, which beats ``$DEGSDE_OUTPUT_DIR``."""
    for v in (cli_value, config_value, os.environ.get(OUTPUT_ENV)):
        if v:
            return Path(v)
    return Path(DEFAULT_OUTPUT)


def plain(obj):
    """Convert numpy containers/scalars to JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def dumps(doc: dict) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps({"format_version": FORMAT_VERSION, **plain(doc)}, indent=2, allow_nan=False) + "\n"


def write_json(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def write_csv(path, header, rows) -> Path:
    """Rows of floats with 17 significant digits under a version line and a header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with path.open("w") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    return path


def read_csv(path) -> tuple[list, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data.reshape(len(lines) - 1, len(header))
