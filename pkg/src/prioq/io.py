"""Plain-text outputs: CSV with a config header line, and JSON summaries.

Floats are written with 17 significant digits through ``%``-formatting, which
ignores the locale, so repeated runs produce byte-identical files.
"""

import json
import math
import os

import numpy as np


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def config_line(config):
    return "# config: " + json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))


def write_csv(path, columns, data, config):
    """Write ``data`` (a sequence of equal-length columns) under a ``# config:`` line."""
    cols = [np.asarray(c) if not isinstance(c, list) else c for c in data]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = [config_line(config), ",".join(columns)]
    if len(cols) == 1:
        lines.extend(_fmt(v) for v in cols[0])
    else:
        lines.extend(",".join(_fmt(c[i]) for c in cols) for i in range(n))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, payload, config):
    body = {"config": config, **payload}
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(body), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_csv(path):
    """Read a file written by :func:`write_csv`: ``(config, columns, rows as str lists)``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    config = json.loads(lines[0][len("# config: "):])
    columns = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:]]
    return config, columns, rows


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
