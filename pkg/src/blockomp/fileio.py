"""Configuration parsing, the plain-text matrix format, and CSV/JSON emission.

Matrix files look like::

    # dense 2 3
    1 0 0.5
    0 1 -2   # trailing comments are allowed

Floats are written with 17 significant digits, so a write/read round trip
reproduces every binary64 value exactly.
"""
import csv
import io
import json
import math
import re

import numpy as np

from .errors import FormatError, InvalidSpec, ParseError, ValidationError
from .experiments import COEFF_MODELS, MATRIX_MODELS, EnsembleSpec
from .numeric import as_matrix

SWEEP_COLUMNS = ("L", "K", "d", "algorithm", "trials", "successes", "success_rate", "mean_iterations")
RIP_COLUMNS = ("order", "d", "delta", "threshold", "satisfied", "worst_support")

_HEADER = re.compile(r"^\s*#\s*dense\s+(\S+)\s+(\S+)\s*$")

_REQUIRED = ("L", "N", "d", "K")


def _int(name, value, minimum=None, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(name, f"must be >= {minimum}, got {value}")
    return value


def _float(name, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(name, f"expected a finite number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(name, f"must be >= {minimum}, got {value}")
    return float(value)


def _choice(options):
    def check(name, value):
        if value not in options:
            raise ValidationError(name, f"expected one of {', '.join(options)}, got {value!r}")
        return value
    return check


def _bool(name, value):
    if not isinstance(value, bool):
        raise ValidationError(name, f"expected true or false, got {value!r}")
    return value


def _int_list(name, value):
    if value is None:
        return None
    if not isinstance(value, list) or not value:
        raise ValidationError(name, "expected a non-empty list of integers")
    return tuple(_int(f"{name}[{i}]", v, 1) for i, v in enumerate(value))


_FIELDS = {
    "L": lambda n, v: _int(n, v, 1),
    "N": lambda n, v: _int(n, v, 1),
    "d": lambda n, v: _int(n, v, 1),
    "K": lambda n, v: _int(n, v, 1),
    "seed": lambda n, v: _int(n, v, 0),
    "trials": lambda n, v: _int(n, v, 1),
    "coeff_model": _choice(COEFF_MODELS),
    "matrix_model": _choice(MATRIX_MODELS),
    "normalize_columns": _bool,
    "epsilon": lambda n, v: _float(n, v, 0.0),
    "max_iterations": lambda n, v: _int(n, v, 1, allow_none=True),
    "residual_tol": lambda n, v: _float(n, v, 0.0),
    "draws_per_support": lambda n, v: _int(n, v, 1),
    "budget": lambda n, v: _int(n, v, 1, allow_none=True),
    "L_values": _int_list,
    "K_values": _int_list,
}


def parse_config(text):
    """Parse a JSON run configuration into an :class:`EnsembleSpec`.

    Required keys are ``L``, ``N``, ``d`` and ``K``; everything else has the
    defaults of :class:`EnsembleSpec`. Unknown keys are rejected.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("configuration must be a JSON object")
    for key in doc:
        if key not in _FIELDS:
            raise ValidationError(key, "unknown configuration key")
    values = {key: _FIELDS[key](key, value) for key, value in doc.items()}
    for key in _REQUIRED:
        if key not in values:
            raise ValidationError(key, "required key is missing")
    if values["N"] % values["d"]:
        raise ValidationError("N", f"N={values['N']} is not a multiple of d={values['d']}")
    try:
        return EnsembleSpec(**values)
    except InvalidSpec as exc:
        raise ValidationError("config", str(exc)) from None


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def read_matrix(source):
    """Read a matrix file from a path or a text stream."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()
    header = None
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        if header is None:
            if not raw.strip():
                continue
            m = _HEADER.match(raw)
            if not m:
                raise FormatError("expected header '# dense L N'", lineno)
            try:
                header = (int(m.group(1)), int(m.group(2)))
            except ValueError:
                raise FormatError("header dimensions must be integers", lineno) from None
            if header[0] < 1 or header[1] < 1:
                raise FormatError("header dimensions must be positive", lineno)
            continue
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        row = []
        for tok in re.finditer(r"\S+", body):
            try:
                value = float(tok.group())
            except ValueError:
                raise FormatError(f"cannot parse {tok.group()!r} as a number", lineno, tok.start() + 1) from None
            if not math.isfinite(value):
                raise FormatError(f"non-finite value {tok.group()!r}", lineno, tok.start() + 1)
            row.append(value)
        if len(row) != header[1]:
            raise FormatError(f"expected {header[1]} values, found {len(row)}", lineno)
        if len(rows) == header[0]:
            raise FormatError(f"more than the {header[0]} rows declared in the header", lineno)
        rows.append(row)
    if header is None:
        raise FormatError("missing header '# dense L N'", 1)
    if len(rows) != header[0]:
        raise FormatError(f"header declares {header[0]} rows, found {len(rows)}", len(lines))
    return np.array(rows, dtype=float)


def format_matrix(a):
    a = as_matrix(a)
    out = [f"# dense {a.shape[0]} {a.shape[1]}"]
    out += [" ".join(f"{v:.17g}" for v in row) for row in a]
    return "\n".join(out) + "\n"


def write_matrix(a, dest):
    text = format_matrix(a)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def read_vector(source):
    """A vector is stored as an ``N x 1`` (or ``1 x N``) matrix file."""
    a = read_matrix(source)
    if 1 not in a.shape:
        raise FormatError(f"expected a single row or column, got shape {a.shape}")
    return a.ravel()


def write_vector(v, dest):
    write_matrix(np.asarray(v, dtype=float).reshape(-1, 1), dest)


def fmt(value):
    """CSV cell formatting: 12 significant digits for floats, lowercase booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


def sweep_rows(grid):
    rows = [
        {
            "L": c.L, "K": c.K, "d": c.d, "algorithm": c.algorithm, "trials": c.trials,
            "successes": c.successes, "success_rate": float(c.success_rate),
            "mean_iterations": float(c.mean_iterations),
        }
        for c in grid.cells
    ]
    return sorted(rows, key=lambda r: (r["L"], r["K"], r["d"], r["algorithm"]))


def rip_rows(certificates):
    rows = [
        {
            "order": c.order, "d": c.block_d, "delta": float(c.delta), "threshold": float(c.theorem1_threshold),
            "satisfied": bool(c.satisfied), "worst_support": ";".join(str(i) for i in c.worst_support.indices),
        }
        for c in certificates
    ]
    return sorted(rows, key=lambda r: (r["order"], r["d"]))


def sweep_csv(grid):
    return _csv(SWEEP_COLUMNS, sweep_rows(grid) if grid is not None else [])


def rip_csv(certificates):
    return _csv(RIP_COLUMNS, rip_rows(certificates))


def results_json(kind, rows, config=None, extra=None):
    """JSON mirror of a CSV table plus the resolved configuration and library version."""
    from . import __version__

    doc = {"kind": kind, "version": __version__, "config": config, "rows": rows}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def emit_results(kind, rows_or_grid, fmt_="csv", config=None, extra=None):
    """Render a sweep grid or a list of certificates as CSV or JSON text."""
    if kind == "sweep":
        rows = sweep_rows(rows_or_grid) if rows_or_grid is not None else []
        columns = SWEEP_COLUMNS
    elif kind == "rip":
        rows = rip_rows(rows_or_grid)
        columns = RIP_COLUMNS
    else:
        raise ValueError(f"unknown result kind {kind!r}")
    if fmt_ == "csv":
        return _csv(columns, rows)
    if fmt_ == "json":
        return results_json(kind, rows, config, extra)
    raise ValueError(f"unknown format {fmt_!r}")
