"""File formats: CSV matrices, plain PGM (P2, 16-bit) grids, JSON reports."""

import json
import re
from pathlib import Path

import numpy as np

from .errors import InputError

PGM_MAXVAL = 65535
_DIM_HEADER = re.compile(r"^\s*#?\s*dim\s*=\s*(\d+)\s*$")


def read_matrix_csv(path):
    """Parse a comma-separated matrix; lines starting with '#' are comments.

    Returns ``(matrix, header_lines)``. Errors name the file, row and column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    rows, headers = [], []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#") or _DIM_HEADER.match(stripped):
            headers.append(stripped)
            continue
        cells = stripped.split(",")
        values = []
        for col, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {lineno}, column {col}: not a number: {cell.strip()!r}") from None
            if not np.isfinite(value):
                raise InputError(f"{path}: row {lineno}, column {col}: non-finite value")
            values.append(value)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise InputError(f"{path}: row {lineno} has {len(values)} columns, expected {width}")
        rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), headers


def write_matrix_csv(path, matrix, header=None):
    lines = [f"# {header}"] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(matrix)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_features_csv(path):
    """Token matrix from CSV, checking any ``dim=D`` header against the columns."""
    tokens, headers = read_matrix_csv(path)
    for h in headers:
        m = _DIM_HEADER.match(h)
        if m and int(m.group(1)) != tokens.shape[1]:
            raise InputError(f"{path}: header says dim={m.group(1)} but rows have {tokens.shape[1]} columns")
    return tokens


def write_features_csv(path, tokens):
    write_matrix_csv(path, tokens, header=f"dim={np.shape(tokens)[1]}")


def _pgm_tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        yield from line.split()


def read_pgm(path):
    """Plain (P2) PGM as a float grid in [0, 1]."""
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: cannot read PGM ({exc})") from exc
    tokens = list(_pgm_tokens(text))
    if not tokens or tokens[0] != "P2":
        raise InputError(f"{path}: not a plain P2 PGM file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
        values = [int(t) for t in tokens[4:]]
    except ValueError as exc:
        raise InputError(f"{path}: malformed PGM ({exc})") from None
    if width < 1 or height < 1 or maxval < 1:
        raise InputError(f"{path}: bad PGM header")
    if len(values) != width * height:
        raise InputError(f"{path}: expected {width * height} pixels, found {len(values)}")
    grid = np.array(values, dtype=np.float64).reshape(height, width)
    if grid.min() < 0 or grid.max() > maxval:
        raise InputError(f"{path}: pixel values outside [0, {maxval}]")
    return grid / maxval


def write_pgm(path, grid):
    """Write a [0, 1] grid as P2 with maxval 65535, value = round(65535 v)."""
    grid = np.clip(np.asarray(grid, dtype=np.float64), 0.0, 1.0)
    h, w = grid.shape
    ints = np.rint(grid * PGM_MAXVAL).astype(np.int64)
    lines = ["P2", f"{w} {h}", str(PGM_MAXVAL)]
    lines += [" ".join(str(v) for v in row) for row in ints]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    grid, _ = read_matrix_csv(path)
    return grid


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
