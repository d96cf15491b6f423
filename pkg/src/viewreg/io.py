"""File formats: matrix CSV, embedding CSV, feature-stack directories, traces.

Floats are always written with ``repr`` so values survive a round trip
exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import MissingReference, ParseError, ShapeError
from .features import CHANNELS, FeatureMapStack
from .view_order import ViewEmbeddingSequence


def _parse_float(text: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text.strip()!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value: {text.strip()!r}", line)
    return v


def format_rows(rows) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in np.atleast_2d(rows))


def read_matrix_csv(path) -> np.ndarray:
    """Headerless numeric CSV, one matrix row per line."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append([_parse_float(c, lineno) for c in row])
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"expected {width} columns, got {len(r)}", i + 1)
    return np.array(rows, dtype=np.float64)


def read_square_matrix_csv(path) -> np.ndarray:
    m = read_matrix_csv(path)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{path}: matrix is {m.shape[0]}x{m.shape[1]}, expected square")
    return m


def write_matrix_csv(path, m) -> None:
    Path(path).write_text(format_rows(m))


def read_embeddings_csv(path) -> ViewEmbeddingSequence:
    """Embedding file with header ``azimuth_deg,e_0,...,e_{D-1}``.

    Exactly one row must have azimuth 0; it becomes the reference. The rest
    are sorted by azimuth.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "azimuth_deg":
            raise ParseError("header must start with 'azimuth_deg'", 1)
        dim = len(header) - 1
        if dim < 1 or [h.strip() for h in header[1:]] != [f"e_{i}" for i in range(dim)]:
            raise ParseError("header must be azimuth_deg,e_0,...,e_{D-1}", 1)
        refs, rest = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != dim + 1:
                raise ParseError(f"expected {dim + 1} fields, got {len(row)}", lineno)
            az = _parse_float(row[0], lineno)
            vec = [_parse_float(c, lineno) for c in row[1:]]
            (refs if az == 0.0 else rest).append((az, vec, lineno))
    if len(refs) != 1:
        raise MissingReference(f"expected exactly one azimuth-0 reference row, found {len(refs)}")
    rest.sort(key=lambda r: r[0])
    for (a, _, _), (b, _, line) in zip(rest, rest[1:]):
        if a == b:
            raise ParseError(f"duplicate azimuth {b!r}", line)
    if not rest:
        raise ParseError("no non-reference views")
    raw = np.array([refs[0][1]] + [r[1] for r in rest])
    return ViewEmbeddingSequence(raw, tuple(r[0] for r in rest))


def write_embeddings_csv(path, raw, azimuths) -> None:
    raw = np.asarray(raw, dtype=np.float64)
    lines = ["azimuth_deg," + ",".join(f"e_{i}" for i in range(raw.shape[1])) + "\n"]
    for az, row in zip(azimuths, raw):
        lines.append(repr(float(az)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text("".join(lines))


def azimuth_label(az: float) -> str:
    return str(int(az)) if float(az).is_integer() else repr(float(az))


def read_feature_stack(directory) -> FeatureMapStack:
    """Directory of ``view_<azimuth>.csv`` files plus a ``stack.json`` sidecar.

    Each CSV holds ``4·H`` rows by ``W`` columns, the channels stacked
    vertically.
    """
    directory = Path(directory)
    try:
        meta = json.loads((directory / "stack.json").read_text())
    except FileNotFoundError:
        raise ShapeError(f"{directory}: missing stack.json") from None
    except json.JSONDecodeError as err:
        raise ParseError(f"stack.json: {err.msg}", err.lineno) from None
    try:
        h, w, ch = int(meta["height"]), int(meta["width"]), int(meta["channels"])
        azimuths = [float(a) for a in meta["azimuths"]]
    except (KeyError, TypeError, ValueError) as err:
        raise ShapeError(f"stack.json: malformed or missing field ({err})") from None
    if ch != CHANNELS:
        raise ShapeError(f"stack.json: channels must be {CHANNELS}, got {ch}")
    maps = []
    for az in azimuths:
        path = directory / f"view_{azimuth_label(az)}.csv"
        if not path.exists():
            raise ShapeError(f"missing view file {path.name}")
        m = read_matrix_csv(path)
        if m.shape != (ch * h, w):
            raise ShapeError(f"{path.name}: shape {m.shape} does not match sidecar {(ch * h, w)}")
        maps.append(m.reshape(ch, h, w))
    return FeatureMapStack(np.array(maps), tuple(azimuths))


def write_feature_stack(directory, stack: FeatureMapStack) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"height": stack.height, "width": stack.width, "channels": CHANNELS,
            "azimuths": list(stack.azimuths)}
    (directory / "stack.json").write_text(json.dumps(meta) + "\n")
    for az, fmap in zip(stack.azimuths, stack.maps):
        write_matrix_csv(directory / f"view_{azimuth_label(az)}.csv",
                         fmap.reshape(CHANNELS * stack.height, stack.width))


def read_trace_csv(path) -> list[tuple]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(int(r[0]), *map(float, r[1:])) for r in reader]
