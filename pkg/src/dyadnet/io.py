"""Long-format CSV ingestion and export.

One row per (layer, sender, receiver) with columns ``layer`` (optional),
``sender``, ``receiver``, ``y`` and any number of numeric covariates.
Labels are mapped to dense ids in order of first appearance.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from dyadnet.core import RelationalDataset
from dyadnet.errors import DimensionError, IncompleteDataError

__all__ = ["ParseError", "LabeledDataset", "read_long_csv", "parse_long_csv", "write_long_csv"]

_KEY_COLUMNS = ("layer", "sender", "receiver", "y")
_NA_TOKENS = {"", "na", "nan", "null", "none", "n/a", "."}


class ParseError(ValueError):
    """Malformed CSV input."""


@dataclass(frozen=True)
class LabeledDataset:
    dataset: RelationalDataset
    actors: tuple
    layers: tuple


def _number(token: str, line: int, col: str) -> float:
    if token.strip().lower() in _NA_TOKENS:
        raise IncompleteDataError(f"line {line}: missing value in column {col!r}")
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"line {line}: column {col!r} is not numeric: {token!r}") from None
    if not math.isfinite(v):
        raise IncompleteDataError(f"line {line}: non-finite value in column {col!r}")
    return v


def parse_long_csv(text: str, directed: bool = True, atol: float = 1e-12) -> LabeledDataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty input") from None
    missing = [c for c in ("sender", "receiver", "y") if c not in header]
    if missing:
        raise ParseError(f"header lacks required columns {missing}")
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header")
    cov_names = [h for h in header if h not in _KEY_COLUMNS]
    if not cov_names:
        raise ParseError("no covariate columns")
    pos = {h: k for k, h in enumerate(header)}
    actors: dict[str, int] = {}
    layers: dict[str, int] = {}
    records = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        layer = row[pos["layer"]].strip() if "layer" in pos else "0"
        s, r = row[pos["sender"]].strip(), row[pos["receiver"]].strip()
        if not s or not r or (not layer and "layer" in pos):
            raise IncompleteDataError(f"line {line}: empty label")
        if s == r:
            raise ParseError(f"line {line}: sender equals receiver ({s!r})")
        layers.setdefault(layer, len(layers))
        i = actors.setdefault(s, len(actors))
        j = actors.setdefault(r, len(actors))
        vals = np.array([_number(row[pos["y"]], line, "y")]
                        + [_number(row[pos[c]], line, c) for c in cov_names])
        key = (layers[layer], i, j)
        if key in records:
            raise ParseError(f"line {line}: duplicate record for {(layer, s, r)}")
        if not directed:
            mirror = (layers[layer], j, i)
            if mirror in records:
                if not np.allclose(records[mirror], vals, rtol=0, atol=atol):
                    raise DimensionError(f"line {line}: inconsistent symmetric duplicate {(layer, s, r)}")
                continue
        records[key] = vals
    n, R, p = len(actors), len(layers), len(cov_names)
    if n < 2:
        raise IncompleteDataError("need at least two actors")
    data = np.full((R, n, n, p + 1), np.nan)
    for (l, i, j), v in records.items():
        data[l, i, j] = v
        if not directed:
            data[l, j, i] = v
    off = ~np.eye(n, dtype=bool)
    if np.isnan(data[:, off]).any():
        l, i, j = np.argwhere(np.isnan(data[..., 0]) & off)[0]
        a, lab = list(actors), list(layers)
        raise IncompleteDataError(
            f"incomplete array: no record for layer {lab[l]!r}, {a[i]!r} -> {a[j]!r}"
        )
    ds = RelationalDataset.from_arrays(data[..., 0], data[..., 1:], directed, tuple(cov_names))
    return LabeledDataset(ds, tuple(actors), tuple(layers))


def read_long_csv(path, directed: bool = True) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_long_csv(fh.read(), directed)


def write_long_csv(data: LabeledDataset, path=None) -> str:
    """Serialise to long format (one row per stored dyad); returns the text."""
    ds = data.dataset
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "sender", "receiver", "y", *ds.names])
    for (i, j, r), y, x in zip(ds.dyads, ds.y, ds.X):
        w.writerow([data.layers[r], data.actors[i], data.actors[j], repr(float(y)),
                    *(repr(float(v)) for v in x)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text
