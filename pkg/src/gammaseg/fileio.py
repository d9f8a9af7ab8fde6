"""Bit-exact file formats: binary netpbm images and report CSVs.

Only 8-bit binary PGM (P5) and PPM (P6) are accepted, so ingestion stays
dependency-free and byte-reproducible.  Images map to the unit-scaled field
on a square-cell grid with ``hx = hy = 1/max(nx, ny)``; masks round-trip
exactly through save + load + threshold.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .errors import TruncatedFileError, UnsupportedFormatError
from .grid import Grid, IndicatorField, MultiField

GAMMA_REPORT_HEADER = (
    "eps,mu,E_at_norm,E_limit,gap,l1_gap,tv_v,gl_over_tv,d_clp,"
    "data1,data2,grad1,grad2,gl"
)
TRACE_HEADER = "eps,mu,total,data1,data2,grad1,grad2,gl"


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in b"#":
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        elif c in b" \t\r\n":
            pos += 1
        else:
            break
    if pos >= n:
        raise TruncatedFileError("header ended early")
    start = pos
    while pos < n and data[pos] not in b" \t\r\n":
        pos += 1
    return data[start:pos], pos


def load_image(path) -> MultiField:
    """Read a binary PGM/PPM into a [0, 1]-scaled field on a unit-ish grid."""
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0)
    if magic == b"P5":
        m = 1
    elif magic == b"P6":
        m = 3
    else:
        raise UnsupportedFormatError(f"magic {magic!r}; only binary P5/P6 supported")
    tok, pos = _next_token(data, pos)
    width = int(tok)
    tok, pos = _next_token(data, pos)
    height = int(tok)
    tok, pos = _next_token(data, pos)
    maxval = int(tok)
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval {maxval}; only 8-bit (255) supported")
    pos += 1  # single whitespace byte before the payload
    need = width * height * m
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedFileError(
            f"payload has {len(payload)} of {need} bytes"
        )
    raw = np.frombuffer(payload, np.uint8).reshape(height, width, m)
    # image rows run top-down; grid rows run bottom-up
    vals = raw[::-1].astype(np.float64) / 255.0
    side = max(width, height)
    grid = Grid(nx=width, ny=height, hx=1.0 / side, hy=1.0 / side)
    return MultiField(grid, vals)


def save_mask(E: IndicatorField, path) -> None:
    """Write a mask as binary PGM with values {0, 255}."""
    h, w = E.mask.shape
    payload = np.where(E.mask[::-1], 255, 0).astype(np.uint8).tobytes()
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + payload)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_rows(path, header: str, rows) -> None:
    """CSV with shortest round-trip decimals, one dataclass row per line."""
    lines = [header]
    for r in rows:
        vals = dataclasses.astuple(r) if dataclasses.is_dataclass(r) else tuple(r)
        lines.append(",".join(_fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def write_report(report, path) -> None:
    """GammaReport rows under the fixed sweep header, in ladder order."""
    rows = [
        tuple(dataclasses.astuple(r))
        for r in report.rows
    ]
    write_rows(path, GAMMA_REPORT_HEADER, rows)
