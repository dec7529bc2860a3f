"""
Matrix files.

The text format is a header line ``n p`` followed by n rows of p
whitespace-separated numbers written with 17 significant digits, so a
write/read cycle is lossless. Files ending in ``.bin`` use a binary
variant: two little-endian int64 dimensions followed by the row-major
float64 entries.
"""

from pathlib import Path

import numpy as np


class MatrixFormatError(ValueError):
    """A matrix file is malformed."""


def _is_binary(path):
    return Path(path).suffix.lower() == ".bin"


def read_matrix(path):
    """
    Read a matrix file.

    Raises
    ------
    MatrixFormatError
        With a message naming the offending dimension when the header and
        the data disagree.
    """
    path = Path(path)
    if _is_binary(path):
        raw = path.read_bytes()
        if len(raw) < 16:
            raise MatrixFormatError(f"{path}: truncated header")
        n, p = (int(v) for v in np.frombuffer(raw[:16], dtype="<i8"))
        if n < 0 or p < 0:
            raise MatrixFormatError(f"{path}: negative dimension in header ({n}, {p})")
        data = np.frombuffer(raw[16:], dtype="<f8")
        if data.size != n * p:
            raise MatrixFormatError(f"{path}: header says n*p = {n}*{p} = {n * p} entries, found {data.size}")
        return data.reshape(n, p).copy()

    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise MatrixFormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 2:
        raise MatrixFormatError(f"{path}: header must be 'n p', got {lines[0]!r}")
    try:
        n, p = int(head[0]), int(head[1])
    except ValueError:
        raise MatrixFormatError(f"{path}: header must hold two integers, got {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != n:
        raise MatrixFormatError(f"{path}: header says n = {n} rows, found {len(rows)}")
    out = np.empty((n, p))
    for i, ln in enumerate(rows):
        parts = ln.split()
        if len(parts) != p:
            raise MatrixFormatError(f"{path}: row {i + 1} has {len(parts)} columns, header says p = {p}")
        try:
            out[i] = [float(v) for v in parts]
        except ValueError:
            raise MatrixFormatError(f"{path}: row {i + 1} holds a non-numeric entry") from None
    return out


def format_matrix(M):
    """Text form of a matrix (header plus rows, '%.17g')."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n, p = M.shape
    lines = [f"{n} {p}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in M]
    return "\n".join(lines) + "\n"


def write_matrix(path, M):
    """Write a matrix in the format implied by the file suffix."""
    path = Path(path)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if _is_binary(path):
        path.write_bytes(np.asarray(M.shape, dtype="<i8").tobytes() + np.ascontiguousarray(M, dtype="<f8").tobytes())
    else:
        path.write_text(format_matrix(M))
