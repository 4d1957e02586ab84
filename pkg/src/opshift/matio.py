"""Shared matrix text format.

Line 1 is ``hermitian <n>`` or ``dense <rows> <cols>``; the remaining
lines hold whitespace-separated ``re im`` pairs in row-major order,
written with 17 significant digits.  Readers reject malformed files with
the offending line number.
"""

from __future__ import annotations

import os

import numpy as np

from .core import HermitianOperator
from .errors import MatrixFormatError

__all__ = ["write_matrix", "read_matrix"]


def write_matrix(path, matrix, hermitian: bool | None = None):
    """Write a matrix; ``hermitian=None`` auto-detects from the entries."""
    m = np.atleast_2d(np.asarray(getattr(matrix, "matrix", matrix), dtype=np.complex128))
    if hermitian is None:
        hermitian = isinstance(matrix, HermitianOperator) or (
            m.shape[0] == m.shape[1]
            and m.size > 0
            and np.max(np.abs(m - m.conj().T)) <= 1e-12
        )
    rows, cols = m.shape
    with open(path, "w") as f:
        if hermitian:
            if rows != cols:
                raise ValueError("hermitian header requires a square matrix")
            f.write(f"hermitian {rows}\n")
        else:
            f.write(f"dense {rows} {cols}\n")
        for i in range(rows):
            f.write(" ".join(f"{v.real:.17e} {v.imag:.17e}" for v in m[i]) + "\n")


def read_matrix(path):
    """Read a matrix file; returns HermitianOperator or a dense ndarray."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise MatrixFormatError(f"{os.fspath(path)}: line 1: empty file")
    head = lines[0].split()
    if head and head[0] == "hermitian" and len(head) == 2:
        try:
            rows = cols = int(head[1])
        except ValueError:
            raise MatrixFormatError(f"line 1: bad dimension {head[1]!r}") from None
        hermitian = True
    elif head and head[0] == "dense" and len(head) == 3:
        try:
            rows, cols = int(head[1]), int(head[2])
        except ValueError:
            raise MatrixFormatError(f"line 1: bad dimensions {head[1:]!r}") from None
        hermitian = False
    else:
        raise MatrixFormatError(f"line 1: expected 'hermitian <n>' or 'dense <rows> <cols>', got {lines[0]!r}")
    if rows < 0 or cols < 0:
        raise MatrixFormatError("line 1: dimensions must be nonnegative")

    expected = 2 * rows * cols
    values = []
    last_line = 1
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        last_line = lineno
        if len(values) + len(tokens) > expected:
            raise MatrixFormatError(
                f"line {lineno}: too many values (expected {expected} for shape {rows}x{cols})"
            )
        for tok in tokens:
            try:
                values.append(float(tok))
            except ValueError:
                raise MatrixFormatError(f"line {lineno}: invalid numeric token {tok!r}") from None
    if len(values) % 2 != 0:
        raise MatrixFormatError(f"line {last_line}: odd value count, incomplete re/im pair")
    if len(values) != expected:
        raise MatrixFormatError(
            f"line {last_line}: expected {expected} values for shape {rows}x{cols}, found {len(values)}"
        )
    flat = np.asarray(values).reshape(-1, 2)
    m = (flat[:, 0] + 1j * flat[:, 1]).reshape(rows, cols)
    if hermitian:
        try:
            return HermitianOperator(m)
        except ValueError as exc:
            raise MatrixFormatError(f"line 1: header says hermitian but {exc}") from None
    return m
