"""Exact arithmetic and linear algebra over the ring Z_{2^64}.

Scalars are plain Python ints reduced with MASK64; a scalar is a unit iff it
is odd.  2x2 matrices are the workhorse of the sector cipher; n x n matrices
(numpy uint64, which wraps mod 2^64 natively) back the composite-transform
oracle and the key-recovery attack.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NotInvertible

MASK64 = (1 << 64) - 1
MODULUS = 1 << 64


class Mat2(NamedTuple):
    """2x2 matrix ((a, b), (c, d)) with entries in Z_{2^64}."""

    a: int
    b: int
    c: int
    d: int


MAT2_IDENTITY = Mat2(1, 0, 0, 1)


def scalar_inv(x: int) -> int:
    """Multiplicative inverse of an odd scalar mod 2^64."""
    if x & 1 == 0:
        raise NotInvertible(f"scalar {x} is even, not a unit mod 2^64")
    return pow(x, -1, MODULUS)


def mat2_mul(x: Mat2, y: Mat2) -> Mat2:
    return Mat2(
        (x.a * y.a + x.b * y.c) & MASK64,
        (x.a * y.b + x.b * y.d) & MASK64,
        (x.c * y.a + x.d * y.c) & MASK64,
        (x.c * y.b + x.d * y.d) & MASK64,
    )


def mat2_det(x: Mat2) -> int:
    return (x.a * x.d - x.b * x.c) & MASK64


def mat2_inv(x: Mat2) -> Mat2:
    """Inverse via the adjugate scaled by the inverse determinant."""
    det = mat2_det(x)
    s = scalar_inv(det)
    return Mat2(
        (x.d * s) & MASK64,
        (-x.b * s) & MASK64,
        (-x.c * s) & MASK64,
        (x.a * s) & MASK64,
    )


def mat2_is_involutory(x: Mat2) -> bool:
    return mat2_mul(x, x) == MAT2_IDENTITY


def gen_involutory(rand_a: int, rand_b: int) -> Mat2:
    """Involutory matrix [[a, b], [c, -a]] from two random words.

    b is forced odd so it is a unit; c = (1 - a^2) * b^-1 makes the square
    the identity.  The determinant is -a^2 - bc = -1, always odd.
    """
    a = rand_a & MASK64
    b = (rand_b | 1) & MASK64
    c = ((1 - a * a) * scalar_inv(b)) & MASK64
    return Mat2(a, b, c, (-a) & MASK64)


def matn(rows) -> np.ndarray:
    """Coerce nested ints to an n x n uint64 matrix."""
    m = np.array(rows, dtype=np.uint64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def matn_identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.uint64)


def matn_mul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape[1] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} @ {y.shape}")
    return (x.astype(np.uint64) @ y.astype(np.uint64)).astype(np.uint64)


def matn_vec(x: np.ndarray, v) -> list[int]:
    """Matrix times column vector; accepts and returns plain int sequences."""
    vec = np.asarray(v, dtype=np.uint64)
    if x.shape[1] != vec.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} @ {vec.shape}")
    return [int(w) for w in x.astype(np.uint64) @ vec]


def matn_inv(x: np.ndarray) -> np.ndarray:
    """Gauss-Jordan elimination mod 2^64.

    Pivots must be odd (units); the first at-or-below-diagonal row with an
    odd entry is swapped in, deterministically.  Failure to find such a row
    means the determinant is even.
    """
    n = x.shape[0]
    m = x.astype(np.uint64).copy()
    inv = matn_identity(n)
    for col in range(n):
        piv = -1
        for row in range(col, n):
            if int(m[row, col]) & 1:
                piv = row
                break
        if piv < 0:
            raise NotInvertible(f"no odd pivot in column {col}")
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            inv[[col, piv]] = inv[[piv, col]]
        s = np.uint64(scalar_inv(int(m[col, col])))
        m[col] *= s
        inv[col] *= s
        factor = m[:, col].copy()
        factor[col] = 0
        m -= np.outer(factor, m[col])
        inv -= np.outer(factor, inv[col])
    return inv


def random_invertible(n: int, rng) -> np.ndarray:
    """Random invertible matrix as L @ U with unit diagonals (odd on U)."""
    lo = matn_identity(n)
    up = matn_identity(n)
    for i in range(n):
        for j in range(i):
            lo[i, j] = rng.getrandbits(64)
        up[i, i] = rng.getrandbits(64) | 1
        for j in range(i + 1, n):
            up[i, j] = rng.getrandbits(64)
    return matn_mul(lo, up)
