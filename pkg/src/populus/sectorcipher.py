"""Transparent 512-byte sector encryption as 125 butterfly rounds.

A sector is 64 little-endian words.  Round i multiplies one adjacent word
pair by the round's 2x2 matrix: the pair starts at word i for i <= 63, then
walks back down at 126-i, so the window sweeps (1,2)..(63,64)..(1,2).  This
equals multiplying by the sparse block matrix with the 2x2 block at offset
62-|63-i| and identities elsewhere; composing all 125 gives one dense 64x64
transform, which the dense helpers below build as an equivalence oracle and
as the deliberately-slow diagnostic path.

Per sector the butterfly costs 500 multiplies + 250 additions, plus 128
word transfers (64 loads, 64 stores).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .keymgr import TempKey
from .modring import MASK64, Mat2, matn_identity, matn_mul

SECTOR_BYTES = 512
SECTOR_WORDS = 64
SECTOR_ROUNDS = 125

_schedules: dict[int, tuple[int, ...]] = {}


def butterfly_schedule(n_words: int) -> tuple[int, ...]:
    """Zero-based start position of the active pair, per round.

    A width-n sector takes 2*(n-1)-1 rounds; the pair window ascends to the
    top pair and descends back to the bottom.
    """
    sched = _schedules.get(n_words)
    if sched is None:
        mid = n_words - 1
        sched = tuple(
            (i if i <= mid else 2 * mid - i) - 1 for i in range(1, 2 * mid)
        )
        _schedules[n_words] = sched
    return sched


def rounds_for_width(n_words: int) -> int:
    return 2 * (n_words - 1) - 1


def sector_to_words(sector: bytes) -> list[int]:
    if len(sector) != SECTOR_BYTES:
        raise ValueError(f"sector must be {SECTOR_BYTES} bytes, got {len(sector)}")
    return list(struct.unpack(f"<{SECTOR_WORDS}Q", sector))


def words_to_sector(words) -> bytes:
    return struct.pack(f"<{SECTOR_WORDS}Q", *words)


def _apply(words, mats) -> list[int]:
    b = list(words)
    sched = butterfly_schedule(len(b))
    if len(mats) != len(sched):
        raise ValueError(f"{len(b)} words need {len(sched)} round matrices, got {len(mats)}")
    for s, (m11, m12, m21, m22) in zip(sched, mats):
        x = b[s]
        y = b[s + 1]
        b[s] = (x * m11 + y * m12) & MASK64
        b[s + 1] = (x * m21 + y * m22) & MASK64
    return b


def encrypt_words(words, key: TempKey) -> list[int]:
    return _apply(words, key.mats)


def decrypt_words(words, key: TempKey) -> list[int]:
    """Inverse rounds in reverse order on the same positional schedule."""
    return _apply(words, key.inverse_mats_reversed())


def encrypt_sector(sector: bytes, key: TempKey) -> bytes:
    return words_to_sector(encrypt_words(sector_to_words(sector), key))


def decrypt_sector(sector: bytes, key: TempKey) -> bytes:
    return words_to_sector(decrypt_words(sector_to_words(sector), key))


@dataclass
class OpCount:
    multiplies: int = 0
    additions: int = 0
    word_io: int = 0

    @property
    def arithmetic(self) -> int:
        return self.multiplies + self.additions

    @property
    def total(self) -> int:
        return self.multiplies + self.additions + self.word_io

    def __add__(self, other: "OpCount") -> "OpCount":
        return OpCount(
            self.multiplies + other.multiplies,
            self.additions + other.additions,
            self.word_io + other.word_io,
        )


def _apply_counted(words, mats, ops: OpCount) -> list[int]:
    b = list(words)
    ops.word_io += len(b)
    for s, (m11, m12, m21, m22) in zip(butterfly_schedule(len(b)), mats):
        x = b[s]
        y = b[s + 1]
        b[s] = (x * m11 + y * m12) & MASK64
        ops.multiplies += 2
        ops.additions += 1
        b[s + 1] = (x * m21 + y * m22) & MASK64
        ops.multiplies += 2
        ops.additions += 1
    ops.word_io += len(b)
    return b


def encrypt_words_counted(words, key: TempKey, ops: OpCount) -> list[int]:
    return _apply_counted(words, key.mats, ops)


def decrypt_words_counted(words, key: TempKey, ops: OpCount) -> list[int]:
    return _apply_counted(words, key.inverse_mats_reversed(), ops)


def count_ops(op: str = "encrypt") -> OpCount:
    """Instrumented operation count for one sector (key inversion excluded)."""
    key = TempKey([Mat2(1, 0, 0, 1)] * SECTOR_ROUNDS, _validated=True)
    ops = OpCount()
    if op == "encrypt":
        encrypt_words_counted([0] * SECTOR_WORDS, key, ops)
    elif op == "decrypt":
        decrypt_words_counted([0] * SECTOR_WORDS, key, ops)
    else:
        raise ValueError(f"op must be 'encrypt' or 'decrypt', got {op!r}")
    return ops


def dense_round_matrix(mat: Mat2, start: int, n_words: int = SECTOR_WORDS) -> np.ndarray:
    """The sparse round as an explicit n x n block matrix."""
    h = matn_identity(n_words)
    h[start, start] = mat.a
    h[start, start + 1] = mat.b
    h[start + 1, start] = mat.c
    h[start + 1, start + 1] = mat.d
    return h


def dense_composite(mats, n_words: int = SECTOR_WORDS) -> np.ndarray:
    """Product of all round matrices, last round leftmost."""
    acc = matn_identity(n_words)
    for start, mat in zip(butterfly_schedule(n_words), mats):
        acc = matn_mul(dense_round_matrix(mat, start, n_words), acc)
    return acc


def dense_encrypt_counted(matrix, words, ops: OpCount) -> list[int]:
    """Naive dense matrix-vector product; the diagnostic 8256-op path."""
    n = len(words)
    ops.word_io += n
    out = []
    for r in range(n):
        row = matrix[r]
        acc = int(row[0]) * words[0] & MASK64
        ops.multiplies += 1
        for c in range(1, n):
            acc = (acc + int(row[c]) * words[c]) & MASK64
            ops.multiplies += 1
            ops.additions += 1
        out.append(acc)
    ops.word_io += n
    return out
