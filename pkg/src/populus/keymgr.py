"""Master key, per-write temporary keys, and RT-PRN allocation.

The master key is 125 involutory 2x2 matrices (4000 bytes).  A temporary
key shares 122 of them and rewrites rounds 1, 63 and 125 from one fresh
RT-PRN pair: each entry becomes 2*(u XOR x) + (u mod 2), which preserves
entry parity and therefore determinant parity, so every temporary key stays
invertible.  One pair serves exactly one write; a global counter j hands
pairs out and a per-sector table remembers which j encrypted each sector.
"""

from __future__ import annotations

import struct

from .errors import IndexOutOfRange, InvalidKey, NeverWritten, PoolExhausted
from .modring import MASK64, Mat2, gen_involutory, mat2_inv

MATRIX_COUNT = 125
MASTER_KEY_BYTES = MATRIX_COUNT * 4 * 8  # 4000
MODIFIED_ROUNDS = (0, 62, 124)  # rounds 1, 63, 125, zero-based
PRN_BYTES_PER_WRITE = 16  # one (R_odd, R_even) pair


def _odd_det(m: Mat2) -> bool:
    return ((m.a & m.d) ^ (m.b & m.c)) & 1 == 1


class MasterKey:
    """125 involutory matrices shared by every temporary key."""

    __slots__ = ("mats", "_inv")

    def __init__(self, mats):
        mats = list(mats)
        if len(mats) != MATRIX_COUNT:
            raise InvalidKey(f"master key needs {MATRIX_COUNT} matrices, got {len(mats)}")
        for i, m in enumerate(mats):
            if not _odd_det(m):
                raise InvalidKey(f"master matrix {i + 1} has even determinant")
        self.mats = mats
        self._inv = None

    def inverse_mats(self) -> list[Mat2]:
        if self._inv is None:
            self._inv = [mat2_inv(m) for m in self.mats]
        return self._inv

    def to_bytes(self) -> bytes:
        flat = []
        for m in self.mats:
            flat.extend(m)
        return struct.pack(f"<{MATRIX_COUNT * 4}Q", *flat)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MasterKey":
        if len(data) != MASTER_KEY_BYTES:
            raise InvalidKey(f"master key blob must be {MASTER_KEY_BYTES} bytes")
        flat = struct.unpack(f"<{MATRIX_COUNT * 4}Q", data)
        return cls(Mat2(*flat[i : i + 4]) for i in range(0, len(flat), 4))


def gen_master_key(stream, first_word: int = 0) -> MasterKey:
    """125 involutory matrices from consecutive word pairs at first_word.

    The device master key uses words [0, 250); iterative IFCR levels pass
    their own region offset.
    """
    ws = stream.words(first_word, 2 * MATRIX_COUNT)
    return MasterKey(gen_involutory(ws[2 * i], ws[2 * i + 1]) for i in range(MATRIX_COUNT))


class TempKey:
    """One write's 125 round matrices, with inverses cached for the read path."""

    __slots__ = ("mats", "_inv", "_inv_reversed")

    def __init__(self, mats, inv_mats=None, _validated=False):
        mats = list(mats)
        if not _validated:
            for i, m in enumerate(mats):
                if not _odd_det(m):
                    raise InvalidKey(f"round matrix {i + 1} has even determinant")
        self.mats = mats
        self._inv = list(inv_mats) if inv_mats is not None else None
        self._inv_reversed = None

    def inverse_mats(self) -> list[Mat2]:
        if self._inv is None:
            self._inv = [mat2_inv(m) for m in self.mats]
        return self._inv

    def inverse_mats_reversed(self) -> list[Mat2]:
        if self._inv_reversed is None:
            self._inv_reversed = list(reversed(self.inverse_mats()))
        return self._inv_reversed


def _mix(u: int, x: int) -> int:
    return (2 * (u ^ x) + (u & 1)) & MASK64


def derive_temp_key(master: MasterKey, r_odd: int, r_even: int) -> TempKey:
    """Temporary key for one write from the master key and one RT-PRN pair."""
    mats = list(master.mats)
    inv = list(master.inverse_mats())
    for idx, x in zip(MODIFIED_ROUNDS, (r_odd, r_odd ^ r_even, r_even)):
        u = mats[idx]
        m = Mat2(_mix(u.a, x), _mix(u.b, x), _mix(u.c, x), _mix(u.d, x))
        mats[idx] = m
        inv[idx] = mat2_inv(m)
    return TempKey(mats, inv, _validated=True)


class WordPool:
    """RT-PRN source backed by an in-memory word sequence (decrypted IFCR pool)."""

    def __init__(self, words):
        self._words = words

    def __len__(self):
        return len(self._words)

    def rt(self, i: int) -> int:
        if not 0 <= i < len(self._words):
            raise IndexOutOfRange(f"RT-PRN index {i} outside pool of {len(self._words)}")
        return int(self._words[i])


class KeyAllocator:
    """Single-use pair allocation: j-th write consumes (R_{2j-1}, R_{2j}).

    next_j is 1-based; sector_j maps sector index to the j recorded at its
    last write.  Mutation requires externally serialized access.
    """

    def __init__(self, pool_words: int, next_j: int = 1, sector_j: dict | None = None):
        self.pool_words = pool_words
        self.next_j = next_j
        self.sector_j = {} if sector_j is None else sector_j

    def allocate_write_key(self, sector: int, rt_source, master: MasterKey) -> TempKey:
        j = self.next_j
        if 2 * j - 1 > self.pool_words:
            raise PoolExhausted(
                f"RT-PRN pool of {self.pool_words} words exhausted at write {j}; "
                "re-provision the device"
            )
        r_odd = rt_source.rt(2 * j - 2)
        r_even = rt_source.rt(2 * j - 1)
        self.sector_j[sector] = j
        self.next_j = j + 1
        return derive_temp_key(master, r_odd, r_even)

    def lookup_read_key(self, sector: int, rt_source, master: MasterKey) -> TempKey:
        j = self.sector_j.get(sector)
        if j is None:
            raise NeverWritten(f"sector {sector} has never been written")
        return derive_temp_key(master, rt_source.rt(2 * j - 2), rt_source.rt(2 * j - 1))
