"""Hash-key derivation and the deterministic Word stream feeding all keys.

An arbitrary-length user key is hashed with SHA3-384 and the first 320 bits
kept.  Those 320 bits key a Salsa20/12 stream: bytes 0..31 are the cipher
key, bytes 32..39 the nonce, and the 64-bit block counter walks the stream.
Word i of the stream is the little-endian u64 at byte offset 8*i.

Stream words are partitioned by index: [0, 250) feed master-key generation
(MK-PRNs, two words per involutory matrix), [250, 250+d) are the real-time
pool (RT-PRNs).  Iterative IFCR levels draw from disjoint high regions, one
per level tag (see ifcr).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyKey, IndexOutOfRange

HASH_KEY_BYTES = 40  # first 320 bits of SHA3-384
SALSA_ROUNDS = 12
MK_WORDS = 250  # 125 matrices x 2 words
MAX_WORD_INDEX = 1 << 58

_SIGMA = (0x61707865, 0x3320646E, 0x79622D32, 0x6B206574)  # "expand 32-byte k"
_TAU = (0x61707865, 0x3120646E, 0x79622D36, 0x6B206574)  # "expand 16-byte k"
_M32 = 0xFFFFFFFF


@dataclass(frozen=True)
class HashKey:
    bits: bytes

    def __post_init__(self):
        if len(self.bits) != HASH_KEY_BYTES:
            raise ValueError(f"hash key must be {HASH_KEY_BYTES} bytes")

    @property
    def cipher_key(self) -> bytes:
        return self.bits[:32]

    @property
    def nonce(self) -> bytes:
        return self.bits[32:40]


def derive_hash_key(user_key: bytes) -> HashKey:
    """SHA3-384 of the user key, truncated to the first 320 bits."""
    if len(user_key) == 0:
        raise EmptyKey("user key must be at least one byte")
    return HashKey(hashlib.sha3_384(user_key).digest()[:HASH_KEY_BYTES])


def _initial_state(key: bytes, nonce: bytes, block: int) -> list[int]:
    if len(key) == 32:
        c = _SIGMA
        k = struct.unpack("<8I", key)
    elif len(key) == 16:
        c = _TAU
        k = struct.unpack("<4I", key) * 2
    else:
        raise ValueError("key must be 16 or 32 bytes")
    n0, n1 = struct.unpack("<2I", nonce)
    b0 = block & _M32
    b1 = (block >> 32) & _M32
    return [
        c[0], k[0], k[1], k[2],
        k[3], c[1], n0, n1,
        b0, b1, c[2], k[4],
        k[5], k[6], k[7], c[3],
    ]


def salsa20_block(key: bytes, nonce: bytes, block: int, rounds: int = SALSA_ROUNDS) -> bytes:
    """One 64-byte Salsa20 keystream block (rounds must be even)."""
    x = _initial_state(key, nonce, block)
    s = list(x)
    for _ in range(rounds // 2):
        # column round
        for a, b, c, d in ((0, 4, 8, 12), (5, 9, 13, 1), (10, 14, 2, 6), (15, 3, 7, 11)):
            t = (s[a] + s[d]) & _M32
            s[b] ^= ((t << 7) | (t >> 25)) & _M32
            t = (s[b] + s[a]) & _M32
            s[c] ^= ((t << 9) | (t >> 23)) & _M32
            t = (s[c] + s[b]) & _M32
            s[d] ^= ((t << 13) | (t >> 19)) & _M32
            t = (s[d] + s[c]) & _M32
            s[a] ^= ((t << 18) | (t >> 14)) & _M32
        # row round
        for a, b, c, d in ((0, 1, 2, 3), (5, 6, 7, 4), (10, 11, 8, 9), (15, 12, 13, 14)):
            t = (s[a] + s[d]) & _M32
            s[b] ^= ((t << 7) | (t >> 25)) & _M32
            t = (s[b] + s[a]) & _M32
            s[c] ^= ((t << 9) | (t >> 23)) & _M32
            t = (s[c] + s[b]) & _M32
            s[d] ^= ((t << 13) | (t >> 19)) & _M32
            t = (s[d] + s[c]) & _M32
            s[a] ^= ((t << 18) | (t >> 14)) & _M32
    return struct.pack("<16I", *((s[i] + x[i]) & _M32 for i in range(16)))


_QUARTER_SCHEDULE = (
    ((0, 4, 8, 12), (5, 9, 13, 1), (10, 14, 2, 6), (15, 3, 7, 11)),
    ((0, 1, 2, 3), (5, 6, 7, 4), (10, 11, 8, 9), (15, 12, 13, 14)),
)


def salsa20_blocks(key: bytes, nonce: bytes, first_block: int, count: int,
                   rounds: int = SALSA_ROUNDS) -> bytes:
    """`count` consecutive keystream blocks, vectorized across blocks."""
    if count <= 0:
        return b""
    base = _initial_state(key, nonce, 0)
    counters = np.arange(first_block, first_block + count, dtype=np.uint64)
    x = np.empty((16, count), dtype=np.uint32)
    for i, w in enumerate(base):
        x[i] = w
    x[8] = (counters & np.uint64(_M32)).astype(np.uint32)
    x[9] = (counters >> np.uint64(32)).astype(np.uint32)
    s = x.copy()
    for _ in range(rounds // 2):
        for quarters in _QUARTER_SCHEDULE:
            for a, b, c, d in quarters:
                t = s[a] + s[d]
                s[b] ^= (t << np.uint32(7)) | (t >> np.uint32(25))
                t = s[b] + s[a]
                s[c] ^= (t << np.uint32(9)) | (t >> np.uint32(23))
                t = s[c] + s[b]
                s[d] ^= (t << np.uint32(13)) | (t >> np.uint32(19))
                t = s[d] + s[c]
                s[a] ^= (t << np.uint32(18)) | (t >> np.uint32(14))
    s += x
    # per-block serialization is little-endian u32 in state order
    return s.T.astype("<u4").tobytes()


class PrnStream:
    """Random-access view of the Salsa20/12 word stream for one hash key.

    Pure function of (hash key, index); a small block cache makes the
    sequential allocation pattern cheap without any shared cursor.
    """

    _CACHE_BLOCKS = 64

    def __init__(self, hash_key: HashKey):
        self.hash_key = hash_key
        self._cache: dict[int, bytes] = {}

    def _block(self, number: int) -> bytes:
        blk = self._cache.get(number)
        if blk is None:
            blk = salsa20_block(self.hash_key.cipher_key, self.hash_key.nonce, number)
            if len(self._cache) >= self._CACHE_BLOCKS:
                self._cache.pop(next(iter(self._cache)))
            self._cache[number] = blk
        return blk

    def word(self, index: int) -> int:
        if not 0 <= index < MAX_WORD_INDEX:
            raise IndexOutOfRange(f"stream word index {index} out of range")
        blk = self._block(index >> 3)
        off = (index & 7) * 8
        return int.from_bytes(blk[off:off + 8], "little")

    def words_array(self, start: int, count: int) -> np.ndarray:
        """Bulk fetch [start, start+count) as a <u8 array (vectorized core)."""
        if count == 0:
            return np.empty(0, dtype="<u8")
        if not (0 <= start and start + count <= MAX_WORD_INDEX):
            raise IndexOutOfRange(f"stream words [{start}, {start + count}) out of range")
        first_block = start >> 3
        last_block = (start + count - 1) >> 3
        raw = salsa20_blocks(self.hash_key.cipher_key, self.hash_key.nonce,
                             first_block, last_block - first_block + 1)
        off = (start - (first_block << 3)) * 8
        return np.frombuffer(raw, dtype="<u8", offset=off, count=count)

    def words(self, start: int, count: int) -> list[int]:
        return [int(w) for w in self.words_array(start, count)]

    def mk(self, i: int) -> int:
        """MK-PRN i, the master-key words at stream indices [0, 250)."""
        if not 0 <= i < MK_WORDS:
            raise IndexOutOfRange(f"MK-PRN index {i} outside [0, {MK_WORDS})")
        return self.word(i)

    def rt(self, i: int) -> int:
        """RT-PRN i (0-based), stream index 250 + i."""
        if i < 0:
            raise IndexOutOfRange(f"RT-PRN index {i} negative")
        return self.word(MK_WORDS + i)
