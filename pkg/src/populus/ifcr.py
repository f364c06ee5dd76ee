"""Iterative encryption of the input-free computation result (IFCR).

The IFCR payload (master key + RT-PRN pool + cursor) is too large to protect
with a conventional block cipher at acceptable real-time cost, so it is
encrypted recursively: a payload of k > 9 sectors is sector-encrypted under a
fresh ephemeral key material (one master key + 2 PRNs per sector), and that
ephemeral material -- exactly 4000 + 16k bytes = ceil((16k+4000)/512) sectors
-- becomes the next payload.  The recursion contracts by roughly x32 per
level and bottoms out at k <= 9 sectors, which are AES-256-CBC encrypted
under SHA3-256(hash key || "ifcr-base") with a random IV.

Ephemeral randomness for level L comes from the keystream region starting at
word L << 44 (master key words first, then the per-sector pairs), so the
whole chain is regenerable from the user key; only the base IV is fresh.

Chain blob layout (little-endian):

    magic "PIFC" | version u16 | depth u16 | base IV 16B
    | depth x { k u32, j_offset u64 }         one entry per recursive level
    | level ciphertexts, outermost first      k*512 bytes each
    | base blob                               AES-CBC, rest of the blob

The base plaintext carries the only framing: magic "PKMT", version u16,
payload byte length u64, payload crc32 u32, inner length u32, then the
innermost key material, zero-padded to the AES block size.  Keeping the
frame inside the base (instead of around the outer payload) is what lets
every recursive level occupy exactly the sector count the size recurrence
predicts.
"""

from __future__ import annotations

import hashlib
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import BadBase, BadLength, CorruptChain, InvalidKey
from .keymgr import MASTER_KEY_BYTES, MasterKey, derive_temp_key, gen_master_key
from .keystream import HashKey, PrnStream
from .sectorcipher import (
    SECTOR_BYTES,
    decrypt_words,
    encrypt_words,
    sector_to_words,
    words_to_sector,
)

CHAIN_MAGIC = b"PIFC"
CHAIN_VERSION = 1
FRAME_MAGIC = b"PKMT"
FRAME_VERSION = 1
FRAME_BYTES = 4 + 2 + 8 + 4 + 4
BASE_CASE_SECTORS = 9
LEVEL_WORD_SHIFT = 44  # level L draws stream words from [L << 44, ...)
MAX_POOL_WORDS = (1 << LEVEL_WORD_SHIFT) - 250


@dataclass
class KeyMaterial:
    """Device master key, RT-PRN pool and the write cursor; the IFCR payload."""

    master: MasterKey
    pool: "np.ndarray"  # <u8 words; kept as an array so big pools stay compact
    cursor: int = 1

    def to_bytes(self) -> bytes:
        return (
            self.master.to_bytes()
            + np.asarray(self.pool, dtype="<u8").tobytes()
            + struct.pack("<Q", self.cursor)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "KeyMaterial":
        body = len(data) - MASTER_KEY_BYTES - 8
        if body < 0 or body % 8:
            raise CorruptChain(f"key material blob of {len(data)} bytes is malformed")
        d = body // 8
        master = MasterKey.from_bytes(data[:MASTER_KEY_BYTES])
        pool = np.frombuffer(data, dtype="<u8", offset=MASTER_KEY_BYTES, count=d).copy()
        (cursor,) = struct.unpack("<Q", data[-8:])
        return cls(master, pool, cursor)


def key_material_bytes(pool_words: int) -> int:
    """Serialized size of a device KeyMaterial with the given pool."""
    return MASTER_KEY_BYTES + 8 * pool_words + 8


def generate_key_material(stream: PrnStream, pool_words: int) -> KeyMaterial:
    master = gen_master_key(stream)
    return KeyMaterial(master, stream.words_array(250, pool_words), cursor=1)


def next_level_size(k: int) -> int:
    """Sector footprint of the key material protecting k sectors."""
    if k <= BASE_CASE_SECTORS:
        raise ValueError(f"recursion only continues for k > {BASE_CASE_SECTORS}, got {k}")
    return (16 * k + 4000 + SECTOR_BYTES - 1) // SECTOR_BYTES


def chain_level_sizes(n_sectors: int) -> list:
    """Sector count encrypted at each recursive level for an n-sector payload."""
    sizes = []
    k = n_sectors
    while k > BASE_CASE_SECTORS:
        sizes.append(k)
        k = next_level_size(k)
    return sizes


def chain_depth_for_sectors(n_sectors: int) -> int:
    return len(chain_level_sizes(n_sectors))


@dataclass
class IfcrLevel:
    k: int  # sectors encrypted at this level
    j_offset: int  # stream word index of the level's first pool word
    ciphertext: bytes


@dataclass
class IfcrChain:
    levels: list
    base_iv: bytes
    base_ct: bytes

    @property
    def depth(self) -> int:
        return len(self.levels)

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += CHAIN_MAGIC
        out += struct.pack("<HH", CHAIN_VERSION, self.depth)
        out += self.base_iv
        for lvl in self.levels:
            out += struct.pack("<IQ", lvl.k, lvl.j_offset)
        for lvl in self.levels:
            out += lvl.ciphertext
        out += self.base_ct
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "IfcrChain":
        if len(data) < 24 or data[:4] != CHAIN_MAGIC:
            raise CorruptChain("bad chain magic")
        version, depth = struct.unpack_from("<HH", data, 4)
        if version != CHAIN_VERSION:
            raise CorruptChain(f"unsupported chain version {version}")
        iv = data[8:24]
        pos = 24
        heads = []
        for _ in range(depth):
            if pos + 12 > len(data):
                raise CorruptChain("truncated level table")
            k, j_offset = struct.unpack_from("<IQ", data, pos)
            heads.append((k, j_offset))
            pos += 12
        levels = []
        for k, j_offset in heads:
            size = k * SECTOR_BYTES
            if pos + size > len(data):
                raise CorruptChain("truncated level ciphertext")
            levels.append(IfcrLevel(k, j_offset, data[pos : pos + size]))
            pos += size
        base_ct = data[pos:]
        if len(base_ct) == 0 or len(base_ct) % 16:
            raise CorruptChain("base blob missing or misaligned")
        return cls(levels, iv, base_ct)


def base_cipher_key(hash_key: HashKey) -> bytes:
    return hashlib.sha3_256(hash_key.bits + b"ifcr-base").digest()


def spn_base_encrypt(blob: bytes, key256: bytes, iv: bytes) -> bytes:
    if len(blob) % 16:
        raise BadLength(f"blob of {len(blob)} bytes is not block aligned")
    enc = Cipher(algorithms.AES(key256), modes.CBC(iv)).encryptor()
    return enc.update(blob) + enc.finalize()


def spn_base_decrypt(blob: bytes, key256: bytes, iv: bytes) -> bytes:
    if len(blob) == 0 or len(blob) % 16:
        raise BadLength(f"blob of {len(blob)} bytes is not block aligned")
    dec = Cipher(algorithms.AES(key256), modes.CBC(iv)).decryptor()
    return dec.update(blob) + dec.finalize()


def _sector_count(n_bytes: int) -> int:
    return (n_bytes + SECTOR_BYTES - 1) // SECTOR_BYTES


def _level_key_material(stream: PrnStream, level: int, k: int):
    base = level << LEVEL_WORD_SHIFT
    master = gen_master_key(stream, first_word=base)
    pool = stream.words_array(base + 2 * 125, 2 * k)
    return master, pool, base + 2 * 125


def _encrypt_sectors(padded: bytes, master: MasterKey, pool) -> bytes:
    out = bytearray()
    for s in range(0, len(padded), SECTOR_BYTES):
        j = s // SECTOR_BYTES
        key = derive_temp_key(master, int(pool[2 * j]), int(pool[2 * j + 1]))
        out += words_to_sector(encrypt_words(sector_to_words(padded[s : s + SECTOR_BYTES]), key))
    return bytes(out)


def _decrypt_sectors(ciphertext: bytes, master: MasterKey, pool) -> bytes:
    out = bytearray()
    for s in range(0, len(ciphertext), SECTOR_BYTES):
        j = s // SECTOR_BYTES
        key = derive_temp_key(master, int(pool[2 * j]), int(pool[2 * j + 1]))
        out += words_to_sector(decrypt_words(sector_to_words(ciphertext[s : s + SECTOR_BYTES]), key))
    return bytes(out)


def ifcr_encrypt(payload: bytes, hash_key: HashKey) -> IfcrChain:
    """Protect an opaque payload with the iterative scheme."""
    stream = PrnStream(hash_key)
    user_len = len(payload)
    user_crc = zlib.crc32(payload)
    levels = []
    cur = payload
    k = _sector_count(len(cur))
    level_no = 1
    while k > BASE_CASE_SECTORS:
        padded = cur.ljust(k * SECTOR_BYTES, b"\x00")
        master, pool, j_offset = _level_key_material(stream, level_no, k)
        levels.append(IfcrLevel(k, j_offset, _encrypt_sectors(padded, master, pool)))
        cur = master.to_bytes() + np.asarray(pool, dtype="<u8").tobytes()
        k = next_level_size(k)
        level_no += 1
    frame = FRAME_MAGIC + struct.pack("<HQII", FRAME_VERSION, user_len, user_crc, len(cur))
    blob = frame + cur
    if len(blob) % 16:
        blob += b"\x00" * (16 - len(blob) % 16)
    iv = os.urandom(16)
    return IfcrChain(levels, iv, spn_base_encrypt(blob, base_cipher_key(hash_key), iv))


def ifcr_decrypt(chain: IfcrChain, hash_key: HashKey) -> bytes:
    """Reverse the iteration: open the base, then walk the levels outward."""
    blob = spn_base_decrypt(chain.base_ct, base_cipher_key(hash_key), chain.base_iv)
    if len(blob) < FRAME_BYTES or blob[:4] != FRAME_MAGIC:
        raise BadBase("bad base frame magic")
    version, user_len, user_crc, inner_len = struct.unpack_from("<HQII", blob, 4)
    if version != FRAME_VERSION:
        raise BadBase(f"unsupported base frame version {version}")
    if FRAME_BYTES + inner_len > len(blob):
        raise BadBase("base frame length exceeds blob")
    inner = blob[FRAME_BYTES : FRAME_BYTES + inner_len]
    if chain.depth == 0:
        if inner_len != user_len:
            raise BadBase("depth-0 frame length mismatch")
        if zlib.crc32(inner) != user_crc:
            raise BadBase("payload checksum mismatch")
        return inner
    innermost_k = chain.levels[-1].k
    if inner_len != MASTER_KEY_BYTES + 16 * innermost_k:
        raise BadBase(
            f"innermost key material must be {MASTER_KEY_BYTES + 16 * innermost_k} bytes"
        )
    current = inner
    for lvl in reversed(chain.levels):
        need = MASTER_KEY_BYTES + 16 * lvl.k
        if len(current) < need:
            raise CorruptChain("level key material shorter than its sector count needs")
        try:
            master = MasterKey.from_bytes(current[:MASTER_KEY_BYTES])
        except InvalidKey as exc:
            raise CorruptChain(f"level key material invalid: {exc}") from exc
        pool = np.frombuffer(current, dtype="<u8", offset=MASTER_KEY_BYTES, count=2 * lvl.k)
        if len(lvl.ciphertext) != lvl.k * SECTOR_BYTES:
            raise CorruptChain("level ciphertext length mismatch")
        current = _decrypt_sectors(lvl.ciphertext, master, pool)
    if user_len > len(current):
        raise CorruptChain("recovered payload shorter than recorded length")
    payload = current[:user_len]
    if zlib.crc32(payload) != user_crc:
        raise CorruptChain("payload checksum mismatch")
    return payload
