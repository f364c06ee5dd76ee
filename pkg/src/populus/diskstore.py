"""File-backed virtual disk of 512-byte sectors with encrypt-on-write.

Image layout (little-endian):

    0   magic "PPLS"
    4   version u16
    6   N u64            sector count
    14  d u64            RT-PRN pool words
    22  cursor u64       next unused write counter j
    30  chain_len u64
    38  IFCR chain blob
    ..  sector->j table  N x u64, 0 = never written
    ..  header crc32 u32 over everything before it
    pad to the next 4096 boundary
    sector region        N x 512 bytes of ciphertext

Metadata durability uses a sidecar redo journal ``<image>.journal``: a write
appends {sector, j, ciphertext, crc} there before touching the image, and
the header (cursor + table + checksum) is only rewritten at checkpoints.
Opening an image replays every complete, crc-valid journal record and
discards a torn tail, so a crash between journal append and header commit
recovers the write, while a crash mid-append leaves the exact pre-write
state.  The journal is bound to its image by the chain's base IV.
"""

from __future__ import annotations

import fcntl
import os
import struct
import zlib

from .errors import InvalidGeometry, IoError, NeverWritten, PoolExhausted
from .ifcr import (
    MAX_POOL_WORDS,
    IfcrChain,
    KeyMaterial,
    generate_key_material,
    ifcr_decrypt,
    ifcr_encrypt,
)
from .keymgr import KeyAllocator, WordPool
from .keystream import PrnStream, derive_hash_key
from .sectorcipher import (
    SECTOR_BYTES,
    decrypt_words,
    encrypt_words,
    sector_to_words,
    words_to_sector,
)

IMAGE_MAGIC = b"PPLS"
IMAGE_VERSION = 1
JOURNAL_MAGIC = b"PJNL"
JOURNAL_VERSION = 1
JOURNAL_HEADER_BYTES = 4 + 2 + 16
JOURNAL_RECORD_BYTES = 8 + 8 + SECTOR_BYTES + 4
_FIXED_HEADER = 38  # magic..chain_len
_ALIGN = 4096


def _sector_offset(header_size: int) -> int:
    return (header_size + _ALIGN - 1) // _ALIGN * _ALIGN


class DiskImage:
    """One open image; a single writer at a time (advisory flock)."""

    CHECKPOINT_INTERVAL = 1024

    def __init__(self):
        raise TypeError("use DiskImage.create() or DiskImage.open()")

    @classmethod
    def _blank(cls) -> "DiskImage":
        self = object.__new__(cls)
        self._f = None
        self._jf = None
        self._readonly = False
        self._overlay = {}
        self._dirty = 0
        return self

    # -- construction ------------------------------------------------------

    @classmethod
    def create(cls, path: str, user_key: bytes, n_sectors: int, pool_words: int) -> "DiskImage":
        """Initialize a fresh image: key material, IFCR chain, zeroed sectors."""
        if n_sectors < 1:
            raise InvalidGeometry(f"need at least one sector, got {n_sectors}")
        if pool_words < 2 or pool_words % 2:
            raise InvalidGeometry(f"pool must be a positive even word count, got {pool_words}")
        if pool_words > MAX_POOL_WORDS:
            raise InvalidGeometry(f"pool of {pool_words} words collides with IFCR level regions")
        hash_key = derive_hash_key(user_key)
        km = generate_key_material(PrnStream(hash_key), pool_words)
        blob = ifcr_encrypt(km.to_bytes(), hash_key).to_bytes()

        header = bytearray(_FIXED_HEADER + len(blob) + 8 * n_sectors + 4)
        header[0:4] = IMAGE_MAGIC
        struct.pack_into("<H", header, 4, IMAGE_VERSION)
        struct.pack_into("<QQQQ", header, 6, n_sectors, pool_words, 1, len(blob))
        header[_FIXED_HEADER : _FIXED_HEADER + len(blob)] = blob
        struct.pack_into("<I", header, len(header) - 4, zlib.crc32(header[:-4]))

        try:
            with open(path, "wb") as f:
                f.write(header)
                f.truncate(_sector_offset(len(header)) + SECTOR_BYTES * n_sectors)
        except OSError as exc:
            raise IoError(f"cannot create image at {path}: {exc}") from exc
        return cls.open(path, user_key)

    @classmethod
    def open(cls, path: str, user_key: bytes, readonly: bool = False) -> "DiskImage":
        self = cls._blank()
        self._path = path
        self._readonly = readonly
        try:
            self._f = open(path, "rb" if readonly else "r+b")
        except OSError as exc:
            raise IoError(f"cannot open image {path}: {exc}") from exc
        try:
            fcntl.flock(self._f, (fcntl.LOCK_SH if readonly else fcntl.LOCK_EX) | fcntl.LOCK_NB)
        except OSError as exc:
            self._f.close()
            raise IoError(f"image {path} is locked by another process: {exc}") from exc
        try:
            self._load(user_key)
        except Exception:
            self._f.close()
            raise
        return self

    def _load(self, user_key: bytes):
        f = self._f
        f.seek(0)
        fixed = f.read(_FIXED_HEADER)
        if len(fixed) != _FIXED_HEADER or fixed[:4] != IMAGE_MAGIC:
            raise IoError("not a populus image (bad magic)")
        (version,) = struct.unpack_from("<H", fixed, 4)
        if version != IMAGE_VERSION:
            raise IoError(f"unsupported image version {version}")
        n, d, cursor, chain_len = struct.unpack_from("<QQQQ", fixed, 6)
        rest = f.read(chain_len + 8 * n + 4)
        if len(rest) != chain_len + 8 * n + 4:
            raise IoError("truncated image header")
        header = bytearray(fixed + rest)
        (stored_crc,) = struct.unpack_from("<I", header, len(header) - 4)
        if stored_crc != zlib.crc32(header[:-4]):
            raise IoError("header checksum mismatch")

        hash_key = derive_hash_key(user_key)
        chain = IfcrChain.from_bytes(bytes(header[_FIXED_HEADER : _FIXED_HEADER + chain_len]))
        km = KeyMaterial.from_bytes(ifcr_decrypt(chain, hash_key))
        if len(km.pool) != d:
            raise IoError("pool size disagrees with image header")

        table_off = _FIXED_HEADER + chain_len
        table = struct.unpack_from(f"<{n}Q", header, table_off)
        sector_j = {i: j for i, j in enumerate(table) if j}

        self._header = header
        self._table_off = table_off
        self._sector_off = _sector_offset(len(header))
        self.n_sectors = n
        self.pool_words = d
        self._km = km
        self._pool = WordPool(km.pool)
        self._alloc = KeyAllocator(d, next_j=cursor, sector_j=sector_j)
        self._base_iv = chain.base_iv
        self.journal_path = self._path + ".journal"
        self._recover_journal()

    # -- journal -----------------------------------------------------------

    def _journal_header(self) -> bytes:
        return JOURNAL_MAGIC + struct.pack("<H", JOURNAL_VERSION) + self._base_iv

    def _recover_journal(self):
        try:
            with open(self.journal_path, "rb") as jf:
                raw = jf.read()
        except FileNotFoundError:
            raw = b""
        except OSError as exc:
            raise IoError(f"cannot read journal: {exc}") from exc
        records = []
        if raw[:JOURNAL_HEADER_BYTES] == self._journal_header():
            pos = JOURNAL_HEADER_BYTES
            while pos + JOURNAL_RECORD_BYTES <= len(raw):
                rec = raw[pos : pos + JOURNAL_RECORD_BYTES]
                (crc,) = struct.unpack_from("<I", rec, JOURNAL_RECORD_BYTES - 4)
                if crc != zlib.crc32(rec[:-4]):
                    break  # torn or corrupt tail: everything after is discarded
                sector, j = struct.unpack_from("<QQ", rec, 0)
                records.append((sector, j, rec[16 : 16 + SECTOR_BYTES]))
                pos += JOURNAL_RECORD_BYTES
        if self._readonly:
            for sector, j, ct in records:
                self._overlay[sector] = ct
                self._alloc.sector_j[sector] = j
                self._alloc.next_j = max(self._alloc.next_j, j + 1)
            return
        for sector, j, ct in records:
            self._apply(sector, j, ct)
        try:
            self._jf = open(self.journal_path, "r+b" if os.path.exists(self.journal_path) else "w+b")
        except OSError as exc:
            raise IoError(f"cannot open journal: {exc}") from exc
        self._checkpoint()

    def _journal_append(self, sector: int, j: int, ciphertext: bytes):
        body = struct.pack("<QQ", sector, j) + ciphertext
        rec = body + struct.pack("<I", zlib.crc32(body))
        self._jf.seek(0, os.SEEK_END)
        self._jf.write(rec)
        self._jf.flush()

    # -- state transitions -------------------------------------------------

    def _apply(self, sector: int, j: int, ciphertext: bytes):
        self._f.seek(self._sector_off + SECTOR_BYTES * sector)
        self._f.write(ciphertext)
        self._alloc.sector_j[sector] = j
        if j + 1 > self._alloc.next_j:
            self._alloc.next_j = j + 1
        struct.pack_into("<Q", self._header, 22, self._alloc.next_j)
        struct.pack_into("<Q", self._header, self._table_off + 8 * sector, j)
        self._dirty += 1

    def _checkpoint(self):
        struct.pack_into("<I", self._header, len(self._header) - 4,
                         zlib.crc32(self._header[:-4]))
        self._f.seek(0)
        self._f.write(self._header)
        self._f.flush()
        self._jf.seek(0)
        self._jf.write(self._journal_header())
        self._jf.truncate(JOURNAL_HEADER_BYTES)
        self._jf.flush()
        self._dirty = 0

    # -- public API ---------------------------------------------------------

    def write_sector(self, index: int, plaintext: bytes):
        if self._readonly:
            raise IoError("image opened read-only")
        if not 0 <= index < self.n_sectors:
            raise IoError(f"sector {index} outside image of {self.n_sectors}")
        if len(plaintext) != SECTOR_BYTES:
            raise ValueError(f"sector payload must be {SECTOR_BYTES} bytes")
        prev = self._alloc.sector_j.get(index)
        key = self._alloc.allocate_write_key(index, self._pool, self._km.master)
        j = self._alloc.sector_j[index]
        ciphertext = words_to_sector(encrypt_words(sector_to_words(plaintext), key))
        try:
            self._journal_append(index, j, ciphertext)
            self._apply(index, j, ciphertext)
        except Exception:
            # the pair stays burned (single use) but the sector keeps its old key
            if prev is None:
                self._alloc.sector_j.pop(index, None)
            else:
                self._alloc.sector_j[index] = prev
            raise
        if self._dirty >= self.CHECKPOINT_INTERVAL:
            self._checkpoint()

    def read_sector(self, index: int) -> bytes:
        if not 0 <= index < self.n_sectors:
            raise IoError(f"sector {index} outside image of {self.n_sectors}")
        key = self._alloc.lookup_read_key(index, self._pool, self._km.master)
        ciphertext = self._overlay.get(index)
        if ciphertext is None:
            self._f.seek(self._sector_off + SECTOR_BYTES * index)
            ciphertext = self._f.read(SECTOR_BYTES)
        return words_to_sector(decrypt_words(sector_to_words(ciphertext), key))

    @property
    def next_j(self) -> int:
        return self._alloc.next_j

    @property
    def writes_remaining(self) -> int:
        return self.pool_words // 2 - (self._alloc.next_j - 1)

    def flush(self):
        if not self._readonly and self._jf is not None:
            self._checkpoint()

    def close(self):
        if self._f is None:
            return
        self.flush()
        if self._jf is not None:
            self._jf.close()
            self._jf = None
        fcntl.flock(self._f, fcntl.LOCK_UN)
        self._f.close()
        self._f = None

    def abort(self):
        """Drop the handles without checkpointing; models a crash."""
        if self._jf is not None:
            self._jf.close()
            self._jf = None
        if self._f is not None:
            self._f.close()
            self._f = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def init_device(path: str, user_key: bytes, n_sectors: int, pool_words: int) -> DiskImage:
    return DiskImage.create(path, user_key, n_sectors, pool_words)
