"""User-space Populus disk encryption with analysis and benchmark tooling."""

__version__ = "0.1.0"

from .diskstore import DiskImage, init_device
from .errors import PopulusError
from .keymgr import KeyAllocator, MasterKey, TempKey, derive_temp_key, gen_master_key
from .keystream import HashKey, PrnStream, derive_hash_key
from .sectorcipher import decrypt_sector, encrypt_sector

__all__ = [
    "DiskImage",
    "HashKey",
    "KeyAllocator",
    "MasterKey",
    "PopulusError",
    "PrnStream",
    "TempKey",
    "decrypt_sector",
    "derive_hash_key",
    "derive_temp_key",
    "encrypt_sector",
    "gen_master_key",
    "init_device",
    "__version__",
]
