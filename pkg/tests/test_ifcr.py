import math
import random
import struct

import pytest

from populus.errors import BadBase, BadLength, CorruptChain
from populus.ifcr import (
    IfcrChain,
    KeyMaterial,
    chain_depth_for_sectors,
    chain_level_sizes,
    generate_key_material,
    ifcr_decrypt,
    ifcr_encrypt,
    key_material_bytes,
    next_level_size,
    spn_base_decrypt,
    spn_base_encrypt,
)
from populus.keymgr import gen_master_key
from populus.keystream import PrnStream, derive_hash_key

# NIST SP 800-38A F.2.5 CBC-AES256.Encrypt
AES_KEY = bytes.fromhex("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")
AES_IV = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
AES_PT = bytes.fromhex(
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710"
)
AES_CT = bytes.fromhex(
    "f58c4c04d6e5f1ba779eabfb5f7bfbd6"
    "9cfc4e967edb808d679f777bc6702c7d"
    "39f23369a9d9bacfa530e26304231461"
    "b2eb05e2c39be9fcda6c19078c6a9d1b"
)


def hk(tag=b"ifcr"):
    return derive_hash_key(tag)


def payload_of_sectors(s, seed=0):
    rng = random.Random(seed)
    return bytes(rng.getrandbits(8) for _ in range(512 * s))


def test_aes_cbc_known_answer():
    assert spn_base_encrypt(AES_PT, AES_KEY, AES_IV) == AES_CT
    assert spn_base_decrypt(AES_CT, AES_KEY, AES_IV) == AES_PT


def test_aes_cbc_distinct_ivs_distinct_ciphertexts():
    iv2 = bytes(16)
    assert spn_base_encrypt(AES_PT, AES_KEY, AES_IV) != spn_base_encrypt(AES_PT, AES_KEY, iv2)


def test_aes_cbc_bad_length():
    with pytest.raises(BadLength):
        spn_base_encrypt(b"x" * 15, AES_KEY, AES_IV)
    with pytest.raises(BadLength):
        spn_base_decrypt(b"", AES_KEY, AES_IV)


def test_next_level_size_base_case():
    assert next_level_size(10) == 9


def test_next_level_size_matches_ceil():
    for k in (10, 38, 100, 521, 16393, 524296):
        assert next_level_size(k) == math.ceil((16 * k + 4000) / 512)


def test_next_level_size_rejects_base_case_input():
    with pytest.raises(ValueError):
        next_level_size(9)


def test_recurrence_chain_for_256mb_pool():
    # d = 2^25 words: key material is 4000 + 8d + 8 bytes = 524296 sectors
    assert math.ceil(key_material_bytes(1 << 25) / 512) == 524296
    assert chain_level_sizes(524296) == [524296, 16393, 521, 25]
    assert chain_depth_for_sectors(524296) == 4


def test_depth_bound():
    for n in (10, 100, 1000, 10**4, 10**5, 10**6, 10**7):
        assert chain_depth_for_sectors(n) <= math.ceil(math.log(n, 32)) + 2


def test_total_sector_work_linear_while_depth_logarithmic():
    # the recursion contracts ~x32 per level: total sectors touched stay
    # within a whisker of n even though depth keeps growing like log n
    for exp in range(1, 7):
        n = 10**exp
        total = sum(chain_level_sizes(n))
        assert total <= 1.1 * n + 100
        assert chain_depth_for_sectors(n) <= math.ceil(math.log(n, 32)) + 2


@pytest.mark.parametrize("sectors", [1, 9, 10, 100])
def test_roundtrip_sector_sizes(sectors):
    payload = payload_of_sectors(sectors, seed=sectors)
    chain = ifcr_encrypt(payload, hk())
    assert ifcr_decrypt(chain, hk()) == payload


def test_roundtrip_unaligned_payload():
    payload = payload_of_sectors(3)[:-100]
    chain = ifcr_encrypt(payload, hk())
    assert ifcr_decrypt(chain, hk()) == payload


def test_nine_sectors_is_single_base_blob():
    chain = ifcr_encrypt(payload_of_sectors(9), hk())
    assert chain.depth == 0
    assert chain.levels == []


def test_ten_sectors_is_one_level_then_base():
    chain = ifcr_encrypt(payload_of_sectors(10), hk())
    assert chain.depth == 1
    assert chain.levels[0].k == 10


def test_chain_depth_matches_recurrence():
    chain = ifcr_encrypt(payload_of_sectors(100), hk())
    assert chain.depth == chain_depth_for_sectors(100)
    assert [lvl.k for lvl in chain.levels] == chain_level_sizes(100)


def test_deterministic_except_base_iv():
    payload = payload_of_sectors(40)
    a = ifcr_encrypt(payload, hk())
    b = ifcr_encrypt(payload, hk())
    assert [(l.k, l.j_offset, l.ciphertext) for l in a.levels] == [
        (l.k, l.j_offset, l.ciphertext) for l in b.levels
    ]
    assert a.base_iv != b.base_iv
    assert a.base_ct != b.base_ct


def test_serialization_roundtrip():
    chain = ifcr_encrypt(payload_of_sectors(40), hk())
    parsed = IfcrChain.from_bytes(chain.to_bytes())
    assert parsed.depth == chain.depth
    assert parsed.base_iv == chain.base_iv
    assert parsed.base_ct == chain.base_ct
    assert [(l.k, l.j_offset, l.ciphertext) for l in parsed.levels] == [
        (l.k, l.j_offset, l.ciphertext) for l in chain.levels
    ]
    assert ifcr_decrypt(parsed, hk()) == payload_of_sectors(40)


def test_truncated_blob_rejected():
    blob = ifcr_encrypt(payload_of_sectors(40), hk()).to_bytes()
    with pytest.raises(CorruptChain):
        IfcrChain.from_bytes(blob[: len(blob) // 2 | 1])
    with pytest.raises(CorruptChain):
        IfcrChain.from_bytes(b"JUNK" + blob[4:])


def test_tampered_base_detected():
    chain = ifcr_encrypt(payload_of_sectors(9), hk())
    ct = bytearray(chain.base_ct)
    ct[0] ^= 0x40
    bad = IfcrChain(chain.levels, chain.base_iv, bytes(ct))
    with pytest.raises((BadBase, CorruptChain)):
        ifcr_decrypt(bad, hk())


def test_tampered_level_detected():
    chain = ifcr_encrypt(payload_of_sectors(40), hk())
    lvl = chain.levels[0]
    ct = bytearray(lvl.ciphertext)
    ct[100] ^= 0x01
    bad = IfcrChain(
        [type(lvl)(lvl.k, lvl.j_offset, bytes(ct))] + chain.levels[1:],
        chain.base_iv,
        chain.base_ct,
    )
    with pytest.raises(CorruptChain):
        ifcr_decrypt(bad, hk())


def test_wrong_key_fails():
    chain = ifcr_encrypt(payload_of_sectors(12), hk(b"right"))
    with pytest.raises((BadBase, CorruptChain)):
        ifcr_decrypt(chain, hk(b"wrong"))


def test_ephemeral_keys_not_persisted_in_plaintext():
    payload = payload_of_sectors(100)
    key = hk()
    chain = ifcr_encrypt(payload, key)
    blob = chain.to_bytes()
    stream = PrnStream(key)
    from populus.ifcr import LEVEL_WORD_SHIFT

    for level_no, k in enumerate(chain_level_sizes(100), start=1):
        master = gen_master_key(stream, first_word=level_no << LEVEL_WORD_SHIFT)
        assert master.to_bytes()[:64] not in blob


def test_key_material_roundtrip():
    km = generate_key_material(PrnStream(hk(b"km")), 32)
    km.cursor = 7
    parsed = KeyMaterial.from_bytes(km.to_bytes())
    assert parsed.master.mats == km.master.mats
    assert list(parsed.pool) == list(km.pool)
    assert parsed.cursor == 7
    assert len(km.to_bytes()) == key_material_bytes(32)


def test_key_material_regeneration_bit_identical():
    a = generate_key_material(PrnStream(hk(b"regen")), 64).to_bytes()
    b = generate_key_material(PrnStream(hk(b"regen")), 64).to_bytes()
    assert a == b


def test_key_material_size_for_256mb_pool():
    assert key_material_bytes(1 << 25) == 4000 + (1 << 28) + 8


def test_ifcr_payload_roundtrip_through_chain():
    km = generate_key_material(PrnStream(hk(b"full")), 16)
    chain = ifcr_encrypt(km.to_bytes(), hk(b"full"))
    recovered = KeyMaterial.from_bytes(ifcr_decrypt(chain, hk(b"full")))
    assert recovered.master.mats == km.master.mats
    assert list(recovered.pool) == list(km.pool)
