"""Executable key-recovery attack and message-indistinguishability bounds.

For a fixed temporary key the sector cipher is one invertible linear map L
over Z_{2^64}: C = L P.  An attacker holding 64 chosen-plaintext pairs that
share a key therefore recovers L as [C_1..C_64] [P_1..P_64]^-1 and predicts
any further ciphertext under that key -- which is exactly why every write
rotates to a fresh key, and the demo here shows both sides.

The probability that key sharing ever happens is governed by the binomial
tail with per-pair collision probability p = 2^-128:

    P(Event) = P(X >= 64),  X ~ Bin(r, p)          -- exact tail, log2 domain
    P(exists mu: Event_mu) <= theta * exp(-r T(64/r, p))   -- Chernoff union
    T(x, y) = x ln(x/y) + (1 - x) ln((1-x)/(1-y))

All bound arithmetic stays in the log2 domain; direct evaluation underflows
hopelessly at p = 2^-128.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    InsufficientPairs,
    NotInvertible,
    ParamOutOfRange,
    SingularPlaintexts,
)
from .keymgr import derive_temp_key, gen_master_key
from .keystream import PrnStream, derive_hash_key
from .modring import matn_inv, matn_mul, matn_vec, random_invertible
from .sectorcipher import SECTOR_WORDS, encrypt_words

PAIRS_NEEDED = 64
KEY_COLLISION_LOG2P = -128
MAX_UNION_R = 1 << 120
MAX_THEOREM_T = 1 << 80
_LN2 = math.log(2)


# -- linear-algebra key recovery ------------------------------------------


def recover_key(pairs) -> np.ndarray:
    """Solve the 64x64 transform from >= 64 same-key (P, C) word pairs."""
    if len(pairs) < PAIRS_NEEDED:
        raise InsufficientPairs(f"need {PAIRS_NEEDED} pairs, got {len(pairs)}")
    p_matrix = np.zeros((SECTOR_WORDS, SECTOR_WORDS), dtype=np.uint64)
    c_matrix = np.zeros((SECTOR_WORDS, SECTOR_WORDS), dtype=np.uint64)
    for i in range(PAIRS_NEEDED):
        plain, cipher = pairs[i]
        p_matrix[:, i] = plain
        c_matrix[:, i] = cipher
    try:
        p_inv = matn_inv(p_matrix)
    except NotInvertible as exc:
        raise SingularPlaintexts(f"plaintext matrix not invertible: {exc}") from exc
    return matn_mul(c_matrix, p_inv)


def predict_ciphertext(transform: np.ndarray, plaintext_words) -> list:
    return matn_vec(transform, plaintext_words)


@dataclass
class AttackOutcome:
    rotate: bool
    pairs: int
    predicted_match: bool
    mismatched_words: int


def run_attack_demo(n_pairs: int = PAIRS_NEEDED, rotate: bool = False,
                    seed: int | None = None) -> AttackOutcome:
    """Collect chosen-plaintext pairs, recover the transform, test it.

    With rotation disabled every pair (and the held-out probe) shares one
    temporary key and the prediction is exact.  With rotation enabled each
    encryption consumes a fresh PRN pair, and the recovered transform fails
    on the probe.
    """
    rng = random.Random(seed)
    stream = PrnStream(derive_hash_key(b"attack-demo-%d" % rng.getrandbits(63)))
    master = gen_master_key(stream)

    def key_for(j):
        return derive_temp_key(master, stream.rt(2 * j), stream.rt(2 * j + 1))

    # chosen plaintexts: columns of a random invertible matrix, so the
    # attacker's system is solvable by construction
    chosen = random_invertible(SECTOR_WORDS, rng)
    plaintexts = [[int(w) for w in chosen[:, i]] for i in range(SECTOR_WORDS)]
    while len(plaintexts) < n_pairs:
        plaintexts.append([rng.getrandbits(64) for _ in range(SECTOR_WORDS)])

    pairs = []
    for i, plain in enumerate(plaintexts):
        key = key_for(i if rotate else 0)
        pairs.append((plain, encrypt_words(plain, key)))

    transform = recover_key(pairs)
    probe = [rng.getrandbits(64) for _ in range(SECTOR_WORDS)]
    probe_key = key_for(len(plaintexts) if rotate else 0)
    actual = encrypt_words(probe, probe_key)
    predicted = predict_ciphertext(transform, probe)
    mismatches = sum(1 for a, b in zip(predicted, actual) if a != b)
    return AttackOutcome(rotate, len(pairs), mismatches == 0, mismatches)


# -- probability bounds -----------------------------------------------------


def _log2_binom(r: int, l: int) -> float:
    if l == 0 or l == r:
        return 0.0
    if r <= 1 << 50:
        return math.log2(math.comb(r, l))
    # r too large for exact combinatorics: sum log2 of the l numerator terms
    s = 0.0
    for i in range(l):
        s += math.log2(r - i)
    return s - math.lgamma(l + 1) / _LN2


def event_probability(r: int) -> float:
    """log2 of the exact binomial upper tail P(X >= 64), X ~ Bin(r, 2^-128)."""
    if r < PAIRS_NEEDED:
        raise DomainError(f"tail needs r >= {PAIRS_NEEDED}, got {r}")
    log2_p = float(KEY_COLLISION_LOG2P)
    log2_1mp = math.log1p(-(2.0 ** KEY_COLLISION_LOG2P)) / _LN2
    terms = []
    for l in range(PAIRS_NEEDED, min(r, PAIRS_NEEDED + 400) + 1):
        t = _log2_binom(r, l) + l * log2_p + (r - l) * log2_1mp
        terms.append(t)
        if t < terms[0] - 80:
            break
    top = terms[0]
    return top + math.log2(sum(2.0 ** (t - top) for t in terms))


def chernoff_exponent(x: float, y: float) -> float:
    """T(x, y) = x ln(x/y) + (1-x) ln((1-x)/(1-y)), natural log."""
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError(f"T requires x, y in (0, 1), got x={x}, y={y}")
    return x * math.log(x / y) + (1.0 - x) * (math.log1p(-x) - math.log1p(-y))


def union_bound(theta: int, r: int) -> float:
    """log2 [ theta * exp(-r T(64/r, 2^-128)) ], the union over all mu."""
    if r > MAX_UNION_R:
        raise ParamOutOfRange(f"bound only covers r <= 2^120, got {r}")
    if r <= PAIRS_NEEDED:
        raise DomainError(f"Chernoff exponent needs r > {PAIRS_NEEDED}, got {r}")
    if theta < 1:
        raise DomainError(f"theta must be positive, got {theta}")
    t = chernoff_exponent(PAIRS_NEEDED / r, 2.0 ** KEY_COLLISION_LOG2P)
    return math.log2(theta) - float(r) * t / _LN2


@dataclass
class TheoremVerdict:
    epsilon_log2: float
    meets_2_neg60: bool


def theorem_check(t: int, theta: int) -> TheoremVerdict:
    """Indistinguishability at budget t: epsilon = union_bound(theta, t)."""
    if t > MAX_THEOREM_T:
        raise ParamOutOfRange(f"theorem regime is t <= 2^80, got {t}")
    if t <= PAIRS_NEEDED:
        raise ParamOutOfRange(f"attack needs more than {PAIRS_NEEDED} queries, got t={t}")
    if not 1 <= theta <= t:
        raise ParamOutOfRange(f"need 1 <= theta <= t, got theta={theta}")
    eps = union_bound(theta, t)
    return TheoremVerdict(eps, eps < -60.0)
