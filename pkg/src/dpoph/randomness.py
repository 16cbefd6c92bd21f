"""Public, seeded randomness shared by every vector.

All randomness comes from a stateless counter-based generator: a 64-bit
value is a pure function of (master seed, purpose tag, slot, coordinate).
Permutations are uniform shuffles obtained by sorting such keys, so any two
vectors hashed under the same seed observe exactly the same randomness, and
nothing of length D has to be stored for CWS.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DivisibilityError

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xD1B54A32D192ED03)
_C2 = np.uint64(0xABC98388FB8FAC03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / (1 << 53)

# Purpose tags keep the streams for different uses independent.
TAG_PERMUTATION = 1
TAG_LOOKUP = 2
TAG_BBIT = 3
TAG_MINHASH = 4
TAG_CWS = 5
TAG_REPLICATE = 6
TAG_NOISE = 7

MAX_BITS = 16


def _u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.uint64(int(x) & _MASK64)
    arr = np.asarray(x)
    if arr.dtype == np.uint64:
        return arr
    return (arr.astype(np.int64)).astype(np.uint64)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def counter_hash(seed: int, tag: int, a=0, b=0) -> np.ndarray:
    """64-bit pseudorandom value keyed by (seed, tag, a, b); broadcasts over a, b."""
    with np.errstate(over="ignore"):
        x = _mix64(_u64(seed) ^ (_u64(tag) * _GOLDEN))
        x = _mix64(x + _u64(a) * _C1)
        x = _mix64(x + _u64(b) * _C2)
    return x


def to_unit(h: np.ndarray) -> np.ndarray:
    """Map 64-bit values to floats in [0, 1) with 53 bits of resolution."""
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def to_open_unit(h: np.ndarray) -> np.ndarray:
    """Map 64-bit values to floats in the open interval (0, 1)."""
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def derive_seed(seed: int, tag: int, *parts: int) -> int:
    """Child seed for a sub-experiment (replicate, run, vector)."""
    x = counter_hash(seed, tag, parts[0] if parts else 0, parts[1] if len(parts) > 1 else 0)
    for p in parts[2:]:
        x = counter_hash(int(x), tag, p)
    return int(x)


def _rank_from_keys(keys: np.ndarray) -> np.ndarray:
    """1-based rank of each key along the last axis (a uniform shuffle)."""
    order = np.argsort(keys, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(
        ranks, order, np.broadcast_to(np.arange(1, keys.shape[-1] + 1), keys.shape), axis=-1
    )
    return ranks.astype(np.int64)


class BinLayout:
    """Bin structure of a permutation for a given K.

    Attributes (0-based arrays unless noted):
        d: bin width D/K.
        bin_of: bin (0-based) of each coordinate j-1.
        pos_in_bin: position of coordinate j-1 within its bin, where the
            members of a bin are listed in ascending coordinate order.
        members: (K, d) array of 1-based coordinates of each bin, ascending.
        sorted_index: (K, d) array; row k is the argsort of pi over the
            members of bin k, i.e. the within-bin partial permutation used by
            re-randomized densification (0-based positions).
    """

    def __init__(self, mapping: np.ndarray, K: int):
        D = mapping.size
        if K < 1 or D % K:
            raise DivisibilityError(D, K)
        d = D // K
        self.K = K
        self.d = d
        self.bin_of = (mapping - 1) // d
        order = np.lexsort((np.arange(D), self.bin_of))
        self.members = (order + 1).reshape(K, d)
        pos = np.empty(D, dtype=np.int64)
        pos[order] = np.tile(np.arange(d), K)
        self.pos_in_bin = pos
        pi_members = mapping[self.members - 1]
        self.sorted_index = np.argsort(pi_members, axis=1, kind="stable")


class PermutationSpec:
    """A bijection pi: [D] -> [D], 1-based.

    ``mapping[j - 1] == pi(j)``. Use :func:`make_permutation` for the seeded
    uniform shuffle; explicit mappings are accepted for worked examples.
    """

    def __init__(self, mapping, seed: Optional[int] = None):
        mapping = np.asarray(mapping, dtype=np.int64).reshape(-1)
        D = mapping.size
        if D < 1:
            raise ValueError("permutation must have D >= 1")
        if not np.array_equal(np.sort(mapping), np.arange(1, D + 1)):
            raise ValueError("mapping is not a bijection on [1, D]")
        mapping.setflags(write=False)
        self.mapping = mapping
        self.seed = seed
        self._layouts = {}

    @property
    def dim(self) -> int:
        return int(self.mapping.size)

    @classmethod
    def identity(cls, D: int) -> "PermutationSpec":
        return cls(np.arange(1, D + 1), seed=None)

    def __call__(self, j):
        return self.mapping[np.asarray(j) - 1]

    def layout(self, K: int) -> BinLayout:
        lay = self._layouts.get(K)
        if lay is None:
            lay = self._layouts[K] = BinLayout(self.mapping, K)
        return lay

    def __repr__(self):
        return f"PermutationSpec(D={self.dim}, seed={self.seed})"


def make_permutation(seed: int, D: int) -> PermutationSpec:
    """Seeded uniform random permutation of [1, D]; deterministic in (seed, D)."""
    if D < 1:
        raise ValueError(f"D must be >= 1, got {D}")
    keys = counter_hash(seed, TAG_PERMUTATION, 0, np.arange(1, D + 1))
    return PermutationSpec(_rank_from_keys(keys), seed=seed)


def bin_of(p: PermutationSpec, j: int, K: int) -> int:
    """1-based bin k with (k-1)d + 1 <= pi(j) <= kd."""
    D = p.dim
    if K < 1 or D % K:
        raise DivisibilityError(D, K)
    if not 1 <= j <= D:
        raise ValueError(f"index {j} outside [1, {D}]")
    d = D // K
    return int((p.mapping[j - 1] - 1) // d) + 1


@dataclass(frozen=True, eq=False)
class LookupSequence:
    """For each bin k, the fixed order in which donor bins are searched.

    ``orders[k-1]`` is a permutation of [K] minus {k}, 1-based.
    """

    seed: Optional[int]
    K: int
    orders: np.ndarray

    def order(self, k: int) -> np.ndarray:
        return self.orders[k - 1]

    @classmethod
    def from_orders(cls, orders, seed=None) -> "LookupSequence":
        rows = [list(r) for r in orders]
        K = len(rows)
        for k, r in enumerate(rows, start=1):
            if sorted(r) != [q for q in range(1, K + 1) if q != k]:
                raise ValueError(f"order for bin {k} must permute the other bins")
        arr = np.array(rows, dtype=np.int64).reshape(K, max(K - 1, 0))
        return cls(seed, K, arr)


def lookup_sequence(seed: int, K: int) -> LookupSequence:
    """Seeded per-bin donor search orders, identical for every data vector."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    ks = np.arange(1, K + 1)
    keys = counter_hash(seed, TAG_LOOKUP, ks[:, None], ks[None, :])
    order = np.argsort(keys, axis=1, kind="stable") + 1
    rows = order[order != ks[:, None]].reshape(K, K - 1)
    return LookupSequence(seed, K, rows.astype(np.int64))


def mix_to_b_bits(value, b: int, seed: int, identity: bool = False):
    """Map integers uniformly onto {0, ..., 2^b - 1}.

    A seeded avalanche finalizer is applied before keeping the lowest b bits.
    ``identity=True`` keeps ``value mod 2^b`` and exists for hand-checkable
    tests only.
    """
    if not 1 <= b <= MAX_BITS:
        raise ValueError(f"b must be in 1..{MAX_BITS}, got {b}")
    v = np.asarray(value, dtype=np.int64)
    mask = (1 << b) - 1
    if identity:
        out = v & mask
    else:
        out = (counter_hash(seed, TAG_BBIT, v) & np.uint64(mask)).astype(np.int64)
    return int(out) if np.ndim(out) == 0 else out


class MinHashFamily:
    """K independently keyed permutations of [D] for standard MinHash.

    Row k-1 of ``mapping`` is pi_k; its shuffle is keyed by (seed, k).
    """

    def __init__(self, seed: int, D: int, K: int):
        if D < 1 or K < 1:
            raise ValueError("D and K must be positive")
        self.seed = seed
        self.D = D
        self.K = K

    @cached_property
    def mapping(self) -> np.ndarray:
        ks = np.arange(1, self.K + 1)[:, None]
        keys = counter_hash(self.seed, TAG_MINHASH, ks, np.arange(1, self.D + 1)[None, :])
        m = _rank_from_keys(keys)
        m.setflags(write=False)
        return m

    def permutation(self, k: int) -> PermutationSpec:
        return PermutationSpec(self.mapping[k - 1], seed=None)


@dataclass(frozen=True)
class CwsRandomness:
    """Per-(slot, dimension) triples (r, c, beta) derived on demand.

    r and c are Gamma(2, 1), each realised as the sum of two unit
    exponentials; beta is Uniform[0, 1).
    """

    seed: int


def cws_triple(r: CwsRandomness, k, i):
    """Return (r_i, c_i, beta_i) for hash slot ``k`` and 1-based dimension(s) ``i``."""
    i = np.asarray(i, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    base = k * 8
    u = [to_open_unit(counter_hash(r.seed, TAG_CWS, base + c, i)) for c in range(4)]
    beta = to_unit(counter_hash(r.seed, TAG_CWS, base + 4, i))
    gamma_r = -np.log(u[0]) - np.log(u[1])
    gamma_c = -np.log(u[2]) - np.log(u[3])
    return gamma_r, gamma_c, beta
