"""Non-private sketches: MinHash, OPH with densification, b-bit codes, CWS, BCWS."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import SparseBinaryVector, SparseWeightedVector
from .errors import DegenerateInputError, DivisibilityError
from .randomness import (
    MAX_BITS,
    CwsRandomness,
    LookupSequence,
    MinHashFamily,
    PermutationSpec,
    cws_triple,
    mix_to_b_bits,
)

EMPTY = -1

RAW = "raw"
CODE = "code"


@dataclass(frozen=True, eq=False)
class Signature:
    """K hash slots plus the metadata needed to decide comparability.

    ``slots`` holds raw permuted indices (kind ``"raw"``) or b-bit codes
    (kind ``"code"``); :data:`EMPTY` (-1) marks an empty bin.
    """

    slots: np.ndarray
    scheme: str
    D: int
    kind: str = RAW
    b: Optional[int] = None
    seed: Optional[int] = None
    privacy: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.slots, dtype=np.int64).reshape(-1)
        s.setflags(write=False)
        object.__setattr__(self, "slots", s)
        if self.kind == CODE:
            if self.b is None:
                raise ValueError("code signatures need b")
            ok = (s == EMPTY) | ((s >= 0) & (s < (1 << self.b)))
            if not ok.all():
                raise ValueError("code slots must lie in [0, 2^b - 1]")

    @property
    def K(self) -> int:
        return int(self.slots.size)

    @property
    def has_empty(self) -> bool:
        return bool((self.slots == EMPTY).any())

    def meta(self) -> tuple:
        return (self.scheme, self.D, self.K, self.kind, self.b, self.seed)

    def __eq__(self, other):
        if not isinstance(other, Signature):
            return NotImplemented
        return self.meta() == other.meta() and np.array_equal(self.slots, other.slots)

    def __repr__(self):
        return f"Signature({self.scheme}, K={self.K}, kind={self.kind}, b={self.b})"


def _require_support(u, what="vector"):
    if u.nnz < 1:
        raise DegenerateInputError(f"cannot hash an empty {what} (needs f >= 1)")


def minhash(u: SparseBinaryVector, family: MinHashFamily) -> Signature:
    """Standard MinHash: slot k is the minimum of pi_k over the support of u."""
    _require_support(u)
    if u.dim != family.D:
        raise ValueError(f"vector dim {u.dim} != family dim {family.D}")
    vals = family.mapping[:, u.indices - 1].min(axis=1)
    return Signature(vals, "minhash", u.dim, RAW, seed=family.seed)


def oph(u: SparseBinaryVector, p: PermutationSpec, K: int) -> Signature:
    """One permutation hashing; empty bins are marked EMPTY."""
    _require_support(u)
    D = p.dim
    if u.dim != D:
        raise ValueError(f"vector dim {u.dim} != permutation dim {D}")
    if K < 1 or D % K:
        raise DivisibilityError(D, K)
    d = D // K
    vals = p.mapping[u.indices - 1]
    slots = np.full(K, D + 1, dtype=np.int64)
    np.minimum.at(slots, (vals - 1) // d, vals)
    slots[slots == D + 1] = EMPTY
    return Signature(slots, "oph", D, RAW, seed=p.seed)


def _donors(slots: np.ndarray, L: LookupSequence) -> tuple[np.ndarray, np.ndarray]:
    """Empty bins (0-based) and, for each, the first non-empty bin in its order."""
    K = slots.size
    if L.K != K:
        raise ValueError(f"lookup sequence built for K={L.K}, signature has K={K}")
    nonempty = slots != EMPTY
    if not nonempty.any():
        raise DegenerateInputError("all slots are EMPTY; nothing to densify from")
    empty = np.flatnonzero(~nonempty)
    if empty.size == 0:
        return empty, empty
    # scan the lookup orders in column blocks; most rows resolve early
    donor = np.full(empty.size, -1, dtype=np.int64)
    todo = np.arange(empty.size)
    width = L.orders.shape[1]
    for lo in range(0, width, 32):
        cand = L.orders[empty[todo], lo:lo + 32] - 1
        hit = nonempty[cand]
        found = hit.any(axis=1)
        rows = np.flatnonzero(found)
        donor[todo[rows]] = cand[rows, hit[rows].argmax(axis=1)]
        todo = todo[~found]
        if todo.size == 0:
            break
    return empty, donor


def densify_fix(s: Signature, L: LookupSequence) -> Signature:
    """Fixed densification: each empty slot copies its first non-empty donor."""
    empty, donor = _donors(s.slots, L)
    if empty.size == 0:
        return replace(s, scheme="oph-fix")
    out = s.slots.copy()
    out[empty] = s.slots[donor]
    return replace(s, slots=out, scheme="oph-fix")


def densify_re(
    s: Signature, u: SparseBinaryVector, p: PermutationSpec, L: LookupSequence
) -> Signature:
    """Re-randomized densification.

    An empty slot k re-hashes its donor bin k' under the partial permutation
    that sends the m-th member of bin k' (ascending coordinate order) to
    ``SortedIndex(pi(B_k))[m] + (k'-1) d`` and takes the minimum over u's
    nonzeros in bin k'.
    """
    empty, donor = _donors(s.slots, L)
    if empty.size == 0:
        return replace(s, scheme="oph-re")
    lay = p.layout(s.K)
    d = lay.d
    j0 = u.indices - 1
    ubin = lay.bin_of[j0]
    upos = lay.pos_in_bin[j0]
    order = np.argsort(ubin, kind="stable")
    ubin, upos = ubin[order], upos[order]
    starts = np.searchsorted(ubin, np.arange(s.K + 1))
    out = s.slots.copy()
    for e, k2 in zip(empty, donor):
        pos = upos[starts[k2]:starts[k2 + 1]]
        out[e] = lay.sorted_index[e, pos].min() + 1 + k2 * d
    return replace(s, slots=out, scheme="oph-re")


def b_bit_encode(
    s: Signature,
    b: int,
    seed: Optional[int] = None,
    allow_empty: bool = False,
    identity: bool = False,
) -> Signature:
    """Map every raw slot to a b-bit code; EMPTY is kept only if ``allow_empty``."""
    if not 1 <= b <= MAX_BITS:
        raise ValueError(f"b must be in 1..{MAX_BITS}, got {b}")
    if s.kind != RAW:
        raise ValueError("signature is already b-bit coded")
    seed = s.seed if seed is None else seed
    if seed is None and not identity:
        raise ValueError("a mixer seed is required")
    empty = s.slots == EMPTY
    if empty.any() and not allow_empty:
        raise DegenerateInputError("signature has EMPTY slots; densify first or allow_empty")
    codes = np.asarray(mix_to_b_bits(np.where(empty, 0, s.slots), b, seed or 0, identity))
    codes = np.where(empty, EMPTY, codes)
    return replace(s, slots=codes, kind=CODE, b=b, seed=seed)


def _cws_core(idx: np.ndarray, w: np.ndarray, r: np.ndarray, c: np.ndarray, beta: np.ndarray):
    t = np.floor(np.log(w) / r + beta)
    y = np.exp(r * (t - beta))
    a = c / (y * np.exp(r))
    return a, t


def cws(u: SparseWeightedVector, r: CwsRandomness, k: int = 0) -> tuple[int, int]:
    """Consistent weighted sampling for one hash slot; returns (i*, t*)."""
    _require_support(u)
    rr, cc, bb = cws_triple(r, k, u.indices)
    a, t = _cws_core(u.indices, u.weights, rr, cc, bb)
    m = int(np.argmin(a))
    return int(u.indices[m]), int(t[m])


def cws_signature(u: SparseWeightedVector, r: CwsRandomness, K: int) -> Signature:
    """K-slot CWS signature keeping only i* per slot."""
    _require_support(u)
    ks = np.arange(1, K + 1)[:, None]
    rr, cc, bb = cws_triple(r, ks, u.indices[None, :])
    a, _ = _cws_core(u.indices, u.weights[None, :], rr, cc, bb)
    return Signature(u.indices[np.argmin(a, axis=1)], "cws", u.dim, RAW, seed=r.seed)


def _bcws_core(u: SparseWeightedVector, p: PermutationSpec, K: int, r: CwsRandomness):
    _require_support(u)
    D = p.dim
    if u.dim != D:
        raise ValueError(f"vector dim {u.dim} != permutation dim {D}")
    if K < 1 or D % K:
        raise DivisibilityError(D, K)
    d = D // K
    rr, cc, bb = cws_triple(r, 0, u.indices)
    a, t = _cws_core(u.indices, u.weights, rr, cc, bb)
    bins = (p.mapping[u.indices - 1] - 1) // d
    # argmin of a within each bin; ties resolved towards the smaller index
    order = np.lexsort((u.indices, a, bins))
    sb = bins[order]
    first = np.ones(sb.size, dtype=bool)
    first[1:] = sb[1:] != sb[:-1]
    idx = np.full(K, EMPTY, dtype=np.int64)
    tt = np.zeros(K, dtype=np.int64)
    idx[sb[first]] = u.indices[order][first]
    tt[sb[first]] = t[order][first].astype(np.int64)
    return idx, tt


def bcws(
    u: SparseWeightedVector, p: PermutationSpec, K: int, r: CwsRandomness
) -> Signature:
    """Bin-wise CWS: CWS within each non-empty bin, storing the global i*.

    All bins share one set of dimension-indexed triples (slot 0 of ``r``).
    """
    idx, _ = _bcws_core(u, p, K, r)
    return Signature(idx, "bcws", p.dim, RAW, seed=p.seed)


def bcws_pairs(
    u: SparseWeightedVector, p: PermutationSpec, K: int, r: CwsRandomness
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin (i*, t*) arrays; i* is EMPTY for empty bins. Used for diagnostics."""
    return _bcws_core(u, p, K, r)


def weighted_from_binary(u: SparseBinaryVector) -> SparseWeightedVector:
    return SparseWeightedVector(u.dim, u.indices, np.ones(u.nnz))
