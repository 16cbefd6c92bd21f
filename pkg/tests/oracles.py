"""Exhaustive rational-arithmetic oracles for the privacy calculus.

Nothing here calls into dpoph's closed forms. Supports are enumerated
explicitly under the identity binning (averaging over all supports is the
same as averaging over a uniform permutation), and every random draw of the
densification (donor choices, the re-randomized argmin, the b-bit codes) is
enumerated over its finite range. Independent draws are combined by
convolution of exactly computed laws.

Conventions mirrored from the package:
  * the neighbour drops one nonzero i of u; in the exact model i is uniform
    over the support, in the bin-uniform model the bin of i is uniform over the
    non-empty bins and i is uniform within it;
  * b-bit codes are a uniform random function of the raw hash value; fixed
    densification copies raw values, re-randomized slots get their own;
  * when the neighbour is the zero vector every slot gets a fresh code.
"""

from collections import Counter, defaultdict
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

ONE = Fraction(1)


def code_diff_prob(b):
    """P(two independent uniform b-bit codes differ), by enumeration."""
    B = 2 ** b
    diff = sum(1 for x in range(B) for y in range(B) if x != y)
    return Fraction(diff, B * B)


def convolve(p, q):
    out = defaultdict(Fraction)
    for x, a in p.items():
        for y, c in q.items():
            out[x + y] += a * c
    return dict(out)


def power(law, n):
    out = {0: ONE}
    for _ in range(n):
        out = convolve(out, law)
    return out


def mix(parts):
    out = defaultdict(Fraction)
    for w, law in parts:
        for x, p in law.items():
            out[x] += w * p
    return dict(out)


def bern(p):
    return {0: 1 - p, 1: p}


def enum_num_empty(D, K, f):
    d = D // K
    cnt = Counter()
    for S in combinations(range(D), f):
        cnt[K - len({x // d for x in S})] += 1
    tot = sum(cnt.values())
    return {j: Fraction(c, tot) for j, c in cnt.items()}


def enum_bin_nnz(d, f, m):
    """Count of bin 0 among placements of f nonzeros into m bins, all non-empty."""
    cnt = Counter()
    for S in combinations(range(m * d), f):
        occ = Counter(x // d for x in S)
        if len(occ) == m:
            cnt[occ[0]] += 1
    tot = sum(cnt.values())
    return {z: Fraction(c, tot) for z, c in cnt.items()}


@lru_cache(maxsize=None)
def class_counts(D, K, f):
    """Counts of (j, z, is_min) over all supports S and all i in S."""
    d = D // K
    cnt = Counter()
    n_supports = 0
    for S in combinations(range(D), f):
        n_supports += 1
        bins = defaultdict(list)
        for x in S:
            bins[x // d].append(x)
        j = K - len(bins)
        for members in bins.values():
            z = len(members)
            lo = min(members)
            for i in members:
                cnt[j, z, i == lo] += 1
    return dict(cnt), n_supports


def _empty_slot_law_fix(m, W_mask):
    """One empty slot when k* (donor index 0) held only the removed nonzero.

    Bit t of ``W_mask`` says whether bin t+1's code differs from the old one.
    """
    hits = Fraction(0)
    for donor in range(m):
        if donor != 0:
            continue
        # k* is empty in u'; the slot moves on to a new donor among the others
        for new in range(1, m):
            hits += Fraction(1, m) * Fraction(1 if (W_mask >> (new - 1)) & 1 else 0, m - 1)
    return bern(hits)


@lru_cache(maxsize=None)
def class_law(K, j, z, is_min, b, variant, model):
    """Exact law of X for one (j, z, is_min) class."""
    q = code_diff_prob(b)
    m = K - j
    if variant == "oph-fix":
        if z == 1 and model == "exact":
            if m == 1:
                return power(bern(q), K)
            parts = []
            for mask in range(2 ** (m - 1)):
                w = ONE
                for t in range(m - 1):
                    w *= q if (mask >> t) & 1 else 1 - q
                k_star = bern(Fraction(sum((mask >> t) & 1 for t in range(m - 1)), m - 1))
                law = convolve(k_star, power(_empty_slot_law_fix(m, mask), j))
                parts.append((w, law))
            return mix(parts)
        if not is_min:
            return {0: ONE}
        # empty slots whose donor is k*, by enumerating each slot's donor
        a_slot = bern(Fraction(sum(1 for donor in range(m) if donor == 0), m))
        A = power(a_slot, j)
        return mix([(1 - q, {0: ONE}), (q, {x + 1: p for x, p in A.items()})])
    if variant == "oph-re":
        if z == 1:
            own = bern(q)
        else:
            own = bern(q if is_min else Fraction(0))
        hits = Fraction(0)
        for donor in range(m):
            if donor != 0:
                continue
            if z == 1:
                hits += Fraction(1, m) * q
            else:
                # the slot's own re-randomized argmin over the z nonzeros of k*
                for e in range(z):
                    if e == 0:  # e == 0 stands for the removed coordinate i
                        hits += Fraction(1, m) * Fraction(1, z) * q
        return convolve(own, power(bern(hits), j))
    raise ValueError(variant)


def enum_diff_count(D, K, f, b, variant, model="exact"):
    counts, n_supports = class_counts(D, K, f)
    parts = []
    for (j, z, is_min), c in counts.items():
        if model == "exact":
            w = Fraction(c, n_supports * f)
        else:
            w = Fraction(c, n_supports * (K - j) * z)
        parts.append((w, class_law(K, j, z, is_min, b, variant, model)))
    law = mix(parts)
    return {x: p for x, p in law.items() if p != 0}

