"""Privacy calculus and randomized-response mechanisms.

The discount factor N is a (1 - delta) quantile of X, the number of hash
slots that change between a vector and a neighbour differing in one
coordinate. For densified OPH the law of X is assembled from the law of the
number of empty bins and the law of the nonzero count of a bin; both are
computed in exact integer arithmetic (Python big ints), so there is no
cancellation problem in the alternating sum even for D in the thousands.

Two models of X are available for densified OPH:

``"exact"`` (default)
    The law of X for a fixed vector and a removed coordinate under a uniform
    permutation and the actual densification procedure. The bin holding the
    removed coordinate is size-biased (weight proportional to its nonzero
    count), and when that coordinate was the only nonzero of its bin the
    affected slots of the neighbour are re-densified independently.

``"bin-uniform"``
    A simpler closed form: the bin is treated as a
    uniformly chosen non-empty bin and, for fixed densification, all copies of
    a changed hash are assumed to change together. Its upper tail dominates
    the exact one, so it yields a conservative (never smaller in our tests)
    N.

b-bit codes are modelled as uniform and independent across distinct raw
hash values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.stats import binom

from .data import SparseBinaryVector, SparseWeightedVector
from .errors import BudgetViolation, ConfigError, DivisibilityError, NumericsError
from .randomness import (
    CwsRandomness,
    LookupSequence,
    MinHashFamily,
    PermutationSpec,
)
from .sketch import (
    CODE,
    EMPTY,
    Signature,
    b_bit_encode,
    bcws,
    densify_fix,
    densify_re,
    minhash,
    oph,
)

MODELS = ("exact", "bin-uniform")


class Variant(str, enum.Enum):
    OPH_FIX = "oph-fix"
    OPH_RE = "oph-re"
    OPH_RAND = "oph-rand"
    MH = "mh"
    BCWS_RAND = "bcws"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower().replace("_", "-")
        aliases = {"fix": "oph-fix", "re": "oph-re", "rand": "oph-rand",
                   "bcws-rand": "bcws", "minhash": "mh", "dp-mh": "mh"}
        v = aliases.get(v, v)
        if v.startswith("dp-"):
            v = v[3:]
        try:
            return cls(v)
        except ValueError:
            raise ConfigError(
                f"unknown variant {value!r}; choose from {[x.value for x in cls]}"
            ) from None

    @property
    def pure(self) -> bool:
        return self in (Variant.OPH_RAND, Variant.BCWS_RAND)


@dataclass(frozen=True)
class PrivacyBudget:
    """(epsilon, delta) together with b, the nonzero lower bound and the variant.

    ``epsilon = math.inf`` is accepted and means "no flipping" (a non-private
    baseline through the same pipeline).
    """

    epsilon: float
    delta: float
    b: int
    f_min: int
    variant: Variant

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 1 <= self.b <= 16:
            raise ConfigError(f"b must be in 1..16, got {self.b}")
        if self.f_min < 1:
            raise ConfigError(f"f_min must be >= 1, got {self.f_min}")
        if self.variant.pure:
            if not 0 <= self.delta < 1:
                raise ConfigError(f"delta must be in [0, 1), got {self.delta}")
        elif not 0 < self.delta < 1:
            raise ConfigError(
                f"{self.variant.value} needs 0 < delta < 1, got {self.delta}"
            )


@dataclass(frozen=True, eq=False)
class PmfTable:
    """A finite law on ascending integer support."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64)
        p = np.asarray(self.probs, dtype=np.float64)
        if s.shape != p.shape or s.ndim != 1:
            raise ValueError("support and probs must be 1-d and equally long")
        if s.size and np.any(np.diff(s) <= 0):
            raise ValueError("support must be strictly ascending")
        if np.any(p < -1e-12):
            raise NumericsError(f"negative probability {p.min():.3e}")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > 1e-9:
            raise NumericsError(f"probabilities sum to {total!r}, not 1")
        s.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    def __getitem__(self, x: int) -> float:
        hit = np.flatnonzero(self.support == x)
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def as_dict(self) -> dict:
        return {int(s): float(p) for s, p in zip(self.support, self.probs)}

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def quantile(self, level: float) -> int:
        """Smallest support point whose cumulative mass reaches ``level``."""
        c = self.cdf()
        hit = np.flatnonzero(c >= level)
        return int(self.support[hit[0]] if hit.size else self.support[-1])

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def __repr__(self):
        return f"PmfTable({self.as_dict()})"


def _check_dk(D: int, K: int) -> int:
    if K < 1 or D < 1 or D % K:
        raise DivisibilityError(D, K)
    return D // K


@lru_cache(maxsize=256)
def _num_empty_exact(D: int, K: int, f: int) -> tuple:
    d = _check_dk(D, K)
    if not 1 <= f <= D:
        raise ConfigError(f"need 1 <= f <= D, got f={f}, D={D}")
    total = math.comb(D, f)
    # C(D - t*d, f) for every count t of bins forced empty
    free = [math.comb(D - t * d, f) for t in range(K + 1)]
    out = []
    for j in range(max(0, K - f), K - math.ceil(f / d) + 1):
        s = 0
        for ell in range(0, K - j + 1):
            s += (-1) ** ell * math.comb(K - j, ell) * free[j + ell]
        out.append((j, Fraction(math.comb(K, j) * s, total)))
    mass = sum(p for _, p in out)
    if mass != 1:
        raise NumericsError(f"empty-bin law has mass {mass}")
    return tuple(out)


def pmf_num_empty(D: int, K: int, f: int) -> PmfTable:
    """Law of the number of empty bins for f nonzeros among D coordinates and K bins."""
    rows = _num_empty_exact(D, K, f)
    return PmfTable([j for j, _ in rows], [float(p) for _, p in rows])


_H_ROWS: dict = {}


def _h_table(d: int, f: int, m_max: int) -> list:
    """H[k][n]: ways to place n nonzeros in k bins of width d, none of them empty.

    Rows are grown on demand and shared by every m for the same (d, f).
    """
    H = _H_ROWS.setdefault((d, f), [[1] + [0] * f])
    combs = [math.comb(d, i) for i in range(d + 1)]
    for k in range(len(H), m_max + 1):
        prev, row = H[k - 1], [0] * (f + 1)
        for n in range(k, min(f, k * d) + 1):
            acc = 0
            for i in range(max(1, n - (k - 1) * d), min(d, n - k + 1) + 1):
                acc += combs[i] * prev[n - i]
            row[n] = acc
        H.append(row)
    return H


@lru_cache(maxsize=4096)
def _bin_nnz_exact(d: int, f: int, m: int) -> tuple:
    if d < 1 or m < 1 or not m <= f <= m * d:
        raise ConfigError(f"empty support for d={d}, f={f}, m={m} (need m <= f <= m*d)")
    H = _h_table(d, f, m)
    lo, hi = max(1, f - (m - 1) * d), min(d, f - m + 1)
    den = H[m][f]
    return tuple((z, Fraction(math.comb(d, z) * H[m - 1][f - z], den)) for z in range(lo, hi + 1))


def pmf_bin_nnz(d: int, f: int, m: int) -> PmfTable:
    """Law of the nonzero count of a given non-empty bin, given m non-empty bins."""
    rows = _bin_nnz_exact(d, f, m)
    return PmfTable([z for z, _ in rows], [float(p) for _, p in rows])


def p_neq(z: int, b: int) -> float:
    """Probability that the b-bit code of a bin with z nonzeros changes."""
    if z < 1 or b < 1:
        raise ValueError("need z >= 1 and b >= 1")
    return (1.0 - 2.0 ** (-b)) / z


def _g(x: np.ndarray, p: float, n: int) -> np.ndarray:
    # binomial pmf; zero outside 0..n
    return binom.pmf(x, n, p)


def _one_plus_thinned(xs, j, m, p_first, p_copy):
    """Law of Bern(p_first) + Binomial(j, p_copy / m)."""
    a = p_copy / m
    return (1.0 - p_first) * _g(xs, a, j) + p_first * _g(xs - 1, a, j)


def pmf_diff_count(
    D: int, K: int, f: int, b: int, variant, model: str = "exact"
) -> PmfTable:
    """Law of X, the number of differing b-bit slots between neighbours.

    Args:
        D, K: dimension and number of bins (K must divide D).
        f: number of nonzeros of the vector that holds the differing coordinate.
        b: bits per code.
        variant: ``oph-fix`` or ``oph-re``.
        model: ``"exact"`` or ``"bin-uniform"`` (see module docstring).
    """
    variant = Variant.parse(variant)
    if variant not in (Variant.OPH_FIX, Variant.OPH_RE):
        raise ConfigError("pmf_diff_count applies to oph-fix and oph-re")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    return _pmf_diff_count(D, K, f, b, variant, model)


@lru_cache(maxsize=1024)
def _pmf_diff_count(D, K, f, b, variant, model):
    d = _check_dk(D, K)
    q = 1.0 - 2.0 ** (-b)
    x_max = min(K, K - math.ceil(f / d) + 1)
    xs = np.arange(x_max + 1)
    out = np.zeros(xs.size)
    fix = variant is Variant.OPH_FIX
    for j, pj in _num_empty_exact(D, K, f):
        m = K - j
        for z, pz in _bin_nnz_exact(d, f, m):
            w = pz * Fraction(z * m, f) if model == "exact" else pz
            w = float(w * pj)
            if w == 0.0:
                continue
            pn = q / z
            if fix and (z >= 2 or model == "bin-uniform"):
                t = np.where(xs == 0, 1.0 - pn, pn * _g(xs - 1, 1.0 / m, j))
            elif fix and m == 1:
                # the neighbour is the zero vector: every slot is a fresh code
                t = _g(xs, q, K)
            elif fix:
                # The only nonzero of the bin is removed; the bin and each slot
                # that copied it pick a new donor among the other m-1 bins.
                # W of those bins carry a code different from the old one.
                W = np.arange(m)
                pw = (W / (m - 1))[:, None]
                t = _g(W, q, m - 1) @ _one_plus_thinned(xs[None, :], j, m, pw, pw)
            else:
                t = _one_plus_thinned(xs, j, m, pn, pn)
            out += w * t
    return PmfTable(xs, out)


def binomial_quantile(level: Fraction, n: int, p: Fraction) -> int:
    """Smallest x with P(Binomial(n, p) <= x) >= level, in exact arithmetic."""
    p = Fraction(p)
    num, den = p.numerator, p.denominator
    total = den ** n
    target = Fraction(level) * total
    acc = 0
    for x in range(n + 1):
        acc += math.comb(n, x) * num ** x * (den - num) ** (n - x)
        if acc >= target:
            return x
    return n


@dataclass(frozen=True)
class DiscountFactor:
    N: int
    D: Optional[int]
    K: int
    f_min: int
    b: int
    delta: float
    variant: Variant
    model: str = "exact"


def discount_factor(
    D: Optional[int], K: int, f_min: int, b: int, delta: float, variant, model: str = "exact"
) -> DiscountFactor:
    """Privacy discount factor N, clamped to [1, K].

    Densified OPH uses the (1 - delta) quantile of :func:`pmf_diff_count`;
    MinHash uses the exact Binomial(K, 1/f_min) quantile. The random-bit
    variants change at most one slot, so N = 1.
    """
    variant = Variant.parse(variant)
    return _discount_factor(D, K, f_min, b, float(delta), variant, model)


@lru_cache(maxsize=1024)
def _discount_factor(D, K, f_min, b, delta, variant, model):
    if variant.pure:
        N = 1
    else:
        if not 0 < delta < 1:
            raise ConfigError(f"delta must be in (0, 1), got {delta}")
        level = 1 - Fraction(delta)
        if variant is Variant.MH:
            N = binomial_quantile(level, K, Fraction(1, f_min))
        else:
            N = pmf_diff_count(D, K, f_min, b, variant, model).quantile(float(level))
    N = int(min(max(N, 1), K))
    return DiscountFactor(N, D, K, f_min, b, delta, variant, model)


def keep_probability(eps_prime: float, b: int) -> float:
    """P(code kept) = e^eps' / (e^eps' + 2^b - 1)."""
    if eps_prime < 0:
        raise ValueError("eps_prime must be >= 0")
    if math.isinf(eps_prime):
        return 1.0
    return 1.0 / (1.0 + ((1 << b) - 1) * math.exp(-eps_prime))


def randomized_response(code, b: int, eps_prime: float, rng: np.random.Generator):
    """Keep each code w.p. e^eps'/(e^eps'+2^b-1), else move to a uniform other code."""
    codes = np.asarray(code, dtype=np.int64)
    B = 1 << b
    if np.any((codes < 0) | (codes >= B)):
        raise ValueError(f"codes must lie in [0, {B - 1}]")
    p = keep_probability(eps_prime, b)
    keep = rng.random(codes.shape) < p
    other = rng.integers(0, B - 1, size=codes.shape)
    other = other + (other >= codes)
    out = np.where(keep, codes, other)
    return int(out) if out.ndim == 0 else out


def rr_output_law(codes, b: int, eps: float) -> np.ndarray:
    """Per-slot output distribution (K, 2^b) for random-bit mechanisms.

    Non-empty slots follow randomized response at level ``eps``; EMPTY slots
    are uniform.
    """
    codes = np.asarray(codes, dtype=np.int64)
    B = 1 << b
    p = keep_probability(eps, b)
    # 1/(e^eps + B - 1) directly; 1 - p cancels badly for large eps
    flip = 1.0 / (math.exp(eps) + B - 1) if eps < 700 else 0.0
    law = np.full((codes.size, B), flip)
    full = codes != EMPTY
    law[np.flatnonzero(full), codes[full]] = p
    law[~full] = 1.0 / B
    return law


def _check_budget(u, budget: PrivacyBudget, allowed) -> None:
    if budget.variant not in allowed:
        raise ConfigError(f"budget variant {budget.variant.value} not valid here")
    if u.nnz < budget.f_min:
        raise BudgetViolation(
            f"vector has {u.nnz} nonzeros < f_min={budget.f_min}; the privacy "
            f"guarantee would not hold"
        )


def _privatized(sig: Signature, budget: PrivacyBudget, N: int, eps_prime: float, codes):
    info = {
        "variant": budget.variant.value,
        "epsilon": budget.epsilon,
        "delta": budget.delta,
        "N": N,
        "eps_prime": eps_prime,
        "f_min": budget.f_min,
    }
    return Signature(codes, "dp-" + budget.variant.value, sig.D, CODE, sig.b, sig.seed, info)


def dp_oph_densified(
    u: SparseBinaryVector,
    p: PermutationSpec,
    L: LookupSequence,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    mixer_seed: Optional[int] = None,
    model: str = "exact",
) -> Signature:
    """DP-OPH-fix / DP-OPH-re: densified OPH, b-bit codes, flips at eps/N."""
    _check_budget(u, budget, (Variant.OPH_FIX, Variant.OPH_RE))
    K = L.K
    raw = oph(u, p, K)
    dense = densify_fix(raw, L) if budget.variant is Variant.OPH_FIX else densify_re(raw, u, p, L)
    coded = b_bit_encode(dense, budget.b, mixer_seed if mixer_seed is not None else p.seed)
    N = discount_factor(p.dim, K, budget.f_min, budget.b, budget.delta, budget.variant, model).N
    eps_prime = budget.epsilon / N
    return _privatized(coded, budget, N, eps_prime,
                       randomized_response(coded.slots, budget.b, eps_prime, rng))


def _random_bits(coded: Signature, budget: PrivacyBudget, rng) -> np.ndarray:
    codes = coded.slots
    empty = codes == EMPTY
    out = np.empty_like(codes)
    out[~empty] = randomized_response(codes[~empty], budget.b, budget.epsilon, rng)
    out[empty] = rng.integers(0, 1 << budget.b, size=int(empty.sum()))
    return out


def dp_oph_rand(
    u: SparseBinaryVector,
    p: PermutationSpec,
    K: int,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    mixer_seed: Optional[int] = None,
) -> Signature:
    """DP-OPH-rand: undensified OPH, flips at eps, uniform codes for empty bins."""
    _check_budget(u, budget, (Variant.OPH_RAND,))
    coded = b_bit_encode(oph(u, p, K), budget.b,
                         mixer_seed if mixer_seed is not None else p.seed, allow_empty=True)
    return _privatized(coded, budget, 1, budget.epsilon, _random_bits(coded, budget, rng))


def dp_minhash(
    u: SparseBinaryVector,
    family: MinHashFamily,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    mixer_seed: Optional[int] = None,
) -> Signature:
    """DP-MH: MinHash, b-bit codes, flips at eps/N with N the exact binomial quantile."""
    _check_budget(u, budget, (Variant.MH,))
    coded = b_bit_encode(minhash(u, family), budget.b,
                         mixer_seed if mixer_seed is not None else family.seed)
    N = discount_factor(None, family.K, budget.f_min, budget.b, budget.delta, Variant.MH).N
    eps_prime = budget.epsilon / N
    return _privatized(coded, budget, N, eps_prime,
                       randomized_response(coded.slots, budget.b, eps_prime, rng))


def dp_bcws(
    u: SparseWeightedVector,
    p: PermutationSpec,
    K: int,
    r: CwsRandomness,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    mixer_seed: Optional[int] = None,
) -> Signature:
    """DP-BCWS: bin-wise CWS indices, flips at eps, uniform codes for empty bins."""
    _check_budget(u, budget, (Variant.BCWS_RAND,))
    coded = b_bit_encode(bcws(u, p, K, r), budget.b,
                         mixer_seed if mixer_seed is not None else p.seed, allow_empty=True)
    return _privatized(coded, budget, 1, budget.epsilon, _random_bits(coded, budget, rng))
