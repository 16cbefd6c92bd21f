"""Jaccard estimators over signatures and the MSE simulation study."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import SparseBinaryVector
from .errors import ComparabilityError, ConfigError
from .privacy import Variant, discount_factor, keep_probability, randomized_response
from .randomness import (
    TAG_NOISE,
    TAG_REPLICATE,
    MinHashFamily,
    derive_seed,
    lookup_sequence,
    make_permutation,
)
from .sketch import EMPTY, Signature, b_bit_encode, densify_fix, densify_re, minhash, oph


@dataclass(frozen=True)
class EstimatorConfig:
    """Parameters of the debiased estimator; ``p_keep`` is the per-slot keep probability."""

    b: int
    p_keep: float
    debias: bool = True

    def __post_init__(self):
        if not 1 <= self.b <= 16:
            raise ConfigError(f"b must be in 1..16, got {self.b}")
        if not 0 < self.p_keep <= 1:
            raise ConfigError(f"p_keep must be in (0, 1], got {self.p_keep}")

    @classmethod
    def for_budget(cls, b: int, epsilon: float, N: int = 1) -> "EstimatorConfig":
        return cls(b, keep_probability(epsilon / N, b))


def comparable(s: Signature, t: Signature) -> None:
    if s.meta() != t.meta():
        raise ComparabilityError(f"signatures are not comparable: {s.meta()} vs {t.meta()}")


def collision_estimate(s: Signature, t: Signature) -> float:
    """Fraction of slots on which two signatures agree (EMPTY matches only EMPTY)."""
    comparable(s, t)
    return float(np.mean(s.slots == t.slots))


def debias(J_hat, cfg: EstimatorConfig):
    """Unbiased Jaccard estimate from a collision rate of privatized b-bit codes.

    Returns (2^b - 1)(2^b J_hat - 1) / (2^b p - 1)^2, unclamped.
    """
    B = 1 << cfg.b
    den = (B * cfg.p_keep - 1.0) ** 2
    if not B * cfg.p_keep - 1.0 > 0:
        raise ConfigError(
            f"p_keep={cfg.p_keep} <= 1/2^b; codes carry no information and cannot be debiased"
        )
    return (B - 1) * (B * np.asarray(J_hat, dtype=float) - 1.0) / den


def pair_with_jaccard(D: int, f: int, J: float) -> tuple[SparseBinaryVector, SparseBinaryVector]:
    """Two vectors with f nonzeros each and Jaccard exactly J.

    The a = 2fJ/(1+J) shared indices come first, then a private block for
    each vector.
    """
    a_real = 2 * f * J / (1 + J)
    a = round(a_real)
    if f < 1 or abs(a - a_real) > 1e-9:
        # nearest f for which 2fJ/(1+J) is an integer
        cands = [g for g in range(max(1, f - 64), f + 65)
                 if abs(2 * g * J / (1 + J) - round(2 * g * J / (1 + J))) < 1e-9]
        hint = min(cands, key=lambda g: abs(g - f)) if cands else None
        raise ConfigError(
            f"f={f} with J={J} needs an intersection of {a_real:.4g} nonzeros, which is not "
            f"an integer" + (f"; nearest feasible f is {hint}" if hint else "")
        )
    if 2 * f - a > D:
        raise ConfigError(f"pair needs {2 * f - a} coordinates but D={D}")
    shared = np.arange(1, a + 1)
    u = np.concatenate([shared, np.arange(a + 1, f + 1)])
    v = np.concatenate([shared, np.arange(f + 1, 2 * f - a + 1)])
    return SparseBinaryVector(D, u), SparseBinaryVector(D, v)


@dataclass(frozen=True)
class MseRow:
    variant: str
    f: int
    epsilon: float
    mse: float
    stderr: float
    replicates: int
    bias: float = 0.0

    def as_csv(self) -> list:
        return [self.variant, self.f, _fmt(self.epsilon), f"{self.mse:.10g}",
                f"{self.stderr:.10g}", self.replicates]


MSE_HEADER = ["variant", "f", "epsilon", "mse", "stderr", "replicates"]


def _fmt(x) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


def _replicate_codes(u, v, D, K, b, seed, variants):
    """Non-private b-bit codes of (u, v) for each variant under one replicate's seeds.

    The densified variants share the permutation and lookup orders (common
    random numbers), which sharpens comparisons between them.
    """
    out = {}
    p = make_permutation(seed, D)
    L = None
    for var in variants:
        if var is Variant.MH:
            fam = MinHashFamily(derive_seed(seed, TAG_REPLICATE, 1), D, K)
            su, sv = minhash(u, fam), minhash(v, fam)
        else:
            L = L or lookup_sequence(derive_seed(seed, TAG_REPLICATE, 2), K)
            ou, ov = oph(u, p, K), oph(v, p, K)
            if var is Variant.OPH_FIX:
                su, sv = densify_fix(ou, L), densify_fix(ov, L)
            elif var is Variant.OPH_RE:
                su, sv = densify_re(ou, u, p, L), densify_re(ov, v, p, L)
            else:
                raise ConfigError(f"mse_sim does not support {var.value}")
        mix = derive_seed(seed, TAG_REPLICATE, 3)
        out[var] = (b_bit_encode(su, b, mix).slots, b_bit_encode(sv, b, mix).slots)
    return out


def mse_sim(
    D: int,
    K: int,
    b: int,
    J_target: float,
    f_grid: Sequence[int],
    eps_grid: Sequence[float],
    delta: float,
    replicates: int,
    seed: int = 0,
    variants: Iterable = ("oph-fix", "oph-re", "mh"),
    model: str = "exact",
    return_errors: bool = False,
):
    """Empirical MSE of the debiased Jaccard estimator for each (variant, f, epsilon).

    Every replicate draws fresh public seeds and fresh noise from seeds
    derived from (seed, replicate), so results do not depend on execution
    order. f_min is set to f for the privacy calculus.

    Returns a list of :class:`MseRow`; with ``return_errors`` also a dict of
    per-replicate errors keyed by (variant, f, epsilon).
    """
    variants = [Variant.parse(v) for v in variants]
    if replicates < 2:
        raise ConfigError("need at least 2 replicates")
    errs = {}
    for f in f_grid:
        u, v = pair_with_jaccard(D, f, J_target)
        cfgs = {}
        for var in variants:
            N = discount_factor(D if var is not Variant.MH else None, K, f, b, delta, var, model).N
            for eps in eps_grid:
                cfgs[var, eps] = (eps / N, EstimatorConfig.for_budget(b, eps, N))
                errs[var.value, f, eps] = np.empty(replicates)
        for r in range(replicates):
            rseed = derive_seed(seed, TAG_REPLICATE, r, f)
            codes = _replicate_codes(u, v, D, K, b, rseed, variants)
            # same noise streams for every epsilon and variant
            nseed = derive_seed(seed, TAG_NOISE, r, f)
            for eps in eps_grid:
                for var in variants:
                    cu, cv = codes[var]
                    eps_prime, cfg = cfgs[var, eps]
                    rng_u = np.random.default_rng([nseed, 0])
                    rng_v = np.random.default_rng([nseed, 1])
                    nu = randomized_response(cu, b, eps_prime, rng_u)
                    nv = randomized_response(cv, b, eps_prime, rng_v)
                    est = debias(np.mean(nu == nv), cfg)
                    errs[var.value, f, eps][r] = est - J_target
    rows = []
    for (var, f, eps), e in errs.items():
        sq = e ** 2
        rows.append(MseRow(var, f, eps, float(sq.mean()),
                           float(sq.std(ddof=1) / math.sqrt(len(sq))), len(sq), float(e.mean())))
    rows.sort(key=lambda r: (r.f, r.epsilon, [x.value for x in variants].index(r.variant)))
    return (rows, errs) if return_errors else rows
