"""Retrieval benchmark: ground truth, sketching whole datasets, ranking and metrics.

``run_experiment`` drives a full sweep from a JSON config and writes one
CSV row per (variant, K, b, epsilon, R).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .data import (
    Dataset,
    SparseBinaryVector,
    SparseWeightedVector,
    binarize,
    filter_min_nnz,
    load_libsvm,
    pad_to_multiple,
)
from .errors import ComparabilityError, ConfigError, DivisibilityError
from .privacy import (
    PrivacyBudget,
    Variant,
    discount_factor,
    dp_bcws,
    dp_minhash,
    dp_oph_densified,
    dp_oph_rand,
)
from .randomness import (
    TAG_NOISE,
    TAG_REPLICATE,
    CwsRandomness,
    MinHashFamily,
    derive_seed,
    lookup_sequence,
    make_permutation,
)
from .sigfile import SignatureSet
from .sketch import (
    b_bit_encode,
    bcws,
    densify_fix,
    densify_re,
    minhash,
    oph,
    weighted_from_binary,
)

logger = logging.getLogger(__name__)

DB_ROLE, QUERY_ROLE = 0, 1


# ground truth -------------------------------------------------------------


def _csr(d: Dataset, weighted: bool) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for r, v in enumerate(d.vectors):
        rows.append(np.full(v.nnz, r))
        cols.append(v.indices - 1)
        if weighted and isinstance(v, SparseWeightedVector):
            vals.append(v.weights)
        else:
            vals.append(np.ones(v.nnz))
    if not rows:
        return sparse.csr_matrix((0, d.dim))
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(d), d.dim),
    )


def similarity_matrix(queries: Dataset, db: Dataset, weighted: bool = False) -> np.ndarray:
    """Exact (weighted) Jaccard between every query and every database vector."""
    if queries.dim != db.dim:
        raise ComparabilityError(f"query dim {queries.dim} != database dim {db.dim}")
    if not weighted:
        Q, B = _csr(queries, False), _csr(db, False)
        inter = np.asarray((Q @ B.T).todense(), dtype=np.float64)
        union = queries.nnz()[:, None] + db.nnz()[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, inter / union, 0.0)
    Q, B = _csr(queries, True).toarray(), _csr(db, True).toarray()
    out = np.empty((len(queries), len(db)))
    for i, q in enumerate(Q):
        mx = np.maximum(q[None, :], B).sum(1)
        mn = np.minimum(q[None, :], B).sum(1)
        out[i] = np.where(mx > 0, mn / np.where(mx > 0, mx, 1), 0.0)
    return out


def rank_by_score(scores: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    """Column order for each row: score descending, then id ascending."""
    ids = np.asarray(ids)
    scores = np.atleast_2d(scores)
    out = np.empty(scores.shape, dtype=np.int64)
    for i, s in enumerate(scores):
        out[i] = np.lexsort((ids, -s))
    return out


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Top neighbours per query: db ids and their exact similarities."""

    query_ids: tuple
    neighbors: np.ndarray
    sims: np.ndarray
    top: int

    def sets(self):
        return [set(row.tolist()) for row in self.neighbors]


def ground_truth(queries: Dataset, db: Dataset, top: int = 50, weighted: bool = False) -> GroundTruth:
    """The ``top`` most similar db vectors per query, ties broken by ascending id."""
    S = similarity_matrix(queries, db, weighted)
    top = min(top, len(db))
    order = rank_by_score(S, db.ids)[:, :top] if len(queries) else np.zeros((0, top), np.int64)
    ids = np.asarray(db.ids)
    return GroundTruth(tuple(queries.ids), ids[order],
                       np.take_along_axis(S, order, axis=1), top)


# retrieval ----------------------------------------------------------------


def collision_counts(Q: np.ndarray, B: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Number of agreeing slots between every row of Q and every row of B."""
    out = np.empty((Q.shape[0], B.shape[0]), dtype=np.int64)
    for s in range(0, Q.shape[0], chunk):
        out[s:s + chunk] = (Q[s:s + chunk, None, :] == B[None, :, :]).sum(-1)
    return out


@dataclass(frozen=True, eq=False)
class RetrievalResult:
    """Per-query precision@R and recall@R (rows follow the query order)."""

    R_grid: tuple
    precision: np.ndarray
    recall: np.ndarray
    ranked: np.ndarray

    def mean_precision(self) -> np.ndarray:
        return self.precision.mean(0)

    def mean_recall(self) -> np.ndarray:
        return self.recall.mean(0)


def retrieve(
    query_sigs: SignatureSet,
    db_sigs: SignatureSet,
    gt: GroundTruth,
    R_grid: Sequence[int] = (10,),
) -> RetrievalResult:
    """Rank db vectors by collision estimate per query and score against ``gt``."""
    query_sigs.check_comparable(db_sigs)
    if tuple(query_sigs.ids) != tuple(gt.query_ids):
        raise ComparabilityError("ground truth was built for a different query set")
    R_grid = tuple(int(r) for r in R_grid)
    nb = len(db_sigs)
    if any(r < 1 or r > nb for r in R_grid):
        raise ConfigError(f"every R must lie in [1, {nb}]")
    scores = collision_counts(query_sigs.codes, db_sigs.codes)
    order = rank_by_score(scores, db_sigs.ids)
    ranked = np.asarray(db_sigs.ids)[order]
    truth = gt.sets()
    prec = np.empty((len(query_sigs), len(R_grid)))
    rec = np.empty_like(prec)
    for i, row in enumerate(ranked):
        for c, R in enumerate(R_grid):
            tp = len(truth[i].intersection(row[:R].tolist()))
            prec[i, c] = tp / R
            rec[i, c] = tp / gt.top
    return RetrievalResult(R_grid, prec, rec, ranked)


# sketching whole datasets ---------------------------------------------------


@dataclass(frozen=True)
class SketchParams:
    variant: Variant
    K: int
    b: int
    seed: int
    epsilon: Optional[float] = None
    delta: float = 1e-6
    f_min: int = 1
    noise_seed: int = 0
    model: str = "exact"

    @property
    def private(self) -> bool:
        return self.epsilon is not None


def _noise_rng(noise_seed: int, role: int, vid: int) -> np.random.Generator:
    return np.random.default_rng([noise_seed & (2 ** 63 - 1), role, vid])


def sketch_dataset(d: Dataset, prm: SketchParams, role: int = DB_ROLE) -> SignatureSet:
    """Sketch (and optionally privatize) every vector of ``d``.

    Public randomness is derived from ``prm.seed`` and is shared by every
    vector and every role; the privatization noise of each vector is seeded
    by (noise_seed, role, id), so results do not depend on vector order.
    """
    v = Variant.parse(prm.variant)
    D, K = d.dim, prm.K
    if K < 1 or (D % K and v is not Variant.MH):
        raise DivisibilityError(D, K)
    if not len(d):
        raise ConfigError("cannot sketch an empty dataset")
    weighted = v is Variant.BCWS_RAND
    if not weighted and not d.is_binary:
        d = binarize(d)
    if v is Variant.MH:
        fam = MinHashFamily(prm.seed, D, K)
    else:
        p = make_permutation(prm.seed, D)
        L = lookup_sequence(prm.seed, K)
        cw = CwsRandomness(prm.seed)
    sigs = []
    if prm.private:
        budget = PrivacyBudget(prm.epsilon, prm.delta, prm.b, prm.f_min, v)
        for vid, u in zip(d.ids, d.vectors):
            rng = _noise_rng(prm.noise_seed, role, vid)
            if v in (Variant.OPH_FIX, Variant.OPH_RE):
                s = dp_oph_densified(u, p, L, budget, rng, model=prm.model)
            elif v is Variant.OPH_RAND:
                s = dp_oph_rand(u, p, K, budget, rng)
            elif v is Variant.MH:
                s = dp_minhash(u, fam, budget, rng)
            else:
                w = u if isinstance(u, SparseWeightedVector) else weighted_from_binary(u)
                s = dp_bcws(w, p, K, cw, budget, rng)
            sigs.append(s)
        priv = dict(sigs[0].privacy, noise_seed=prm.noise_seed)
        return SignatureSet.from_signatures(sigs, d.ids, priv)
    for u in d.vectors:
        if v is Variant.MH:
            s = minhash(u, fam)
        elif v is Variant.BCWS_RAND:
            w = u if isinstance(u, SparseWeightedVector) else weighted_from_binary(u)
            s = bcws(w, p, K, cw)
        else:
            s = oph(u, p, K)
            if v is Variant.OPH_FIX:
                s = densify_fix(s, L)
            elif v is Variant.OPH_RE:
                s = densify_re(s, u, p, L)
        sigs.append(b_bit_encode(s, prm.b, prm.seed, allow_empty=True))
    return SignatureSet.from_signatures(sigs, d.ids, {})


# experiment orchestration -------------------------------------------------

CSV_HEADER = ["dataset", "variant", "K", "b", "epsilon", "N", "R", "precision",
              "precision_se", "recall", "recall_se", "runs", "n_db", "n_queries"]

_DEFAULTS = {
    "name": "experiment",
    "dataset": None,
    "queries": None,
    "n_queries": 200,
    "dim": None,
    "pad": True,
    "f_min": 1,
    "delta": 1e-6,
    "K": [64],
    "b": [1],
    "variants": ["oph-fix", "oph-re", "oph-rand", "mh"],
    "epsilon": ["inf"],
    "runs": 5,
    "seed": 0,
    "R": [10],
    "top": 50,
    "pmf_model": "exact",
    "synthetic": None,
}


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def parse_epsilon(x) -> Optional[float]:
    """Epsilon from config/CLI; ``inf``/``none`` means no privatization."""
    if x is None:
        return None
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "infinity", "none", "nonprivate", "non-private"):
            return None
        try:
            x = float(s)
        except ValueError:
            raise ConfigError(f"epsilon: cannot parse {x!r}") from None
    x = float(x)
    if math.isinf(x):
        return None
    if not x > 0:
        raise ConfigError(f"epsilon must be > 0, got {x}")
    return x


def load_config(cfg) -> dict:
    """Validate a config dict (or JSON path) and fill defaults."""
    base = None
    if isinstance(cfg, (str, os.PathLike)):
        base = os.path.dirname(os.path.abspath(cfg))
        with open(cfg) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    c = dict(_DEFAULTS, **cfg)
    if (c["dataset"] is None) == (c["synthetic"] is None):
        raise ConfigError("config needs exactly one of 'dataset' or 'synthetic'")
    for key in ("dataset", "queries"):
        if c[key] is not None and base is not None and not os.path.isabs(c[key]):
            cand = os.path.join(base, c[key])
            if not os.path.exists(c[key]) and os.path.exists(cand):
                c[key] = cand
    for key in ("K", "b", "R", "variants", "epsilon"):
        c[key] = _as_list(c[key])
        if not c[key]:
            raise ConfigError(f"field '{key}' must not be empty")
    for key in ("K", "b", "R"):
        for x in c[key]:
            if not isinstance(x, int) or isinstance(x, bool) or x < 1:
                raise ConfigError(f"field '{key}': expected positive integers, got {x!r}")
    for x in c["b"]:
        if x > 16:
            raise ConfigError(f"field 'b': {x} exceeds 16")
    c["variants"] = [Variant.parse(v).value for v in c["variants"]]
    c["epsilon"] = [parse_epsilon(e) for e in c["epsilon"]]
    for key in ("runs", "f_min", "top"):
        if not isinstance(c[key], int) or c[key] < 1:
            raise ConfigError(f"field '{key}' must be a positive integer")
    if not isinstance(c["seed"], int):
        raise ConfigError("field 'seed' must be an integer")
    if not 0 <= float(c["delta"]) < 1:
        raise ConfigError("field 'delta' must lie in [0, 1)")
    if c["pmf_model"] not in ("exact", "bin-uniform"):
        raise ConfigError("field 'pmf_model' must be 'exact' or 'bin-uniform'")
    return c


def synthetic_dataset(n: int, D: int, seed: int = 0, clusters: int = 10,
                      f_range=(20, 60), noise: float = 0.3) -> Dataset:
    """Clustered binary data: each vector keeps most of a cluster prototype and adds noise."""
    rng = np.random.default_rng(seed)
    protos = [rng.choice(D, rng.integers(f_range[0], f_range[1] + 1), replace=False)
              for _ in range(clusters)]
    vecs = []
    for i in range(n):
        base = protos[i % clusters]
        keep = base[rng.random(base.size) >= noise]
        extra = rng.choice(D, max(1, int(noise * base.size)), replace=False)
        vecs.append(SparseBinaryVector(D, np.unique(np.concatenate([keep, extra])) + 1))
    return Dataset(D, tuple(vecs), tuple(str(i % clusters) for i in range(n)))


def prepare_data(c: dict, K_max: int):
    """Load, filter and split the data of a config; returns (raw_db, raw_q)."""
    if c["synthetic"] is not None:
        s = dict(c["synthetic"])
        full = synthetic_dataset(int(s.pop("n", 200)), int(s.pop("D", 256)), **s)
    else:
        full = load_libsvm(c["dataset"], c["dim"])
    queries = None
    if c["queries"] is not None:
        queries = load_libsvm(c["queries"], c["dim"])
        dim = max(full.dim, queries.dim)
        full, queries = full.with_dim(dim), queries.with_dim(dim)
    before = len(full)
    full = filter_min_nnz(full, c["f_min"])
    if before and len(full) < before:
        logger.info("retained %d of %d vectors at f_min=%d", len(full), before, c["f_min"])
    if queries is None:
        nq = c["n_queries"]
        if not 0 < nq < len(full):
            raise ConfigError(f"n_queries={nq} must be in [1, {len(full) - 1}]")
        queries = full.subset(range(nq))
        db = full.subset(range(nq, len(full)))
    else:
        queries = filter_min_nnz(queries, c["f_min"])
        db = full
    return db, queries


def _pad(d: Dataset, K: int, pad: bool) -> Dataset:
    if d.dim % K == 0:
        return d
    if not pad:
        raise DivisibilityError(d.dim, K)
    return pad_to_multiple(d, K)


def run_experiment(config, out=None) -> list:
    """Run a retrieval sweep and return CSV rows (also written to ``out`` if given).

    Every number in the output is a deterministic function of (config, seed).
    """
    c = load_config(config)
    db_raw, q_raw = prepare_data(c, max(c["K"]))
    if max(c["R"]) > len(db_raw):
        raise ConfigError(f"R={max(c['R'])} exceeds the database size {len(db_raw)}")
    rows = []
    gt_cache = {}
    for K in c["K"]:
        db_w, q_w = _pad(db_raw, K, c["pad"]), _pad(q_raw, K, c["pad"])
        db_b, q_b = binarize(db_w), binarize(q_w)
        for b in c["b"]:
            for vname in c["variants"]:
                v = Variant.parse(vname)
                weighted = v is Variant.BCWS_RAND
                db, q = (db_w, q_w) if weighted else (db_b, q_b)
                key = (db.dim, weighted)
                if key not in gt_cache:
                    gt_cache[key] = ground_truth(q, db, c["top"], weighted)
                gt = gt_cache[key]
                for eps in c["epsilon"]:
                    prec, rec = [], []
                    N = ""
                    for run in range(c["runs"]):
                        pub = derive_seed(c["seed"], TAG_REPLICATE, run, 1)
                        noise = derive_seed(c["seed"], TAG_NOISE, run, 2)
                        prm = SketchParams(v, K, b, pub, eps, c["delta"], c["f_min"], noise,
                                           c["pmf_model"])
                        sq = sketch_dataset(q, prm, QUERY_ROLE)
                        sd = sketch_dataset(db, prm, DB_ROLE)
                        res = retrieve(sq, sd, gt, c["R"])
                        prec.append(res.mean_precision())
                        rec.append(res.mean_recall())
                        if eps is not None:
                            N = sd.privacy.get("N", "")
                    prec, rec = np.array(prec), np.array(rec)
                    se = (lambda a: a.std(0, ddof=1) / math.sqrt(len(a)) if len(a) > 1
                          else np.zeros(a.shape[1]))
                    for ci, R in enumerate(c["R"]):
                        rows.append([c["name"], v.value, K, b,
                                     "inf" if eps is None else f"{eps:g}", N, R,
                                     f"{prec[:, ci].mean():.6f}", f"{se(prec)[ci]:.6f}",
                                     f"{rec[:, ci].mean():.6f}", f"{se(rec)[ci]:.6f}",
                                     c["runs"], len(db), len(q)])
                    logger.info("%s K=%d b=%d eps=%s: precision@%d=%s", v.value, K, b,
                                eps, c["R"][0], rows[-len(c["R"])][7])
    if out is not None:
        write_csv(rows, out, CSV_HEADER)
    return rows


def write_csv(rows, out, header) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())


def discount_table(D_grid, K_grid, f_grid, b_grid, delta: float, variants, model="exact"):
    """Rows (variant, D, K, f, b, delta, N) for discount-factor sweeps."""
    rows = []
    for vname in variants:
        v = Variant.parse(vname)
        for D in D_grid:
            for K in K_grid:
                for f in f_grid:
                    for b in b_grid:
                        if v.pure:
                            N = 1
                        elif v is Variant.MH:
                            N = discount_factor(None, K, f, b, delta, v).N
                        else:
                            if D % K:
                                raise DivisibilityError(D, K)
                            if f > D:
                                continue
                            N = discount_factor(D, K, f, b, delta, v, model).N
                        rows.append([v.value, D, K, f, b, f"{delta:g}", N])
    return rows


TABLE_HEADER = ["variant", "D", "K", "f", "b", "delta", "N"]
