"""Command line front-end (``dpoph``).

Exit codes: 0 success, 2 configuration/input error, 3 numerics error,
4 privacy budget violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .bench import (
    CSV_HEADER,
    DB_ROLE,
    QUERY_ROLE,
    TABLE_HEADER,
    SketchParams,
    discount_table,
    ground_truth,
    parse_epsilon,
    retrieve,
    run_experiment,
    sketch_dataset,
    write_csv,
)
from .data import binarize, filter_min_nnz, load_libsvm, pad_to_multiple
from .errors import BudgetViolation, ConfigError, DivisibilityError, DpophError
from .estimate import MSE_HEADER, mse_sim
from .privacy import Variant
from .randomness import TAG_NOISE, TAG_REPLICATE, derive_seed
from .sigfile import read_signatures, signatures_to_csv, write_signatures

VARIANTS = [v.value for v in Variant]


def _out(path):
    return sys.stdout if path in (None, "-") else path


def _load(path, dim, K, pad):
    d = load_libsvm(path, dim)
    if d.dim % K:
        if not pad:
            raise DivisibilityError(d.dim, K)
        d = pad_to_multiple(d, K)
    return d


def _add_data(p, queries=False):
    p.add_argument("--dataset", required=True, help="libsvm file (optionally .gz)")
    if queries:
        p.add_argument("--queries", help="libsvm query file; default: split off the dataset")
        p.add_argument("--n-queries", type=int, default=200,
                       help="queries split from the front of --dataset when --queries is absent")
    p.add_argument("--D", type=int, default=None, help="dimension (at least the max index)")
    p.add_argument("--pad", action="store_true", help="zero-pad D up to a multiple of K")


def _add_sketch(p, private):
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--b", type=int, default=1)
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--seed", type=int, default=0, help="master seed of the public randomness")
    if private:
        p.add_argument("--epsilon", required=True, help="privacy level, or 'inf'")
        p.add_argument("--delta", type=float, default=1e-6)
        p.add_argument("--f-min", type=int, default=1)
        p.add_argument("--noise-seed", type=int, default=None,
                       help="seed of the privatization noise (default: derived from --seed)")
        p.add_argument("--pmf-model", choices=["exact", "bin-uniform"], default="exact")
        p.add_argument("--drop-sparse", action="store_true",
                       help="drop vectors with fewer than --f-min nonzeros instead of failing")


def cmd_tables(a):
    rows = discount_table(a.D, a.K, a.f, a.b, a.delta, a.variant, a.pmf_model)
    write_csv(rows, _out(a.out), TABLE_HEADER)


def _sketch_params(a, private):
    eps = parse_epsilon(a.epsilon) if private else None
    noise = a.noise_seed if private and a.noise_seed is not None else derive_seed(a.seed, TAG_NOISE, 0)
    return SketchParams(Variant.parse(a.variant), a.K, a.b, a.seed, eps,
                        a.delta if private else 1e-6, a.f_min if private else 1, noise,
                        a.pmf_model if private else "exact")


def _apply_f_min(d, a):
    if not a.drop_sparse:
        short = [i for i, v in zip(d.ids, d.vectors) if v.nnz < a.f_min]
        if short:
            raise BudgetViolation(
                f"{len(short)} vector(s) have fewer than f_min={a.f_min} nonzeros "
                f"(first id {short[0]}); pass --drop-sparse to filter them"
            )
        return d
    return filter_min_nnz(d, a.f_min)


def _sketch(a, private):
    d = _load(a.dataset, a.D, a.K, a.pad)
    if private:
        d = _apply_f_min(d, a)
    prm = _sketch_params(a, private)
    s = sketch_dataset(d, prm, QUERY_ROLE if getattr(a, "role", "db") == "query" else DB_ROLE)
    if a.out in (None, "-"):
        signatures_to_csv(s, sys.stdout)
    else:
        write_signatures(s, a.out)
    if a.csv:
        signatures_to_csv(s, a.csv)


def cmd_sketch(a):
    _sketch(a, False)


def cmd_dp_sketch(a):
    _sketch(a, True)


def _split(a):
    d = _load(a.dataset, a.D, a.K, a.pad)
    if a.queries:
        q = load_libsvm(a.queries, a.D)
        dim = max(d.dim, q.dim)
        if dim % a.K:
            if not a.pad:
                raise DivisibilityError(dim, a.K)
            dim = -(-dim // a.K) * a.K
        return d.with_dim(dim), q.with_dim(dim)
    n = a.n_queries
    if not 0 < n < len(d):
        raise ConfigError(f"--n-queries must be in [1, {len(d) - 1}]")
    return d.subset(range(n, len(d))), d.subset(range(n))


def cmd_retrieve(a):
    db, q = _split(a)
    eps = parse_epsilon(a.epsilon)
    if eps is not None:
        db, q = _apply_f_min(db, a), _apply_f_min(q, a)
    v = Variant.parse(a.variant)
    weighted = v is Variant.BCWS_RAND
    if not weighted:
        db, q = binarize(db), binarize(q)
    gt = ground_truth(q, db, a.top, weighted)
    prec, rec = [], []
    N = ""
    for run in range(a.runs):
        pub = derive_seed(a.seed, TAG_REPLICATE, run, 1)
        noise = derive_seed(a.seed, TAG_NOISE, run, 2)
        prm = SketchParams(v, a.K, a.b, pub, eps, a.delta, a.f_min, noise, a.pmf_model)
        sd = sketch_dataset(db, prm, DB_ROLE)
        res = retrieve(sketch_dataset(q, prm, QUERY_ROLE), sd, gt, a.R)
        prec.append(res.mean_precision())
        rec.append(res.mean_recall())
        N = sd.privacy.get("N", "")
    prec, rec = np.array(prec), np.array(rec)
    se = lambda x: x.std(0, ddof=1) / np.sqrt(len(x)) if len(x) > 1 else np.zeros(x.shape[1])
    rows = [["cli", v.value, a.K, a.b, "inf" if eps is None else f"{eps:g}", N, R,
             f"{prec[:, i].mean():.6f}", f"{se(prec)[i]:.6f}", f"{rec[:, i].mean():.6f}",
             f"{se(rec)[i]:.6f}", a.runs, len(db), len(q)] for i, R in enumerate(a.R)]
    write_csv(rows, _out(a.out), CSV_HEADER)


def cmd_eval(a):
    sd, sq = read_signatures(a.db_sigs), read_signatures(a.query_sigs)
    db = load_libsvm(a.dataset, sd.D).with_dim(sd.D)
    q = load_libsvm(a.queries, sq.D).with_dim(sq.D)
    by_id = {i: p for p, i in enumerate(db.ids)}
    db = db.subset([by_id[i] for i in sd.ids])
    by_id = {i: p for p, i in enumerate(q.ids)}
    q = q.subset([by_id[i] for i in sq.ids])
    weighted = sd.scheme.endswith("bcws")
    if not weighted:
        db, q = binarize(db), binarize(q)
    res = retrieve(sq, sd, ground_truth(q, db, a.top, weighted), a.R)
    rows = [[R, f"{p:.6f}", f"{r:.6f}"]
            for R, p, r in zip(a.R, res.mean_precision(), res.mean_recall())]
    write_csv(rows, _out(a.out), ["R", "precision", "recall"])


def cmd_mse_sim(a):
    eps = [parse_epsilon(e) for e in a.epsilon]
    eps = [float("inf") if e is None else e for e in eps]
    rows = mse_sim(a.D, a.K, a.b, a.J, a.f, eps, a.delta, a.replicates, a.seed,
                   a.variant, a.pmf_model)
    write_csv([r.as_csv() for r in rows], _out(a.out), MSE_HEADER)


def cmd_run(a):
    run_experiment(a.config, _out(a.out))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpoph", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tables", help="privacy discount factors N as CSV")
    p.add_argument("--D", type=int, nargs="+", default=[1024])
    p.add_argument("--K", type=int, nargs="+", default=[64])
    p.add_argument("--f", "--f-min", dest="f", type=int, nargs="+", default=[64, 128, 256, 512])
    p.add_argument("--b", type=int, nargs="+", default=[1])
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--variant", nargs="+", choices=VARIANTS, default=["oph-fix", "oph-re", "mh"])
    p.add_argument("--pmf-model", choices=["exact", "bin-uniform"], default="exact")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tables)

    for name, private, fn, hlp in (("sketch", False, cmd_sketch, "non-private signatures"),
                                   ("dp-sketch", True, cmd_dp_sketch, "privatized signatures")):
        p = sub.add_parser(name, help=hlp)
        _add_data(p)
        _add_sketch(p, private)
        p.add_argument("--role", choices=["db", "query"], default="db",
                       help="keeps query and database noise streams apart")
        p.add_argument("--out", help="binary signature file (default: CSV to stdout)")
        p.add_argument("--csv", help="also write the CSV debug form here")
        p.set_defaults(func=fn)

    p = sub.add_parser("retrieve", help="sketch, privatize and score retrieval in one go")
    _add_data(p, queries=True)
    _add_sketch(p, True)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--R", type=int, nargs="+", default=[10])
    p.add_argument("--top", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="metrics from stored signature files")
    p.add_argument("--db-sigs", required=True)
    p.add_argument("--query-sigs", required=True)
    p.add_argument("--dataset", required=True, help="libsvm file the database signatures came from")
    p.add_argument("--queries", required=True, help="libsvm file the query signatures came from")
    p.add_argument("--R", type=int, nargs="+", default=[10])
    p.add_argument("--top", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mse-sim", help="MSE of the debiased Jaccard estimator")
    p.add_argument("--D", type=int, default=1024)
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--b", type=int, default=1)
    p.add_argument("--J", type=float, default=1 / 3)
    p.add_argument("--f", type=int, nargs="+", default=[128, 512])
    p.add_argument("--epsilon", nargs="+", default=["5", "10"])
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", nargs="+", choices=["oph-fix", "oph-re", "mh"],
                   default=["oph-fix", "oph-re", "mh"])
    p.add_argument("--pmf-model", choices=["exact", "bin-uniform"], default="exact")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mse_sim)

    p = sub.add_parser("run", help="run a retrieval sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        a.func(a)
    except DpophError as e:
        print(f"dpoph: error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"dpoph: error: {e}", file=sys.stderr)
        return 2
    except ArithmeticError as e:
        print(f"dpoph: numerics error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
