import io
import json
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpoph.bench import (
    CSV_HEADER,
    DB_ROLE,
    QUERY_ROLE,
    SketchParams,
    discount_table,
    ground_truth,
    load_config,
    parse_epsilon,
    prepare_data,
    rank_by_score,
    retrieve,
    run_experiment,
    similarity_matrix,
    sketch_dataset,
)
from dpoph.data import (
    Dataset,
    SparseWeightedVector,
    binarize,
    from_rows,
    jaccard,
    load_libsvm,
    pad_to_multiple,
    weighted_jaccard,
)
from dpoph.errors import ComparabilityError, ConfigError, DivisibilityError
from dpoph.estimate import EstimatorConfig, debias
from dpoph.privacy import Variant
from dpoph.sigfile import SignatureSet

from conftest import CONFIGS, MNIST


@pytest.fixture(scope="module")
def mnist():
    return binarize(load_libsvm(MNIST, 784))


# ground truth ---------------------------------------------------------------------


def test_ground_truth_examples():
    db = from_rows(8, [[1, 2], [2, 3, 4], [5], [1, 2, 3]])
    q = from_rows(8, [[2, 3, 4], [7, 8]])
    gt = ground_truth(q, db, top=3)
    assert gt.neighbors[0, 0] == 1 and gt.sims[0, 0] == 1.0
    # disjoint query: every J is 0, so the smallest ids win
    assert gt.neighbors[1].tolist() == [0, 1, 2] and not gt.sims[1].any()
    assert gt.sims[0].tolist() == sorted(gt.sims[0].tolist(), reverse=True)
    u, v = from_rows(5, [[1, 2, 3]]), from_rows(5, [[2, 3, 4]])
    assert similarity_matrix(u, v)[0, 0] == 0.5


def test_ground_truth_size_and_dims():
    db = from_rows(8, [[1], [2]])
    assert ground_truth(from_rows(8, [[1]]), db, top=50).neighbors.shape == (1, 2)
    with pytest.raises(ComparabilityError):
        ground_truth(from_rows(9, [[1]]), db)


def test_rank_ties_by_id():
    assert rank_by_score(np.array([1.0, 2.0, 2.0, 1.0]), [9, 7, 3, 1]).tolist() == [[2, 1, 3, 0]]


sets = st.lists(st.sets(st.integers(1, 20), min_size=1, max_size=12), min_size=2, max_size=8)


@given(sets, sets)
@settings(max_examples=50, deadline=None)
def test_similarity_matrix_matches_pairwise(qs, ds):
    q, d = from_rows(20, [sorted(x) for x in qs]), from_rows(20, [sorted(x) for x in ds])
    S = similarity_matrix(q, d)
    want = np.array([[jaccard(a, b) for b in d.vectors] for a in q.vectors])
    assert np.allclose(S, want, atol=1e-15)


def test_weighted_similarity_matches_pairwise():
    rng = np.random.default_rng(0)
    vecs = tuple(SparseWeightedVector(30, np.sort(rng.choice(30, 10, replace=False)) + 1,
                                      rng.gamma(1.0, 1.0, 10)) for _ in range(6))
    d = Dataset(30, vecs)
    S = similarity_matrix(d, d, weighted=True)
    want = np.array([[weighted_jaccard(a, b) for b in vecs] for a in vecs])
    assert np.allclose(S, want)


# retrieval ---------------------------------------------------------------------------


def small_case(mnist, variant="oph-re", K=64, b=2, eps=None, n_db=300, n_q=40, seed=1):
    q, db = mnist.subset(range(n_q)), mnist.subset(range(n_q, n_q + n_db))
    q, db = pad_to_multiple(q, K), pad_to_multiple(db, K)
    gt = ground_truth(q, db, 50)
    prm = SketchParams(Variant.parse(variant), K, b, seed, eps, 1e-6, 50, seed + 1)
    return sketch_dataset(q, prm, QUERY_ROLE), sketch_dataset(db, prm, DB_ROLE), gt


def test_retrieve_identities(mnist):
    sq, sd, gt = small_case(mnist)
    res = retrieve(sq, sd, gt, [10, 50, len(sd)])
    assert np.all(res.recall[:, 2] == 1.0)
    for c, R in enumerate(res.R_grid):
        assert np.allclose(res.precision[:, c] * R, res.recall[:, c] * 50)
    assert ((res.precision >= 0) & (res.precision <= 1)).all()
    assert res.ranked.shape == (len(sq), len(sd))
    with pytest.raises(ConfigError):
        retrieve(sq, sd, gt, [len(sd) + 1])


def test_retrieve_errors(mnist):
    sq, sd, gt = small_case(mnist)
    other = small_case(mnist, seed=2)[1]
    with pytest.raises(ComparabilityError):
        retrieve(sq, other, gt)
    with pytest.raises(ComparabilityError):
        retrieve(sd, sd, gt)


def test_retrieve_breaks_ties_by_id():
    codes = np.array([[1, 1], [0, 0], [1, 0], [1, 1]])
    sd = SignatureSet(codes, "oph-re", 4, "code", 1, 0, (5, 2, 9, 3))
    sq = SignatureSet(np.array([[1, 1]]), "oph-re", 4, "code", 1, 0, (0,))
    gt = ground_truth(from_rows(4, [[1]]), from_rows(4, [[1], [1], [1], [1]]), top=2)
    gt = type(gt)((0,), gt.neighbors, gt.sims, gt.top)
    assert retrieve(sq, sd, gt, [4]).ranked[0].tolist() == [3, 5, 9, 2]


def test_debiased_ranking_equals_collision_ranking(mnist):
    sq, sd, gt = small_case(mnist, eps=5.0)
    cfg = EstimatorConfig.for_budget(2, 5.0, sd.privacy["N"])
    hits = (sq.codes[:, None, :] == sd.codes[None, :, :]).mean(-1)
    a = rank_by_score(hits, sd.ids)
    b = rank_by_score(debias(hits, cfg), sd.ids)
    assert np.array_equal(a, b)
    assert np.array_equal(np.asarray(sd.ids)[a], retrieve(sq, sd, gt).ranked)


def test_large_k_matches_exact_retrieval(mnist):
    # 1k-vector corpus; exact-Jaccard ranking has precision@10 = 1
    for variant in ("mh", "oph-re"):
        sq, sd, gt = small_case(mnist, variant, K=4096, b=16, n_db=900, n_q=100)
        assert retrieve(sq, sd, gt, [10]).mean_precision()[0] >= 0.95


def test_oph_rand_plateaus_below_densified(mnist):
    # with no noise left, random fills for empty bins still cost accuracy
    sq, sd, gt = small_case(mnist, "oph-re", K=256, b=1, n_db=600)
    dense = retrieve(sq, sd, gt, [10, 50]).mean_precision()
    sq, sd, gt = small_case(mnist, "oph-rand", K=256, b=1, eps=1e9, n_db=600)
    rand = retrieve(sq, sd, gt, [10, 50]).mean_precision()
    assert np.all(rand < dense - 0.05), (rand, dense)


def test_sketch_dataset_order_free(mnist):
    d = pad_to_multiple(mnist.subset(range(30)), 64)
    prm = SketchParams(Variant.OPH_FIX, 64, 2, 3, 4.0, 1e-6, 50, 9)
    a = sketch_dataset(d, prm)
    b = sketch_dataset(d.subset(range(29, -1, -1)), prm)
    assert np.array_equal(a.codes, b.codes[::-1])
    assert a.privacy["noise_seed"] == 9 and a.scheme == "dp-oph-fix"
    # query and database streams differ
    assert not np.array_equal(a.codes, sketch_dataset(d, prm, QUERY_ROLE).codes)
    with pytest.raises(DivisibilityError):
        sketch_dataset(mnist.subset(range(3)), prm)


# orchestration -------------------------------------------------------------------------


def test_smoke_config_runs_fast():
    t = time.time()
    rows = run_experiment(CONFIGS / "smoke.json")
    assert time.time() - t < 60
    assert len(rows) == 5 * 2 * 2 and all(len(r) == len(CSV_HEADER) for r in rows)
    nonprivate = [r for r in rows if r[4] == "inf"]
    assert all(r[5] == "" for r in nonprivate)


def test_run_experiment_writes_csv(tmp_path):
    out = io.StringIO()
    rows = run_experiment(CONFIGS / "smoke.json", out)
    text = out.getvalue().splitlines()
    assert text[0] == ",".join(CSV_HEADER) and len(text) == len(rows) + 1


def test_config_files_validate():
    for name in ("smoke.json", "mnist_desk.json", "mnist_sweep.json", "webspam_style.json"):
        c = load_config(CONFIGS / name)
        assert c["dataset"] is None or c["dataset"].endswith("mnist_2k.libsvm.gz")
    c = load_config(CONFIGS / "webspam_style.json")
    assert c["f_min"] == 500 and c["b"] == [2]
    c = load_config(CONFIGS / "mnist_sweep.json")
    assert c["f_min"] == 50 and c["b"] == [1, 2] and None in c["epsilon"]


@pytest.mark.slow
def test_webspam_style_config_runs():
    rows = run_experiment(CONFIGS / "webspam_style.json")
    assert {r[1] for r in rows} == {"oph-re", "oph-rand", "mh"}
    assert all(int(r[5]) >= 1 for r in rows)


@pytest.mark.parametrize("patch,msg", [
    ({"bogus": 1}, "unknown config field"),
    ({"K": [0]}, "field 'K'"),
    ({"K": []}, "field 'K'"),
    ({"b": [17]}, "field 'b'"),
    ({"runs": 0}, "field 'runs'"),
    ({"delta": 1.5}, "field 'delta'"),
    ({"epsilon": ["abc"]}, "epsilon"),
    ({"pmf_model": "x"}, "pmf_model"),
    ({"variants": ["lsh"]}, "lsh"),
    ({"dataset": "x.libsvm"}, "exactly one"),
])
def test_config_errors(patch, msg):
    cfg = {"synthetic": {"n": 50, "D": 64}}
    cfg.update(patch)
    with pytest.raises(ConfigError, match=msg):
        load_config(cfg)


def test_config_file_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(p)
    p.write_text(json.dumps({"synthetic": {"n": 50, "D": 64}, "n_queries": 50}))
    with pytest.raises(ConfigError, match="n_queries"):
        run_experiment(p)


def test_queries_pass_the_same_filter(tmp_path):
    (tmp_path / "db.libsvm").write_text("0 1:1 2:1 3:1\n0 1:1 2:1\n0 2:1 3:1 4:1\n")
    (tmp_path / "q.libsvm").write_text("0 1:1\n0 1:1 3:1 4:1\n")
    c = load_config({"dataset": str(tmp_path / "db.libsvm"),
                     "queries": str(tmp_path / "q.libsvm"), "f_min": 3})
    db, q = prepare_data(c, 4)
    assert len(db) == 2 and len(q) == 1 and q[0].nnz == 3


def test_parse_epsilon():
    assert parse_epsilon("inf") is None and parse_epsilon(float("inf")) is None
    assert parse_epsilon("2.5") == 2.5 and parse_epsilon(3) == 3.0
    with pytest.raises(ConfigError):
        parse_epsilon(0)


def test_discount_table():
    rows = discount_table([1024], [64], [64, 512], [1], 1e-6, ["oph-re", "oph-rand", "mh"])
    got = {(r[0], r[3]): r[6] for r in rows}
    assert got["oph-rand", 64] == 1 and got["oph-re", 512] <= got["mh", 512]


@pytest.mark.slow
def test_re_precision_grows_with_epsilon(tmp_path):
    cfg = json.loads((CONFIGS / "mnist_desk.json").read_text())
    cfg.update(dataset=str(MNIST), variants=["oph-re"], epsilon=[2, 5, 10, 20, 50], R=[10],
               runs=3)
    rows = run_experiment(cfg)
    prec = [float(r[7]) for r in rows]
    assert all(b >= a - 0.02 for a, b in zip(prec, prec[1:])), prec
