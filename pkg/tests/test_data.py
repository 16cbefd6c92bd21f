import gzip
import io
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpoph.data import (
    Dataset,
    SparseBinaryVector,
    SparseWeightedVector,
    binarize,
    dump_libsvm,
    filter_min_nnz,
    from_rows,
    jaccard,
    load_libsvm,
    pad_to_multiple,
    parse_libsvm_line,
    retained_fraction,
    weighted_jaccard,
)
from dpoph.errors import DimensionError, ParseError

from conftest import MNIST


def write(tmp_path, text, name="d.libsvm"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_weighted_line(tmp_path):
    d = load_libsvm(write(tmp_path, "1 2:1 7:3\n"), dim_override=8)
    assert d.dim == 8 and len(d) == 1
    v = d[0]
    assert isinstance(v, SparseWeightedVector)
    assert v.indices.tolist() == [2, 7] and v.weights.tolist() == [1.0, 3.0]
    assert d.labels == ("1",)


def test_duplicate_index_is_parse_error(tmp_path):
    with pytest.raises(ParseError, match="line 1"):
        load_libsvm(write(tmp_path, "0 3:1 3:2\n"))


def test_parse_error_names_line(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        load_libsvm(write(tmp_path, "1 1:1\n1 4:1 2:1\n"))


@pytest.mark.parametrize("line", ["1 0:1", "1 a:1", "1 2:x", "x 2:1", "1 2", "1 2:-1"])
def test_malformed_tokens(line):
    with pytest.raises(ParseError):
        parse_libsvm_line(line, 1)


def test_empty_file_uses_override(tmp_path):
    d = load_libsvm(write(tmp_path, ""), dim_override=5)
    assert len(d) == 0 and d.dim == 5


def test_dim_is_max_of_observed_and_override(tmp_path):
    p = write(tmp_path, "1 9:1\n")
    assert load_libsvm(p).dim == 9
    assert load_libsvm(p, dim_override=20).dim == 20


def test_override_smaller_than_observed(tmp_path):
    with pytest.raises(DimensionError):
        load_libsvm(write(tmp_path, "1 9:1\n"), dim_override=4)


def test_gzip_by_extension(tmp_path):
    p = tmp_path / "d.libsvm.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("0 1:1 3:1\n1 2:5\n")
    d = load_libsvm(p)
    assert len(d) == 2 and d.labels == ("0", "1")


def test_zero_entry_vector_loads():
    d = Dataset(4, (SparseBinaryVector(4, []),))
    assert d.nnz().tolist() == [0]


def test_binarize_examples():
    d = Dataset(8, (SparseWeightedVector(8, [2, 7], [0.5, 3.0]),), labels=("a",))
    b = binarize(d)
    assert b[0].indices.tolist() == [2, 7] and isinstance(b[0], SparseBinaryVector)
    assert b.labels == ("a",) and b.dim == 8
    assert binarize(b)[0] == b[0]


def test_filter_min_nnz_examples():
    d = from_rows(100, [range(1, 4), range(1, 51), range(1, 50)])
    out = filter_min_nnz(d, 50)
    assert out.nnz().tolist() == [50] and out.ids == (1,)
    assert retained_fraction(d, out) == pytest.approx(1 / 3)
    d2 = Dataset(10, (SparseBinaryVector(10, []), SparseBinaryVector(10, [3])))
    assert filter_min_nnz(d2, 1).ids == (1,)


def test_mnist_subsample_retention():
    d = load_libsvm(MNIST, 784)
    assert len(d) == 2000
    # the full data set keeps about 99.9% at f_min=50; our subsample keeps all of it
    assert retained_fraction(d, filter_min_nnz(d, 50)) >= 0.99


def test_pad_to_multiple():
    d = from_rows(10, [[1, 10]])
    assert pad_to_multiple(d, 4).dim == 12
    assert pad_to_multiple(d, 5).dim == 10


def test_jaccard_examples():
    u, v = SparseBinaryVector(5, [1, 2, 3]), SparseBinaryVector(5, [2, 3, 4])
    assert jaccard(u, v) == 0.5
    assert jaccard(u, u) == 1.0
    a = SparseWeightedVector(2, [1, 2], [1.0, 1.0])
    b = SparseWeightedVector(2, [1, 2], [1.0, 3.0])
    assert weighted_jaccard(a, b) == 0.5


vectors = st.integers(1, 30).flatmap(
    lambda D: st.tuples(
        st.just(D),
        st.lists(
            st.dictionaries(st.integers(1, D), st.integers(1, 9), max_size=D), max_size=6
        ),
    )
)


@given(vectors)
@settings(max_examples=60, deadline=None)
def test_roundtrip(case):
    D, rows = case
    vecs = tuple(
        SparseWeightedVector(D, sorted(r), [float(r[k]) for k in sorted(r)]) for r in rows
    )
    d = Dataset(D, vecs, labels=tuple(str(i % 3) for i in range(len(vecs))))
    buf = io.StringIO()
    dump_libsvm(d, buf)
    path_text = buf.getvalue()
    with tempfile.TemporaryDirectory() as tmp:
        p = os.path.join(tmp, "x.libsvm")
        with open(p, "w") as fh:
            fh.write(path_text)
        back = load_libsvm(p, dim_override=D)
    assert back.dim == D and back.labels == d.labels
    assert all(a == b for a, b in zip(back.vectors, d.vectors)) and len(back) == len(d)


@given(vectors, st.integers(1, 10))
@settings(max_examples=60, deadline=None)
def test_binarize_idempotent_and_filter_partition(case, f_min):
    D, rows = case
    d = Dataset(D, tuple(SparseWeightedVector(D, sorted(r), [1.0] * len(r)) for r in rows))
    b = binarize(d)
    assert all(x == y for x, y in zip(binarize(b).vectors, b.vectors))
    kept = filter_min_nnz(b, f_min)
    assert all(v.nnz >= f_min for v in kept)
    dropped = sum(1 for v in b if v.nnz < f_min)
    assert len(kept) + dropped == len(b)


def test_vector_validation():
    with pytest.raises(ValueError):
        SparseBinaryVector(5, [3, 2])
    with pytest.raises(ValueError):
        SparseBinaryVector(5, [6])
    with pytest.raises(ValueError):
        SparseWeightedVector(5, [1], [0.0])
    x = np.array([0, 2.0, 0, 1.5])
    assert np.array_equal(SparseWeightedVector.from_dense(x).to_dense(), x)
