import numpy as np
import pytest

from pvtree.data import (FormatError, SyntheticSpec, generate_synthetic, load_csv, load_dataset,
                         load_libsvm, save_csv)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_csv_basic(tmp_path):
    p = write(tmp_path, "a.csv", "f0,label,f1\n1.5,0,2\n-3,1,4e2\n")
    d = load_csv(p, task="classification")
    assert d.values.tolist() == [[1.5, 2.0], [-3.0, 400.0]]
    assert d.labels.tolist() == [0.0, 1.0]
    assert d.task.n_classes == 2
    assert d.query_ids is None


def test_csv_with_query_ids(tmp_path):
    p = write(tmp_path, "q.csv", "label,qid,f0\n2,q1,0.5\n0,q2,0.1\n")
    d = load_csv(p)
    assert d.query_ids.tolist() == ["q1", "q2"]
    assert d.n_attributes == 1


@pytest.mark.parametrize("text,line", [
    ("f0,label\n1,2\n3\n", 3),
    ("f0,label\n1,2\n,4\n", 3),
    ("f0,label\nabc,1\n", 2),
    ("f0,label\nnan,1\n", 2),
])
def test_csv_errors_name_the_line(tmp_path, text, line):
    p = write(tmp_path, "bad.csv", text)
    with pytest.raises(FormatError, match=f":{line}:"):
        load_csv(p)


def test_csv_needs_label(tmp_path):
    with pytest.raises(FormatError):
        load_csv(write(tmp_path, "n.csv", "a,b\n1,2\n"))


def test_libsvm_basic(tmp_path):
    p = write(tmp_path, "a.svm", "1 qid:3 1:0.5 3:2 # comment\n0 qid:3 2:-1\n\n")
    d = load_libsvm(p)
    assert d.values.tolist() == [[0.5, 0.0, 2.0], [0.0, -1.0, 0.0]]
    assert d.labels.tolist() == [1.0, 0.0]
    assert d.query_ids.tolist() == ["3", "3"]


@pytest.mark.parametrize("text,line", [
    ("1 1:0.5\n0 0:1\n", 2),
    ("1 1:0.5\n0 x:1\n", 2),
    ("1 1:0.5\n0 2\n", 2),
    ("1 1:inf\n", 1),
])
def test_libsvm_errors_name_the_line(tmp_path, text, line):
    with pytest.raises(FormatError, match=f":{line}:"):
        load_libsvm(write(tmp_path, "bad.svm", text))


def test_load_dataset_by_extension(tmp_path):
    assert load_dataset(write(tmp_path, "a.svm", "1 1:2\n")).n_attributes == 1
    assert load_dataset(write(tmp_path, "a.csv", "label,x\n1,2\n")).n_attributes == 1
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "a.csv", fmt="parquet")


def test_csv_round_trip(tmp_path):
    data, _ = generate_synthetic(SyntheticSpec(n=50, d=3), seed=1)
    save_csv(data, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv")
    assert np.array_equal(back.values, data.values)
    assert np.array_equal(back.labels, data.labels)


def test_synthetic_is_seeded():
    spec = SyntheticSpec(n=100, d=5, signal=1.0, other=0.5)
    a, sa = generate_synthetic(spec, 3)
    b, sb = generate_synthetic(spec, 3)
    assert np.array_equal(a.values, b.values) and sa == sb
    assert len(sa["population_gains"]) == 5
    assert int(np.argmax(sa["population_gains"])) == 0
    with pytest.raises(ValueError):
        SyntheticSpec(n=0, d=1)


def test_minimal_csv_and_libsvm(tmp_path):
    d = load_csv(write(tmp_path, "m.csv", "label,f0\n1,0.5"))
    assert (d.n_samples, d.n_attributes, d.labels[0]) == (1, 1, 1.0)
    s = load_libsvm(write(tmp_path, "m.svm", "1 3:2.0\n"))
    assert s.values.tolist() == [[0.0, 0.0, 2.0]]
    again = load_libsvm(tmp_path / "m.svm")
    assert np.array_equal(again.values, s.values) and np.array_equal(again.labels, s.labels)


def test_noiseless_single_signal_fits_with_one_split():
    from pvtree.core import bin_dataset, compute_bin_mapper
    from pvtree.trainer import SequentialFinder, TreeConfig, build_tree

    raw, _ = generate_synthetic(SyntheticSpec(n=500, d=4, noise=0.0), seed=2)
    data = bin_dataset(raw, compute_bin_mapper(raw, 255))
    tree = build_tree(data, TreeConfig(max_depth=2), SequentialFinder())
    assert np.mean((tree.predict(data) - data.labels) ** 2) == 0.0


def test_plug_in_gain_of_signal_attribute_dominates():
    raw, side = generate_synthetic(SyntheticSpec(n=10_000, d=6, other=0.2), seed=3)
    y = raw.labels
    plug_in = []
    for j in range(raw.n_attributes):
        left = raw.values[:, j] <= 0.5
        plug_in.append(np.var(y) - left.mean() * np.var(y[left])
                       - (1 - left.mean()) * np.var(y[~left]))
    assert int(np.argmax(plug_in)) == 0
