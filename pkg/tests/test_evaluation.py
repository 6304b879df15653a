import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcta.corpus import Table, TableCorpus
from kgcta.evaluation import accuracy, metrics_report, stratified_split, weighted_f1


def corpus_of(classes):
    return TableCorpus([Table(f"t{i:03d}", [["x"]], {0: c}) for i, c in enumerate(classes)])


def test_split_sizes_single_class():
    s = stratified_split(corpus_of(["a"] * 10), seed=0)
    assert (len(s.train), len(s.validation), len(s.test)) == (7, 1, 2)
    assert sorted(s.train + s.validation + s.test) == [f"t{i:03d}" for i in range(10)]


def test_split_deterministic_and_seed_sensitive():
    c = corpus_of(["a"] * 30 + ["b"] * 30)
    assert stratified_split(c, 4) == stratified_split(c, 4)
    assert stratified_split(c, 4) != stratified_split(c, 5)


def test_split_two_classes_balanced():
    c = corpus_of(["a"] * 50 + ["b"] * 50)
    s = stratified_split(c, 1)
    lab = {t.table_id: t.labels[0] for t in c}
    for part in (s.train, s.validation, s.test):
        n_a = sum(lab[t] == "a" for t in part)
        assert abs(n_a - len(part) / 2) <= 1


def test_split_rare_class_goes_to_train():
    with pytest.warns(UserWarning):
        s = stratified_split(corpus_of(["a"] * 10 + ["rare"] * 2), 0)
    assert {"t010", "t011"} <= set(s.train)


def test_split_errors():
    with pytest.raises(ValueError):
        stratified_split(TableCorpus([]))
    with pytest.raises(ValueError):
        stratified_split(corpus_of(["a"] * 5), ratios=(0.5, 0.5, 0.5))


def test_accuracy_examples():
    assert accuracy([1, 2], [1, 2]) == 1.0
    assert accuracy([1, 2], [2, 1]) == 0.0
    assert accuracy([1, 0, 1, 1], [1, 1, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        accuracy([1], [1, 2])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_weighted_f1_examples():
    assert weighted_f1(["A", "B"], ["A", "B"], ["A", "B"]) == 1.0
    # class A: TP=1 FP=1 FN=0 -> F1 2/3 with support 1; class B: support 1, F1 0
    assert weighted_f1(["A", "A"], ["A", "B"], ["A", "B"]) == pytest.approx(1 / 3, rel=1e-12)
    assert weighted_f1(["A", "A"], ["A", "B"], ["A", "B", "unused"]) == pytest.approx(1 / 3, rel=1e-12)


def test_metrics_report_confusion():
    r = metrics_report([0, 0, 1], [0, 1, 1], [0, 1])
    assert r["confusion"] == {"0": {"0": 1}, "1": {"0": 1, "1": 1}}
    assert r["n_columns"] == 3 and r["accuracy"] == pytest.approx(2 / 3)


def _f1_loop(preds, gts):
    total = 0.0
    for c in set(gts):
        tp = sum(1 for p, g in zip(preds, gts) if p == c and g == c)
        pp = sum(1 for p in preds if p == c)
        ap = sum(1 for g in gts if g == c)
        prec = tp / pp if pp else 0.0
        rec = tp / ap
        f1 = 2 * prec * rec / (prec + rec) if tp else 0.0
        total += f1 * ap
    return total / len(gts)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_weighted_f1_matches_loop(pairs):
    preds, gts = [p for p, _ in pairs], [g for _, g in pairs]
    got = weighted_f1(preds, gts, list(range(5)))
    assert got == pytest.approx(_f1_loop(preds, gts), rel=1e-12, abs=1e-15)
    assert 0 <= got <= 1
    assert accuracy(preds, gts) == sum(p == g for p, g in pairs) / len(pairs)
