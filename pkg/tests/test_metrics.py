
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgseg import labels as lab
from ecgseg.metrics import ConfusionTable, MetricsReport, confusion, evaluate, render_table, report, report_csv

label_pairs = st.integers(1, 300).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 5), min_size=n, max_size=n),
        st.lists(st.integers(0, 5), min_size=n, max_size=n),
    )
)


def test_half_iso_half_qrs():
    t = [lab.ISO] * 5 + [lab.QRS] * 5
    p = [lab.ISO] * 10
    r = evaluate(t, p)
    assert r.accuracy == 0.5
    assert r.recall["QRS"] == 0.0
    assert r.precision["QRS"] is None
    assert r.fscore["QRS"] is None
    assert r.precision["ISO"] == pytest.approx(0.5, abs=1e-12)
    assert r.recall["ISO"] == 1.0
    assert r.fscore["ISO"] == pytest.approx(2 / 3, abs=1e-12)


def test_perfect():
    y = np.repeat(np.arange(6), 4)
    r = evaluate(y, y)
    assert r.accuracy == 1.0
    assert all(v == 1.0 for d in (r.precision, r.recall, r.fscore) for v in d.values())


def test_hand_table():
    counts = np.zeros((6, 6), dtype=int)
    counts[lab.QRS, lab.QRS] = 8
    counts[lab.QRS, lab.ST] = 2
    counts[lab.ST, lab.QRS] = 4
    counts[lab.ST, lab.ST] = 6
    r = report(ConfusionTable(counts))
    assert r.accuracy == pytest.approx(14 / 20, abs=1e-12)
    assert r.precision["QRS"] == pytest.approx(8 / 12, abs=1e-12)
    assert r.recall["QRS"] == pytest.approx(8 / 10, abs=1e-12)
    assert r.fscore["QRS"] == pytest.approx(2 * 8 / (2 * 8 + 2 + 4), abs=1e-12)


def test_zero_true_positives():
    counts = np.zeros((6, 6), dtype=int)
    counts[lab.P, lab.T] = 3
    counts[lab.T, lab.P] = 3
    r = report(ConfusionTable(counts))
    assert r.fscore["P"] == 0.0 and r.precision["P"] == 0.0


def test_harmonic_mean_identity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = report(ConfusionTable(rng.integers(0, 50, size=(6, 6))))
        for c in lab.COMPLEXES:
            p, q, f = r.precision[c], r.recall[c], r.fscore[c]
            if p and q:
                assert f == pytest.approx(2 * p * q / (p + q), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(label_pairs)
def test_accuracy_is_support_weighted_recall(pair):
    t, p = map(np.array, pair)
    r = evaluate(t, p)
    weighted = sum(np.sum(t == i) * (r.recall[c] or 0.0) for i, c in enumerate(lab.COMPLEXES)) / t.size
    assert r.accuracy == pytest.approx(weighted, abs=1e-12)
    assert 0 <= r.accuracy <= 1


@settings(max_examples=100, deadline=None)
@given(label_pairs, st.randoms(use_true_random=False))
def test_permutation_invariant(pair, rnd):
    t, p = map(np.array, pair)
    order = list(range(t.size))
    rnd.shuffle(order)
    a, b = evaluate(t, p), evaluate(t[order], p[order])
    assert a == b


def test_pooling_is_concatenation(rng):
    parts = [(rng.integers(0, 6, 50), rng.integers(0, 6, 50)) for _ in range(4)]
    pooled = sum((confusion(t, p) for t, p in parts[1:]), confusion(*parts[0]))
    cat = confusion(np.concatenate([t for t, _ in parts]), np.concatenate([p for _, p in parts]))
    np.testing.assert_array_equal(pooled.counts, cat.counts)


def test_tolerance():
    t = np.array([5, 5, 2, 2, 2, 5, 5])
    p = np.array([5, 2, 2, 2, 5, 5, 5])
    assert evaluate(t, p).accuracy == pytest.approx(5 / 7)
    r = report(confusion(t, p, tolerance=1))
    assert r.accuracy == 1.0
    assert report(confusion(t, p, tolerance=0)).accuracy == pytest.approx(5 / 7)


def test_length_mismatch():
    with pytest.raises(ValueError):
        confusion([0, 1], [0])


def test_macro_skips_undefined():
    r = evaluate([lab.ISO] * 5 + [lab.QRS] * 5, [lab.ISO] * 10)
    assert r.macro("precision") == pytest.approx(0.5)
    assert r.macro("recall") == pytest.approx(0.5)


# published per-class scores, one row per metric, columns 6/8/11/16/19/22 states
PUBLISHED = {
    "QRS": ([0.63, 0.58, 0.70, 0.74, 0.81, 0.82], [0.91, 0.95, 0.87, 0.84, 0.84, 0.83], [0.75, 0.72, 0.77, 0.79, 0.82, 0.83]),
    "PQ": ([0.31, 0.38, 0.41, 0.35, 0.35, 0.31], [0.49, 0.68, 0.44, 0.47, 0.48, 0.51], [0.38, 0.49, 0.42, 0.40, 0.41, 0.39]),
    "P": ([0.30, 0.36, 0.26, 0.40, 0.36, 0.36], [0.66, 0.78, 0.78, 0.76, 0.78, 0.67], [0.41, 0.49, 0.39, 0.52, 0.50, 0.47]),
    "ISO": ([0.83, 0.84, 0.76, 0.81, 0.88, 0.87], [0.63, 0.57, 0.57, 0.71, 0.65, 0.69], [0.71, 0.68, 0.65, 0.76, 0.75, 0.77]),
    "ST": ([0.44, 0.49, 0.74, 0.69, 0.76, 0.77], [0.44, 0.41, 0.25, 0.59, 0.39, 0.38], [0.44, 0.44, 0.37, 0.64, 0.51, 0.51]),
    "T": ([0.73, 0.74, 0.66, 0.74, 0.67, 0.68], [0.57, 0.63, 0.73, 0.70, 0.88, 0.85], [0.64, 0.68, 0.69, 0.72, 0.76, 0.76]),
}
PUBLISHED_OVERALL = (
    [0.54, 0.56, 0.59, 0.62, 0.64, 0.63],
    [0.61, 0.67, 0.61, 0.68, 0.67, 0.66],
    [0.55, 0.58, 0.55, 0.64, 0.62, 0.62],
)


@pytest.mark.parametrize("column", range(6))
def test_overall_row_is_class_mean(column):
    for m in range(3):
        mean = sum(rows[m][column] for rows in PUBLISHED.values()) / 6
        # inputs are rounded to two decimals, so allow one unit of rounding
        assert abs(mean - PUBLISHED_OVERALL[m][column]) <= 0.011


def test_macro_matches_published_column():
    vals = {c: tuple(rows[k][3] for k in range(3)) for c, rows in PUBLISHED.items()}
    rep = MetricsReport(
        0.70, {c: v[0] for c, v in vals.items()}, {c: v[1] for c, v in vals.items()}, {c: v[2] for c, v in vals.items()}, 1
    )
    assert [round(rep.macro(m), 2) for m in ("precision", "recall", "fscore")] == [0.62, 0.68, 0.64]


def test_render_order_and_blank_cells():
    r = evaluate([lab.ISO] * 5 + [lab.QRS] * 5, [lab.ISO] * 10)
    text = render_table({"16 states": r})
    blocks = [ln.split()[0] for ln in text.splitlines()[1:] if ln and not ln.startswith(" ")]
    assert blocks == ["All", "QRS", "PQ", "P", "ISO", "ST", "T"]
    assert " -" in text.splitlines()[7]
    assert "0.50" in text


def test_report_csv():
    r = evaluate(np.repeat(np.arange(6), 3), np.repeat(np.arange(6), 3))
    lines = report_csv(r).splitlines()
    assert lines[0] == "complex,precision,recall,fscore"
    assert [ln.split(",")[0] for ln in lines[1:7]] == list(lab.REPORT_ORDER)
    assert lines[7].startswith("macro,")
    assert lines[8] == "# accuracy=1.0 samples=18"
