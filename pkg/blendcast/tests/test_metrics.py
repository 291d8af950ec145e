import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blendcast.errors import DataError, ShapeError
from blendcast.metrics import (
    ConfusionCounts,
    EvalReport,
    confusion,
    degenerate_metrics,
    directions,
    evaluate,
    f1,
    mda,
    mpa,
    mse,
    precision,
    recall,
    relative_change,
    render_table,
)

ACTUAL_DIRS = [1, 1, 1, 1, 0, 0, 0, 0, 0]
PREDICTED_DIRS = [1, 1, 1, 0, 1, 1, 0, 0, 0]


def _report(mse_value, mda_value=0.5, **fields):
    values = dict(mpa=0.99, precision=0.5, recall=0.5, f1=0.5)
    values.update(fields)
    return EvalReport(
        mse=mse_value, mda=mda_value, confusion=ConfusionCounts(tp=1, fp=1, fn=1, tn=1), n=4, **values,
    )


def test_mse_example():
    assert mse([1.0, 2.0], [2.0, 4.0]) == 2.5


testset_mpa = [
    ([100.0, 200.0], [101.0, 198.0], 0.99),
    ([100.0, 200.0], [99.0, 202.0], 0.99),
    ([50.0], [50.0], 1.0),
    ([10.0], [25.0], -0.5),
]


@pytest.mark.parametrize("actual, predicted, expected", testset_mpa)
def test_mpa(actual, predicted, expected):
    assert mpa(actual, predicted) == pytest.approx(expected, abs=1e-12)


testset_bad_pairs = [
    ([1.0, 2.0], [1.0], ShapeError),
    ([], [], DataError),
    ([[1.0]], [[1.0]], ShapeError),
]


@pytest.mark.parametrize("actual, predicted, error", testset_bad_pairs)
def test_price_metrics_reject_bad_input(actual, predicted, error):
    with pytest.raises(error):
        mse(actual, predicted)


def test_mpa_rejects_non_positive_prices():
    with pytest.raises(DataError, match="positive"):
        mpa([0.0, 1.0], [1.0, 1.0])


def test_directions_treat_ties_as_down():
    np.testing.assert_array_equal(directions([10.0, 10.0, 10.0], [11.0, 10.0, 9.0]), [1, 0, 0])


def test_confusion_example():
    c = confusion(ACTUAL_DIRS, PREDICTED_DIRS)
    assert c == ConfusionCounts(tp=3, fp=2, fn=1, tn=3)
    assert c.total == 9
    assert precision(c) == pytest.approx(0.6)
    assert recall(c) == pytest.approx(0.75)
    assert f1(c) == pytest.approx(2 / 3, abs=1e-4)
    assert mda(ACTUAL_DIRS, PREDICTED_DIRS) == pytest.approx(6 / 9)
    assert degenerate_metrics(c) == []


testset_degenerate = [
    (ConfusionCounts(tp=0, fp=0, fn=0, tn=5), ["precision", "recall", "f1"]),
    (ConfusionCounts(tp=0, fp=0, fn=3, tn=2), ["precision", "f1"]),
    (ConfusionCounts(tp=0, fp=2, fn=0, tn=3), ["recall", "f1"]),
    (ConfusionCounts(tp=0, fp=2, fn=3, tn=0), []),
]


@pytest.mark.parametrize("counts, flags", testset_degenerate)
def test_degenerate_metrics_report_zero(counts, flags):
    assert degenerate_metrics(counts) == flags
    assert precision(counts) == 0.0 and recall(counts) == 0.0 and f1(counts) == 0.0


def test_direction_metrics_reject_non_binary():
    with pytest.raises(DataError):
        mda([0, 2], [0, 1])
    with pytest.raises(DataError):
        confusion([0, 1], [0.5, 1])
    with pytest.raises(ShapeError):
        mda([0, 1], [0, 1, 1])


def _brute_force(actual, predicted):
    tp = sum(1 for a, p in zip(actual, predicted) if a == 1 and p == 1)
    fp = sum(1 for a, p in zip(actual, predicted) if a == 0 and p == 1)
    fn = sum(1 for a, p in zip(actual, predicted) if a == 1 and p == 0)
    hits = sum(1 for a, p in zip(actual, predicted) if a == p)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f, hits / len(actual)


def test_direction_metrics_match_brute_force():
    gen = np.random.default_rng(11)
    for _ in range(1000):
        actual = gen.integers(0, 2, 9)
        predicted = gen.integers(0, 2, 9)
        c = confusion(actual, predicted)
        expected = _brute_force(actual.tolist(), predicted.tolist())
        got = (precision(c), recall(c), f1(c), mda(actual, predicted))
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def _brute_force_report(actual, predicted, prev):
    n = len(actual)
    up = [1 if a > p else 0 for a, p in zip(actual, prev)]
    called = [1 if y > p else 0 for y, p in zip(predicted, prev)]
    counts = {
        "tp": sum(1 for a, c in zip(up, called) if a and c),
        "fp": sum(1 for a, c in zip(up, called) if not a and c),
        "fn": sum(1 for a, c in zip(up, called) if a and not c),
        "tn": sum(1 for a, c in zip(up, called) if not a and not c),
    }
    prec, rec, f, hit_rate = _brute_force(up, called)
    return {
        "mse": sum((a - y) ** 2 for a, y in zip(actual, predicted)) / n,
        "mpa": 1.0 - sum(abs(a - y) / a for a, y in zip(actual, predicted)) / n,
        "precision": prec,
        "recall": rec,
        "f1": f,
        "mda": hit_rate,
        "confusion": counts,
        "n": n,
    }


def test_evaluate_matches_brute_force():
    gen = np.random.default_rng(12)
    for _ in range(1000):
        prev = gen.uniform(2500.0, 2800.0, 9)
        actual = prev + gen.normal(0.0, 15.0, 9)
        predicted = prev + gen.normal(0.0, 15.0, 9)
        # exact ties with the previous close exercise the down class
        tie = gen.integers(0, 9)
        predicted[tie] = prev[tie]
        report = evaluate(actual, predicted, prev)
        expected = _brute_force_report(actual.tolist(), predicted.tolist(), prev.tolist())
        assert report.n == expected["n"]
        assert report.confusion.model_dump() == expected["confusion"]
        for name in ("mse", "mpa", "precision", "recall", "f1", "mda"):
            assert getattr(report, name) == pytest.approx(expected[name], rel=1e-12, abs=1e-12), name


def test_evaluate_builds_a_report():
    prev = [100.0, 101.0, 102.0, 101.0]
    actual = [101.0, 102.0, 101.0, 103.0]
    predicted = [101.5, 100.5, 101.0, 104.0]
    report = evaluate(actual, predicted, prev)
    assert report.n == 4
    assert report.confusion == ConfusionCounts(tp=2, fp=0, fn=1, tn=1)
    assert report.mse == pytest.approx((0.25 + 2.25 + 0.0 + 1.0) / 4)
    assert report.mda == 0.75
    assert report.degenerate == []


def test_evaluate_flags_degenerate_metrics(caplog):
    report = evaluate([99.0, 98.0], [98.0, 97.0], [100.0, 99.0])
    assert report.degenerate == ["precision", "recall", "f1"]
    assert report.mda == 1.0
    assert "zero denominators" in caplog.text


def test_evaluate_rejects_mismatched_prev():
    with pytest.raises(ShapeError):
        evaluate([1.0, 2.0], [1.0, 2.0], [1.0])


prices = st.lists(st.floats(min_value=1.0, max_value=5000.0), min_size=1, max_size=30)


@given(prices, st.data())
def test_report_invariants(actual, data):
    n = len(actual)
    predicted = data.draw(st.lists(st.floats(min_value=1.0, max_value=5000.0), min_size=n, max_size=n))
    prev = data.draw(st.lists(st.floats(min_value=1.0, max_value=5000.0), min_size=n, max_size=n))
    report = evaluate(actual, predicted, prev)
    assert report.mse >= 0.0
    assert report.mpa <= 1.0
    for value in (report.precision, report.recall, report.f1, report.mda):
        assert 0.0 <= value <= 1.0
    c = report.confusion
    assert c.total == n
    assert report.mda == pytest.approx((c.tp + c.tn) / n)
    assert report.f1 <= max(report.precision, report.recall) + 1e-12


def test_render_table_layout():
    table = render_table(
        {"LSTM": _report(438.94, 0.5556), "Blending Ensemble": _report(186.32, 0.6111)},
        extra_columns={"DP-LSTM": {"mse": 330.97}},
    )
    lines = table.splitlines()
    assert lines[0].startswith("Evaluation Metrics")
    assert [c.strip() for c in lines[0].split("|")] == ["Evaluation Metrics", "LSTM", "Blending Ensemble", "DP-LSTM"]
    assert set(lines[1]) <= {"-", "+"}
    assert [c.strip() for c in lines[2].split("|")] == ["MSE", "438.94", "186.32", "330.97"]
    assert [c.strip() for c in lines[3].split("|")] == ["MPA", "99.00%", "99.00%", "-"]
    assert [c.strip() for c in lines[7].split("|")] == ["MDA", "55.56%", "61.11%", "-"]
    assert [line.split("|")[0].strip() for line in lines[2:]] == [
        "MSE", "MPA", "Precision", "Recall", "F1-Score", "MDA",
    ]
    assert len({len(line) for line in lines}) == 1


def test_relative_change():
    change = relative_change(_report(186.32, 0.6111), _report(438.94, 0.5556))
    assert round(change["mse"], 2) == 57.55
    assert change["mda"] == pytest.approx(5.55)
    assert change["precision"] == 0.0


def test_relative_change_with_zero_baseline_mse():
    assert relative_change(_report(1.0), _report(0.0))["mse"] == 0.0


@given(prices, st.data())
def test_mse_is_zero_only_for_equal_vectors(actual, data):
    other = data.draw(st.lists(st.floats(min_value=1.0, max_value=5000.0), min_size=len(actual),
                               max_size=len(actual)))
    assert mse(actual, actual) == 0.0
    assert mse(actual, other) >= 0.0
    assert (mse(actual, other) == 0.0) == (actual == other)


@given(prices, st.data())
def test_mse_is_symmetric(actual, data):
    other = data.draw(st.lists(st.floats(min_value=1.0, max_value=5000.0), min_size=len(actual),
                               max_size=len(actual)))
    assert mse(actual, other) == mse(other, actual)


@given(prices, st.data(), st.integers(min_value=-30, max_value=30))
def test_directions_ignore_positive_scaling(values, data, exponent):
    prev = data.draw(st.lists(st.floats(min_value=1.0, max_value=5000.0), min_size=len(values),
                              max_size=len(values)))
    factor = 2.0 ** exponent
    np.testing.assert_array_equal(
        directions([factor * p for p in prev], [factor * v for v in values]), directions(prev, values),
    )


@given(st.integers(1, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f1_lies_between_precision_and_recall(tp, fp, fn, tn):
    c = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    p, r = precision(c), recall(c)
    assert min(p, r) - 1e-12 <= f1(c) <= max(p, r) + 1e-12
