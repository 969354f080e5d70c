import numpy as np
import pytest

from avtpr.evaluation import (CONDITIONS, ConditionReport, aggregate_reports, emit_report, evaluate_predictions,
                              render_tables)

PATTERNS = list(CONDITIONS.values())


def _balanced_test_set(n_classes=8, per_condition=16):
    labels = np.tile(np.arange(n_classes), 4 * per_condition // n_classes)
    validity = np.repeat(np.array(PATTERNS, bool), per_condition, axis=0)
    return labels, validity


def test_constant_predictor():
    labels, validity = _balanced_test_set()
    r = evaluate_predictions(np.zeros_like(labels), labels, validity, "const")
    assert all(v == pytest.approx(0.125) for v in r.accuracy.values())
    assert r.avg == pytest.approx(0.125)
    assert sum(r.counts.values()) == len(labels)


def test_avg_is_mean_of_cells(rng):
    labels, validity = _balanced_test_set()
    r = evaluate_predictions(rng.integers(0, 8, len(labels)), labels, validity)
    assert abs(r.avg - np.mean(list(r.accuracy.values()))) < 1e-9


def test_empty_condition_excluded(caplog):
    labels = np.array([0, 1, 2, 3])
    validity = np.array([PATTERNS[0], PATTERNS[0], PATTERNS[1], PATTERNS[1]])
    r = evaluate_predictions(np.array([0, 1, 0, 0]), labels, validity, "x")
    assert r.accuracy["miss_thermal"] is None and r.accuracy["miss_audio"] is None
    assert r.avg == pytest.approx(0.5)
    assert "excluded" in caplog.text


def _report(name, vals, seeds=(0,)):
    return ConditionReport(name, dict(zip(CONDITIONS, vals)), dict.fromkeys(CONDITIONS, 10), seeds)


def test_single_row_table():
    text = render_tables([_report("Prop", [1.0, 0.9, 0.8, 0.7])])
    lines = text.splitlines()
    assert lines[2].split() == ["Algorithm", "No-Missing", "Miss.", "Visible", "Miss.", "Thermal", "Miss.",
                                "Audio", "Avg"]
    assert lines[4].split() == ["Prop", "100.00", "90.00", "80.00", "70.00", "85.00"]
    assert "Table 2" not in text


def test_bimodal_table():
    reports = [_report(n, [0.9] * 4) for n in ("VT", "Prop", "AV", "AT")]
    text = render_tables(reports)
    assert "Proposed (Trimodal)  Audio-Visible  Audio-Thermal  Visible-Thermal" in text
    rows = [l.split()[0] for l in text.split("Table 2")[0].splitlines()[4:8]]
    assert rows == ["Prop", "AV", "AT", "VT"]


def test_jer2_label():
    r = ConditionReport("JER-2", dict.fromkeys(CONDITIONS, 0.5), dict.fromkeys(CONDITIONS, 1), (0,),
                        label="JER-2 (interpreted)")
    assert "JER-2 (interpreted)" in render_tables([r])


def test_emit_is_byte_identical(tmp_path):
    reports = [_report("Prop", [1.0, 0.95, 0.9, 0.85]), _report("E2E", [0.9, 0.5, 0.6, 0.9])]
    emit_report(reports, tmp_path / "a")
    emit_report(list(reversed(reports)), tmp_path / "b")
    for ext in ("txt", "tsv"):
        assert (tmp_path / "a" / f"report.{ext}").read_bytes() == (tmp_path / "b" / f"report.{ext}").read_bytes()
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_aggregate_takes_median():
    reports = [_report("Prop", [v, v, v, v], (s,)) for s, v in enumerate([0.5, 0.9, 0.7])]
    (agg,) = aggregate_reports(reports)
    assert agg.accuracy["no_missing"] == pytest.approx(0.7)
    assert agg.seeds == (0, 1, 2)


def test_json_roundtrip():
    r = _report("Prop", [1.0, None, 0.5, 0.25])
    back = ConditionReport.from_json(r.to_json())
    assert back == r and back.avg == pytest.approx(r.avg)
