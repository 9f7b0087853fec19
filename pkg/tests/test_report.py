import json

import numpy as np

from koopmanlab.report import CSV_COLUMNS, ResidualReport, format_float, rows_to_csv, to_json


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(float("nan")) == "nan"
    assert format_float(float("-inf")) == "-inf"


def test_to_json_round_trips_finite_values():
    obj = {"a": 0.1, "b": [1, 2.5], "c": np.float64(1 / 3), "d": np.array([1.0, 2.0]),
           "e": True, "f": None}
    back = json.loads(to_json(obj))
    assert back["a"] == 0.1 and back["c"] == 1 / 3 and back["d"] == [1.0, 2.0]
    assert back["e"] is True and back["f"] is None


def test_to_json_complex_and_nonfinite():
    back = json.loads(to_json({"z": 1 - 2j, "n": float("inf")}))
    assert back["z"] == {"re": 1.0, "im": -2.0} and back["n"] == "inf"


def test_to_json_deterministic():
    rep = ResidualReport("x", {"r": 1e-17}, {"tol": 1e-12}, True)
    assert to_json(rep) == to_json(rep)


def test_report_rows_and_csv():
    rep = ResidualReport("suite", {"r": 0.5}, {"tol": 0.1}, False)
    rep.add_row("f", [1.0, 2.0], 0.25, 0.5, 0.1, False)
    assert not rep and rep.max_residual() == 0.5
    text = rows_to_csv(rep.rows)
    header, row = text.strip().splitlines()
    assert header.split(",") == list(CSV_COLUMNS)
    assert row.startswith("suite,f,")
    assert "FAIL" in rep.summary_line()


def test_to_dict_verdict():
    rep = ResidualReport("k", {}, {}, True, verdict="fixed")
    d = rep.to_dict(with_rows=True)
    assert d["verdict"] == "fixed" and d["rows"] == []
