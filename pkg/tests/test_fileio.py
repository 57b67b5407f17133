"""Tests for the JSON writer (17 significant digits) and file readers."""

from __future__ import annotations

import json

import numpy as np
import pytest

from wregress.fileio import (
    ParseError,
    dumps_json,
    law_to_json,
    read_dataset_file,
    read_endpoint_law_file,
    read_measure_file,
    read_pairwise_file,
)
from wregress.measures import EndpointLaw


class TestWriter:
    def test_floats_round_trip_losslessly(self):
        values = [1.0 / 3.0, 0.1, 1e-300, 1.7976931348623157e308, 0.25, -2.5e-17]
        doc = {"values": values}
        parsed = json.loads(dumps_json(doc))
        assert parsed["values"] == values

    def test_seventeen_significant_digits(self):
        text = dumps_json({"x": 1.0 / 3.0})
        assert "0.33333333333333331" in text

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            dumps_json({"x": float("nan")})

    def test_deterministic_layout(self):
        doc = {"b": [1, 2, {"c": 0.5}], "a": "text", "flag": True, "none": None}
        assert dumps_json(doc) == dumps_json(doc)
        assert json.loads(dumps_json(doc)) == doc


class TestReaders:
    def test_dataset_optional_timestamps(self, tmp_path):
        path = tmp_path / "ds.json"
        path.write_text(json.dumps({
            "kind": "discrete", "d": 1,
            "entries": [
                {"points": [[0.0]], "weights": [1.0]},
                {"t": 1.0, "points": [[1.0]], "weights": [1.0]},
            ],
        }))
        kind, d, times, measures = read_dataset_file(path)
        assert kind == "discrete" and d == 1
        assert times == [None, 1.0]
        assert len(measures) == 2

    def test_weight_renormalization_boundary(self, tmp_path):
        ok = tmp_path / "ok.json"
        ok.write_text(json.dumps({
            "kind": "discrete", "d": 1, "points": [[0.0]], "weights": [1.0 + 9e-7],
        }))
        m = read_measure_file(ok)
        assert m.weights[0] == pytest.approx(1.0, abs=1e-15)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({
            "kind": "discrete", "d": 1, "points": [[0.0]], "weights": [1.0 + 2e-6],
        }))
        with pytest.raises(ParseError):
            read_measure_file(bad)

    def test_missing_key_is_parse_error(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"kind": "discrete", "d": 1, "points": [[0.0]]}))
        with pytest.raises(ParseError):
            read_measure_file(path)

    def test_law_round_trip(self, tmp_path):
        law = EndpointLaw.discrete([[0.0], [1.0]], [[2.0], [3.0]], [0.25, 0.75])
        path = tmp_path / "law.json"
        path.write_text(dumps_json(law_to_json(law)))
        back = read_endpoint_law_file(path)
        np.testing.assert_array_equal(back.x0, law.x0)
        np.testing.assert_array_equal(back.x1, law.x1)
        np.testing.assert_array_equal(back.weights, law.weights)

    def test_gaussian_law_psd_enforced(self, tmp_path):
        path = tmp_path / "law.json"
        path.write_text(json.dumps({
            "kind": "gaussian", "d": 1, "mean": [0.0, 0.0],
            "cov": [[1.0, 3.0], [3.0, 1.0]],
        }))
        with pytest.raises(ParseError):
            read_endpoint_law_file(path)

    def test_pairwise_file(self, tmp_path):
        path = tmp_path / "pw.json"
        path.write_text(json.dumps(
            [{"i": 0, "j": 1, "joint": [[0.5, 0.0], [0.0, 0.5]]}]
        ))
        out = read_pairwise_file(path)
        assert out[0][0] == 0 and out[0][1] == 1
        np.testing.assert_array_equal(out[0][2], np.diag([0.5, 0.5]))
