import json

import numpy as np
import pytest

from markov_clt import formats
from markov_clt.errors import ConfigError, DimensionError


def test_chain_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"P": [[0.8, 0.2], [0.3, 0.7]], "labels": ["a", "b"]}))
    chain = formats.chain_from_json(path)
    assert chain.labels == ("a", "b")
    np.testing.assert_array_equal(chain.P, [[0.8, 0.2], [0.3, 0.7]])


@pytest.mark.parametrize(
    "doc, exc, match",
    [
        ({"P": [[0.5, 0.5], [0.5, 0.4]]}, ValueError, "row 1"),
        ({"P": [[0.5, 0.5], [0.5]]}, DimensionError, "row 1"),
        ({"P": [[0.5, 0.5], [0.5, "x"]]}, ConfigError, "'P'"),
        ({"Q": [[1.0]]}, ConfigError, "'Q'"),
        ({"labels": []}, ConfigError, "'P'"),
    ],
)
def test_chain_errors(doc, exc, match):
    with pytest.raises(exc, match=match):
        formats.chain_from_json(doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        formats.read_json(path)


def test_reward_shapes():
    assert formats.reward_from_json({"r": [1, 0]}).shape == (2, 1)
    assert formats.reward_from_json({"r": [[1, 0], [2, 3], [4, 5]]}).shape == (3, 2)
    assert formats.reward_from_json({"A": [[[1.0]], [[2.0]]]}).shape == (2, 1, 1)
    with pytest.raises(ConfigError):
        formats.reward_from_json({"r": [1], "A": [[[1.0]]]})
    with pytest.raises(DimensionError):
        formats.reward_from_json({"A": [1, 2]})


def test_td_model_with_relative_chain(tmp_path):
    (tmp_path / "chain.json").write_text(json.dumps({"P": [[0.7, 0.3], [0.3, 0.7]]}))
    (tmp_path / "m.json").write_text(json.dumps({"chain": "chain.json", "A": [1, 3], "b": [-2, -2], "delta": 0.8}))
    model = formats.td_model_from_json(tmp_path / "m.json")
    assert model.delta == 0.8 and model.A_bar[0, 0] == pytest.approx(2.0)
    inline = formats.td_model_from_json({"chain": {"P": [[1.0]]}, "A": [[[2.0]]], "b": [[1.0]]})
    assert inline.delta == 0.75
    with pytest.raises(ConfigError, match="'b'"):
        formats.td_model_from_json({"chain": {"P": [[1.0]]}, "A": [[[2.0]]]})


def test_to_jsonable():
    doc = formats.to_jsonable({"a": np.arange(3), "b": (np.float64(1.5), np.bool_(True))})
    assert json.dumps(doc) == '{"a": [0, 1, 2], "b": [1.5, true]}'
