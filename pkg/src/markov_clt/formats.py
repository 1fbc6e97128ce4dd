"""JSON documents for chains, rewards and TD models.

Chain::

    {"P": [[0.8, 0.2], [0.3, 0.7]], "labels": ["a", "b"]}

Reward (vector ``r`` with one row per state, or matrix ``A``)::

    {"r": [[1.0], [0.0]]}        # a flat list is read as d = 1

TD model (``chain`` inline or as a path relative to the document)::

    {"chain": {...}, "A": [[[1.0]], [[3.0]]], "b": [[-2.0], [-2.0]], "delta": 0.75}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .markov import FiniteMarkovChain
from .td import TDModel


def read_json(source):
    """Load a JSON object from a path, or pass a dict through."""
    if isinstance(source, dict):
        return source
    try:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top-level JSON value must be an object")
    return doc


def _check_keys(doc, allowed, what):
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key {extra[0]!r} in {what}")


def _array(value, field, ndim=None):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"field {field!r} must be a (rectangular) numeric array") from None
    if a.dtype == object:
        raise ConfigError(f"field {field!r} must be a (rectangular) numeric array")
    if ndim is not None and a.ndim not in ndim:
        raise DimensionError(f"field {field!r} has {a.ndim} dimensions, expected {ndim}")
    return a


def _rows_have_equal_length(P, field):
    if not isinstance(P, list) or not P:
        raise ConfigError(f"field {field!r} must be a non-empty list of rows")
    for i, row in enumerate(P):
        if not isinstance(row, list) or len(row) != len(P):
            raise DimensionError(f"row {i} of {field!r} must have {len(P)} entries")


def chain_from_json(source) -> FiniteMarkovChain:
    doc = read_json(source)
    _check_keys(doc, ("P", "labels"), "chain")
    if "P" not in doc:
        raise ConfigError("chain is missing field 'P'")
    _rows_have_equal_length(doc["P"], "P")
    return FiniteMarkovChain(_array(doc["P"], "P", (2,)), tuple(doc.get("labels") or ()))


def reward_from_json(source) -> np.ndarray:
    """Reward array of shape ``(S, d)`` (from ``r``) or ``(S, d, d)`` (from ``A``)."""
    doc = read_json(source)
    _check_keys(doc, ("r", "A"), "reward")
    if ("r" in doc) == ("A" in doc):
        raise ConfigError("reward needs exactly one of the fields 'r' or 'A'")
    if "r" in doc:
        r = _array(doc["r"], "r", (1, 2))
        return r[:, None] if r.ndim == 1 else r
    return _array(doc["A"], "A", (3,))


def td_model_from_json(source) -> TDModel:
    doc = read_json(source)
    _check_keys(doc, ("chain", "A", "b", "delta"), "TD model")
    for key in ("chain", "A", "b"):
        if key not in doc:
            raise ConfigError(f"TD model is missing field {key!r}")
    chain = doc["chain"]
    if isinstance(chain, str) and not isinstance(source, dict):
        chain = Path(source).parent / chain
    A = _array(doc["A"], "A", (1, 3))
    b = _array(doc["b"], "b", (1, 2))
    delta = doc.get("delta", 0.75)
    if not isinstance(delta, (int, float)) or isinstance(delta, bool):
        raise ConfigError("field 'delta' must be a number")
    return TDModel(chain_from_json(chain), A, b, float(delta))


def to_jsonable(obj):
    """Convert numpy arrays and scalars inside `obj` to plain Python values."""
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
