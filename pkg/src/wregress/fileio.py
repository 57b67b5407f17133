"""File formats for the command-line surface.

JSON carries structured data (datasets, endpoint laws, results) and CSV
carries plot-ready tabular exports.  All floats are serialized with 17
significant digits so files round-trip losslessly and reruns are
byte-identical; schema documents for each format ship in /schemas.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .errors import DimensionError, WregressError
from .gaussian import GaussianDataset
from .measures import DiscreteMeasure, EndpointLaw, GaussianMeasure
from .regression import TimedDataset

__all__ = [
    "ParseError",
    "dumps_json",
    "write_json",
    "read_measure_file",
    "read_dataset_file",
    "read_endpoint_law_file",
    "read_pairwise_file",
    "read_times_file",
    "measure_to_json",
    "law_to_json",
]

WEIGHT_RENORM_TOL = 1e-6


class ParseError(WregressError, ValueError):
    """Input file malformed or violating a format invariant."""


# ---------------------------------------------------------------------------
# 17-significant-digit JSON writer
# ---------------------------------------------------------------------------


def _write_value(out: list[str], value: Any, indent: int) -> None:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(value.items()):
            out.append(f'{pad}  {json.dumps(str(k))}: ')
            _write_value(out, v, indent + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        seq = list(value)
        if not seq:
            out.append("[]")
            return
        flat = all(not isinstance(v, (dict, list, tuple)) for v in seq)
        if flat:
            out.append("[" + ", ".join(_scalar(v) for v in seq) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(pad + "  ")
            _write_value(out, v, indent + 1)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_scalar(value))


def _scalar(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError(f"cannot serialize non-finite float {v}")
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_json(obj: Any) -> str:
    """Serialize with 17-significant-digit floats; deterministic layout."""
    out: list[str] = []
    _write_value(out, obj, 0)
    out.append("\n")
    return "".join(out)


def write_json(path, obj: Any) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------


def _load(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} is not valid JSON: {e}") from e


def _require(doc: dict, key: str, context: str) -> Any:
    if key not in doc:
        raise ParseError(f"{context}: missing required key {key!r}")
    return doc[key]


def _as_weights(raw, context: str) -> np.ndarray:
    w = np.asarray(raw, dtype=float).ravel()
    if w.size == 0:
        raise ParseError(f"{context}: empty weight vector")
    if (w < 0).any():
        raise ParseError(f"{context}: negative weight")
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_RENORM_TOL:
        raise ParseError(f"{context}: weights sum to {total!r}")
    return w / total


def _measure_from_entry(entry: dict, kind: str, d: int, context: str):
    try:
        if kind == "discrete":
            points = np.asarray(_require(entry, "points", context), dtype=float)
            weights = _as_weights(_require(entry, "weights", context), context)
            if points.ndim == 1:
                points = points[:, None]
            if points.ndim != 2 or points.shape[1] != d:
                raise DimensionError(
                    f"{context}: points have dimension {points.shape[-1] if points.ndim else 0}, expected {d}"
                )
            return DiscreteMeasure(points, weights)
        mean = np.asarray(_require(entry, "mean", context), dtype=float).ravel()
        cov = np.asarray(_require(entry, "cov", context), dtype=float)
        if mean.size != d:
            raise DimensionError(f"{context}: mean has dimension {mean.size}, expected {d}")
        return GaussianMeasure(mean, cov)
    except (DimensionError, ParseError):
        raise
    except (WregressError, ValueError, TypeError) as e:
        raise ParseError(f"{context}: {e}") from e


def read_measure_file(path):
    """Single measure: ``{"kind", "d", "points"/"weights"}`` or
    ``{"kind", "d", "mean"/"cov"}``."""
    doc = _load(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    kind = _require(doc, "kind", str(path))
    if kind not in ("discrete", "gaussian"):
        raise ParseError(f"{path}: unknown kind {kind!r}")
    d = int(_require(doc, "d", str(path)))
    return _measure_from_entry(doc, kind, d, str(path))


def read_dataset_file(path):
    """Dataset document: kind, dimension, and timestamped entries.

    Returns ``(kind, d, times, measures)`` with ``times`` a list whose
    entries may be None (allowed only for PCA usage).
    """
    doc = _load(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    kind = _require(doc, "kind", str(path))
    if kind not in ("discrete", "gaussian"):
        raise ParseError(f"{path}: unknown kind {kind!r}")
    d = int(_require(doc, "d", str(path)))
    raw_entries = _require(doc, "entries", str(path))
    if not isinstance(raw_entries, list) or not raw_entries:
        raise ParseError(f"{path}: entries must be a nonempty list")
    times = []
    measures = []
    for i, entry in enumerate(raw_entries):
        context = f"{path} entry {i}"
        if not isinstance(entry, dict):
            raise ParseError(f"{context}: expected an object")
        times.append(float(entry["t"]) if "t" in entry else None)
        measures.append(_measure_from_entry(entry, kind, d, context))
    return kind, d, times, measures


def timed_dataset(times, measures, path="dataset") -> TimedDataset:
    if any(t is None for t in times):
        raise ParseError(f"{path}: every entry needs a timestamp 't' for fitting")
    return TimedDataset(list(zip(times, measures)))


def gaussian_dataset(times, measures, path="dataset") -> GaussianDataset:
    if any(t is None for t in times):
        raise ParseError(f"{path}: every entry needs a timestamp 't' for fitting")
    return GaussianDataset(list(zip(times, measures)))


def read_endpoint_law_file(path) -> EndpointLaw:
    """Endpoint-law document, or any result file embedding one under "pi"."""
    doc = _load(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    if "pi" in doc and isinstance(doc["pi"], dict):
        doc = doc["pi"]
    kind = _require(doc, "kind", str(path))
    try:
        if kind == "discrete":
            return EndpointLaw.discrete(
                np.asarray(_require(doc, "x0", str(path)), dtype=float),
                np.asarray(_require(doc, "x1", str(path)), dtype=float),
                _as_weights(_require(doc, "weights", str(path)), str(path)),
            )
        if kind == "gaussian":
            return EndpointLaw.gaussian(
                np.asarray(_require(doc, "mean", str(path)), dtype=float),
                np.asarray(_require(doc, "cov", str(path)), dtype=float),
            )
    except (DimensionError, ParseError):
        raise
    except (WregressError, ValueError, TypeError) as e:
        raise ParseError(f"{path}: {e}") from e
    raise ParseError(f"{path}: unknown kind {kind!r}")


def read_pairwise_file(path):
    """Pairwise constraints: ``[{"i", "j", "joint"}, ...]``."""
    doc = _load(path)
    if isinstance(doc, dict):
        doc = doc.get("constraints", doc)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a list of constraints")
    out = []
    for k, item in enumerate(doc):
        context = f"{path} constraint {k}"
        if not isinstance(item, dict):
            raise ParseError(f"{context}: expected an object")
        out.append(
            (
                int(_require(item, "i", context)),
                int(_require(item, "j", context)),
                np.asarray(_require(item, "joint", context), dtype=float),
            )
        )
    return out


def read_times_file(path) -> list[float]:
    doc = _load(path)
    if isinstance(doc, dict):
        doc = _require(doc, "times", str(path))
    if not isinstance(doc, list) or not doc:
        raise ParseError(f"{path}: expected a nonempty list of times")
    return [float(t) for t in doc]


# ---------------------------------------------------------------------------
# Writers for domain objects
# ---------------------------------------------------------------------------


def measure_to_json(measure) -> dict:
    if isinstance(measure, DiscreteMeasure):
        return {
            "points": measure.points.tolist(),
            "weights": measure.weights.tolist(),
        }
    return {
        "mean": measure.mean.tolist(),
        "cov": measure.covariance.tolist(),
    }


def law_to_json(law: EndpointLaw) -> dict:
    if law.is_discrete:
        return {
            "kind": "discrete",
            "d": law.dim,
            "x0": law.x0.tolist(),
            "x1": law.x1.tolist(),
            "weights": law.weights.tolist(),
        }
    return {
        "kind": "gaussian",
        "d": law.dim,
        "mean": law.mean.tolist(),
        "cov": law.covariance.tolist(),
    }
