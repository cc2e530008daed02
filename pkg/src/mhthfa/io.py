"""Reading data sets and reading/writing fitted models."""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import SchemaVersionError
from .hthfa import FactorComponentParams

__all__ = [
    "DataSet",
    "InputError",
    "ModelFormatError",
    "SerializedModel",
    "SCHEMA_VERSION",
    "load_csv",
    "standardize",
    "split_semisupervised",
    "save_model",
    "load_model",
    "model_to_json",
    "model_from_json",
]

SCHEMA_VERSION = 1


class InputError(ValueError):
    """A data file could not be read as a numeric table."""


class ModelFormatError(ValueError):
    """A model file is not valid JSON or lacks required fields."""


@dataclass(frozen=True)
class DataSet:
    """A numeric table plus optional class labels.

    Attributes
    ----------
    matrix : (n, p) ndarray
        Finite feature values (standardized if ``center`` is set).
    column_names : tuple of str
    labels : (n,) int ndarray or None
        1..G for labelled rows, 0 for unlabelled rows.
    label_names : tuple of str
        ``label_names[k - 1]`` is the raw token of label k.
    center, scale : (p,) ndarray or None
        The standardization record: ``matrix = (raw - center) / scale``.
    unlabelled_counts : dict or None
        Per-class counts of rows hidden by :func:`split_semisupervised`.
    """

    matrix: np.ndarray
    column_names: Tuple[str, ...]
    labels: Optional[np.ndarray] = None
    label_names: Tuple[str, ...] = ()
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    unlabelled_counts: Optional[Dict[str, int]] = field(default=None, compare=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def p(self):
        return self.matrix.shape[1]

    @property
    def standardized(self):
        return self.center is not None

    def raw(self):
        """Feature matrix in the original units."""
        if self.center is None:
            return self.matrix.copy()
        return self.matrix * self.scale + self.center


def _parse_float(cell, row, column):
    try:
        value = float(cell)
    except ValueError:
        raise InputError(f"row {row}, column '{column}': non-numeric value {cell!r}") from None
    if not math.isfinite(value):
        raise InputError(f"row {row}, column '{column}': non-finite value {cell!r}")
    return value


def load_csv(path, label_column=None, unlabelled_token=None, columns=None):
    """Read a CSV file with a header row.

    Parameters
    ----------
    path : str or Path
    label_column : str, optional
        Column holding class tokens; it is excluded from the features.  The
        distinct tokens (other than ``unlabelled_token``) are mapped to
        1..G in sorted order.
    unlabelled_token : str, optional
        Token marking an unlabelled row (mapped to 0).  Empty label cells are
        always treated as unlabelled.
    columns : sequence of str, optional
        Feature columns to keep; default is every column except the label.

    Raises
    ------
    InputError
        Missing file, missing header, ragged rows, unknown columns,
        non-numeric feature cells (the message names the row and column) or
        an empty table.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file (no header row)") from None
        rows = [row for row in reader if row]
    if label_column is not None and label_column not in header:
        raise InputError(f"{path}: label column '{label_column}' not in header")
    features = list(columns) if columns is not None else [h for h in header if h != label_column]
    missing = [c for c in features if c not in header]
    if missing:
        raise InputError(f"{path}: unknown columns {missing}")
    if not features:
        raise InputError(f"{path}: no feature columns")
    if not rows:
        raise InputError(f"{path}: the data set is empty")
    index = [header.index(c) for c in features]
    matrix = np.empty((len(rows), len(features)))
    tokens = []
    for i, row in enumerate(rows):
        line = i + 2  # 1-based, counting the header
        if len(row) != len(header):
            raise InputError(f"{path}: row {line} has {len(row)} fields, expected {len(header)}")
        for j, (col, name) in enumerate(zip(index, features)):
            matrix[i, j] = _parse_float(row[col], line, name)
        if label_column is not None:
            tokens.append(row[header.index(label_column)].strip())
    labels, names = None, ()
    if label_column is not None:
        unl = {"", unlabelled_token} if unlabelled_token is not None else {""}
        names = tuple(sorted({t for t in tokens if t not in unl}))
        code = {t: k + 1 for k, t in enumerate(names)}
        labels = np.array([code.get(t, 0) for t in tokens], dtype=int)
    return DataSet(matrix, tuple(features), labels, names)


def standardize(ds):
    """Per-column z-scoring; the mean and standard deviation are recorded."""
    if ds.standardized:
        return ds
    center = ds.matrix.mean(axis=0)
    scale = ds.matrix.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return replace(ds, matrix=(ds.matrix - center) / scale, center=center, scale=scale)


def split_semisupervised(ds, fraction_unlabelled, seed):
    """Hide the labels of a random subset of rows.

    ``round(fraction * n)`` rows (at least one, at most n - 1) are chosen
    uniformly without replacement and their labels set to 0.  The realized
    per-class counts are stored in ``unlabelled_counts``.
    """
    if ds.labels is None or np.any(ds.labels == 0):
        raise ValueError("split_semisupervised needs a fully labelled data set")
    if not 0.0 < fraction_unlabelled < 1.0:
        raise ValueError("fraction_unlabelled must lie in (0, 1)")
    n = ds.n
    count = int(min(max(round(fraction_unlabelled * n), 1), n - 1))
    rng = np.random.default_rng(seed)
    hide = rng.choice(n, size=count, replace=False)
    labels = ds.labels.copy()
    labels[hide] = 0
    counts = {name: int(np.sum(ds.labels[hide] == k + 1)) for k, name in enumerate(ds.label_names)}
    return replace(ds, labels=labels, unlabelled_counts=counts)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------


@dataclass
class SerializedModel:
    """A mixture model as stored on disk, with its fit metadata.

    ``center``/``scale`` record the standardization the model was fitted
    under (None when it was fitted on raw data).
    """

    model: "MixtureModel"  # noqa: F821
    metadata: Dict = field(default_factory=dict)
    column_names: Tuple[str, ...] = ()
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    schema_version: int = SCHEMA_VERSION

    @property
    def dims(self):
        return self.model.dims


def _mat(a):
    a = np.atleast_2d(np.asarray(a, float))
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _vec(a):
    return [float(v) for v in np.atleast_1d(np.asarray(a, float))]


def _unmat(obj):
    shape = tuple(int(s) for s in obj["shape"])
    data = np.asarray(obj["data"], float)
    if len(shape) != 2 or data.size != shape[0] * shape[1]:
        raise ModelFormatError("matrix entry has inconsistent shape")
    return data.reshape(shape)


def model_to_json(sm):
    """Canonical JSON text of a :class:`SerializedModel` (floats as shortest repr)."""
    model = sm.model
    G, p, q, r = model.dims
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dims": {"G": G, "p": p, "q": q, "r": r},
        "weights": _vec(model.weights),
        "components": [
            {
                "mu": _vec(c.mu),
                "B": _mat(c.B),
                "D": _vec(c.D),
                "Lam": _mat(c.Lam),
                "omega": float(c.omega),
                "lam": float(c.lam),
            }
            for c in model.components
        ],
        "column_names": list(sm.column_names),
        "standardization": None
        if sm.center is None
        else {"center": _vec(sm.center), "scale": _vec(sm.scale)},
        "metadata": sm.metadata,
    }
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def model_from_json(text):
    """Inverse of :func:`model_to_json`.

    Raises
    ------
    ModelFormatError
        Invalid JSON or missing/inconsistent fields.
    SchemaVersionError
        The file was written under another schema version.
    """
    from .fit import MixtureModel

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ModelFormatError("model file lacks a schema version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"model schema version {doc['schema_version']!r} is not supported (expected {SCHEMA_VERSION})"
        )
    try:
        dims = doc["dims"]
        comps = [
            FactorComponentParams(
                np.asarray(c["mu"], float),
                _unmat(c["B"]),
                np.asarray(c["D"], float),
                _unmat(c["Lam"]),
                float(c["omega"]),
                float(c["lam"]),
            )
            for c in doc["components"]
        ]
        model = MixtureModel(np.asarray(doc["weights"], float), comps)
        if model.dims != (dims["G"], dims["p"], dims["q"], dims["r"]):
            raise ModelFormatError("stored dims disagree with the parameters")
        std = doc.get("standardization")
        center = scale = None
        if std is not None:
            center = np.asarray(std["center"], float)
            scale = np.asarray(std["scale"], float)
        return SerializedModel(
            model,
            metadata=doc.get("metadata", {}),
            column_names=tuple(doc.get("column_names", ())),
            center=center,
            scale=scale,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (ModelFormatError, SchemaVersionError)):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from None


def save_model(sm, path):
    """Write a model (or :class:`SerializedModel`) as schema-versioned JSON."""
    if not isinstance(sm, SerializedModel):
        sm = SerializedModel(sm)
    Path(path).write_text(model_to_json(sm))


def load_model(path):
    """Read a model file written by :func:`save_model`."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    return model_from_json(path.read_text())


def fit_metadata(result) -> Dict:
    """The metadata block stored alongside a fitted model."""
    return {
        "seed": int(result.seed),
        "trace_length": int(len(result.log_likelihood_trace)),
        "log_likelihood": float(result.log_likelihood),
        "bic": float(result.bic),
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
    }


def labels_from_names(names: List[str], tokens) -> np.ndarray:
    """Map raw label tokens to 1..G using ``names`` (unknown tokens -> 0)."""
    code = {t: k + 1 for k, t in enumerate(names)}
    return np.array([code.get(str(t), 0) for t in tokens], dtype=int)
