"""Target potentials f with gradients and convexity metadata.

A potential exposes ``dim``, ``value(x)``, ``grad(x)`` and, when known, the
strong-convexity and gradient-Lipschitz constants ``m <= M``.  Samplers only
ever call ``grad``; the harness uses the constants for diagnostics.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Potential",
    "QuadraticPotential",
    "LogisticPotential",
    "make_quadratic",
    "logistic_grad",
    "DatasetFormatError",
    "DatasetLoadResult",
    "load_dataset",
    "synthetic_logistic_dataset",
]


class Potential:
    """Interface: a smooth target with gradient and optional (m, M) constants."""

    dim: int
    m: float | None = None
    M: float | None = None

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        # accepts a point in R^d, or a batch of points stacked along axis 0
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.dim:
            raise ValueError(f"expected point(s) of dimension {self.dim}, got shape {x.shape}")
        return x


class QuadraticPotential(Potential):
    """f(x) = (1/2) sum_i a_i x_i^2 with exact gradient and m = min a, M = max a."""

    def __init__(self, diag):
        diag = np.asarray(diag, dtype=float)
        if diag.ndim != 1 or diag.size < 1:
            raise ValueError("diag must be a 1-d vector")
        if not np.all(diag > 0.0):
            raise ValueError("all diagonal entries must be positive")
        self.diag = diag
        self.dim = diag.size
        self.m = float(diag.min())
        self.M = float(diag.max())

    def value(self, x: np.ndarray):
        x = self._check_dim(x)
        out = 0.5 * np.sum(self.diag * x * x, axis=-1)
        return float(out) if out.ndim == 0 else out

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = self._check_dim(x)
        return self.diag * x


def make_quadratic(diag) -> QuadraticPotential:
    """Diagonal quadratic validation target; rejects non-positive curvatures."""
    return QuadraticPotential(diag)


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z) without overflow: max(z, 0) + log1p(e^{-|z|})
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticPotential(Potential):
    """Ridge-regularized logistic-regression negative log-posterior.

    f(theta) = delta/2 ||theta||^2 + sum_i log(1 + exp(-y_i x_i^T theta))
    with labels y_i in {-1, +1}.  delta-strongly convex; M is bounded by
    delta + lambda_max(X^T X)/4 (stored as metadata, not tight).
    """

    def __init__(self, features, labels, delta: float):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.ndim != 2:
            raise ValueError("features must be an (m, d) matrix")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must have one entry per feature row")
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError("labels must be +1 or -1")
        if not (delta > 0.0):
            raise ValueError("ridge coefficient delta must be positive")
        self.features = features
        self.labels = labels
        self.delta = float(delta)
        self.dim = features.shape[1]
        # signed rows y_i x_i appear in every margin and gradient
        self._yx = labels[:, None] * features
        self.m = self.delta
        gram_top = float(np.linalg.eigvalsh(features.T @ features)[-1])
        self.M = self.delta + 0.25 * gram_top

    def value(self, x: np.ndarray):
        x = self._check_dim(x)
        margins = x @ self._yx.T
        out = 0.5 * self.delta * np.sum(x * x, axis=-1) + np.sum(_softplus(-margins), axis=-1)
        return float(out) if out.ndim == 0 else out

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = self._check_dim(x)
        margins = x @ self._yx.T
        return self.delta * x - _sigmoid(-margins) @ self._yx


def logistic_grad(p: LogisticPotential, theta) -> np.ndarray:
    """Gradient of the logistic potential at theta (overflow-safe)."""
    return p.grad(np.asarray(theta, dtype=float))


class DatasetFormatError(ValueError):
    """A labeled-CSV file failed to parse; the message names the row."""


@dataclass
class DatasetLoadResult:
    """Parsed labeled dataset plus a small load report."""

    features: np.ndarray
    labels: np.ndarray
    n_rows: int
    n_features: int
    label_mapping: str  # "none" for +-1 input, "0/1 -> -1/+1" when remapped
    header_skipped: bool = False

    def __iter__(self):
        # allows: features, labels = load_dataset(path)
        return iter((self.features, self.labels))


def _parse_row(cells: list[str], row_no: int) -> list[float]:
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise DatasetFormatError(f"row {row_no}: non-numeric cell ({exc})") from None


def load_dataset(path) -> DatasetLoadResult:
    """Load a labeled CSV: one row per observation, label first, features after.

    UTF-8, comma-separated.  A non-numeric first row is treated as a header
    and skipped.  Labels must be in {-1, +1} or {0, 1}; the latter are mapped
    to {-1, +1} and the mapping is recorded in the result.
    """
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f]
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not rows:
        raise DatasetFormatError("empty file")

    header_skipped = False
    first_cells = rows[0][1].split(",")
    try:
        [float(c) for c in first_cells]
    except ValueError:
        header_skipped = True
        rows = rows[1:]
        if not rows:
            raise DatasetFormatError("file contains only a header row")

    parsed = []
    width = None
    for row_no, ln in rows:
        cells = ln.split(",")
        if width is None:
            width = len(cells)
            if width < 2:
                raise DatasetFormatError(f"row {row_no}: need a label and at least one feature")
        elif len(cells) != width:
            raise DatasetFormatError(f"row {row_no}: expected {width} columns, got {len(cells)}")
        parsed.append((row_no, _parse_row(cells, row_no)))

    data = np.asarray([vals for _, vals in parsed], dtype=float)
    labels = data[:, 0]
    features = data[:, 1:]

    unique = set(np.unique(labels))
    if unique <= {-1.0, 1.0}:
        mapping = "none"
    elif unique <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0
        mapping = "0/1 -> -1/+1"
    else:
        bad = next(row_no for (row_no, vals) in parsed if vals[0] not in (-1.0, 1.0))
        raise DatasetFormatError(f"row {bad}: label must be in {{-1,+1}} or {{0,1}}")

    return DatasetLoadResult(
        features=features,
        labels=labels,
        n_rows=features.shape[0],
        n_features=features.shape[1],
        label_mapping=mapping,
        header_skipped=header_skipped,
    )


def synthetic_logistic_dataset(n_rows: int, n_features: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Standardized synthetic classification data of a given shape.

    Features are iid standard normal; labels are drawn from the logistic
    model at a random ground-truth weight vector.  Matches the shape of the
    real credit-scoring benchmark when called with (1000, 49); no claim of
    matching its feature encoding is made.
    """
    if n_rows < 1 or n_features < 1:
        raise ValueError("n_rows and n_features must be >= 1")
    features = rng.standard_normal((n_rows, n_features))
    theta = rng.standard_normal(n_features) / math.sqrt(n_features)
    probs = _sigmoid(features @ theta)
    labels = np.where(rng.random(n_rows) < probs, 1.0, -1.0)
    return features, labels
