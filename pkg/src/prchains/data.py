"""Dataset ingestion (ARFF/CSV), the bimodal synthetic generator, scaling, and folds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParseError(ValueError):
    """Malformed input file."""


class UnsupportedAttributeError(ParseError):
    """ARFF attribute of a type this loader does not handle."""


class EmptyDatasetError(ParseError):
    """No usable data rows."""


@dataclass(frozen=True)
class Dataset:
    """A multi-output regression dataset.

    X holds N rows of D features, Y holds N rows of L targets. All values
    are finite; rows with missing values are rejected at parse time.
    """

    X: np.ndarray
    Y: np.ndarray
    feature_names: tuple
    target_names: tuple

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-d matrices")
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y row counts differ")
        if X.shape[0] < 1:
            raise EmptyDatasetError("dataset has no rows")
        if X.shape[1] < 1:
            raise ParseError("dataset has no feature columns")
        if Y.shape[1] < 1:
            raise ParseError("dataset has no target columns")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "target_names", tuple(self.target_names))
        if len(self.feature_names) != X.shape[1] or len(self.target_names) != Y.shape[1]:
            raise ValueError("name lists do not match matrix widths")

    @property
    def n_instances(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_targets(self) -> int:
        return self.Y.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.X[idx], self.Y[idx], self.feature_names, self.target_names)

    def to_csv(self) -> str:
        """Serialize to a header + numeric-rows CSV that re-parses exactly."""
        lines = [",".join(self.feature_names + self.target_names)]
        full = np.hstack([self.X, self.Y])
        for row in full:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ArffResult:
    dataset: Dataset
    dropped_rows: int
    relation: str


_NUMERIC_TYPES = {"numeric", "real", "integer"}


def _parse_attribute_line(rest: str, lineno: int):
    rest = rest.strip()
    if not rest:
        raise ParseError(f"line {lineno}: @attribute without a name")
    if rest[0] in "'\"":
        quote = rest[0]
        end = rest.find(quote, 1)
        if end < 0:
            raise ParseError(f"line {lineno}: unterminated attribute name")
        name, type_part = rest[1:end], rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: @attribute needs a name and a type")
        name, type_part = parts
    if type_part.strip().lower() not in _NUMERIC_TYPES:
        raise UnsupportedAttributeError(
            f"line {lineno}: attribute {name!r} has unsupported type {type_part.strip()!r}; "
            "only numeric attributes are handled"
        )
    return name


def parse_arff(text: str, n_targets: int) -> ArffResult:
    """Parse a numeric-attribute ARFF document.

    The trailing ``n_targets`` attributes are taken as targets. Rows
    containing ``?`` are dropped and counted in the result.
    """
    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    names: list[str] = []
    relation = ""
    rows: list[list[float]] = []
    dropped = 0
    in_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            low = line.lower()
            if low.startswith("@relation"):
                relation = line[len("@relation"):].strip().strip("'\"")
            elif low.startswith("@attribute"):
                names.append(_parse_attribute_line(line[len("@attribute"):], lineno))
            elif low.startswith("@data"):
                if not names:
                    raise ParseError(f"line {lineno}: @data before any @attribute")
                in_data = True
            else:
                raise ParseError(f"line {lineno}: unrecognized header line {line!r}")
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(names):
            raise ParseError(
                f"line {lineno}: expected {len(names)} values, found {len(cells)}"
            )
        if any(c == "?" for c in cells):
            dropped += 1
            continue
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric value ({exc})") from None
    if not in_data:
        raise ParseError("missing @data section")
    if not rows:
        raise EmptyDatasetError("ARFF file contains no complete data rows")
    if n_targets >= len(names):
        raise ParseError(
            f"n_targets={n_targets} leaves no feature columns ({len(names)} attributes)"
        )
    mat = np.asarray(rows, dtype=float)
    d = len(names) - n_targets
    ds = Dataset(mat[:, :d], mat[:, d:], names[:d], names[d:])
    return ArffResult(ds, dropped, relation)


def parse_csv(text: str, n_targets: int, has_header: bool = True) -> Dataset:
    """Parse a rectangular numeric CSV whose trailing columns are targets."""
    if n_targets < 1:
        raise ValueError("n_targets must be >= 1")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmptyDatasetError("CSV input is empty")
    names = None
    if has_header:
        names = [c.strip() for c in lines[0].split(",")]
        lines = lines[1:]
    if not lines:
        raise EmptyDatasetError("CSV input has a header but no data rows")
    width = len(lines[0].split(","))
    rows = np.empty((len(lines), width), dtype=float)
    for i, ln in enumerate(lines):
        cells = ln.split(",")
        if len(cells) != width:
            raise ParseError(f"row {i}: expected {width} columns, found {len(cells)}")
        for j, cell in enumerate(cells):
            try:
                rows[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"row {i}, column {j}: non-numeric value {cell.strip()!r}") from None
    if n_targets >= width:
        raise ParseError(f"n_targets={n_targets} leaves no feature columns ({width} total)")
    d = width - n_targets
    if names is None:
        names = [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(n_targets)]
    elif len(names) != width:
        raise ParseError("header width does not match data width")
    return Dataset(rows[:, :d], rows[:, d:], names[:d], names[d:])


def generate_synth(n: int, noise_std: float = 0.03, seed: int = 0) -> Dataset:
    """Bimodal two-target synthetic data.

    x ~ N(0,1); a latent mode s is -1 or +1 with equal probability;
    y1 = s + e1 and y2 = s + e2 with e ~ N(0, noise_std^2). The input
    carries no information about either target, and the two targets share
    the mode, so the joint density over (y1, y2) has two equally likely
    modes at (-1,-1) and (+1,+1).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if noise_std <= 0:
        raise ValueError("noise_std must be > 0")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    s = rng.choice([-1.0, 1.0], size=n)
    eps = rng.normal(0.0, noise_std, size=(n, 2))
    y = np.column_stack([s + eps[:, 0], s + eps[:, 1]])
    return Dataset(x[:, None], y, ("x1",), ("y1", "y2"))


_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Scaler:
    """Per-column standardizer; stds are floored so constant columns map to 0."""

    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, matrix) -> "Scaler":
        m = np.asarray(matrix, dtype=float)
        means = m.mean(axis=0)
        stds = np.maximum(m.std(axis=0), _STD_FLOOR)
        return cls(means, stds)

    def transform(self, matrix) -> np.ndarray:
        return (np.asarray(matrix, dtype=float) - self.means) / self.stds

    def inverse(self, matrix) -> np.ndarray:
        return np.asarray(matrix, dtype=float) * self.stds + self.means


def standardize_dataset(ds: Dataset):
    """Fit feature/target scalers on ``ds`` and return (scaled, x_scaler, y_scaler)."""
    xs = Scaler.fit(ds.X)
    ys = Scaler.fit(ds.Y)
    return scale_dataset(ds, xs, ys), xs, ys


def scale_dataset(ds: Dataset, x_scaler: Scaler, y_scaler: Scaler) -> Dataset:
    return Dataset(x_scaler.transform(ds.X), y_scaler.transform(ds.Y),
                   ds.feature_names, ds.target_names)


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint covering folds whose sizes differ by at most one."""

    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def kfold(n: int, k: int, seed: int) -> FoldPlan:
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of instances n={n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = np.empty(n, dtype=int)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    start = 0
    for fold, size in enumerate(sizes):
        assignments[order[start:start + size]] = fold
        start += size
    return FoldPlan(k, assignments, seed)
