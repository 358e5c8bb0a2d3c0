"""Dataset loading, preprocessing, partitioning and label randomization.

Feature matrices are plain ``(m, d)`` float arrays and labels are ``{-1, +1}``
arrays. A :class:`Dataset` keeps the true labels next to the reported
(randomized) ones so that evaluation code can score against the truth, while
everything handed to the ADMM engine is built from ``y_reported`` only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, InvalidEpsilon, ParseError, TooFewSamples

MISSING_TOKENS = frozenset({"", "?", "NA", "nan", "NaN"})


# --------------------------------------------------------------------------
# containers

@dataclass(frozen=True)
class DataSample:
    x: np.ndarray
    y_true: int
    y_reported: int | None = None


@dataclass
class Dataset:
    X: np.ndarray
    y_true: np.ndarray
    y_reported: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        self.y_true = np.asarray(self.y_true, dtype=int)
        if self.y_reported is not None:
            self.y_reported = np.asarray(self.y_reported, dtype=int)
        if self.X.shape[0] != self.y_true.shape[0]:
            raise ValueError("X and y_true have different lengths")
        if not np.all(np.isin(self.y_true, (-1, 1))):
            raise ValueError("labels must be -1 or +1")

    def __len__(self):
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            X=self.X[idx],
            y_true=self.y_true[idx],
            y_reported=None if self.y_reported is None else self.y_reported[idx],
            feature_names=list(self.feature_names),
        )

    def samples(self):
        for k in range(len(self)):
            yr = None if self.y_reported is None else int(self.y_reported[k])
            yield DataSample(self.X[k], int(self.y_true[k]), yr)


@dataclass
class Shard:
    """The data one server collected from its group of users."""

    server_id: int
    X: np.ndarray
    y_true: np.ndarray
    y_reported: np.ndarray | None = None

    def __post_init__(self):
        if self.X.shape[0] < 1:
            raise TooFewSamples(f"shard {self.server_id} is empty")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def labels(self, which="reported") -> np.ndarray:
        if which == "true":
            return self.y_true
        if self.y_reported is None:
            raise ValueError(f"shard {self.server_id} has not been randomized")
        return self.y_reported


# --------------------------------------------------------------------------
# randomized response

def rr_probability(epsilon: float) -> float:
    """Probability ``1 / (1 + e^eps)`` of reporting each fixed label.

    ``epsilon = inf`` is accepted and means no randomization (``p = 0``).
    """
    if epsilon is None or math.isnan(epsilon) or epsilon <= 0:
        raise InvalidEpsilon(f"epsilon must be > 0, got {epsilon}")
    if math.isinf(epsilon):
        return 0.0
    # 1/(1+e^eps) written to avoid overflow for large eps
    t = math.exp(-epsilon)
    return t / (1.0 + t)


@dataclass(frozen=True)
class RRMechanism:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        rr_probability(self.epsilon)

    @property
    def p(self) -> float:
        return rr_probability(self.epsilon)

    def report_distribution(self, y: int) -> dict[int, float]:
        """``Pr[y' | y]`` for both outputs."""
        p = self.p
        return {y: 1.0 - p, -y: p}

    def privacy_ratio(self) -> float:
        """max over outputs of Pr[y' | y=+1] / Pr[y' | y=-1]."""
        pos = self.report_distribution(1)
        neg = self.report_distribution(-1)
        return max(pos[v] / neg[v] for v in (1, -1))

    def rng(self, server_id: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, server_id])


def _apply_rr(y, u, p):
    out = np.array(y, dtype=int, copy=True)
    out[u < p] = 1
    out[(u >= p) & (u < 2 * p)] = -1
    return out


def randomize_label(s: DataSample, m: RRMechanism, rng: np.random.Generator | None = None) -> DataSample:
    """Report +1 w.p. p, -1 w.p. p and the true label w.p. 1 - 2p."""
    if s.y_true not in (-1, 1):
        raise ValueError("label must be -1 or +1")
    rng = m.rng() if rng is None else rng
    u = rng.random()
    return replace(s, y_reported=int(_apply_rr([s.y_true], np.array([u]), m.p)[0]))


def randomize_labels(y: np.ndarray, m: RRMechanism, server_id: int = 0) -> np.ndarray:
    """Vectorised randomized response for one server's users.

    User ``j`` of server ``i`` always consumes the ``j``-th uniform of the
    stream keyed by ``(seed, i)``, so results do not depend on the order in
    which shards are processed.
    """
    u = m.rng(server_id).random(len(y))
    return _apply_rr(y, u, m.p)


def randomize_shards(shards: list[Shard], m: RRMechanism) -> list[Shard]:
    return [replace(s, y_reported=randomize_labels(s.y_true, m, s.server_id)) for s in shards]


# --------------------------------------------------------------------------
# CSV loading

@dataclass
class Schema:
    """Column roles for a CSV file with a header row.

    ``columns`` maps a column name to ``"numeric"``, ``"categorical"``,
    ``"label"`` or ``"ignore"``. Exactly one label column is required.
    Labels equal to ``positive_label`` (a value or a list of values, compared
    after stripping whitespace and a trailing period) map to +1, everything
    else to -1.
    """

    columns: dict[str, str]
    positive_label: str | list[str]
    intercept: bool = False

    def __post_init__(self):
        roles = set(self.columns.values())
        bad = roles - {"numeric", "categorical", "label", "ignore"}
        if bad:
            raise ValueError(f"unknown column roles: {sorted(bad)}")
        if list(self.columns.values()).count("label") != 1:
            raise ValueError("schema needs exactly one label column")

    @property
    def label_column(self) -> str:
        return next(k for k, v in self.columns.items() if v == "label")


def _clean_label(v: str) -> str:
    v = v.strip()
    return v[:-1] if v.endswith(".") else v


@dataclass
class EncodedTable:
    """Unary-encoded features before any scaling."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    numeric_mask: np.ndarray
    dropped: int = 0


def read_csv_table(path, schema: Schema) -> EncodedTable:
    """Parse ``path``; drop rows with a missing value; unary-encode categoricals.

    Category sets are collected over the whole file so that splits made
    afterwards share one column layout.
    """
    path = Path(path)
    rows = []
    dropped = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        missing_cols = [c for c in schema.columns if c not in header]
        if missing_cols:
            raise ParseError(f"columns not in header: {missing_cols}", 1)
        index = {c: header.index(c) for c in schema.columns}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            vals = {c: row[i].strip() for c, i in index.items()}
            if any(vals[c] in MISSING_TOKENS for c, r in schema.columns.items() if r != "ignore"):
                dropped += 1
                continue
            rows.append((lineno, vals))
    if not rows:
        raise EmptyDataset(f"{path} has no complete rows")

    feature_cols = [c for c, r in schema.columns.items() if r in ("numeric", "categorical")]
    levels = {}
    for c in feature_cols:
        if schema.columns[c] == "categorical":
            levels[c] = sorted({vals[c] for _, vals in rows})

    names: list[str] = []
    numeric = []
    for c in feature_cols:
        if schema.columns[c] == "numeric":
            names.append(c)
            numeric.append(True)
        else:
            names.extend(f"{c}={lv}" for lv in levels[c])
            numeric.extend([False] * len(levels[c]))
    if schema.intercept:
        names.append("intercept")
        numeric.append(False)

    X = np.zeros((len(rows), len(names)))
    y = np.empty(len(rows), dtype=int)
    pos = schema.positive_label
    pos = {_clean_label(str(v)) for v in (pos if isinstance(pos, (list, tuple, set)) else [pos])}
    lab = schema.label_column
    for r, (lineno, vals) in enumerate(rows):
        k = 0
        for c in feature_cols:
            if schema.columns[c] == "numeric":
                try:
                    X[r, k] = float(vals[c])
                except ValueError:
                    raise ParseError(f"column {c!r}: not a number: {vals[c]!r}", lineno) from None
                k += 1
            else:
                lv = levels[c]
                X[r, k + lv.index(vals[c])] = 1.0
                k += len(lv)
        if schema.intercept:
            X[r, k] = 1.0
        y[r] = 1 if _clean_label(vals[lab]) in pos else -1
    return EncodedTable(X=X, y=y, feature_names=names, numeric_mask=np.array(numeric, dtype=bool), dropped=dropped)


@dataclass
class FeatureScaler:
    """Min-max scaling of numeric columns followed by a global norm cap.

    Numeric columns whose fitted range already lies in ``[-1, 1]`` are left
    untouched; others are mapped to ``[0, 1]``. Afterwards every vector is
    divided by the largest row norm seen during :meth:`fit` (only if that
    norm exceeds 1), so fitted rows satisfy ``||x|| <= 1``.
    """

    numeric_mask: np.ndarray
    lo: np.ndarray | None = None
    span: np.ndarray | None = None
    scale: float = 1.0

    def fit(self, X: np.ndarray) -> "FeatureScaler":
        X = np.asarray(X, dtype=float)
        lo = np.zeros(X.shape[1])
        span = np.ones(X.shape[1])
        for k in np.flatnonzero(self.numeric_mask):
            cmin, cmax = X[:, k].min(), X[:, k].max()
            if cmin >= -1.0 and cmax <= 1.0:
                continue
            lo[k] = cmin
            span[k] = cmax - cmin if cmax > cmin else 1.0
        self.lo, self.span = lo, span
        top = np.linalg.norm((X - lo) / span, axis=1).max()
        self.scale = float(top) if top > 1.0 else 1.0
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.lo is None:
            raise RuntimeError("scaler is not fitted")
        return (np.asarray(X, dtype=float) - self.lo) / self.span / self.scale


def load_csv_dataset(path, schema: Schema) -> Dataset:
    """Read, encode and normalise a CSV file in one go (scaler fitted on all rows)."""
    table = read_csv_table(path, schema)
    scaler = FeatureScaler(table.numeric_mask).fit(table.X)
    return Dataset(X=scaler.transform(table.X), y_true=table.y, feature_names=table.feature_names)


def dump_randomized_csv(shards: list[Shard], path, feature_names=None, header: str | None = None) -> None:
    """Write every shard's rows with ``server``, ``y_true`` and ``y_reported`` columns."""
    d = shards[0].d
    names = list(feature_names) if feature_names else [f"x{k}" for k in range(d)]
    with Path(path).open("w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["server", *names, "y_true", "y_reported"])
        for s in shards:
            for k in range(s.m):
                w.writerow([s.server_id, *(f"{v:.17g}" for v in s.X[k]), int(s.y_true[k]), int(s.labels()[k])])


# --------------------------------------------------------------------------
# splitting

def train_test_split(data: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(len(data))
    cut = int(round(ratio * len(data)))
    return data.subset(perm[:cut]), data.subset(perm[cut:])


def partition(data: Dataset, n: int, seed: int) -> list[Shard]:
    """Shuffle, then split into ``n`` shards whose sizes differ by at most one."""
    if hasattr(n, "n"):
        n = n.n
    if len(data) < n:
        raise TooFewSamples(f"{len(data)} samples cannot fill {n} shards")
    perm = np.random.default_rng(seed).permutation(len(data))
    out = []
    for i, idx in enumerate(np.array_split(perm, n)):
        part = data.subset(idx)
        out.append(Shard(server_id=i, X=part.X, y_true=part.y_true, y_reported=part.y_reported))
    return out


def subsample(data: Dataset, size: int, seed: int) -> Dataset:
    """First ``size`` rows after a seeded shuffle."""
    if size >= len(data):
        return data
    perm = np.random.default_rng(seed).permutation(len(data))
    return data.subset(np.sort(perm[:size]))
