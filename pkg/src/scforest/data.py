"""Categorical datasets, CSV ingestion, folds, temporal pairing and generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MISSING = "?"


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CategoricalDataset:
    """Named discrete variables and complete rows of category indices.

    Parameters
    ----------
    names : sequence of str
        Variable names, one per column.
    cardinalities : sequence of int
        Number of categories of each variable.
    data : array-like of shape (n_rows, n_vars)
        Category index of every cell.
    categories : sequence of sequence of str, optional
        Category labels for each variable, used for round-tripping to text.
    """

    names: tuple
    cardinalities: tuple
    data: np.ndarray
    categories: tuple | None = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        cards = tuple(int(c) for c in self.cardinalities)
        if len(names) != len(cards):
            raise DataError("names and cardinalities differ in length")
        if len(set(names)) != len(names):
            raise DataError("duplicate variable names")
        if any(c < 1 for c in cards):
            raise DataError("every cardinality must be >= 1")
        data = np.asarray(self.data)
        if data.size == 0:
            data = data.reshape(0, len(names))
        if data.ndim != 2 or data.shape[1] != len(names):
            raise DataError(
                f"data must have shape (n_rows, {len(names)}), got {data.shape}"
            )
        if data.size and not np.issubdtype(data.dtype, np.integer):
            if not np.all(np.equal(np.mod(data, 1), 0)):
                raise DataError("category indices must be integers")
        data = _frozen(data, np.int64)
        if data.size:
            bad = (data < 0) | (data >= np.asarray(cards))
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise DataError(
                    f"row {r}: value {data[r, c]} out of range for "
                    f"{names[c]!r} (cardinality {cards[c]})"
                )
        cats = self.categories
        if cats is not None:
            cats = tuple(tuple(str(x) for x in col) for col in cats)
            if len(cats) != len(names) or any(
                len(col) != card for col, card in zip(cats, cards)
            ):
                raise DataError("categories do not match cardinalities")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "categories", cats)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def __len__(self):
        return self.n_rows

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def take(self, rows) -> "CategoricalDataset":
        """Return the dataset restricted to the given row indices."""
        return CategoricalDataset(
            self.names, self.cardinalities, self.data[np.asarray(rows, dtype=int)],
            self.categories,
        )

    def select(self, columns: Sequence[int]) -> "CategoricalDataset":
        columns = list(columns)
        cats = None if self.categories is None else [self.categories[c] for c in columns]
        return CategoricalDataset(
            [self.names[c] for c in columns],
            [self.cardinalities[c] for c in columns],
            self.data[:, columns],
            cats,
        )

    def concat_rows(self, other: "CategoricalDataset") -> "CategoricalDataset":
        if other.names != self.names or other.cardinalities != self.cardinalities:
            raise DataError("schema mismatch")
        return CategoricalDataset(
            self.names, self.cardinalities, np.vstack([self.data, other.data]),
            self.categories,
        )

    def decode(self) -> list[list[str]]:
        """Map every cell back to its category label."""
        cats = self.categories
        if cats is None:
            cats = tuple(tuple(str(k) for k in range(c)) for c in self.cardinalities)
        return [[cats[j][v] for j, v in enumerate(row)] for row in self.data]


def hstack(left: CategoricalDataset, right: CategoricalDataset) -> CategoricalDataset:
    """Join two row-aligned datasets column-wise."""
    if left.n_rows != right.n_rows:
        raise DataError("row counts differ")
    cats = None
    if left.categories is not None and right.categories is not None:
        cats = left.categories + right.categories
    return CategoricalDataset(
        left.names + right.names,
        left.cardinalities + right.cardinalities,
        np.hstack([left.data, right.data]),
        cats,
    )


@dataclass(frozen=True)
class SequenceDataset:
    """Ordered observation sequences over a shared variable schema."""

    names: tuple
    cardinalities: tuple
    sequences: tuple
    categories: tuple | None = None

    def __post_init__(self):
        schema = CategoricalDataset(
            self.names, self.cardinalities, np.zeros((0, len(self.names)), int),
            self.categories,
        )
        seqs = []
        for s, seq in enumerate(self.sequences):
            seq = np.asarray(seq).reshape(-1, len(schema.names))
            seq = CategoricalDataset(schema.names, schema.cardinalities, seq).data
            if seq.shape[0] < 2:
                raise DataError(f"sequence {s} has length {seq.shape[0]}; need >= 2")
            seqs.append(seq)
        object.__setattr__(self, "names", schema.names)
        object.__setattr__(self, "cardinalities", schema.cardinalities)
        object.__setattr__(self, "categories", schema.categories)
        object.__setattr__(self, "sequences", tuple(seqs))

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_transitions(self) -> int:
        return sum(len(s) - 1 for s in self.sequences)


def to_transitions(seqs: SequenceDataset):
    """Pair every observation with its successor inside the same sequence.

    Returns
    -------
    prev, next : CategoricalDataset
        Row ``r`` of ``prev`` is the slice immediately preceding row ``r``
        of ``next``.
    """
    if not seqs.sequences:
        raise DataError("no sequences")
    prev = np.vstack([s[:-1] for s in seqs.sequences])
    nxt = np.vstack([s[1:] for s in seqs.sequences])
    return (
        CategoricalDataset(seqs.names, seqs.cardinalities, prev, seqs.categories),
        CategoricalDataset(seqs.names, seqs.cardinalities, nxt, seqs.categories),
    )


# --- mixed tables (CSV ingestion) -----------------------------------------


@dataclass(frozen=True)
class Column:
    """One parsed CSV column.

    ``categories`` is None for continuous columns, whose ``values`` are floats
    (NaN where missing). Categorical columns hold integer codes with -1 for
    missing cells.
    """

    name: str
    values: np.ndarray
    categories: tuple | None = None

    @property
    def continuous(self) -> bool:
        return self.categories is None

    @property
    def missing(self) -> np.ndarray:
        if self.continuous:
            return np.isnan(self.values)
        return self.values < 0


@dataclass(frozen=True)
class Table:
    """A parsed CSV: categorical columns plus continuous ones awaiting discretization."""

    columns: tuple

    @property
    def names(self) -> tuple:
        return tuple(c.name for c in self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values) if self.columns else 0

    def __len__(self):
        return self.n_rows

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"unknown column {name!r}")

    @property
    def continuous_names(self) -> tuple:
        return tuple(c.name for c in self.columns if c.continuous)

    def take(self, rows) -> "Table":
        rows = np.asarray(rows, dtype=int)
        return Table(tuple(
            Column(c.name, _frozen(c.values[rows], c.values.dtype), c.categories)
            for c in self.columns
        ))

    def to_dataset(self, cuts: Mapping[str, Sequence[float]] | None = None) -> CategoricalDataset:
        """Convert to a :class:`CategoricalDataset`.

        Continuous columns need an entry in ``cuts``; values are binned with
        ``np.digitize`` so a column with ``c`` cuts has ``c + 1`` categories.
        """
        cuts = cuts or {}
        names, cards, cols, cats = [], [], [], []
        for c in self.columns:
            if c.missing.any():
                raise DataError(f"column {c.name!r} has missing values; call drop_missing")
            if c.continuous:
                if c.name not in cuts:
                    raise DataError(f"continuous column {c.name!r} needs cut points")
                cp = np.asarray(cuts[c.name], dtype=float)
                cols.append(np.digitize(c.values, cp))
                labels = _bin_labels(cp)
            else:
                cols.append(c.values)
                labels = c.categories
            names.append(c.name)
            cards.append(len(labels))
            cats.append(labels)
        data = np.column_stack(cols) if cols else np.zeros((0, 0), int)
        return CategoricalDataset(names, cards, data, cats)


def _bin_labels(cuts) -> tuple:
    if len(cuts) == 0:
        return ("all",)
    edges = [-np.inf, *cuts, np.inf]
    return tuple(f"[{edges[i]:g},{edges[i + 1]:g})" for i in range(len(edges) - 1))


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, schema: Mapping[str, str] | None = None, missing: str = MISSING) -> Table:
    """Parse a CSV file with a header row.

    Columns whose non-missing cells all parse as numbers are marked
    continuous unless ``schema`` maps the column to ``"categorical"``; any
    other column is categorical, with categories sorted lexicographically.
    ``schema`` may also force ``"continuous"``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return parse_rows(rows, schema=schema, missing=missing, source=str(path))


def parse_rows(rows, schema=None, missing: str = MISSING, source: str = "<rows>") -> Table:
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{source}: duplicate column names in header")
    body = rows[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(
                f"{source}: line {lineno} has {len(row)} fields, expected {len(header)}"
            )
    schema = dict(schema or {})
    unknown = set(schema) - set(header)
    if unknown:
        raise DataError(f"{source}: schema names unknown columns {sorted(unknown)}")
    columns = []
    for j, name in enumerate(header):
        cells = [row[j].strip() for row in body]
        present = [c for c in cells if c != missing]
        kind = schema.get(name)
        if kind is None:
            kind = "continuous" if present and all(_is_float(c) for c in present) else "categorical"
        if kind == "continuous":
            try:
                vals = [np.nan if c == missing else float(c) for c in cells]
            except ValueError as exc:
                raise DataError(f"{source}: column {name!r} is not numeric: {exc}") from None
            columns.append(Column(name, _frozen(vals, float)))
        elif kind == "categorical":
            cats = tuple(sorted(set(present)))
            lookup = {c: i for i, c in enumerate(cats)}
            codes = [-1 if c == missing else lookup[c] for c in cells]
            columns.append(Column(name, _frozen(codes, np.int64), cats))
        else:
            raise DataError(f"unknown column kind {kind!r} for {name!r}")
    return Table(tuple(columns))


def drop_missing(table: Table) -> tuple[Table, int]:
    """Remove every row with a missing cell.

    Returns the filtered table and the number of rows removed. Category
    lists are kept so encodings stay stable.
    """
    if not table.columns:
        return table, 0
    bad = np.zeros(table.n_rows, dtype=bool)
    for c in table.columns:
        bad |= c.missing
    if bad.all() and table.n_rows:
        raise DataError("every row has a missing value; dataset would be empty")
    if not bad.any():
        return table, 0
    return table.take(np.flatnonzero(~bad)), int(bad.sum())


def write_csv(path, dataset: CategoricalDataset, extra: Mapping[str, Sequence] | None = None):
    """Write a dataset with decoded category labels; ``extra`` columns go first."""
    extra = dict(extra or {})
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*extra, *dataset.names])
        for r, row in enumerate(dataset.decode()):
            w.writerow([*(v[r] for v in extra.values()), *row])


def load_sequences_csv(path, seq_column: str = "seq_id", missing: str = MISSING) -> SequenceDataset:
    """Read sequences: a leading ``seq_id`` column and rows in temporal order.

    Every other column is treated as categorical.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != seq_column:
        raise DataError(f"{path}: first column must be {seq_column!r}")
    schema = {h: "categorical" for h in header}
    table = parse_rows(rows, schema=schema, missing=missing, source=str(path))
    table, _ = drop_missing(table)
    seq_col = table.columns[0]
    body = Table(table.columns[1:]).to_dataset()
    ids = np.asarray(seq_col.categories)[seq_col.values]
    order, seqs = [], {}
    for r, sid in enumerate(ids):
        if sid not in seqs:
            order.append(sid)
            seqs[sid] = []
        seqs[sid].append(r)
    if not order:
        raise DataError(f"{path}: no data rows")
    return SequenceDataset(
        body.names, body.cardinalities,
        tuple(body.data[seqs[s]] for s in order), body.categories,
    )


def write_sequences_csv(path, seqs: SequenceDataset, seq_column: str = "seq_id"):
    rows = np.vstack(seqs.sequences)
    ids = [str(s) for s, seq in enumerate(seqs.sequences) for _ in range(len(seq))]
    ds = CategoricalDataset(seqs.names, seqs.cardinalities, rows, seqs.categories)
    write_csv(path, ds, extra={seq_column: ids})


# --- folds -----------------------------------------------------------------


@dataclass(frozen=True)
class FoldSplit:
    folds: np.ndarray
    n_folds: int

    def train_test(self, fold: int):
        return np.flatnonzero(self.folds != fold), np.flatnonzero(self.folds == fold)

    def __iter__(self):
        for f in range(self.n_folds):
            yield self.train_test(f)


def kfold_split(n_rows: int, n_folds: int, seed: int = 0) -> FoldSplit:
    """Seeded shuffle followed by round-robin fold assignment."""
    if hasattr(n_rows, "__len__"):
        n_rows = len(n_rows)
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    if n_folds > n_rows:
        raise ValueError(f"n_folds={n_folds} exceeds the number of rows ({n_rows})")
    perm = np.random.default_rng(seed).permutation(n_rows)
    folds = np.empty(n_rows, dtype=np.int64)
    folds[perm] = np.arange(n_rows) % n_folds
    return FoldSplit(_frozen(folds, np.int64), n_folds)


# --- generators ------------------------------------------------------------


def synth_weak_features(n_relevant=10, n_noise=20, p=0.6, n_rows=100, seed=0):
    """Binary class plus features that copy it with probability ``p``.

    The class is column 0 (``"class"``); weakly relevant features are
    ``weak_<i>`` and class-independent uniform features are ``noise_<i>``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if min(n_relevant, n_noise, n_rows) < 0:
        raise ValueError("counts must be non-negative")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n_rows)
    agree = rng.random((n_rows, n_relevant)) < p
    weak = np.where(agree, y[:, None], 1 - y[:, None])
    noise = rng.integers(0, 2, (n_rows, n_noise))
    names = ["class"] + [f"weak_{i}" for i in range(n_relevant)] + [
        f"noise_{i}" for i in range(n_noise)
    ]
    data = np.column_stack([y, weak, noise]) if n_rows else np.zeros((0, len(names)), int)
    return CategoricalDataset(names, [2] * len(names), data)


def synth_augmented_nb(n_features=6, n_rows=300, n_classes=4, cardinality=3,
                       concentration=1.0, intra_prob=0.7, seed=0):
    """Clean classification data from a random forest-augmented naive Bayes model.

    Every feature depends on the class; in a random order, each feature
    after the first also takes an earlier feature as parent with
    probability ``intra_prob``. CPT rows are symmetric Dirichlet draws.
    The class is column 0 (``"class"``), features are ``f<i>``.
    """
    if n_classes < 2 or cardinality < 2:
        raise ValueError("class and feature cardinalities must be >= 2")
    if not 0.0 <= intra_prob <= 1.0:
        raise ValueError("intra_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_features)
    parent = {}
    for pos, f in enumerate(order):
        use = pos > 0 and rng.random() < intra_prob
        parent[f] = int(order[rng.integers(0, pos)]) if use else None
    width = {f: cardinality if parent[f] is not None else 1 for f in range(n_features)}
    cpts = {f: rng.dirichlet([concentration] * cardinality, size=n_classes * width[f])
            for f in range(n_features)}
    y = rng.integers(0, n_classes, n_rows)
    X = np.zeros((n_rows, n_features), dtype=np.int64)
    for f in order:
        cfg = y * width[f] + (X[:, parent[f]] if parent[f] is not None else 0)
        u = rng.random(n_rows)
        X[:, f] = (u[:, None] > np.cumsum(cpts[f][cfg], axis=1)).sum(axis=1)
    X = np.minimum(X, cardinality - 1)
    names = ["class"] + [f"f{i}" for i in range(n_features)]
    return CategoricalDataset(names, [n_classes] + [cardinality] * n_features,
                              np.column_stack([y, X]))


def add_noise_features(data, count: int, seed: int = 0):
    """Append ``count`` uniform binary columns ``noise_<i>``.

    Works on a :class:`CategoricalDataset` or a :class:`Table`; name indices
    skip any ``noise_<i>`` already present.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return data
    rng = np.random.default_rng(seed)
    taken = set(data.names)
    names, i = [], 0
    while len(names) < count:
        if f"noise_{i}" not in taken:
            names.append(f"noise_{i}")
        i += 1
    n = data.n_rows
    block = rng.integers(0, 2, (n, count))
    if isinstance(data, Table):
        new = tuple(Column(nm, _frozen(block[:, j], np.int64), ("0", "1"))
                    for j, nm in enumerate(names))
        return Table(data.columns + new)
    cats = None
    if data.categories is not None:
        cats = data.categories + (("0", "1"),) * count
    return CategoricalDataset(
        data.names + tuple(names), data.cardinalities + (2,) * count,
        np.hstack([data.data, block]), cats,
    )


@dataclass
class TwoSliceGenerator:
    """Ground-truth two-slice model used to simulate sequences.

    ``init_parents[i]`` lists slice-0 parents (same-slice column indices) of
    variable ``i``. ``trans_parents[i]`` lists parents of ``x_t[i]`` as
    columns of the joined ``(x_{t-1}, x_t)`` row: ``0..m-1`` for the previous
    slice and ``m..2m-1`` for the current one. CPT arrays have shape
    ``(q, r)`` with parent configurations in mixed-radix order, first listed
    parent most significant.
    """

    names: tuple
    cardinalities: tuple
    init_parents: tuple
    init_cpts: tuple
    trans_parents: tuple
    trans_cpts: tuple
    _order: tuple = field(init=False, repr=False)

    def __post_init__(self):
        m = len(self.cardinalities)
        cards2 = tuple(self.cardinalities) * 2
        for parents, cpts, offset in ((self.init_parents, self.init_cpts, 0),
                                      (self.trans_parents, self.trans_cpts, m)):
            if len(parents) != m or len(cpts) != m:
                raise ValueError("one parent list and CPT per variable required")
            for i, (pa, cpt) in enumerate(zip(parents, cpts)):
                cpt = np.asarray(cpt, dtype=float)
                full_cards = self.cardinalities if offset == 0 else cards2
                q = int(np.prod([full_cards[p] for p in pa])) if pa else 1
                if cpt.shape != (q, self.cardinalities[i]):
                    raise ValueError(f"CPT for {self.names[i]!r} has shape {cpt.shape}")
                if (cpt < 0).any() or not np.allclose(cpt.sum(axis=1), 1.0):
                    raise ValueError(f"CPT rows for {self.names[i]!r} are not distributions")
        self._order = (
            _topo_order(m, [[p for p in pa] for pa in self.init_parents]),
            _topo_order(m, [[p - m for p in pa if p >= m] for pa in self.trans_parents]),
        )

    def sample(self, n_timesteps: int, rng) -> np.ndarray:
        m = len(self.cardinalities)
        cards = np.asarray(self.cardinalities)
        out = np.zeros((n_timesteps, m), dtype=np.int64)
        for t in range(n_timesteps):
            if t == 0:
                row, order = out[0], self._order[0]
                parents, cpts = self.init_parents, self.init_cpts
                ctx, ctx_cards = row, cards
            else:
                row, order = out[t], self._order[1]
                parents, cpts = self.trans_parents, self.trans_cpts
                ctx_cards = np.concatenate([cards, cards])
            for i in order:
                if t > 0:
                    ctx = np.concatenate([out[t - 1], row])
                pa = list(parents[i])
                j = int(np.ravel_multi_index(tuple(ctx[pa]), tuple(ctx_cards[pa]))) if pa else 0
                probs = np.asarray(cpts[i], dtype=float)[j]
                row[i] = rng.choice(len(probs), p=probs)
        return out


def _topo_order(m, parents):
    order, state = [], [0] * m

    def visit(i):
        if state[i] == 1:
            raise ValueError("same-slice parents contain a cycle")
        if state[i] == 0:
            state[i] = 1
            for p in parents[i]:
                visit(p)
            state[i] = 2
            order.append(i)

    for i in range(m):
        visit(i)
    return tuple(order)


def synth_dbn_sequences(model: TwoSliceGenerator, n_timesteps: int, seed: int = 0,
                        n_sequences: int = 1) -> SequenceDataset:
    """Ancestral sampling of ``n_sequences`` runs of length ``n_timesteps``."""
    if n_timesteps < 2:
        raise DataError("n_timesteps must be >= 2 to yield a transition")
    rng = np.random.default_rng(seed)
    seqs = tuple(model.sample(n_timesteps, rng) for _ in range(n_sequences))
    return SequenceDataset(model.names, model.cardinalities, seqs)


def random_scf_generator(n_vars: int, k: int = 1, cardinality: int = 2, seed: int = 0,
                         concentration: float = 1.0, intra_prob: float = 1.0,
                         ) -> TwoSliceGenerator:
    """Random ground truth: an intra-slice forest plus ``k`` previous-slice parents each.

    Each non-first variable (in a random order) gets a same-slice parent among
    its predecessors with probability ``intra_prob``. CPT rows are drawn from
    a symmetric Dirichlet with the given concentration; smaller values give
    stronger dependencies.
    """
    rng = np.random.default_rng(seed)
    m, r = n_vars, cardinality
    order = rng.permutation(m)
    intra = [None] * m
    for pos in range(1, m):
        if rng.random() < intra_prob:
            intra[order[pos]] = int(order[rng.integers(0, pos)])
    trans_parents, trans_cpts, init_parents, init_cpts = [], [], [], []
    for i in range(m):
        inter = sorted(int(x) for x in rng.choice(m, size=min(k, m), replace=False))
        pa = tuple(inter + ([m + intra[i]] if intra[i] is not None else []))
        trans_parents.append(pa)
        trans_cpts.append(rng.dirichlet([concentration] * r, size=r ** len(pa)))
        ipa = (intra[i],) if intra[i] is not None else ()
        init_parents.append(ipa)
        init_cpts.append(rng.dirichlet([concentration] * r, size=r ** len(ipa)))
    return TwoSliceGenerator(
        tuple(f"x{i}" for i in range(m)), (r,) * m,
        tuple(init_parents), tuple(init_cpts), tuple(trans_parents), tuple(trans_cpts),
    )
