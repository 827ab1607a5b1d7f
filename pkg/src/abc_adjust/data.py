"""Reference tables, observed statistics and weighted samples.

A reference table holds ``n`` simulations: row ``i`` pairs the parameter draw
``theta[i]`` (length ``p``) with the summary statistics ``stats[i]`` (length
``q``) that the generative model produced for it.  Text tables are delimited,
carry a header row, and classify columns by the ``param_`` / ``stat_`` name
prefixes unless explicit column lists are given.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import IO, Optional, Sequence, Union

import numpy as np

from .errors import DataError

PARAM_PREFIX = "param_"
STAT_PREFIX = "stat_"
FLOAT_FMT = "%.17g"
DELIMITERS = (",", "\t", ";")

Source = Union[str, os.PathLike, IO[str], IO[bytes], bytes]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SimulationTable:
    theta: np.ndarray
    stats: np.ndarray
    param_names: tuple
    stat_names: tuple

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        stats = np.asarray(self.stats, dtype=float)
        if theta.ndim == 1:
            theta = theta[:, None]
        if stats.ndim == 1:
            stats = stats[:, None]
        if theta.ndim != 2 or stats.ndim != 2:
            raise DataError("theta and stats must be 2-d matrices")
        n, p = theta.shape
        if n < 1 or p < 1 or stats.shape[1] < 1:
            raise DataError(f"table needs n, p, q >= 1 (got n={n}, p={p}, q={stats.shape[1]})")
        if stats.shape[0] != n:
            raise DataError(f"theta has {n} rows but stats has {stats.shape[0]}")
        names_p = tuple(self.param_names)
        names_s = tuple(self.stat_names)
        if len(names_p) != p or len(names_s) != stats.shape[1]:
            raise DataError("column names do not match matrix widths")
        for name, block in (("parameter", theta), ("statistic", stats)):
            bad = np.argwhere(~np.isfinite(block))
            if bad.size:
                i, j = bad[0]
                col = (names_p if name == "parameter" else names_s)[j]
                raise DataError(f"non-finite value at row {i + 1}, column {col}")
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "stats", _frozen(stats))
        object.__setattr__(self, "param_names", names_p)
        object.__setattr__(self, "stat_names", names_s)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def p(self) -> int:
        return self.theta.shape[1]

    @property
    def q(self) -> int:
        return self.stats.shape[1]

    def subset(self, rows) -> "SimulationTable":
        """Table restricted to ``rows`` (index array or boolean mask)."""
        return SimulationTable(self.theta[rows], self.stats[rows], self.param_names, self.stat_names)


@dataclass(frozen=True)
class ObservedSummaries:
    s_obs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s_obs", _frozen(np.atleast_1d(self.s_obs)))

    def __len__(self):
        return self.s_obs.shape[0]


@dataclass(frozen=True)
class WeightedSample:
    """Parameter draws with normalized nonnegative weights.

    ``label`` records where the values came from: ``rejection``,
    ``homoscedastic`` or ``heteroscedastic``.
    """

    values: np.ndarray
    weights: np.ndarray
    label: str = "rejection"
    param_names: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if values.shape[0] != weights.shape[0]:
            raise DataError(f"{values.shape[0]} values but {weights.shape[0]} weights")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise DataError("weights must be finite and nonnegative")
        total = weights.sum()
        if not total > 0:
            raise DataError("at least one weight must be positive")
        names = tuple(self.param_names) or tuple(f"param_{k}" for k in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise DataError("param_names does not match the number of parameters")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "weights", _frozen(weights / total))
        object.__setattr__(self, "param_names", names)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def effective_size(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))

    def with_values(self, values, label: str) -> "WeightedSample":
        return WeightedSample(values, self.weights, label, self.param_names)


@dataclass(frozen=True)
class Transform:
    kind: str = "none"
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "log", "logit"):
            raise DataError(f"unknown transform {self.kind!r}")
        if self.kind == "logit" and not self.lower < self.upper:
            raise DataError(f"logit bounds need lower < upper (got {self.lower}, {self.upper})")

    @classmethod
    def parse(cls, text: str) -> "Transform":
        """Parse ``none``, ``log`` or ``logit:lower:upper`` (bounds default to 0, 1)."""
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "logit":
            if len(parts) not in (1, 3):
                raise DataError(f"logit transform expects 'logit:lower:upper', got {text!r}")
            if len(parts) == 3:
                return cls("logit", float(parts[1]), float(parts[2]))
            return cls("logit")
        if len(parts) != 1:
            raise DataError(f"cannot parse transform {text!r}")
        return cls(kind)

    def __str__(self):
        if self.kind == "logit":
            return f"logit:{self.lower!r}:{self.upper!r}"
        return self.kind


@dataclass(frozen=True)
class TransformSpec:
    transforms: tuple = ()

    @classmethod
    def identity(cls, p: int) -> "TransformSpec":
        return cls(tuple(Transform() for _ in range(p)))

    @property
    def is_identity(self) -> bool:
        return all(t.kind == "none" for t in self.transforms)

    def for_width(self, p: int) -> "TransformSpec":
        if not self.transforms:
            return TransformSpec.identity(p)
        if len(self.transforms) != p:
            raise DataError(f"{len(self.transforms)} transforms given for {p} parameters")
        return self


@dataclass(frozen=True)
class TableFormat:
    """How to read a delimited table. ``delimiter=None`` means auto-detect."""

    delimiter: Optional[str] = None
    param_columns: Optional[Sequence[str]] = None
    stat_columns: Optional[Sequence[str]] = None


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read()
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def sniff_delimiter(header: str) -> str:
    counts = [header.count(d) for d in DELIMITERS]
    best = int(np.argmax(counts))
    return DELIMITERS[best] if counts[best] > 0 else ","


def _split_header(text: str, delimiter: Optional[str]):
    lines = text.splitlines()
    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    if start == len(lines):
        raise DataError("empty table: no header row")
    header = lines[start]
    delim = delimiter or sniff_delimiter(header)
    names = [h.strip() for h in header.split(delim)]
    body = [ln for ln in lines[start + 1:] if ln.strip()]
    return names, body, delim


def _parse_body(body: list, delim: str, names: list) -> np.ndarray:
    if not body:
        raise DataError("table has no data rows")
    try:
        data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=delim, dtype=float,
                          ndmin=2, comments=None)
    except ValueError:
        data = None
    if data is None or data.shape[1] != len(names):
        # slow path only to produce a precise diagnostic
        for i, line in enumerate(body, start=1):
            cells = line.split(delim)
            if len(cells) != len(names):
                raise DataError(f"malformed row {i}: expected {len(names)} fields, got {len(cells)}")
            for name, cell in zip(names, cells):
                try:
                    float(cell)
                except ValueError:
                    raise DataError(f"non-numeric value {cell.strip()!r} at row {i}, column {name}") from None
        raise DataError("could not parse table")
    return data


def _classify(names: list, fmt: TableFormat):
    if len(set(names)) != len(names):
        raise DataError("duplicate column names in header")
    index = {name: k for k, name in enumerate(names)}

    def pick(explicit, prefix, what):
        if explicit is not None:
            missing = [c for c in explicit if c not in index]
            if missing:
                raise DataError(f"{what} columns not found in header: {missing}")
            cols = list(explicit)
        else:
            cols = [c for c in names if c.startswith(prefix)]
        if not cols:
            raise DataError(f"no {what} columns (expected names starting with {prefix!r})")
        return cols

    params = pick(fmt.param_columns, PARAM_PREFIX, "parameter")
    stats = pick(fmt.stat_columns, STAT_PREFIX, "statistic")
    overlap = set(params) & set(stats)
    if overlap:
        raise DataError(f"columns classified as both parameter and statistic: {sorted(overlap)}")
    return params, stats, [index[c] for c in params], [index[c] for c in stats]


def load_table(source: Source, fmt: Optional[TableFormat] = None) -> SimulationTable:
    """Read a delimited reference table.

    Parameters
    ----------
    source : path, text/binary file object, or bytes
    fmt : TableFormat, optional
        Delimiter override and explicit parameter/statistic column lists.
        Explicit lists take precedence over the name-prefix convention.
    """
    fmt = fmt or TableFormat()
    names, body, delim = _split_header(_read_text(source), fmt.delimiter)
    params, stats, ip, is_ = _classify(names, fmt)
    data = _parse_body(body, delim, names)
    return SimulationTable(data[:, ip], data[:, is_], params, stats)


def write_table(table: SimulationTable, dest, delimiter: str = ",") -> None:
    """Write ``table`` with 17 significant digits, so ``load_table`` restores it exactly."""
    header = delimiter.join(table.param_names + table.stat_names)
    data = np.hstack([table.theta, table.stats])
    _savetxt(dest, data, header, delimiter)


def _savetxt(dest, data: np.ndarray, header: str, delimiter: str = ","):
    np.savetxt(dest, data, fmt=FLOAT_FMT, delimiter=delimiter, header=header, comments="")


def validate_observed(table: SimulationTable, obs) -> ObservedSummaries:
    s = np.atleast_1d(np.asarray(obs, dtype=float)).ravel()
    if s.shape[0] != table.q:
        raise DataError(f"observed vector has length {s.shape[0]}, table has q={table.q} statistics")
    bad = np.flatnonzero(~np.isfinite(s))
    if bad.size:
        raise DataError(f"non-finite observed statistic at position {bad[0] + 1} ({table.stat_names[bad[0]]})")
    return ObservedSummaries(s)


def load_observed(source: Source, table: SimulationTable, delimiter: Optional[str] = None) -> ObservedSummaries:
    """Read observed statistics as a one-row table with header, or as a flat numeric vector.

    With a header, columns are matched to the table's statistic names by name;
    columns not among them are ignored.
    """
    text = _read_text(source)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("observed file is empty")
    delim = delimiter or sniff_delimiter(lines[0])
    first = [c.strip() for c in lines[0].split(delim)]
    try:
        [float(c) for c in lines[0].replace(delim, " ").split()]
        has_header = False
    except ValueError:
        has_header = True
    if not has_header:
        tokens = " ".join(lines).replace(delim, " ").split()
        try:
            return validate_observed(table, [float(t) for t in tokens])
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"non-numeric observed value: {exc}") from None
    if len(lines) != 2:
        raise DataError(f"observed table must have exactly one data row, got {len(lines) - 1}")
    row = _parse_body(lines[1:], delim, first)[0]
    lookup = dict(zip(first, row))
    missing = [c for c in table.stat_names if c not in lookup]
    if missing:
        raise DataError(f"observed table lacks statistic columns {missing}")
    return validate_observed(table, [lookup[c] for c in table.stat_names])


def write_observed(obs: ObservedSummaries, stat_names: Sequence[str], dest, delimiter: str = ",") -> None:
    _savetxt(dest, obs.s_obs[None, :], delimiter.join(stat_names), delimiter)


def write_sample(sample: WeightedSample, dest, delimiter: str = ",") -> None:
    """Posterior sample as a table of parameter columns plus a ``weight`` column."""
    header = delimiter.join(sample.param_names + ("weight",))
    _savetxt(dest, np.column_stack([sample.values, sample.weights]), header, delimiter)


def load_sample(source: Source, label: str = "rejection") -> WeightedSample:
    names, body, delim = _split_header(_read_text(source), None)
    if "weight" not in names:
        raise DataError("sample table needs a 'weight' column")
    data = _parse_body(body, delim, names)
    k = names.index("weight")
    cols = [j for j in range(len(names)) if j != k]
    return WeightedSample(data[:, cols], data[:, k], label, tuple(names[j] for j in cols))
