"""Sample containers, CSV ingestion, studentization and seeded randomness."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

_UINT64 = 2**64


@dataclass(frozen=True)
class Dataset:
    """An immutable ``N x d`` matrix of finite reals with column labels.

    Parameters
    ----------
    samples : array-like, shape (N, d)
        One row per sample, one column per variable.
    column_names : sequence of str, optional
        Unique labels, defaults to ``x1 .. xd``.
    seed : int, optional
        Provenance: the seed used to generate the samples, if any.
    """

    samples: np.ndarray
    column_names: tuple = ()
    seed: Optional[int] = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValidationError("samples must be a 2-D matrix")
        n, d = x.shape
        if n < 2 or d < 1:
            raise ValidationError(f"need N >= 2 and d >= 1, got N={n}, d={d}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("samples contain NaN or infinite values")
        x.setflags(write=False)
        names = tuple(self.column_names) if len(self.column_names) else tuple(
            f"x{k + 1}" for k in range(d))
        if len(names) != d:
            raise ValidationError(f"expected {d} column names, got {len(names)}")
        if len(set(names)) != d:
            raise ValidationError("column names must be unique")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "column_names", names)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.samples[:, k]

    def take(self, rows) -> "Dataset":
        """Return a new Dataset made of the given row indices (with repeats)."""
        return Dataset(self.samples[np.asarray(rows)], self.column_names, self.seed)


def load_csv(path, has_header: Optional[bool] = None) -> Dataset:
    """Read a comma-separated sample matrix.

    ``has_header=None`` treats the first row as a header when any of its
    cells fails to parse as a real number.
    """
    if not os.path.exists(path):
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: file is empty")

    if has_header is None:
        has_header = not all(_is_real(c) for c in rows[0])
    names: Sequence[str] = ()
    if has_header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]

    width = len(names) if has_header else len(rows[0]) if rows else 0
    values = []
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValidationError(
                f"{path}: row {r} has {len(row)} columns, expected {width}")
        parsed = []
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {c}") from None
            if not math.isfinite(v):
                raise ValidationError(
                    f"{path}: non-finite value {cell!r} at row {r}, column {c}")
            parsed.append(v)
        values.append(parsed)
    if len(values) < 2:
        raise ValidationError(f"{path}: need at least 2 samples, found {len(values)}")
    return Dataset(np.array(values), tuple(names))


def save_csv(data: Dataset, path, header: bool = True) -> None:
    """Write ``data`` so that :func:`load_csv` recovers it bit for bit."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(data.column_names)
        for row in data.samples:
            w.writerow([repr(float(v)) for v in row])


def _is_real(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def studentize(data: Dataset) -> Dataset:
    """Divide every column by its sample standard deviation (``N - 1`` divisor).

    Columns are not centred; the estimators downstream are translation
    invariant.
    """
    sd = np.std(data.samples, axis=0, ddof=1)
    bad = [data.column_names[k] for k in np.flatnonzero(~(sd > 0))]
    if bad:
        raise ValidationError(f"zero-variance column(s): {', '.join(bad)}")
    return Dataset(data.samples / sd, data.column_names, data.seed)


def derive_seed(seed: int, *keys: int) -> int:
    """Hash a seed and a tuple of non-negative integer keys to a new 64-bit seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator, so streams with distinct
    ids are independent and can be consumed in any order or in parallel.
    """

    seed: int
    stream_id: int = 0
    _key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < _UINT64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.stream_id) < 0:
            raise ValidationError("stream_id must be non-negative")
        object.__setattr__(self, "_key", derive_seed(self.seed, self.stream_id))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(self._key))

    def substream(self, i: int) -> "RngStream":
        """Child stream ``i``; children of different parents never collide."""
        return RngStream(self._key, i)
