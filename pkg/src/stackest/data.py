"""Column-oriented datasets with explicit outcome missingness.

Missing values are NaN. On CSV ingestion both empty fields and the -9999
sentinel are converted to NaN; serialization writes missing values as empty
fields. All columns are read-only float64 arrays of equal length, so a
``Dataset`` is safe to share across threads and to cache against by identity.
"""

import csv
import os

import numpy as np

from .exceptions import UnknownColumn

MISSING_SENTINEL = -9999.0


class Dataset:
    """Immutable collection of named float64 columns of equal length.

    Parameters
    ----------
    columns : mapping of str to array-like
        Column name to values. Arrays are copied to read-only float64.
    """

    def __init__(self, columns):
        cols = {}
        n = None
        for name, values in columns.items():
            arr = np.array(values, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"column {name!r} is not 1-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValueError(
                    f"column {name!r} has length {arr.shape[0]}, expected {n}"
                )
            arr.flags.writeable = False
            cols[name] = arr
        if n is None:
            raise ValueError("dataset needs at least one column")
        self._columns = cols
        self._n = n

    @property
    def n_obs(self):
        return self._n

    @property
    def names(self):
        return tuple(self._columns)

    def __contains__(self, name):
        return name in self._columns

    def column(self, name):
        try:
            return self._columns[name]
        except KeyError:
            raise UnknownColumn(f"no column named {name!r}") from None

    def with_columns(self, **replacements):
        """Return a new dataset with the given columns added or replaced."""
        cols = dict(self._columns)
        cols.update(replacements)
        return Dataset(cols)

    def row(self, i):
        """Single observation as a plain dict (for per-record evaluation)."""
        return {name: arr[i] for name, arr in self._columns.items()}

    @classmethod
    def from_record(cls, record):
        """Wrap one observation record as a 1-row dataset."""
        return cls({name: np.array([value]) for name, value in record.items()})


def read_csv(path, sentinel=MISSING_SENTINEL):
    """Read a header-first CSV into a :class:`Dataset`.

    Empty fields and values equal to ``sentinel`` become NaN.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a CSV header") from None
        if not header or any(not name.strip() for name in header):
            raise ValueError(f"{path}: malformed CSV header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            parsed = []
            for name, field in zip(header, row):
                field = field.strip()
                if field == "":
                    parsed.append(np.nan)
                    continue
                try:
                    value = float(field)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: non-numeric value {field!r} in column {name!r}"
                    ) from None
                parsed.append(np.nan if value == sentinel else value)
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    matrix = np.array(rows, dtype=np.float64)
    return Dataset({name: matrix[:, j] for j, name in enumerate(header)})


def write_csv(dataset, path, columns=None):
    """Write a dataset as CSV, atomically (write-then-rename).

    Missing values are written as empty fields; numbers use ``repr`` so all
    digits survive a round trip.
    """
    names = list(columns) if columns is not None else list(dataset.names)
    arrays = [dataset.column(name) for name in names]
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for i in range(dataset.n_obs):
                writer.writerow(
                    ["" if np.isnan(arr[i]) else repr(float(arr[i])) for arr in arrays]
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
