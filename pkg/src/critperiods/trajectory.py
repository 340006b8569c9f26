"""Column-oriented per-epoch log with CSV round-tripping."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


class TrajectoryLog:
    """Rows of equal-width records under a fixed header.

    >>> log = TrajectoryLog(["epoch", "loss"])
    >>> log.append(epoch=0, loss=1.5)
    >>> log.column("loss")
    array([1.5])
    """

    def __init__(self, columns, meta: dict | None = None):
        self.columns = list(columns)
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")
        self.rows: list[list] = []
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.rows)

    def append(self, **values):
        missing = set(self.columns) - values.keys()
        extra = values.keys() - set(self.columns)
        if missing or extra:
            raise KeyError(f"row mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        self.rows.append([values[c] for c in self.columns])

    def extend(self, other: "TrajectoryLog"):
        if other.columns != self.columns:
            raise ValueError("cannot merge logs with different columns")
        self.rows.extend(other.rows)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows])

    def where(self, **equals) -> "TrajectoryLog":
        """Rows whose named columns equal the given values."""
        idx = [self.columns.index(k) for k in equals]
        want = list(equals.values())
        out = TrajectoryLog(self.columns, self.meta)
        out.rows = [row for row in self.rows if all(row[i] == w for i, w in zip(idx, want))]
        return out

    def last(self) -> dict:
        return dict(zip(self.columns, self.rows[-1]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(x) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            log = cls(header)
            for row in reader:
                log.rows.append([_parse(x) for x in row])
        return log


def _parse(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text
