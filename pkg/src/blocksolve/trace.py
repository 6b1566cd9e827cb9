"""Per-iteration metric traces and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = ["TraceRow", "Trace", "CSV_HEADER"]

CSV_HEADER = ("k", "epoch", "obj_last", "obj_erg", "feas_last", "feas_erg", "wall_s")


class TraceRow(NamedTuple):
    k: int
    epoch: float
    obj_last: float
    obj_erg: float
    feas_last: float
    feas_erg: float
    wall_s: float


def _g17(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class Trace:
    """Metric rows in increasing ``k``. ``state`` holds the final iterate."""

    rows: list = field(default_factory=list)
    state: object = None
    info: dict = field(default_factory=dict)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.k <= self.rows[-1].k:
            raise ValueError(f"trace rows must have increasing k ({row.k} after {self.rows[-1].k})")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = CSV_HEADER.index(name)
        return np.array([r[idx] for r in self.rows], dtype=np.float64)

    def to_csv_text(self, wall_time: bool = True) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for r in self.rows:
            vals = [str(int(r.k))] + [_g17(v) for v in r[1:6]]
            vals.append(_g17(r.wall_s if wall_time else 0.0))
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()

    def to_csv(self, path, wall_time: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text(wall_time))

    @classmethod
    def from_csv(cls, path) -> "Trace":
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"unexpected trace header {header}")
            for rec in reader:
                out.append(TraceRow(int(rec[0]), *(float(v) for v in rec[1:])))
        return out
