"""Time-sampled displacement (and optional velocity) vectors with CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    """Round-trip decimal formatting (17 significant digits)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        u = np.asarray(self.u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if u.shape[0] != times.size:
            raise ValueError("u must have one row per sample time")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "u", u)
        if self.v is not None:
            v = np.asarray(self.v, dtype=float).reshape(u.shape)
            object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.shape[1]

    def to_csv(self, path) -> None:
        n = self.n
        header = ["t"] + [f"u{i}" for i in range(n)]
        if self.v is not None:
            header += [f"v{i}" for i in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for j, t in enumerate(self.times):
                row = [fmt(t)] + [fmt(x) for x in self.u[j]]
                if self.v is not None:
                    row += [fmt(x) for x in self.v[j]]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
        ucols = [i for i, h in enumerate(header) if h.startswith("u")]
        vcols = [i for i, h in enumerate(header) if h.startswith("v")]
        return cls(data[:, 0], data[:, ucols], data[:, vcols] if vcols else None)
