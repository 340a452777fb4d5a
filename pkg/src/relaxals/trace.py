"""Per-iteration residual records and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional


@dataclass
class TraceEntry:
    iter: int
    err: float
    omega_used: float
    beta_sq_est: Optional[float] = None


@dataclass
class ResidualTrace:
    """Ordered residual history of one run.

    ``omega_used`` of entry ``l`` is the relaxation parameter applied in the
    sweep that leaves iterate ``l``; ``beta_sq_est`` is ``None`` until the
    shift controller has produced an estimate.
    """

    entries: list = field(default_factory=list)
    converged: bool = False

    def append(self, iter, err, omega_used, beta_sq_est=None):
        if self.entries and iter <= self.entries[-1].iter:
            raise ValueError("trace iterations must be strictly increasing")
        if not self.entries and iter != 0:
            raise ValueError("trace must start at iteration 0")
        self.entries.append(
            TraceEntry(int(iter), float(err), float(omega_used),
                       None if beta_sq_est is None else float(beta_sq_est)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def errors(self):
        return [e.err for e in self.entries]

    @property
    def omegas(self):
        return [e.omega_used for e in self.entries]

    def err_at(self, iter):
        for e in self.entries:
            if e.iter == iter:
                return e.err
        raise KeyError(iter)

    def iterations_to(self, threshold):
        """First iteration whose error is <= threshold, or None."""
        for e in self.entries:
            if e.err <= threshold:
                return e.iter
        return None

    # serialization ---------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "err", "omega_used", "beta_sq_est"])
        for e in self.entries:
            writer.writerow([e.iter, repr(e.err), repr(e.omega_used),
                             "" if e.beta_sq_est is None else repr(e.beta_sq_est)])
        return buf.getvalue()

    def to_json(self, **extra) -> str:
        rows = [
            {"iter": e.iter, "err": _json_float(e.err),
             "omega_used": e.omega_used, "beta_sq_est": e.beta_sq_est}
            for e in self.entries
        ]
        doc = dict(extra)
        doc["converged"] = self.converged
        doc["trace"] = rows
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_csv(cls, text: str) -> "ResidualTrace":
        trace = cls()
        for row in csv.DictReader(io.StringIO(text)):
            beta = row["beta_sq_est"]
            trace.append(int(row["iter"]), float(row["err"]),
                         float(row["omega_used"]), float(beta) if beta else None)
        return trace


def _json_float(x):
    return x if math.isfinite(x) else None
