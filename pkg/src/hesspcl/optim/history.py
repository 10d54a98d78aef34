"""Per-iteration records and their CSV form."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

CSV_COLUMNS = ("iter", "loss", "grad_norm", "step_norm", "radius", "accepted", "stop_reason", "wall_ms")

# stop reasons
CONVERGED = "gradient_tolerance"
MAX_ITERS = "max_iterations"
RADIUS_COLLAPSE = "radius_below_minimum"
LINE_SEARCH_FAILED = "line_search_failed"
NONFINITE = "nonfinite_loss"


@dataclass
class IterationRecord:
    """One optimizer iteration; ``radius`` holds the step length for line-search methods."""

    iteration: int
    loss: float
    grad_norm: float
    step_norm: float = 0.0
    radius: float = 0.0
    accepted: bool = True
    stop_reason: str = ""
    wall_ms: float | None = None


def _fmt(x):
    return repr(float(x))


@dataclass
class History:
    method: str
    records: list = field(default_factory=list)
    stop_reason: str = ""
    skipped_updates: list = field(default_factory=list)  # iterations whose quasi-Newton update was skipped
    timed: bool = False
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add(self, record: IterationRecord):
        if self.timed:
            record.wall_ms = 1e3 * (time.perf_counter() - self._t0)
        self.records.append(record)
        return record

    def stop(self, reason):
        self.stop_reason = reason
        if self.records:
            self.records[-1].stop_reason = reason

    @property
    def final_loss(self):
        accepted = [r.loss for r in self.records if r.accepted]
        return accepted[-1] if accepted else float("nan")

    @property
    def iterations(self):
        return self.records[-1].iteration if self.records else 0

    def losses(self, accepted_only=True):
        return [r.loss for r in self.records if r.accepted or not accepted_only]

    def to_csv(self, header_lines=()):
        """CSV text; ``header_lines`` are emitted first as ``#`` comments."""
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([
                r.iteration,
                _fmt(r.loss),
                _fmt(r.grad_norm),
                _fmt(r.step_norm),
                _fmt(r.radius),
                int(r.accepted),
                r.stop_reason,
                "" if r.wall_ms is None else f"{r.wall_ms:.3f}",
            ])
        return buf.getvalue()


def read_history_csv(text):
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    out = []
    for row in csv.DictReader(rows):
        out.append(IterationRecord(
            iteration=int(row["iter"]),
            loss=float(row["loss"]),
            grad_norm=float(row["grad_norm"]),
            step_norm=float(row["step_norm"]),
            radius=float(row["radius"]),
            accepted=row["accepted"] == "1",
            stop_reason=row["stop_reason"],
            wall_ms=float(row["wall_ms"]) if row["wall_ms"] else None,
        ))
    return out
