"""GOSPA evaluation (alpha = 2) with missed/false/switching breakdown."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

SYSTEMS = ("local", "v2v", "priority")
COMPONENTS = ("total", "localization", "missed", "false_", "switching")


@dataclass(frozen=True)
class GospaParams:
    p: float = 2.0
    c: float = 30.0
    alpha: float = 2.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("GOSPA order p must be >= 1")
        if self.c <= 0:
            raise ValueError("GOSPA cutoff c must be positive")
        if self.alpha != 2:
            raise ValueError("only alpha = 2 is supported")

    @property
    def cardinality_cost(self) -> float:
        return self.c**self.p / self.alpha


@dataclass(frozen=True)
class GospaBreakdown:
    total: float = 0.0
    localization: float = 0.0
    missed: float = 0.0
    false_: float = 0.0
    switching: float = 0.0

    def with_switching(self, value: float) -> "GospaBreakdown":
        return GospaBreakdown(self.total, self.localization, self.missed, self.false_, value)


def _as_points(xs) -> np.ndarray:
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    return arr.reshape(len(arr), -1)


def gospa_assignment(estimates, truths, gp: GospaParams = GospaParams()):
    """Return the breakdown and the optimal ``(truth_index, estimate_index)`` pairs.

    Pairs at or beyond the cutoff cost the same as leaving both sides
    unassigned; they are reported as unassigned.
    """
    est = _as_points(estimates)
    tru = _as_points(truths)
    pairs = []
    loc = 0.0
    if len(est) and len(tru):
        d = cdist(tru, est)
        cost = np.minimum(d, gp.c) ** gp.p
        rows, cols = linear_sum_assignment(cost)
        for i, j in zip(rows.tolist(), cols.tolist()):
            if d[i, j] < gp.c:
                pairs.append((i, j))
                loc += cost[i, j]
    n_pairs = len(pairs)
    missed = gp.cardinality_cost * (len(tru) - n_pairs)
    false_ = gp.cardinality_cost * (len(est) - n_pairs)
    total = (loc + missed + false_) ** (1.0 / gp.p)
    return GospaBreakdown(total, loc, missed, false_), pairs


def gospa(estimates, truths, gp: GospaParams = GospaParams()) -> GospaBreakdown:
    return gospa_assignment(estimates, truths, gp)[0]


def switching_error(prev_assignment: Mapping[Hashable, Hashable], cur_assignment: Mapping[Hashable, Hashable],
                    penalty: float) -> float:
    """Penalty per truth whose assigned track changed since the previous frame.

    Truths unassigned in either frame do not count.
    """
    changed = sum(1 for truth, track in cur_assignment.items()
                  if truth in prev_assignment and prev_assignment[truth] != track)
    return penalty * changed


@dataclass(frozen=True)
class FrameSnapshot:
    """Ground truth and each system's reported track positions at one tick."""

    frame: int
    t: float
    truths: Mapping[int, tuple]
    systems: Mapping[str, Mapping[Hashable, tuple]]


@dataclass
class RunReport:
    series: dict
    means: dict
    gospa: GospaParams
    penalty: float
    assignments: dict = field(default_factory=dict, repr=False)

    def mean(self, system: str, component: str) -> float:
        return getattr(self.means[system], component)

    def verdicts(self) -> dict:
        m = {s: self.means[s] for s in self.series}
        out = {}
        if all(s in m for s in SYSTEMS):
            out["gospa_v2v_lt_priority"] = m["v2v"].total < m["priority"].total
            out["gospa_priority_lt_local"] = m["priority"].total < m["local"].total
            out["missed_v2v_zero"] = m["v2v"].missed == 0.0
            out["missed_priority_lt_local"] = m["priority"].missed < m["local"].missed
            out["false_v2v_zero"] = m["v2v"].false_ == 0.0
            out["false_priority_lt_local"] = m["priority"].false_ < m["local"].false_
            out["switching_all_zero"] = all(m[s].switching == 0.0 for s in SYSTEMS)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("frame,system,total,localization,missed,false,switching\n")
        n = len(next(iter(self.series.values()))) if self.series else 0
        for k in range(n):
            for system in self.series:
                b = self.series[system][k]
                buf.write(f"{k},{system},{b.total:.10g},{b.localization:.10g},{b.missed:.10g},"
                          f"{b.false_:.10g},{b.switching:.10g}\n")
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"GOSPA p={self.gospa.p:g} c={self.gospa.c:g} alpha={self.gospa.alpha:g} "
                 f"switching_penalty={self.penalty:g}", "",
                 f"{'system':<10}{'total':>12}{'localization':>14}{'missed':>12}{'false':>12}{'switching':>12}"]
        for system, b in self.means.items():
            lines.append(f"{system:<10}{b.total:>12.4f}{b.localization:>14.4f}{b.missed:>12.4f}"
                         f"{b.false_:>12.4f}{b.switching:>12.4f}")
        verdicts = self.verdicts()
        if verdicts:
            lines.append("")
            lines.extend(f"{name}: {'PASS' if ok else 'FAIL'}" for name, ok in verdicts.items())
        return "\n".join(lines) + "\n"


def _mean_breakdown(series: Sequence[GospaBreakdown]) -> GospaBreakdown:
    if not series:
        return GospaBreakdown()
    n = len(series)
    return GospaBreakdown(*(math.fsum(getattr(b, c) for b in series) / n for c in COMPONENTS))


def evaluate_run(snapshots: Sequence[FrameSnapshot], gp: GospaParams = GospaParams(),
                 penalty: Optional[float] = None, systems: Sequence[str] = SYSTEMS) -> RunReport:
    if penalty is None:
        penalty = gp.cardinality_cost
    for snap in snapshots:
        missing = [s for s in systems if s not in snap.systems]
        if missing:
            raise ValueError(f"frame {snap.frame} lacks systems {missing}")
    series = {s: [] for s in systems}
    assignments = {s: [] for s in systems}
    for system in systems:
        prev = {}
        for snap in snapshots:
            truth_ids = sorted(snap.truths)
            track_keys = list(snap.systems[system])
            breakdown, pairs = gospa_assignment(
                [snap.systems[system][k] for k in track_keys],
                [snap.truths[i] for i in truth_ids], gp)
            cur = {truth_ids[i]: track_keys[j] for i, j in pairs}
            series[system].append(breakdown.with_switching(switching_error(prev, cur, penalty)))
            assignments[system].append(cur)
            prev = cur
    means = {s: _mean_breakdown(series[s]) for s in systems}
    return RunReport(series, means, gp, penalty, assignments)


def build_snapshots(times: Sequence[float], truths: Sequence[Mapping[int, tuple]],
                    systems: Mapping[str, Sequence[Mapping[Hashable, tuple]]]) -> list[FrameSnapshot]:
    """Zip per-frame truth and per-system track sequences into snapshots."""
    lengths = {len(times), len(truths)} | {len(v) for v in systems.values()}
    if len(lengths) > 1:
        raise ValueError(f"frame-count mismatch: {sorted(lengths)}")
    return [FrameSnapshot(k, times[k], truths[k], {s: systems[s][k] for s in systems})
            for k in range(len(times))]
