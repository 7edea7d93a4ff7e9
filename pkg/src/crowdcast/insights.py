"""Descriptive analyses: state distribution, funding-threshold curves, yearly totals."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .engine import Aggregator, Engine, counter_aggregator, partition
from .ingest import State

THREE_STATES = (State.SUCCESSFUL, State.FAILED, State.CANCELED)
DEFINITIVE = (State.SUCCESSFUL, State.FAILED, State.CANCELED, State.SUSPENDED)
EPS1, EPS2 = 0.5, 0.2


def default_grid() -> np.ndarray:
    return np.array([k / 100 for k in range(151)])


def _pct(count: int, total: int) -> str:
    return str((Decimal(100 * count) / Decimal(total)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def state_distribution(records, *, partitions: int = 1, engine: Engine | None = None) -> list[dict]:
    """Rows of ``{state, count, percentage}`` for states present, largest first."""
    engine = engine or Engine()
    counts = engine.aggregate(partition(list(records), partitions), counter_aggregator(lambda r: r.state))
    total = sum(counts.values())
    rows = [{"state": s.value, "count": c, "percentage": _pct(c, total)} for s, c in counts.items()]
    return sorted(rows, key=lambda r: (-r["count"], r["state"]))


@dataclass
class ThresholdCurve:
    grid: np.ndarray
    counts: np.ndarray  # (len(grid), 3): successful, failed, canceled with fraction >= p
    zero_goal_excluded: int = 0
    markers: dict = field(default_factory=dict)

    @property
    def shares(self) -> np.ndarray:
        tot = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, self.counts / np.where(tot > 0, tot, 1), 0.0)

    def share_at(self, p: float) -> dict:
        i = int(np.flatnonzero(np.isclose(self.grid, p))[0])
        s = self.shares[i]
        return {"successful": float(s[0]), "failed": float(s[1]), "canceled": float(s[2]),
                "n": int(self.counts[i].sum())}


def _funding_fractions(block):
    fr, st, zero = [], [], 0
    for r in block:
        if r.state not in THREE_STATES:
            continue
        if r.usd_goal_real <= 0:
            zero += 1
            continue
        fr.append(r.usd_pledged_real / r.usd_goal_real)
        st.append(THREE_STATES.index(r.state))
    return np.array(fr, dtype=np.float64), np.array(st, dtype=np.int64), zero


def threshold_curves(records, grid=None, *, partitions: int = 1, engine: Engine | None = None) -> ThresholdCurve:
    """Share of Successful/Failed/Canceled among campaigns funded to at least ``p`` of goal."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    probe = np.union1d(grid, [EPS2, EPS1])
    engine = engine or Engine()

    def lift(block):
        fr, st, zero = _funding_fractions(block)
        out = np.zeros((len(probe), 3), dtype=np.int64)
        for k in range(3):
            f = np.sort(fr[st == k])
            out[:, k] = len(f) - np.searchsorted(f, probe, side="left")
        return out, zero

    agg = Aggregator(zero=lambda: (np.zeros((len(probe), 3), dtype=np.int64), 0),
                     merge=lambda a, b: (a[0] + b[0], a[1] + b[1]), lift_block=lift)
    counts, zero = engine.aggregate(partition(list(records), partitions), agg)
    pos = np.searchsorted(probe, grid)
    curve = ThresholdCurve(grid, counts[pos], zero)
    full = ThresholdCurve(probe, counts, zero)
    curve.markers = {"eps1": {"p": EPS1, **full.share_at(EPS1)}, "eps2": {"p": EPS2, **full.share_at(EPS2)}}
    return curve


@dataclass
class YearlyTotals:
    years: list
    new_projects: list
    backers_sum: list
    goal_sum_usd: list
    pledged_sum_usd: list  # Successful campaigns only
    fail_rate: list
    success_rate: list

    def rows(self) -> list[dict]:
        return [
            {"year": y, "new_projects": n, "backers_sum": b, "goal_sum_usd": g, "pledged_sum_usd": p,
             "fail_rate": f, "success_rate": s}
            for y, n, b, g, p, f, s in zip(self.years, self.new_projects, self.backers_sum, self.goal_sum_usd,
                                           self.pledged_sum_usd, self.fail_rate, self.success_rate)
        ]


# per-year integer slots
_NEW, _BACKERS, _GOAL, _PLEDGED, _FAILED, _SUCCESS, _DEFINITIVE = range(7)


def _yearly_block(block):
    out: dict = {}
    for r in block:
        a = out.setdefault(r.launched.year, [0] * 7)
        a[_NEW] += 1
        a[_BACKERS] += r.backers
        a[_GOAL] += r.usd_goal_real
        if r.state is State.SUCCESSFUL:
            a[_PLEDGED] += r.usd_pledged_real
            a[_SUCCESS] += 1
        elif r.state is State.FAILED:
            a[_FAILED] += 1
        if r.state in DEFINITIVE:
            a[_DEFINITIVE] += 1
    return out


def _yearly_merge(a, b):
    out = {k: list(v) for k, v in a.items()}
    for k, v in b.items():
        cur = out.setdefault(k, [0] * 7)
        out[k] = [x + y for x, y in zip(cur, v)]
    return out


def yearly_totals(records, *, partitions: int = 1, engine: Engine | None = None) -> YearlyTotals:
    """Per launch year totals; rates are over definitive-state campaigns of that year."""
    engine = engine or Engine()
    agg = Aggregator(zero=dict, merge=_yearly_merge, lift_block=_yearly_block)
    acc = engine.aggregate(partition(list(records), partitions), agg)
    years = sorted(acc)
    t = YearlyTotals(years, [], [], [], [], [], [])
    for y in years:
        a = acc[y]
        t.new_projects.append(a[_NEW])
        t.backers_sum.append(a[_BACKERS])
        t.goal_sum_usd.append(a[_GOAL] / 100)
        t.pledged_sum_usd.append(a[_PLEDGED] / 100)
        d = a[_DEFINITIVE]
        t.fail_rate.append(a[_FAILED] / d if d else 0.0)
        t.success_rate.append(a[_SUCCESS] / d if d else 0.0)
    return t


def _write_csv(path, rows, fields):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_insights(out_dir, distribution, curve: ThresholdCurve, totals: YearlyTotals) -> dict:
    """Write the three CSV tables and ``insights.json``; returns the JSON summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "state_distribution.csv", distribution, ["state", "count", "percentage"])
    sh = curve.shares
    curve_rows = [{"p": f"{p:.2f}", "successful": sh[i, 0], "failed": sh[i, 1], "canceled": sh[i, 2],
                   "n": int(curve.counts[i].sum())} for i, p in enumerate(curve.grid)]
    _write_csv(out / "threshold_curve.csv", curve_rows, ["p", "successful", "failed", "canceled", "n"])
    _write_csv(out / "yearly_totals.csv", totals.rows(),
               ["year", "new_projects", "backers_sum", "goal_sum_usd", "pledged_sum_usd", "fail_rate",
                "success_rate"])
    summary = {
        "state_distribution": distribution,
        "threshold_markers": curve.markers,
        "zero_goal_excluded": curve.zero_goal_excluded,
        "peak_year": totals.years[int(np.argmax(totals.new_projects))] if totals.years else None,
    }
    (out / "insights.json").write_text(json.dumps(summary, indent=2))
    return summary
