"""Consistency filtering and the usd_pledged audit."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .engine import Aggregator, Engine, partition
from .ingest import CampaignRecord, State

RULES = ("success_underfunded", "failed_overfunded", "zero_backers_funded")


@dataclass
class CleaningReport:
    removed_success_underfunded: int = 0
    removed_failed_overfunded: int = 0
    removed_zero_backers_funded: int = 0
    usd_pledged_dropped: bool = True
    usd_pledged_mismatch_fraction: float = 0.0
    usd_rows: int = 0
    usd_pledged_mismatches: int = 0
    # Failed rows with pledged exactly equal to goal are kept
    failed_at_goal_retained: int = 0

    @property
    def removed_total(self) -> int:
        return (self.removed_success_underfunded + self.removed_failed_overfunded
                + self.removed_zero_backers_funded)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def violated_rule(rec: CampaignRecord) -> str | None:
    """First rule the record breaks, or None. Rules are checked in order."""
    if rec.state is State.SUCCESSFUL and rec.usd_pledged_real < rec.usd_goal_real:
        return "success_underfunded"
    if rec.state is State.FAILED and rec.usd_pledged_real > rec.usd_goal_real:
        return "failed_overfunded"
    if rec.backers == 0 and rec.usd_pledged_real > 0:
        return "zero_backers_funded"
    return None


def _clean_block(block):
    kept = []
    hits = [0, 0, 0, 0]
    for rec in block:
        rule = violated_rule(rec)
        if rule is None:
            kept.append(rec)
            if rec.state is State.FAILED and rec.usd_pledged_real == rec.usd_goal_real:
                hits[3] += 1
        else:
            hits[RULES.index(rule)] += 1
    return kept, hits


def apply_consistency_rules(records, *, partitions: int = 1, engine: Engine | None = None):
    """Drop records breaking the three consistency rules; survivors are untouched."""
    engine = engine or Engine()
    agg = Aggregator(
        zero=lambda: ([], [0, 0, 0, 0]),
        merge=lambda a, b: (a[0] + b[0], [x + y for x, y in zip(a[1], b[1])]),
        lift_block=_clean_block,
    )
    kept, hits = engine.aggregate(partition(list(records), partitions), agg)
    report = CleaningReport(
        removed_success_underfunded=hits[0],
        removed_failed_overfunded=hits[1],
        removed_zero_backers_funded=hits[2],
        failed_at_goal_retained=hits[3],
    )
    return kept, report


def audit_usd_pledged(records, report: CleaningReport | None = None) -> CleaningReport:
    """Fraction of USD-currency rows whose usd_pledged differs from usd_pledged_real.

    A missing usd_pledged counts as a mismatch. The column is always flagged as
    dropped downstream.
    """
    report = report or CleaningReport()
    usd = mismatched = 0
    for rec in records:
        if rec.currency != "USD":
            continue
        usd += 1
        if rec.usd_pledged != rec.usd_pledged_real:
            mismatched += 1
    report.usd_rows = usd
    report.usd_pledged_mismatches = mismatched
    report.usd_pledged_mismatch_fraction = mismatched / usd if usd else 0.0
    report.usd_pledged_dropped = True
    return report


def clean(records, *, partitions: int = 1, engine: Engine | None = None):
    """Audit then filter; returns ``(kept_records, CleaningReport)``."""
    records = list(records)
    kept, report = apply_consistency_rules(records, partitions=partitions, engine=engine)
    audit_usd_pledged(records, report)
    return kept, report
