import csv
import json

import numpy as np

from crowdcast.clean import clean
from crowdcast.engine import Engine
from crowdcast.ingest import parse_dataset
from crowdcast.insights import state_distribution, threshold_curves, write_insights, yearly_totals

from conftest import make_record


def test_empty_distribution():
    assert state_distribution([]) == []


def test_single_record():
    assert state_distribution([make_record()]) == [{"state": "Successful", "count": 1, "percentage": "100.00"}]


def test_percentages_two_decimals():
    recs = [make_record(id=i, state="Failed" if i < 2 else "Live") for i in range(3)]
    rows = state_distribution(recs)
    assert [(r["state"], r["percentage"]) for r in rows] == [("Failed", "66.67"), ("Live", "33.33")]


def three_state_records(rng, n=300):
    recs = []
    for i in range(n):
        state = rng.choice(["Successful", "Failed", "Canceled"])
        goal = int(rng.integers(1, 10_000))
        if state == "Successful":
            pledged = goal + int(rng.integers(0, 5000))
        else:
            pledged = int(rng.integers(0, goal + 1))
        recs.append(make_record(id=i, state=state, usd_goal_real=goal, usd_pledged_real=pledged))
    return recs


def test_threshold_examples():
    rng = np.random.default_rng(0)
    recs = three_state_records(rng)
    curve = threshold_curves(recs)
    prior = np.bincount([["Successful", "Failed", "Canceled"].index(r.state.value) for r in recs], minlength=3)
    np.testing.assert_allclose(curve.shares[0], prior / prior.sum())
    over = curve.grid > 1.0
    assert (curve.shares[over, 1] == 0).all()
    np.testing.assert_allclose(curve.shares.sum(axis=1)[curve.counts.sum(axis=1) > 0], 1.0)


def test_threshold_excludes_zero_goal_and_other_states():
    recs = [make_record(id=1, state="Failed", usd_goal_real=0, usd_pledged_real=0),
            make_record(id=2, state="Live", usd_goal_real=10, usd_pledged_real=5),
            make_record(id=3, state="Canceled", usd_goal_real=10, usd_pledged_real=5)]
    curve = threshold_curves(recs)
    assert curve.zero_goal_excluded == 1
    assert curve.share_at(0.5) == {"successful": 0.0, "failed": 0.0, "canceled": 1.0, "n": 1}
    assert curve.markers["eps1"]["canceled"] == 1.0 and curve.markers["eps2"]["p"] == 0.2


def test_threshold_right_continuous():
    # fraction exactly 0.5 counts at p = 0.5
    curve = threshold_curves([make_record(state="Failed", usd_goal_real=100, usd_pledged_real=50)])
    assert curve.share_at(0.5)["n"] == 1 and curve.share_at(0.51)["n"] == 0


def test_yearly_rates():
    recs = [make_record(id=i, state="Failed") for i in range(3)] + [make_record(id=9, state="Successful")]
    recs.append(make_record(id=10, state="Live"))
    t = yearly_totals(recs)
    assert t.years == [2015] and t.new_projects == [5]
    assert (t.fail_rate, t.success_rate) == ([0.75], [0.25])
    assert t.pledged_sum_usd == [150.0]


def test_aggregates_match_sequential_oracle(sample_path):
    records, _ = parse_dataset(sample_path)
    kept, _ = clean(records)
    seq = {}
    for r in records:
        a = seq.setdefault(r.launched.year, [0, 0, 0])
        a[0] += 1
        a[1] += r.backers
        a[2] += r.usd_goal_real
    with Engine(workers=2) as eng:
        for p in (1, 3, 8):
            t = yearly_totals(records, partitions=p, engine=eng)
            assert t.years == sorted(seq)
            assert t.new_projects == [seq[y][0] for y in t.years]
            assert t.backers_sum == [seq[y][1] for y in t.years]
            assert t.goal_sum_usd == [seq[y][2] / 100 for y in t.years]
            assert sum(t.new_projects) == len(records)
            assert state_distribution(records, partitions=p, engine=eng) == state_distribution(records)
            c = threshold_curves(kept, partitions=p, engine=eng)
            assert (c.counts == threshold_curves(kept).counts).all()


def test_write_insights(tmp_path):
    recs = [make_record(id=i, state=s) for i, s in enumerate(["Successful", "Failed", "Canceled", "Live"])]
    recs[1] = make_record(id=1, state="Failed", usd_pledged_real=20_00)
    summary = write_insights(tmp_path, state_distribution(recs), threshold_curves(recs), yearly_totals(recs))
    with open(tmp_path / "threshold_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 151 and rows[0]["p"] == "0.00" and rows[-1]["p"] == "1.50"
    assert json.loads((tmp_path / "insights.json").read_text()) == json.loads(json.dumps(summary))
    assert summary["peak_year"] == 2015
    assert (tmp_path / "yearly_totals.csv").read_text().startswith("year,new_projects")
