"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a ``PASS``/``FAIL`` line that is printed in the
"acceptance criteria" section at the end of the pytest run. Criterion 9
needs the public campaign dump: point ``CROWDCAST_PUBLIC_DUMP`` at the CSV.
Criterion 10 is informational and never fails.
"""
import json
import os
import shutil
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from crowdcast import synth
from crowdcast.clean import clean
from crowdcast.config import RunConfig
from crowdcast.ingest import parse_dataset
from crowdcast.insights import state_distribution, threshold_curves
from crowdcast.linear import hinge_terms, logistic_terms, objective, softmax_terms
from crowdcast.metrics import confusion, metrics
from crowdcast.pipeline import run_pipeline, run_stage
from crowdcast.prep import P1, P2, compute_class_weights, stratified_split
from crowdcast.trees import BinnedDataset, GBTHyper, TreeHyper, fit_bins, train_decision_tree, train_gbt

from conftest import ACCEPTANCE_LINES
from oracles import best_split_oracle, central_diff, class_weight_oracle, metrics_oracle

PUBLIC_COUNTS = {"Failed": 196945, "Successful": 133324, "Canceled": 38665, "Live": 2795, "Suspended": 1841}


def gate(num, title, ok, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title:<42} {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def test_c01_weight_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 11))
        counts = {f"c{i}": int(c) for i, c in enumerate(rng.integers(1, 10**6, k))}
        cw = compute_class_weights(counts)
        lhs = sum(counts[c] * cw.weights[c] for c in counts)
        rhs = sum(counts.values())
        worst = max(worst, abs(lhs - rhs) / rhs)
    dt = time.perf_counter() - t0
    gate(1, "weight identity", worst <= 1e-9 and dt < 1.0, f"max rel err {worst:.2e}, {dt:.2f}s")


def test_c02_public_count_weights():
    p2 = compute_class_weights({"Successful": 133324, "NotSuccessful": 237451}, P2).vector(P2)
    p1_counts = [PUBLIC_COUNTS[c] for c in P1.classes]
    p1 = compute_class_weights(dict(zip(P1.classes, p1_counts)), P1).vector(P1)
    err = max(np.abs(p2 - class_weight_oracle([133324, 237451])).max(),
              np.abs(p1 - class_weight_oracle(p1_counts)).max(),
              np.abs(p2 - [1.390504, 0.780740]).max(),
              np.abs(p1 - [0.695252, 0.470658, 2.397356, 50.34967]).max())
    gate(2, "published-count class weights", err <= 1e-5, f"max abs err {err:.1e}")


def test_c03_stratification():
    total = sum(PUBLIC_COUNTS[c] for c in P1.classes)
    rng = np.random.default_rng(103)
    counts = {c: round(100_000 * PUBLIC_COUNTS[c] / total) for c in P1.classes}
    labels = np.array([c for c, n in counts.items() for _ in range(n)], dtype=object)
    rng.shuffle(labels)
    t0 = time.perf_counter()
    s = stratified_split(labels, 0.2, seed=42, classes=P1.classes)
    dt = time.perf_counter() - t0
    both = np.concatenate([s.train, s.test])
    exact = len(both) == len(labels) and np.array_equal(np.sort(both), np.arange(len(labels)))
    shares = {c: (labels[s.test] == c).sum() / counts[c] for c in P1.classes}
    dev = max(abs(v - 0.2) for v in shares.values())
    gate(3, "stratified split", exact and dev <= 0.005 and dt < 5.0,
         f"max share dev {dev * 100:.3f}pp, exact partition {exact}, {dt:.2f}s")


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


def test_c04_gradient_checks():
    rng = np.random.default_rng(104)
    worst = 0.0
    done = 0
    while done < 50:
        n, d = int(rng.integers(10, 60)), 20
        X, w = rng.normal(size=(n, d)), rng.uniform(0.1, 5.0, n)
        k = 1 if done % 2 == 0 else 4
        coef, bias = rng.normal(size=(k, d)) * 0.2, rng.normal(size=k) * 0.2
        Y = np.where(rng.random((n, k)) < 0.5, 1.0, -1.0)
        # hinge is not differentiable at margin 1; redraw instances sitting on a kink
        if np.abs(1.0 - Y * (X @ coef.T + bias)).min() < 1e-3:
            continue
        cases = [(hinge_terms, Y)]
        if k == 1:
            cases.append((logistic_terms, (Y[:, 0] > 0).astype(float)))
        else:
            cases.append((softmax_terms, rng.integers(0, k, n)))
        for terms, target in cases:
            for l2 in (0.0, 1e-2):
                _, gc, gb = objective(terms, coef, bias, X, target, w, l2)
                fc = central_diff(lambda c: objective(terms, c, bias, X, target, w, l2)[0], coef.copy())
                fb = central_diff(lambda b: objective(terms, coef, b, X, target, w, l2)[0], bias.copy())
                worst = max(worst, _rel(np.concatenate([gc.ravel(), gb]), np.concatenate([fc.ravel(), fb])))
        done += 1
    gate(4, "gradient checks (h=1e-5)", worst < 1e-5, f"max rel err {worst:.2e} over 50 instances")


def test_c05_partition_invariance(tmp_path):
    t0 = time.perf_counter()
    src = tmp_path / "synthetic.csv"
    synth.write_dump(src, 10_000, seed=105, artifacts=True)
    base = tmp_path / "base"
    cfg = RunConfig(input=str(src), output_dir=str(base), model="all", task="P1").validate()
    for stage in ("ingest", "clean", "prepare"):
        run_stage(cfg, stage)
    metrics_json, model_bytes, coefs = {}, {}, {}
    for p in (1, 2, 8):
        d = tmp_path / f"p{p}"
        shutil.copytree(base, d)
        c = RunConfig(input=str(src), output_dir=str(d), model="all", task="P1", partitions=p,
                      workers=2 if p > 1 else 1).validate()
        run_stage(c, "train")
        run_stage(c, "evaluate")
        metrics_json[p] = (d / "metrics.json").read_bytes()
        model_bytes[p] = {m: (d / "models" / f"{m}.json").read_bytes() for m in ("dt", "rf", "gbt")}
        coefs[p] = {m: json.loads((d / "models" / f"{m}.json").read_text())["coef"]
                    for m in ("lr", "svm")}
    same_metrics = metrics_json[1] == metrics_json[2] == metrics_json[8]
    same_trees = model_bytes[1] == model_bytes[2] == model_bytes[8]
    lin = max(float(np.max(np.abs(np.array(coefs[p][m]) - np.array(coefs[1][m]))
                           / np.maximum(np.abs(np.array(coefs[1][m])), 1e-300)))
              for p in (2, 8) for m in ("lr", "svm"))
    dt = time.perf_counter() - t0
    gate(5, "partition invariance (P=1,2,8)", same_metrics and same_trees and lin <= 1e-7 and dt < 120,
         f"metrics identical {same_metrics}, trees identical {same_trees}, linear rel diff {lin:.1e}, {dt:.0f}s")


def _route(nodes, bins):
    """Rows reaching each node, following the stored bin thresholds."""
    reach = {0: np.arange(len(bins))}
    for nd in nodes:
        rows = reach.get(nd["id"])
        if rows is None or "feature" not in nd:
            continue
        left = bins[rows, nd["feature"]] <= nd["bin"]
        reach[nd["left"]], reach[nd["right"]] = rows[left], rows[~left]
    return reach


def test_c06_split_search_oracle():
    rng = np.random.default_rng(106)
    mismatches, checked = 0, 0
    for inst in range(100):
        n, d = int(rng.integers(2, 201)), int(rng.integers(1, 6))
        X = np.where(rng.random(d) < 0.5, rng.integers(0, 6, size=(n, d)), rng.normal(size=(n, d)))
        k = 2 if inst % 2 else 4
        scheme = P2 if k == 2 else P1
        y = rng.integers(0, k, n)
        cw = rng.uniform(0.1, 5.0, k)
        mult = rng.integers(0, 4, n) if inst % 3 == 0 else np.ones(n, dtype=np.int64)
        mlw = float(rng.choice([0.0, 0.75, 2.5]))
        mapper = fit_bins(X, int(rng.choice([4, 8])))
        b = BinnedDataset(mapper.transform(X), mapper, y)
        max_depth = 3
        model = train_decision_tree(b, cw, scheme, TreeHyper(max_depth=max_depth, min_leaf_weight=mlw),
                                    multiplicity=mult if inst % 3 == 0 else None)
        nodes = model.tree.nodes
        reach = _route(nodes, b.bins)
        for nd in nodes:
            rows = reach[nd["id"]]
            rows = rows[mult[rows] > 0]
            want = best_split_oracle(b.bins[rows], y[rows], mult[rows], cw, mapper.n_bins, Fraction(mlw))
            checked += 1
            if "feature" in nd:
                ok = want is not None and (nd["feature"], nd["bin"]) == want[1:]
            else:
                ok = nd["depth"] >= max_depth or want is None
            mismatches += not ok
    gate(6, "split search vs brute force", mismatches == 0, f"{checked} nodes in 100 trees, {mismatches} mismatches")


def test_c07_gbt_monotone():
    rng = np.random.default_rng(107)
    increases, stages = 0, 0
    for inst in range(20):
        d = int(rng.integers(2, 10))
        X = rng.normal(size=(500, d))
        scheme = P2 if inst % 2 == 0 else P1
        k = scheme.n_classes
        y = np.argmax(X[:, :1] @ rng.normal(size=(1, k)) * 3 + rng.gumbel(size=(500, k)), axis=1)
        y[:k] = np.arange(k)  # every class present
        w = rng.uniform(0.2, 5.0, 500)
        mapper = fit_bins(X, 32)
        model = train_gbt(BinnedDataset(mapper.transform(X), mapper, y), w, scheme,
                          GBTHyper(iterations=50, learning_rate=0.1))
        for hist in model.loss_history:
            stages += len(hist) - 1
            increases += int(np.sum(np.diff(hist) > 0))
    gate(7, "GBT loss non-increasing", increases == 0, f"{increases} increases over {stages} stages")


def test_c08_metrics_oracle():
    rng = np.random.default_rng(108)
    worst, ident = 0.0, 0.0
    for inst in range(200):
        scheme = P1 if inst % 2 else P2
        n = int(rng.integers(1, 400))
        truth = rng.integers(0, scheme.n_classes, n)
        preds = np.where(rng.random(n) < rng.random(), truth, rng.integers(0, scheme.n_classes, n))
        rep = metrics(confusion(preds, truth, scheme))
        ref = metrics_oracle(preds.tolist(), truth.tolist(), scheme.n_classes)
        got = (rep.accuracy, rep.precision_weighted, rep.recall_weighted, rep.f1_weighted)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, ref)))
        ident = max(ident, abs(rep.recall_weighted - rep.accuracy))
    gate(8, "metrics vs per-pair oracle", worst <= 1e-12 and ident <= 1e-12,
         f"max abs err {worst:.1e}, |recall - accuracy| max {ident:.1e}")


DUMP = os.environ.get("CROWDCAST_PUBLIC_DUMP")


def test_c09_dataset_replication():
    if not DUMP or not Path(DUMP).is_file():
        ACCEPTANCE_LINES.append(f"[SKIP]  9. {'public dump replication':<42} CROWDCAST_PUBLIC_DUMP not set")
        pytest.skip("set CROWDCAST_PUBLIC_DUMP to the public CSV")
    t0 = time.perf_counter()
    records, _ = parse_dataset(DUMP)
    dist = {r["state"]: r["count"] for r in state_distribution(records)}
    kept, rep = clean(records)
    curve = threshold_curves(kept)
    half, fifth = curve.share_at(0.5), curve.share_at(0.2)
    checks = {
        "a": dist == PUBLIC_COUNTS,
        "b": (rep.removed_success_underfunded, rep.removed_failed_overfunded,
              rep.removed_zero_backers_funded) == (5, 6, 3),
        "c": abs(rep.usd_pledged_mismatch_fraction - 0.12) <= 0.02,
        "d": abs(half["successful"] - 0.93) <= 0.02 and fifth["successful"] < half["successful"]
        and fifth["failed"] > half["failed"],
    }
    dt = time.perf_counter() - t0
    gate(9, "public dump replication", all(checks.values()) and dt < 600,
         " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
         + f" mismatch={rep.usd_pledged_mismatch_fraction:.3f} eps1={half['successful']:.3f} {dt:.0f}s")


def test_c10_model_quality_informational(tmp_path):
    src = DUMP if DUMP and Path(DUMP).is_file() else None
    if src is None:
        src = tmp_path / "synthetic.csv"
        synth.write_dump(src, 5_000, seed=110, artifacts=True)
    readings = {}
    for task, models in (("P2", ("gbt", "svm")), ("P1", ("gbt",))):
        for m in models:
            cfg = RunConfig(input=str(src), output_dir=str(tmp_path / f"{task}-{m}"), task=task, model=m).validate()
            readings[f"{task}/{m}"] = run_pipeline(cfg)["metrics"][m]["accuracy"]
    targets = {"P2/gbt": 0.95, "P2/svm": 0.95, "P1/gbt": 0.88}
    met = all(readings[k] >= v for k, v in targets.items())
    data = "public dump" if src == DUMP else "synthetic data"
    ACCEPTANCE_LINES.append(
        f"[INFO] 10. {'model quality (not gating)':<42} {data}: "
        + ", ".join(f"{k} {v:.4f} (target {targets[k]})" for k, v in readings.items())
        + f"; targets {'met' if met else 'not met'}")
