"""Stage functions behind the CLI.

Every stage reads its inputs from, and writes its outputs to, the run
directory, so ``pipeline`` is literally the subcommands run in order.
"""
from __future__ import annotations

import hashlib
import json
import logging
from importlib import metadata
from pathlib import Path

import numpy as np

from . import clean as clean_mod
from . import enrich as enrich_mod
from . import insights as insights_mod
from .config import RunConfig
from .engine import Engine
from .enrich import EnrichError
from .features import FeatureError, FeatureSchema, raw_features
from .ingest import IngestError, parse_dataset, read_cleaned, write_records
from .linear import LinearHyper, LinearModel, LinearModelError, train_linear_svm, train_logistic
from .metrics import MetricsError, confusion, format_table, metrics
from .prep import (ClassWeights, PrepError, Standardizer, class_counts, compute_class_weights, fit_standardizer,
                   get_scheme, relabel, sample_weights, stratified_split)
from .trees import (BinnedDataset, ForestHyper, GBTHyper, TreeHyper, TreeModelError, fit_bins, load_model, train_decision_tree,
                    train_gbt, train_random_forest)

log = logging.getLogger(__name__)

STAGES = ("ingest", "clean", "insights", "prepare", "train", "evaluate")
LINEAR = ("lr", "svm")
# config keys that name locations rather than change results
_LOCATION_KEYS = ("input", "output_dir", "econ_table", "workers")


class StageError(Exception):
    """A stage failed; ``exit_code`` follows the CLI contract (2 ingest, 3 downstream)."""

    def __init__(self, stage: str, message: str, exit_code: int = 3):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


class MissingArtifact(StageError):
    def __init__(self, stage: str, path: Path):
        super().__init__(stage, f"missing artifact {path}; run the earlier stage first", exit_code=1)


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(stage: str, path: Path):
    if not path.is_file():
        raise MissingArtifact(stage, path)
    return json.loads(path.read_text(encoding="utf-8"))


class Run:
    """Paths and shared engine for one run directory."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.engine = Engine(cfg.workers)

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def close(self):
        self.engine.close()


def run_ingest(run: Run) -> dict:
    cfg = run.cfg
    try:
        records, report = parse_dataset(cfg.input, partitions=cfg.partitions, engine=run.engine)
    except IngestError as exc:
        raise StageError("ingest", str(exc), exit_code=2) from exc
    run.out.mkdir(parents=True, exist_ok=True)
    write_records(records, run.path("records.csv"))
    report.write_jsonl(run.path("rejections.jsonl"))
    summary = dict(report.summary(), dataset_sha256=sha256_file(cfg.input))
    _write_json(run.path("ingest_report.json"), summary)
    log.info("ingest: %d accepted, %d rejected", report.rows_accepted, len(report.rejections))
    return summary


def _load_records(stage: str, path: Path):
    if not path.is_file():
        raise MissingArtifact(stage, path)
    records, report = read_cleaned(path)
    if report.rejections:
        raise StageError(stage, f"{path} has {len(report.rejections)} unreadable rows "
                                f"(first at line {report.rejections[0].line})")
    return records


def run_clean(run: Run) -> dict:
    records = _load_records("clean", run.path("records.csv"))
    kept, report = clean_mod.clean(records, partitions=run.cfg.partitions, engine=run.engine)
    write_records(kept, run.path("cleaned.csv"), include_usd_pledged=False)
    _write_json(run.path("cleaning_report.json"), report.to_dict())
    return report.to_dict()


def run_insights(run: Run) -> dict:
    cfg = run.cfg
    records = _load_records("insights", run.path("records.csv"))
    cleaned = _load_records("insights", run.path("cleaned.csv"))
    kw = dict(partitions=cfg.partitions, engine=run.engine)
    dist = insights_mod.state_distribution(records, **kw)
    curve = insights_mod.threshold_curves(cleaned, **kw)
    totals = insights_mod.yearly_totals(records, **kw)
    return insights_mod.write_insights(run.path("insights"), dist, curve, totals)


def run_prepare(run: Run) -> dict:
    cfg = run.cfg
    scheme = get_scheme(cfg.task)
    cleaned = _load_records("prepare", run.path("cleaned.csv"))
    labelled = [(r, relabel(r.state, scheme)) for r in cleaned]
    labelled = [(r, lab) for r, lab in labelled if lab is not None]
    if not labelled:
        raise StageError("prepare", "no labelled records after dropping Live")
    records = [r for r, _ in labelled]
    labels = [lab for _, lab in labelled]
    table = enrich_mod.load_econ_table(cfg.econ_table or None)
    econ, flagged = enrich_mod.enrich(records, table, cfg.enrichment)
    raw = [raw_features(r, e) for r, e in zip(records, econ)]
    ids = np.array([r.id for r in records], dtype=np.int64)
    split = stratified_split(labels, cfg.test_fraction, cfg.seed, order_keys=ids, classes=scheme.classes)
    schema = FeatureSchema.fit([raw[i] for i in split.train], cfg.profile, cfg.min_category_count,
                               partitions=cfg.partitions, engine=run.engine)
    X = schema.transform(raw)
    y = np.array([scheme.index(lab) for lab in labels], dtype=np.int64)
    weights = compute_class_weights(class_counts([labels[i] for i in split.train], scheme), scheme)
    std = fit_standardizer(X[split.train], schema.continuous_mask(), partitions=cfg.partitions,
                           engine=run.engine)
    prep = run.path("prepared")
    prep.mkdir(parents=True, exist_ok=True)
    (prep / "schema.json").write_text(schema.to_json(), encoding="utf-8")
    split_d = split.to_dict(ids)
    _write_json(prep / "split.json", split_d)
    _write_json(prep / "class_weights.json", weights.to_dict())
    _write_json(prep / "standardizer.json", std.to_dict())
    np.savez(prep / "features.npz", X=X, y=y, ids=ids, train=split.train, test=split.test)
    info = {
        "task": scheme.id,
        "n_records": len(records),
        "n_train": int(len(split.train)),
        "n_test": int(len(split.test)),
        "n_dims": schema.n_dims,
        "schema_hash": schema.schema_hash(),
        "split_hash": hashlib.sha256(_canon(split_d).encode()).hexdigest(),
        "span_flagged": flagged,
        "econ_sha256": table_hash(cfg),
    }
    _write_json(prep / "prepare.json", info)
    return info


def table_hash(cfg: RunConfig) -> str:
    if cfg.econ_table:
        return sha256_file(cfg.econ_table)
    from importlib import resources
    return hashlib.sha256(resources.files("crowdcast").joinpath("data/econ_reference.csv").read_bytes()).hexdigest()


class Prepared:
    def __init__(self, run: Run, stage: str):
        prep = run.path("prepared")
        self.info = _read_json(stage, prep / "prepare.json")
        if self.info["task"] != get_scheme(run.cfg.task).id:
            raise StageError(stage, f"prepared data is for task {self.info['task']}, config says {run.cfg.task}",
                             exit_code=1)
        self.scheme = get_scheme(self.info["task"])
        self.weights = ClassWeights.from_dict(_read_json(stage, prep / "class_weights.json"))
        self.std = Standardizer.from_dict(_read_json(stage, prep / "standardizer.json"))
        path = prep / "features.npz"
        if not path.is_file():
            raise MissingArtifact(stage, path)
        with np.load(path) as z:
            self.X, self.y, self.train, self.test = z["X"], z["y"], z["train"], z["test"]


def _train_one(run: Run, prep: Prepared, name: str):
    cfg = run.cfg
    X, y = prep.X[prep.train], prep.y[prep.train]
    w = sample_weights(y, prep.weights, prep.scheme)
    kw = dict(partitions=cfg.partitions, engine=run.engine)
    if name in LINEAR:
        Xs = prep.std.transform(X)
        if name == "lr":
            hyper = LinearHyper(cfg.lr_iterations, cfg.lr_learning_rate, cfg.lr_l2)
            model = train_logistic(Xs, y, w, prep.scheme, hyper, **kw)
        else:
            hyper = LinearHyper(cfg.svm_iterations, cfg.svm_learning_rate, cfg.svm_l2)
            model = train_linear_svm(Xs, y, w, prep.scheme, hyper, **kw)
        model.standardizer = prep.std.to_dict()
    else:
        max_bins = {"dt": cfg.dt_max_bins, "rf": cfg.rf_max_bins, "gbt": cfg.gbt_max_bins}[name]
        binary = np.ones(X.shape[1], dtype=bool)
        binary[prep.std.dims] = False
        mapper = fit_bins(X, max_bins, binary)
        binned = BinnedDataset(mapper.transform(X), mapper, y, w)
        cw = prep.weights.vector(prep.scheme)
        if name == "dt":
            hyper = TreeHyper(cfg.dt_max_depth, cfg.dt_max_bins, cfg.dt_min_leaf_weight, cfg.dt_impurity)
            model = train_decision_tree(binned, cw, prep.scheme, hyper, **kw)
        elif name == "rf":
            hyper = ForestHyper(cfg.rf_n_trees, cfg.rf_feature_subset, cfg.rf_bootstrap, cfg.seed,
                                TreeHyper(cfg.rf_max_depth, cfg.rf_max_bins, cfg.rf_min_leaf_weight))
            model = train_random_forest(binned, cw, prep.scheme, hyper, **kw)
        else:
            hyper = GBTHyper(cfg.gbt_iterations, cfg.gbt_learning_rate, cfg.gbt_max_depth, cfg.gbt_max_bins,
                             cfg.gbt_min_leaf_weight)
            model = train_gbt(binned, w, prep.scheme, hyper, **kw)
    d = model.to_dict()
    d["schema_hash"] = prep.info["schema_hash"]
    return d


def run_train(run: Run) -> dict:
    prep = Prepared(run, "train")
    out = {}
    for name in run.cfg.models:
        d = _train_one(run, prep, name)
        path = run.path("models", f"{name}.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_canon(d) + "\n", encoding="utf-8")
        out[name] = sha256_file(path)
        log.info("train: %s done", name)
    return out


def load_any_model(d: dict):
    return LinearModel.from_dict(d) if d["type"] == "linear" else load_model(d)


def run_evaluate(run: Run) -> dict:
    cfg = run.cfg
    prep = Prepared(run, "evaluate")
    X, y = prep.X[prep.test], prep.y[prep.test]
    reports, model_hashes = {}, {}
    for name in cfg.models:
        path = run.path("models", f"{name}.json")
        d = _read_json("evaluate", path)
        if d.get("schema_hash") != prep.info["schema_hash"]:
            raise StageError("evaluate", f"{name}: model was trained on a different feature schema", exit_code=1)
        model = load_any_model(d)
        Xm = Standardizer.from_dict(d["standardizer"]).transform(X) if d["type"] == "linear" else X
        cm = confusion(model.predict(Xm), y, prep.scheme, partitions=cfg.partitions, engine=run.engine)
        reports[name] = metrics(cm, cfg.averaging)
        model_hashes[name] = sha256_file(path)
    metrics_d = {k: v.to_dict() for k, v in reports.items()}
    _write_json(run.path("metrics.json"), metrics_d)
    table = format_table(reports)
    run.path("metrics_table.txt").write_text(table + "\n", encoding="utf-8")
    manifest = build_manifest(run, prep, metrics_d, model_hashes)
    _write_json(run.path("manifest.json"), manifest)
    return manifest


def build_manifest(run: Run, prep: Prepared, metrics_d: dict, model_hashes: dict) -> dict:
    cfg = run.cfg
    ingest = _read_json("evaluate", run.path("ingest_report.json"))
    body = {
        "config": cfg.to_dict(),
        "dataset_sha256": ingest["dataset_sha256"],
        "econ_sha256": prep.info["econ_sha256"],
        "version": version(),
        "ingest": {k: v for k, v in ingest.items() if k != "dataset_sha256"},
        "cleaning": _read_json("evaluate", run.path("cleaning_report.json")),
        "class_weights": prep.weights.to_dict(),
        "split_hash": prep.info["split_hash"],
        "schema_hash": prep.info["schema_hash"],
        "models": model_hashes,
        "metrics": metrics_d,
    }
    hashed = dict(body, config={k: v for k, v in body["config"].items() if k not in _LOCATION_KEYS})
    body["manifest_hash"] = hashlib.sha256(_canon(hashed).encode()).hexdigest()
    return body


STAGE_FUNCS = {
    "ingest": run_ingest,
    "clean": run_clean,
    "insights": run_insights,
    "prepare": run_prepare,
    "train": run_train,
    "evaluate": run_evaluate,
}


_DOMAIN_ERRORS = (EnrichError, FeatureError, PrepError, LinearModelError, TreeModelError, MetricsError,
                  ValueError, ArithmeticError)


def _call(stage: str, run: Run):
    try:
        return STAGE_FUNCS[stage](run)
    except StageError:
        raise
    except IngestError as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}", exit_code=2) from exc
    except _DOMAIN_ERRORS as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc


def run_stage(cfg: RunConfig, stage: str):
    run = Run(cfg)
    try:
        return _call(stage, run)
    finally:
        run.close()


def run_pipeline(cfg: RunConfig) -> dict:
    """All stages in order; returns the manifest."""
    run = Run(cfg)
    try:
        for stage in STAGES:
            result = _call(stage, run)
        return result
    finally:
        run.close()
