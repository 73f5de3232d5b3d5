"""End-to-end run: ingest, label, split, preprocess, grid-search CV, test-set
evaluation and fairness audit, writing every artifact to one directory."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .cohortgen import CohortConfig, generate_cohort, write_cohort
from .errors import LengthMismatch, PipelineError
from .evalmetrics import confusion, scores
from .fairaudit import AuditConfig, run_audit
from .learners import (DEFAULT_GRIDS, TrainedModel, grid_search_cv, predict_proba, save_model,
                       threshold_predictions, train)
from .learners.search import derive_seed
from .report import PipelineReport, make_metadata, render
from .tabular import (Dataset, SplitSpec, apply_cohort_filter, derive_readmission_label,
                      load_admissions, load_dataset, load_schema, preprocess, split)

log = logging.getLogger(__name__)

PREDICTION_FIELDS = ("row_id", "probability", "predicted_label")


@dataclass
class PipelineConfig:
    out_dir: str = "out"
    data: str | None = None
    schema: str | None = None
    # Optional admission records; labels are derived and the cohort filtered.
    admissions: str | None = None
    synth: dict | None = None
    family: str = "logistic"
    grid: dict | None = None
    split: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    threshold: float = 0.5
    seed: int = 0
    timestamp: bool = True
    n_jobs: int = 1

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        base = Path(path).parent
        for key in ("data", "schema", "admissions"):
            if doc.get(key) is not None and not Path(doc[key]).is_absolute():
                doc[key] = str(base / doc[key])
        return cls(**doc)


@contextmanager
def stage(name):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_predictions(path, row_ids, proba, pred) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_FIELDS)
        for rid, p, y in zip(row_ids, proba, pred):
            w.writerow([rid, repr(float(p)), int(y)])


def read_predictions(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["row_id"] for r in rows]
    proba = np.array([float(r["probability"]) if r.get("probability") else np.nan for r in rows])
    pred = np.array([int(r["predicted_label"]) for r in rows], dtype=np.int8)
    return ids, proba, pred


def align_predictions(dataset: Dataset, row_ids, pred) -> np.ndarray:
    """Predicted labels reordered to match ``dataset`` rows by row id."""
    by_id = dict(zip(row_ids, pred))
    ids = dataset.row_ids()
    missing = [i for i in ids if i not in by_id]
    if missing or len(by_id) != len(ids):
        raise LengthMismatch(f"{len(missing)} data rows have no prediction "
                             f"({len(by_id)} predictions for {len(ids)} rows)")
    return np.array([by_id[i] for i in ids], dtype=np.int8)


def audit_config_for(dataset: Dataset, audit: dict) -> AuditConfig:
    audit = dict(audit)
    if audit.get("sensitive_attributes") is None:
        audit["sensitive_attributes"] = dataset.names("sensitive")
    return AuditConfig(**audit)


def build_report(dataset: Dataset, pred, config: AuditConfig, metadata: dict,
                 model_selection: dict | None = None) -> PipelineReport:
    cm = confusion(dataset.label, pred)
    audit = run_audit(dataset.label, pred, dataset.sensitive_columns(), config)
    return PipelineReport(metadata, scores(cm), cm, audit, model_selection)


def label_from_admissions(dataset: Dataset, admissions_path, window_days: float = 30.0) -> Dataset:
    records = load_admissions(admissions_path)
    labels = derive_readmission_label(records, window_days)
    index_ids = {r.admission_id for r in apply_cohort_filter(records)}
    ids = dataset.row_ids()
    keep = [i for i, rid in enumerate(ids) if rid in index_ids]
    out = dataset.subset(keep)
    out.columns[out.label_name] = np.array([labels[ids[i]] for i in keep], dtype=np.int8)
    return out


def now_utc() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with stage("ingest"):
        if config.synth is not None:
            cohort_cfg = CohortConfig.from_dict(config.synth)
            dataset, manifest = generate_cohort(cohort_cfg)
            paths = write_cohort(dataset, manifest, out)
            data_path = paths["data"]
        else:
            if config.data is None or config.schema is None:
                raise ValueError("pipeline config needs either synth or data + schema")
            data_path = Path(config.data)
            dataset = load_dataset(data_path, load_schema(config.schema))
        data_hash = file_sha256(data_path)
    if config.admissions is not None:
        with stage("label"):
            dataset = label_from_admissions(dataset, config.admissions)
    log.info("ingested %d rows", dataset.n_rows)

    with stage("split"):
        split_spec = SplitSpec(**{"seed": config.seed, **config.split})
        train_raw, test_raw = split(dataset, split_spec)
    with stage("preprocess"):
        train_set, stats = preprocess(train_raw)
        test_set, _ = preprocess(test_raw, stats)

    with stage("cv"):
        grid = config.grid if config.grid is not None else DEFAULT_GRIDS[config.family]
        cv = grid_search_cv(config.family, grid, train_set, config.seed, n_jobs=config.n_jobs)
        log.info("selected %s", cv.best_spec.hyperparameters)
    with stage("train"):
        model = train(cv.best_spec, train_set, derive_seed(config.seed, 10**6), stats=stats)
        save_model(model, out / "model.json")
        (out / "cv.json").write_text(json.dumps(cv.to_dict(), indent=2) + "\n", encoding="utf-8")

    with stage("evaluate"):
        proba = predict_proba(model, test_set)
        pred = threshold_predictions(proba, config.threshold)
        write_predictions(out / "predictions.csv", test_set.row_ids(), proba, pred)

    with stage("audit"):
        audit_cfg = audit_config_for(test_set, config.audit)
        metadata = make_metadata(data_hash, "model.json", config.seed,
                                 now_utc() if config.timestamp else None)
        report = build_report(test_set, pred, audit_cfg, metadata, cv.to_dict())
    with stage("report"):
        (out / "report.json").write_text(render(report, "json"), encoding="utf-8")
    return report


def evaluate_model(model: TrainedModel, dataset: Dataset, threshold: float = 0.5):
    """Preprocess raw rows with the model's stats and score them:
    ``(processed dataset, probabilities, labels)``."""
    processed, _ = preprocess(dataset, model.stats) if model.stats is not None else (dataset, None)
    proba = predict_proba(model, processed)
    return processed, proba, threshold_predictions(proba, threshold)
