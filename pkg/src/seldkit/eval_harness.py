"""Cross-validation orchestration.

The four-fold split wiring is fixed; metrics are computed by pooling the
raw statistics of every fold's test recordings and deriving the four
numbers once from the pooled counts -- never by averaging per-fold
metrics. Per-fold sub-reports are emitted for diagnostics only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .core import AnnotationSet, read_annotation_csv
from .seld_metrics import MetricsAccumulator, MetricsReport, score_recording

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fold:
    index: int
    train_splits: tuple[int, ...]
    validation_split: int
    test_split: int


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]

    def __post_init__(self):
        tests = [f.test_split for f in self.folds]
        vals = [f.validation_split for f in self.folds]
        if sorted(tests) != sorted(set(tests)) or sorted(vals) != sorted(set(vals)):
            raise ValueError("every split must appear exactly once as test and validation")


def fold_plan() -> FoldPlan:
    """The fixed four-fold rotation over splits 1..4."""
    return FoldPlan(folds=(
        Fold(1, (3, 4), 2, 1),
        Fold(2, (4, 1), 3, 2),
        Fold(3, (1, 2), 4, 3),
        Fold(4, (2, 3), 1, 4),
    ))


@dataclass
class CvReport:
    """Pooled metrics plus per-fold diagnostics and bookkeeping."""

    pooled: MetricsReport
    per_fold: dict[int, MetricsReport] = field(default_factory=dict)
    missing_estimates: list[str] = field(default_factory=list)
    n_recordings: int = 0

    def to_json_dict(self) -> dict:
        return {
            "pooled": self.pooled.to_json_dict(),
            "per_fold": {str(k): v.to_json_dict() for k, v in self.per_fold.items()},
            "missing_estimates": self.missing_estimates,
            "n_recordings": self.n_recordings,
        }


def _load_manifest(manifest: str | Path | dict) -> dict:
    if isinstance(manifest, (str, Path)):
        return json.loads(Path(manifest).read_text(encoding="utf-8"))
    return manifest


def _score_one(references_dir: Path, estimates_dir: Path, rec_id: str,
               entry: dict, missing: list[str]) -> MetricsAccumulator:
    ref_path = references_dir / f"{rec_id}.csv"
    if not ref_path.exists():
        raise FileNotFoundError(f"missing reference annotation {ref_path}")
    duration = entry.get("duration_s")
    ref = read_annotation_csv(ref_path, recording_id=rec_id, duration=duration)
    est_path = estimates_dir / f"{rec_id}.csv"
    if est_path.exists():
        est = read_annotation_csv(est_path, recording_id=rec_id,
                                  duration=ref.duration, clamp=True)
    else:
        log.warning("no estimate for %s; scoring as empty prediction", rec_id)
        missing.append(rec_id)
        est = AnnotationSet(recording_id=rec_id, events=(), duration=ref.duration)
    return score_recording(ref, est)


def evaluate_cv(references_dir: str | Path, estimates_dir: str | Path,
                manifest: str | Path | dict, mode: str = "pooled",
                fold: int | None = None) -> CvReport:
    """Score estimate files against references per the manifest's splits.

    Modes: ``pooled`` accumulates every fold's test recordings into one
    report (per-fold sub-reports included); ``fold`` restricts to one
    fold's test split; ``eval-set`` scores the split-0 evaluation
    recordings as a single pool with no folds. Missing estimate files are
    listed and scored as empty predictions rather than skipped.
    """
    references_dir = Path(references_dir)
    estimates_dir = Path(estimates_dir)
    entries = _load_manifest(manifest)
    if mode not in ("pooled", "fold", "eval-set"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "fold" and fold is None:
        raise ValueError("mode='fold' needs a fold index")

    by_split: dict[int, list[tuple[str, dict]]] = {}
    for rec_id, entry in sorted(entries.items()):
        by_split.setdefault(int(entry["split"]), []).append((rec_id, entry))

    if mode == "eval-set":
        fold_tests = {0: by_split.get(0, [])}
        if not fold_tests[0]:
            raise ValueError("manifest has no evaluation recordings (split 0)")
    else:
        dev_splits = sorted(s for s in by_split if s > 0)
        if dev_splits == [1, 2, 3, 4]:
            folds = fold_plan().folds
        else:  # degenerate manifests: one fold per split, split s tested by fold s
            folds = tuple(Fold(s, (), 0, s) for s in dev_splits)
        if mode == "fold":
            folds = tuple(f for f in folds if f.index == fold)
            if not folds:
                raise ValueError(f"no fold {fold} in the plan")
        fold_tests = {f.index: by_split.get(f.test_split, []) for f in folds}

    missing: list[str] = []
    total = MetricsAccumulator()
    per_fold: dict[int, MetricsReport] = {}
    n_recordings = 0
    for fold_index, recordings in fold_tests.items():
        fold_acc = MetricsAccumulator()
        for rec_id, entry in recordings:
            fold_acc = fold_acc + _score_one(references_dir, estimates_dir,
                                             rec_id, entry, missing)
            n_recordings += 1
        if fold_index > 0:
            per_fold[fold_index] = fold_acc.report()
        total = total + fold_acc
    return CvReport(pooled=total.report(), per_fold=per_fold,
                    missing_estimates=missing, n_recordings=n_recordings)
