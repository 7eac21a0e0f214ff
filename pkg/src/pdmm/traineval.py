"""Stratified splitting, the training loop, and evaluation statistics."""
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import canonical, imaging, tabular
from .models import predict_proba, predicted_stage
from .nn import sgd_step, softmax_cross_entropy
from .rng import RngStream
from .tabular import N_STAGES, NormStats, load_feature_table


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple
    test_ids: tuple
    seed: int
    ratio: float

    def to_json_dict(self):
        return {
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "seed": self.seed,
            "ratio": self.ratio,
        }


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def stratified_split(ids, stages, ratio=0.2, seed=0) -> SplitPlan:
    """Per-stage test counts: round(ratio*n), clamped into [1, n-1] when n >= 2;
    singleton stages go entirely to train with a warning."""
    if not 0 < ratio < 1:
        raise EvalError("ratio must be in (0, 1)")
    if len(ids) == 0:
        raise EvalError("empty cohort")
    if len(ids) != len(stages):
        raise EvalError("ids and stages length mismatch")
    rng = RngStream(seed).substream("split")
    test_idx = set()
    for stage in range(N_STAGES):
        group = [i for i, s in enumerate(stages) if s == stage]
        n = len(group)
        if n == 0:
            continue
        if n == 1:
            warnings.warn(f"stage {stage} has a single patient; kept in train")
            continue
        n_test = min(max(_round_half_up(ratio * n), 1), n - 1)
        chosen = rng.choice(np.asarray(group), size=n_test, replace=False)
        test_idx.update(int(i) for i in chosen)
    train_ids = tuple(ids[i] for i in range(len(ids)) if i not in test_idx)
    test_ids = tuple(ids[i] for i in sorted(test_idx))
    return SplitPlan(train_ids, test_ids, int(seed), float(ratio))


@dataclass
class Dataset:
    """In-memory multimodal cohort slice: raw features and/or image tensors."""

    ids: list
    stages: list
    features: np.ndarray | None = None  # (n, F) raw values
    images: list | None = None  # per-patient (3, S, S) tensors

    def __len__(self):
        return len(self.ids)

    def subset(self, keep_ids):
        keep = set(keep_ids)
        idx = [i for i, pid in enumerate(self.ids) if pid in keep]
        return Dataset(
            ids=[self.ids[i] for i in idx],
            stages=[self.stages[i] for i in idx],
            features=self.features[idx] if self.features is not None else None,
            images=[self.images[i] for i in idx] if self.images is not None else None,
        )


def load_dataset(data_dir, image_side=64, need_features=True, need_images=True) -> Dataset:
    """Load a generated cohort directory (features.csv, manifest.json, *.mvol)."""
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    manifest = canonical.load_file(manifest_path)
    patients = manifest["patients"]
    ids = [p["id"] for p in patients]
    stages = [tabular.check_stage(p["stage"]) for p in patients]
    features = None
    if need_features:
        table = load_feature_table(os.path.join(data_dir, "features.csv"))
        by_id = {pid: i for i, pid in enumerate(table.patient_ids)}
        missing = [pid for pid in ids if pid not in by_id]
        if missing:
            raise EvalError(f"patients missing from features.csv: {missing[:5]}")
        features = table.values[[by_id[pid] for pid in ids]]
    images = None
    if need_images:
        images = []
        for p in patients:
            volume = imaging.volume_read(os.path.join(data_dir, p["volume"]))
            triplet = imaging.center_slices(volume)
            images.append(imaging.assemble_image_input(triplet, image_side))
    return Dataset(ids=ids, stages=stages, features=features, images=images)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # per-epoch dicts

    def to_json_dict(self):
        return {"epochs": self.epochs}


def _fit_norm_stats(features):
    means = features.mean(axis=0)
    stds = features.std(axis=0, ddof=1) if features.shape[0] > 1 else np.zeros(features.shape[1])
    return NormStats(means=means, stddevs=stds)


def _class_weights(stages):
    """Inverse stage frequency, scaled so the mean weight over samples is 1."""
    counts = np.bincount(stages, minlength=N_STAGES).astype(np.float64)
    present = counts > 0
    weights = np.zeros(N_STAGES)
    weights[present] = counts.sum() / (present.sum() * counts[present])
    return weights


def train_model(model, train_data: Dataset, config, seed, test_data: Dataset | None = None) -> TrainLog:
    """Mini-batch SGD with seeded shuffling; augments training images per epoch.

    Fits and stores norm_stats on the raw training features when the model
    does not carry them yet. Deterministic given (model init, data, seed)."""
    n = len(train_data)
    if n == 0:
        raise EvalError("empty training set")
    uses_features = model.kind in ("symptoms", "hybrid")
    uses_images = model.kind in ("image", "hybrid")
    if uses_features and train_data.features is None:
        raise EvalError(f"{model.kind} model needs features but dataset has none")
    if uses_images and train_data.images is None:
        raise EvalError(f"{model.kind} model needs images but dataset has none")
    if uses_features and model.norm_stats is None:
        model.norm_stats = _fit_norm_stats(train_data.features)

    weights = _class_weights(train_data.stages) if config.class_weights else np.ones(N_STAGES)
    shuffle_rng = RngStream(seed).substream("shuffling")
    aug_rng = RngStream(seed).substream("augmentation")
    augment_on = uses_images and config.augment.enabled

    log = TrainLog()
    for _epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            scale = 1.0 / len(batch)
            for i in batch:
                feats = train_data.features[i] if uses_features else None
                img = None
                if uses_images:
                    img = train_data.images[i]
                    if augment_on:
                        img = imaging.augment(
                            img, aug_rng, config.augment.max_rotate_deg, config.augment.crop_fraction
                        )
                label = train_data.stages[i]
                logits = model.forward(features=feats, image=img)
                loss, probs, dlogits = softmax_cross_entropy(logits, label, weight=weights[label])
                total_loss += loss
                if predicted_stage(probs) == label:
                    correct += 1
                model.backward(dlogits * scale)
            sgd_step(model.all_layers, config.lr, config.momentum)
        entry = {
            "train_loss": total_loss / n,
            "train_accuracy": correct / n,
        }
        if test_data is not None and len(test_data):
            preds, labels = predict_dataset(model, test_data)
            entry["test_accuracy"] = float(np.mean(np.asarray(preds) == np.asarray(labels)))
        log.epochs.append(entry)
    return log


def predict_dataset(model, data: Dataset):
    """Predictions on un-augmented data; returns (preds, labels)."""
    preds = []
    for i in range(len(data)):
        feats = data.features[i] if model.kind in ("symptoms", "hybrid") else None
        img = data.images[i] if model.kind in ("image", "hybrid") else None
        probs = predict_proba(model, features=feats, image=img)
        preds.append(predicted_stage(probs))
    return preds, list(data.stages)


def confusion_matrix(preds, labels) -> np.ndarray:
    if len(preds) != len(labels):
        raise EvalError(f"length mismatch: {len(preds)} preds vs {len(labels)} labels")
    if len(labels) == 0:
        raise EvalError("empty inputs")
    cm = np.zeros((N_STAGES, N_STAGES), dtype=np.int64)
    for pred, label in zip(preds, labels):
        cm[tabular.check_stage(label), tabular.check_stage(pred)] += 1
    return cm


@dataclass
class EvalReport:
    confusion: np.ndarray
    per_stage: list  # dicts: stage, precision, recall, f1, support
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    error_correction: dict | None = None

    def to_json_dict(self):
        out = {
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "per_stage": self.per_stage,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
        }
        if self.error_correction is not None:
            out["error_correction"] = self.error_correction
        return out

    def render_table(self):
        lines = ["stage  precision  recall     f1         support"]
        for row in self.per_stage:
            lines.append(
                f"{row['stage']:<6} {row['precision']:<10.4f} {row['recall']:<10.4f} "
                f"{row['f1']:<10.4f} {row['support']}"
            )
        lines.append(
            f"macro  {self.macro_precision:<10.4f} {self.macro_recall:<10.4f} "
            f"{self.macro_f1:<10.4f} {int(self.confusion.sum())}"
        )
        lines.append(f"accuracy {self.accuracy:.4f}")
        return "\n".join(lines)


def metrics_report(cm) -> EvalReport:
    """Per-stage precision/recall/F1 plus macro averages over supported stages."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total < 1:
        raise EvalError("empty confusion matrix")
    per_stage = []
    macro = {"precision": [], "recall": [], "f1": []}
    for c in range(N_STAGES):
        tp = int(cm[c, c])
        support = int(cm[c, :].sum())
        predicted = int(cm[:, c].sum())
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_stage.append(
            {"stage": c, "precision": precision, "recall": recall, "f1": f1, "support": support}
        )
        if support > 0:
            macro["precision"].append(precision)
            macro["recall"].append(recall)
            macro["f1"].append(f1)
    return EvalReport(
        confusion=cm,
        per_stage=per_stage,
        macro_precision=float(np.mean(macro["precision"])),
        macro_recall=float(np.mean(macro["recall"])),
        macro_f1=float(np.mean(macro["f1"])),
        accuracy=float(np.trace(cm) / total),
    )


def error_correction_rate(hybrid_preds, symptoms_preds, image_preds, labels) -> dict:
    """How often the hybrid fixes the unimodal models' mistakes.

    Both the intersection (both base models wrong) and union (either wrong)
    variants are reported."""
    n = len(labels)
    if not (len(hybrid_preds) == len(symptoms_preds) == len(image_preds) == n):
        raise EvalError("prediction list length mismatch")
    both_wrong = [
        i for i in range(n) if symptoms_preds[i] != labels[i] and image_preds[i] != labels[i]
    ]
    either_wrong = [
        i for i in range(n) if symptoms_preds[i] != labels[i] or image_preds[i] != labels[i]
    ]
    both_fixed = sum(1 for i in both_wrong if hybrid_preds[i] == labels[i])
    either_fixed = sum(1 for i in either_wrong if hybrid_preds[i] == labels[i])
    return {
        "both_wrong": len(both_wrong),
        "both_wrong_corrected": both_fixed / len(both_wrong) if both_wrong else 0.0,
        "both_wrong_defined": bool(both_wrong),
        "either_wrong": len(either_wrong),
        "either_wrong_corrected": either_fixed / len(either_wrong) if either_wrong else 0.0,
        "either_wrong_defined": bool(either_wrong),
    }
