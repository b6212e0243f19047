import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from scipy.linalg import eigh
from torch import nn

from intentmotion.kinematics.rotations import DTYPE
from intentmotion.models.evaluation_config import EvaluationConfig
from intentmotion.models.metrics_report import MetricsReport, MetricSummary
from intentmotion.models.motion_sequence import MotionSequence
from intentmotion.networks.classifier import ActionClassifier
from intentmotion.services.checkpoint_service import load_checkpoint, restore_synthesizer
from intentmotion.services.dataset_service import Dataset, load_split
from intentmotion.services.object_optimizer import ObjectOptimizer
from intentmotion.utils.exceptions import (
    ArtifactIOError,
    DimensionMismatchError,
    DivergedLossError,
    InsufficientSamplesError,
    SingularCovarianceError,
)
from intentmotion.utils.file_utils import write_json

logger = logging.getLogger(__name__)

FID_RIDGE = 1e-6
CI_SCALE = 1.96
METRIC_ORDER = ["mpjpe", "ave", "fid", "accuracy", "diversity", "multimodality"]


def _matching(gt, pred, min_frames: int = 1):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise DimensionMismatchError(f"Position shapes differ: {gt.shape} vs {pred.shape}", expected=gt.shape, actual=pred.shape)
    if gt.ndim < 3 or gt.shape[-1] != 3:
        raise DimensionMismatchError(f"Positions must be (..., frames, joints, 3), got {gt.shape}")
    if gt.shape[-3] < min_frames:
        raise DimensionMismatchError(f"Need at least {min_frames} frames, got {gt.shape[-3]}")
    return gt, pred


def mpjpe(gt, pred) -> float:
    """Mean per-joint Euclidean distance over all frames and joints."""
    gt, pred = _matching(gt, pred)
    return float(np.linalg.norm(gt - pred, axis=-1).mean())


def ave(gt, pred) -> float:
    """Mean L2 gap between per-joint temporal position variances."""
    gt, pred = _matching(gt, pred, min_frames=2)
    gap = gt.var(axis=-3) - pred.var(axis=-3)
    return float(np.linalg.norm(gap, axis=-1).mean())


def _covariance(features: np.ndarray, ridge: float) -> np.ndarray:
    cov = np.atleast_2d(np.cov(features, rowvar=False)) + ridge * np.eye(features.shape[1])
    smallest = float(eigh(cov, eigvals_only=True)[0])
    if not math.isfinite(smallest) or smallest <= 0.0:
        raise SingularCovarianceError(f"Feature covariance is not positive definite (min eigenvalue {smallest:.3g})", min_eigenvalue=smallest)
    return cov


def fid(features_a, features_b, ridge: float = FID_RIDGE) -> float:
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"Feature widths differ: {a.shape[1]} vs {b.shape[1]}")
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSamplesError("FID needs at least 2 samples per set", available=min(len(a), len(b)), requested=2)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise SingularCovarianceError("Features contain non-finite values")

    cov_a, cov_b = _covariance(a, ridge), _covariance(b, ridge)
    values, vectors = eigh(cov_a)
    root_a = (vectors * np.sqrt(values)) @ vectors.T
    middle = root_a @ cov_b @ root_a
    middle = 0.5 * (middle + middle.T)
    trace_root = float(np.sqrt(np.clip(eigh(middle, eigvals_only=True), 0.0, None)).sum())

    diff = a.mean(axis=0) - b.mean(axis=0)
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_root)


def _pair_distance(features: np.ndarray, pairs: int, rng: np.random.Generator) -> float:
    if len(features) < pairs:
        raise InsufficientSamplesError(f"Cannot draw {pairs} pairs from {len(features)} samples", available=len(features), requested=pairs)
    first = rng.choice(len(features), pairs, replace=False)
    second = rng.choice(len(features), pairs, replace=False)
    return float(np.linalg.norm(features[first] - features[second], axis=-1).mean())


def diversity(features, pairs: int, seed: int = 0) -> float:
    return _pair_distance(np.asarray(features, dtype=np.float64), pairs, np.random.default_rng(seed))


def multimodality(groups: Dict[str, np.ndarray], pairs: int, seed: int = 0) -> float:
    """Mean within-action pair distance, averaged over actions in sorted order."""
    if not groups:
        raise InsufficientSamplesError("No action groups to compare", available=0, requested=pairs)
    rng = np.random.default_rng(seed)
    return float(np.mean([_pair_distance(np.asarray(groups[action], dtype=np.float64), pairs, rng) for action in sorted(groups)]))


def summarize(values: Sequence[float]) -> MetricSummary:
    array = np.asarray(values, dtype=np.float64)
    ci = CI_SCALE * array.std(ddof=1) / math.sqrt(len(array)) if len(array) > 1 else 0.0
    return MetricSummary(mean=float(array.mean()), ci=float(ci), values=array.tolist())


def repeat_metric(fn: Callable[[int], float], repeats: int = 20, seed: int = 0) -> MetricSummary:
    return summarize([fn(seed + repeat) for repeat in range(repeats)])


def motion_frames(sequences: Sequence[MotionSequence]) -> torch.Tensor:
    """Per-frame pose vectors, shape (N, T, J*6)."""
    return torch.stack([sequence.theta_tensor().flatten(1) for sequence in sequences])


def train_classifier(
    sequences: Sequence[MotionSequence],
    actions: Sequence[str],
    hidden: int = 128,
    epochs: int = 100,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
) -> ActionClassifier:
    frames = motion_frames(sequences)
    targets = torch.tensor([list(actions).index(sequence.action) for sequence in sequences], dtype=torch.long)
    rng = np.random.default_rng(seed)
    loss_fn = nn.CrossEntropyLoss()

    with torch.random.fork_rng():
        torch.manual_seed(seed)
        classifier = ActionClassifier(frames.shape[-1], actions, hidden).to(DTYPE)
        flat = frames.reshape(-1, frames.shape[-1])
        classifier.set_normalization(flat.mean(dim=0), flat.std(dim=0))
        optimizer = torch.optim.Adam(classifier.parameters(), lr=lr)

        classifier.train()
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(frames))
            total = 0.0
            for start in range(0, len(order), batch_size):
                index = torch.as_tensor(order[start:start + batch_size], dtype=torch.long)
                optimizer.zero_grad()
                loss = loss_fn(classifier(frames[index]), targets[index])
                if not bool(torch.isfinite(loss)):
                    raise DivergedLossError(f"Classifier loss diverged at epoch {epoch}", epoch=epoch)
                loss.backward()
                optimizer.step()
                total += float(loss) * len(index)
            logger.debug(f"Classifier epoch {epoch}: loss {total / len(frames):.6f}")
    classifier.eval()
    logger.info(f"Trained action classifier on {len(frames)} sequences over {len(actions)} actions")
    return classifier


def motion_features(classifier: ActionClassifier, sequences: Sequence[MotionSequence]) -> np.ndarray:
    with torch.no_grad():
        return classifier.features(motion_frames(sequences)).numpy()


def recognition_accuracy(classifier: ActionClassifier, sequences: Sequence[MotionSequence]) -> float:
    with torch.no_grad():
        predicted = classifier.predict(motion_frames(sequences))
    return float(np.mean([guess == sequence.action for guess, sequence in zip(predicted, sequences)]))


class EvaluationService:
    def __init__(self, dataset: Dataset, settings: Optional[EvaluationConfig] = None):
        self.dataset = dataset
        self.settings = settings or EvaluationConfig()
        self.split = load_split(dataset, self.settings.val_subject, self.settings.test_subject)
        self._classifier: Optional[ActionClassifier] = None

    @property
    def classifier(self) -> ActionClassifier:
        if self._classifier is None:
            s = self.settings
            training = self.split.train + self.split.val
            self._classifier = train_classifier(
                training,
                self.dataset.vocabulary.actions(),
                s.classifier_hidden,
                s.classifier_epochs,
                s.classifier_lr,
                s.classifier_batch_size,
                s.seed,
            )
        return self._classifier

    def positions(self, sequences: Sequence[MotionSequence]) -> np.ndarray:
        skeleton = self.dataset.skeleton
        with torch.no_grad():
            return np.stack(
                [
                    skeleton.forward_kinematics(sequence.theta_tensor(), sequence.root_tensor(), sequence.shape_tensor()).numpy()
                    for sequence in sequences
                ]
            )

    def pair_counts(self, test: Sequence[MotionSequence]) -> Dict[str, int]:
        s = self.settings
        diversity_pairs = min(s.diversity_pairs, len(test))
        if diversity_pairs < s.diversity_pairs:
            logger.warning(f"Only {len(test)} test sequences, clamping diversity pairs from {s.diversity_pairs} to {diversity_pairs}")
        sizes = [size for size in self._group_sizes(test).values() if size >= 2]
        multimodality_pairs = min([s.multimodality_pairs] + sizes) if sizes else 0
        if multimodality_pairs < s.multimodality_pairs:
            logger.warning(f"Clamping multimodality pairs per action from {s.multimodality_pairs} to {multimodality_pairs}")
        return {"diversity": diversity_pairs, "multimodality": multimodality_pairs}

    @staticmethod
    def _group_sizes(sequences: Sequence[MotionSequence]) -> Dict[str, int]:
        sizes: Dict[str, int] = defaultdict(int)
        for sequence in sequences:
            sizes[sequence.action] += 1
        return dict(sizes)

    def predictions(self, model, test: Sequence[MotionSequence], seed: int) -> List[MotionSequence]:
        optimizer = ObjectOptimizer(model.skeleton)
        library = self.dataset.library
        generated = []
        for sequence in test:
            rolled, _ = model.rollout(
                sequence,
                sequence.action,
                sequence.object_label,
                seed,
                library.vertices(sequence.object_label),
                object_mode=self.settings.object_mode,
                optimizer=optimizer,
            )
            generated.append(rolled)
        return generated

    def score(self, test: Sequence[MotionSequence], predicted: Sequence[MotionSequence], counts: Dict[str, int], seed: int) -> Dict[str, float]:
        gt_positions, pred_positions = self.positions(test), self.positions(predicted)
        gt_features = motion_features(self.classifier, test)
        pred_features = motion_features(self.classifier, predicted)

        scores = {
            "mpjpe": mpjpe(gt_positions, pred_positions),
            "ave": ave(gt_positions, pred_positions),
            "fid": fid(gt_features, pred_features),
            "accuracy": recognition_accuracy(self.classifier, predicted),
            "diversity": diversity(pred_features, counts["diversity"], seed),
        }
        if counts["multimodality"] >= 2:
            groups: Dict[str, List[np.ndarray]] = defaultdict(list)
            for feature, sequence in zip(pred_features, predicted):
                groups[sequence.action].append(feature)
            eligible = {action: np.stack(rows) for action, rows in groups.items() if len(rows) >= counts["multimodality"]}
            scores["multimodality"] = multimodality(eligible, counts["multimodality"], seed)
        return scores

    def evaluate(self, dataset_hash: str, checkpoint_path=None) -> MetricsReport:
        s = self.settings
        test = self.split.test
        if len(test) < 2:
            raise InsufficientSamplesError(f"Evaluation needs at least 2 test sequences, got {len(test)}", available=len(test), requested=2)

        model, digest = None, None
        if checkpoint_path is not None:
            checkpoint = load_checkpoint(checkpoint_path)
            model, digest = restore_synthesizer(checkpoint), checkpoint.config_hash
        counts = self.pair_counts(test)
        if counts["multimodality"] < 2:
            logger.warning("No action has two test sequences, multimodality is not reported")

        logger.info(f"Evaluating {len(test)} test sequences over {s.repeats} repeats ({'checkpoint' if model else 'ground truth'})")
        per_repeat: Dict[str, List[float]] = defaultdict(list)
        for repeat in range(s.repeats):
            seed = s.seed + repeat
            predicted = self.predictions(model, test, seed) if model is not None else list(test)
            for name, value in self.score(test, predicted, counts, seed).items():
                per_repeat[name].append(value)
            logger.debug(f"Repeat {repeat}: {dict((name, values[-1]) for name, values in per_repeat.items())}")

        return MetricsReport(
            seed=s.seed,
            repeats=s.repeats,
            object_mode=s.object_mode,
            checkpoint=str(checkpoint_path) if checkpoint_path is not None else None,
            config_hash=digest,
            dataset_hash=dataset_hash,
            test_sequences=len(test),
            pair_counts=counts,
            metrics={name: summarize(per_repeat[name]) for name in METRIC_ORDER if name in per_repeat},
        )

    @staticmethod
    def write_report(report: MetricsReport, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        json_path = write_json(out / "metrics.json", report.model_dump(mode="json"))
        csv_path = out / "metrics.csv"
        rows = [{"metric": name, "mean": summary.mean, "ci": summary.ci} for name, summary in report.metrics.items()]
        try:
            pd.DataFrame(rows, columns=["metric", "mean", "ci"]).to_csv(csv_path, index=False)
        except OSError as e:
            logger.error(f"Error writing metrics table {csv_path}: {e}")
            raise ArtifactIOError(f"Cannot write metrics table: {e}", str(csv_path))
        return {"metrics_json": json_path, "metrics_csv": csv_path}
