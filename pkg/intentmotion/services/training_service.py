import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch

from intentmotion.kinematics.rotations import DTYPE
from intentmotion.models.motion_sequence import MotionSequence
from intentmotion.models.train_config import TrainConfig, config_hash
from intentmotion.networks.layers import PlateauState, kl_standard_normal, make_optimizer, plateau_scheduler_step, set_learning_rate
from intentmotion.services.checkpoint_service import build_checkpoint, save_checkpoint
from intentmotion.services.dataset_service import Dataset, DatasetSplit, load_split
from intentmotion.services.evaluation_service import mpjpe
from intentmotion.synthesizers.base_synthesizer import BaseSynthesizer
from intentmotion.synthesizers.synthesizer_factory import synthesizer_factory
from intentmotion.utils.exceptions import ArtifactIOError, DimensionMismatchError, DivergedLossError

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "train_loss", "train_rec", "train_kl", "val_loss", "lr"]


def reconstruction_loss(theta_gt: torch.Tensor, theta_hat: torch.Tensor) -> torch.Tensor:
    """L1 pose error plus L1 velocity error along the frame axis (-2)."""
    if theta_gt.shape != theta_hat.shape:
        raise DimensionMismatchError(
            f"Reconstruction shapes differ: {tuple(theta_gt.shape)} vs {tuple(theta_hat.shape)}",
            expected=tuple(theta_gt.shape),
            actual=tuple(theta_hat.shape),
        )
    if theta_gt.dim() < 2 or theta_gt.shape[-2] < 2:
        raise DimensionMismatchError(f"Velocity term needs at least 2 frames, got shape {tuple(theta_gt.shape)}")
    pose = (theta_gt - theta_hat).abs().sum()
    velocity = (torch.diff(theta_gt, dim=-2) - torch.diff(theta_hat, dim=-2)).abs().sum()
    return pose + velocity


def total_loss(kl_a, kl_b, rec, lambda_kl: float = 0.001, lambda_p: float = 1.0):
    return lambda_kl * (kl_a + kl_b) + lambda_p * rec


@dataclass
class SequenceTensors:
    actions: List[str]
    labels: torch.Tensor
    shapes: torch.Tensor
    theta: torch.Tensor
    root: torch.Tensor
    translation: torch.Tensor
    rotation: torch.Tensor

    @classmethod
    def stack(cls, sequences: Sequence[MotionSequence]) -> "SequenceTensors":
        if not sequences:
            raise ValueError("Cannot stack an empty list of sequences")
        lengths = {sequence.frame_count for sequence in sequences}
        if len(lengths) != 1:
            raise DimensionMismatchError(f"Sequences have mixed frame counts {sorted(lengths)}")
        return cls(
            actions=[sequence.action for sequence in sequences],
            labels=torch.tensor([sequence.object_label for sequence in sequences], dtype=torch.long),
            shapes=torch.stack([sequence.shape_tensor() for sequence in sequences]),
            theta=torch.stack([sequence.theta_tensor() for sequence in sequences]),
            root=torch.stack([sequence.root_tensor() for sequence in sequences]),
            translation=torch.stack([sequence.object_translation_tensor() for sequence in sequences]),
            rotation=torch.stack([sequence.object_rotation_tensor() for sequence in sequences]),
        )

    def __len__(self) -> int:
        return len(self.actions)

    def select(self, indices: Sequence[int]) -> "SequenceTensors":
        index = torch.as_tensor(np.asarray(indices), dtype=torch.long)
        return SequenceTensors(
            actions=[self.actions[i] for i in indices],
            labels=self.labels[index],
            shapes=self.shapes[index],
            theta=self.theta[index],
            root=self.root[index],
            translation=self.translation[index],
            rotation=self.rotation[index],
        )


@dataclass
class WindowBatch:
    """Teacher-forced windows flattened sequence-major to B*W rows."""

    sequences: int
    windows: int
    actions: List[str]
    labels: torch.Tensor
    shapes: torch.Tensor
    past_theta: torch.Tensor
    past_translation: torch.Tensor
    past_rotation: torch.Tensor
    current_theta: torch.Tensor
    current_root: torch.Tensor

    @property
    def rows(self) -> int:
        return self.sequences * self.windows


def make_windows(tensors: SequenceTensors, k: int) -> WindowBatch:
    count, frames = tensors.theta.shape[:2]
    windows = frames - k
    if windows < 2:
        raise DimensionMismatchError(f"Sequences of {frames} frames leave {windows} windows for k={k}; need at least 2")

    def past(values: torch.Tensor) -> torch.Tensor:
        unfolded = values.unfold(1, k, 1)[:, :windows]
        order = (0, 1, unfolded.dim() - 1) + tuple(range(2, unfolded.dim() - 1))
        return unfolded.permute(order).reshape((count * windows, k) + values.shape[2:])

    return WindowBatch(
        sequences=count,
        windows=windows,
        actions=[action for action in tensors.actions for _ in range(windows)],
        labels=tensors.labels.repeat_interleave(windows),
        shapes=tensors.shapes.repeat_interleave(windows, dim=0),
        past_theta=past(tensors.theta),
        past_translation=past(tensors.translation),
        past_rotation=past(tensors.rotation),
        current_theta=tensors.theta[:, k:].reshape((count * windows,) + tensors.theta.shape[2:]),
        current_root=tensors.root[:, k:].reshape(count * windows, 3),
    )


@dataclass
class LossBreakdown:
    total: torch.Tensor
    reconstruction: torch.Tensor
    kl: Dict[str, torch.Tensor]
    theta_hat: Optional[torch.Tensor] = None

    @property
    def kl_total(self) -> torch.Tensor:
        return sum(self.kl.values(), torch.zeros((), dtype=DTYPE))


@dataclass
class TrainingResult:
    out_dir: Path
    checkpoints: Dict[str, Path]
    loss_log: pd.DataFrame
    best_epoch: int
    best_val_loss: float
    config_hash: str
    artifacts: Dict[str, Path] = field(default_factory=dict)


class TrainingService:
    def __init__(self, train_config: TrainConfig, out_dir):
        self.config = train_config
        self.out_dir = Path(out_dir)
        self.k = train_config.generator.past_frames

    def build_model(self, dataset: Dataset) -> BaseSynthesizer:
        return synthesizer_factory.get_synthesizer(self.config.generator, dataset.skeleton, dataset.vocabulary)

    def batch_loss(
        self,
        model: BaseSynthesizer,
        tensors: SequenceTensors,
        noise: Optional[Dict[str, torch.Tensor]] = None,
    ) -> LossBreakdown:
        batch = make_windows(tensors, self.k)
        phi = model.encode_condition(batch.actions, batch.labels, batch.shapes)
        theta_hat, dists = model.reconstruct(
            phi, batch.past_theta, batch.past_translation, batch.past_rotation, batch.current_theta, noise
        )
        block = (batch.sequences, batch.windows, -1)
        rec = reconstruction_loss(batch.current_theta.reshape(block), theta_hat.reshape(block)) / batch.rows
        kl = {name: kl_standard_normal(dist).sum() / batch.rows for name, dist in dists.items()}
        terms = list(kl.values()) + [torch.zeros((), dtype=DTYPE)] * (2 - len(kl))
        total = total_loss(terms[0], terms[1], rec, self.config.lambda_kl, self.config.lambda_p)
        return LossBreakdown(total=total, reconstruction=rec, kl=kl, theta_hat=theta_hat)

    def evaluate_loss(self, model: BaseSynthesizer, tensors: SequenceTensors) -> LossBreakdown:
        """Loss in eval mode with z set to the posterior mean."""
        model.eval()
        with torch.no_grad():
            return self.batch_loss(model, tensors)

    def reconstruction_mpjpe(self, model: BaseSynthesizer, sequences: Sequence[MotionSequence]) -> float:
        tensors = SequenceTensors.stack(sequences)
        batch = make_windows(tensors, self.k)
        theta_hat = self.evaluate_loss(model, tensors).theta_hat
        gt = model.skeleton.forward_kinematics(batch.current_theta, batch.current_root, batch.shapes)
        pred = model.skeleton.forward_kinematics(theta_hat, batch.current_root, batch.shapes)
        return mpjpe(gt.numpy(), pred.numpy())

    def _save(self, model, kind, epoch, optimizer, scheduler, val_loss) -> Path:
        checkpoint = build_checkpoint(model, self.config, kind, epoch, optimizer, scheduler, val_loss)
        return save_checkpoint(self.out_dir / f"{kind}.json", checkpoint)

    def _write_log(self, rows: List[Dict[str, float]]) -> Path:
        path = self.out_dir / "loss_log.csv"
        frame = pd.DataFrame(rows, columns=LOG_COLUMNS)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False)
        except OSError as e:
            logger.error(f"Error writing loss log {path}: {e}")
            raise ArtifactIOError(f"Cannot write loss log: {e}", str(path))
        return path

    def train(self, dataset: Dataset, split: Optional[DatasetSplit] = None) -> TrainingResult:
        cfg = self.config
        split = split or load_split(dataset, cfg.val_subject, cfg.test_subject)
        if not split.train:
            raise ValueError("Training split is empty")
        if not split.val:
            logger.warning("Validation split is empty, validating on the training split")

        torch.manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        model = self.build_model(dataset)
        optimizer = make_optimizer(model.parameters(), cfg.base_lr)
        scheduler = PlateauState(lr=cfg.base_lr, patience=cfg.scheduler_patience, decay=cfg.scheduler_decay)

        train_tensors = SequenceTensors.stack(split.train)
        val_tensors = SequenceTensors.stack(split.val or split.train)
        digest = config_hash(cfg)
        logger.info(
            f"Training {model.synthesizer_type} synthesizer on {len(train_tensors)} sequences "
            f"({len(val_tensors)} validation) for {cfg.epochs} epochs, config {digest[:12]}"
        )

        initial_train = self.evaluate_loss(model, train_tensors)
        initial_val = float(self.evaluate_loss(model, val_tensors).total)
        rows = [
            {
                "epoch": 0,
                "train_loss": float(initial_train.total),
                "train_rec": float(initial_train.reconstruction),
                "train_kl": float(initial_train.kl_total),
                "val_loss": initial_val,
                "lr": scheduler.lr,
            }
        ]
        checkpoints = {"initial": self._save(model, "initial", 0, optimizer, scheduler, initial_val)}
        checkpoints["best"] = self._save(model, "best", 0, optimizer, scheduler, initial_val)
        best_val, best_epoch = initial_val, 0
        last_good = checkpoints["best"]

        for epoch in range(1, cfg.epochs + 1):
            model.train()
            order = rng.permutation(len(train_tensors))
            sums = {"total": 0.0, "rec": 0.0, "kl": 0.0}
            seen = 0
            for start in range(0, len(order), cfg.batch_size):
                batch = train_tensors.select(order[start:start + cfg.batch_size].tolist())
                optimizer.zero_grad()
                losses = self.batch_loss(model, batch)
                if not bool(torch.isfinite(losses.total)):
                    self._write_log(rows)
                    logger.error(f"Loss became non-finite at epoch {epoch}, last good checkpoint {last_good}")
                    raise DivergedLossError(f"Training loss diverged at epoch {epoch}", epoch=epoch, checkpoint=str(last_good))
                losses.total.backward()
                optimizer.step()
                weight = len(batch)
                sums["total"] += float(losses.total) * weight
                sums["rec"] += float(losses.reconstruction) * weight
                sums["kl"] += float(losses.kl_total) * weight
                seen += weight

            val_loss = float(self.evaluate_loss(model, val_tensors).total)
            if not math.isfinite(val_loss):
                self._write_log(rows)
                logger.error(f"Validation loss became non-finite at epoch {epoch}, last good checkpoint {last_good}")
                raise DivergedLossError(f"Validation loss diverged at epoch {epoch}", epoch=epoch, checkpoint=str(last_good))
            lr = scheduler.lr
            set_learning_rate(optimizer, plateau_scheduler_step(scheduler, val_loss))
            rows.append(
                {
                    "epoch": epoch,
                    "train_loss": sums["total"] / seen,
                    "train_rec": sums["rec"] / seen,
                    "train_kl": sums["kl"] / seen,
                    "val_loss": val_loss,
                    "lr": lr,
                }
            )
            logger.debug(f"Epoch {epoch}: train {sums['total'] / seen:.6f}, val {val_loss:.6f}, lr {lr:.6g}")

            if val_loss < best_val:
                best_val, best_epoch = val_loss, epoch
                checkpoints["best"] = self._save(model, "best", epoch, optimizer, scheduler, val_loss)
                last_good = checkpoints["best"]

        checkpoints["final"] = self._save(model, "final", cfg.epochs, optimizer, scheduler, rows[-1]["val_loss"])
        log_path = self._write_log(rows)
        logger.info(f"Training finished: best validation loss {best_val:.6f} at epoch {best_epoch}")
        return TrainingResult(
            out_dir=self.out_dir,
            checkpoints=checkpoints,
            loss_log=pd.DataFrame(rows, columns=LOG_COLUMNS),
            best_epoch=best_epoch,
            best_val_loss=best_val,
            config_hash=digest,
            artifacts={**checkpoints, "loss_log": log_path},
        )
