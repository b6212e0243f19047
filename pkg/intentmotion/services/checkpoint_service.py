import base64
import logging
import math
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch

from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.checkpoint import ArrayDocument, Checkpoint, OptimizerState, SchedulerState
from intentmotion.models.train_config import TrainConfig, config_hash
from intentmotion.networks.layers import PlateauState
from intentmotion.synthesizers.base_synthesizer import BaseSynthesizer
from intentmotion.synthesizers.synthesizer_factory import synthesizer_factory
from intentmotion.utils.file_utils import write_json
from intentmotion.utils.validation import load_document

logger = logging.getLogger(__name__)

NUMPY_DTYPES = {"float64": "<f8", "float32": "<f4", "int64": "<i8"}
TORCH_DTYPES = {torch.float64: "float64", torch.float32: "float32", torch.int64: "int64"}


def encode_array(tensor: torch.Tensor) -> ArrayDocument:
    dtype = TORCH_DTYPES[tensor.dtype]
    raw = tensor.detach().cpu().numpy().astype(NUMPY_DTYPES[dtype]).tobytes()
    return ArrayDocument(shape=list(tensor.shape), dtype=dtype, data=base64.b64encode(raw).decode("ascii"))


def decode_array(document: ArrayDocument) -> torch.Tensor:
    array = np.frombuffer(base64.b64decode(document.data), dtype=NUMPY_DTYPES[document.dtype])
    return torch.from_numpy(array.copy()).reshape(document.shape)


def encode_optimizer(optimizer: torch.optim.Optimizer) -> OptimizerState:
    state_dict = optimizer.state_dict()
    groups = []
    for group in state_dict["param_groups"]:
        groups.append({key: list(value) if isinstance(value, tuple) else value for key, value in group.items()})
    state = {
        str(index): {name: encode_array(value if torch.is_tensor(value) else torch.tensor(value)) for name, value in slots.items()}
        for index, slots in state_dict["state"].items()
    }
    return OptimizerState(param_groups=groups, state=state)


def restore_optimizer(optimizer: torch.optim.Optimizer, document: OptimizerState):
    groups = [{key: tuple(value) if key == "betas" else value for key, value in group.items()} for group in document.param_groups]
    state = {int(index): {name: decode_array(array) for name, array in slots.items()} for index, slots in document.state.items()}
    optimizer.load_state_dict({"state": state, "param_groups": groups})


def encode_scheduler(state: PlateauState) -> SchedulerState:
    return SchedulerState(
        lr=state.lr,
        patience=state.patience,
        decay=state.decay,
        best=state.best if math.isfinite(state.best) else None,
        wait=state.wait,
        decays=state.decays,
    )


def restore_scheduler(document: SchedulerState) -> PlateauState:
    return PlateauState(
        lr=document.lr,
        patience=document.patience,
        decay=document.decay,
        best=math.inf if document.best is None else document.best,
        wait=document.wait,
        decays=document.decays,
    )


def build_checkpoint(
    model: BaseSynthesizer,
    train_config: TrainConfig,
    kind: str,
    epoch: int,
    optimizer: Optional[torch.optim.Optimizer] = None,
    scheduler: Optional[PlateauState] = None,
    val_loss: Optional[float] = None,
) -> Checkpoint:
    return Checkpoint(
        kind=kind,
        epoch=epoch,
        synthesizer=model.synthesizer_type,
        config=train_config,
        config_hash=config_hash(train_config),
        val_loss=val_loss,
        skeleton=model.skeleton.template,
        vocabulary=model.vocabulary,
        parameters={name: encode_array(value) for name, value in model.state_dict().items()},
        optimizer=encode_optimizer(optimizer) if optimizer is not None else None,
        scheduler=encode_scheduler(scheduler) if scheduler is not None else None,
    )


def save_checkpoint(path, checkpoint: Checkpoint) -> Path:
    target = write_json(path, checkpoint.model_dump(mode="json"))
    logger.info(f"Saved {checkpoint.kind} checkpoint at epoch {checkpoint.epoch} to {target}")
    return target


def load_checkpoint(path) -> Checkpoint:
    return load_document(path, Checkpoint)


def restore_synthesizer(checkpoint: Checkpoint) -> BaseSynthesizer:
    model = synthesizer_factory.get_synthesizer(
        checkpoint.config.generator, Skeleton(checkpoint.skeleton), checkpoint.vocabulary, kind=checkpoint.synthesizer
    )
    state: Dict[str, torch.Tensor] = {name: decode_array(array) for name, array in checkpoint.parameters.items()}
    model.load_state_dict(state, strict=True)
    model.eval()
    return model
