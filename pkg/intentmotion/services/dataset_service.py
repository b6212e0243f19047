import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch

from config import config
from intentmotion.kinematics.objects import ObjectLibrary, build_object_library
from intentmotion.kinematics.rotations import DTYPE, matrix_to_sixd, sixd_to_matrix
from intentmotion.kinematics.skeleton import Skeleton, build_default_template
from intentmotion.models.action_vocabulary import ActionVocabulary
from intentmotion.models.dataset_manifest import DatasetManifest
from intentmotion.models.motion_sequence import MotionSequence
from intentmotion.models.object_model import ObjectModel
from intentmotion.models.skeleton_template import SkeletonTemplate
from intentmotion.services.motion_library import MotionLibrary
from intentmotion.utils.exceptions import ArtifactIOError, TooShortError, UnknownSubjectError
from intentmotion.utils.file_utils import ensure_directory, get_files_in_directory, hash_directory, write_json
from intentmotion.utils.validation import load_document

logger = logging.getLogger(__name__)

SHAPE_CLIP = 2.0
TRIGRAM_BUCKETS_SEED = "intentmotion-trigram"


@dataclass
class Dataset:
    manifest: DatasetManifest
    template: SkeletonTemplate
    objects: List[ObjectModel]
    vocabulary: ActionVocabulary
    sequences: List[MotionSequence]
    root: Optional[Path] = None

    _skeleton: Optional[Skeleton] = field(default=None, repr=False)
    _library: Optional[ObjectLibrary] = field(default=None, repr=False)

    @property
    def skeleton(self) -> Skeleton:
        if self._skeleton is None:
            self._skeleton = Skeleton(self.template)
        return self._skeleton

    @property
    def library(self) -> ObjectLibrary:
        if self._library is None:
            self._library = ObjectLibrary(self.objects)
        return self._library

    def by_id(self, sequence_id: str) -> MotionSequence:
        for sequence in self.sequences:
            if sequence.sequence_id == sequence_id:
                return sequence
        raise KeyError(f"No sequence {sequence_id} in dataset")


@dataclass
class DatasetSplit:
    train: List[MotionSequence]
    val: List[MotionSequence]
    test: List[MotionSequence]

    def counts(self) -> Dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}


def supported_actions() -> List[str]:
    return [action for action in config.get_all_supported_intents() if config.is_intent_supported(action)]


def encode_text(text: str, dim: int = config.ACTION_EMBEDDING_DIM) -> List[float]:
    """Deterministic unit-norm embedding from hashed character trigrams."""
    padded = f"  {text.lower()} "
    vector = np.zeros(dim)
    for start in range(len(padded) - 2):
        digest = hashlib.sha256(f"{TRIGRAM_BUCKETS_SEED}:{padded[start:start + 3]}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        vector[bucket] += sign
    return (vector / np.linalg.norm(vector)).tolist()


def build_vocabulary(actions: List[str], dim: int = config.ACTION_EMBEDDING_DIM) -> ActionVocabulary:
    return ActionVocabulary(dim=dim, embeddings={action: encode_text(action, dim) for action in actions})


def keyframe_indices(length: int, target: int = config.SEQUENCE_FRAMES) -> List[int]:
    """Uniform indices with round-half-up, integer arithmetic; first and last frames always kept."""
    if length < target:
        raise TooShortError(f"Sequence has {length} frames, keyframe sampling needs at least {target}", length=length, required=target)
    if target == 1:
        return [0]
    span = target - 1
    return [(2 * k * (length - 1) + span) // (2 * span) for k in range(target)]


def keyframe_sample(sequence: MotionSequence, target: int = config.SEQUENCE_FRAMES) -> MotionSequence:
    indices = keyframe_indices(sequence.frame_count, target)
    length = sequence.frame_count
    fps = sequence.fps * (target - 1) / (length - 1) if target > 1 else sequence.fps
    switch = None
    if sequence.switch_frame is not None:
        switch = next((k for k, index in enumerate(indices) if index >= sequence.switch_frame), target - 1)
    selector = torch.tensor(indices, dtype=torch.long)
    return sequence.with_tensors(
        theta=sequence.theta_tensor()[selector],
        root_translation=sequence.root_tensor()[selector],
        object_rotation=sequence.object_rotation_tensor()[selector],
        object_translation=sequence.object_translation_tensor()[selector],
        fps=fps,
        switch_frame=switch,
    )


def upsample_positions(length: int, target: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Source index pairs and weights for u_i = min(i * length / target, length - 1)."""
    lower, upper, weights = [], [], []
    for i in range(target):
        numerator = min(i * length, (length - 1) * target)
        low = numerator // target
        remainder = numerator - low * target
        lower.append(low)
        upper.append(min(low + 1, length - 1))
        weights.append(remainder / target)
    return torch.tensor(lower), torch.tensor(upper), torch.tensor(weights, dtype=DTYPE)


def upsample_linear(sequence: MotionSequence, target: int = config.EXPORT_FRAMES) -> MotionSequence:
    length = sequence.frame_count
    lower, upper, weights = upsample_positions(length, target)
    exact = weights == 0

    def lerp(values: torch.Tensor) -> torch.Tensor:
        w = weights.reshape(-1, *([1] * (values.dim() - 1)))
        mixed = values[lower] * (1.0 - w) + values[upper] * w
        return torch.where(exact.reshape(w.shape), values[lower], mixed)

    rotation = sequence.object_rotation_tensor()
    blended = sixd_to_matrix(lerp(matrix_to_sixd(rotation, check=False)))
    rotation_out = torch.where(exact[:, None, None], rotation[lower], blended)
    switch = None
    if sequence.switch_frame is not None:
        switch = next((i for i in range(target) if i * length >= sequence.switch_frame * target), target - 1)
    return sequence.with_tensors(
        theta=lerp(sequence.theta_tensor()),
        root_translation=lerp(sequence.root_tensor()),
        object_rotation=rotation_out,
        object_translation=lerp(sequence.object_translation_tensor()),
        fps=sequence.fps * target / length,
        switch_frame=switch,
    )


def split_by_subject(sequences: List[MotionSequence], val_subject: str, test_subject: str) -> DatasetSplit:
    if val_subject == test_subject:
        raise ValueError(f"Validation and test subject must differ (both {val_subject})")
    subjects = {sequence.subject_id for sequence in sequences}
    for subject in (val_subject, test_subject):
        if subject not in subjects:
            raise UnknownSubjectError(f"Subject {subject} has no sequences (known: {sorted(subjects)})", subject_id=subject)
    split = DatasetSplit(
        train=[s for s in sequences if s.subject_id not in (val_subject, test_subject)],
        val=[s for s in sequences if s.subject_id == val_subject],
        test=[s for s in sequences if s.subject_id == test_subject],
    )
    logger.info(f"Split by subject (val={val_subject}, test={test_subject}): {split.counts()}")
    return split


def subject_shape(seed: int, subject: str) -> np.ndarray:
    rng = np.random.default_rng([seed, 104729, int(subject[1:])])
    return np.clip(rng.normal(0.0, 1.0, config.SHAPE_DIM), -SHAPE_CLIP, SHAPE_CLIP)


def plan_sequences(seed: int, n_subjects: int, n_sequences: int, actions: List[str]) -> List[Tuple[str, str, int]]:
    """(subject, action, object label) per sequence, keeping the held-out pair inside the test subject."""
    rng = np.random.default_rng([seed, 15485863])
    held_action, held_object = config.HELD_OUT_PAIR
    test_subject = f"S{n_subjects}"
    plan = []
    for index in range(n_sequences):
        subject = f"S{(index % n_subjects) + 1}"
        action = actions[int(rng.integers(len(actions)))]
        label = int(rng.integers(config.OBJECT_COUNT))
        if subject != test_subject and (action, label) == (held_action, held_object):
            label = int(rng.integers(1, config.OBJECT_COUNT))
        plan.append((subject, action, label))
    first_test = n_subjects - 1
    plan[first_test] = (test_subject, held_action, held_object)
    return plan


def generate_synthetic(seed: int = 0, n_subjects: int = 10, n_sequences: int = 400) -> Dataset:
    if n_subjects < 2:
        raise ValueError("Need at least 2 subjects for a validation/test split")
    if n_sequences < n_subjects:
        raise ValueError(f"n_sequences ({n_sequences}) must be at least n_subjects ({n_subjects})")

    logger.info(f"Generating synthetic dataset: seed={seed}, subjects={n_subjects}, sequences={n_sequences}")
    template = build_default_template()
    skeleton = Skeleton(template)
    objects = build_object_library(seed=seed)
    library = ObjectLibrary(objects)
    motions = MotionLibrary(skeleton, seed=seed)
    actions = supported_actions()
    vocabulary = build_vocabulary(actions)

    sequences = []
    for index, (subject, action, label) in enumerate(plan_sequences(seed, n_subjects, n_sequences, actions)):
        rng = np.random.default_rng([seed, index])
        length = int(rng.integers(config.RAW_MIN_FRAMES, config.RAW_MAX_FRAMES + 1))
        shape = torch.tensor(subject_shape(seed, subject), dtype=DTYPE)
        clip = motions.raw_clip(action, actions.index(action), library.vertices(label), shape, length, rng)
        family = config.get_intent_config(action)["family"]
        raw = MotionSequence(
            sequence_id=f"seq_{index:05d}",
            subject_id=subject,
            action=action,
            object_label=label,
            acting_hand="right",
            receiving_hand="left" if family == "offhand" else None,
            shape=shape.tolist(),
            fps=config.RAW_FPS,
            theta=clip.theta.tolist(),
            root_translation=clip.root_translation.tolist(),
            object_rotation=clip.object_rotation.tolist(),
            object_translation=clip.object_translation.tolist(),
            switch_frame=clip.regrip_frame,
        )
        sequences.append(keyframe_sample(raw))
        logger.debug(f"Generated {raw.sequence_id}: {subject} {action} object={label} raw_frames={length}")

    subjects: Dict[str, List[str]] = {f"S{n + 1}": [] for n in range(n_subjects)}
    for sequence in sequences:
        subjects[sequence.subject_id].append(sequence.sequence_id)
    manifest = DatasetManifest(
        seed=seed,
        n_subjects=n_subjects,
        n_sequences=n_sequences,
        subjects=subjects,
        val_subject=config.DEFAULT_VAL_SUBJECT,
        test_subject=f"S{n_subjects}",
        held_out_pair=config.HELD_OUT_PAIR,
        actions=actions,
    )
    logger.info(f"Generated {len(sequences)} sequences across {n_subjects} subjects")
    return Dataset(manifest, template, objects, vocabulary, sequences)


def write_sequence(path, sequence: MotionSequence) -> Path:
    return write_json(path, sequence.model_dump(mode="json"))


def read_sequence(path) -> MotionSequence:
    return load_document(path, MotionSequence)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    root = ensure_directory(out_dir)
    write_json(root / "manifest.json", dataset.manifest.model_dump(mode="json"))
    write_json(root / "skeleton.json", dataset.template.model_dump(mode="json"))
    write_json(root / "action_vocab.json", dataset.vocabulary.model_dump(mode="json"))
    for obj in dataset.objects:
        write_json(root / "objects" / f"{obj.label_index:02d}.json", obj.model_dump(mode="json"))
    for sequence in dataset.sequences:
        write_sequence(root / "sequences" / f"{sequence.sequence_id}.json", sequence)
    dataset.root = root
    logger.info(f"Dataset written to {root}")
    return root


def read_dataset(data_dir) -> Dataset:
    root = Path(data_dir)
    if not (root / "manifest.json").exists():
        raise ArtifactIOError(f"{root} is not a dataset directory (no manifest.json)", path=str(root))
    manifest = load_document(root / "manifest.json", DatasetManifest)
    template = load_document(root / "skeleton.json", SkeletonTemplate)
    vocabulary = load_document(root / "action_vocab.json", ActionVocabulary)
    objects = [load_document(path, ObjectModel) for path in get_files_in_directory(root / "objects", [".json"])]
    sequences = [read_sequence(path) for path in get_files_in_directory(root / "sequences", [".json"])]
    logger.info(f"Loaded dataset from {root}: {len(sequences)} sequences, {len(objects)} objects")
    return Dataset(manifest, template, objects, vocabulary, sequences, root=root)


def dataset_hash(data_dir) -> str:
    return hash_directory(data_dir, exclude=["run_manifest.json"])


def load_split(dataset: Dataset, val_subject: Optional[str] = None, test_subject: Optional[str] = None) -> DatasetSplit:
    return split_by_subject(
        dataset.sequences,
        val_subject or dataset.manifest.val_subject,
        test_subject or dataset.manifest.test_subject,
    )


DEFAULT_IMPORT_MAPPING = {
    "sequence_id": "name",
    "subject_id": "subject",
    "action": "intent",
    "object_label": "object_id",
    "shape": "betas",
    "fps": "framerate",
    "theta": "pose_6d",
    "root_translation": "transl",
    "object_rotation": "object_global_orient",
    "object_translation": "object_transl",
}


def import_sequence(record: Dict[str, Any], mapping: Optional[Dict[str, str]] = None) -> MotionSequence:
    """Map an external mocap record onto the sequence schema.

    `mapping` goes from schema field to record key. Object rotations may come as
    3x3 matrices or 6D vectors.
    """
    mapping = {**DEFAULT_IMPORT_MAPPING, **(mapping or {})}
    document = {field_name: record[key] for field_name, key in mapping.items() if key in record}
    rotation = np.asarray(document.get("object_rotation", []), dtype=np.float64)
    if rotation.ndim == 2 and rotation.shape[-1] == 6:
        document["object_rotation"] = sixd_to_matrix(torch.tensor(rotation, dtype=DTYPE)).tolist()
    for optional in ("acting_hand", "receiving_hand", "switch_frame"):
        if optional in record:
            document[optional] = record[optional]
    document["provenance"] = {"imported": True, "fields": sorted(mapping)}
    return MotionSequence.model_validate(document)
