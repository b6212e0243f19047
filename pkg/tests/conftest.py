import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import intentmotion  # noqa: E402,F401  sets the float64 default dtype
from intentmotion.kinematics.skeleton import Skeleton  # noqa: E402
from intentmotion.models.generator_config import GeneratorConfig  # noqa: E402
from intentmotion.models.train_config import TrainConfig  # noqa: E402
from intentmotion.services.dataset_service import generate_synthetic, write_dataset  # noqa: E402


@pytest.fixture(scope="session")
def skeleton():
    return Skeleton.default()


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(seed=0, n_subjects=3, n_sequences=24)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, small_dataset):
    return write_dataset(small_dataset, tmp_path_factory.mktemp("dataset"))


@pytest.fixture(scope="session")
def tiny_generator_config():
    return GeneratorConfig(
        hidden_width=32,
        hidden_depth=1,
        condition_dim=16,
        arm_latent_dim=4,
        body_latent_dim=8,
        attention_width=8,
        attention_heads=2,
    )


@pytest.fixture(scope="session")
def tiny_train_config(tiny_generator_config):
    return TrainConfig(epochs=2, batch_size=4, generator=tiny_generator_config)


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(1234)
