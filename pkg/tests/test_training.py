import numpy as np
import pandas as pd
import pytest
import torch

from intentmotion.networks.layers import gradient_check, make_optimizer
from intentmotion.services.checkpoint_service import load_checkpoint, restore_synthesizer
from intentmotion.services.dataset_service import DatasetSplit, generate_synthetic, load_split
from intentmotion.services.training_service import (
    LOG_COLUMNS,
    SequenceTensors,
    TrainingService,
    make_windows,
    reconstruction_loss,
    total_loss,
)
from intentmotion.utils.exceptions import DimensionMismatchError


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny_train_config, small_dataset):
    service = TrainingService(tiny_train_config, tmp_path_factory.mktemp("train"))
    return service, service.train(small_dataset)


def test_reconstruction_loss_cases(generator):
    theta = torch.randn(3, 5, 12, generator=generator)
    assert float(reconstruction_loss(theta, theta)) == 0.0
    offset = reconstruction_loss(theta, theta + 0.25)
    assert float(offset) == pytest.approx(0.25 * theta.numel())


def test_reconstruction_loss_matches_elementwise_sum(generator):
    gt = torch.randn(2, 4, 3, generator=generator).numpy()
    hat = torch.randn(2, 4, 3, generator=generator).numpy()
    expected = 0.0
    for b in range(2):
        for t in range(4):
            for d in range(3):
                expected += abs(gt[b, t, d] - hat[b, t, d])
                if t > 0:
                    expected += abs((gt[b, t, d] - gt[b, t - 1, d]) - (hat[b, t, d] - hat[b, t - 1, d]))
    assert float(reconstruction_loss(torch.from_numpy(gt), torch.from_numpy(hat))) == pytest.approx(expected)


def test_reconstruction_loss_rejects_bad_shapes():
    with pytest.raises(DimensionMismatchError):
        reconstruction_loss(torch.zeros(2, 4, 3), torch.zeros(2, 4, 2))
    with pytest.raises(DimensionMismatchError):
        reconstruction_loss(torch.zeros(2, 1, 3), torch.zeros(2, 1, 3))


def test_total_loss_weights():
    assert total_loss(0.0, 0.0, 0.0) == 0.0
    assert total_loss(1.0, 1.0, 0.0) == pytest.approx(0.002)
    assert total_loss(0.0, 0.0, 3.0) == pytest.approx(3.0)
    a, b, rec = 0.7, 1.9, 2.3
    assert total_loss(2 * a, 2 * b, 2 * rec) == pytest.approx(2 * total_loss(a, b, rec))
    assert total_loss(a, b, rec) == pytest.approx(total_loss(a, 0.0, 0.0) + total_loss(0.0, b, 0.0) + total_loss(0.0, 0.0, rec))


def test_windows_are_sequence_major(small_dataset):
    tensors = SequenceTensors.stack(small_dataset.sequences[:2])
    batch = make_windows(tensors, 4)
    assert batch.windows == 11
    assert batch.rows == 22
    assert torch.equal(batch.past_theta[12], tensors.theta[1, 1:5])
    assert torch.equal(batch.current_theta[12], tensors.theta[1, 5])
    assert batch.actions[11] == tensors.actions[1]


def test_training_writes_artifacts(trained, tiny_train_config):
    service, result = trained
    for name in ("initial", "best", "final"):
        assert result.checkpoints[name].exists()
    assert (service.out_dir / "loss_log.csv").exists()
    log = pd.read_csv(service.out_dir / "loss_log.csv")
    assert list(log.columns) == LOG_COLUMNS
    assert log["epoch"].tolist() == list(range(tiny_train_config.epochs + 1))
    assert np.isfinite(log[["train_loss", "val_loss"]].to_numpy()).all()
    final = load_checkpoint(result.checkpoints["final"])
    assert final.config_hash == result.config_hash
    assert final.optimizer is not None and final.scheduler is not None


def test_epoch_zero_loss_matches_initial_checkpoint(trained, small_dataset):
    service, result = trained
    model = restore_synthesizer(load_checkpoint(result.checkpoints["initial"]))
    split = load_split(small_dataset)
    recomputed = service.evaluate_loss(model, SequenceTensors.stack(split.val))
    assert float(recomputed.total) == pytest.approx(result.loss_log.loc[0, "val_loss"], rel=1e-12)


def test_same_seed_gives_identical_curves(tmp_path, tiny_train_config, small_dataset, trained):
    _, result = trained
    again = TrainingService(tiny_train_config, tmp_path).train(small_dataset)
    pd.testing.assert_frame_equal(result.loss_log, again.loss_log, check_exact=True)


def test_empty_validation_falls_back_to_training(tmp_path, tiny_train_config, small_dataset):
    split = load_split(small_dataset)
    config = tiny_train_config.model_copy(update={"epochs": 1})
    result = TrainingService(config, tmp_path).train(small_dataset, DatasetSplit(train=split.train, val=[], test=split.test))
    assert len(result.loss_log) == 2


def test_kl_absent_from_gradient_without_weight(tmp_path, tiny_train_config, small_dataset):
    service = TrainingService(tiny_train_config.model_copy(update={"lambda_kl": 0.0}), tmp_path)
    torch.manual_seed(0)
    model = service.build_model(small_dataset).train()
    tensors = SequenceTensors.stack(small_dataset.sequences[:3])
    rows = make_windows(tensors, service.k).rows
    noise = model.draw_noise(rows, torch.Generator().manual_seed(9))

    losses = service.batch_loss(model, tensors, noise)
    params = [param for param in model.parameters()]
    from_total = torch.autograd.grad(losses.total, params, retain_graph=True, allow_unused=True)
    from_rec = torch.autograd.grad(losses.reconstruction, params, retain_graph=True, allow_unused=True)
    from_kl = torch.autograd.grad(losses.kl_total, params, allow_unused=True)
    for total, rec in zip(from_total, from_rec):
        assert (total is None) == (rec is None)
        if total is not None:
            assert torch.allclose(total, rec, rtol=1e-12, atol=1e-15)
    assert any(grad is not None and bool(grad.abs().sum() > 0) for grad in from_kl)


@pytest.mark.parametrize("flag", ["random_action_embeddings", "no_body_attention", "fused_body"])
def test_ablation_trains_end_to_end(tmp_path, tiny_train_config, small_dataset, trained, flag):
    generator_config = tiny_train_config.generator.model_copy(update={flag: True})
    config = tiny_train_config.model_copy(update={"generator": generator_config})
    result = TrainingService(config, tmp_path).train(small_dataset)

    assert result.loss_log["epoch"].tolist() == [0, 1, 2]
    assert np.isfinite(result.loss_log[["train_loss", "val_loss"]].to_numpy()).all()
    assert result.config_hash != trained[1].config_hash
    model = restore_synthesizer(load_checkpoint(result.checkpoints["best"]))
    assert getattr(model.config, flag)
    assert model.synthesizer_type == ("fused" if flag == "fused_body" else "decoupled")


def test_heavy_kl_weight_collapses_posterior(tiny_train_config, small_dataset):
    tensors = SequenceTensors.stack(small_dataset.sequences[:6])
    kl = {}
    for weight in (0.0, 1000.0):
        service = TrainingService(tiny_train_config.model_copy(update={"lambda_kl": weight}), "unused")
        torch.manual_seed(0)
        model = service.build_model(small_dataset).train()
        optimizer = make_optimizer(model.parameters(), 1e-3)
        for _ in range(150):
            optimizer.zero_grad()
            service.batch_loss(model, tensors).total.backward()
            optimizer.step()
        with torch.no_grad():
            kl[weight] = float(service.batch_loss(model, tensors).kl_total)
    assert np.isfinite(list(kl.values())).all()
    assert kl[1000.0] < 0.1 * kl[0.0]


def test_total_loss_gradient_matches_finite_differences(tiny_train_config, small_dataset):
    service = TrainingService(tiny_train_config, "unused")
    torch.manual_seed(1)
    model = service.build_model(small_dataset).eval()
    tensors = SequenceTensors.stack(small_dataset.sequences[:1])

    layer = model.body_decoder.output
    original = layer.bias.detach().clone()
    del layer.bias

    def loss(head):
        layer.bias = torch.cat([head, original[head.shape[0]:]])
        return service.batch_loss(model, tensors).total

    head = original[:4].clone().requires_grad_(True)
    assert gradient_check(loss, (head,))


@pytest.mark.slow
def test_small_set_is_memorizable(tiny_train_config):
    dataset = generate_synthetic(seed=2, n_subjects=2, n_sequences=8)
    generator_config = tiny_train_config.generator.model_copy(update={"hidden_width": 128})
    service = TrainingService(tiny_train_config.model_copy(update={"generator": generator_config}), "unused")
    torch.manual_seed(0)
    model = service.build_model(dataset)
    tensors = SequenceTensors.stack(dataset.sequences)
    optimizer = make_optimizer(model.parameters(), 1e-3)
    for _ in range(2000):
        model.train()
        optimizer.zero_grad()
        service.batch_loss(model, tensors).total.backward()
        optimizer.step()
    assert service.reconstruction_mpjpe(model, dataset.sequences) < 0.01


@pytest.mark.slow
def test_trained_model_is_seeded_diverse_and_condition_sensitive(tmp_path, tiny_train_config):
    dataset = generate_synthetic(seed=0, n_subjects=10, n_sequences=400)
    generator_config = tiny_train_config.generator.model_copy(update={"hidden_width": 128, "hidden_depth": 2})
    config = tiny_train_config.model_copy(update={"epochs": 200, "batch_size": 64, "generator": generator_config})
    result = TrainingService(config, tmp_path).train(dataset)
    model = restore_synthesizer(load_checkpoint(result.checkpoints["best"]))

    seed_sequence = next(s for s in load_split(dataset).test if s.action != "offhand")
    vertices = dataset.library.vertices(seed_sequence.object_label)

    def positions(action, seed):
        rolled, _ = model.rollout(seed_sequence, action, seed_sequence.object_label, seed, vertices, object_mode="carry")
        assert rolled.frame_count == 15
        with torch.no_grad():
            return model.skeleton.forward_kinematics(rolled.theta_tensor(), rolled.root_tensor(), rolled.shape_tensor()).numpy()[4:]

    assert np.array_equal(positions("drink", 0), positions("drink", 0))
    samples = [positions("drink", seed) for seed in range(10)]
    noise = np.mean([np.linalg.norm(a - b, axis=-1).mean() for i, a in enumerate(samples) for b in samples[i + 1:]])
    assert noise > 0.005

    others = [positions("pass", seed) for seed in range(10)]
    across = np.mean([np.linalg.norm(a - b, axis=-1).mean() for a in samples for b in others])
    assert across >= 2.0 * noise
