import math

import torch

from intentmotion.networks.layers import PlateauState, make_optimizer
from intentmotion.services.checkpoint_service import (
    build_checkpoint,
    decode_array,
    encode_array,
    encode_optimizer,
    encode_scheduler,
    load_checkpoint,
    restore_optimizer,
    restore_scheduler,
    restore_synthesizer,
    save_checkpoint,
)
from intentmotion.synthesizers.synthesizer_factory import synthesizer_factory


def build_model(tiny_train_config, skeleton, small_dataset):
    torch.manual_seed(3)
    return synthesizer_factory.get_synthesizer(tiny_train_config.generator, skeleton, small_dataset.vocabulary)


def test_array_encoding_keeps_dtype_and_values(generator):
    for tensor in (
        torch.randn(3, 4, generator=generator),
        torch.randn(5, generator=generator).to(torch.float32),
        torch.tensor(12345678901, dtype=torch.int64),
    ):
        decoded = decode_array(encode_array(tensor))
        assert decoded.dtype == tensor.dtype
        assert decoded.shape == tensor.shape
        assert torch.equal(decoded, tensor)


def test_scheduler_round_trip_with_unset_best():
    state = PlateauState(lr=5e-4, patience=3, decay=0.999)
    document = encode_scheduler(state)
    assert document.best is None
    assert restore_scheduler(document) == state

    state.best, state.wait, state.decays = 1.25, 2, 1
    assert restore_scheduler(encode_scheduler(state)) == state
    assert math.isinf(PlateauState(lr=1.0, patience=1, decay=0.5).best)


def test_checkpoint_write_read_write_is_byte_identical(tmp_path, tiny_train_config, skeleton, small_dataset):
    model = build_model(tiny_train_config, skeleton, small_dataset)
    checkpoint = build_checkpoint(model, tiny_train_config, "initial", 0, val_loss=1.5)
    first = save_checkpoint(tmp_path / "a.json", checkpoint)
    second = save_checkpoint(tmp_path / "b.json", load_checkpoint(first))
    assert first.read_bytes() == second.read_bytes()


def test_restored_synthesizer_reproduces_outputs(tmp_path, tiny_train_config, skeleton, small_dataset, generator):
    model = build_model(tiny_train_config, skeleton, small_dataset)
    model.train()
    sequence = small_dataset.sequences[0]
    batch = torch.stack([sequence.theta_tensor()[:4]] * 3)
    with torch.no_grad():
        model.attention(batch[0])
        model.encode_condition(["drink"] * 3, torch.tensor([1, 2, 3]), sequence.shape_tensor().expand(3, -1))
    model.eval()

    path = save_checkpoint(tmp_path / "model.json", build_checkpoint(model, tiny_train_config, "best", 7))
    restored = restore_synthesizer(load_checkpoint(path))
    assert restored.synthesizer_type == model.synthesizer_type
    assert not restored.training

    noise = model.draw_noise(1, generator)
    shape = sequence.shape_tensor()[None]
    with torch.no_grad():
        phi = model.encode_condition(["pass"], torch.tensor([4]), shape)
        expected = model.sample(phi, batch[:1], sequence.object_translation_tensor()[None, :4], sequence.object_rotation_tensor()[None, :4], noise)
        phi_restored = restored.encode_condition(["pass"], torch.tensor([4]), shape)
        actual = restored.sample(
            phi_restored, batch[:1], sequence.object_translation_tensor()[None, :4], sequence.object_rotation_tensor()[None, :4], noise
        )
    assert torch.equal(expected, actual)
    for name, value in model.state_dict().items():
        assert torch.equal(value, restored.state_dict()[name])


def test_optimizer_state_round_trip(tiny_train_config, skeleton, small_dataset):
    model = build_model(tiny_train_config, skeleton, small_dataset)
    optimizer = make_optimizer(model.parameters(), 1e-3)
    loss = sum((param**2).sum() for param in model.parameters())
    loss.backward()
    optimizer.step()

    fresh = make_optimizer(model.parameters(), 1e-3)
    restore_optimizer(fresh, encode_optimizer(optimizer))
    original, restored = optimizer.state_dict(), fresh.state_dict()
    assert restored["param_groups"][0]["betas"] == (0.9, 0.999)
    assert original["state"].keys() == restored["state"].keys()
    for index, slots in original["state"].items():
        for name, value in slots.items():
            assert torch.equal(torch.as_tensor(value), torch.as_tensor(restored["state"][index][name]))
