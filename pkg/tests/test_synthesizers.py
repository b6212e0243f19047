import pytest
import torch
from torch import nn

from config import config
from intentmotion.models.generator_config import GeneratorConfig
from intentmotion.models.solver_config import SolverConfig
from intentmotion.models.train_config import TrainConfig, config_hash
from intentmotion.networks.layers import gradient_check, kl_standard_normal
from intentmotion.services.dataset_service import load_split
from intentmotion.services.object_optimizer import ObjectOptimizer
from intentmotion.synthesizers.base_synthesizer import BodyAttention
from intentmotion.synthesizers.decoupled_synthesizer import DecoupledSynthesizer
from intentmotion.synthesizers.fused_synthesizer import FusedSynthesizer
from intentmotion.synthesizers.synthesizer_factory import SynthesizerFactory, synthesizer_factory
from intentmotion.utils.exceptions import DimensionMismatchError, IntentMotionError


@pytest.fixture
def model(tiny_generator_config, skeleton, small_dataset):
    torch.manual_seed(0)
    synthesizer = synthesizer_factory.get_synthesizer(tiny_generator_config, skeleton, small_dataset.vocabulary)
    return synthesizer.eval()


@pytest.fixture
def window(small_dataset):
    sequence = small_dataset.sequences[0]
    k = config.PAST_FRAMES
    return (
        sequence.theta_tensor()[None, :k],
        sequence.object_translation_tensor()[None, :k],
        sequence.object_rotation_tensor()[None, :k],
        sequence.theta_tensor()[None, k],
    )


def condition(model, small_dataset, action="drink", label=3):
    shape = small_dataset.sequences[0].shape_tensor()[None]
    return model.encode_condition([action], torch.tensor([label]), shape)


def test_default_widths(skeleton, small_dataset, window):
    full = DecoupledSynthesizer(GeneratorConfig(), skeleton, small_dataset.vocabulary).eval()
    past_theta, past_translation, past_rotation, current = window
    with torch.no_grad():
        phi = condition(full, small_dataset)
        arm_ctx = full.arm_context(phi, past_theta, past_translation, past_rotation)
        arm_dist = full.arm_encode(arm_ctx, skeleton.split_pose(current)[0])
        arm_hat = full.arm_decode(torch.zeros(1, 32), arm_ctx)
        body_ctx = full.body_context(phi, past_theta, past_translation, past_rotation, arm_hat)
        body_dist = full.body_encode(body_ctx, skeleton.split_pose(current)[1])
    assert phi.shape == (1, 400)
    assert arm_dist.dim == 32
    assert body_dist.dim == 100
    assert arm_hat.shape == (1, 36, 6)


def test_condition_encoding_is_deterministic(model, small_dataset):
    with torch.no_grad():
        first = condition(model, small_dataset)
        second = condition(model, small_dataset)
    assert torch.equal(first, second)
    assert first.shape == (1, model.config.condition_dim)


def test_unknown_action_is_rejected(model, small_dataset):
    with pytest.raises(IntentMotionError, match="not in the vocabulary"):
        condition(model, small_dataset, action="juggle")


def test_zero_initialized_arm_encoder_has_zero_kl(model, small_dataset, window, skeleton):
    for param in model.arm_encoder.parameters():
        nn.init.zeros_(param)
    past_theta, past_translation, past_rotation, current = window
    with torch.no_grad():
        phi = condition(model, small_dataset)
        dist = model.arm_encode(model.arm_context(phi, past_theta, past_translation, past_rotation), skeleton.split_pose(current)[0])
    assert torch.equal(dist.mu, torch.zeros_like(dist.mu))
    assert torch.equal(dist.log_sigma, torch.zeros_like(dist.log_sigma))
    assert float(kl_standard_normal(dist).sum()) == 0.0


def test_arm_encoder_gradient(model, generator):
    ctx = torch.randn(1, model.arm_context_width, generator=generator).requires_grad_(True)
    arm = torch.randn(1, model.arm_width, generator=generator).requires_grad_(True)

    def encode(ctx, arm):
        dist = model.arm_encode(ctx, arm)
        return torch.cat([dist.mu, dist.log_sigma], dim=-1)

    assert gradient_check(encode, (ctx, arm))


def test_body_encoder_gradient(model, generator):
    ctx = torch.randn(1, model.body_context_width, generator=generator).requires_grad_(True)
    body = torch.randn(1, model.body_width, generator=generator).requires_grad_(True)

    def encode(ctx, body):
        dist = model.body_encode(ctx, body)
        return torch.cat([dist.mu, dist.log_sigma], dim=-1)

    assert gradient_check(encode, (ctx, body))


def test_decoders_are_deterministic(model, small_dataset, window, generator):
    past_theta, past_translation, past_rotation, _ = window
    noise = model.draw_noise(1, generator)
    with torch.no_grad():
        phi = condition(model, small_dataset)
        first = model.sample(phi, past_theta, past_translation, past_rotation, noise)
        second = model.sample(phi, past_theta, past_translation, past_rotation, noise)
    assert torch.equal(first, second)
    arm, body = model.skeleton.split_pose(first)
    assert torch.equal(model.skeleton.merge_pose(arm, body), first)


def test_arm_decoding_ignores_past_body(model, small_dataset, window, generator):
    past_theta, past_translation, past_rotation, _ = window
    noise = model.draw_noise(1, generator)
    sentinel = past_theta.clone()
    sentinel[..., model.skeleton.body_joints, :] = 7.0
    with torch.no_grad():
        phi = condition(model, small_dataset)
        reference = model.sample(phi, past_theta, past_translation, past_rotation, noise)
        injected = model.sample(phi, sentinel, past_translation, past_rotation, noise)
    arm_ref, body_ref = model.skeleton.split_pose(reference)
    arm_inj, body_inj = model.skeleton.split_pose(injected)
    assert torch.equal(arm_ref, arm_inj)
    assert not torch.equal(body_ref, body_inj)


def test_body_decoding_reads_synthesized_arms(model, small_dataset, window):
    past_theta, past_translation, past_rotation, _ = window
    with torch.no_grad():
        phi = condition(model, small_dataset)
        arms = torch.zeros(1, model.skeleton.arm_count, 6)
        ctx_a = model.body_context(phi, past_theta, past_translation, past_rotation, arms)
        ctx_b = model.body_context(phi, past_theta, past_translation, past_rotation, arms + 1.0)
        z = torch.zeros(1, model.config.body_latent_dim)
    assert not torch.equal(model.body_decode(z, ctx_a), model.body_decode(z, ctx_b))


def test_attention_rows_sum_to_one(model, window):
    past_theta = window[0][0]
    _, weights = model.attention(past_theta)
    assert torch.allclose(weights.sum(dim=-1), torch.ones(weights.shape[:-1]), atol=1e-6)


def test_attention_permutes_with_frames(model, window):
    past_theta = window[0]
    order = torch.tensor([2, 0, 3, 1])
    with torch.no_grad():
        attended = model.attend_body(past_theta)
        permuted = model.attend_body(past_theta[:, order])
    assert torch.allclose(permuted, attended[:, order])


def test_attention_needs_k_frames(model, window):
    with pytest.raises(DimensionMismatchError):
        model.attend_body(window[0][:, :2])


def test_single_joint_attention_returns_value_projection(generator):
    attention = BodyAttention(torch.randn(1, 3, generator=generator), width=8, heads=2)
    poses = torch.randn(5, 1, 6, generator=generator)
    with torch.no_grad():
        attended, _ = attention(poses)
        expected = attention.value(attention.tokens(poses))
    assert torch.allclose(attended, expected)


def test_factory_selects_synthesizer(tiny_generator_config, skeleton, small_dataset):
    vocabulary = small_dataset.vocabulary
    assert isinstance(synthesizer_factory.get_synthesizer(tiny_generator_config, skeleton, vocabulary), DecoupledSynthesizer)
    fused_config = tiny_generator_config.model_copy(update={"fused_body": True})
    fused = synthesizer_factory.get_synthesizer(fused_config, skeleton, vocabulary)
    assert isinstance(fused, FusedSynthesizer)
    assert fused.latent_dims() == {"full": 12}
    assert set(synthesizer_factory.get_supported_synthesizers()) == {"decoupled", "fused"}
    with pytest.raises(ValueError):
        synthesizer_factory.get_synthesizer(tiny_generator_config, skeleton, vocabulary, kind="transformer")


def test_random_action_embeddings_replace_vocabulary(tiny_generator_config, skeleton, small_dataset):
    vocabulary = small_dataset.vocabulary
    plain = synthesizer_factory.get_synthesizer(tiny_generator_config, skeleton, vocabulary)
    shuffled_config = tiny_generator_config.model_copy(update={"random_action_embeddings": True})
    first = synthesizer_factory.get_synthesizer(shuffled_config, skeleton, vocabulary)
    second = synthesizer_factory.get_synthesizer(shuffled_config, skeleton, vocabulary)
    assert torch.equal(first.action_table, second.action_table)
    assert not torch.equal(first.action_table, plain.action_table)


def test_raw_pose_context_without_attention(tiny_generator_config, skeleton, small_dataset, window):
    raw_config = tiny_generator_config.model_copy(update={"no_body_attention": True})
    model = synthesizer_factory.get_synthesizer(raw_config, skeleton, small_dataset.vocabulary)
    assert torch.equal(model.pose_features(window[0]), window[0].flatten(1))


def test_ablations_have_distinct_hashes(tiny_generator_config):
    flags = ["random_action_embeddings", "no_body_attention", "fused_body"]
    hashes = {config_hash(TrainConfig(generator=tiny_generator_config))}
    for flag in flags:
        hashes.add(config_hash(TrainConfig(generator=tiny_generator_config.model_copy(update={flag: True}))))
    assert len(hashes) == 4


def test_carry_rollout_is_reproducible(model, small_dataset):
    seed_sequence = load_split(small_dataset).test[0]
    vertices = small_dataset.library.vertices(seed_sequence.object_label)
    first, report = model.rollout(seed_sequence, "drink", seed_sequence.object_label, 11, vertices, object_mode="carry")
    second, _ = model.rollout(seed_sequence, "drink", seed_sequence.object_label, 11, vertices, object_mode="carry")
    other, _ = model.rollout(seed_sequence, "drink", seed_sequence.object_label, 12, vertices, object_mode="carry")

    assert report is None
    assert first.frame_count == config.SEQUENCE_FRAMES
    assert first.model_dump() == second.model_dump()
    assert first.theta[: config.PAST_FRAMES] == seed_sequence.theta[: config.PAST_FRAMES]
    assert first.root_translation[-1] == seed_sequence.root_translation[config.PAST_FRAMES - 1]
    gap = (first.theta_tensor()[config.PAST_FRAMES:] - other.theta_tensor()[config.PAST_FRAMES:]).abs().mean()
    assert float(gap) > 0
    assert first.provenance["seed"] == 11
    assert first.provenance["object_mode"] == "carry"


def test_rollout_frame_depends_only_on_past_window(model, small_dataset, generator):
    seed_sequence = load_split(small_dataset).test[0]
    label = seed_sequence.object_label
    rolled, _ = model.rollout(seed_sequence, "drink", label, 11, small_dataset.library.vertices(label), object_mode="carry")
    theta = rolled.theta_tensor()
    translation, rotation = rolled.object_translation_tensor(), rolled.object_rotation_tensor()
    k = config.PAST_FRAMES

    replay = torch.Generator().manual_seed(11)
    with torch.no_grad():
        phi = model.encode_condition(["drink"], torch.tensor([label]), rolled.shape_tensor()[None])
        for frame in range(k, config.SEQUENCE_FRAMES):
            noise = model.draw_noise(1, replay)
            window = slice(frame - k, frame)
            expected = model.sample(phi, theta[None, window], translation[None, window], rotation[None, window], noise)[0]
            assert torch.equal(expected, theta[frame])
            if frame == k:
                continue
            earlier = slice(0, frame - k)
            perturbed_theta, perturbed_translation = theta.clone(), translation.clone()
            perturbed_theta[earlier] += 0.3 * torch.randn(perturbed_theta[earlier].shape, generator=generator)
            perturbed_translation[earlier] += 0.1
            again = model.sample(
                phi, perturbed_theta[None, window], perturbed_translation[None, window], rotation[None, window], noise
            )[0]
            assert torch.equal(again, expected)


def test_rollout_regrips_new_object(model, small_dataset):
    seed_sequence = load_split(small_dataset).test[0]
    label = (seed_sequence.object_label + 1) % config.OBJECT_COUNT
    synthesized, _ = model.rollout(seed_sequence, "pass", label, 3, small_dataset.library.vertices(label), object_mode="carry")
    assert synthesized.object_label == label
    assert synthesized.object_rotation[0] == seed_sequence.object_rotation[0]


def test_optimized_rollout_returns_solver_report(model, small_dataset):
    seed_sequence = next(s for s in small_dataset.sequences if s.action != "offhand")
    vertices = small_dataset.library.vertices(seed_sequence.object_label)
    optimizer = ObjectOptimizer(model.skeleton, SolverConfig(max_iters=10))
    synthesized, report = model.rollout(seed_sequence, "drink", seed_sequence.object_label, 5, vertices, optimizer=optimizer)
    assert report is not None
    assert len(report.frames) == config.SEQUENCE_FRAMES - 1
    assert all(frame.iterations <= 10 for frame in report.frames)
    assert synthesized.switch_frame is None


def test_unknown_object_mode(model, small_dataset):
    seed_sequence = small_dataset.sequences[0]
    with pytest.raises(ValueError):
        model.rollout(seed_sequence, "drink", 0, 0, small_dataset.library.vertices(0), object_mode="teleport")


def test_factory_registers_subclasses_only(tiny_generator_config, skeleton, small_dataset):
    factory = SynthesizerFactory()
    factory.register_synthesizer("fused-copy", FusedSynthesizer)
    assert isinstance(factory.get_synthesizer(tiny_generator_config, skeleton, small_dataset.vocabulary, kind="fused-copy"), FusedSynthesizer)
    assert "fused-copy" not in synthesizer_factory.get_supported_synthesizers()
    with pytest.raises(ValueError):
        factory.register_synthesizer("mlp", nn.Linear)
