import math

import pytest
import torch

from config import config
from intentmotion.kinematics.rotations import axis_angle_to_matrix, geodesic_angle, matrix_to_sixd, random_rotation, sixd_to_matrix
from intentmotion.kinematics.objects import rigid_follow
from intentmotion.models.solver_config import SolverConfig
from intentmotion.networks.layers import gradient_check
from intentmotion.services.dataset_service import generate_synthetic
from intentmotion.services.object_optimizer import (
    GraspReference,
    ObjectOptimizer,
    build_reference,
    detect_offhand_switch,
    energy_contact,
    energy_distance,
    energy_regularizer,
)
from intentmotion.utils.exceptions import DimensionMismatchError, NoContactError, NoSwitchFoundError

IDENTITY = torch.eye(3)
ORIGIN = torch.zeros(3)


def first_use_sequence(dataset):
    return next(s for s in dataset.sequences if config.get_intent_config(s.action)["family"] == "use")


def random_scene(generator, hand_count=6, vertex_count=9):
    hand = 0.05 * torch.randn(hand_count, 3, generator=generator)
    vertices = 0.05 * torch.randn(vertex_count, 3, generator=generator)
    rotation = random_rotation(1, generator)[0]
    translation = 0.02 * torch.randn(3, generator=generator)
    return hand, vertices, rotation, translation


def test_reference_three_four_five():
    ref = build_reference(torch.zeros(1, 3), torch.tensor([[3.0, 4.0, 0.0]]), IDENTITY, ORIGIN, tau=6.0)
    assert torch.allclose(ref.distances, torch.tensor([[5.0]]))
    assert ref.contact_count == 1


def test_reference_threshold():
    vertices = torch.tensor([[0.004, 0.0, 0.0], [0.006, 0.0, 0.0]])
    ref = build_reference(torch.zeros(1, 3), vertices, IDENTITY, ORIGIN, tau=0.005)
    assert ref.contact_mask.tolist() == [[True, False]]


def test_reference_matches_pairwise_brute_force(generator):
    hand, vertices, rotation, translation = random_scene(generator, 2, 2)
    ref = build_reference(hand, vertices, rotation, translation, tau=10.0)
    for i in range(2):
        for j in range(2):
            expected = torch.linalg.vector_norm(hand[i] - (rotation @ vertices[j] + translation))
            assert float(ref.distances[i, j]) == pytest.approx(float(expected), abs=1e-12)


def test_reference_without_contact():
    with pytest.raises(NoContactError) as excinfo:
        build_reference(torch.zeros(1, 3), torch.tensor([[3.0, 4.0, 0.0]]), IDENTITY, ORIGIN)
    assert excinfo.value.min_distance == pytest.approx(5.0)


def test_distance_energy_zero_at_reference(generator):
    hand, vertices, rotation, translation = random_scene(generator)
    ref = build_reference(hand, vertices, rotation, translation, tau=1.0)
    assert float(energy_distance(hand, vertices, rotation, translation, ref)) == pytest.approx(0.0, abs=1e-12)


def test_energies_invariant_under_common_rigid_motion(generator):
    hand, vertices, rotation, translation = random_scene(generator)
    ref = build_reference(hand, vertices, rotation, translation, tau=0.2)
    moved_rotation = rotation @ axis_angle_to_matrix(torch.tensor([0.0, 0.0, 0.1]))
    moved_translation = translation + torch.tensor([0.01, 0.0, 0.0])
    e_d = energy_distance(hand, vertices, moved_rotation, moved_translation, ref)
    e_c = energy_contact(hand, vertices, moved_rotation, moved_translation, ref)

    q = random_rotation(1, generator)[0]
    t = torch.randn(3, generator=generator)
    hand_q = hand @ q.T + t
    rotation_q = q @ moved_rotation
    translation_q = q @ moved_translation + t
    assert float(energy_distance(hand_q, vertices, rotation_q, translation_q, ref)) == pytest.approx(float(e_d), abs=1e-8)
    assert float(energy_contact(hand_q, vertices, rotation_q, translation_q, ref)) == pytest.approx(float(e_c), abs=1e-8)


def test_distance_energy_after_object_shift(generator):
    hand, vertices, rotation, translation = random_scene(generator, 1, 1)
    ref = build_reference(hand, vertices, rotation, translation, tau=1.0)
    shifted = translation + torch.tensor([0.01, 0.0, 0.0])
    d0 = torch.linalg.vector_norm(hand[0] - (rotation @ vertices[0] + translation))
    d1 = torch.linalg.vector_norm(hand[0] - (rotation @ vertices[0] + shifted))
    assert float(energy_distance(hand, vertices, rotation, shifted, ref)) == pytest.approx(float((d1 - d0).abs()), abs=1e-12)


def test_distance_energy_shape_mismatch(generator):
    hand, vertices, rotation, translation = random_scene(generator)
    ref = build_reference(hand, vertices, rotation, translation, tau=1.0)
    with pytest.raises(DimensionMismatchError):
        energy_distance(hand[:3], vertices, rotation, translation, ref)


def test_contact_energy_cases():
    hand = torch.zeros(1, 3)
    vertices = torch.tensor([[0.004, 0.0, 0.0]])
    empty = GraspReference(hand="right", distances=torch.ones(1, 1), contact_mask=torch.zeros(1, 1, dtype=torch.bool), tau=0.005)
    assert float(energy_contact(hand, vertices, IDENTITY, ORIGIN, empty)) == 0.0

    ref = build_reference(hand, vertices, IDENTITY, ORIGIN, tau=0.005)
    touching = torch.tensor([-0.004, 0.0, 0.0])
    assert float(energy_contact(hand, vertices, IDENTITY, touching, ref)) == pytest.approx(0.0, abs=1e-15)
    apart = torch.tensor([0.006, 0.0, 0.0])
    assert float(energy_contact(hand, vertices, IDENTITY, apart, ref)) == pytest.approx(0.01)


def test_regularizer_cases(generator):
    rotation = random_rotation(1, generator)[0]
    translation = torch.randn(3, generator=generator)
    params = [torch.randn(15, 6, generator=generator)]
    assert float(energy_regularizer(rotation, translation, params, rotation, translation, params)) == 0.0

    shifted = translation + torch.tensor([0.01, 0.0, 0.0])
    assert float(energy_regularizer(rotation, shifted, params, rotation, translation, params)) == pytest.approx(0.01)

    turned = rotation @ axis_angle_to_matrix(torch.tensor([0.0, 0.02, 0.0]))
    expected = math.sqrt(float(((turned - rotation) ** 2).sum()) + 0.01**2)
    assert float(energy_regularizer(turned, shifted, params, rotation, translation, params)) == pytest.approx(expected)


def test_energy_gradients_match_finite_differences(generator):
    hand, vertices, rotation, translation = random_scene(generator, 3, 4)
    ref = build_reference(hand, vertices, rotation, translation, tau=0.2)
    rot6d = matrix_to_sixd(rotation @ axis_angle_to_matrix(torch.tensor([0.05, -0.02, 0.03]))).requires_grad_(True)
    moved = (translation + torch.tensor([0.003, -0.002, 0.001])).requires_grad_(True)
    points = hand.clone().requires_grad_(True)

    assert gradient_check(lambda r, t, h: energy_distance(h, vertices, sixd_to_matrix(r), t, ref), (rot6d, moved, points))
    assert gradient_check(lambda r, t, h: energy_contact(h, vertices, sixd_to_matrix(r), t, ref), (rot6d, moved, points))
    prev = [torch.zeros(2, 6)]
    params = torch.randn(2, 6, generator=generator).requires_grad_(True)
    assert gradient_check(
        lambda r, t, p: energy_regularizer(sixd_to_matrix(r), t, [p], rotation, translation, prev), (rot6d, moved, params)
    )


def test_switch_at_closest_approach():
    reach = torch.tensor([abs(t - 7) for t in range(13)], dtype=torch.float64)
    objects = torch.zeros(13, 3)
    giving = torch.tensor([0.1, 0.0, 0.0]).expand(13, 3)
    receiving = torch.stack([-(0.04 + 0.02 * reach), torch.zeros(13), torch.zeros(13)], dim=-1)
    switch = detect_offhand_switch("offhand", objects, giving, receiving)

    gaps = [float((objects[t] - receiving[t]).norm() - (objects[t] - giving[t]).norm()) for t in range(1, 13)]
    assert switch.frame == 1 + min(range(12), key=gaps.__getitem__)
    assert switch.frame == 7
    assert switch.gap == pytest.approx(-0.06)
    assert not switch.fallback


def test_switch_tie_goes_to_earlier_frame():
    objects = torch.tensor([[0.3, 0, 0], [-0.2, 0, 0], [0.0, 0, 0], [-0.2, 0, 0]], dtype=torch.float64)
    giving = torch.tensor([0.2, 0.0, 0.0]).expand(4, 3)
    receiving = torch.tensor([-0.2, 0.0, 0.0]).expand(4, 3)
    switch = detect_offhand_switch("offhand", objects, giving, receiving)
    assert switch.frame == 1


def test_switch_only_for_offhand():
    objects = torch.zeros(5, 3)
    assert detect_offhand_switch("drink", objects, objects, objects) is None


def test_switch_fallback_and_strict_mode():
    objects = torch.tensor([0.3, 0.0, 0.0]).expand(9, 3)
    giving = torch.tensor([0.25, 0.0, 0.0]).expand(9, 3)
    receiving = torch.tensor([-0.2, 0.0, 0.0]).expand(9, 3)
    switch = detect_offhand_switch("offhand", objects, giving, receiving)
    assert switch.fallback and switch.frame == 4
    with pytest.raises(NoSwitchFoundError):
        detect_offhand_switch("offhand", objects, giving, receiving, allow_fallback=False)


def test_solve_frame_returns_immediately_on_unchanged_body(small_dataset):
    sequence = first_use_sequence(small_dataset)
    optimizer = ObjectOptimizer(small_dataset.skeleton)
    vertices = small_dataset.library.vertices(sequence.object_label)
    theta, root, shape = sequence.theta_tensor(), sequence.root_tensor(), sequence.shape_tensor()
    start, refs = optimizer.initial_solution(
        theta[0], root[0], shape, sequence.object_rotation_tensor()[0], sequence.object_translation_tensor()[0], vertices, ["right"]
    )
    solution = optimizer.solve_frame(theta[0], root[0], shape, start, refs, vertices)
    assert solution.iterations == 0
    assert solution.total <= 1e-10
    assert solution.converged
    assert torch.equal(solution.translation, start.translation)


def test_solve_frame_recovers_welded_object(small_dataset):
    sequence = first_use_sequence(small_dataset)
    skeleton = small_dataset.skeleton
    optimizer = ObjectOptimizer(skeleton)
    vertices = small_dataset.library.vertices(sequence.object_label)
    theta, root, shape = sequence.theta_tensor(), sequence.root_tensor(), sequence.shape_tensor()

    turn = axis_angle_to_matrix(torch.tensor([0.0, 0.15, 0.0]))
    moved_theta = theta[0].clone()
    moved_theta[0] = matrix_to_sixd(turn @ sixd_to_matrix(theta[0, 0]))
    moved_root = root[0] + torch.tensor([0.02, 0.0, -0.01])

    rotation0 = sequence.object_rotation_tensor()[0]
    translation0 = sequence.object_translation_tensor()[0]
    start, refs = optimizer.initial_solution(theta[0], root[0], shape, rotation0, translation0, vertices, ["right"])
    solution = optimizer.solve_frame(moved_theta, moved_root, shape, start, refs, vertices)

    wrist = skeleton.hand_joints["right"][0]
    positions0, rotations0 = skeleton.forward_kinematics(theta[0], root[0], shape, return_rotations=True)
    positions1, rotations1 = skeleton.forward_kinematics(moved_theta, moved_root, shape, return_rotations=True)
    expected_rotation, expected_translation = rigid_follow(
        rotation0, translation0, rotations0[wrist], positions0[wrist], rotations1[wrist], positions1[wrist]
    )
    assert float(torch.linalg.vector_norm(solution.translation - expected_translation)) < 1e-3
    assert math.degrees(float(geodesic_angle(solution.rotation, expected_rotation))) < 0.5
    assert solution.trace == sorted(solution.trace, reverse=True)


def test_optimize_sequence_tracks_carried_object(small_dataset):
    sequence = first_use_sequence(small_dataset)
    optimizer = ObjectOptimizer(small_dataset.skeleton, SolverConfig(max_iters=600))
    vertices = small_dataset.library.vertices(sequence.object_label)
    solved, report = optimizer.optimize_sequence(sequence, vertices)

    assert len(report.frames) == sequence.frame_count - 1
    assert report.tau == config.CONTACT_THRESHOLD
    assert report.weights == {"lambda_distance": 1.0, "lambda_contact": 0.005, "lambda_regularizer": 0.005}
    assert report.switch_frame is None
    assert solved.object_rotation[0] == sequence.object_rotation[0]
    error = torch.linalg.vector_norm(solved.object_translation_tensor() - sequence.object_translation_tensor(), dim=-1)
    assert float(error.max()) < 5e-3
    for frame in report.frames:
        assert frame.e_d >= 0 and frame.e_c >= 0 and frame.e_r >= 0


def test_optimize_sequence_reports_offhand_switch(small_dataset):
    sequence = next(s for s in small_dataset.sequences if s.action == "offhand")
    optimizer = ObjectOptimizer(small_dataset.skeleton)
    solved, report = optimizer.optimize_sequence(sequence, small_dataset.library.vertices(sequence.object_label))
    assert not report.switch_fallback
    assert abs(report.switch_frame - sequence.switch_frame) <= 1
    assert solved.switch_frame == report.switch_frame
    assert {frame.hand for frame in report.frames} >= {"left", "right"}


def test_handover_frame_reports_weighted_total(small_dataset):
    sequence = next(s for s in small_dataset.sequences if s.action == "offhand")
    settings = SolverConfig(max_iters=200)
    optimizer = ObjectOptimizer(small_dataset.skeleton, settings)
    _, report = optimizer.optimize_sequence(sequence, small_dataset.library.vertices(sequence.object_label))
    handover = next(frame for frame in report.frames if frame.frame == report.switch_frame)
    assert handover.hand == "left"
    assert handover.total == pytest.approx(settings.weighted_total(handover.e_d, handover.e_c, handover.e_r), abs=1e-15)
    for frame in report.frames:
        assert frame.total == pytest.approx(settings.weighted_total(frame.e_d, frame.e_c, frame.e_r), rel=1e-12, abs=1e-15)


@pytest.mark.slow
def test_offhand_switch_matches_generated_regrip():
    dataset = generate_synthetic(seed=4, n_subjects=3, n_sequences=300)
    offhand = [s for s in dataset.sequences if s.action == "offhand"][:10]
    assert len(offhand) == 10
    optimizer = ObjectOptimizer(dataset.skeleton, SolverConfig(max_iters=2500))
    for sequence in offhand:
        _, report = optimizer.optimize_sequence(sequence, dataset.library.vertices(sequence.object_label))
        assert not report.switch_fallback, sequence.sequence_id
        assert abs(report.switch_frame - sequence.switch_frame) <= 1, sequence.sequence_id
        after = [frame for frame in report.frames if frame.frame > report.switch_frame]
        assert after and all(frame.hand == "left" for frame in after)
        assert max(frame.e_c for frame in after) < 1e-4, sequence.sequence_id


@pytest.mark.slow
def test_solve_frame_recovers_rigidly_carried_objects():
    dataset = generate_synthetic(seed=5, n_subjects=2, n_sequences=30)
    carried = [s for s in dataset.sequences if s.action != "offhand"][:20]
    assert len(carried) == 20
    optimizer = ObjectOptimizer(dataset.skeleton, SolverConfig(max_iters=3000, stall_tolerance=1e-13))
    for sequence in carried:
        vertices = dataset.library.vertices(sequence.object_label)
        theta, root, shape = sequence.theta_tensor(), sequence.root_tensor(), sequence.shape_tensor()
        rotations, translations = sequence.object_rotation_tensor(), sequence.object_translation_tensor()
        prev, refs = optimizer.initial_solution(theta[0], root[0], shape, rotations[0], translations[0], vertices, ["right"])
        for frame in range(1, 4):
            prev = optimizer.solve_frame(theta[frame], root[frame], shape, prev, refs, vertices)
            label = f"{sequence.sequence_id} frame {frame}"
            assert float(torch.linalg.vector_norm(prev.translation - translations[frame])) < 1e-3, label
            assert math.degrees(float(geodesic_angle(prev.rotation, rotations[frame]))) < 0.5, label
            assert prev.e_d < 1e-6 and prev.e_c < 1e-6, label
            assert prev.trace == sorted(prev.trace, reverse=True)
