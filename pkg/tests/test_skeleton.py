import math

import pytest
import torch

from intentmotion.kinematics.rotations import axis_angle_to_matrix, matrix_to_sixd, sixd_to_matrix
from intentmotion.networks.layers import gradient_check
from intentmotion.utils.exceptions import DegenerateInputError, DimensionMismatchError


def cumulative_offsets(skeleton):
    positions = []
    for joint, parent in enumerate(skeleton.parents):
        positions.append(torch.zeros(3) if parent < 0 else positions[parent] + skeleton.rest_offsets[joint])
    return torch.stack(positions)


def random_theta(skeleton, generator, scale=0.4):
    aa = scale * torch.randn(skeleton.joint_count, 3, generator=generator)
    return matrix_to_sixd(axis_angle_to_matrix(aa))


def test_template_partition(skeleton):
    assert skeleton.joint_count == 55
    assert skeleton.arm_count == 36
    assert skeleton.body_count == 19
    arm = set(skeleton.arm_joints.tolist())
    body = set(skeleton.body_joints.tolist())
    assert arm.isdisjoint(body)
    assert arm | body == set(range(55))


def test_zero_pose_gives_cumulative_offsets(skeleton):
    positions = skeleton.forward_kinematics(skeleton.rest_theta, torch.zeros(3), torch.zeros(10))
    assert torch.allclose(positions, cumulative_offsets(skeleton), atol=1e-12)


def test_root_translation_shifts_everything(skeleton):
    t = torch.tensor([1.0, 2.0, 3.0])
    shifted = skeleton.forward_kinematics(skeleton.rest_theta, t)
    assert torch.allclose(shifted, cumulative_offsets(skeleton) + t, atol=1e-12)


def test_root_rotation_moves_child(skeleton):
    theta = skeleton.rest_theta.clone()
    theta[0] = matrix_to_sixd(axis_angle_to_matrix(torch.tensor([0.0, 0.0, math.pi / 2])))
    t = torch.tensor([0.5, 0.0, -0.5])
    positions = skeleton.forward_kinematics(theta, t)
    hip = skeleton.joint_names.index("left_hip")
    offset = skeleton.rest_offsets[hip]
    expected = torch.tensor([-offset[1], offset[0], offset[2]]) + t
    assert torch.allclose(positions[hip], expected, atol=1e-12)


def test_root_transform_equivariance(skeleton, generator):
    theta = random_theta(skeleton, generator)
    t = torch.randn(3, generator=generator)
    shape = 0.5 * torch.randn(10, generator=generator)
    rotation = axis_angle_to_matrix(torch.tensor([0.2, -0.7, 0.4]))
    shift = torch.tensor([0.3, -0.1, 0.8])

    base = skeleton.forward_kinematics(theta, t, shape)
    moved_theta = theta.clone()
    moved_theta[0] = matrix_to_sixd(rotation @ sixd_to_matrix(theta[0]))
    moved = skeleton.forward_kinematics(moved_theta, rotation @ t + shift, shape)
    assert torch.allclose(moved, base @ rotation.T + shift, atol=1e-6)


def test_zero_shape_scales_are_one(skeleton):
    assert torch.equal(skeleton.bone_scales(torch.zeros(10)), torch.ones(55))


def test_shape_validation(skeleton):
    skeleton.validate_shape(torch.zeros(10))
    with pytest.raises(DegenerateInputError):
        skeleton.validate_shape(torch.full((10,), 100.0))
    with pytest.raises(DimensionMismatchError):
        skeleton.bone_scales(torch.zeros(3))


def test_pose_shape_checked(skeleton):
    with pytest.raises(DimensionMismatchError):
        skeleton.forward_kinematics(torch.zeros(54, 6), torch.zeros(3))


def test_fk_gradients_match_finite_differences(skeleton, generator):
    theta = random_theta(skeleton, generator).requires_grad_()
    t = torch.randn(3, generator=generator, requires_grad=True)
    shape = (0.3 * torch.randn(10, generator=generator)).requires_grad_()
    hand = skeleton.hand_joints["right"][-1]

    def fn(theta, t, shape):
        return skeleton.forward_kinematics(theta, t, shape)[[0, 9, 21, hand]]

    assert gradient_check(fn, (theta, t, shape))


def test_hand_vertices_at_rest(skeleton):
    points = skeleton.hand_vertices(skeleton.rest_theta, torch.zeros(3), None, "left")
    joints = skeleton.anchor_joints["left"]
    expected = skeleton.canonical_positions[joints] + skeleton.anchor_offsets["left"]
    assert points.shape == (32, 3)
    assert torch.allclose(points, expected, atol=1e-12)


def test_hand_vertices_follow_translation(skeleton, generator):
    theta = random_theta(skeleton, generator)
    d = torch.tensor([0.1, -0.4, 2.0])
    base = skeleton.hand_vertices(theta, torch.zeros(3), None, "right")
    moved = skeleton.hand_vertices(theta, d, None, "right")
    assert torch.allclose(moved, base + d, atol=1e-12)


def test_wrist_rotation_moves_anchors_rigidly(skeleton):
    wrist = skeleton.template.wrist_joints["left"]
    theta = skeleton.rest_theta.clone()
    rotation = axis_angle_to_matrix(torch.tensor([math.pi / 4, 0.0, 0.0]))
    theta[wrist] = matrix_to_sixd(rotation)
    points = skeleton.hand_vertices(theta, torch.zeros(3), None, "left")

    wrist_position = skeleton.canonical_positions[wrist]
    rest = skeleton.canonical_positions[skeleton.anchor_joints["left"]] + skeleton.anchor_offsets["left"]
    expected = (rest - wrist_position) @ rotation.T + wrist_position
    assert torch.allclose(points, expected, atol=1e-12)


def test_hand_points_from_parent_match_full_fk(skeleton, generator):
    theta = random_theta(skeleton, generator)
    root = torch.tensor([0.0, 0.9, 0.0])
    positions, rotations = skeleton.forward_kinematics(theta, root, None, return_rotations=True)
    for hand in skeleton.hands():
        wrist = skeleton.template.wrist_joints[hand]
        parent = skeleton.parents[wrist]
        points = skeleton.hand_points_from_parent(
            rotations[parent], positions[wrist], theta[skeleton.hand_joints[hand]], skeleton.bone_scales(None), hand
        )
        assert torch.allclose(points, skeleton.anchor_points(positions, rotations, None, hand), atol=1e-12)


def test_split_merge_round_trip(skeleton, generator):
    theta = torch.randn(7, 55, 6, generator=generator)
    arm, body = skeleton.split_pose(theta)
    assert arm.shape[-2:] == (36, 6) and body.shape[-2:] == (19, 6)
    assert torch.equal(skeleton.merge_pose(arm, body), theta)
