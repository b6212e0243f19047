"""Rotation representations: axis-angle, rotation matrices and the continuous 6D form.

All functions are batched over leading dimensions and operate on float64 tensors.
A 6D vector is laid out as (a1, a2), the first two columns of a rotation matrix.
"""
import logging
from typing import Optional

import torch

from intentmotion.utils.exceptions import DegenerateInputError, InvalidRotationError, DimensionMismatchError

logger = logging.getLogger(__name__)

DTYPE = torch.float64
DEGENERATE_NORM = 1e-9
ORTHONORMAL_TOLERANCE = 1e-6
SMALL_ANGLE = 1e-4


def _check_last_dims(tensor: torch.Tensor, shape: tuple, name: str):
    if tuple(tensor.shape[-len(shape):]) != shape:
        raise DimensionMismatchError(
            f"{name} expects trailing shape {shape}, got {tuple(tensor.shape)}",
            expected=shape,
            actual=tuple(tensor.shape),
        )


def sixd_to_matrix(sixd: torch.Tensor) -> torch.Tensor:
    _check_last_dims(sixd, (6,), "sixd_to_matrix")
    a1 = sixd[..., 0:3]
    a2 = sixd[..., 3:6]

    a1_norm = torch.linalg.vector_norm(a1, dim=-1, keepdim=True)
    if bool((a1_norm < DEGENERATE_NORM).any()):
        raise DegenerateInputError("6D rotation has a zero first column", norm=float(a1_norm.min()))
    c1 = a1 / a1_norm

    projected = a2 - (c1 * a2).sum(dim=-1, keepdim=True) * c1
    projected_norm = torch.linalg.vector_norm(projected, dim=-1, keepdim=True)
    if bool((projected_norm < DEGENERATE_NORM).any()):
        raise DegenerateInputError("6D rotation columns are parallel or zero", norm=float(projected_norm.min()))
    c2 = projected / projected_norm
    c3 = torch.linalg.cross(c1, c2, dim=-1)

    return torch.stack([c1, c2, c3], dim=-1)


def orthonormality_error(matrix: torch.Tensor) -> torch.Tensor:
    identity = torch.eye(3, dtype=matrix.dtype, device=matrix.device)
    gram = matrix.transpose(-1, -2) @ matrix
    deviation = (gram - identity).abs().amax(dim=(-1, -2))
    det_deviation = (torch.linalg.det(matrix) - 1.0).abs()
    return torch.maximum(deviation, det_deviation)


def matrix_to_sixd(matrix: torch.Tensor, check: bool = True) -> torch.Tensor:
    _check_last_dims(matrix, (3, 3), "matrix_to_sixd")
    if check:
        error = orthonormality_error(matrix.detach())
        if bool((error > ORTHONORMAL_TOLERANCE).any()):
            raise InvalidRotationError(
                f"Matrix is not a rotation (deviation {float(error.max()):.3e})",
                deviation=float(error.max()),
            )
    return torch.cat([matrix[..., :, 0], matrix[..., :, 1]], dim=-1)


def _skew(vector: torch.Tensor) -> torch.Tensor:
    x, y, z = vector[..., 0], vector[..., 1], vector[..., 2]
    zero = torch.zeros_like(x)
    return torch.stack(
        [
            torch.stack([zero, -z, y], dim=-1),
            torch.stack([z, zero, -x], dim=-1),
            torch.stack([-y, x, zero], dim=-1),
        ],
        dim=-2,
    )


def axis_angle_to_matrix(axis_angle: torch.Tensor) -> torch.Tensor:
    """Rodrigues' formula, R = I + A K + B K^2 with K = skew(aa).

    A = sin(t)/t and B = (1 - cos t)/t^2 switch to their Taylor series near zero so
    the zero rotation and its gradient stay finite.
    """
    _check_last_dims(axis_angle, (3,), "axis_angle_to_matrix")
    theta_sq = (axis_angle * axis_angle).sum(dim=-1)
    small = theta_sq < SMALL_ANGLE ** 2
    safe_sq = torch.where(small, torch.ones_like(theta_sq), theta_sq)
    safe_theta = torch.sqrt(safe_sq)

    a = torch.where(small, 1.0 - theta_sq / 6.0, torch.sin(safe_theta) / safe_theta)
    b = torch.where(small, 0.5 - theta_sq / 24.0, (1.0 - torch.cos(safe_theta)) / safe_sq)

    k = _skew(axis_angle)
    identity = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device).expand_as(k)
    return identity + a[..., None, None] * k + b[..., None, None] * (k @ k)


def matrix_to_axis_angle(matrix: torch.Tensor) -> torch.Tensor:
    _check_last_dims(matrix, (3, 3), "matrix_to_axis_angle")
    cos_angle = ((matrix[..., 0, 0] + matrix[..., 1, 1] + matrix[..., 2, 2]) - 1.0) / 2.0
    angle = torch.arccos(cos_angle.clamp(-1.0, 1.0))
    vee = torch.stack(
        [
            matrix[..., 2, 1] - matrix[..., 1, 2],
            matrix[..., 0, 2] - matrix[..., 2, 0],
            matrix[..., 1, 0] - matrix[..., 0, 1],
        ],
        dim=-1,
    )
    sin_angle = torch.sin(angle)
    small = sin_angle.abs() < SMALL_ANGLE
    scale = torch.where(small, 0.5 + angle ** 2 / 12.0, angle / (2.0 * torch.where(small, torch.ones_like(sin_angle), sin_angle)))
    axis_angle = vee * scale[..., None]

    # near pi the antisymmetric part vanishes; recover the axis from the symmetric part
    near_pi = (angle > torch.pi - 1e-3)
    if bool(near_pi.any()):
        symmetric = (matrix + torch.eye(3, dtype=matrix.dtype, device=matrix.device)) / 2.0
        diag = torch.diagonal(symmetric, dim1=-2, dim2=-1).clamp(min=0.0)
        column = diag.argmax(dim=-1)
        axis = torch.gather(symmetric, -1, column[..., None, None].expand(*symmetric.shape[:-1], 1)).squeeze(-1)
        axis = axis / torch.linalg.vector_norm(axis, dim=-1, keepdim=True).clamp(min=DEGENERATE_NORM)
        ones = torch.ones_like(angle)
        sign = torch.where((axis * vee).sum(dim=-1) < 0, -ones, ones)
        axis_angle = torch.where(near_pi[..., None], axis * (angle * sign)[..., None], axis_angle)
    return axis_angle


def geodesic_angle(first: torch.Tensor, second: torch.Tensor) -> torch.Tensor:
    relative = first.transpose(-1, -2) @ second
    cos_angle = ((relative[..., 0, 0] + relative[..., 1, 1] + relative[..., 2, 2]) - 1.0) / 2.0
    return torch.arccos(cos_angle.clamp(-1.0, 1.0))


def random_rotation(count: Optional[int] = None, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Uniform rotations through normalized Gaussian quaternions."""
    shape = (4,) if count is None else (count, 4)
    quat = torch.randn(shape, dtype=DTYPE, generator=generator)
    quat = quat / torch.linalg.vector_norm(quat, dim=-1, keepdim=True)
    w, x, y, z = quat.unbind(-1)
    return torch.stack(
        [
            torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], dim=-1),
            torch.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], dim=-1),
            torch.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], dim=-1),
        ],
        dim=-2,
    )


def identity_sixd(*leading: int) -> torch.Tensor:
    sixd = torch.tensor([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], dtype=DTYPE)
    return sixd.expand(*leading, 6).clone() if leading else sixd.clone()
