"""Per-frame recovery of the object pose and hand parameters from the frame-0 grasp.

Each frame minimizes lambda_d*E_d + lambda_c*E_c + lambda_r*E_r over the object
rotation (as 6D), its translation and the finger rotations of the active hands.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from config import config
from intentmotion.kinematics.objects import centroid, grip_translation, transform_vertices
from intentmotion.kinematics.rotations import DTYPE, matrix_to_sixd, sixd_to_matrix
from intentmotion.kinematics.skeleton import Skeleton
from intentmotion.models.motion_sequence import MotionSequence
from intentmotion.models.solver_config import SolverConfig
from intentmotion.models.solver_report import FrameReport, SolverReport
from intentmotion.networks.layers import make_optimizer, set_learning_rate
from intentmotion.utils.exceptions import DimensionMismatchError, NoContactError, NoSwitchFoundError

logger = logging.getLogger(__name__)


@dataclass
class GraspReference:
    hand: str
    distances: torch.Tensor
    contact_mask: torch.Tensor
    tau: float

    @property
    def contact_count(self) -> int:
        return int(self.contact_mask.sum())


@dataclass
class HandFrame:
    """The part of a body pose a hand subtree hangs from, plus its synthesized rotations."""

    parent_rotation: torch.Tensor
    wrist_position: torch.Tensor
    hand_theta: torch.Tensor
    scales: torch.Tensor


@dataclass
class FrameSolution:
    rotation: torch.Tensor
    translation: torch.Tensor
    hand_theta: Dict[str, torch.Tensor]
    hand_points: Dict[str, torch.Tensor]
    e_d: float = 0.0
    e_c: float = 0.0
    e_r: float = 0.0
    total: float = 0.0
    iterations: int = 0
    converged: bool = True
    trace: List[float] = field(default_factory=list)


@dataclass
class SwitchResult:
    frame: int
    gap: float
    fallback: bool = False


def pairwise_distances(hand_points: torch.Tensor, object_points: torch.Tensor) -> torch.Tensor:
    return torch.linalg.vector_norm(hand_points[:, None, :] - object_points[None, :, :], dim=-1)


def build_reference(
    hand_points: torch.Tensor,
    vertices: torch.Tensor,
    rotation: torch.Tensor,
    translation: torch.Tensor,
    tau: float = config.CONTACT_THRESHOLD,
    hand: str = "right",
) -> GraspReference:
    distances = pairwise_distances(hand_points, transform_vertices(vertices, rotation, translation)).detach()
    contact_mask = distances < tau
    if not bool(contact_mask.any()):
        min_distance = float(distances.min())
        logger.error(f"No {hand}-hand contact under tau={tau}: closest pair at {min_distance:.4f} m")
        raise NoContactError(
            f"Initial {hand}-hand grasp has no vertex pair closer than {tau} m (closest {min_distance:.4f} m)",
            hand=hand,
            min_distance=min_distance,
        )
    return GraspReference(hand=hand, distances=distances, contact_mask=contact_mask, tau=tau)


def _check_reference(hand_points: torch.Tensor, vertices: torch.Tensor, ref: GraspReference):
    expected = tuple(ref.distances.shape)
    actual = (hand_points.shape[0], vertices.shape[0])
    if expected != actual:
        raise DimensionMismatchError(
            f"Reference is {expected} but got {actual[0]} hand points and {actual[1]} vertices",
            expected=expected,
            actual=actual,
        )


def energy_distance(hand_points, vertices, rotation, translation, ref: GraspReference) -> torch.Tensor:
    _check_reference(hand_points, vertices, ref)
    current = pairwise_distances(hand_points, transform_vertices(vertices, rotation, translation))
    return torch.linalg.vector_norm((current - ref.distances).flatten())


def energy_contact(hand_points, vertices, rotation, translation, ref: GraspReference) -> torch.Tensor:
    _check_reference(hand_points, vertices, ref)
    current = pairwise_distances(hand_points, transform_vertices(vertices, rotation, translation))
    return torch.linalg.vector_norm(current[ref.contact_mask])


def energy_regularizer(rotation, translation, hand_params, prev_rotation, prev_translation, prev_hand_params) -> torch.Tensor:
    """Norm of the stacked differences [vec(dR), dT, vec(dP)] to the previous frame."""
    blocks = [(rotation - prev_rotation).flatten(), (translation - prev_translation).flatten()]
    blocks.extend((current - previous).flatten() for current, previous in zip(hand_params, prev_hand_params))
    return torch.linalg.vector_norm(torch.cat(blocks))


def detect_offhand_switch(
    action: str,
    object_centroids: torch.Tensor,
    giving_centroids: torch.Tensor,
    receiving_centroids: torch.Tensor,
    proximity: float = config.SWITCH_PROXIMITY,
    allow_fallback: bool = True,
) -> Optional[SwitchResult]:
    """Frame where the object sits closest to the receiving hand relative to the giving one.

    Minimizes d_recv - d_give over frames. Frame 0 holds the initial grasp and is never
    a candidate. Ties go to the earlier frame.
    """
    if config.get_intent_config(action).get("family") != "offhand":
        return None

    d_give = torch.linalg.vector_norm(object_centroids - giving_centroids, dim=-1)
    d_recv = torch.linalg.vector_norm(object_centroids - receiving_centroids, dim=-1)
    gaps = (d_recv - d_give).detach().cpu().numpy()[1:]
    frame = int(np.argmin(gaps)) + 1
    gap = float(gaps[frame - 1])
    if gap <= proximity:
        return SwitchResult(frame=frame, gap=gap)

    if not allow_fallback:
        raise NoSwitchFoundError(f"Receiving hand never gets within {proximity} m of the giving one (closest gap {gap:.4f} m)", min_gap=gap)
    midpoint = object_centroids.shape[0] // 2
    logger.warning(f"No off-hand switch within {proximity} m (closest gap {gap:.4f} m), falling back to frame {midpoint}")
    return SwitchResult(frame=midpoint, gap=gap, fallback=True)


class ObjectOptimizer:
    def __init__(self, skeleton: Skeleton, settings: Optional[SolverConfig] = None):
        self.skeleton = skeleton
        self.settings = settings or SolverConfig()

    def hand_frames(self, theta: torch.Tensor, root: torch.Tensor, shape: torch.Tensor, hands: Sequence[str]) -> Dict[str, HandFrame]:
        positions, rotations = self.skeleton.forward_kinematics(theta, root, shape, return_rotations=True)
        scales = self.skeleton.bone_scales(shape)
        frames = {}
        for hand in hands:
            joints = self.skeleton.hand_joints[hand]
            wrist = joints[0]
            frames[hand] = HandFrame(
                parent_rotation=rotations[self.skeleton.parents[wrist]],
                wrist_position=positions[wrist],
                hand_theta=theta[joints],
                scales=scales,
            )
        return frames

    def hand_points(self, frame: HandFrame, hand_theta: torch.Tensor, hand: str) -> torch.Tensor:
        return self.skeleton.hand_points_from_parent(frame.parent_rotation, frame.wrist_position, hand_theta, frame.scales, hand)

    def grip_point(self, theta: torch.Tensor, root: torch.Tensor, shape: torch.Tensor, hand: str) -> Tuple[torch.Tensor, torch.Tensor]:
        """Middle fingertip anchor and finger direction of `hand`."""
        positions, rotations = self.skeleton.forward_kinematics(theta, root, shape, return_rotations=True)
        anchors = self.skeleton.anchor_points(positions, rotations, shape, hand)
        return anchors[self.skeleton.template.grip_anchor[hand]], self.skeleton.finger_direction(rotations, hand)

    def initial_solution(
        self,
        theta: torch.Tensor,
        root: torch.Tensor,
        shape: torch.Tensor,
        rotation: torch.Tensor,
        translation: torch.Tensor,
        vertices: torch.Tensor,
        hands: Sequence[str],
    ) -> Tuple[FrameSolution, Dict[str, GraspReference]]:
        solution = self.pose_solution(theta, root, shape, rotation, translation, hands)
        refs = {
            hand: build_reference(solution.hand_points[hand], vertices, rotation, translation, self.settings.tau, hand)
            for hand in hands
        }
        return solution, refs

    def pose_solution(
        self,
        theta: torch.Tensor,
        root: torch.Tensor,
        shape: torch.Tensor,
        rotation: torch.Tensor,
        translation: torch.Tensor,
        hands: Sequence[str],
    ) -> FrameSolution:
        """A given (not solved) object pose wrapped as a frame solution."""
        frames = self.hand_frames(theta, root, shape, hands)
        return FrameSolution(
            rotation=rotation.detach().clone(),
            translation=translation.detach().clone(),
            hand_theta={hand: frames[hand].hand_theta.detach().clone() for hand in hands},
            hand_points={hand: self.hand_points(frames[hand], frames[hand].hand_theta, hand).detach() for hand in hands},
        )

    def _objective(self, frames, refs, vertices, prev: FrameSolution, rot6d, translation, variables):
        rotation = sixd_to_matrix(rot6d)
        e_d = torch.zeros((), dtype=DTYPE)
        e_c = torch.zeros((), dtype=DTYPE)
        points = {}
        current_params, previous_params = [], []
        for hand, ref in refs.items():
            hand_theta = self._assemble(frames[hand], variables[hand])
            points[hand] = self.hand_points(frames[hand], hand_theta, hand)
            e_d = e_d + energy_distance(points[hand], vertices, rotation, translation, ref)
            e_c = e_c + energy_contact(points[hand], vertices, rotation, translation, ref)
            current_params.append(variables[hand])
            previous_params.append(self._free_part(prev.hand_theta[hand]))
        e_r = energy_regularizer(rotation, translation, current_params, prev.rotation, prev.translation, previous_params)
        total = self.settings.weighted_total(e_d, e_c, e_r)
        return total, e_d, e_c, e_r, rotation, points

    def _free_part(self, hand_theta: torch.Tensor) -> torch.Tensor:
        return hand_theta if self.settings.optimize_wrist else hand_theta[1:]

    def _assemble(self, frame: HandFrame, free: torch.Tensor) -> torch.Tensor:
        if self.settings.optimize_wrist:
            return free
        return torch.cat([frame.hand_theta[:1], free], dim=0)

    def solve_frame(
        self,
        theta: torch.Tensor,
        root: torch.Tensor,
        shape: torch.Tensor,
        prev: FrameSolution,
        refs: Dict[str, GraspReference],
        vertices: torch.Tensor,
    ) -> FrameSolution:
        s = self.settings
        frames = self.hand_frames(theta.detach(), root.detach(), shape, list(refs))
        rot6d = matrix_to_sixd(prev.rotation, check=False).clone().requires_grad_(True)
        translation = prev.translation.clone().requires_grad_(True)
        variables = {hand: self._free_part(prev.hand_theta[hand]).clone().requires_grad_(True) for hand in refs}
        params = [rot6d, translation, *variables.values()]
        optimizer = make_optimizer(params, s.lr)

        lr = s.lr
        best = None
        trace: List[float] = []
        last_total = None
        since_best = 0
        stalled = 0
        iterations = 0
        while True:
            optimizer.zero_grad()
            total, e_d, e_c, e_r, rotation, points = self._objective(frames, refs, vertices, prev, rot6d, translation, variables)
            value = float(total)
            if best is None or value < best["total"]:
                best = {
                    "total": value,
                    "e_d": float(e_d),
                    "e_c": float(e_c),
                    "e_r": float(e_r),
                    "rotation": rotation.detach().clone(),
                    "translation": translation.detach().clone(),
                    "hand_theta": {hand: self._assemble(frames[hand], variables[hand]).detach().clone() for hand in refs},
                    "hand_points": {hand: pts.detach().clone() for hand, pts in points.items()},
                }
                trace.append(value)
                since_best = 0
            else:
                since_best += 1
                if since_best >= s.lr_patience:
                    lr /= 2.0
                    set_learning_rate(optimizer, lr)
                    since_best = 0

            if iterations == 0 and value <= s.initial_tolerance:
                break
            if last_total is not None and abs(value - last_total) < s.stall_tolerance:
                stalled += 1
            else:
                stalled = 0
            last_total = value
            if stalled >= s.stall_iterations or iterations >= s.max_iters:
                break

            total.backward()
            optimizer.step()
            iterations += 1

        residual = s.lambda_distance * best["e_d"] + s.lambda_contact * best["e_c"]
        return FrameSolution(
            rotation=best["rotation"],
            translation=best["translation"],
            hand_theta=best["hand_theta"],
            hand_points=best["hand_points"],
            e_d=best["e_d"],
            e_c=best["e_c"],
            e_r=best["e_r"],
            total=best["total"],
            iterations=iterations,
            converged=residual <= s.residual_tolerance,
            trace=trace,
        )

    def solve_frames(
        self,
        theta: torch.Tensor,
        root: torch.Tensor,
        shape: torch.Tensor,
        start: FrameSolution,
        refs: Dict[str, GraspReference],
        vertices: torch.Tensor,
        first: int,
        stop: int,
    ) -> List[FrameSolution]:
        solutions = []
        prev = start
        for frame in range(first, stop):
            prev = self.solve_frame(theta[frame], root[frame], shape, prev, refs, vertices)
            logger.debug(f"Frame {frame}: total={prev.total:.3e} E_d={prev.e_d:.3e} after {prev.iterations} iterations")
            solutions.append(prev)
        return solutions

    def transfer_grasp(
        self,
        action: str,
        theta: torch.Tensor,
        root: torch.Tensor,
        shape: torch.Tensor,
        solutions: List[FrameSolution],
        vertices: torch.Tensor,
        giving: str,
        receiving: str,
    ) -> Tuple[List[FrameSolution], Optional[SwitchResult]]:
        """Hand the object from `giving` to `receiving` at the detected switch frame and re-solve after it."""
        frames = len(solutions)
        object_centroids = torch.stack([centroid(vertices, sol.rotation, sol.translation) for sol in solutions])
        giving_centroids = torch.stack([sol.hand_points[giving].mean(dim=0) for sol in solutions])
        receiving_points = []
        for frame in range(frames):
            hand_frame = self.hand_frames(theta[frame], root[frame], shape, [receiving])[receiving]
            receiving_points.append(self.hand_points(hand_frame, hand_frame.hand_theta, receiving).mean(dim=0))
        switch = detect_offhand_switch(
            action,
            object_centroids,
            giving_centroids,
            torch.stack(receiving_points),
            self.settings.switch_proximity,
            self.settings.allow_fallback,
        )
        if switch is None:
            return solutions, None

        at_switch = solutions[switch.frame]
        grip_point, direction = self.grip_point(theta[switch.frame], root[switch.frame], shape, receiving)
        translation = grip_translation(vertices, at_switch.rotation, grip_point, direction).detach()
        handover, refs = self.initial_solution(
            theta[switch.frame], root[switch.frame], shape, at_switch.rotation, translation, vertices, [receiving]
        )
        handover.e_d, handover.e_c, handover.e_r = at_switch.e_d, at_switch.e_c, at_switch.e_r
        handover.total = self.settings.weighted_total(handover.e_d, handover.e_c, handover.e_r)
        handover.iterations, handover.converged = at_switch.iterations, at_switch.converged
        logger.info(f"Object passes from the {giving} to the {receiving} hand at frame {switch.frame}")

        tail = self.solve_frames(theta, root, shape, handover, refs, vertices, switch.frame + 1, frames)
        return solutions[: switch.frame] + [handover] + tail, switch

    def optimize_sequence(self, sequence: MotionSequence, vertices: torch.Tensor) -> Tuple[MotionSequence, SolverReport]:
        logger.info(f"Solving object poses for {sequence.sequence_id} ({sequence.frame_count} frames)")
        theta = sequence.theta_tensor()
        root = sequence.root_tensor()
        shape = sequence.shape_tensor()
        hands = ["left", "right"] if sequence.acting_hand == "both" else [sequence.acting_hand]

        start, refs = self.initial_solution(
            theta[0], root[0], shape, sequence.object_rotation_tensor()[0], sequence.object_translation_tensor()[0], vertices, hands
        )
        solutions = [start] + self.solve_frames(theta, root, shape, start, refs, vertices, 1, sequence.frame_count)

        switch = None
        receiving = sequence.receiving_hand or ("left" if sequence.acting_hand == "right" else "right")
        if sequence.acting_hand != "both" and config.get_intent_config(sequence.action).get("family") == "offhand":
            solutions, switch = self.transfer_grasp(
                sequence.action, theta, root, shape, solutions, vertices, sequence.acting_hand, receiving
            )

        solved = self.apply_solutions(sequence, solutions, switch)
        report = self.build_report(sequence.sequence_id, solutions, switch)
        if not report.converged:
            logger.warning(f"{sequence.sequence_id}: frames {report.unconverged_frames()} did not converge")
        return solved, report

    def apply_solutions(self, sequence: MotionSequence, solutions: List[FrameSolution], switch: Optional[SwitchResult]) -> MotionSequence:
        theta = sequence.theta_tensor()
        for frame, solution in enumerate(solutions):
            for hand, hand_theta in solution.hand_theta.items():
                theta[frame, self.skeleton.hand_joints[hand]] = hand_theta
        return sequence.with_tensors(
            theta=theta,
            object_rotation=torch.stack([sol.rotation for sol in solutions]),
            object_translation=torch.stack([sol.translation for sol in solutions]),
            switch_frame=switch.frame if switch else sequence.switch_frame,
        )

    def build_report(self, sequence_id: str, solutions: List[FrameSolution], switch: Optional[SwitchResult]) -> SolverReport:
        frames = [
            FrameReport(
                frame=index,
                hand="+".join(sorted(solution.hand_theta)),
                e_d=solution.e_d,
                e_c=solution.e_c,
                e_r=solution.e_r,
                total=solution.total,
                iterations=solution.iterations,
                converged=solution.converged,
            )
            for index, solution in enumerate(solutions)
            if index > 0
        ]
        return SolverReport(
            sequence_id=sequence_id,
            tau=self.settings.tau,
            weights=self.settings.weights(),
            max_iters=self.settings.max_iters,
            frames=frames,
            switch_frame=switch.frame if switch else None,
            switch_fallback=bool(switch and switch.fallback),
        )
