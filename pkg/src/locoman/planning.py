"""Task decomposition, plan validation, and subtask goal monitoring.

A plan is an ordered list of atomic actions (navigate, pick, place,
push/pull, drag) produced by a planner oracle from an instruction and the
instance-graph summary. Subtask monitors latch once their goal condition
holds and never revert within an episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

import numpy as np

from .errors import OracleFailure, UnknownObject
from .fusion import InstanceGraph


class ActionKind(Enum):
    NAVIGATE = "navigate"
    PICK = "pick"
    PLACE = "place"
    PUSH_PULL = "push_pull"
    DRAG = "drag"


@dataclass
class AtomicAction:
    kind: ActionKind
    description: str
    target_instance: Optional[int] = None
    waypoint: Optional[np.ndarray] = None  # world frame

    def __post_init__(self):
        if self.waypoint is not None:
            self.waypoint = np.asarray(self.waypoint, dtype=float)


@dataclass
class TaskPlan:
    instruction: str
    actions: list[AtomicAction]


@dataclass(frozen=True)
class InvalidPlan:
    action_index: int
    reason: str

    def __str__(self):
        return f"action {self.action_index}: {self.reason}"


class PlannerOracle(Protocol):
    def plan(self, instruction: str, graph_summary: list[dict]) -> Optional[TaskPlan]: ...


class ScriptedPlanner:
    """Planner oracle backed by a fixture mapping instructions to plans."""

    def __init__(self, fixtures: dict[str, TaskPlan]):
        self.fixtures = fixtures

    def plan(self, instruction: str, graph_summary: list[dict]) -> Optional[TaskPlan]:
        return self.fixtures.get(instruction)

    @staticmethod
    def from_records(records: dict[str, list[dict]]) -> "ScriptedPlanner":
        fixtures = {}
        for instruction, actions in records.items():
            fixtures[instruction] = TaskPlan(instruction, [action_from_record(a) for a in actions])
        return ScriptedPlanner(fixtures)


def action_from_record(rec: dict) -> AtomicAction:
    return AtomicAction(
        kind=ActionKind(rec["kind"]),
        description=rec.get("description", ""),
        target_instance=rec.get("target"),
        waypoint=np.asarray(rec["waypoint"], dtype=float) if "waypoint" in rec else None)


def action_to_record(action: AtomicAction) -> dict:
    rec = {"kind": action.kind.value, "description": action.description}
    if action.target_instance is not None:
        rec["target"] = action.target_instance
    if action.waypoint is not None:
        rec["waypoint"] = [float(c) for c in action.waypoint]
    return rec


# spatial-displacement actions must carry a waypoint; object-centric ones a target
_NEEDS_WAYPOINT = {ActionKind.NAVIGATE, ActionKind.DRAG}
_NEEDS_TARGET = {ActionKind.PICK, ActionKind.PLACE, ActionKind.PUSH_PULL}


def validate_plan(plan: TaskPlan, graph: InstanceGraph) -> Optional[InvalidPlan]:
    """None when valid, else the first violation with its action index."""
    if not plan.actions:
        return InvalidPlan(0, "plan is empty")
    for i, action in enumerate(plan.actions):
        if action.kind in _NEEDS_WAYPOINT and action.waypoint is None:
            return InvalidPlan(i, f"{action.kind.value} missing waypoint")
        if action.kind in _NEEDS_TARGET and action.target_instance is None:
            return InvalidPlan(i, f"{action.kind.value} missing target instance")
        if action.target_instance is not None and action.target_instance not in graph.nodes:
            return InvalidPlan(i, f"unknown instance {action.target_instance}")
    return None


def decompose(oracle: PlannerOracle, instruction: str, graph: InstanceGraph) -> TaskPlan:
    if not instruction.strip():
        raise OracleFailure("empty instruction")
    plan = oracle.plan(instruction, graph.graph_summary())
    if plan is None:
        raise OracleFailure(f"planner produced no plan for {instruction!r}")
    problem = validate_plan(plan, graph)
    if problem is not None:
        raise OracleFailure(f"invalid plan: {problem}")
    for i, action in enumerate(plan.actions):
        if not action.description.strip():
            raise OracleFailure(f"action {i} missing description")
    return plan


# ---------------------------------------------------------------------------
# goal conditions & monitors
# ---------------------------------------------------------------------------

class ConditionKind(Enum):
    ROBOT_NEAR = "robot_near"
    OBJECT_NEAR = "object_near"
    RELATIVE_POSE = "relative_pose"
    ATTACHED = "attached"
    DETACHED = "detached"
    JOINT_OPEN = "joint_open"
    JOINT_CLOSED = "joint_closed"


@dataclass(frozen=True)
class GoalCondition:
    kind: ConditionKind
    object_id: Optional[str] = None
    other_id: Optional[str] = None
    point: Optional[tuple[float, float, float]] = None
    threshold: float = 0.0  # radius / max distance / joint threshold

    def __post_init__(self):
        if self.kind in (ConditionKind.ROBOT_NEAR, ConditionKind.OBJECT_NEAR,
                         ConditionKind.RELATIVE_POSE) and self.threshold <= 0.0:
            raise ValueError(f"{self.kind.value} needs a positive threshold")


@dataclass
class SubtaskMonitor:
    name: str
    condition: GoalCondition
    completed: bool = False
    completion_time: Optional[float] = None
    action_kind: Optional[ActionKind] = None  # which per-action bucket this counts in


def _object_position(world, object_id: str) -> np.ndarray:
    pose = world.object_poses.get(object_id)
    if pose is None:
        raise UnknownObject(f"no object {object_id!r} in world state")
    return pose.position


def condition_holds(cond: GoalCondition, world) -> bool:
    k = cond.kind
    if k is ConditionKind.ROBOT_NEAR:
        d = np.linalg.norm(world.base_pose.position[:2] - np.asarray(cond.point[:2]))
        return d <= cond.threshold
    if k is ConditionKind.OBJECT_NEAR:
        p = _object_position(world, cond.object_id)
        return float(np.linalg.norm(p[:2] - np.asarray(cond.point[:2]))) <= cond.threshold
    if k is ConditionKind.RELATIVE_POSE:
        pa = _object_position(world, cond.object_id)
        pb = _object_position(world, cond.other_id)
        return float(np.linalg.norm(pa - pb)) <= cond.threshold
    if k is ConditionKind.ATTACHED:
        return cond.object_id in world.attachments
    if k is ConditionKind.DETACHED:
        return cond.object_id not in world.attachments
    if k is ConditionKind.JOINT_OPEN:
        value = world.joint_values.get(cond.object_id)
        if value is None:
            raise UnknownObject(f"no articulation {cond.object_id!r} in world state")
        return value >= cond.threshold
    if k is ConditionKind.JOINT_CLOSED:
        value = world.joint_values.get(cond.object_id)
        if value is None:
            raise UnknownObject(f"no articulation {cond.object_id!r} in world state")
        return value <= cond.threshold
    raise ValueError(f"unhandled condition kind {k}")


def monitor_step(monitors: list[SubtaskMonitor], world, t: float) -> None:
    """Latch every unmet monitor whose condition now holds. In place, monotone."""
    for m in monitors:
        if m.completed:
            continue
        if condition_holds(m.condition, world):
            m.completed = True
            m.completion_time = t


@dataclass
class ActionReport:
    completed: int
    total: int

    @property
    def rate(self) -> float:
        return self.completed / self.total if self.total else 0.0


def report(monitors: list[SubtaskMonitor]) -> tuple[dict[str, ActionReport], bool]:
    """Per-action-kind success map plus the overall conjunction."""
    buckets: dict[str, ActionReport] = {}
    for m in monitors:
        key = m.action_kind.value if m.action_kind else m.name
        entry = buckets.setdefault(key, ActionReport(0, 0))
        entry.total += 1
        if m.completed:
            entry.completed += 1
    overall = all(m.completed for m in monitors)
    return buckets, overall


def export_report(monitors: list[SubtaskMonitor]) -> str:
    buckets, overall = report(monitors)
    payload = {
        "overall": overall,
        "per_action": {k: {"completed": v.completed, "total": v.total,
                           "rate": v.rate} for k, v in sorted(buckets.items())},
        "monitors": [{"name": m.name, "completed": m.completed,
                      "completion_time": m.completion_time} for m in monitors],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
