"""Deterministic kinematic 2.5D simulator.

Loads scenario bundles, replaces the trained policy with a configurable
tracking model (first-order base lag, exponential end-effector convergence,
optional noise), executes atomic actions through primitive controllers, and
emits per-episode traces and metric reports. Everything downstream of
(scenario, seed, dt, fixtures) is bit-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .config import TrackingConfig
from .errors import (LocomanError, NoFeasibleGoal, NoPath, OracleFailure,
                     ParseError, ValidationError)
from .fusion import Detection, FusionConfig, InstanceGraph
from .geometry import (Pose, quat_from_axis_angle, quat_geodesic_distance,
                       quat_mul, quat_normalize, quat_slerp, matrix_to_quat,
                       quat_to_matrix, unit, vec3, wrap_angle)
from .grounding import (CameraModel, DepthImage, GroundingResult, ground_action)
from .navgrid import (GoalSearchConfig, OccupancyGrid, OCCUPIED, find_goal_pose,
                      footprint_clear, plan_path, project_waypoint)
from .planning import (ActionKind, AtomicAction, ConditionKind, GoalCondition,
                       ScriptedPlanner, SubtaskMonitor, TaskPlan, decompose,
                       monitor_step, report, validate_plan)
from .rewards import (ContactTimeline, RewardWeights, r_freq, r_gait,
                      r_track_xy, r_track_yaw, total_reward)
from .sampling import LocomotionCommand, episode_rng

BASE_STAND_HEIGHT = 0.35
BASE_FOOTPRINT_RADIUS = 0.30
NAV_GOAL_TOL = 0.15
ATTACH_TOLERANCE = 0.05
ORI_TOLERANCE = 0.35
PRE_CONTACT_OFFSET = 0.10  # meters backed off along the approach axis
NAV_TIMEOUT = 60.0
MANIP_TIMEOUT = 20.0

OBJECT_TYPES = ("rigid", "container", "articulated", "draggable")


# ---------------------------------------------------------------------------
# scenario schema
# ---------------------------------------------------------------------------

@dataclass
class SceneObject:
    id: str
    label: str
    type: str
    position: np.ndarray
    yaw: float = 0.0
    size: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.1]))
    attach_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dominant_axis: Optional[np.ndarray] = None
    surface_normal: Optional[np.ndarray] = None
    container_offset: Optional[np.ndarray] = None
    joint: Optional[dict] = None  # {value, min, max, goal} for articulated

    def pose(self) -> Pose:
        return Pose.from_xy_yaw(self.position[0], self.position[1], self.yaw,
                                z=self.position[2])

    def bbox(self, position: Optional[np.ndarray] = None):
        p = self.position if position is None else position
        half = self.size / 2.0
        return p - half, p + half

    def attach_point(self, position: Optional[np.ndarray] = None) -> np.ndarray:
        p = self.position if position is None else position
        return p + self.attach_offset


@dataclass
class MonitorSpec:
    name: str
    kind: str
    action: str
    object_id: Optional[str] = None
    other_id: Optional[str] = None
    point: Optional[list] = None
    threshold: float = 0.0


@dataclass
class Scenario:
    name: str
    instruction: str
    horizon: float
    seed: int
    robot_start: Pose
    terrain_height: float = 0.0
    static_obstacles: list = field(default_factory=list)  # (min, max) pairs
    objects: list[SceneObject] = field(default_factory=list)
    plan_fixture: list[dict] = field(default_factory=list)
    grounding_fixture: dict[int, dict] = field(default_factory=dict)
    monitors: list[MonitorSpec] = field(default_factory=list)

    def object_by_id(self, oid: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        raise ValidationError(f"unknown object id {oid!r}")

    def height_at(self, x: float, y: float) -> float:
        return self.terrain_height


def _vec(raw, where: str, n: int = 3) -> np.ndarray:
    try:
        v = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected {n} numbers, got {raw!r}") from None
    if v.shape != (n,):
        raise ValidationError(f"{where}: expected {n} numbers, got {raw!r}")
    return v


def scenario_from_dict(data: dict, where: str = "scenario") -> Scenario:
    try:
        name = data["name"]
        instruction = data["instruction"]
        horizon = float(data["horizon"])
        seed = int(data.get("seed", 0))
        start = data["robot_start"]
    except KeyError as exc:
        raise ValidationError(f"{where}: missing required field {exc}") from None
    if horizon <= 0:
        raise ValidationError(f"{where}.horizon: must be > 0")
    robot_start = Pose.from_xy_yaw(*_vec(start.get("position", [0, 0, 0]),
                                         f"{where}.robot_start.position")[:2],
                                   float(start.get("yaw", 0.0)),
                                   z=float(start.get("position", [0, 0, 0])[2]))

    obstacles = []
    for i, box in enumerate(data.get("static_obstacles", [])):
        obstacles.append((_vec(box["min"], f"{where}.static_obstacles[{i}].min"),
                          _vec(box["max"], f"{where}.static_obstacles[{i}].max")))

    objects = []
    seen_ids = set()
    for i, rec in enumerate(data.get("objects", [])):
        loc = f"{where}.objects[{i}]"
        oid = rec.get("id")
        if not oid:
            raise ValidationError(f"{loc}: missing id")
        if oid in seen_ids:
            raise ValidationError(f"{loc}: duplicate id {oid!r}")
        seen_ids.add(oid)
        otype = rec.get("type", "rigid")
        if otype not in OBJECT_TYPES:
            raise ValidationError(f"{loc}.type: {otype!r} not one of {OBJECT_TYPES}")
        joint = rec.get("joint")
        if otype == "articulated":
            if not joint:
                raise ValidationError(f"{loc}: articulated object needs a joint block")
            for key in ("value", "min", "max", "goal"):
                if key not in joint:
                    raise ValidationError(f"{loc}.joint: missing {key!r}")
        objects.append(SceneObject(
            id=oid,
            label=rec.get("label", oid),
            type=otype,
            position=_vec(rec["position"], f"{loc}.position"),
            yaw=float(rec.get("yaw", 0.0)),
            size=_vec(rec.get("size", [0.1, 0.1, 0.1]), f"{loc}.size"),
            attach_offset=_vec(rec.get("attach_offset", [0, 0, 0]), f"{loc}.attach_offset"),
            dominant_axis=(_vec(rec["dominant_axis"], f"{loc}.dominant_axis")
                           if "dominant_axis" in rec else None),
            surface_normal=(_vec(rec["surface_normal"], f"{loc}.surface_normal")
                            if "surface_normal" in rec else None),
            container_offset=(_vec(rec["container_offset"], f"{loc}.container_offset")
                              if "container_offset" in rec else None),
            joint=dict(joint) if joint else None))

    plan_fixture = list(data.get("plan", []))
    for i, rec in enumerate(plan_fixture):
        loc = f"{where}.plan[{i}]"
        if "kind" not in rec:
            raise ValidationError(f"{loc}: missing kind")
        tgt = rec.get("target")
        if tgt is not None and tgt not in seen_ids:
            raise ValidationError(f"{loc}.target: unknown object {tgt!r}")

    grounding = {}
    for key, rec in (data.get("grounding", {}) or {}).items():
        grounding[int(key)] = dict(rec)

    monitors = []
    for i, rec in enumerate(data.get("monitors", [])):
        loc = f"{where}.monitors[{i}]"
        for key in ("name", "kind", "action"):
            if key not in rec:
                raise ValidationError(f"{loc}: missing {key!r}")
        for ref_key in ("object", "other"):
            ref = rec.get(ref_key)
            if ref is not None and ref not in seen_ids:
                raise ValidationError(f"{loc}.{ref_key}: unknown object {ref!r}")
        monitors.append(MonitorSpec(
            name=rec["name"], kind=rec["kind"], action=rec["action"],
            object_id=rec.get("object"), other_id=rec.get("other"),
            point=rec.get("point"), threshold=float(rec.get("threshold", 0.0))))

    return Scenario(name=name, instruction=instruction, horizon=horizon, seed=seed,
                    robot_start=robot_start,
                    terrain_height=float(data.get("terrain_height", 0.0)),
                    static_obstacles=obstacles, objects=objects,
                    plan_fixture=plan_fixture, grounding_fixture=grounding,
                    monitors=monitors)


def scenario_to_dict(s: Scenario) -> dict:
    data = {
        "name": s.name,
        "instruction": s.instruction,
        "horizon": s.horizon,
        "seed": s.seed,
        "terrain_height": s.terrain_height,
        "robot_start": {"position": [float(c) for c in s.robot_start.position],
                        "yaw": float(s.robot_start.yaw())},
        "static_obstacles": [{"min": [float(c) for c in lo],
                              "max": [float(c) for c in hi]}
                             for lo, hi in s.static_obstacles],
        "objects": [],
        "plan": s.plan_fixture,
        "grounding": {str(k): v for k, v in s.grounding_fixture.items()},
        "monitors": [],
    }
    for obj in s.objects:
        rec = {"id": obj.id, "label": obj.label, "type": obj.type,
               "position": [float(c) for c in obj.position], "yaw": obj.yaw,
               "size": [float(c) for c in obj.size],
               "attach_offset": [float(c) for c in obj.attach_offset]}
        if obj.dominant_axis is not None:
            rec["dominant_axis"] = [float(c) for c in obj.dominant_axis]
        if obj.surface_normal is not None:
            rec["surface_normal"] = [float(c) for c in obj.surface_normal]
        if obj.container_offset is not None:
            rec["container_offset"] = [float(c) for c in obj.container_offset]
        if obj.joint is not None:
            rec["joint"] = obj.joint
        data["objects"].append(rec)
    for m in s.monitors:
        rec = {"name": m.name, "kind": m.kind, "action": m.action,
               "threshold": m.threshold}
        if m.object_id is not None:
            rec["object"] = m.object_id
        if m.other_id is not None:
            rec["other"] = m.other_id
        if m.point is not None:
            rec["point"] = m.point
        data["monitors"].append(rec)
    return data


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: scenario must be a mapping")
    return scenario_from_dict(data, where=str(path))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=True)


# ---------------------------------------------------------------------------
# world state
# ---------------------------------------------------------------------------

@dataclass
class WorldState:
    t: float
    base_pose: Pose
    base_vel: np.ndarray              # (vx, vy) base frame + (omega,)
    ee_pose: Pose
    gripper_closed: bool = False
    attachments: dict = field(default_factory=dict)  # obj id -> (carrier, rel Pose)
    object_poses: dict = field(default_factory=dict)
    joint_values: dict = field(default_factory=dict)


def make_world(scenario: Scenario) -> WorldState:
    base = scenario.robot_start
    base = Pose(vec3(base.position[0], base.position[1],
                     scenario.height_at(*base.position[:2]) + BASE_STAND_HEIGHT),
                base.orientation)
    ee = Pose(base.transform(vec3(0.3, 0.0, 0.2)), base.orientation)
    object_poses = {obj.id: obj.pose() for obj in scenario.objects}
    joint_values = {obj.id: float(obj.joint["value"])
                    for obj in scenario.objects if obj.joint is not None}
    return WorldState(t=0.0, base_pose=base, base_vel=np.zeros(3), ee_pose=ee,
                      object_poses=object_poses, joint_values=joint_values)


def step(world: WorldState, base_cmd: LocomotionCommand,
         ee_cmd: Optional[Pose], dt: float, tracking: TrackingConfig,
         rng: np.random.Generator, scenario: Scenario,
         grid: Optional[OccupancyGrid] = None) -> None:
    """Advance the world one tick in place."""
    cmd = base_cmd.as_array()
    if tracking.tau_base <= 0.0:
        world.base_vel = cmd.copy()
    else:
        alpha = 1.0 - np.exp(-dt / tracking.tau_base)
        world.base_vel = world.base_vel + alpha * (cmd - world.base_vel)

    vx, vy, w = world.base_vel
    yaw = world.base_pose.yaw()
    nx = world.base_pose.position[0] + (vx * np.cos(yaw) - vy * np.sin(yaw)) * dt
    ny = world.base_pose.position[1] + (vx * np.sin(yaw) + vy * np.cos(yaw)) * dt
    new_yaw = float(wrap_angle(yaw + w * dt))
    collided = grid is not None and not footprint_clear(grid, nx, ny,
                                                       BASE_FOOTPRINT_RADIUS)
    if collided:
        # terrain contact halts base motion for this tick
        world.base_vel = np.zeros(3)
    else:
        nz = scenario.height_at(nx, ny) + BASE_STAND_HEIGHT
        world.base_pose = Pose.from_xy_yaw(nx, ny, new_yaw, z=nz)

    if ee_cmd is not None:
        decay = float(np.exp(-tracking.ee_rate * dt))
        pos = ee_cmd.position + (world.ee_pose.position - ee_cmd.position) * decay
        ori = quat_slerp(world.ee_pose.orientation, ee_cmd.orientation, 1.0 - decay)
        if tracking.noise_pos > 0.0:
            pos = pos + rng.normal(0.0, tracking.noise_pos, size=3)
        if tracking.noise_ori > 0.0:
            axis = unit(rng.normal(size=3))
            angle = float(rng.normal(0.0, tracking.noise_ori))
            ori = quat_normalize(quat_mul(quat_from_axis_angle(axis, angle), ori))
        world.ee_pose = Pose(pos, ori)

    for oid, (carrier, rel) in world.attachments.items():
        anchor = world.ee_pose if carrier == "ee" else world.base_pose
        world.object_poses[oid] = anchor.compose(rel)

    world.t += dt


# ---------------------------------------------------------------------------
# scripted oracles
# ---------------------------------------------------------------------------

class ScriptedGrounding:
    """Grounding oracle driven by one precomputed result."""

    def __init__(self, result: Optional[GroundingResult]):
        self.result = result

    def ground(self, image, action_description: str) -> Optional[GroundingResult]:
        return self.result


def _monitor_from_spec(spec: MonitorSpec) -> SubtaskMonitor:
    cond = GoalCondition(
        kind=ConditionKind(spec.kind),
        object_id=spec.object_id,
        other_id=spec.other_id,
        point=tuple(spec.point) if spec.point is not None else None,
        threshold=spec.threshold)
    return SubtaskMonitor(name=spec.name, condition=cond,
                          action_kind=ActionKind(spec.action))


def _label_descriptor(label: str, dim: int = 16) -> np.ndarray:
    """Deterministic unit descriptor derived from the label text."""
    seed = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
    g = np.random.Generator(np.random.PCG64(seed))
    v = g.normal(size=dim)
    return v / np.linalg.norm(v)


def build_instance_graph(scenario: Scenario) -> tuple[InstanceGraph, dict[str, int]]:
    """Synthesize detections from scenario ground truth and fuse them."""
    graph = InstanceGraph(descriptor_dim=16, cfg=FusionConfig())
    node_of: dict[str, int] = {}
    for obj in scenario.objects:
        lo, hi = obj.bbox()
        corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                            for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        points = np.vstack([corners, obj.position])
        det = Detection(label=obj.label, descriptor=_label_descriptor(obj.label),
                        points=points)
        node_of[obj.id] = graph.ingest_detection(det)
    return graph, node_of


def build_occupancy_grid(scenario: Scenario, resolution: float = 0.1) -> OccupancyGrid:
    """Rasterize static obstacles; everything else starts Free (known poses)."""
    grid = OccupancyGrid(resolution=resolution, width=64, height=64,
                         origin_xy=(-3.2, -3.2))
    pts = [scenario.robot_start.position[:2]]
    for lo, hi in scenario.static_obstacles:
        pts += [lo[:2], hi[:2]]
    for obj in scenario.objects:
        pts.append(obj.position[:2])
    for p in pts:
        grid.ensure_contains(float(p[0]) - 2.0, float(p[1]) - 2.0)
        grid.ensure_contains(float(p[0]) + 2.0, float(p[1]) + 2.0)
    grid.cells[:] = 1  # FREE
    for lo, hi in scenario.static_obstacles:
        c0 = grid.world_to_cell(lo[0], lo[1])
        c1 = grid.world_to_cell(hi[0], hi[1])
        grid.cells[c0[1]:c1[1] + 1, c0[0]:c1[0] + 1] = OCCUPIED
    return grid


# ---------------------------------------------------------------------------
# episode execution
# ---------------------------------------------------------------------------

@dataclass
class ActionOutcome:
    index: int
    kind: str
    success: bool
    detail: str = ""


@dataclass
class MetricsReport:
    e_x: float = 0.0
    e_y: float = 0.0
    e_w: float = 0.0
    d_pos: float = 0.0
    d_ori: float = 0.0
    per_action: dict = field(default_factory=dict)
    overall: bool | float = False
    episodes: int = 1

    def to_dict(self) -> dict:
        return {
            "e_x": self.e_x, "e_y": self.e_y, "e_w": self.e_w,
            "e_x_x100": self.e_x * 100.0, "e_y_x100": self.e_y * 100.0,
            "e_w_x100": self.e_w * 100.0,
            "d_pos": self.d_pos, "d_ori": self.d_ori,
            "per_action": self.per_action,
            "overall": self.overall,
            "episodes": self.episodes,
        }


@dataclass
class EpisodeResult:
    trace: list[dict]
    monitors: list[SubtaskMonitor]
    outcomes: list[ActionOutcome]
    metrics: MetricsReport


TRACE_COLUMNS = [
    "t", "action_index", "base_x", "base_y", "base_yaw",
    "cmd_vx", "act_vx", "cmd_vy", "act_vy", "cmd_w", "act_w",
    "ee_err_pos", "ee_err_ori",
    "r_track_xy", "r_track_yaw", "r_gait", "r_freq", "total_stage1",
]


class EpisodeRunner:
    """Owns one episode: world, grid, graph, monitors, trace, metrics."""

    def __init__(self, scenario: Scenario, dt: float = 0.02,
                 tracking: TrackingConfig | None = None,
                 master_seed: Optional[int] = None, episode_index: int = 0,
                 goal_cfg: GoalSearchConfig | None = None):
        self.scenario = scenario
        self.dt = dt
        self.tracking = tracking or TrackingConfig()
        seed = scenario.seed if master_seed is None else master_seed
        self.rng = episode_rng(seed, episode_index)
        self.goal_cfg = goal_cfg or GoalSearchConfig()
        self.world = make_world(scenario)
        self.grid = build_occupancy_grid(scenario)
        self.graph, self.node_of = build_instance_graph(scenario)
        self.object_of = {nid: oid for oid, nid in self.node_of.items()}
        self.monitors = [_monitor_from_spec(m) for m in scenario.monitors]
        self.trace: list[dict] = []
        self.outcomes: list[ActionOutcome] = []
        self.timeline = ContactTimeline()
        self._err_sums = np.zeros(3)
        self._err_ticks = 0
        self._ee_err_sums = np.zeros(2)
        self._ee_ticks = 0
        self._action_index = -1
        self._current_ee_cmd: Optional[Pose] = None

    # -- plan ------------------------------------------------------------

    def build_plan(self) -> TaskPlan:
        records = []
        for rec in self.scenario.plan_fixture:
            out = dict(rec)
            if "target" in out:
                out["target"] = self.node_of[out["target"]]
            records.append(out)
        planner = ScriptedPlanner.from_records({self.scenario.instruction: records})
        return decompose(planner, self.scenario.instruction, self.graph)

    # -- stepping --------------------------------------------------------

    def tick(self, base_cmd: LocomotionCommand, ee_cmd: Optional[Pose]) -> None:
        self._current_ee_cmd = ee_cmd
        step(self.world, base_cmd, ee_cmd, self.dt, self.tracking, self.rng,
             self.scenario, self.grid)
        monitor_step(self.monitors, self.world, self.world.t)
        self._record(base_cmd, ee_cmd)

    def _record(self, base_cmd: LocomotionCommand, ee_cmd: Optional[Pose]) -> None:
        w = self.world
        cmd = base_cmd.as_array()
        err = np.abs(cmd - w.base_vel)
        command_active = bool(np.any(cmd != 0.0))
        if command_active:
            self._err_sums += err
            self._err_ticks += 1
        if ee_cmd is not None:
            ee_pos_err = float(np.linalg.norm(w.ee_pose.position - ee_cmd.position))
            ee_ori_err = quat_geodesic_distance(w.ee_pose.orientation,
                                                ee_cmd.orientation)
            self._ee_err_sums += (ee_pos_err, ee_ori_err)
            self._ee_ticks += 1
        else:
            ee_pos_err = ee_ori_err = 0.0

        # synthetic trot clocked at 2 Hz while the base moves, stance otherwise
        moving = float(np.hypot(w.base_vel[0], w.base_vel[1])) > 0.05
        if moving:
            phase = (w.t * 2.0) % 1.0
            diag_a = phase < 0.5
            contacts = {"FL": diag_a, "RR": diag_a, "FR": not diag_a, "RL": not diag_a}
        else:
            contacts = {leg: True for leg in ("FL", "FR", "RL", "RR")}
        self.timeline.update(contacts, self.dt, w.t)

        terms = {
            "track_xy": r_track_xy(cmd[:2], w.base_vel[:2]),
            "track_yaw": r_track_yaw(cmd[2], w.base_vel[2]),
            "gait": r_gait(self.timeline),
            "freq": r_freq(self.timeline),
        }
        self.trace.append({
            "t": w.t, "action_index": self._action_index,
            "base_x": w.base_pose.position[0], "base_y": w.base_pose.position[1],
            "base_yaw": w.base_pose.yaw(),
            "cmd_vx": cmd[0], "act_vx": w.base_vel[0],
            "cmd_vy": cmd[1], "act_vy": w.base_vel[1],
            "cmd_w": cmd[2], "act_w": w.base_vel[2],
            "ee_err_pos": ee_pos_err, "ee_err_ori": ee_ori_err,
            "r_track_xy": terms["track_xy"], "r_track_yaw": terms["track_yaw"],
            "r_gait": terms["gait"], "r_freq": terms["freq"],
            "total_stage1": total_reward(1, terms),
        })

    def time_left(self) -> float:
        return self.scenario.horizon - self.world.t

    # -- primitive controllers -------------------------------------------

    def _follow_path(self, path_points: list[np.ndarray], goal_xy: np.ndarray,
                     deadline: float) -> bool:
        """Pure-pursuit style follower; True when within goal tolerance."""
        idx = 0
        while self.world.t < deadline:
            pos = self.world.base_pose.position[:2]
            if float(np.linalg.norm(pos - goal_xy)) <= NAV_GOAL_TOL:
                self.tick(LocomotionCommand(0, 0, 0), None)
                return True
            while (idx < len(path_points) - 1
                   and float(np.linalg.norm(path_points[idx] - pos)) < 0.3):
                idx += 1
            target = path_points[idx]
            yaw = self.world.base_pose.yaw()
            heading = np.arctan2(target[1] - pos[1], target[0] - pos[0])
            err = float(wrap_angle(heading - yaw))
            w_cmd = float(np.clip(2.0 * err, -1.0, 1.0))
            vx = 0.8 if abs(err) < 0.5 else 0.0
            self.tick(LocomotionCommand(vx, 0.0, w_cmd), None)
        return False

    def _navigate_to(self, waypoint: np.ndarray, face_toward: np.ndarray,
                     timeout: float) -> tuple[bool, str]:
        deadline = min(self.world.t + timeout, self.scenario.horizon)
        obstacles = [ (lo, hi) for lo, hi in self.scenario.static_obstacles ]
        for obj in self.scenario.objects:
            if obj.id in self.world.attachments:
                continue
            obstacles.append(obj.bbox(self.world.object_poses[obj.id].position))
        try:
            goal = find_goal_pose(self.grid, waypoint, obstacles, self.goal_cfg,
                                  face_toward)
        except NoFeasibleGoal as exc:
            return False, str(exc)
        start_cell = self.grid.ensure_contains(*self.world.base_pose.position[:2])
        goal_cell = self.grid.ensure_contains(*goal.position[:2])
        try:
            cells = plan_path(self.grid, start_cell, goal_cell,
                              inflation=self.goal_cfg.robot_inflation)
        except NoPath as exc:
            return False, str(exc)
        points = [self.grid.cell_center(cx, cy) for cx, cy in cells]
        points.append(goal.position[:2])
        ok = self._follow_path(points, goal.position[:2], deadline)
        return ok, "" if ok else "navigation timeout"

    def _move_ee_to(self, target: Pose, deadline: float,
                    pos_tol: float = 0.01) -> bool:
        while self.world.t < deadline:
            self.tick(LocomotionCommand(0, 0, 0), target)
            close = (float(np.linalg.norm(self.world.ee_pose.position
                                          - target.position)) <= pos_tol
                     and quat_geodesic_distance(self.world.ee_pose.orientation,
                                                target.orientation) <= 0.02)
            if close:
                return True
        return False

    def _ground_target(self, action_index: int, obj: SceneObject) -> Pose:
        """Run the grounding pipeline against a synthetic wrist camera view."""
        fixture = self.scenario.grounding_fixture.get(action_index, {})
        offset = np.asarray(fixture.get("offset", [0.0, 0.0, 0.0]), dtype=float)
        true_attach = obj.attach_point(self.world.object_poses[obj.id].position)
        detected = true_attach + offset

        # camera looks at the true attach point from 0.6 m toward the robot
        toward_robot = self.world.base_pose.position - true_attach
        toward_robot[2] = abs(toward_robot[2]) + 0.4
        cam_pos = true_attach + 0.6 * unit(toward_robot)
        z_axis = unit(true_attach - cam_pos)
        x_ref = np.array([1.0, 0.0, 0.0])
        if abs(float(np.dot(x_ref, z_axis))) > 0.95:
            x_ref = np.array([0.0, 1.0, 0.0])
        x_axis = unit(x_ref - np.dot(x_ref, z_axis) * z_axis)
        y_axis = np.cross(z_axis, x_axis)
        cam_world = Pose(cam_pos, matrix_to_quat(np.column_stack([x_axis, y_axis, z_axis])))
        cam_in_base = self.world.base_pose.inverse().compose(cam_world)

        cam = CameraModel(fx=120.0, fy=120.0, cx=48.0, cy=48.0,
                          width=96, height=96, extrinsic=cam_in_base)
        p_cam = cam_world.inverse_transform(detected)
        if p_cam[2] <= 0.05:
            raise OracleFailure("detected contact point behind the wrist camera")
        pixel = cam.project(p_cam)
        depth = DepthImage.constant(96, 96, float(p_cam[2]))

        base_rot_t = self.world.base_pose.rotation().T
        axis = fixture.get("dominant_axis",
                           obj.dominant_axis.tolist() if obj.dominant_axis is not None else None)
        normal = fixture.get("surface_normal",
                             obj.surface_normal.tolist() if obj.surface_normal is not None else None)
        result = GroundingResult(
            contact_pixel=pixel,
            dominant_axis=(base_rot_t @ np.asarray(axis, dtype=float)
                           if axis is not None else None),
            surface_normal=(base_rot_t @ np.asarray(normal, dtype=float)
                            if normal is not None else None))
        default_approach = base_rot_t @ np.array([0.0, 0.0, -1.0])
        return ground_action(ScriptedGrounding(result), cam, depth, None,
                             "grounding", default_approach=default_approach)

    # -- atomic actions --------------------------------------------------

    def _do_navigate(self, action: AtomicAction) -> tuple[bool, str]:
        return self._navigate_to(action.waypoint, action.waypoint,
                                 timeout=NAV_TIMEOUT)

    def _do_pick(self, index: int, action: AtomicAction) -> tuple[bool, str]:
        deadline = min(self.world.t + MANIP_TIMEOUT, self.scenario.horizon)
        obj = self.scenario.object_by_id(self.object_of[action.target_instance])
        try:
            target_base = self._ground_target(index, obj)
        except LocomanError as exc:
            return False, f"grounding failed: {exc}"
        target_world = self.world.base_pose.compose(target_base)
        approach = quat_to_matrix(target_world.orientation)[:, 2]
        pre_contact = Pose(target_world.position - PRE_CONTACT_OFFSET * approach,
                           target_world.orientation)
        if not self._move_ee_to(pre_contact, deadline):
            return False, "pre-contact alignment timeout"
        if not self._move_ee_to(target_world, deadline):
            return False, "approach timeout"
        self.world.gripper_closed = True
        true_attach = obj.attach_point(self.world.object_poses[obj.id].position)
        pos_err = float(np.linalg.norm(self.world.ee_pose.position - true_attach))
        ori_err = quat_geodesic_distance(self.world.ee_pose.orientation,
                                         target_world.orientation)
        if pos_err > ATTACH_TOLERANCE or ori_err > ORI_TOLERANCE:
            return False, f"grasp missed: pos_err={pos_err:.3f} ori_err={ori_err:.3f}"
        rel = self.world.ee_pose.inverse().compose(self.world.object_poses[obj.id])
        self.world.attachments[obj.id] = ("ee", rel)
        self.tick(LocomotionCommand(0, 0, 0), self.world.ee_pose)
        return True, ""

    def _do_place(self, action: AtomicAction) -> tuple[bool, str]:
        deadline = min(self.world.t + MANIP_TIMEOUT, self.scenario.horizon)
        carried = [oid for oid, (carrier, _) in self.world.attachments.items()
                   if carrier == "ee"]
        if not carried:
            return False, "nothing attached to place"
        container = self.scenario.object_by_id(self.object_of[action.target_instance])
        offset = (container.container_offset if container.container_offset is not None
                  else vec3(0.0, 0.0, container.size[2] / 2.0 + 0.05))
        drop_point = self.world.object_poses[container.id].position + offset
        hover = Pose(drop_point + vec3(0, 0, 0.15), self.world.ee_pose.orientation)
        if not self._move_ee_to(hover, deadline, pos_tol=0.02):
            return False, "hover timeout"
        self.world.gripper_closed = False
        for oid in carried:
            del self.world.attachments[oid]
            pose = self.world.object_poses[oid]
            self.world.object_poses[oid] = Pose(drop_point.copy(), pose.orientation)
        self.tick(LocomotionCommand(0, 0, 0), None)
        return True, ""

    def _do_push_pull(self, action: AtomicAction) -> tuple[bool, str]:
        deadline = min(self.world.t + MANIP_TIMEOUT, self.scenario.horizon)
        obj = self.scenario.object_by_id(self.object_of[action.target_instance])
        if obj.joint is None:
            return False, f"object {obj.id!r} is not articulated"
        handle = obj.attach_point(self.world.object_poses[obj.id].position)
        grasp = Pose(handle, self.world.ee_pose.orientation)
        if not self._move_ee_to(grasp, deadline, pos_tol=0.02):
            return False, "handle approach timeout"
        goal = float(obj.joint["goal"])
        lo, hi = float(obj.joint["min"]), float(obj.joint["max"])
        rate = 0.4  # joint units per second
        while self.world.t < deadline:
            value = self.world.joint_values[obj.id]
            delta = np.clip(goal - value, -rate * self.dt, rate * self.dt)
            self.world.joint_values[obj.id] = float(np.clip(value + delta, lo, hi))
            self.tick(LocomotionCommand(0, 0, 0), grasp)
            if abs(self.world.joint_values[obj.id] - goal) < 1e-9:
                return True, ""
        return False, "articulation timeout"

    def _do_drag(self, action: AtomicAction) -> tuple[bool, str]:
        target_id = (self.object_of[action.target_instance]
                     if action.target_instance is not None else None)
        if target_id is None:
            draggables = [o for o in self.scenario.objects if o.type == "draggable"]
            if not draggables:
                return False, "no draggable object in scene"
            target_id = draggables[0].id
        obj = self.scenario.object_by_id(target_id)
        obj_pos = self.world.object_poses[obj.id].position
        ok, why = self._navigate_to(obj_pos, obj_pos, timeout=NAV_TIMEOUT)
        if not ok:
            return False, f"approach failed: {why}"
        rel = self.world.base_pose.inverse().compose(self.world.object_poses[obj.id])
        self.world.attachments[obj.id] = ("base", rel)
        ok, why = self._navigate_to(action.waypoint, action.waypoint,
                                    timeout=NAV_TIMEOUT)
        del self.world.attachments[obj.id]
        if not ok:
            return False, f"drag transit failed: {why}"
        return True, ""

    def execute_action(self, index: int, action: AtomicAction) -> ActionOutcome:
        self._action_index = index
        try:
            if action.kind is ActionKind.NAVIGATE:
                ok, detail = self._do_navigate(action)
            elif action.kind is ActionKind.PICK:
                ok, detail = self._do_pick(index, action)
            elif action.kind is ActionKind.PLACE:
                ok, detail = self._do_place(action)
            elif action.kind is ActionKind.PUSH_PULL:
                ok, detail = self._do_push_pull(action)
            elif action.kind is ActionKind.DRAG:
                ok, detail = self._do_drag(action)
            else:
                ok, detail = False, f"unknown action kind {action.kind}"
        except LocomanError as exc:
            # oracle/geometry failures are recorded, never abort the episode
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        return ActionOutcome(index=index, kind=action.kind.value, success=ok,
                             detail=detail)

    # -- episode ---------------------------------------------------------

    def run(self) -> EpisodeResult:
        plan = self.build_plan()
        problem = validate_plan(plan, self.graph)
        if problem is not None:
            raise ValidationError(f"plan fixture invalid: {problem}")
        for i, action in enumerate(plan.actions):
            if self.time_left() <= 0.0:
                self.outcomes.append(ActionOutcome(i, action.kind.value, False,
                                                   "horizon exhausted"))
                continue
            self.outcomes.append(self.execute_action(i, action))
        return EpisodeResult(trace=self.trace, monitors=self.monitors,
                             outcomes=self.outcomes, metrics=self._metrics())

    def _metrics(self) -> MetricsReport:
        per_action, overall = report(self.monitors)
        err = (self._err_sums / self._err_ticks) if self._err_ticks else np.zeros(3)
        ee = (self._ee_err_sums / self._ee_ticks) if self._ee_ticks else np.zeros(2)
        return MetricsReport(
            e_x=float(err[0]), e_y=float(err[1]), e_w=float(err[2]),
            d_pos=float(ee[0]), d_ori=float(ee[1]),
            per_action={k: {"completed": v.completed, "total": v.total,
                            "rate": v.rate} for k, v in sorted(per_action.items())},
            overall=overall, episodes=1)


def run_episode(scenario: Scenario, dt: float = 0.02,
                tracking: TrackingConfig | None = None,
                master_seed: Optional[int] = None,
                episode_index: int = 0) -> EpisodeResult:
    runner = EpisodeRunner(scenario, dt=dt, tracking=tracking,
                           master_seed=master_seed, episode_index=episode_index)
    return runner.run()


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Fold per-episode reports: mean errors, pooled per-action rates."""
    if not reports:
        raise ValueError("need at least one report")
    per_action: dict[str, dict] = {}
    for rep in reports:
        for kind, entry in rep.per_action.items():
            agg = per_action.setdefault(kind, {"completed": 0, "total": 0})
            agg["completed"] += entry["completed"]
            agg["total"] += entry["total"]
    for entry in per_action.values():
        entry["rate"] = entry["completed"] / entry["total"] if entry["total"] else 0.0
    n = len(reports)
    return MetricsReport(
        e_x=sum(r.e_x for r in reports) / n,
        e_y=sum(r.e_y for r in reports) / n,
        e_w=sum(r.e_w for r in reports) / n,
        d_pos=sum(r.d_pos for r in reports) / n,
        d_ori=sum(r.d_ori for r in reports) / n,
        per_action=dict(sorted(per_action.items())),
        overall=sum(1 for r in reports if r.overall) / n,
        episodes=n)


# ---------------------------------------------------------------------------
# artifact export
# ---------------------------------------------------------------------------

def write_trace_csv(trace: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in trace:
            out = {}
            for k in TRACE_COLUMNS:
                out[k] = row[k] if k == "action_index" else repr(float(row[k]))
            writer.writerow(out)


def write_report(result_metrics: MetricsReport, path,
                 extra: Optional[dict] = None) -> None:
    payload = result_metrics.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
