"""Instance-level semantic graph built by fusing per-frame detections.

Two detections refer to the same object when their descriptors' cosine
similarity exceeds tau_sem AND the fraction of the incoming detection's
points with a nearest neighbor in the node within radius epsilon exceeds
tau_geo (both strict inequalities, thresholds default 0.8).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import UsageError


@dataclass(frozen=True)
class FusionConfig:
    tau_sem: float = 0.8
    tau_geo: float = 0.8
    epsilon: float = 0.05          # NN radius, meters
    downsample_voxel: float = 0.02  # meters

    def __post_init__(self):
        if not (0.0 < self.tau_sem <= 1.0 and 0.0 < self.tau_geo <= 1.0):
            raise ValueError("thresholds must be in (0, 1]")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")


@dataclass
class Detection:
    """One per-frame observation: label, unit-free descriptor, world points."""

    label: str
    descriptor: np.ndarray
    points: np.ndarray  # (N, 3) world frame
    timestamp: float = 0.0

    def __post_init__(self):
        self.descriptor = np.asarray(self.descriptor, dtype=float)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if np.linalg.norm(self.descriptor) == 0.0:
            raise UsageError("detection descriptor must be nonzero")
        if len(self.points) == 0:
            raise UsageError("detection must carry at least one point")


@dataclass
class InstanceNode:
    id: int
    label: str
    descriptor: np.ndarray
    points: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    observation_count: int = 1


def semantic_similarity(f_i: np.ndarray, f_j: np.ndarray) -> float:
    """Cosine similarity of two descriptors, in [-1, 1]."""
    f_i = np.asarray(f_i, dtype=float)
    f_j = np.asarray(f_j, dtype=float)
    if f_i.shape != f_j.shape:
        raise UsageError(f"descriptor dimension mismatch: {f_i.shape} vs {f_j.shape}")
    ni, nj = np.linalg.norm(f_i), np.linalg.norm(f_j)
    if ni == 0.0 or nj == 0.0:
        raise UsageError("descriptors must be nonzero")
    return float(np.dot(f_i, f_j) / (ni * nj))


def geometric_similarity(points_i: np.ndarray, points_j: np.ndarray,
                         epsilon: float) -> float:
    """Fraction of points_i with a nearest neighbor in points_j closer than epsilon.

    Asymmetric by construction: points_i is the query side.
    """
    points_i = np.asarray(points_i, dtype=float).reshape(-1, 3)
    points_j = np.asarray(points_j, dtype=float).reshape(-1, 3)
    if len(points_i) == 0 or len(points_j) == 0:
        raise UsageError("point sets must be non-empty")
    tree = cKDTree(points_j)
    dists, _ = tree.query(points_i, k=1)
    return float(np.count_nonzero(dists < epsilon)) / len(points_i)


def should_merge(det, node: InstanceNode, cfg: FusionConfig) -> bool:
    """True iff both merge criteria strictly exceed their thresholds.

    The incoming detection is the query side of the geometric criterion so a
    partial new view of a large known object still merges.
    """
    sem = semantic_similarity(det.descriptor, node.descriptor)
    if sem <= cfg.tau_sem:
        return False
    geo = geometric_similarity(det.points, node.points, cfg.epsilon)
    return geo > cfg.tau_geo


def voxel_downsample(points: np.ndarray, voxel: float) -> np.ndarray:
    """Replace each occupied voxel by the centroid of its points (deterministic)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if voxel <= 0.0 or len(points) == 0:
        return points.copy()
    keys = np.floor(points / voxel).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    keys, points = keys[order], points[order]
    _, starts, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    sums = np.add.reduceat(points, starts, axis=0)
    return sums / counts[:, None]


class InstanceGraph:
    """Mutable set of fused instance nodes. Single-writer: serialize ingestion."""

    def __init__(self, descriptor_dim: int, cfg: FusionConfig | None = None):
        self.d = int(descriptor_dim)
        self.cfg = cfg or FusionConfig()
        self.nodes: dict[int, InstanceNode] = {}
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def ingest_detection(self, det: Detection) -> int:
        """Fuse a detection into the best-matching node, or create a new one.

        Returns the id of the node the detection ended up in.
        """
        if det.descriptor.shape != (self.d,):
            raise UsageError(
                f"descriptor dimension {det.descriptor.shape[0]} != graph dimension {self.d}")
        candidates = [n for n in self._ordered_nodes() if should_merge(det, n, self.cfg)]
        if not candidates:
            return self._add_node(det)
        # several matches: highest semantic similarity wins, ties to lowest id
        best = max(candidates,
                   key=lambda n: (semantic_similarity(det.descriptor, n.descriptor), -n.id))
        self._fuse(best, det)
        return best.id

    def _ordered_nodes(self):
        return [self.nodes[i] for i in sorted(self.nodes)]

    def _add_node(self, det: Detection) -> int:
        nid = self._next_id
        self._next_id += 1
        desc = det.descriptor / np.linalg.norm(det.descriptor)
        pts = voxel_downsample(det.points, self.cfg.downsample_voxel)
        self.nodes[nid] = InstanceNode(
            id=nid, label=det.label, descriptor=desc, points=pts,
            bbox_min=det.points.min(axis=0), bbox_max=det.points.max(axis=0))
        return nid

    def _fuse(self, node: InstanceNode, det: Detection) -> None:
        n = node.observation_count
        det_desc = det.descriptor / np.linalg.norm(det.descriptor)
        merged = n * node.descriptor + det_desc
        node.descriptor = merged / np.linalg.norm(merged)
        node.points = voxel_downsample(
            np.vstack([node.points, det.points]), self.cfg.downsample_voxel)
        # bbox grows monotonically: union with the raw detection extents
        node.bbox_min = np.minimum(node.bbox_min, det.points.min(axis=0))
        node.bbox_max = np.maximum(node.bbox_max, det.points.max(axis=0))
        node.observation_count = n + 1

    def graph_summary(self) -> list[dict]:
        """Deterministic (id-ordered) symbolic view for task decomposition."""
        out = []
        for node in self._ordered_nodes():
            center = 0.5 * (node.bbox_min + node.bbox_max)
            extents = node.bbox_max - node.bbox_min
            out.append({
                "id": node.id,
                "label": node.label,
                "center": [float(c) for c in center],
                "extents": [float(e) for e in extents],
            })
        return out

    def export_snapshot(self) -> str:
        """Summary plus point counts, as stable JSON text."""
        records = self.graph_summary()
        for rec, node in zip(records, self._ordered_nodes()):
            rec["point_count"] = len(node.points)
            rec["observation_count"] = node.observation_count
        return json.dumps(records, indent=2, sort_keys=True)


def read_detection_stream(path) -> list[Detection]:
    """Detection stream file: one JSON record per line with label,
    descriptor array, point list, optional timestamp."""
    detections = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            detections.append(Detection(
                label=rec["label"],
                descriptor=np.asarray(rec["descriptor"], dtype=float),
                points=np.asarray(rec["points"], dtype=float),
                timestamp=float(rec.get("timestamp", 0.0))))
    return detections


def write_detection_stream(path, detections) -> None:
    with open(path, "w") as fh:
        for det in detections:
            fh.write(json.dumps({
                "label": det.label,
                "descriptor": [float(x) for x in det.descriptor],
                "points": [[float(c) for c in p] for p in det.points],
                "timestamp": det.timestamp,
            }) + "\n")
