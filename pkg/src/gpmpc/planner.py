"""RRT* through worlds of circular obstacles."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np


class NoPathFound(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class World:
    bounds: tuple                      # (xmin, ymin, xmax, ymax)
    obstacles: list = field(default_factory=list)   # [((cx, cy), r), ...]
    clearance: float = 0.0

    def __post_init__(self):
        b = tuple(float(v) for v in self.bounds)
        if len(b) != 4 or not (b[0] < b[2] and b[1] < b[3]):
            raise ValueError(f"degenerate bounds {self.bounds}")
        obs = [(np.asarray(c, dtype=float).reshape(2), float(r)) for c, r in self.obstacles]
        if any(r <= 0 for _, r in obs):
            raise ValueError("obstacle radii must be positive")
        if self.clearance < 0:
            raise ValueError("clearance must be non-negative")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "obstacles", obs)
        centers = np.array([c for c, _ in obs]).reshape(-1, 2)
        radii = np.array([r for _, r in obs]) + self.clearance
        object.__setattr__(self, "_centers", centers)
        object.__setattr__(self, "_radii", radii)

    def point_free(self, p) -> bool:
        return segment_free(p, p, self)

    @classmethod
    def from_json(cls, text: str) -> "World":
        doc = json.loads(text)
        unknown = set(doc) - {"bounds", "obstacles", "clearance"}
        if unknown:
            raise ValueError(f"unknown world keys: {sorted(unknown)}")
        obstacles = [(o["c"], o["r"]) for o in doc.get("obstacles", [])]
        return cls(tuple(doc["bounds"]), obstacles, float(doc.get("clearance", 0.0)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "bounds": list(self.bounds),
                "obstacles": [{"c": c.tolist(), "r": r} for c, r in self.obstacles],
                "clearance": self.clearance,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class PlannerConfig:
    max_iters: int = 5000
    steer_step: float = 5.0
    goal_radius: float = 2.0
    rewire_radius_const: float = 200.0
    seed: int = 0
    goal_bias: float = 0.05

    def __post_init__(self):
        if not (self.max_iters > 0 and self.steer_step > 0 and self.goal_radius > 0 and self.rewire_radius_const > 0):
            raise ValueError("planner parameters must be positive")


@dataclass(frozen=True, eq=False)
class Path:
    waypoints: np.ndarray
    cost: float
    incumbent_history: np.ndarray = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for x, y in self.waypoints:
                w.writerow([repr(float(x)), repr(float(y))])


def read_path_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y"]:
            raise ValueError(f"{path}: expected header x,y")
        pts = [[float(a), float(b)] for a, b in reader]
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def polyline_length(pts) -> float:
    pts = np.asarray(pts, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def segment_free(p1, p2, world: World) -> bool:
    """True when the closed segment stays in bounds and strictly outside every inflated obstacle."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    xmin, ymin, xmax, ymax = world.bounds
    for p in (p1, p2):
        if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
            return False
    if world._centers.shape[0] == 0:
        return True
    d = p2 - p1
    dd = float(d @ d)
    rel = world._centers - p1
    if dd > 0:
        s = np.clip(rel @ d / dd, 0.0, 1.0)
    else:
        s = np.zeros(len(rel))
    closest = p1 + s[:, None] * d
    dist = np.linalg.norm(world._centers - closest, axis=1)
    return bool(np.all(dist > world._radii))


def plan(start, goal, world: World, cfg: PlannerConfig = PlannerConfig()) -> Path:
    """RRT* from ``start`` to within ``goal_radius`` of ``goal``.

    The returned path ends exactly at ``goal``.  ``incumbent_history`` holds
    the best start-to-goal cost after every iteration (inf until found).
    """
    start = np.asarray(start, dtype=float).reshape(2)
    goal = np.asarray(goal, dtype=float).reshape(2)
    if not world.point_free(start):
        raise ValueError("start is in collision")
    rng = np.random.default_rng(cfg.seed)
    xmin, ymin, xmax, ymax = world.bounds
    lo = np.array([xmin, ymin])
    span = np.array([xmax - xmin, ymax - ymin])

    cap = cfg.max_iters + 1
    nodes = np.empty((cap, 2))
    cost = np.empty(cap)
    parent = np.full(cap, -1, dtype=int)
    children = [[] for _ in range(cap)]
    nodes[0] = start
    cost[0] = 0.0
    n = 1
    goal_nodes = []     # nodes with a free segment into the goal
    goal_free = world.point_free(goal)
    history = np.full(cfg.max_iters, math.inf)
    best = math.inf

    def propagate(i, delta):
        stack = list(children[i])
        while stack:
            j = stack.pop()
            cost[j] -= delta
            stack.extend(children[j])

    for it in range(cfg.max_iters):
        if rng.random() < cfg.goal_bias:
            sample = goal
        else:
            sample = lo + span * rng.random(2)
        diff = nodes[:n] - sample
        d2 = np.einsum("ij,ij->i", diff, diff)
        near_i = int(np.argmin(d2))
        dist = math.sqrt(d2[near_i])
        if dist == 0.0:
            history[it] = best
            continue
        if dist > cfg.steer_step:
            new = nodes[near_i] + (sample - nodes[near_i]) * (cfg.steer_step / dist)
        else:
            new = sample.copy()
        if not segment_free(nodes[near_i], new, world):
            history[it] = best
            continue

        radius = min(cfg.rewire_radius_const * math.sqrt(math.log(n + 1) / (n + 1)), 4.0 * cfg.steer_step)
        diff = nodes[:n] - new
        dn = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        near = np.flatnonzero(dn <= radius)
        if near_i not in near:
            near = np.append(near, near_i)

        # choose parent
        order = near[np.argsort(cost[near] + dn[near], kind="stable")]
        chosen = -1
        for j in order:
            if segment_free(nodes[j], new, world):
                chosen = int(j)
                break
        if chosen < 0:
            history[it] = best
            continue
        k = n
        nodes[k] = new
        cost[k] = cost[chosen] + dn[chosen]
        parent[k] = chosen
        children[chosen].append(k)
        n += 1

        # rewire neighbours through the new node
        for j in near:
            j = int(j)
            if j == chosen:
                continue
            c_new = cost[k] + dn[j]
            if c_new < cost[j] and segment_free(new, nodes[j], world):
                delta = cost[j] - c_new
                children[parent[j]].remove(j)
                parent[j] = k
                children[k].append(j)
                cost[j] = c_new
                propagate(j, delta)

        if goal_free and np.linalg.norm(new - goal) <= cfg.goal_radius and segment_free(new, goal, world):
            goal_nodes.append(k)
        if goal_nodes:
            gn = np.array(goal_nodes)
            totals = cost[gn] + np.linalg.norm(nodes[gn] - goal, axis=1)
            best = min(best, float(np.min(totals)))
        history[it] = best

    if not goal_nodes:
        raise NoPathFound(f"no path to goal after {cfg.max_iters} iterations")
    gn = np.array(goal_nodes)
    totals = cost[gn] + np.linalg.norm(nodes[gn] - goal, axis=1)
    i = int(gn[np.argmin(totals)])
    chain = []
    while i >= 0:
        chain.append(nodes[i])
        i = parent[i]
    pts = np.array(chain[::-1])
    if np.linalg.norm(pts[-1] - goal) > 0:
        pts = np.vstack([pts, goal])
    return Path(waypoints=pts, cost=polyline_length(pts), incumbent_history=history)


def resample_path(waypoints, spacing: float) -> np.ndarray:
    """Uniform arc-length resampling that keeps the exact final point."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts = np.asarray(getattr(waypoints, "waypoints", waypoints), dtype=float).reshape(-1, 2)
    diff = np.diff(pts, axis=0)
    seg = np.hypot(diff[:, 0], diff[:, 1])   # hypot avoids underflow on tiny segments
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0.0:
        return pts[:1].copy()
    m = int(math.floor(total / spacing + 1e-9))
    targets = spacing * np.arange(m + 1)
    if total - targets[-1] > 1e-9 * max(1.0, total):
        targets = np.append(targets, total)
    else:
        targets[-1] = total
    out = np.empty((targets.size, 2))
    k = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, seg.size - 1)
    for i, (t, j) in enumerate(zip(targets, k)):
        # skip zero-length segments
        while seg[j] == 0.0 and j < seg.size - 1:
            j += 1
        frac = 0.0 if seg[j] == 0.0 else (t - s[j]) / seg[j]
        out[i] = pts[j] + min(max(frac, 0.0), 1.0) * (pts[j + 1] - pts[j])
    out[-1] = pts[-1]
    return out
