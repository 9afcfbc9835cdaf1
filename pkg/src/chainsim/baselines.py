"""Comparison methods: the 4 constraint regimes x 2 navigation strategies.

Constraint regimes
    cwc  switchable yaw stiffness (the proposed scheme)
    mj   motorized joints: stiff PD servos tracking follow-the-leader
         setpoints built from the leader's delayed heading history
    cs   constantly soft joints (stiffness fixed at K_low)
    d    discrete robots: no physical coupling; followers pursue the
         delayed position of their predecessor (a virtual link)

Navigation strategies
    tdt    steer the leader at the target bearing, no map
    astar  follow a slope-aware A* path planned on the heightfield
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .terrain import TerrainParams, slope_deg as terrain_slope_deg

CONSTRAINT_TYPES = ("cwc", "mj", "cs", "d")
NAVIGATION_TYPES = ("tdt", "astar")

CONSTRAINT_CODE = {name: i for i, name in enumerate(CONSTRAINT_TYPES)}
NAV_CODE = {name: i for i, name in enumerate(NAVIGATION_TYPES)}

# Row order of the benchmark tables.
METHOD_ORDER = (
    "cwc-tdt", "cwc-astar",
    "mj-tdt", "mj-astar",
    "cs-tdt", "cs-astar",
    "d-tdt", "d-astar",
)


@dataclass(frozen=True)
class MethodSpec:
    """One benchmark method: constraint regime plus navigation strategy."""

    constraint: str
    navigation: str

    def __post_init__(self):
        if self.constraint not in CONSTRAINT_TYPES:
            raise ValueError(f"unknown constraint type {self.constraint!r}; "
                             f"valid: {CONSTRAINT_TYPES}")
        if self.navigation not in NAVIGATION_TYPES:
            raise ValueError(f"unknown navigation type {self.navigation!r}; "
                             f"valid: {NAVIGATION_TYPES}")

    @classmethod
    def parse(cls, name: str) -> "MethodSpec":
        if name not in METHOD_ORDER:
            raise ValueError(f"unknown method {name!r}; "
                             f"valid: {', '.join(METHOD_ORDER)}")
        constraint, navigation = name.split("-")
        return cls(constraint, navigation)

    def __str__(self) -> str:
        return f"{self.constraint}-{self.navigation}"


@dataclass(frozen=True)
class PlannedPath:
    """An A* result: grid waypoints from start to goal."""

    waypoints: np.ndarray     # (k, 2) world coordinates
    total_cost: float
    grid_resolution: float


_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1),
              (1, 1), (1, -1), (-1, 1), (-1, -1))


def edge_cost(step_length: float, slope_deg_to: float,
              w_slope: float, w_tip: float) -> float:
    """Traversal cost of one grid move, penalizing slope and tipping risk."""
    return step_length * (1.0 + w_slope * slope_deg_to / 30.0
                          + w_tip * max(0.0, slope_deg_to - 45.0) / 25.0)


def _slope_grid(terrain, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Slope in degrees at every node; (len(xs), len(ys))."""
    if isinstance(terrain, TerrainParams):
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return terrain_slope_deg(terrain, gx, gy)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.asarray(terrain(gx, gy), dtype=np.float64)


def plan_astar(terrain, start, goal, resolution: float,
               region=(-1.0, 10.0), w_slope: float = 1.0,
               w_tip: float = 3.0,
               block_slope_deg: float = 70.0) -> PlannedPath | None:
    """8-connected A* over a uniform grid on the navigation region.

    ``terrain`` is a TerrainParams or any callable (X, Y) -> slope degrees.
    Nodes at or above the blocking slope are impassable. Returns None when
    the goal is unreachable. Ties in the open list break on (f, h, node
    index), so the returned path is deterministic.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    lo, hi = region
    n = int(math.floor((hi - lo) / resolution + 1e-9)) + 1
    xs = lo + resolution * np.arange(n)
    ys = xs.copy()

    def node_of(p):
        i = int(round((p[0] - lo) / resolution))
        j = int(round((p[1] - lo) / resolution))
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"point {p} outside the planning region")
        return i, j

    si, sj = node_of(start)
    gi, gj = node_of(goal)
    slopes = _slope_grid(terrain, xs, ys)
    blocked = slopes >= block_slope_deg
    if blocked[si, sj] or blocked[gi, gj]:
        return None

    goal_x, goal_y = xs[gi], ys[gj]

    def heuristic(i, j):
        return math.hypot(xs[i] - goal_x, ys[j] - goal_y)

    g_best = np.full((n, n), np.inf)
    parent = np.full((n, n, 2), -1, dtype=np.int64)
    g_best[si, sj] = 0.0
    h0 = heuristic(si, sj)
    open_heap = [(h0, h0, si * n + sj, si, sj)]
    closed = np.zeros((n, n), dtype=np.bool_)

    while open_heap:
        f, h, _, i, j = heapq.heappop(open_heap)
        if closed[i, j]:
            continue
        closed[i, j] = True
        if (i, j) == (gi, gj):
            break
        gi_cost = g_best[i, j]
        for di, dj in _NEIGHBORS:
            ni, nj = i + di, j + dj
            if not (0 <= ni < n and 0 <= nj < n):
                continue
            if blocked[ni, nj] or closed[ni, nj]:
                continue
            step_len = resolution * (math.sqrt(2.0) if di and dj else 1.0)
            cand = gi_cost + edge_cost(step_len, slopes[ni, nj],
                                       w_slope, w_tip)
            if cand < g_best[ni, nj]:
                g_best[ni, nj] = cand
                parent[ni, nj, 0] = i
                parent[ni, nj, 1] = j
                nh = heuristic(ni, nj)
                heapq.heappush(open_heap,
                               (cand + nh, nh, ni * n + nj, ni, nj))

    if not closed[gi, gj]:
        return None

    nodes = []
    i, j = gi, gj
    while (i, j) != (si, sj):
        nodes.append((xs[i], ys[j]))
        i, j = parent[i, j, 0], parent[i, j, 1]
    nodes.append((xs[si], ys[sj]))
    nodes.reverse()
    return PlannedPath(waypoints=np.array(nodes, dtype=np.float64),
                       total_cost=float(g_best[gi, gj]),
                       grid_resolution=float(resolution))


# ---------------------------------------------------------------------------
# Scalar kernels (shared with the benchmark trial loop).

@njit(cache=True)
def _waypoint_ref(x, y, waypoints, lookahead, cursor):
    """Heading toward the farthest in-range waypoint at or past ``cursor``.

    The cursor never moves backward, so the leader advances monotonically
    along the path even where it self-approaches. Past the last waypoint
    the reference aims at the goal point.
    """
    k = waypoints.shape[0]
    best = -1
    r2 = lookahead * lookahead
    for j in range(cursor, k):
        dx = waypoints[j, 0] - x
        dy = waypoints[j, 1] - y
        if dx * dx + dy * dy <= r2:
            best = j
    if best >= 0:
        cursor = best
    tx = waypoints[cursor, 0]
    ty = waypoints[cursor, 1]
    if cursor == k - 1:
        dx = tx - x
        dy = ty - y
        if dx * dx + dy * dy < 1e-18:
            return 0.0, cursor
    return math.atan2(ty - y, tx - x), cursor


@njit(cache=True)
def _delayed_value(history, step_idx, delay_steps):
    idx = step_idx - delay_steps
    if idx < 0:
        idx = 0
    return history[idx]


# ---------------------------------------------------------------------------
# Public operations.

def waypoint_reference(x: float, y: float, path: PlannedPath,
                       lookahead: float = 0.6, cursor: int = 0):
    """Leader heading reference along a planned path.

    Returns (psi_ref, cursor); feed the cursor back in on the next call so
    progress along the path is monotone.
    """
    if path.waypoints.shape[0] == 0:
        raise ValueError("empty path")
    return _waypoint_ref(float(x), float(y), path.waypoints,
                         float(lookahead), int(cursor))


def mj_joint_setpoints(leader_psi_history: np.ndarray, step_idx: int,
                       delay_steps: int, n_joints: int = 5) -> np.ndarray:
    """Follow-the-leader joint angle setpoints from the heading history.

    ``leader_psi_history`` holds the leader's unwrapped heading at every
    step up to ``step_idx``. Joint j is servoed to the heading change the
    leader made between j+1 and j spacing-delays ago, which propagates the
    leader's turn down the chain as a wave.
    """
    hist = np.ascontiguousarray(leader_psi_history, dtype=np.float64)
    out = np.empty(n_joints)
    for j in range(n_joints):
        out[j] = (_delayed_value(hist, step_idx, j * delay_steps)
                  - _delayed_value(hist, step_idx, (j + 1) * delay_steps))
    return out


def pursuit_reference(predecessor_xy_history: np.ndarray, step_idx: int,
                      delay_steps: int, x: float, y: float) -> float:
    """Virtual-link heading: aim at the predecessor's delayed position."""
    hist = np.ascontiguousarray(predecessor_xy_history, dtype=np.float64)
    px = _delayed_value(hist[:, 0], step_idx, delay_steps)
    py = _delayed_value(hist[:, 1], step_idx, delay_steps)
    return math.atan2(py - y, px - x)
