"""Planar dynamics of the six-robot chain.

Each robot is a differential-drive body with pose (x, y, psi). Neighbors
are coupled by a stiff translational penalty spring between attachment
points (the distance constraint) and a yaw spring with controllable
stiffness. Terrain enters through a 2.5-D force model on the analytic
heightfield: gravity projected into the XY plane, velocity drag, a
saturating lateral traction force, and a slope-dependent cap on drive
force that reaches zero at the blocking slope.

Integration is semi-implicit Euler at a fixed step: accelerations from the
current state update velocities first, then poses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .terrain import TerrainParams, gradient, gradient_at


class DivergenceError(RuntimeError):
    """Integration blew up (non-finite state or speed beyond the guard)."""


@dataclass(frozen=True)
class RobotBody:
    """Geometry and inertia of one robot; the chain is homogeneous."""

    mass: float = 2.0
    yaw_inertia: float = 0.02
    wheel_radius: float = 0.05
    wheel_separation: float = 0.2
    half_link: float = 0.15

    def __post_init__(self):
        for name in ("mass", "yaw_inertia", "wheel_radius",
                     "wheel_separation", "half_link"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_config(cls, cfg) -> "RobotBody":
        return cls(mass=cfg.mass, yaw_inertia=cfg.yaw_inertia,
                   wheel_radius=cfg.wheel_radius,
                   wheel_separation=cfg.wheel_separation,
                   half_link=cfg.half_link)


@dataclass(frozen=True)
class EnvModel:
    """Terrain interaction model parameters."""

    gravity: float = 9.81
    mu: float = 0.8
    c_v: float = 2.0
    c_psi: float = 0.05
    lateral_damping: float = 400.0
    block_slope_deg: float = 70.0
    speed_limit: float = 7.5

    def __post_init__(self):
        for name in ("gravity", "mu", "c_v", "c_psi", "lateral_damping"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.block_slope_deg <= 90:
            raise ValueError("block_slope_deg must be in (0, 90]")

    @classmethod
    def from_config(cls, cfg) -> "EnvModel":
        return cls(gravity=cfg.gravity, mu=cfg.mu, c_v=cfg.c_v,
                   c_psi=cfg.c_psi, lateral_damping=cfg.lateral_damping,
                   block_slope_deg=cfg.block_slope_deg,
                   speed_limit=cfg.speed_limit)


@dataclass(frozen=True)
class JointParams:
    """Constants shared by the five inter-robot joints.

    Pitch/roll stiffnesses are carried for completeness but exert no force
    in the planar model.
    """

    k_trans: float = 5000.0
    c_trans: float = 0.0
    k_beta: float = 15.0
    k_gamma: float = 30.0

    @classmethod
    def from_config(cls, cfg) -> "JointParams":
        return cls(k_trans=cfg.k_trans,
                   c_trans=cfg.resolved_k_trans_damping(),
                   k_beta=cfg.k_beta, k_gamma=cfg.k_gamma)

    @classmethod
    def critical(cls, k_trans: float, mass: float, **kw) -> "JointParams":
        return cls(k_trans=k_trans,
                   c_trans=2.0 * math.sqrt(k_trans * mass / 2.0), **kw)


@dataclass(frozen=True)
class RobotState:
    """Snapshot of one robot (API convenience over the chain arrays)."""

    x: float
    y: float
    psi: float
    vx: float = 0.0
    vy: float = 0.0
    psi_dot: float = 0.0
    omega_l: float = 0.0
    omega_r: float = 0.0


@dataclass(frozen=True)
class JointState:
    """Snapshot of one joint."""

    yaw_stiffness: float
    relative_angle: float
    rest_angle: float = 0.0
    damping: float = 0.0
    pitch_stiffness: float = 15.0
    roll_stiffness: float = 30.0


@dataclass
class ChainState:
    """Poses, velocities, wheel speeds, and joint state of the chain.

    ``q``/``qd`` are (n, 3) arrays of (x, y, psi) and their rates;
    ``wheel_speeds`` is (n, 2) actual (left, right) in rad/s. Joint arrays
    have length n-1; joint j couples robots j and j+1 (0-based, robot 0
    leads). The benchmark always runs n = 6.
    """

    q: np.ndarray
    qd: np.ndarray
    wheel_speeds: np.ndarray
    k_alpha: np.ndarray
    joint_rest: np.ndarray
    joint_damping: np.ndarray
    sim_time: float = 0.0

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        self.qd = np.ascontiguousarray(self.qd, dtype=np.float64)
        self.wheel_speeds = np.ascontiguousarray(self.wheel_speeds,
                                                 dtype=np.float64)
        self.k_alpha = np.ascontiguousarray(self.k_alpha, dtype=np.float64)
        self.joint_rest = np.ascontiguousarray(self.joint_rest,
                                               dtype=np.float64)
        self.joint_damping = np.ascontiguousarray(self.joint_damping,
                                                  dtype=np.float64)
        n = self.q.shape[0]
        if self.q.shape != (n, 3) or self.qd.shape != (n, 3):
            raise ValueError("q and qd must be (n, 3)")
        if self.wheel_speeds.shape != (n, 2):
            raise ValueError("wheel_speeds must be (n, 2)")
        for name in ("k_alpha", "joint_rest", "joint_damping"):
            if getattr(self, name).shape != (n - 1,):
                raise ValueError(f"{name} must have length n-1")
        if not (np.isfinite(self.q).all() and np.isfinite(self.qd).all()):
            raise ValueError("non-finite state")

    @property
    def n_robots(self) -> int:
        return self.q.shape[0]

    def robot(self, i: int) -> RobotState:
        return RobotState(x=self.q[i, 0], y=self.q[i, 1], psi=self.q[i, 2],
                          vx=self.qd[i, 0], vy=self.qd[i, 1],
                          psi_dot=self.qd[i, 2],
                          omega_l=self.wheel_speeds[i, 0],
                          omega_r=self.wheel_speeds[i, 1])

    def joint(self, j: int, joints: JointParams | None = None) -> JointState:
        rel = _wrap(self.q[j, 2] - self.q[j + 1, 2])
        jp = joints or JointParams()
        return JointState(yaw_stiffness=self.k_alpha[j], relative_angle=rel,
                          rest_angle=self.joint_rest[j],
                          damping=self.joint_damping[j],
                          pitch_stiffness=jp.k_beta,
                          roll_stiffness=jp.k_gamma)

    def copy(self) -> "ChainState":
        return ChainState(q=self.q.copy(), qd=self.qd.copy(),
                          wheel_speeds=self.wheel_speeds.copy(),
                          k_alpha=self.k_alpha.copy(),
                          joint_rest=self.joint_rest.copy(),
                          joint_damping=self.joint_damping.copy(),
                          sim_time=self.sim_time)

    @classmethod
    def aligned_chain(cls, start, heading: float, spacing: float,
                      n: int = 6, k_alpha: float = 100.0,
                      joint_damping: float = 0.0) -> "ChainState":
        """Chain at rest: robot 0 at ``start``, the rest trailing behind."""
        q = np.zeros((n, 3))
        ux, uy = math.cos(heading), math.sin(heading)
        for i in range(n):
            q[i, 0] = start[0] - i * spacing * ux
            q[i, 1] = start[1] - i * spacing * uy
            q[i, 2] = heading
        return cls(q=q, qd=np.zeros((n, 3)), wheel_speeds=np.zeros((n, 2)),
                   k_alpha=np.full(n - 1, k_alpha),
                   joint_rest=np.zeros(n - 1),
                   joint_damping=np.full(n - 1, joint_damping))


# ---------------------------------------------------------------------------
# Scalar kernels (shared with the benchmark trial loop).

@njit(cache=True)
def _wrap(a):
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@njit(cache=True)
def _drive_and_steer(tau_l, tau_r, r, d):
    return (tau_l + tau_r) / r, d * (tau_r - tau_l) / (2.0 * r)


@njit(cache=True)
def _traction_cap(mu, mass, g, slope_deg, block_slope_deg):
    ramp = (block_slope_deg - slope_deg) / 10.0
    if ramp > 1.0:
        ramp = 1.0
    elif ramp < 0.0:
        ramp = 0.0
    return mu * mass * g * math.cos(math.radians(slope_deg)) * ramp


@njit(cache=True)
def _env_wrench_terms(gx, gy, psi, vx, vy, psi_dot,
                      mass, g, mu, c_v, c_psi, c_lat):
    denom = 1.0 + gx * gx + gy * gy
    fx = -mass * g * gx / denom - c_v * vx
    fy = -mass * g * gy / denom - c_v * vy
    tau = -c_psi * psi_dot
    # lateral traction: resist sideways velocity up to the friction cone
    nx = -math.sin(psi)
    ny = math.cos(psi)
    v_lat = vx * nx + vy * ny
    cap = mu * mass * g / math.sqrt(denom)
    f_lat = -c_lat * v_lat
    if f_lat > cap:
        f_lat = cap
    elif f_lat < -cap:
        f_lat = -cap
    fx += f_lat * nx
    fy += f_lat * ny
    return fx, fy, tau


@njit(cache=True)
def _joint_wrenches(q, qd, k_alpha, rest, L, k_trans, c_trans, out):
    """Constraint wrenches on every robot; boundary robots get one joint."""
    n = q.shape[0]
    for i in range(n):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        out[i, 2] = 0.0
    for j in range(n - 1):
        cj = math.cos(q[j, 2])
        sj = math.sin(q[j, 2])
        ck = math.cos(q[j + 1, 2])
        sk = math.sin(q[j + 1, 2])
        # rear attachment of the front robot, front attachment of the rear one
        ax = q[j, 0] - L * cj
        ay = q[j, 1] - L * sj
        bx = q[j + 1, 0] + L * ck
        by = q[j + 1, 1] + L * sk
        gx = bx - ax
        gy = by - ay
        fx = k_trans * gx
        fy = k_trans * gy
        out[j, 0] += fx
        out[j, 1] += fy
        out[j + 1, 0] -= fx
        out[j + 1, 1] -= fy
        # moment of the attachment force about each body center
        out[j, 2] += (-L * cj) * fy - (-L * sj) * fx
        out[j + 1, 2] += (L * ck) * (-fy) - (L * sk) * (-fx)
        # yaw spring (or position servo, when a rest angle is set)
        err = _wrap((q[j, 2] - q[j + 1, 2]) - rest[j])
        tau_j = -k_alpha[j] * err
        out[j, 2] += tau_j
        out[j + 1, 2] -= tau_j
    return out


@njit(cache=True)
def _damp_joint_axis(qd, j, axr, ayr, bxr, byr, ux, uy, c, mass, iz, dt):
    """Exact decay of the attachment-point relative velocity along (ux, uy).

    Applied as an equal-and-opposite impulse pair at the attachment points
    with the decay factor matched to the pair's effective mass along this
    axis, so it is stable for any damping constant and conserves linear
    momentum exactly.
    """
    vax = qd[j, 0] - qd[j, 2] * ayr
    vay = qd[j, 1] + qd[j, 2] * axr
    vbx = qd[j + 1, 0] - qd[j + 1, 2] * byr
    vby = qd[j + 1, 1] + qd[j + 1, 2] * bxr
    v_rel = (vbx - vax) * ux + (vby - vay) * uy
    a_cross = axr * uy - ayr * ux
    b_cross = bxr * uy - byr * ux
    inv_m_eff = 2.0 / mass + a_cross * a_cross / iz + b_cross * b_cross / iz
    imp = v_rel / inv_m_eff * (1.0 - math.exp(-c * dt * inv_m_eff))
    qd[j, 0] += imp * ux / mass
    qd[j, 1] += imp * uy / mass
    qd[j, 2] += imp * a_cross / iz
    qd[j + 1, 0] -= imp * ux / mass
    qd[j + 1, 1] -= imp * uy / mass
    qd[j + 1, 2] -= imp * b_cross / iz


@njit(cache=True)
def _damp_joint(q, qd, j, L, c_trans, mass, iz, dt):
    """Damp joint j's relative attachment velocity (both planar axes)."""
    cj = math.cos(q[j, 2])
    sj = math.sin(q[j, 2])
    ck = math.cos(q[j + 1, 2])
    sk = math.sin(q[j + 1, 2])
    axr = -L * cj          # attachment offsets from each body center
    ayr = -L * sj
    bxr = L * ck
    byr = L * sk
    gx = (q[j + 1, 0] + bxr) - (q[j, 0] + axr)
    gy = (q[j + 1, 1] + byr) - (q[j, 1] + ayr)
    gap = math.sqrt(gx * gx + gy * gy)
    if gap > 1e-12:
        ux = gx / gap
        uy = gy / gap
    else:
        ux = cj
        uy = sj
    _damp_joint_axis(qd, j, axr, ayr, bxr, byr, ux, uy, c_trans, mass, iz, dt)
    _damp_joint_axis(qd, j, axr, ayr, bxr, byr, -uy, ux, c_trans, mass, iz, dt)


@njit(cache=True)
def _step_chain(q, qd, wheels, tau_lr, k_alpha, rest, jdamp, ext, scratch,
                A, P, F, W, dzs,
                mass, iz, r, d, L,
                g, mu, c_v, c_psi, c_lat, block_deg,
                k_trans, c_trans, speed_limit, dt):
    """One semi-implicit Euler step, in place. Returns 0 or 2 (diverged).

    Velocities update first from the current-state forces. Joint damping
    then acts as exact pairwise velocity decays (stable for any constant):
    the relative velocity of the two attachment points, and the relative
    yaw rate where per-joint servo damping is set. Poses advance last.
    """
    n = q.shape[0]
    _joint_wrenches(q, qd, k_alpha, rest, L, k_trans, c_trans, scratch)
    for i in range(n):
        f_req, tau_steer = _drive_and_steer(tau_lr[i, 0], tau_lr[i, 1], r, d)
        gx, gy = gradient_at(A, P, F, W, dzs, q[i, 0], q[i, 1])
        slope = math.degrees(math.atan(math.sqrt(gx * gx + gy * gy)))
        cap = _traction_cap(mu, mass, g, slope, block_deg)
        if f_req > cap:
            f_req = cap
        elif f_req < -cap:
            f_req = -cap
        fex, fey, tau_e = _env_wrench_terms(gx, gy, q[i, 2],
                                            qd[i, 0], qd[i, 1], qd[i, 2],
                                            mass, g, mu, c_v, c_psi, c_lat)
        c = math.cos(q[i, 2])
        s = math.sin(q[i, 2])
        fx = f_req * c + scratch[i, 0] + fex + ext[i, 0]
        fy = f_req * s + scratch[i, 1] + fey + ext[i, 1]
        tz = tau_steer + scratch[i, 2] + tau_e + ext[i, 2]
        qd[i, 0] += fx / mass * dt
        qd[i, 1] += fy / mass * dt
        qd[i, 2] += tz / iz * dt
    for j in range(n - 1):
        if c_trans > 0.0:
            _damp_joint(q, qd, j, L, c_trans, mass, iz, dt)
        if jdamp[j] > 0.0:
            rate = qd[j, 2] - qd[j + 1, 2]
            delta = rate * (1.0 - math.exp(-2.0 * jdamp[j] * dt / iz))
            qd[j, 2] -= 0.5 * delta
            qd[j + 1, 2] += 0.5 * delta
    status = 0
    for i in range(n):
        q[i, 0] += qd[i, 0] * dt
        q[i, 1] += qd[i, 1] * dt
        q[i, 2] = _wrap(q[i, 2] + qd[i, 2] * dt)
        v_fwd = qd[i, 0] * math.cos(q[i, 2]) + qd[i, 1] * math.sin(q[i, 2])
        wheels[i, 0] = (v_fwd - qd[i, 2] * d / 2.0) / r
        wheels[i, 1] = (v_fwd + qd[i, 2] * d / 2.0) / r
        sp = math.sqrt(qd[i, 0] ** 2 + qd[i, 1] ** 2)
        if not (sp <= speed_limit) or not math.isfinite(q[i, 2]):
            status = 2
    return status


# ---------------------------------------------------------------------------
# Public operations.

def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return _wrap(float(a))


def wheel_forces(body: RobotBody, tau_l: float, tau_r: float):
    """Wheel torques -> (forward drive force, steering torque)."""
    return _drive_and_steer(float(tau_l), float(tau_r),
                            body.wheel_radius, body.wheel_separation)


def traction_limit(body: RobotBody, slope_deg: float, env: EnvModel,
                   f_drive_requested: float) -> float:
    """Clamp a requested drive force to the slope-dependent traction cap."""
    if not math.isfinite(f_drive_requested):
        raise ValueError("drive force request must be finite")
    cap = _traction_cap(env.mu, body.mass, env.gravity,
                        float(slope_deg), env.block_slope_deg)
    return min(max(f_drive_requested, -cap), cap)


def env_wrench(robot: RobotState, body: RobotBody, terrain: TerrainParams,
               env: EnvModel):
    """Environmental wrench (fx, fy, tau) on one robot."""
    gx, gy = gradient(terrain, robot.x, robot.y)
    return _env_wrench_terms(gx, gy, robot.psi, robot.vx, robot.vy,
                             robot.psi_dot, body.mass, env.gravity, env.mu,
                             env.c_v, env.c_psi, env.lateral_damping)


def constraint_wrenches(state: ChainState, body: RobotBody,
                        joints: JointParams | None = None) -> np.ndarray:
    """Per-robot (fx, fy, tau) from the inter-robot joints."""
    joints = joints or JointParams.critical(5000.0, body.mass)
    out = np.zeros((state.n_robots, 3))
    _joint_wrenches(state.q, state.qd, state.k_alpha, state.joint_rest,
                    body.half_link, joints.k_trans, joints.c_trans, out)
    return out


def step(state: ChainState, controls: np.ndarray, body: RobotBody,
         terrain: TerrainParams, env: EnvModel, dt: float,
         joints: JointParams | None = None,
         external_wrench: np.ndarray | None = None) -> ChainState:
    """Advance the chain one step; returns a new ChainState.

    ``controls`` is (n, 2) wheel torques (left, right). Raises ValueError
    on non-finite controls and DivergenceError if the integration guard
    trips. ``external_wrench`` (n, 3) adds a generalized force per robot,
    useful for injecting known disturbances in tests.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    controls = np.asarray(controls, dtype=np.float64)
    if controls.shape != (state.n_robots, 2):
        raise ValueError(f"controls must be ({state.n_robots}, 2)")
    if not np.isfinite(controls).all():
        raise ValueError("controls must be finite")
    joints = joints or JointParams.critical(5000.0, body.mass)
    if external_wrench is None:
        ext = np.zeros((state.n_robots, 3))
    else:
        ext = np.ascontiguousarray(external_wrench, dtype=np.float64)
        if ext.shape != (state.n_robots, 3):
            raise ValueError(f"external_wrench must be ({state.n_robots}, 3)")

    new = state.copy()
    scratch = np.zeros((state.n_robots, 3))
    a, p, f, w, dzs = terrain.arrays()
    status = _step_chain(
        new.q, new.qd, new.wheel_speeds, controls,
        new.k_alpha, new.joint_rest, new.joint_damping, ext, scratch,
        a, p, f, w, dzs,
        body.mass, body.yaw_inertia, body.wheel_radius,
        body.wheel_separation, body.half_link,
        env.gravity, env.mu, env.c_v, env.c_psi, env.lateral_damping,
        env.block_slope_deg,
        joints.k_trans, joints.c_trans, env.speed_limit, dt)
    new.sim_time = state.sim_time + dt
    if status != 0:
        raise DivergenceError(
            f"integration diverged at t={new.sim_time:.3f}s "
            f"(speed guard {env.speed_limit} m/s)")
    return new
