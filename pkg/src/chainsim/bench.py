"""Trial runner, navigation metrics, and benchmark aggregation.

A trial drops the chain at the start point aligned toward the target and
integrates at a fixed step until the leader enters the success radius or
time runs out. Per-trial metrics:

    NCR  completion: net approach toward the target over start distance
    NEF  efficiency: net approach per meter of leader journey
    NEC  energy per meter of net approach (wheel |torque * speed| integral)

A benchmark runs every (terrain, method) pair of a dataset manifest,
optionally across processes; trials are pure functions of their inputs so
the report is identical regardless of the worker count.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from numba import njit

from .baselines import (CONSTRAINT_CODE, NAV_CODE, METHOD_ORDER, MethodSpec,
                        plan_astar, _waypoint_ref, _delayed_value)
from .config import SimConfig
from .control import ControlGains, _motion_command, _switch_wants_low, _wheel_p
from .dynamics import (ChainState, EnvModel, JointParams, RobotBody,
                       _step_chain, _wrap)
from .terrain import TerrainParams, terrain_id as terrain_id_of


TRAJ_COLUMNS = ("t", "robot", "x", "y", "psi", "omega_l", "omega_r",
                "k_alpha", "tau_l", "tau_r", "tau_env_hat")

# trial end status
_SUCCESS, _TIMEOUT, _DIVERGED = 0, 1, 2


@njit(cache=True)
def _trial_loop(q, qd, wheels, k_alpha, rest, jdamp,
                A, P, F, W, dzs,
                mass, iz, r, d, L,
                g, mu, c_v, c_psi, c_lat, block_deg,
                k_trans, c_trans, speed_limit,
                v0, kp, km, tau_max,
                k_low, k_high, tau_thr, dwell,
                mj_kp, mj_kd,
                ctype, nav,
                tx, ty, success_radius,
                waypoints, lookahead,
                dt, max_steps, delay_steps,
                psi1_hist, pos_hist,
                series_stride, series,
                traj_stride, traj):
    n = q.shape[0]
    nj = n - 1
    tau_lr = np.zeros((n, 2))
    scratch = np.zeros((n, 3))
    ext = np.zeros((n, 3))
    psi_ref = np.zeros(n)

    # switching state (cwc); start soft with an expired dwell so the rule
    # may act immediately
    k_cur = k_low
    time_in_state = dwell
    if ctype == 0:
        k_broadcast = k_low
    elif ctype == 1:
        k_broadcast = mj_kp
    elif ctype == 2:
        k_broadcast = k_low
    else:
        k_broadcast = 0.0

    if ctype == 1:
        psi1_hist[0] = q[0, 2]

    d_min = math.hypot(q[0, 0] - tx, q[0, 1] - ty)
    journey = 0.0
    energy = 0.0
    switches = 0
    status = _TIMEOUT
    n_series = 0
    n_traj = 0
    cursor = 0
    tau_hat = 0.0
    steps_done = 0

    for step_k in range(max_steps):
        t = step_k * dt

        # ---- references
        if nav == 0:
            psi_ref[0] = math.atan2(ty - q[0, 1], tx - q[0, 0])
        else:
            psi_ref[0], cursor = _waypoint_ref(q[0, 0], q[0, 1], waypoints,
                                               lookahead, cursor)
        if ctype == 1:
            for i in range(1, n):
                psi_ref[i] = _delayed_value(psi1_hist, step_k,
                                            i * delay_steps)
        elif ctype == 3:
            for i in range(1, n):
                px = _delayed_value(pos_hist[i - 1, :, 0], step_k,
                                    delay_steps)
                py = _delayed_value(pos_hist[i - 1, :, 1], step_k,
                                    delay_steps)
                psi_ref[i] = math.atan2(py - q[i, 1], px - q[i, 0])
        else:
            for i in range(1, n):
                psi_ref[i] = q[i - 1, 2]

        # ---- wheel speed loops
        for i in range(n):
            w_l, w_r = _motion_command(q[i, 2], psi_ref[i], v0, kp, d, r)
            tau_lr[i, 0] = _wheel_p(w_l, wheels[i, 0], km, tau_max)
            tau_lr[i, 1] = _wheel_p(w_r, wheels[i, 1], km, tau_max)

        # ---- joint stiffness / setpoints
        if ctype == 0 or ctype == 2:
            tau1 = d * (tau_lr[0, 1] - tau_lr[0, 0]) / (2.0 * r)
            dpsi = _wrap(q[0, 2] - q[1, 2])
            tau_c1 = -k_broadcast * dpsi
            tau_hat = -tau1 + k_broadcast * dpsi
            if ctype == 0:
                time_in_state += dt
                if _switch_wants_low(tau1, tau_c1, tau_hat, tau_thr):
                    desired = k_low
                else:
                    desired = k_high
                if desired != k_cur and time_in_state >= dwell:
                    k_cur = desired
                    time_in_state = 0.0
                    switches += 1
                k_broadcast = k_cur
                for j in range(nj):
                    k_alpha[j] = k_cur
        elif ctype == 1:
            for j in range(nj):
                rest[j] = (_delayed_value(psi1_hist, step_k, j * delay_steps)
                           - _delayed_value(psi1_hist, step_k,
                                            (j + 1) * delay_steps))

        # ---- logging at time t (state plus the controls just computed)
        if step_k % series_stride == 0 and n_series < series.shape[0]:
            series[n_series, 0] = t
            series[n_series, 1] = q[0, 0]
            series[n_series, 2] = q[0, 1]
            series[n_series, 3] = math.hypot(q[0, 0] - tx, q[0, 1] - ty)
            series[n_series, 4] = k_broadcast
            n_series += 1
        if traj_stride > 0 and step_k % traj_stride == 0 \
                and n_traj + n <= traj.shape[0]:
            for i in range(n):
                traj[n_traj, 0] = t
                traj[n_traj, 1] = i + 1
                traj[n_traj, 2] = q[i, 0]
                traj[n_traj, 3] = q[i, 1]
                traj[n_traj, 4] = q[i, 2]
                traj[n_traj, 5] = wheels[i, 0]
                traj[n_traj, 6] = wheels[i, 1]
                traj[n_traj, 7] = k_broadcast
                traj[n_traj, 8] = tau_lr[i, 0]
                traj[n_traj, 9] = tau_lr[i, 1]
                traj[n_traj, 10] = tau_hat
                n_traj += 1

        # ---- energy, Eq.-style rectangle rule on pre-step wheel speeds
        p_sum = 0.0
        for i in range(n):
            p_sum += (abs(tau_lr[i, 0] * wheels[i, 0])
                      + abs(tau_lr[i, 1] * wheels[i, 1]))
        energy += p_sum * dt

        # ---- histories hold state at time t
        if ctype == 3:
            for i in range(n):
                pos_hist[i, step_k, 0] = q[i, 0]
                pos_hist[i, step_k, 1] = q[i, 1]

        psi_prev = q[0, 2]
        x_prev = q[0, 0]
        y_prev = q[0, 1]

        st = _step_chain(q, qd, wheels, tau_lr, k_alpha, rest, jdamp, ext,
                         scratch, A, P, F, W, dzs,
                         mass, iz, r, d, L,
                         g, mu, c_v, c_psi, c_lat, block_deg,
                         k_trans, c_trans, speed_limit, dt)
        steps_done = step_k + 1
        if st != 0:
            status = _DIVERGED
            break

        if ctype == 1:
            psi1_hist[step_k + 1] = (psi1_hist[step_k]
                                     + _wrap(q[0, 2] - psi_prev))

        journey += math.hypot(q[0, 0] - x_prev, q[0, 1] - y_prev)
        dist = math.hypot(q[0, 0] - tx, q[0, 1] - ty)
        if dist < d_min:
            d_min = dist
        if dist < success_radius:
            status = _SUCCESS
            break

    # closing series sample at the end time
    if n_series < series.shape[0]:
        series[n_series, 0] = steps_done * dt
        series[n_series, 1] = q[0, 0]
        series[n_series, 2] = q[0, 1]
        series[n_series, 3] = math.hypot(q[0, 0] - tx, q[0, 1] - ty)
        series[n_series, 4] = k_broadcast
        n_series += 1

    return (status, steps_done, d_min, journey, energy, switches,
            n_series, n_traj)


@dataclass
class TrialRecord:
    """Outcome and provenance of one navigation trial."""

    terrain_id: str
    group: str
    method: str
    seed: int
    success: bool
    diverged: bool
    t_total: float
    dist_start_target: float
    d_min: float
    d_ef: float
    journey: float
    energy: float
    ncr: float
    nef: float | None
    nec: float | None
    switch_count: int
    fallback_flags: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrialRecord":
        return cls(**data)


def metrics(record: TrialRecord):
    """(NCR, NEF, NEC) for one trial; NEF/NEC are None when undefined."""
    L = record.dist_start_target
    if L <= 0:
        raise ValueError("start-target distance must be positive")
    d_ef = L - record.d_min
    ncr = d_ef / L
    nef = d_ef / record.journey if d_ef > 0 and record.journey > 0 else None
    nec = record.energy / d_ef if d_ef > 0 else None
    return ncr, nef, nec


def energy_accumulate(controls, wheel_speeds, dt: float) -> float:
    """Energy increment sum_i |tau_L w_L| + |tau_R w_R| times dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    controls = np.asarray(controls, dtype=np.float64)
    wheel_speeds = np.asarray(wheel_speeds, dtype=np.float64)
    return float(np.sum(np.abs(controls * wheel_speeds)) * dt)


def _method_joint_setup(method: MethodSpec, cfg: SimConfig):
    """(k_alpha0, joint_damping0, k_trans, c_trans) for a constraint type."""
    if method.constraint == "cwc":
        return cfg.k_low, 0.0, cfg.k_trans, cfg.resolved_k_trans_damping()
    if method.constraint == "cs":
        return cfg.k_low, 0.0, cfg.k_trans, cfg.resolved_k_trans_damping()
    if method.constraint == "mj":
        return (cfg.mj_joint_kp, cfg.mj_joint_kd, cfg.k_trans,
                cfg.resolved_k_trans_damping())
    return 0.0, 0.0, 0.0, 0.0  # discrete: no physical coupling


def initial_chain_state(cfg: SimConfig, method: MethodSpec) -> ChainState:
    """Chain at the start point, aligned toward the target, spaced 2L."""
    heading = math.atan2(cfg.target[1] - cfg.start[1],
                         cfg.target[0] - cfg.start[0])
    k0, jd0, _, _ = _method_joint_setup(method, cfg)
    return ChainState.aligned_chain(cfg.start, heading, 2.0 * cfg.half_link,
                                    n=cfg.n_robots, k_alpha=k0,
                                    joint_damping=jd0)


def run_trial(terrain: TerrainParams, method, config: SimConfig | None = None,
              seed: int = 0, log_path=None) -> TrialRecord:
    """Run one navigation trial; deterministic in all arguments."""
    cfg = config or SimConfig()
    if isinstance(method, str):
        method = MethodSpec.parse(method)
    ctype = CONSTRAINT_CODE[method.constraint]
    nav = NAV_CODE[method.navigation]

    fallback_flags = []
    waypoints = np.zeros((1, 2))
    if nav == 1:
        path = plan_astar(terrain, cfg.start, cfg.target,
                          cfg.astar_resolution,
                          region=(cfg.region_lo, cfg.region_hi),
                          w_slope=cfg.astar_w_slope, w_tip=cfg.astar_w_tip,
                          block_slope_deg=cfg.block_slope_deg)
        if path is None:
            fallback_flags.append("astar-no-path:fallback-tdt")
            nav = 0
        else:
            waypoints = path.waypoints

    state = initial_chain_state(cfg, method)
    n = state.n_robots
    _, _, k_trans, c_trans = _method_joint_setup(method, cfg)

    dt = cfg.dt
    max_steps = int(round(cfg.time_limit / dt))
    delay_steps = max(1, int(round(2.0 * cfg.half_link / cfg.v0 / dt)))
    series_stride = max(1, int(round(cfg.series_interval / dt)))
    traj_stride = max(1, int(round(cfg.log_interval / dt))) if log_path else 0

    psi1_hist = (np.zeros(max_steps + 1) if ctype == 1 else np.zeros(1))
    pos_hist = (np.zeros((n, max_steps + 1, 2)) if ctype == 3
                else np.zeros((1, 1, 2)))
    series = np.zeros((max_steps // series_stride + 2, 5))
    traj = (np.zeros(((max_steps // traj_stride + 2) * n, 11))
            if traj_stride else np.zeros((1, 11)))

    a, p, f, w, dzs = terrain.arrays()
    (status, steps_done, d_min, journey, energy, switches,
     n_series, n_traj) = _trial_loop(
        state.q, state.qd, state.wheel_speeds,
        state.k_alpha, state.joint_rest, state.joint_damping,
        a, p, f, w, dzs,
        cfg.mass, cfg.yaw_inertia, cfg.wheel_radius, cfg.wheel_separation,
        cfg.half_link,
        cfg.gravity, cfg.mu, cfg.c_v, cfg.c_psi, cfg.lateral_damping,
        cfg.block_slope_deg,
        k_trans, c_trans, cfg.speed_limit,
        cfg.v0, cfg.kp, cfg.km, cfg.tau_max,
        cfg.k_low, cfg.k_high, cfg.tau_env_threshold, cfg.switch_dwell,
        cfg.mj_joint_kp, cfg.mj_joint_kd,
        ctype, nav,
        cfg.target[0], cfg.target[1], cfg.success_radius,
        waypoints, cfg.lookahead,
        dt, max_steps, delay_steps,
        psi1_hist, pos_hist,
        series_stride, series,
        traj_stride, traj)

    L_dist = math.hypot(cfg.target[0] - cfg.start[0],
                        cfg.target[1] - cfg.start[1])
    d_ef = L_dist - d_min
    ncr = d_ef / L_dist
    nef = d_ef / journey if d_ef > 0 and journey > 0 else None
    nec = energy / d_ef if d_ef > 0 else None
    if status == _DIVERGED:
        fallback_flags.append("integration-diverged")

    record = TrialRecord(
        terrain_id=terrain_id_of(terrain),
        group=terrain.group,
        method=str(method),
        seed=int(seed),
        success=status == _SUCCESS,
        diverged=status == _DIVERGED,
        t_total=steps_done * dt,
        dist_start_target=L_dist,
        d_min=d_min,
        d_ef=d_ef,
        journey=journey,
        energy=energy,
        ncr=ncr,
        nef=nef,
        nec=nec,
        switch_count=int(switches),
        fallback_flags=fallback_flags,
        config=cfg.to_dict(),
        series={
            "t": series[:n_series, 0].tolist(),
            "x": series[:n_series, 1].tolist(),
            "y": series[:n_series, 2].tolist(),
            "dist": series[:n_series, 3].tolist(),
            "k_alpha": series[:n_series, 4].tolist(),
        },
    )
    if log_path is not None:
        write_trajectory_log(log_path, traj[:n_traj], terrain, cfg)
    return record


def write_trajectory_log(path, rows: np.ndarray, terrain: TerrainParams,
                         cfg: SimConfig) -> None:
    """Write a trajectory CSV with provenance comment lines."""
    from . import GENERATOR_VERSION
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"# generator_version={GENERATOR_VERSION}\n")
        fh.write(f"# terrain_id={terrain_id_of(terrain)}\n")
        fh.write(f"# config={json.dumps(cfg.to_dict())}\n")
        fh.write(",".join(TRAJ_COLUMNS) + "\n")
        for row in rows:
            fh.write("%.6f,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n"
                     % (row[0], int(row[1]), row[2], row[3], row[4], row[5],
                        row[6], row[7], row[8], row[9], row[10]))


# ---------------------------------------------------------------------------
# Benchmark harness.

def _trial_task(args: tuple) -> dict:
    terrain_entry, method_name, config_dict, terrain_dir = args
    cfg = SimConfig.from_dict(config_dict)
    from .terrain import load_terrain
    try:
        if terrain_dir is not None and "file" in terrain_entry:
            params, _ = load_terrain(Path(terrain_dir) / terrain_entry["file"])
        else:
            params = TerrainParams(
                amplitudes=tuple(terrain_entry["A"]),
                phases=tuple(terrain_entry["P"]),
                frequencies=tuple(terrain_entry["f"]),
                vertical_scale=terrain_entry["dzs"],
                seed=terrain_entry["seed"],
                group=terrain_entry["group"],
                weights=tuple(terrain_entry["weights"]),
            )
    except OSError as exc:
        L = math.hypot(cfg.target[0] - cfg.start[0],
                       cfg.target[1] - cfg.start[1])
        return TrialRecord(
            terrain_id=terrain_entry.get("terrain_id", "unknown"),
            group=terrain_entry.get("group", "unclassified"),
            method=method_name, seed=terrain_entry.get("seed", 0),
            success=False, diverged=False, t_total=0.0,
            dist_start_target=L, d_min=L, d_ef=0.0, journey=0.0,
            energy=0.0, ncr=0.0, nef=None, nec=None, switch_count=0,
            fallback_flags=[f"terrain-load-error:{exc}"],
            config=cfg.to_dict(), series={},
        ).to_dict()
    record = run_trial(params, method_name, cfg,
                       seed=terrain_entry.get("seed", 0))
    return record.to_dict()


def aggregate_trials(trials: list) -> dict:
    """Per (group, method) aggregates over trial records (or their dicts)."""
    rows = [t.to_dict() if isinstance(t, TrialRecord) else t for t in trials]
    out: dict = {}
    for row in rows:
        bucket = out.setdefault(row["group"], {}).setdefault(row["method"], {
            "trials": 0, "successes": 0, "ncr_sum": 0.0,
            "nef_sum": 0.0, "nef_defined": 0,
            "nec_sum": 0.0, "nec_defined": 0,
        })
        bucket["trials"] += 1
        bucket["successes"] += 1 if row["success"] else 0
        bucket["ncr_sum"] += row["ncr"]
        if row["nef"] is not None:
            bucket["nef_sum"] += row["nef"]
            bucket["nef_defined"] += 1
        if row["nec"] is not None:
            bucket["nec_sum"] += row["nec"]
            bucket["nec_defined"] += 1
    result: dict = {}
    for group in sorted(out):
        result[group] = {}
        for method in METHOD_ORDER:
            if method not in out[group]:
                continue
            b = out[group][method]
            result[group][method] = {
                "trials": b["trials"],
                "successes": b["successes"],
                "nsr": b["successes"] / b["trials"],
                "mean_ncr": b["ncr_sum"] / b["trials"],
                "mean_nef": (b["nef_sum"] / b["nef_defined"]
                             if b["nef_defined"] else None),
                "nef_excluded": b["trials"] - b["nef_defined"],
                "mean_nec": (b["nec_sum"] / b["nec_defined"]
                             if b["nec_defined"] else None),
                "nec_excluded": b["trials"] - b["nec_defined"],
            }
    return result


@dataclass
class BenchReport:
    """Aggregated benchmark results with full per-trial provenance."""

    generator_version: str
    dataset_ref: str
    methods: list
    config: dict
    trials: list            # TrialRecord dicts
    aggregates: dict
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        return cls(**data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BenchReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def run_benchmark(manifest, methods, config: SimConfig | None = None,
                  jobs: int = 1, terrain_dir=None) -> BenchReport:
    """Run all (terrain, method) pairs of a dataset and aggregate.

    ``manifest`` is a manifest dict or a path to manifest.json (terrain
    files are then read from its directory). Trials execute across up to
    ``jobs`` processes; the report content does not depend on ``jobs``.
    """
    from . import GENERATOR_VERSION
    cfg = config or SimConfig()
    dataset_ref = "inline"
    if not isinstance(manifest, dict):
        manifest_path = Path(manifest)
        dataset_ref = str(manifest_path)
        if terrain_dir is None:
            terrain_dir = manifest_path.parent
        with open(manifest_path) as fh:
            manifest = json.load(fh)

    method_names = [str(m) for m in methods]
    for name in method_names:
        MethodSpec.parse(name)  # validate early
    method_names = [m for m in METHOD_ORDER if m in method_names]

    tasks = [(entry, m, cfg.to_dict(),
              str(terrain_dir) if terrain_dir is not None else None)
             for entry in manifest["terrains"] for m in method_names]

    t0 = time.perf_counter()
    if jobs <= 1:
        rows = [_trial_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_trial_task, tasks, chunksize=1))
    wall = time.perf_counter() - t0

    return BenchReport(
        generator_version=GENERATOR_VERSION,
        dataset_ref=dataset_ref,
        methods=method_names,
        config=cfg.to_dict(),
        trials=rows,
        aggregates=aggregate_trials(rows),
        timing={"wall_s": wall, "jobs": jobs},
    )


# ---------------------------------------------------------------------------
# Table formatting.

def format_group_table(aggregates: dict, group: str) -> str:
    """Plain-text metrics table for one terrain group."""
    lines = [f"Group {group}",
             f"{'Method':<12}{'NSR %':>8}{'mean NCR %':>12}"
             f"{'mean NEF':>10}{'mean NEC J/m':>14}"]
    groups = aggregates.get(group, {})
    for method in METHOD_ORDER:
        if method not in groups:
            continue
        a = groups[method]
        nef = f"{a['mean_nef']:.3f}" if a["mean_nef"] is not None else "-"
        nec = f"{a['mean_nec']:.1f}" if a["mean_nec"] is not None else "-"
        lines.append(f"{method:<12}{100.0 * a['nsr']:>8.1f}"
                     f"{100.0 * a['mean_ncr']:>12.1f}{nef:>10}{nec:>14}")
    return "\n".join(lines) + "\n"


def aggregates_csv(aggregates: dict) -> str:
    """All groups as CSV rows."""
    lines = ["group,method,trials,nsr,mean_ncr,mean_nef,mean_nec,"
             "nef_excluded,nec_excluded"]
    for group in sorted(aggregates):
        for method in METHOD_ORDER:
            if method not in aggregates[group]:
                continue
            a = aggregates[group][method]
            nef = "" if a["mean_nef"] is None else f"{a['mean_nef']:.6g}"
            nec = "" if a["mean_nec"] is None else f"{a['mean_nec']:.6g}"
            lines.append(f"{group},{method},{a['trials']},{a['nsr']:.6g},"
                         f"{a['mean_ncr']:.6g},{nef},{nec},"
                         f"{a['nef_excluded']},{a['nec_excluded']}")
    return "\n".join(lines) + "\n"
