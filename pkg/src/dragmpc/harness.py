"""Closed-loop benchmark harness.

Runs the three controller variants against the planar simulator on a
circular reference, manages the disturbance-learning pipeline (baseline
run, stratified subsampling, per-axis GP fits), computes tracking and
feasibility metrics, and persists per-tick and summary CSV files.

Everything here is deterministic in (config, seed): the simulator and
solver are deterministic, the only random choices (training-sample
placement, hyperparameter restarts) derive from the scenario seed, and no
wall-clock values are written to disk.
"""

import csv
import io
import json
import math
import os
import time

import numpy as np
import yaml

from . import conic, gp
from .flat_dynamics import ACCEL_INDICES, JERK_INDICES, N_STATES
from .mpc import (FMPC, SOCP_LEARN, SOCP_NOLEARN, Controller, MPCConfig,
                  assemble_socp, zero_step_models)
from .tightening import ChanceParams
from .vehicle_sim import (LinearRotorDrag, Multirotor, NoDrag, QuadraticDrag,
                          RigidBodyState, SimulationDivergedError,
                          body_z_axis, drag_force, measure_disturbance)

__all__ = [
    "ScenarioConfig", "TrainingData", "ExperimentRecord",
    "InsufficientDataError", "SchemaError",
    "reference_state", "reference_input", "make_drag_model",
    "run_single", "collect_training_data", "fit_gp_models", "run_scenario",
    "absolute_path_error", "thrust_angle_series",
    "write_tick_csv", "read_tick_csv", "write_summary_csv",
    "record_from_rows", "TICK_COLUMNS", "SUMMARY_COLUMNS",
]

TICK_COLUMNS = ("t", "px", "pz", "vx", "vz", "ref_x", "ref_z", "Tx", "Tz",
                "thrust_norm", "thrust_angle", "status", "solver_iters",
                "r_primal", "r_dual", "gap")
SUMMARY_COLUMNS = ("controller", "drag", "omega", "abs_path_err_mean",
                   "abs_path_err_rms", "thrust_angle_max", "infeasible",
                   "infeasible_onset_t")

VARIANTS = (FMPC, SOCP_NOLEARN, SOCP_LEARN)
DRAG_MODELS = ("none", "linear", "quadratic")


class InsufficientDataError(RuntimeError):
    """Fewer feasible ticks than requested training samples."""


class SchemaError(ValueError):
    """A config or CSV file does not match the documented schema."""


class ScenarioConfig:
    """Benchmark scenario: drag model x controller variants x omega sweep.

    Keys of the YAML config file mirror the constructor arguments
    one-to-one; unknown keys are rejected.
    """

    __slots__ = (
        "name", "drag_model", "drag_d", "drag_rho", "drag_cd", "drag_area",
        "variants", "amplitude", "omegas", "duration", "horizon", "dt",
        "mass", "gravity", "q_output", "q_deriv", "r_input", "terminal_cost",
        "p_b", "p_c", "theta_max_deg", "t_max", "n_train", "feature_mask",
        "seed", "noise_std", "solver_eps", "solver_eps_gap",
        "solver_max_iter", "k_fail", "warm_start", "kp_pos", "kd_pos",
        "out_dir",
    )

    def __init__(self, name="scenario", drag_model="linear",
                 drag_d=(1.0, 1.0), drag_rho=100.0, drag_cd=0.5,
                 drag_area=0.159, variants=VARIANTS, amplitude=0.3,
                 omegas=(2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 4.6, 5.0),
                 duration=20.0, horizon=10, dt=0.05, mass=1.0, gravity=9.81,
                 q_output=(300.0, 300.0, 300.0, 0.0), q_deriv=(0.0, 0.0, 0.0),
                 r_input=(0.3, 0.3, 0.3, 0.3), terminal_cost=True,
                 p_b=0.95, p_c=0.95, theta_max_deg=45.0, t_max=30.0,
                 n_train=20, feature_mask=(1, 9), seed=0, noise_std=0.0,
                 solver_eps=3e-4, solver_eps_gap=3e-3, solver_max_iter=4000,
                 k_fail=5, warm_start=True, kp_pos=25.0, kd_pos=10.0,
                 out_dir="results"):
        self.name = str(name)
        if drag_model not in DRAG_MODELS:
            raise SchemaError(f"drag_model must be one of {DRAG_MODELS}")
        self.drag_model = drag_model
        self.drag_d = tuple(float(x) for x in drag_d)
        self.drag_rho = float(drag_rho)
        self.drag_cd = float(drag_cd)
        self.drag_area = float(drag_area)
        variants = tuple(variants)
        for v in variants:
            if v not in VARIANTS:
                raise SchemaError(f"unknown controller variant {v!r}")
        self.variants = variants
        self.amplitude = float(amplitude)
        self.omegas = tuple(float(w) for w in omegas)
        if not self.omegas or any(w <= 0.0 for w in self.omegas):
            raise SchemaError("omegas must be positive and non-empty")
        self.duration = float(duration)
        # enough cycles that transient-trimmed statistics mean something
        min_needed = 3.0 * 2.0 * math.pi / min(self.omegas)
        if self.duration < min_needed:
            raise SchemaError(
                f"duration {self.duration} s covers fewer than 3 periods "
                f"at omega={min(self.omegas)} (need >= {min_needed:.1f} s)")
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.mass = float(mass)
        self.gravity = float(gravity)
        self.q_output = tuple(float(x) for x in q_output)
        self.q_deriv = tuple(float(x) for x in q_deriv)
        self.r_input = tuple(float(x) for x in r_input)
        self.terminal_cost = bool(terminal_cost)
        self.p_b = float(p_b)
        self.p_c = float(p_c)
        self.theta_max_deg = float(theta_max_deg)
        self.t_max = float(t_max)
        self.n_train = int(n_train)
        self.feature_mask = tuple(int(i) for i in feature_mask)
        self.seed = int(seed)
        self.noise_std = float(noise_std)
        self.solver_eps = float(solver_eps)
        self.solver_eps_gap = float(solver_eps_gap)
        self.solver_max_iter = int(solver_max_iter)
        self.k_fail = int(k_fail)
        self.warm_start = bool(warm_start)
        self.kp_pos = float(kp_pos)
        self.kd_pos = float(kd_pos)
        self.out_dir = str(out_dir)

    @classmethod
    def from_yaml(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise SchemaError("config root must be a mapping")
        unknown = set(doc) - set(cls.__slots__)
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__slots__}

    def mpc_config(self, variant):
        chance = ChanceParams(p_b=self.p_b, p_c=self.p_c,
                              theta_max=math.radians(self.theta_max_deg),
                              t_max=self.t_max)
        solver = conic.SolverSettings(eps=self.solver_eps,
                                      eps_gap=self.solver_eps_gap,
                                      eps_infeas=1e-5,
                                      max_iter=self.solver_max_iter)
        return MPCConfig(horizon=self.horizon, dt=self.dt, mass=self.mass,
                         gravity=self.gravity, q_output=self.q_output,
                         q_deriv=self.q_deriv, r_input=self.r_input,
                         terminal_cost=self.terminal_cost, chance=chance,
                         variant=variant, feature_mask=self.feature_mask,
                         solver=solver, warm_start=self.warm_start,
                         k_fail=self.k_fail)


def make_drag_model(cfg):
    """Plant drag model named by the scenario."""
    if cfg.drag_model == "none":
        return NoDrag()
    if cfg.drag_model == "linear":
        return LinearRotorDrag(d=cfg.drag_d)
    return QuadraticDrag(rho=cfg.drag_rho, c_d=cfg.drag_cd,
                         area=cfg.drag_area)


def reference_state(t, omega, amplitude):
    """Flat state of the circular reference [amp sin(wt), amp cos(wt)]
    embedded in the x-z plane (y and yaw identically zero)."""
    z = np.zeros(N_STATES)
    s, c = math.sin(omega * t), math.cos(omega * t)
    z[0:4] = amplitude * np.array(
        [s, omega * c, -omega ** 2 * s, -omega ** 3 * c])
    z[8:12] = amplitude * np.array(
        [c, -omega * s, -omega ** 2 * c, omega ** 3 * s])
    return z


def reference_input(t, omega, amplitude):
    """Flat input (snap, yaw rate) of the circular reference at time t."""
    s, c = math.sin(omega * t), math.cos(omega * t)
    return np.array([amplitude * omega ** 4 * s, 0.0,
                     amplitude * omega ** 4 * c, 0.0])


class ExperimentRecord:
    """One (controller, drag, omega) closed-loop run.

    `rows` is a list of per-tick tuples in TICK_COLUMNS order.  `summary`
    is recomputable from the rows (see `record_from_rows`); `wall_time`
    is measurement-only and never persisted.
    """

    __slots__ = ("scenario_id", "controller", "drag_model", "omega",
                 "amplitude", "dt", "rows", "summary", "wall_time")

    def __init__(self, scenario_id, controller, drag_model, omega, amplitude,
                 dt, rows, summary, wall_time=float("nan")):
        self.scenario_id = scenario_id
        self.controller = controller
        self.drag_model = drag_model
        self.omega = omega
        self.amplitude = amplitude
        self.dt = dt
        self.rows = rows
        self.summary = summary
        self.wall_time = wall_time


class TrainingData:
    """Disturbance samples selected from a baseline run.

    `inputs` are masked flat-state features (n, len(mask)); `targets` the
    matching world-frame force residuals per planar axis (n, 2).  The full
    unsubsampled buffers stay available for hold-out evaluation.
    """

    __slots__ = ("inputs", "targets", "indices", "feature_mask", "seed",
                 "omega", "drag_model", "all_tags", "all_targets",
                 "baseline_record")

    def __init__(self, inputs, targets, indices, feature_mask, seed, omega,
                 drag_model, all_tags, all_targets, baseline_record):
        self.inputs = inputs
        self.targets = targets
        self.indices = indices
        self.feature_mask = feature_mask
        self.seed = seed
        self.omega = omega
        self.drag_model = drag_model
        self.all_tags = all_tags
        self.all_targets = all_targets
        self.baseline_record = baseline_record

    def to_json(self):
        doc = {
            "feature_mask": list(self.feature_mask),
            "seed": int(self.seed),
            "omega": float(self.omega),
            "drag_model": self.drag_model,
            "indices": [int(i) for i in self.indices],
            "inputs": [[float(v) for v in row] for row in self.inputs],
            "targets": [[float(v) for v in row] for row in self.targets],
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def _scenario_id(controller, drag_model, omega):
    return f"{controller}_{drag_model}_w{omega:g}"


def run_single(cfg, variant, omega, gp_models=None, collect=None):
    """Simulate one closed-loop run; returns an ExperimentRecord.

    The controller plans from a model-consistent flat state (measured
    position/velocity, previous plan's acceleration/jerk) while the
    realized acceleration enters only the step-0 feasibility check and,
    when `collect` is given, the (tag, disturbance) training buffers.
    The tick command is executed by tracking the planned quartic segment
    with a position/velocity PD and evaluating the controller's affine
    thrust map along the segment; the commanded tilt is pre-warped through
    the known attitude inner-loop dynamics (theta_cmd = theta_des +
    (theta_ddot_des + kd theta_dot_des) / kp) so the realized direction
    follows the planned one without lag or resonance gain.  Commands are
    saturated at the platform envelope (tilt theta_max, thrust t_max)
    before being handed to the plant, as a flight controller would.

    Aborts after cfg.k_fail consecutive non-optimal ticks; the record is
    then flagged infeasible with the onset time of the fatal streak.
    """
    t_start = time.perf_counter()
    mpc_cfg = cfg.mpc_config(variant)
    ctl = Controller(mpc_cfg, gp_models=gp_models)
    m, grav, dt = cfg.mass, cfg.gravity, cfg.dt
    amp = cfg.amplitude
    rng = np.random.default_rng(cfg.seed) if cfg.noise_std > 0.0 else None

    z0 = reference_state(0.0, omega, amp)
    t_ref0 = m * z0[ACCEL_INDICES] + np.array([0.0, 0.0, m * grav])
    state = RigidBodyState(np.array([z0[0], z0[8]]),
                           np.array([z0[1], z0[9]]),
                           math.atan2(t_ref0[0], t_ref0[2]), 0.0)
    sim = Multirotor(state, drag=make_drag_model(cfg), mass=m, gravity=grav)

    z_meas = z0.copy()
    z_feas = z0.copy()
    horizon = mpc_cfg.horizon
    n_ticks = int(round(cfg.duration / dt))
    kp_t, kd_t = cfg.kp_pos, cfg.kd_pos

    rows = []
    died_onset = None

    th_lim = math.radians(cfg.theta_max_deg)
    t_lim = cfg.t_max

    # Command update grid: 200 Hz staircase against the 1 kHz plant; the
    # attitude loop bandwidth (~20 rad/s) cannot tell the difference.
    n_cmd = max(1, int(round(dt / (5.0 * sim.dt_sim))))
    dt_cmd = dt / n_cmd
    hd = 1e-3
    taus = np.arange(n_cmd) * dt_cmd
    all_taus = np.concatenate([taus, taus - hd, taus + hd])

    def flat_grid(seg):
        """Plan states (len(all_taus), 13) along the quartic segment."""
        zf = np.zeros((all_taus.size, N_STATES))
        powers = np.stack([np.ones_like(all_taus), all_taus,
                           all_taus ** 2 / 2.0, all_taus ** 3 / 6.0,
                           all_taus ** 4 / 24.0], axis=1)
        for deriv in range(4):
            vand = np.zeros((all_taus.size, 5))
            vand[:, deriv:] = powers[:, :5 - deriv]
            zf[:, deriv] = vand @ seg[0]
            zf[:, 8 + deriv] = vand @ seg[1]
        return zf

    for i in range(n_ticks):
        t = i * dt
        z_refs = np.stack([reference_state(t + (k + 1) * dt, omega, amp)
                           for k in range(horizon)])
        # inputs act over whole intervals; sample their reference midways
        v_refs = np.stack([reference_input(t + (k + 0.5) * dt, omega, amp)
                           for k in range(horizon)])
        res = ctl.tick(z_meas, z_refs, v_refs, z_feas)

        if res.fallback:
            t_2d = res.t_d[[0, 2]]
            ang = min(max(math.atan2(t_2d[0], t_2d[1]), -th_lim), th_lim)
            mag = min(float(np.linalg.norm(t_2d)), t_lim)
            sim.step(mag * np.array([math.sin(ang), math.cos(ang)]), dt)
            state = sim.state
            thrust_vec = mag * body_z_axis(state.theta)
        else:
            seg = np.array([
                [z_meas[0], z_meas[1], z_meas[2], z_meas[3], res.v_d[0]],
                [z_meas[8], z_meas[9], z_meas[10], z_meas[11], res.v_d[2]]])
            h1, zs1 = res.thrust_map
            zf_grid = flat_grid(seg)
            # planned thrust along the segment, (3 n_cmd, 2): current grid
            # then the -hd and +hd shifts used for tilt derivatives
            tp = zf_grid - zs1
            tp = (np.hstack([np.ones((tp.shape[0], 1)), tp])
                  @ h1.T)[:, [0, 2]]
            p_plan = zf_grid[:n_cmd][:, [0, 8]]
            v_plan = zf_grid[:n_cmd][:, [1, 9]]
            for j in range(n_cmd):
                mc = m * (kp_t * (p_plan[j] - sim.state.p)
                          + kd_t * (v_plan[j] - sim.state.v))
                t_cmd = tp[j] + mc
                # invert the inner loop: command the tilt that makes the
                # realized angle follow the planned one exactly
                a0 = math.atan2(tp[n_cmd + j, 0] + mc[0],
                                tp[n_cmd + j, 1] + mc[1])
                a1 = math.atan2(t_cmd[0], t_cmd[1])
                a2 = math.atan2(tp[2 * n_cmd + j, 0] + mc[0],
                                tp[2 * n_cmd + j, 1] + mc[1])
                th_dot = (a2 - a0) / (2.0 * hd)
                th_ddot = (a2 - 2.0 * a1 + a0) / hd ** 2
                th_cmd = a1 + (th_ddot + sim.kd * th_dot) / sim.kp
                th_cmd = min(max(th_cmd, -th_lim), th_lim)
                t_mag = min(math.hypot(t_cmd[0], t_cmd[1]), t_lim)
                sim.step(t_mag * np.array([math.sin(th_cmd),
                                           math.cos(th_cmd)]), dt_cmd)
            state = sim.state
            thrust_vec = t_mag * body_z_axis(state.theta)

        accel = (thrust_vec + drag_force(sim.drag, state)) / m \
            - np.array([0.0, grav])
        if collect is not None and not res.fallback:
            d_hat, tag = measure_disturbance(state, accel, thrust_vec, m,
                                             grav, cfg.noise_std, rng)
            collect[0].append(tag)
            collect[1].append(d_hat)

        t_next = (i + 1) * dt
        ref_next = reference_state(t_next, omega, amp)
        angle = _thrust_angle(thrust_vec)
        rows.append((
            t_next, float(state.p[0]), float(state.p[1]),
            float(state.v[0]), float(state.v[1]),
            float(ref_next[0]), float(ref_next[8]),
            float(thrust_vec[0]), float(thrust_vec[1]),
            float(np.linalg.norm(thrust_vec)), angle,
            res.status, res.iterations,
            float(res.r_primal), float(res.r_dual), float(res.gap)))

        if res.fallback and res.infeasible_streak >= mpc_cfg.k_fail:
            died_onset = t - (mpc_cfg.k_fail - 1) * dt
            break

        z_next = np.zeros(N_STATES)
        z_next[0], z_next[8] = state.p
        z_next[1], z_next[9] = state.v
        if res.fallback:
            z_next[[2, 3]] = z_meas[[2, 3]]
            z_next[[10, 11]] = z_meas[[10, 11]]
        else:
            z_next[[2, 10]] = res.z_d[ACCEL_INDICES][[0, 2]]
            z_next[[3, 11]] = res.z_d[JERK_INDICES][[0, 2]]
        z_meas = z_next
        z_feas = z_next.copy()
        z_feas[[2, 10]] = accel

    record = record_from_rows(
        _scenario_id(variant, cfg.drag_model, omega), variant,
        cfg.drag_model, omega, amp, dt, rows,
        theta_max=math.radians(cfg.theta_max_deg), t_max=cfg.t_max,
        infeasible_onset=died_onset)
    record.wall_time = time.perf_counter() - t_start
    return record


def _thrust_angle(thrust_vec):
    """Achieved thrust angle from vertical; pi/2 sentinel when the vertical
    component is non-positive."""
    if thrust_vec[1] <= 0.0:
        return math.pi / 2
    return math.atan2(abs(float(thrust_vec[0])), float(thrust_vec[1]))


def record_from_rows(scenario_id, controller, drag_model, omega, amplitude,
                     dt, rows, theta_max=math.pi / 4, t_max=30.0,
                     infeasible_onset=None):
    """Assemble a record with its summary computed from the per-tick rows."""
    period_ticks = int(round(2.0 * math.pi / omega / dt))
    trimmed = rows[period_ticks:]
    errs = np.array([math.hypot(r[1] - r[5], r[2] - r[6]) for r in trimmed])
    angles = np.array([r[10] for r in rows])
    norms = np.array([r[9] for r in rows])
    iters = np.array([r[12] for r in rows], dtype=float)
    infeasible = infeasible_onset is not None
    summary = {
        "abs_path_err_mean": float(np.mean(errs)) if errs.size else math.nan,
        "abs_path_err_rms": float(np.sqrt(np.mean(errs ** 2)))
        if errs.size else math.nan,
        "abs_path_err_max": float(np.max(errs)) if errs.size else math.nan,
        "thrust_angle_max": float(np.max(angles)) if angles.size else math.nan,
        "thrust_angle_p95": float(np.percentile(angles, 95.0))
        if angles.size else math.nan,
        "angle_violations": int(np.sum(angles > theta_max)),
        "thrust_violations": int(np.sum(norms > t_max)),
        "n_ticks": len(rows),
        "mean_solver_iters": float(np.mean(iters)) if iters.size else math.nan,
        "infeasible": infeasible,
        "infeasible_onset_t": float(infeasible_onset)
        if infeasible else math.nan,
    }
    return ExperimentRecord(scenario_id, controller, drag_model, omega,
                            amplitude, dt, rows, summary)


def absolute_path_error(record):
    """Transient-trimmed mean Euclidean deviation from the reference."""
    return record.summary["abs_path_err_mean"]


def thrust_angle_series(record):
    """Per-tick achieved thrust angles with (max, 95th percentile)."""
    angles = np.array([r[10] for r in record.rows])
    if angles.size == 0:
        return angles, (math.nan, math.nan)
    return angles, (float(np.max(angles)),
                    float(np.percentile(angles, 95.0)))


def collect_training_data(cfg, omega=None):
    """Baseline (no-learning) run plus stratified training subsample.

    Buffers every feasible tick's (flat-state tag, disturbance residual)
    pair, then stratifies the time axis into n_train Latin-hypercube cells
    and keeps one seeded sample per cell.  Raises InsufficientDataError
    when fewer than n_train feasible ticks exist.
    """
    omega = cfg.omegas[0] if omega is None else float(omega)
    tags, targets = [], []
    baseline = run_single(cfg, SOCP_NOLEARN, omega, collect=(tags, targets))
    n = len(tags)
    if n < cfg.n_train:
        raise InsufficientDataError(
            f"{n} feasible ticks < n_train={cfg.n_train} "
            f"(omega={omega}, drag={cfg.drag_model})")
    rng = np.random.default_rng(cfg.seed)
    edges = np.linspace(0.0, n, cfg.n_train + 1)
    idx = np.minimum((edges[:-1] + rng.random(cfg.n_train)
                      * np.diff(edges)).astype(np.intp), n - 1)
    all_tags = np.stack(tags)
    all_targets = np.stack(targets)
    mask = list(cfg.feature_mask)
    return TrainingData(all_tags[idx][:, mask], all_targets[idx], idx,
                        cfg.feature_mask, cfg.seed, omega, cfg.drag_model,
                        all_tags, all_targets, baseline)


def fit_gp_models(data, seed=None):
    """Per-axis GP fits from a training set.

    The planar x and z axes are fitted with marginal-likelihood optimized
    hyperparameters.  The out-of-plane y axis carries no excitation, so it
    gets an observation-anchored quiescent prior (vanishing signal power)
    whose tightening contribution is negligible.
    """
    seed = data.seed if seed is None else seed
    models = {}
    for axis, col in ((0, 0), (2, 1)):
        hyp = gp.optimize_hyperparams(data.inputs, data.targets[:, col],
                                      seed=seed)
        models[axis] = gp.fit(data.inputs, data.targets[:, col], hyp)
    quiet = gp.SEHyperparams(1e-8, 1e-8, np.ones(data.inputs.shape[1]))
    models[1] = gp.fit(data.inputs[:2], np.zeros(2), quiet)
    return models


def run_scenario(cfg, out_dir=None, workers=1):
    """Run the configured sweep; returns records and writes CSV outputs.

    Per omega: the baseline runs first (it doubles as the training-data
    source), then the remaining variants.  The learning variant is skipped
    with a failed marker when the baseline yields insufficient data.
    """
    out_dir = cfg.out_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    if workers > 1:
        records = []
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for recs in pool.map(_run_omega_point,
                                 [(cfg, w) for w in cfg.omegas]):
                records.extend(recs)
    else:
        records = []
        for w in cfg.omegas:
            records.extend(_run_omega_point((cfg, w)))

    for rec in records:
        write_tick_csv(os.path.join(out_dir, f"ticks_{rec.scenario_id}.csv"),
                       rec)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), records)
    meta = {"config": _jsonable(cfg.to_dict())}
    with open(os.path.join(out_dir, "scenario.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return records


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _run_omega_point(args):
    cfg, omega = args
    records = []
    need_learn = SOCP_LEARN in cfg.variants
    need_baseline = need_learn or SOCP_NOLEARN in cfg.variants
    if FMPC in cfg.variants:
        records.append(run_single(cfg, FMPC, omega))
    data = None
    if need_baseline:
        if need_learn:
            try:
                data = collect_training_data(cfg, omega)
                baseline = data.baseline_record
            except InsufficientDataError:
                baseline = run_single(cfg, SOCP_NOLEARN, omega)
        else:
            baseline = run_single(cfg, SOCP_NOLEARN, omega)
        if SOCP_NOLEARN in cfg.variants:
            records.append(baseline)
    if need_learn:
        if data is None:
            # no usable training set at this omega; report the learning
            # run as failed-by-missing-data rather than skipping the row
            rec = record_from_rows(
                _scenario_id(SOCP_LEARN, cfg.drag_model, omega), SOCP_LEARN,
                cfg.drag_model, omega, cfg.amplitude, cfg.dt, [],
                theta_max=math.radians(cfg.theta_max_deg), t_max=cfg.t_max,
                infeasible_onset=0.0)
            records.append(rec)
        else:
            models = fit_gp_models(data)
            records.append(run_single(cfg, SOCP_LEARN, omega,
                                      gp_models=models))
    return records


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_tick_csv(path, record):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TICK_COLUMNS)
    for row in record.rows:
        writer.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_tick_csv(path):
    """Parse a per-tick CSV back into row tuples; schema-checked."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TICK_COLUMNS:
            raise SchemaError(f"{path}: expected columns {TICK_COLUMNS}, "
                              f"got {header}")
        rows = []
        for rec in reader:
            if len(rec) != len(TICK_COLUMNS):
                raise SchemaError(f"{path}: row width {len(rec)}")
            vals = [float(x) for x in rec[:11]]
            rows.append(tuple(vals) + (rec[11], int(rec[12]),
                                       float(rec[13]), float(rec[14]),
                                       float(rec[15])))
    return rows


def write_summary_csv(path, records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    ordered = sorted(records, key=lambda r: (r.drag_model, r.omega,
                                             VARIANTS.index(r.controller)))
    for rec in ordered:
        s = rec.summary
        writer.writerow([
            rec.controller, rec.drag_model, _fmt(rec.omega),
            _fmt(s["abs_path_err_mean"]), _fmt(s["abs_path_err_rms"]),
            _fmt(s["thrust_angle_max"]), _fmt(bool(s["infeasible"])),
            _fmt(s["infeasible_onset_t"])])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def dump_first_tick_program(cfg, variant, omega, path):
    """Assemble the first tick's conic program and write the interchange
    file (prior-only models for the learning variant)."""
    mpc_cfg = cfg.mpc_config(variant if variant != SOCP_LEARN
                             else SOCP_NOLEARN)
    ctl = Controller(mpc_cfg)
    z0 = reference_state(0.0, omega, cfg.amplitude)
    z_refs = np.stack([reference_state((k + 1) * cfg.dt, omega, cfg.amplitude)
                       for k in range(cfg.horizon)])
    v_refs = np.stack([reference_input((k + 0.5) * cfg.dt, omega,
                                       cfg.amplitude)
                       for k in range(cfg.horizon)])
    zstars = [z0] * (cfg.horizon + 1)
    step_models = None
    if mpc_cfg.variant != FMPC:
        step_models = zero_step_models(cfg.horizon + 1)
    prog, _, _, _ = assemble_socp(z0, z_refs, zstars, step_models, mpc_cfg,
                                  ctl.system, ctl.q_terminal, v_refs, z0)
    conic.write_program(prog, path)
    return prog
