"""Receding-horizon controllers over the flat model.

Three variants share one assembly and solve path:

* `fmpc`: tracking and input cost only, no feasibility constraints; the
  SOCP optimum coincides with the underlying least-squares QP.
* `socp_nolearn`: thrust ball and tilt-cone constraints with the
  disturbance and its covariance pinned at zero (deterministic limits).
* `socp_learn`: first-order GP disturbance posteriors enter both the mean
  thrust map and the constraint tightening, and the commanded thrust is
  compensated by the predicted disturbance.

The decision vector stacks predicted states z_1..z_N, inputs v_0..v_{N-1},
cost epigraphs gamma1/gamma2 and the tightening intermediates
(alpha, beta, r) for steps 0..N.  Step 0 is the pinned measurement, so its
feasibility block degenerates to a constant-vector cone membership test:
when the realized thrust (actuation plus whatever disturbance acted on the
vehicle) has left the limit set, the program is reported primal infeasible
rather than silently replanned around.

The step-N tracking weight defaults to the Riccati cost-to-go of the
running cost.  Without it the ten-step horizon truncates the slow modes of
the snap-weighted tracking problem and the receding-horizon loop is
marginally damped (spectral radius about 0.99, against 0.95 with the
cost-to-go), which lets per-tick model mismatch ring up 50x.
"""

import math

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_discrete_are

from . import conic
from .flat_dynamics import (ACCEL_INDICES, N_INPUTS, N_OUTPUTS, N_STATES,
                            build_flat_system)
from .gp_linear import lin_posterior
from .tightening import (AffineVector, ChanceParams, VariableLayout,
                         build_ball_socs, build_cone_ball_socs,
                         build_cone_halfspace_soc, build_cost_socs,
                         thrust_affine_map)

FMPC = "fmpc"
SOCP_NOLEARN = "socp_nolearn"
SOCP_LEARN = "socp_learn"
_VARIANTS = (FMPC, SOCP_NOLEARN, SOCP_LEARN)

_N_AUG = N_STATES + 1


class MPCConfig:
    """Controller parameters; defaults match the benchmark scenario."""

    __slots__ = ("horizon", "dt", "mass", "gravity", "q_output", "q_deriv",
                 "r_input", "terminal_cost", "chance", "variant",
                 "feature_mask", "solver", "warm_start", "k_fail")

    def __init__(self, horizon=10, dt=0.05, mass=1.0, gravity=9.81,
                 q_output=(300.0, 300.0, 300.0, 0.0),
                 q_deriv=(0.0, 0.0, 0.0),
                 r_input=(0.3, 0.3, 0.3, 0.3),
                 terminal_cost=True,
                 chance=None, variant=SOCP_LEARN, feature_mask=None,
                 solver=None, warm_start=True, k_fail=5):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        if dt <= 0.0 or mass <= 0.0:
            raise ValueError("dt and mass must be positive")
        if variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}")
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.mass = float(mass)
        self.gravity = float(gravity)
        self.q_output = np.asarray(q_output, dtype=float)
        self.r_input = np.asarray(r_input, dtype=float)
        if self.q_output.ndim == 1:
            self.q_output = np.diag(self.q_output)
        if self.r_input.ndim == 1:
            self.r_input = np.diag(self.r_input)
        if self.q_output.shape != (N_OUTPUTS, N_OUTPUTS):
            raise ValueError("q_output must describe the 4 flat outputs")
        if self.r_input.shape != (N_INPUTS, N_INPUTS):
            raise ValueError("r_input must describe the 4 flat inputs")
        self.q_deriv = np.asarray(q_deriv, dtype=float).ravel()
        if self.q_deriv.shape != (3,) or np.any(self.q_deriv < 0.0):
            raise ValueError("q_deriv must hold nonnegative velocity, "
                             "acceleration and jerk weights")
        self.terminal_cost = bool(terminal_cost)
        self.chance = chance or ChanceParams()
        self.variant = variant
        if feature_mask is None:
            feature_mask = tuple(range(N_STATES))
        self.feature_mask = np.asarray(feature_mask, dtype=np.intp)
        if np.any(self.feature_mask < 0) or np.any(self.feature_mask >= N_STATES) \
                or len(set(self.feature_mask.tolist())) != self.feature_mask.size:
            raise ValueError("feature_mask must hold distinct flat-state indices")
        # Per-tick solves run at relaxed tolerances: the receding horizon
        # replans every step, so feedback absorbs residual solver error.
        # The duality gap still matters for tracking (gap slop shows up
        # directly as plan suboptimality, i.e. a tracking bias), so it is
        # kept moderately tight; ticks that hit the iteration cap close to
        # tolerance come back as inaccurate-optimal and remain usable.
        # eps_infeas is relaxed along with eps: a certificate residual of
        # 1e-5 is still orders below the floor any feasible program admits,
        # and waiting for 1e-7 would burn the iteration budget on programs
        # that deserve a prompt infeasibility verdict.
        self.solver = solver or conic.SolverSettings(eps=3e-4, eps_gap=3e-3,
                                                     eps_infeas=1e-5,
                                                     max_iter=4000)
        self.warm_start = bool(warm_start)
        self.k_fail = int(k_fail)


def make_layout(horizon, with_feasibility=True):
    """Decision-vector layout shared by assembly and extraction."""
    layout = VariableLayout()
    for k in range(1, horizon + 1):
        layout.add(f"z{k}", N_STATES)
    for k in range(horizon):
        layout.add(f"v{k}", N_INPUTS)
    layout.add("gamma1", horizon)
    layout.add("gamma2", horizon)
    if with_feasibility:
        # feasibility blocks cover steps 0..N: the measured state is
        # constrained too, so a realized thrust outside the limits surfaces
        # as solver infeasibility instead of passing silently
        layout.add("alpha", 3 * (horizon + 1))
        layout.add("beta", 2 * (horizon + 1))
        layout.add("r", horizon + 1)
    return layout


def lift_mean(mu, mask):
    """Embed a masked-feature first-order mean into the full flat space."""
    out = np.zeros(_N_AUG)
    out[0] = mu[0]
    out[1 + mask] = mu[1:]
    return out


def lift_factor(l_factor, mask):
    """Embed a masked-feature covariance factor into the full flat space."""
    out = np.zeros((_N_AUG, l_factor.shape[1]))
    out[0] = l_factor[0]
    out[1 + mask] = l_factor[1:]
    return out


def zero_step_models(count):
    """Disturbance-free per-step models: zero means and zero factors."""
    zero_l = np.zeros((_N_AUG, 1))
    zero_mu = np.zeros(_N_AUG)
    step = tuple((zero_mu, zero_l) for _ in range(3))
    return [step] * count


def _soc_to_rows(soc, row0, tri_rows, tri_cols, tri_vals, b_out):
    """Append one ||A w + b|| <= c w + d constraint as slack rows.

    Emits the head row (slack = c w + d) followed by the tail rows
    (slack = A w + b) in A x + s = b form.
    """
    nz = np.nonzero(soc.c)[0]
    tri_rows.append(np.full(nz.size, row0))
    tri_cols.append(nz)
    tri_vals.append(-soc.c[nz])
    b_out[row0] = soc.d
    rows, cols = np.nonzero(soc.a)
    tri_rows.append(row0 + 1 + rows)
    tri_cols.append(cols)
    tri_vals.append(-soc.a[rows, cols])
    b_out[row0 + 1:row0 + 1 + soc.b.shape[0]] = soc.b
    return row0 + 1 + soc.b.shape[0]


def state_weight_matrix(cfg, c_out):
    """Full flat-state tracking weights.

    The output weights act on C z (position and yaw); the derivative
    weights damp velocity, acceleration and jerk deviations from the
    reference state, which a position-only cost leaves unobserved over a
    short horizon (the classic receding-horizon end effect).
    """
    q_state = c_out.T @ cfg.q_output @ c_out
    for axis in range(3):
        row = 4 * axis + 1
        q_state[row, row] += cfg.q_deriv[0]
        q_state[row + 1, row + 1] += cfg.q_deriv[1]
        q_state[row + 2, row + 2] += cfg.q_deriv[2]
    return q_state


def terminal_weight_matrix(q_state, r_input, system):
    """Riccati cost-to-go of the running cost on the flat model.

    With the cost-to-go as the step-N weight, the first planned step
    reproduces the infinite-horizon LQ policy exactly, so the loop inherits
    its damping instead of the end-effect ringing of the bare truncation.
    The yaw chain is decoupled and solved separately (zero weight allowed).
    """
    n_tr = N_STATES - 1
    p_full = np.zeros((N_STATES, N_STATES))
    q_tr = np.asarray(q_state, dtype=float)[:n_tr, :n_tr]
    try:
        p_tr = solve_discrete_are(system.a_d[:n_tr, :n_tr],
                                  system.b_d[:n_tr, :3],
                                  q_tr, r_input[:3, :3])
    except np.linalg.LinAlgError:
        p_tr = solve_discrete_are(system.a_d[:n_tr, :n_tr],
                                  system.b_d[:n_tr, :3],
                                  q_tr + 1e-9 * np.eye(n_tr),
                                  r_input[:3, :3])
    p_full[:n_tr, :n_tr] = 0.5 * (p_tr + p_tr.T)
    q_yaw = float(np.asarray(q_state)[n_tr, n_tr])
    if q_yaw > 0.0:
        p_full[n_tr, n_tr] = solve_discrete_are(
            system.a_d[n_tr:, n_tr:], system.b_d[n_tr:, 3:],
            np.array([[q_yaw]]), r_input[3:, 3:])[0, 0]
    return p_full


def assemble_socp(z_init, z_refs, zstars, step_models, cfg, system,
                  q_terminal=None, v_refs=None, z_feas=None):
    """Build the per-tick conic program.

    Parameters
    ----------
    z_init : (13,) measured flat state, pinned as z_0.
    z_refs : (N, 13) reference flat states for steps 1..N.
    zstars : list of N+1 flat states; linearization points for steps 0..N
        (ignored by the fmpc variant).
    step_models : list of N+1 per-step disturbance models, each a triple of
        (mu_lift, l_lift) per axis, or None for the disturbance-free map.
    cfg : MPCConfig.
    system : FlatLinearSystem discretized at cfg.dt.
    q_terminal : optional (13, 13) step-N tracking weight (cost-to-go).
    v_refs : optional (N, 4) feedforward inputs for steps 0..N-1; the input
        cost then penalizes v_k - v_ref_k, so a dynamically feasible
        reference is trackable at zero cost.
    z_feas : optional (13,) state to test in the step-0 feasibility block,
        when the realized acceleration (what the thrust limits actually saw)
        differs from the model-consistent z_init used to seed the plan.

    Returns (program, layout, h_maps, gamma_scales) where h_maps holds the
    per-step mean thrust matrices (used afterwards for the thrust command)
    and gamma_scales = (gamma1_scale, gamma2_scale) converts the epigraph
    variables back to cost units.
    """
    n_hor = cfg.horizon
    z_refs = np.asarray(z_refs, dtype=float).reshape(n_hor, N_STATES)
    z_init = np.asarray(z_init, dtype=float).ravel()
    z_feas = z_init if z_feas is None else np.asarray(z_feas,
                                                      dtype=float).ravel()
    if z_init.shape != (N_STATES,):
        raise ValueError("z_init must be a 13-entry flat state")
    with_feas = cfg.variant != FMPC
    layout = make_layout(n_hor, with_feas)
    n_w = layout.size

    q_state = state_weight_matrix(cfg, system.c)

    # Each cost family (Q, R, terminal weight) is normalized by its own
    # largest entry inside the epigraph cones, so no cone mixes sqrt-weight
    # rows with the O(1) epigraph rows at wildly different magnitudes (a
    # mismatch the per-cone equilibration cannot repair and the first-order
    # solver pays for directly in iterations).  The weights reappear as the
    # objective coefficients of the gamma variables; a global kappa keeps
    # the largest running coefficient at one so the equality duals stay
    # O(1).  gamma variables are in family units; extraction rescales.
    socs, g1_scale, g2_scale = build_cost_socs(
        q_state, cfg.r_input, np.eye(N_STATES), z_refs, layout,
        q_terminal=q_terminal, v_refs=v_refs, family_scaled=True)
    kappa = max(float(np.max(q_state)), float(np.max(cfg.r_input)))
    kappa = kappa if kappa > 0.0 else 1.0

    # Equality rows: z_{k+1} - A_d z_k - B_d v_k = 0, with z_0 substituted.
    n_eq = N_STATES * n_hor

    h_maps = []
    if with_feas:
        if step_models is None:
            step_models = zero_step_models(n_hor + 1)
        accel_sel = np.zeros((3, _N_AUG))
        for axis, idx in enumerate(ACCEL_INDICES):
            accel_sel[axis, 1 + idx] = 1.0
        chance = cfg.chance
        for k in range(n_hor + 1):
            zstar = np.asarray(zstars[k], dtype=float)
            mus = [step_models[k][axis][0] for axis in range(3)]
            factors = [step_models[k][axis][1] for axis in range(3)]
            sel = accel_sel.copy()
            for axis, idx in enumerate(ACCEL_INDICES):
                sel[axis, 0] = zstar[idx]
                sel[axis, 1 + idx] = 1.0
            h = thrust_affine_map(sel, cfg.mass, cfg.gravity, mus)
            h_maps.append(h)
            # H acts on zbar = [1, z_k - z*]; fold the -z* shift into the
            # constant column so the map applies to [1, z_k] rows directly.
            # Step 0 is the pinned measurement: its zbar is constant, which
            # turns the step-0 cones into a pure feasibility check of the
            # realized thrust.
            m_rows = np.zeros((_N_AUG, n_w))
            if k == 0:
                zbar = AffineVector(m_rows,
                                    np.concatenate(([1.0], z_feas - zstar)))
            else:
                z_sl = layout[f"z{k}"]
                m_rows[1:, z_sl] = np.eye(N_STATES)
                zbar = AffineVector(m_rows, np.concatenate(([1.0], -zstar)))
            alpha_idx = [layout.index("alpha", 3 * k + j) for j in range(3)]
            beta_idx = [layout.index("beta", 2 * k + j) for j in range(2)]
            r_idx = layout.index("r", k)
            socs.extend(build_ball_socs(h, factors, chance.p_b, chance.t_max,
                                        zbar, alpha_idx, n_w))
            socs.extend(build_cone_ball_socs(h, factors[:2], chance.p_c1,
                                             zbar, beta_idx, r_idx, n_w))
            socs.append(build_cone_halfspace_soc(h, factors[2], chance.p_c2,
                                                 chance.theta_max, zbar,
                                                 r_idx, n_w))

    n_soc_rows = sum(soc.b.shape[0] + 1 for soc in socs)
    m_total = n_eq + n_soc_rows
    b_vec = np.zeros(m_total)
    tri_rows, tri_cols, tri_vals = [], [], []

    a_d, b_d = system.a_d, system.b_d
    eye_rows, eye_cols = np.nonzero(np.eye(N_STATES))
    ad_rows, ad_cols = np.nonzero(a_d)
    bd_rows, bd_cols = np.nonzero(b_d)
    for k in range(n_hor):
        row0 = N_STATES * k
        znext_sl = layout[f"z{k + 1}"]
        v_sl = layout[f"v{k}"]
        tri_rows.append(row0 + eye_rows)
        tri_cols.append(znext_sl.start + eye_cols)
        tri_vals.append(np.ones(eye_rows.size))
        tri_rows.append(row0 + bd_rows)
        tri_cols.append(v_sl.start + bd_cols)
        tri_vals.append(-b_d[bd_rows, bd_cols])
        if k == 0:
            b_vec[row0:row0 + N_STATES] = a_d @ z_init
        else:
            z_sl = layout[f"z{k}"]
            tri_rows.append(row0 + ad_rows)
            tri_cols.append(z_sl.start + ad_cols)
            tri_vals.append(-a_d[ad_rows, ad_cols])

    cones = [(conic.ZERO, n_eq)]
    row = n_eq
    for soc in socs:
        dim = soc.b.shape[0] + 1
        row = _soc_to_rows(soc, row, tri_rows, tri_cols, tri_vals, b_vec)
        cones.append((conic.SOC, dim))

    a_mat = sp.coo_matrix(
        (np.concatenate(tri_vals),
         (np.concatenate(tri_rows), np.concatenate(tri_cols))),
        shape=(m_total, n_w))
    c_vec = np.zeros(n_w)
    c_vec[layout["gamma1"]] = g1_scale / kappa
    c_vec[layout["gamma2"]] = g2_scale / kappa
    prog = conic.ConicProgram(c_vec, a_mat, b_vec, cones)
    return prog, layout, h_maps, (g1_scale, g2_scale)


def build_shift_perms(layout, cones, horizon):
    """Index maps realizing the one-step receding-horizon shift.

    Returns (perm_x, perm_rows) such that seed[i] = prev[perm[i]] moves
    every per-step block of the decision vector (and of the constraint
    rows) from step k+1 to step k, duplicating the final step.  Relies on
    the assembly's fixed emission order: dynamics equalities, gamma1 cones
    for steps 1..N, gamma2 cones for steps 0..N-1, then the feasibility
    cones stepwise for steps 0..N.
    """
    n_hor = horizon
    perm_x = np.arange(layout.size)

    def shift_block(sl, width, count):
        base = sl.start
        for k in range(count - 1):
            lo = base + width * k
            perm_x[lo:lo + width] = np.arange(lo + width, lo + 2 * width)

    for k in range(1, n_hor):
        dst, src = layout[f"z{k}"], layout[f"z{k + 1}"]
        perm_x[dst] = np.arange(src.start, src.stop)
    for k in range(n_hor - 1):
        dst, src = layout[f"v{k}"], layout[f"v{k + 1}"]
        perm_x[dst] = np.arange(src.start, src.stop)
    shift_block(layout["gamma1"], 1, n_hor)
    shift_block(layout["gamma2"], 1, n_hor)
    if "alpha" in layout:
        shift_block(layout["alpha"], 3, n_hor + 1)
        shift_block(layout["beta"], 2, n_hor + 1)
        shift_block(layout["r"], 1, n_hor + 1)

    starts = np.zeros(len(cones), dtype=np.intp)
    dims = np.asarray([dim for _, dim in cones], dtype=np.intp)
    starts[1:] = np.cumsum(dims)[:-1]
    perm_rows = np.arange(int(dims.sum()))

    def shift_cones(first, stride, count, strict=True):
        # cone index first + stride*k holds step k's block, k = 0..count-1
        for k in range(count - 1):
            dst = first + stride * k
            src = dst + stride
            if dims[dst] != dims[src]:
                if strict:
                    raise ValueError("per-step cone blocks are not congruent")
                continue
            perm_rows[starts[dst]:starts[dst] + dims[dst]] = \
                np.arange(starts[src], starts[src] + dims[src])

    # dynamics equality rows live inside the leading zero cone
    for k in range(n_hor - 1):
        lo = N_STATES * k
        perm_rows[lo:lo + N_STATES] = np.arange(lo + N_STATES,
                                                lo + 2 * N_STATES)
    # the step-N tracking cone may carry a terminal weight with a different
    # row count; leave ragged pairs unshifted
    shift_cones(1, 1, n_hor, strict=False)
    shift_cones(1 + n_hor, 1, n_hor)
    if "alpha" in layout:
        first_feas = 1 + 2 * n_hor
        for j in range(11):
            shift_cones(first_feas + j, 11, n_hor + 1)
    return perm_x, perm_rows


class PredictedTrajectory:
    """Optimal plan extracted from one tick's solution."""

    __slots__ = ("z", "v", "gamma1", "gamma2", "alpha", "beta", "r")

    def __init__(self, z, v, gamma1, gamma2, alpha=None, beta=None, r=None):
        self.z = z
        self.v = v
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.alpha = alpha
        self.beta = beta
        self.r = r


class TickResult:
    """Outcome of one control tick.

    `thrust_map` is the step-1 affine thrust model (h, z_star) with
    t(z) = h @ [1, z - z_star]; for the learning variant it carries the
    disturbance compensation and its gradient, so executors tracking the
    commanded segment can evaluate the feedforward continuously instead of
    holding t_d over the whole tick.  None on fallback ticks.
    """

    __slots__ = ("status", "z_d", "v_d", "t_d", "trajectory", "iterations",
                 "r_primal", "r_dual", "gap", "fallback", "infeasible_streak",
                 "thrust_map")

    def __init__(self, status, z_d, v_d, t_d, trajectory, iterations,
                 r_primal, r_dual, gap, fallback, infeasible_streak,
                 thrust_map=None):
        self.status = status
        self.z_d = z_d
        self.v_d = v_d
        self.t_d = t_d
        self.trajectory = trajectory
        self.iterations = iterations
        self.r_primal = r_primal
        self.r_dual = r_dual
        self.gap = gap
        self.fallback = fallback
        self.infeasible_streak = infeasible_streak
        self.thrust_map = thrust_map


class Controller:
    """Stateful receding-horizon controller; call `tick` once per period.

    `gp_models` maps axis index (0 = x, 1 = y, 2 = z) to a fitted GPModel
    over the masked flat-state features; required for the learning variant.
    """

    def __init__(self, cfg, gp_models=None):
        self.cfg = cfg
        self.system = build_flat_system(cfg.dt)
        self.gp_models = gp_models
        if cfg.variant == SOCP_LEARN:
            if gp_models is None or any(a not in gp_models for a in (0, 1, 2)):
                raise ValueError("learning variant needs GP models for all axes")
        if cfg.terminal_cost:
            self.q_terminal = terminal_weight_matrix(
                state_weight_matrix(cfg, self.system.c), cfg.r_input,
                self.system)
        else:
            self.q_terminal = None
        self.traj_guess = None
        self._warm = None
        self._shift = None
        self._scaling = None
        self.infeasible_streak = 0
        self.last_t_d = None
        # disturbance-free thrust map t(z) = m a(z) + m g e_z in the same
        # affine-on-[1, z] form the learned per-step maps use
        self._h_nominal = np.zeros((3, _N_AUG))
        self._h_nominal[2, 0] = cfg.mass * cfg.gravity
        for axis, idx in enumerate(ACCEL_INDICES):
            self._h_nominal[axis, 1 + idx] = cfg.mass

    def _bootstrap_guess(self, z_refs):
        """Hover-consistent linearization points: reference outputs with
        zero derivatives."""
        guess = np.zeros((self.cfg.horizon, N_STATES))
        guess[:, 0] = z_refs[:, 0]
        guess[:, 4] = z_refs[:, 4]
        guess[:, 8] = z_refs[:, 8]
        guess[:, 12] = z_refs[:, 12]
        return guess

    def _step_models(self, zstars):
        if self.cfg.variant != SOCP_LEARN:
            return None
        mask = self.cfg.feature_mask
        steps = []
        for zstar in zstars:
            per_axis = []
            for axis in range(3):
                approx = lin_posterior(self.gp_models[axis], zstar[mask])
                per_axis.append((lift_mean(approx.mean, mask),
                                 lift_factor(approx.chol, mask)))
            steps.append(tuple(per_axis))
        return steps

    def tick(self, z_meas, z_refs, v_refs=None, z_feas=None):
        """Solve one horizon problem and return the commanded step.

        `z_meas` seeds the plan (pinned as z_0); `z_feas`, when given, is
        the realized flat state whose implied thrust the step-0 feasibility
        block must certify (it differs from `z_meas` when the higher
        derivatives fed to the planner are model-consistent rather than
        measured).
        """
        cfg = self.cfg
        z_meas = np.asarray(z_meas, dtype=float).ravel()
        z_refs = np.asarray(z_refs, dtype=float).reshape(cfg.horizon, N_STATES)
        if v_refs is not None:
            v_refs = np.asarray(v_refs, dtype=float).reshape(cfg.horizon,
                                                             N_INPUTS)
        if z_feas is None:
            z_feas = z_meas
        else:
            z_feas = np.asarray(z_feas, dtype=float).ravel()
        if self.traj_guess is None:
            self.traj_guess = self._bootstrap_guess(z_refs)

        zstars = [z_feas] + [self.traj_guess[k] for k in range(cfg.horizon)]
        step_models = self._step_models(zstars)
        prog, layout, h_maps, g_scales = assemble_socp(z_meas, z_refs, zstars,
                                                       step_models, cfg,
                                                       self.system,
                                                       self.q_terminal,
                                                       v_refs, z_feas)
        warm = None
        if cfg.warm_start and self._warm is not None:
            # Seed with the previous solution shifted one step forward so the
            # guess lines up with the new time grid.
            if self._shift is None:
                self._shift = build_shift_perms(layout, prog.cones,
                                                cfg.horizon)
            perm_x, perm_rows = self._shift
            xw, yw, sw = self._warm
            warm = conic.warm_start(prog, xw[perm_x], yw[perm_rows],
                                    sw[perm_rows])
        sol = conic.solve(prog, cfg.solver, warm, scaling=self._scaling)
        self._scaling = sol.scaling

        if sol.status not in (conic.OPTIMAL, conic.OPTIMAL_INACCURATE):
            self.infeasible_streak += 1
            t_d = self.last_t_d
            if t_d is None:
                t_d = np.array([0.0, 0.0, cfg.mass * cfg.gravity])
            return TickResult(sol.status, None, None, t_d.copy(), None,
                              sol.iterations, sol.r_primal, sol.r_dual,
                              sol.gap, True, self.infeasible_streak)

        self.infeasible_streak = 0
        self._warm = (sol.x, sol.y, sol.s)
        n_hor = cfg.horizon
        z_plan = np.stack([sol.x[layout[f"z{k}"]] for k in range(1, n_hor + 1)])
        v_plan = np.stack([sol.x[layout[f"v{k}"]] for k in range(n_hor)])

        # Re-roll the states through the exact dynamics (removes the solver's
        # equality residual before the plan is reused for linearization).
        z_prev = z_meas
        for k in range(n_hor):
            z_prev = self.system.a_d @ z_prev + self.system.b_d @ v_plan[k]
            z_plan[k] = z_prev

        gamma1 = g_scales[0] * sol.x[layout["gamma1"]]
        gamma2 = g_scales[1] * sol.x[layout["gamma2"]]
        if cfg.variant != FMPC:
            alpha = sol.x[layout["alpha"]].reshape(n_hor + 1, 3).copy()
            beta = sol.x[layout["beta"]].reshape(n_hor + 1, 2).copy()
            r_slack = sol.x[layout["r"]].copy()
        else:
            alpha = beta = r_slack = None
        traj = PredictedTrajectory(z_plan, v_plan, gamma1, gamma2, alpha,
                                   beta, r_slack)

        z_d = z_plan[0]
        v_d = v_plan[0]
        if h_maps:
            thrust_map = (h_maps[1], np.asarray(zstars[1], dtype=float).copy())
        else:
            thrust_map = (self._h_nominal, np.zeros(N_STATES))
        t_d = thrust_map[0] @ np.concatenate(([1.0], z_d - thrust_map[1]))

        self.traj_guess = np.vstack((z_plan[1:], z_plan[-1:]))
        self.last_t_d = t_d
        return TickResult(sol.status, z_d, v_d, t_d, traj, sol.iterations,
                          sol.r_primal, sol.r_dual, sol.gap, False, 0,
                          thrust_map)
