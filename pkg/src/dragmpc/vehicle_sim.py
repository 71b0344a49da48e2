"""Planar (x-z) rigid-body multirotor simulator.

The plant is deliberately richer than the controller's flat model: thrust
acts along the *current* body z-axis while a PD inner loop steers the
attitude toward the commanded thrust direction, and an aerodynamic drag
force acts on the body.  Integration is classical RK4 at a fixed substep.

Conventions: world axes are (x, z) with z up; `theta` is the tilt angle of
the body z-axis away from vertical, positive tilting toward +x, so the body
z-axis in world coordinates is [sin(theta), cos(theta)].
"""

import math

import numpy as np

GRAVITY_DEFAULT = 9.81
KP_DEFAULT = 400.0
KD_DEFAULT = 40.0


class DegenerateThrustError(ValueError):
    """Commanded thrust is too small to define an attitude."""


class SimulationDivergedError(RuntimeError):
    """A state became non-finite during integration."""


class RigidBodyState:
    """Planar rigid-body state: position, velocity, tilt, tilt rate."""

    __slots__ = ("p", "v", "theta", "omega")

    def __init__(self, p, v, theta=0.0, omega=0.0):
        self.p = np.asarray(p, dtype=float).copy()
        self.v = np.asarray(v, dtype=float).copy()
        if self.p.shape != (2,) or self.v.shape != (2,):
            raise ValueError("p and v must be length-2 vectors")
        self.theta = wrap_angle(float(theta))
        self.omega = float(omega)
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))
                and math.isfinite(self.theta) and math.isfinite(self.omega)):
            raise ValueError("state entries must be finite")

    def copy(self):
        return RigidBodyState(self.p, self.v, self.theta, self.omega)

    def __repr__(self):
        return (f"RigidBodyState(p={self.p}, v={self.v}, "
                f"theta={self.theta:.6f}, omega={self.omega:.6f})")


def wrap_angle(angle):
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rotation(theta):
    """World-from-body rotation; columns are the body x and z axes."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def body_z_axis(theta):
    return np.array([math.sin(theta), math.cos(theta)])


class NoDrag:
    """Drag-free plant."""


class LinearRotorDrag:
    """Rotor-drag force linear in velocity: -R D R^T v.

    `d` holds the diagonal of the body-frame drag matrix in N s/m.  With
    `opposing=True` (the default) the force opposes motion.
    """

    def __init__(self, d=(1.0, 1.0), opposing=True):
        self.d = np.asarray(d, dtype=float)
        if self.d.shape != (2,) or np.any(self.d < 0.0):
            raise ValueError("drag diagonal must be two nonnegative entries")
        self.opposing = opposing


class QuadraticDrag:
    """Aerodynamic drag quadratic in body-frame velocity.

    Force magnitude per body axis is 0.5 rho c_d area * v_b * |v_b|
    (elementwise by default; set `elementwise=False` to use the
    speed-scaled form 0.5 rho c_d area * ||v_b|| v_b).
    """

    def __init__(self, rho=1.225, c_d=0.5, area=0.1, elementwise=True,
                 opposing=True):
        if rho <= 0.0 or c_d <= 0.0 or area <= 0.0:
            raise ValueError("rho, c_d and area must be positive")
        self.rho = float(rho)
        self.c_d = float(c_d)
        self.area = float(area)
        self.elementwise = elementwise
        self.opposing = opposing


def drag_force(model, state):
    """Drag force on the body in world coordinates [N]."""
    if model is None or isinstance(model, NoDrag):
        return np.zeros(2)
    r = rotation(state.theta)
    if isinstance(model, LinearRotorDrag):
        f = r @ (model.d * (r.T @ state.v))
        return -f if model.opposing else f
    if isinstance(model, QuadraticDrag):
        v_b = r.T @ state.v
        coeff = 0.5 * model.rho * model.c_d * model.area
        if model.elementwise:
            f_b = coeff * v_b * np.abs(v_b)
        else:
            f_b = coeff * np.linalg.norm(v_b) * v_b
        f = r @ f_b
        return -f if model.opposing else f
    raise TypeError(f"unknown drag model {type(model).__name__}")


def attitude_inner_loop(state, t_d, kp=KP_DEFAULT, kd=KD_DEFAULT):
    """Convert a thrust-vector command into (magnitude, tilt acceleration).

    The magnitude is passed through; the PD law drives theta toward the
    direction of `t_d`.  Raises DegenerateThrustError when ||t_d|| is too
    small to define a direction; callers should then hold the previous
    attitude and command zero thrust.
    """
    t_d = np.asarray(t_d, dtype=float)
    norm = float(np.linalg.norm(t_d))
    if norm <= 1e-6:
        raise DegenerateThrustError(f"thrust command {t_d} has no direction")
    theta_des = math.atan2(t_d[0], t_d[1])
    err = wrap_angle(theta_des - state.theta)
    omega_dot = kp * err - kd * state.omega
    return norm, omega_dot


def _derivatives(p, v, theta, omega, t_mag, theta_des, model, mass, gravity,
                 kp, kd):
    z_b = body_z_axis(theta)
    state_view = RigidBodyState.__new__(RigidBodyState)
    state_view.p = p
    state_view.v = v
    state_view.theta = theta
    state_view.omega = omega
    f_drag = drag_force(model, state_view)
    accel = (t_mag * z_b + f_drag) / mass - np.array([0.0, gravity])
    omega_dot = kp * wrap_angle(theta_des - theta) - kd * omega
    return v, accel, omega, omega_dot


def plant_step(state, t_d, model, dt, mass=1.0, gravity=GRAVITY_DEFAULT,
               kp=KP_DEFAULT, kd=KD_DEFAULT):
    """One RK4 step of duration `dt` under a held thrust-vector command."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    try:
        t_mag, _ = attitude_inner_loop(state, t_d, kp, kd)
        theta_des = math.atan2(t_d[0], t_d[1])
    except DegenerateThrustError:
        t_mag = 0.0
        theta_des = state.theta

    args = (t_mag, theta_des, model, mass, gravity, kp, kd)
    p0, v0, th0, om0 = state.p, state.v, state.theta, state.omega

    k1 = _derivatives(p0, v0, th0, om0, *args)
    k2 = _derivatives(p0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[1],
                      th0 + 0.5 * dt * k1[2], om0 + 0.5 * dt * k1[3], *args)
    k3 = _derivatives(p0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[1],
                      th0 + 0.5 * dt * k2[2], om0 + 0.5 * dt * k2[3], *args)
    k4 = _derivatives(p0 + dt * k3[0], v0 + dt * k3[1],
                      th0 + dt * k3[2], om0 + dt * k3[3], *args)

    p1 = p0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v1 = v0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    th1 = th0 + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    om1 = om0 + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(v1))
            and math.isfinite(th1) and math.isfinite(om1)):
        raise SimulationDivergedError("non-finite state after RK4 step")
    return RigidBodyState(p1, v1, th1, om1)


def measure_disturbance(state, accel_observed, thrust_applied, mass,
                        gravity=GRAVITY_DEFAULT, noise_std=0.0, rng=None):
    """Residual-force observation d = m a + m g e_z - T_applied.

    `accel_observed` and `thrust_applied` are world-frame (x, z) vectors at
    the measurement instant.  Returns the disturbance sample (2,) and a
    13-entry flat-state tag with position, velocity and acceleration filled
    in (jerk and the unused y axis are left zero for the caller to refine).
    """
    accel_observed = np.asarray(accel_observed, dtype=float)
    thrust_applied = np.asarray(thrust_applied, dtype=float)
    d_hat = mass * accel_observed - thrust_applied
    d_hat[1] += mass * gravity
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("rng is required when noise_std > 0")
        d_hat = d_hat + noise_std * rng.standard_normal(2)

    tag = np.zeros(13)
    tag[0], tag[1], tag[2] = state.p[0], state.v[0], accel_observed[0]
    tag[8], tag[9], tag[10] = state.p[1], state.v[1], accel_observed[1]
    return d_hat, tag


class Multirotor:
    """Plant wrapper: holds parameters and advances one control tick.

    `step` integrates `dt_control` seconds in substeps of `dt_sim` under a
    held thrust command and returns the new state together with the
    instantaneous acceleration and the applied thrust vector at the end of
    the tick (what an onboard estimator would see).
    """

    def __init__(self, state, drag=None, mass=1.0, gravity=GRAVITY_DEFAULT,
                 dt_sim=1e-3, kp=KP_DEFAULT, kd=KD_DEFAULT):
        self.state = state.copy()
        self.drag = drag
        self.mass = float(mass)
        self.gravity = float(gravity)
        self.dt_sim = float(dt_sim)
        self.kp = float(kp)
        self.kd = float(kd)
        if self.mass <= 0.0 or self.dt_sim <= 0.0:
            raise ValueError("mass and dt_sim must be positive")

    def step(self, t_d, dt_control):
        n_sub = max(1, round(dt_control / self.dt_sim))
        for _ in range(n_sub):
            self.state = plant_step(self.state, t_d, self.drag, self.dt_sim,
                                    self.mass, self.gravity, self.kp, self.kd)
        try:
            t_mag, _ = attitude_inner_loop(self.state, t_d, self.kp, self.kd)
        except DegenerateThrustError:
            t_mag = 0.0
        thrust_vec = t_mag * body_z_axis(self.state.theta)
        f_drag = drag_force(self.drag, self.state)
        accel = (thrust_vec + f_drag) / self.mass - np.array([0.0, self.gravity])
        return self.state.copy(), accel, thrust_vec
