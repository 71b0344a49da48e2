"""Flat-space linear model of a multirotor.

In flat coordinates the translational dynamics of each axis reduce to a
chain of four integrators driven by snap, and yaw reduces to a single
integrator driven by yaw rate.  The flat state is

    z = [p_x, v_x, a_x, j_x,  p_y, v_y, a_y, j_y,  p_z, v_z, a_z, j_z,  psi]

(13 entries) and the flat input is v = [s_x, s_y, s_z, psi_dot] (4 entries).
Because the continuous-time system matrix is nilpotent, the zero-order-hold
discretization is an exact finite matrix-polynomial; no approximation is
involved in `build_flat_system`.
"""

import numpy as np

N_STATES = 13
N_INPUTS = 4
N_OUTPUTS = 4

# Offsets of the four-integrator chain of each translational axis.
AXIS_OFFSET = {"x": 0, "y": 4, "z": 8}
PSI_INDEX = 12

# Within-chain offsets.
POS, VEL, ACC, JERK = 0, 1, 2, 3

POSITION_INDICES = np.array([0, 4, 8])
VELOCITY_INDICES = np.array([1, 5, 9])
ACCEL_INDICES = np.array([2, 6, 10])
JERK_INDICES = np.array([3, 7, 11])

STATE_NAMES = (
    "px", "vx", "ax", "jx",
    "py", "vy", "ay", "jy",
    "pz", "vz", "az", "jz",
    "psi",
)


class FlatLinearSystem:
    """Continuous and exactly discretized flat model.

    Attributes
    ----------
    a, b : ndarray
        Continuous-time system and input matrices (13 x 13, 13 x 4).
    a_d, b_d : ndarray
        Exact zero-order-hold discretization for the step `dt`.
    c : ndarray
        Output map (4 x 13) selecting [p_x, p_y, p_z, psi].
    dt : float
        Discretization step in seconds.
    """

    def __init__(self, a, b, a_d, b_d, c, dt):
        self.a = a
        self.b = b
        self.a_d = a_d
        self.b_d = b_d
        self.c = c
        self.dt = dt

    def __repr__(self):
        return f"FlatLinearSystem(dt={self.dt})"


def build_flat_system(dt):
    """Build the flat model discretized with step `dt`.

    The matrix exponential exp(A dt) and the input integral are evaluated
    through the (finite) power series; A is nilpotent with A^4 = 0, so the
    series terminates and the result is exact to roundoff.
    """
    if not np.isfinite(dt) or dt <= 0.0:
        raise ValueError(f"dt must be a positive finite number, got {dt}")

    a = np.zeros((N_STATES, N_STATES))
    b = np.zeros((N_STATES, N_INPUTS))
    for axis_index, off in enumerate((0, 4, 8)):
        for row in range(3):
            a[off + row, off + row + 1] = 1.0
        b[off + JERK, axis_index] = 1.0
    b[PSI_INDEX, 3] = 1.0

    # exp(A dt) = sum_k (A dt)^k / k!   (terminates: A^4 = 0)
    # int_0^dt exp(A s) ds B = sum_k A^k dt^(k+1) / (k+1)! B
    a_d = np.eye(N_STATES)
    b_int = np.eye(N_STATES) * dt
    term = np.eye(N_STATES)
    fact = 1.0
    for k in range(1, 5):
        term = term @ a
        fact *= k
        a_d = a_d + term * dt**k / fact
        b_int = b_int + term * dt ** (k + 1) / (fact * (k + 1))
    b_d = b_int @ b

    c = np.zeros((N_OUTPUTS, N_STATES))
    c[0, AXIS_OFFSET["x"] + POS] = 1.0
    c[1, AXIS_OFFSET["y"] + POS] = 1.0
    c[2, AXIS_OFFSET["z"] + POS] = 1.0
    c[3, PSI_INDEX] = 1.0

    return FlatLinearSystem(a, b, a_d, b_d, c, dt)


def flat_step(system, z, v):
    """Advance the flat state one step: z' = A_d z + B_d v."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if z.shape != (N_STATES,):
        raise ValueError(f"flat state must have shape ({N_STATES},), got {z.shape}")
    if v.shape != (N_INPUTS,):
        raise ValueError(f"flat input must have shape ({N_INPUTS},), got {v.shape}")
    return system.a_d @ z + system.b_d @ v


def nominal_thrust(z, mass, gravity, d_hat=None):
    """Thrust vector that realizes the flat state's acceleration.

    T = m a + m g e_z - d, where d is an estimate of the external
    disturbance force acting on the vehicle (world frame, newtons).
    """
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    z = np.asarray(z, dtype=float)
    accel = z[ACCEL_INDICES]
    thrust = mass * accel
    thrust[2] += mass * gravity
    if d_hat is not None:
        thrust = thrust - np.asarray(d_hat, dtype=float)
    return thrust
