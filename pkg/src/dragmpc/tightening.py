"""Probabilistic thrust limits as second-order cone constraints.

The thrust needed to realize a predicted flat state, with the learned
disturbance removed, is affine in the augmented vector zbar = [1, z - z*]:
its mean is H zbar with H assembled from m*a selectors, the m*g offset, and
the per-axis first-order disturbance means.  The disturbance error e is
zero-mean with per-axis standard deviations ||L_axis^T zbar||.

Three constraint families bound the true thrust T = H zbar + e:

* magnitude ball, Pr(||T|| <= T_max) >= p_b: the error ellipsoid is outer-
  bounded by a ball of radius sqrt(chi2_3(p_b)) * max_axis std, giving six
  cones per step (three tightened balls, three std epigraphs alpha);
* lateral cone ball: the lateral magnitude ||(T_x, T_y)|| is bounded by a
  slack r tightened the same way (four cones: two tightened balls over the
  x/y pair, two std epigraphs beta);
* cone half-space, Pr(||(T_x, T_y)|| <= tan(theta_max) T_z) >= p_c2 given
  the ball: a scalar Gaussian bound on the z-axis error yields one cone

      ||L_z^T zbar|| <= (tan(theta_max) T_z - r) / (tan(theta_max) PHI^-1(p_c2)),

  valid for p_c2 > 1/2.  The cone probability p_c is split as
  p_c1 = p_c2 = sqrt(p_c).

Tracking and input costs enter the objective through epigraph variables
gamma with rotated-cone constraints so that gamma bounds the quadratic
cost exactly.  All constraints are emitted in the form
||A w + b|| <= c^T w + d over a flat decision vector w described by a
`VariableLayout`.
"""

import functools
import math

import numpy as np

__all__ = [
    "gauss_quantile", "chi2_3_quantile", "split_cone_probability",
    "ChanceParams", "VariableLayout", "AffineVector", "SOCConstraint",
    "thrust_affine_map", "build_ball_socs", "build_cone_ball_socs",
    "build_cone_halfspace_soc", "build_cost_socs", "psd_sqrt_rows",
]

# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _gauss_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _gauss_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@functools.lru_cache(maxsize=256)
def gauss_quantile(p):
    """Standard normal quantile PHI^-1(p) for p in (0, 1).

    Rational approximation refined by one Newton step on the CDF; absolute
    error is far below 1e-9 over the open interval.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q
              + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r
              + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r
                + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q
               + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # One Newton step on PHI(x) - p.
    pdf = _gauss_pdf(x)
    if pdf > 0.0:
        x -= (_gauss_cdf(x) - p) / pdf
    return x


def _chi2_3_cdf(x):
    """Closed-form CDF of the chi-squared distribution with 3 dof."""
    if x <= 0.0:
        return 0.0
    return math.erf(math.sqrt(0.5 * x)) - math.sqrt(2.0 * x / math.pi) * math.exp(-0.5 * x)


@functools.lru_cache(maxsize=256)
def chi2_3_quantile(p):
    """Quantile of the chi-squared distribution with 3 dof, by bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    hi = 1.0
    while _chi2_3_cdf(hi) < p:
        hi *= 2.0
        if hi > 1e8:
            raise RuntimeError("chi-squared quantile bracket failed")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _chi2_3_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def split_cone_probability(p_c):
    """Split the cone probability into the (ball, half-space) pair (sqrt, sqrt)."""
    if not 0.0 < p_c < 1.0:
        raise ValueError(f"p_c must lie in (0, 1), got {p_c}")
    root = math.sqrt(p_c)
    return root, root


class ChanceParams:
    """Probabilities and limits of the thrust feasibility constraints."""

    __slots__ = ("p_b", "p_c", "theta_max", "t_max")

    def __init__(self, p_b=0.95, p_c=0.95, theta_max=math.pi / 4, t_max=30.0):
        if not 0.0 < p_b < 1.0 or not 0.0 < p_c < 1.0:
            raise ValueError("probabilities must lie in (0, 1)")
        if not 0.0 < theta_max < math.pi / 2:
            raise ValueError("theta_max must lie in (0, pi/2)")
        if t_max <= 0.0:
            raise ValueError("t_max must be positive")
        self.p_b = float(p_b)
        self.p_c = float(p_c)
        self.theta_max = float(theta_max)
        self.t_max = float(t_max)

    @property
    def p_c1(self):
        return split_cone_probability(self.p_c)[0]

    @property
    def p_c2(self):
        return split_cone_probability(self.p_c)[1]


class VariableLayout:
    """Ordered named blocks of a flat decision vector."""

    def __init__(self):
        self._slices = {}
        self._size = 0

    def add(self, name, size):
        if name in self._slices:
            raise ValueError(f"duplicate block {name!r}")
        if size < 0:
            raise ValueError("block size must be nonnegative")
        self._slices[name] = slice(self._size, self._size + size)
        self._size += size
        return self._slices[name]

    def __getitem__(self, name):
        return self._slices[name]

    def index(self, name, offset=0):
        sl = self._slices[name]
        if offset >= sl.stop - sl.start:
            raise IndexError(f"offset {offset} outside block {name!r}")
        return sl.start + offset

    def __contains__(self, name):
        return name in self._slices

    @property
    def size(self):
        return self._size

    def names(self):
        return list(self._slices)


class AffineVector:
    """Affine map w -> m @ w + q, with m == None meaning the zero matrix."""

    __slots__ = ("m", "q")

    def __init__(self, m, q):
        self.q = np.asarray(q, dtype=float)
        self.m = m
        if m is not None and m.shape[0] != self.q.shape[0]:
            raise ValueError("matrix and offset row counts differ")

    @property
    def n_rows(self):
        return self.q.shape[0]

    def value(self, w):
        if self.m is None:
            return self.q.copy()
        return self.m @ w + self.q


class SOCConstraint:
    """One second-order cone constraint ||a w + b|| <= c^T w + d."""

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a, b, c, d):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.d = float(d)
        if self.a.ndim != 2 or self.a.shape[0] != self.b.shape[0]:
            raise ValueError("a must be (k, n_w) with b of length k")
        if self.c.shape != (self.a.shape[1],):
            raise ValueError("c must have one entry per decision variable")

    def slack(self, w):
        """c^T w + d - ||a w + b|| (nonnegative iff satisfied)."""
        return float(self.c @ w + self.d - np.linalg.norm(self.a @ w + self.b))


def _compose(rows_map, zbar):
    """Rows of `rows_map` applied to the affine vector zbar, as (A, b)."""
    if zbar.m is None:
        return np.zeros((rows_map.shape[0], 0)), rows_map @ zbar.q
    return rows_map @ zbar.m, rows_map @ zbar.q


def _pad(a, n_w):
    if a.shape[1] == n_w:
        return a
    out = np.zeros((a.shape[0], n_w))
    if a.shape[1]:
        out[:, : a.shape[1]] = a
    return out


def thrust_affine_map(accel_selectors, mass, gravity, mu_bars):
    """Mean-thrust map H with H @ zbar = m a + m g e_z - mu(zbar).

    `accel_selectors` is (3, n_aug): per-axis rows picking the acceleration
    entry out of zbar (constant part in column 0).  `mu_bars` are the three
    lifted first-order disturbance means (each (n_aug,)), or None for a
    disturbance-free map.
    """
    h = mass * np.asarray(accel_selectors, dtype=float)
    h[2, 0] += mass * gravity
    if mu_bars is not None:
        for axis in range(3):
            h[axis] -= mu_bars[axis]
    return h


def build_ball_socs(h, l_factors, p_b, t_max, zbar, alpha_indices, n_w):
    """Six cones enforcing Pr(||T|| <= T_max) >= p_b at one step.

    `l_factors` holds the three per-axis augmented covariance factors
    (each (n_aug, q)); `alpha_indices` are the decision indices of the three
    per-axis std epigraph variables.
    """
    if len(l_factors) != 3 or len(alpha_indices) != 3:
        raise ValueError("need three axis factors and three alpha indices")
    radius = math.sqrt(chi2_3_quantile(p_b))
    a_h, b_h = _compose(h, zbar)
    a_h = _pad(a_h, n_w)
    socs = []
    for j in range(3):
        c = np.zeros(n_w)
        c[alpha_indices[j]] = -radius
        socs.append(SOCConstraint(a_h, b_h, c, t_max))
    for j in range(3):
        a_l, b_l = _compose(l_factors[j].T, zbar)
        c = np.zeros(n_w)
        c[alpha_indices[j]] = 1.0
        socs.append(SOCConstraint(_pad(a_l, n_w), b_l, c, 0.0))
    return socs


def build_cone_ball_socs(h, l_factors_xy, p_c1, zbar, beta_indices, r_index,
                         n_w):
    """Four cones bounding the lateral thrust ||(T_x, T_y)|| by the slack r.

    Two tightened lateral balls (one per lateral axis epigraph beta) and the
    two epigraphs themselves.
    """
    if len(l_factors_xy) != 2 or len(beta_indices) != 2:
        raise ValueError("need two lateral factors and two beta indices")
    radius = math.sqrt(chi2_3_quantile(p_c1))
    a_xy, b_xy = _compose(h[:2], zbar)
    a_xy = _pad(a_xy, n_w)
    socs = []
    for j in range(2):
        c = np.zeros(n_w)
        c[r_index] = 1.0
        c[beta_indices[j]] = -radius
        socs.append(SOCConstraint(a_xy, b_xy, c, 0.0))
    for j in range(2):
        a_l, b_l = _compose(l_factors_xy[j].T, zbar)
        c = np.zeros(n_w)
        c[beta_indices[j]] = 1.0
        socs.append(SOCConstraint(_pad(a_l, n_w), b_l, c, 0.0))
    return socs


def build_cone_halfspace_soc(h, l_factor_z, p_c2, theta_max, zbar, r_index,
                             n_w):
    """One cone enforcing the tilt half-space given the lateral ball.

    ||L_z^T zbar|| <= (tan(theta_max) T_z - r) / (tan(theta_max) PHI^-1(p_c2)),
    which requires p_c2 > 1/2 so the Gaussian quantile is positive.
    """
    if p_c2 <= 0.5:
        raise ValueError(
            f"half-space tightening needs p_c2 > 0.5, got {p_c2}")
    tan_t = math.tan(theta_max)
    scale = 1.0 / (tan_t * gauss_quantile(p_c2))
    a_l, b_l = _compose(l_factor_z.T, zbar)
    a_z, b_z = _compose(h[2:3], zbar)
    a_z = _pad(a_z, n_w)
    c = scale * tan_t * a_z[0]
    c[r_index] -= scale
    d = scale * tan_t * float(b_z[0])
    return SOCConstraint(_pad(a_l, n_w), b_l, c, d)


def psd_sqrt_rows(q):
    """Rows S with S^T S = q, zero eigendirections dropped.

    `q` must be symmetric positive semidefinite; a diagonal matrix yields
    sqrt rows of its positive entries.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.allclose(q, q.T, atol=1e-12):
        raise ValueError("weight matrix must be symmetric")
    if np.count_nonzero(q - np.diag(np.diag(q))) == 0:
        diag = np.diag(q)
        if np.any(diag < 0.0):
            raise ValueError("weight matrix must be positive semidefinite")
        keep = np.nonzero(diag > 0.0)[0]
        rows = np.zeros((keep.size, q.shape[0]))
        rows[np.arange(keep.size), keep] = np.sqrt(diag[keep])
        return rows
    lam, vec = np.linalg.eigh(q)
    if lam[0] < -1e-10 * max(1.0, lam[-1]):
        raise ValueError("weight matrix must be positive semidefinite")
    keep = lam > 1e-14 * max(1.0, lam[-1])
    return (vec[:, keep] * np.sqrt(lam[keep])).T


def _epigraph_soc(rows_a, rows_b, gamma_index, n_w):
    """Rotated-cone epigraph: gamma >= ||rows_a w + rows_b||^2."""
    k = rows_a.shape[0]
    a = np.zeros((k + 1, n_w))
    a[:k] = rows_a
    a[k, gamma_index] = -0.5
    b = np.concatenate((rows_b, [0.5]))
    c = np.zeros(n_w)
    c[gamma_index] = 0.5
    return SOCConstraint(a, b, c, 0.5)


def build_cost_socs(q_weight, r_weight, c_out, y_refs, layout,
                    q_terminal=None, v_refs=None, family_scaled=False):
    """Epigraph cones for the tracking and input costs over the horizon.

    For each step k = 1..N: gamma1_k >= (C z_k - y_ref_k)^T Q (C z_k - y_ref_k)
    and gamma2_{k-1} >= (v_{k-1} - v_ref_{k-1})^T R (...).  `y_refs` is
    (N, n_out) holding the references for steps 1..N; `v_refs` is (N, n_in)
    with the feedforward inputs for steps 0..N-1 (zeros when omitted, i.e.
    a plain effort penalty); `layout` must provide blocks z1..zN, v0..v{N-1},
    gamma1, gamma2.

    When `q_terminal` is given, the step-N tracking epigraph uses it in
    place of Q (a cost-to-go weight; the reference at step N must then span
    the full state, i.e. c_out square).

    Returns (socs, gamma1_scale, gamma2_scale).  With `family_scaled` each
    weight family is divided by its largest entry inside the cones so every
    cone row is O(1); the gamma variables then hold the quadratic in units
    of that scale, and minimizing scale * gamma recovers the original cost.
    The default emits the weights verbatim (all scales one).
    """
    q_weight = np.asarray(q_weight, dtype=float)
    r_weight = np.asarray(r_weight, dtype=float)

    def family_scale(w):
        if not family_scaled or w is None:
            return 1.0
        top = float(np.max(np.abs(w)))
        return top if top > 0.0 else 1.0

    s_q = family_scale(q_weight)
    s_r = family_scale(r_weight)
    s_p = family_scale(q_terminal)
    q_rows = psd_sqrt_rows(q_weight / s_q)
    r_rows = psd_sqrt_rows(r_weight / s_r)
    c_out = np.asarray(c_out, dtype=float)
    y_refs = np.atleast_2d(np.asarray(y_refs, dtype=float))
    n = y_refs.shape[0]
    if v_refs is None:
        v_refs = np.zeros((n, r_weight.shape[0]))
    v_refs = np.atleast_2d(np.asarray(v_refs, dtype=float))
    n_w = layout.size
    socs = []
    gamma1_scale = np.full(n, s_q)
    for k in range(1, n + 1):
        rows = q_rows
        if q_terminal is not None and k == n:
            rows = psd_sqrt_rows(np.asarray(q_terminal, dtype=float) / s_p)
            gamma1_scale[k - 1] = s_p
        z_sl = layout[f"z{k}"]
        rows_a = np.zeros((rows.shape[0], n_w))
        rows_a[:, z_sl] = rows @ c_out
        rows_b = -rows @ y_refs[k - 1]
        socs.append(_epigraph_soc(rows_a, rows_b,
                                  layout.index("gamma1", k - 1), n_w))
    for k in range(n):
        v_sl = layout[f"v{k}"]
        rows_a = np.zeros((r_rows.shape[0], n_w))
        rows_a[:, v_sl] = r_rows
        rows_b = -r_rows @ v_refs[k]
        socs.append(_epigraph_soc(rows_a, rows_b,
                                  layout.index("gamma2", k), n_w))
    return socs, gamma1_scale, np.full(n, s_r)
