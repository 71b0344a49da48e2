"""Exact Gaussian-process regression with a squared-exponential kernel.

One scalar disturbance component is regressed per model,

    k(z, z') = sig2 * exp(-0.5 (z - z')^T M^-2 (z - z')),      M = diag(l),

with observation noise sig2_noise entering only on the training diagonal.
The posterior at a query z* is

    mean = k(z*, Z) (K + sig2_noise I)^-1 y
    var  = k(z*, z*) - k(z*, Z) (K + sig2_noise I)^-1 k(Z, z*)

computed through a Cholesky factorization with an escalating-jitter
fallback.  Hyperparameters are selected by minimizing the negative log
marginal likelihood with restarted Nelder-Mead in log space.
"""

import json
import math

import numpy as np
import scipy.linalg as sla
from scipy import optimize

LOG_2PI = math.log(2.0 * math.pi)

# Jitter escalation relative to the signal variance.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4
_JITTER_GROWTH = 10.0


class IllConditionedKernelError(RuntimeError):
    """Training kernel matrix could not be factorized, even with jitter."""


class OptimizationFailedError(RuntimeError):
    """No hyperparameter candidate produced a finite likelihood."""


class SEHyperparams:
    """Squared-exponential hyperparameters.

    Attributes
    ----------
    signal_var : float
        Prior variance sig2 (> 0).
    noise_var : float
        Observation noise variance (>= 0).
    length_scales : ndarray
        Per-dimension positive length scales (diagonal of M).
    """

    __slots__ = ("signal_var", "noise_var", "length_scales")

    def __init__(self, signal_var, noise_var, length_scales):
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        self.length_scales = np.atleast_1d(np.asarray(length_scales, dtype=float))
        if not (self.signal_var > 0.0 and math.isfinite(self.signal_var)):
            raise ValueError(f"signal_var must be positive, got {signal_var}")
        if self.noise_var < 0.0 or not math.isfinite(self.noise_var):
            raise ValueError(f"noise_var must be nonnegative, got {noise_var}")
        if np.any(self.length_scales <= 0.0) or not np.all(np.isfinite(self.length_scales)):
            raise ValueError("length scales must be positive and finite")

    @property
    def n_dims(self):
        return self.length_scales.shape[0]

    def __repr__(self):
        return (f"SEHyperparams(signal_var={self.signal_var:.6g}, "
                f"noise_var={self.noise_var:.6g}, "
                f"length_scales={np.array2string(self.length_scales, precision=4)})")


def kernel_se(z, z_prime, hyp):
    """Kernel value k(z, z'); no noise term (it lives on the training diagonal)."""
    z = np.asarray(z, dtype=float)
    z_prime = np.asarray(z_prime, dtype=float)
    r = (z - z_prime) / hyp.length_scales
    return hyp.signal_var * math.exp(-0.5 * float(r @ r))


def kernel_matrix(za, zb, hyp):
    """Cross-kernel matrix k(za[i], zb[j]) for row-stacked inputs."""
    za = np.atleast_2d(np.asarray(za, dtype=float)) / hyp.length_scales
    zb = np.atleast_2d(np.asarray(zb, dtype=float)) / hyp.length_scales
    sq = (
        np.sum(za**2, axis=1)[:, None]
        + np.sum(zb**2, axis=1)[None, :]
        - 2.0 * za @ zb.T
    )
    np.maximum(sq, 0.0, out=sq)
    return hyp.signal_var * np.exp(-0.5 * sq)


class GPModel:
    """Fitted GP: training data plus the cached Cholesky factor and weights."""

    __slots__ = ("inputs", "observations", "hyp", "chol", "alpha", "jitter")

    def __init__(self, inputs, observations, hyp, chol, alpha, jitter):
        self.inputs = inputs
        self.observations = observations
        self.hyp = hyp
        self.chol = chol
        self.alpha = alpha
        self.jitter = jitter

    @property
    def n_data(self):
        return self.inputs.shape[0]

    @property
    def n_dims(self):
        return self.hyp.n_dims


def _factorize(k_train, signal_var):
    """Cholesky with escalating jitter; returns (lower factor, jitter used)."""
    jitter = 0.0
    while True:
        try:
            shifted = k_train if jitter == 0.0 else k_train + jitter * np.eye(k_train.shape[0])
            return np.linalg.cholesky(shifted), jitter
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = _JITTER_START * signal_var
            else:
                jitter *= _JITTER_GROWTH
            if jitter > _JITTER_MAX * signal_var:
                raise IllConditionedKernelError(
                    "kernel matrix is not positive definite even with "
                    f"jitter up to {_JITTER_MAX:g} * signal_var") from None


def fit(inputs, observations, hyp):
    """Fit the GP to (inputs, observations) under fixed hyperparameters.

    `inputs` is (N, n); `observations` is (N,).  N = 0 is allowed and yields
    the prior.  Duplicate inputs with zero observation noise are rejected
    (the kernel matrix would be exactly singular by construction).
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, hyp.n_dims)
    observations = np.asarray(observations, dtype=float).ravel()
    n = inputs.shape[0]
    if observations.shape[0] != n:
        raise ValueError(
            f"got {n} inputs but {observations.shape[0]} observations")
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(observations))):
        raise ValueError("training data must be finite")

    if n == 0:
        return GPModel(inputs, observations, hyp, np.zeros((0, 0)),
                       np.zeros(0), 0.0)

    if hyp.noise_var == 0.0 and n > 1:
        scaled = inputs / hyp.length_scales
        d2 = (np.sum(scaled**2, 1)[:, None] + np.sum(scaled**2, 1)[None, :]
              - 2.0 * scaled @ scaled.T)
        np.fill_diagonal(d2, np.inf)
        if np.min(d2) <= 1e-24:
            raise IllConditionedKernelError(
                "duplicate training inputs with zero observation noise")

    k_train = kernel_matrix(inputs, inputs, hyp)
    k_train[np.diag_indices(n)] += hyp.noise_var
    chol, jitter = _factorize(k_train, hyp.signal_var)
    alpha = sla.cho_solve((chol, True), observations)
    return GPModel(inputs, observations, hyp, chol, alpha, jitter)


def posterior_mean(model, z_star):
    """Posterior mean at a single query point."""
    if model.n_data == 0:
        return 0.0
    k_vec = kernel_matrix(z_star, model.inputs, model.hyp).ravel()
    return float(k_vec @ model.alpha)


def posterior_var(model, z_star):
    """Posterior variance at a single query point (clamped at zero)."""
    prior = model.hyp.signal_var
    if model.n_data == 0:
        return prior
    k_vec = kernel_matrix(z_star, model.inputs, model.hyp).ravel()
    w = sla.solve_triangular(model.chol, k_vec, lower=True)
    return max(0.0, prior - float(w @ w))


def neg_log_marginal_likelihood(inputs, observations, hyp):
    """0.5 y^T K^-1 y + 0.5 log det K + N/2 log 2 pi on the training set."""
    model = fit(inputs, observations, hyp)
    n = model.n_data
    if n == 0:
        return 0.0
    data_term = 0.5 * float(model.observations @ model.alpha)
    logdet_term = float(np.sum(np.log(np.diag(model.chol))))
    return data_term + logdet_term + 0.5 * n * LOG_2PI


def default_bounds(inputs, observations):
    """Data-driven hyperparameter box: (lo, hi) arrays in the order
    [signal_var, noise_var, length_scales...]."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    observations = np.asarray(observations, dtype=float).ravel()
    obs_var = max(float(np.var(observations)), 1e-12)
    span = np.ptp(inputs, axis=0)
    span = np.where(span > 1e-8, span, 1.0)
    lo = np.concatenate(([1e-4 * obs_var, 1e-8 * obs_var], 1e-2 * span))
    hi = np.concatenate(([1e4 * obs_var, 1.0 * obs_var], 1e2 * span))
    return lo, hi


def optimize_hyperparams(inputs, observations, init=None, bounds=None,
                         n_restarts=8, seed=0):
    """Minimize the negative log marginal likelihood over hyperparameters.

    Runs Nelder-Mead in log space from `init` plus `n_restarts` seeded
    log-uniform restarts inside `bounds`, and returns the best candidate.
    The result is never worse than `init` (the initial point is kept in the
    candidate set).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    observations = np.asarray(observations, dtype=float).ravel()
    n_dims = inputs.shape[1]
    if inputs.shape[0] < 1:
        raise ValueError("need at least one observation to optimize")

    if bounds is None:
        lo, hi = default_bounds(inputs, observations)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    if lo.shape != (n_dims + 2,) or hi.shape != (n_dims + 2,):
        raise ValueError("bounds must cover [signal_var, noise_var, scales...]")
    if np.any(lo <= 0.0) or np.any(hi < lo):
        raise ValueError("bounds must be positive with hi >= lo")

    log_lo, log_hi = np.log(lo), np.log(hi)

    def unpack(theta):
        vals = np.exp(np.clip(theta, log_lo, log_hi))
        return SEHyperparams(vals[0], vals[1], vals[2:])

    n_evals_failed = [0]

    def objective(theta):
        try:
            return neg_log_marginal_likelihood(inputs, observations, unpack(theta))
        except (IllConditionedKernelError, FloatingPointError):
            n_evals_failed[0] += 1
            return 1e12

    if init is None:
        obs_var = max(float(np.var(observations)), 1e-12)
        span = np.ptp(inputs, axis=0)
        span = np.where(span > 1e-8, span, 1.0)
        init = SEHyperparams(obs_var, 1e-4 * obs_var, 0.5 * span)
    starts = [np.log(np.concatenate((
        [init.signal_var, init.noise_var if init.noise_var > 0 else lo[1]],
        init.length_scales)))]
    rng = np.random.default_rng(seed)
    for _ in range(n_restarts):
        starts.append(rng.uniform(log_lo, log_hi))

    best_theta, best_val = None, np.inf
    for theta0 in starts:
        theta0 = np.clip(theta0, log_lo, log_hi)
        res = optimize.minimize(
            objective, theta0, method="Nelder-Mead",
            bounds=list(zip(log_lo, log_hi)),
            options={"maxiter": 400 * (n_dims + 2), "xatol": 1e-4,
                     "fatol": 1e-7})
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
        # Keep the raw start too; Nelder-Mead never returns a worse point,
        # but a failed start could.
        val0 = objective(theta0)
        if val0 < best_val:
            best_theta, best_val = theta0, val0

    if best_theta is None or not math.isfinite(best_val) or best_val >= 1e12:
        raise OptimizationFailedError(
            f"no finite likelihood found ({n_evals_failed[0]} failed evaluations)")
    return unpack(best_theta)


def gp_to_json(model):
    """Serialize a fitted model (data and hyperparameters) to a JSON string."""
    doc = {
        "schema": "se-gp/1",
        "inputs": model.inputs.tolist(),
        "observations": model.observations.tolist(),
        "hyperparams": {
            "signal_var": model.hyp.signal_var,
            "noise_var": model.hyp.noise_var,
            "length_scales": model.hyp.length_scales.tolist(),
        },
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def gp_from_json(text):
    """Rebuild (and refit) a model from `gp_to_json` output."""
    doc = json.loads(text)
    if doc.get("schema") != "se-gp/1":
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    hyp = SEHyperparams(
        doc["hyperparams"]["signal_var"],
        doc["hyperparams"]["noise_var"],
        np.asarray(doc["hyperparams"]["length_scales"], dtype=float),
    )
    inputs = np.asarray(doc["inputs"], dtype=float).reshape(-1, hyp.n_dims)
    observations = np.asarray(doc["observations"], dtype=float)
    return fit(inputs, observations, hyp)
