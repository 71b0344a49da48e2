"""First-order joint posterior of a GP: value and gradient at a point.

For an SE-kernel GP over d(z), the vector [d(z*), grad d(z*)] is itself
Gaussian.  With the derivative kernels

    K10(z*, x) = M^-2 (x - z*) k(z*, x)          (gradient-value cross)
    K10(z*, z*) = 0
    K11(z*, z*) = sig2 M^-2                      (gradient-gradient at z*)

the joint posterior mean and covariance over [value; gradient] are

    mu_bar = [k(z*, Z); K10(z*, Z)] K^-1 y                   (n+1,)
    V_bar  = blkdiag(sig2, sig2 M^-2) - Psi K^-1 Psi^T       (n+1, n+1)

where Psi stacks k(z*, Z) over K10(z*, Z) and K is the noisy training
kernel.  Downstream, the disturbance along a displacement D = z - z* is
summarized through the augmented vector zbar = [1, D]:

    mean(zbar)  = mu_bar @ zbar        (first-order posterior mean)
    std(zbar)   = ||L_bar^T zbar||     (exact std of the linear functional)

with V_bar = L_bar L_bar^T.  The factor is computed after symmetrizing and
flooring the spectrum at zero, since V_bar is singular whenever z* touches
the training set.
"""

import numpy as np
import scipy.linalg as sla

from .gp import kernel_matrix

_PSD_FLOOR = 1e-12


class IllConditionedCovarianceError(RuntimeError):
    """Joint covariance could not be factorized even after flooring."""


class LinGPApprox:
    """Joint value-and-gradient posterior at a linearization point.

    Attributes
    ----------
    z_star : ndarray
        Linearization point (n,).
    mean : ndarray
        Posterior mean of [value, gradient] (n+1,).
    cov : ndarray
        Posterior covariance of [value, gradient] (n+1, n+1), after the
        symmetrize-and-floor regularization.
    chol : ndarray
        Lower-triangular factor with chol @ chol.T == cov.
    """

    __slots__ = ("z_star", "mean", "cov", "chol")

    def __init__(self, z_star, mean, cov, chol):
        self.z_star = z_star
        self.mean = mean
        self.cov = cov
        self.chol = chol

    @property
    def n_dims(self):
        return self.z_star.shape[0]


def kernel_grad_first(z_star, x, hyp):
    """Gradient of k(., x) with respect to the first argument at z*."""
    z_star = np.asarray(z_star, dtype=float)
    x = np.asarray(x, dtype=float)
    inv_m2 = 1.0 / hyp.length_scales**2
    r = (z_star - x) / hyp.length_scales
    k_val = hyp.signal_var * np.exp(-0.5 * float(r @ r))
    return inv_m2 * (x - z_star) * k_val


def kernel_grad_second(z_star, x, hyp):
    """Gradient of k(z*, .) with respect to the second argument at x."""
    return -kernel_grad_first(z_star, x, hyp)


def kernel_hess_cross(z_star, hyp):
    """Cross-derivative matrix d^2 k / dz dz' at coincident points: sig2 M^-2."""
    inv_m2 = 1.0 / np.asarray(hyp.length_scales, dtype=float)**2
    return hyp.signal_var * np.diag(inv_m2)


def augmented(z, z_star):
    """Augmented displacement vector zbar = [1, z - z*]."""
    z = np.asarray(z, dtype=float)
    z_star = np.asarray(z_star, dtype=float)
    return np.concatenate(([1.0], z - z_star))


def lin_posterior(model, z_star):
    """Joint value-and-gradient posterior of `model` at `z_star`."""
    z_star = np.asarray(z_star, dtype=float).ravel()
    n = model.n_dims
    if z_star.shape != (n,):
        raise ValueError(f"query must have shape ({n},), got {z_star.shape}")
    hyp = model.hyp

    prior = np.zeros((n + 1, n + 1))
    prior[0, 0] = hyp.signal_var
    prior[1:, 1:] = kernel_hess_cross(z_star, hyp)

    if model.n_data == 0:
        mean = np.zeros(n + 1)
        cov = prior
    else:
        k_vec = kernel_matrix(z_star, model.inputs, hyp).ravel()
        inv_m2 = 1.0 / hyp.length_scales**2
        # Column i of grad_block is K10(z*, Z_i).
        grad_block = inv_m2[:, None] * (model.inputs - z_star).T * k_vec[None, :]
        psi = np.vstack((k_vec, grad_block))
        w = sla.solve_triangular(model.chol, psi.T, lower=True)
        mean = psi @ model.alpha
        cov = prior - w.T @ w

    cov = 0.5 * (cov + cov.T)
    lam_min = float(np.linalg.eigvalsh(cov)[0])
    bump = max(0.0, -lam_min + _PSD_FLOOR)
    if bump > 0.0:
        cov = cov + bump * np.eye(n + 1)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise IllConditionedCovarianceError(
            f"joint covariance not factorizable (min eigenvalue {lam_min:g})"
        ) from None
    return LinGPApprox(z_star, mean, cov, chol)


def _check_augmented(zbar, n_dims):
    zbar = np.asarray(zbar, dtype=float).ravel()
    if zbar.shape != (n_dims + 1,):
        raise ValueError(
            f"augmented vector must have shape ({n_dims + 1},), got {zbar.shape}")
    if zbar[0] != 1.0:
        raise ValueError(f"augmented vector must start with 1, got {zbar[0]}")
    return zbar


def lingp_mean(approx, zbar):
    """First-order posterior mean along zbar = [1, z - z*]."""
    zbar = _check_augmented(zbar, approx.n_dims)
    return float(approx.mean @ zbar)


def lingp_std(approx, zbar):
    """Posterior standard deviation of the linearized value along zbar."""
    zbar = _check_augmented(zbar, approx.n_dims)
    return float(np.linalg.norm(approx.chol.T @ zbar))
