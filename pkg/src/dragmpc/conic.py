"""Embedded operator-splitting solver for second-order cone programs.

Problems are posed in the standard conic form

    minimize    c^T x
    subject to  A x + s = b,    s in K,

where K is an ordered product of zero, nonnegative and second-order cone
blocks.  The solver runs Douglas-Rachford splitting on the homogeneous
self-dual embedding: each iteration solves one (cached, sparse-LU) linear
system with the skew matrix built from (A, b, c) and projects onto the
cone.  The embedding yields infeasibility certificates in the same loop:

* optimal:  the tau-normalized iterate satisfies the KKT residuals;
* primal infeasible:  some y in K* with A^T y = 0 and b^T y < 0;
* dual infeasible (unbounded):  some x, s in K with A x + s = 0, c^T x < 0.

The splitting is driven through a single governing vector p: with
u = Pi_C(p) the relaxed update is p+ = p + relax * ((I+Q)^-1 (2u - p) - u),
which makes the iteration a plain fixed-point map and lets Anderson
acceleration (type-II, safeguarded by fixed-point-residual decrease) run
on top of it.

A static Ruiz equilibration (block-uniform over the rows of each SOC)
rescales the data before iterating; scalar factors on b and c are adapted
mid-run when the iterate magnitudes drift far from O(1).  Convergence is
always declared on the residuals of the original, unscaled problem.
"""

import math
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"

OPTIMAL = "optimal"
OPTIMAL_INACCURATE = "optimal_inaccurate"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_ERROR = "numerical_error"


class SolverSettings:
    """Tolerances and iteration controls.

    `adaptive_scale` lets the solver rescale the scalar factors on b and c
    mid-run when the iterate magnitudes drift far from O(1); each rescale
    costs one refactorization but can cut iteration counts by an order of
    magnitude on problems whose solutions are much larger than the data
    norms suggest.
    """

    __slots__ = ("eps", "eps_infeas", "eps_gap", "max_iter", "relax",
                 "check_every", "ruiz_iters", "adaptive_scale",
                 "rescale_after", "max_rescales", "aa_memory")

    def __init__(self, eps=1e-7, eps_infeas=1e-7, eps_gap=None,
                 max_iter=100_000, relax=1.0, check_every=25, ruiz_iters=10,
                 adaptive_scale=True, rescale_after=200, max_rescales=10,
                 aa_memory=10):
        if eps <= 0.0 or eps_infeas <= 0.0:
            raise ValueError("tolerances must be positive")
        if eps_gap is not None and eps_gap <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < relax < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        if aa_memory < 0:
            raise ValueError("aa_memory must be nonnegative (0 disables)")
        self.eps = float(eps)
        self.eps_infeas = float(eps_infeas)
        # The duality gap is the splitting's slowest mode; receding-horizon
        # callers can relax it independently of the feasibility residuals.
        self.eps_gap = float(eps_gap) if eps_gap is not None else self.eps
        self.max_iter = int(max_iter)
        self.relax = float(relax)
        self.check_every = int(check_every)
        self.ruiz_iters = int(ruiz_iters)
        self.adaptive_scale = bool(adaptive_scale)
        self.rescale_after = int(rescale_after)
        self.max_rescales = int(max_rescales)
        self.aa_memory = int(aa_memory)


class ConicProgram:
    """Problem data: c, sparse A, b and the ordered cone blocks.

    `cones` is a sequence of (kind, dim) pairs with kind in
    {"zero", "nonneg", "soc"}; dims must sum to the row count of A.
    """

    def __init__(self, c, a, b, cones):
        self.c = np.asarray(c, dtype=float).ravel()
        self.a = sp.csc_matrix(a)
        self.b = np.asarray(b, dtype=float).ravel()
        self.cones = [(str(kind), int(dim)) for kind, dim in cones]
        m, n = self.a.shape
        if self.c.shape != (n,):
            raise ValueError(f"c has {self.c.shape[0]} entries, A has {n} columns")
        if self.b.shape != (m,):
            raise ValueError(f"b has {self.b.shape[0]} entries, A has {m} rows")
        total = 0
        for kind, dim in self.cones:
            if kind not in (ZERO, NONNEG, SOC):
                raise ValueError(f"unknown cone kind {kind!r}")
            if dim < 1:
                raise ValueError(f"cone block dims must be >= 1, got {dim}")
            total += dim
        if total != m:
            raise ValueError(f"cone dims sum to {total}, but A has {m} rows")

    @property
    def n_vars(self):
        return self.a.shape[1]

    @property
    def n_rows(self):
        return self.a.shape[0]

    def is_finite(self):
        return (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.a.data)))

    def lint_soc_rows(self):
        """Names of SOC blocks containing all-zero rows of A (usually a sign
        of degenerate tightening terms; harmless but worth knowing)."""
        row_nnz = np.diff(sp.csr_matrix(self.a).indptr)
        flagged = []
        start = 0
        for idx, (kind, dim) in enumerate(self.cones):
            if kind == SOC and np.any(row_nnz[start:start + dim] == 0):
                flagged.append(idx)
            start += dim
        return flagged


class ConicSolution:
    """Solver output: status, primal/dual iterates, residuals, counters.

    For infeasible statuses the certificate lives in `y` (primal
    infeasibility) or in `x`/`s` (dual infeasibility), normalized so that
    b^T y = -1 or c^T x = -1 respectively.
    """

    __slots__ = ("status", "x", "y", "s", "r_primal", "r_dual", "gap",
                 "iterations", "solve_time", "objective", "scaling")

    def __init__(self, status, x, y, s, r_primal, r_dual, gap, iterations,
                 solve_time, objective, scaling=None):
        self.status = status
        self.x = x
        self.y = y
        self.s = s
        self.r_primal = r_primal
        self.r_dual = r_dual
        self.gap = gap
        self.iterations = iterations
        self.solve_time = solve_time
        self.objective = objective
        # (d, e) equilibration pair, reusable to seed the next solve of a
        # structurally identical program
        self.scaling = scaling

    def __repr__(self):
        return (f"ConicSolution(status={self.status!r}, obj={self.objective}, "
                f"iters={self.iterations}, res=({self.r_primal:.2e}, "
                f"{self.r_dual:.2e}, {self.gap:.2e}))")


class WarmStart:
    """Seeded iterates for `solve`; s is projected onto the cone."""

    __slots__ = ("x", "y", "s")

    def __init__(self, x, y, s):
        self.x = x
        self.y = y
        self.s = s


def project_soc(v):
    """Euclidean projection onto the second-order cone {(t, u): ||u|| <= t}."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError("SOC vectors must be 1-d with at least one entry")
    if v.shape[0] == 1:
        return np.maximum(v, 0.0)
    t = v[0]
    u = v[1:]
    norm_u = float(np.linalg.norm(u))
    if norm_u <= t:
        return v.copy()
    if norm_u <= -t:
        return np.zeros_like(v)
    scale = 0.5 * (1.0 + t / norm_u)
    out = np.empty_like(v)
    out[0] = scale * norm_u
    out[1:] = scale * u
    return out


class _ConeIndex:
    """Precomputed row indices for fast repeated cone projections.

    All SOC blocks are handled in one vectorized pass over a padded
    (n_soc, max_dim) index matrix; pad entries point at a scratch slot
    one past the last row, which reads as zero and absorbs writes.
    """

    def __init__(self, cones):
        zero_rows = []
        nonneg_rows = []
        soc_list = []
        start = 0
        for kind, dim in cones:
            if kind == ZERO:
                zero_rows.extend(range(start, start + dim))
            elif kind == NONNEG:
                nonneg_rows.extend(range(start, start + dim))
            elif dim == 1:
                nonneg_rows.append(start)
            else:
                soc_list.append((start, dim))
            start += dim
        self.m = start
        self.zero_rows = np.asarray(zero_rows, dtype=np.intp)
        self.nonneg_rows = np.asarray(nonneg_rows, dtype=np.intp)
        if soc_list:
            max_dim = max(dim for _, dim in soc_list)
            pad = np.full((len(soc_list), max_dim), self.m, dtype=np.intp)
            for i, (st, dim) in enumerate(soc_list):
                pad[i, :dim] = np.arange(st, st + dim)
            self.soc_pad = pad
            self.soc_flat = pad.ravel()
            self.soc_span = (soc_list[0][0],
                             soc_list[-1][0] + soc_list[-1][1])
            self._buf = np.zeros(self.m + 1)
        else:
            self.soc_pad = None

    def project_dual(self, v, out=None):
        """Project onto the dual cone (zero rows become free)."""
        if out is None:
            out = v.copy()
        else:
            np.copyto(out, v)
        if self.soc_pad is not None:
            buf = self._buf
            buf[:self.m] = v
            buf[self.m] = 0.0
            block = buf[self.soc_pad]
            t = block[:, 0]
            tails = block[:, 1:]
            norm_u = np.sqrt(np.einsum("ij,ij->i", tails, tails))
            # Branchless blend of the three cases: tail factor f and head
            # value h are 1/t inside the cone, 0/0 inside the polar cone,
            # and alpha/(alpha*norm) on the boundary strip.
            safe = np.maximum(norm_u, 1e-300)
            alpha = 0.5 * (1.0 + t / safe)
            inside = norm_u <= t
            polar = norm_u <= -t
            f = np.where(inside, 1.0, np.where(polar, 0.0, alpha))
            h = np.where(inside, t, np.where(polar, 0.0, alpha * norm_u))
            block *= f[:, None]
            block[:, 0] = h
            buf[self.soc_flat] = block.ravel()
            lo, hi = self.soc_span
            out[lo:hi] = buf[lo:hi]
        nn = self.nonneg_rows
        if nn.size:
            out[nn] = np.maximum(out[nn], 0.0)
        return out

    def project_primal(self, v):
        """Project onto the cone itself (zero rows become zero)."""
        out = self.project_dual(v)
        out[self.zero_rows] = 0.0
        return out

    def in_dual(self, y, tol):
        """Max violation of dual-cone membership."""
        worst = 0.0
        nn = self.nonneg_rows
        if nn.size:
            worst = max(worst, float(np.max(-y[nn], initial=0.0)))
        if self.soc_pad is not None:
            buf = np.zeros(self.m + 1)
            buf[:self.m] = y
            block = buf[self.soc_pad]
            gap = np.linalg.norm(block[:, 1:], axis=1) - block[:, 0]
            worst = max(worst, float(np.max(gap, initial=0.0)))
        return worst <= tol, worst


def kkt_residuals(prog, x, y, s):
    """Normalized KKT residuals (primal, dual, gap) of a candidate triple."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    r_primal = np.linalg.norm(prog.a @ x + s - prog.b) / (1.0 + np.linalg.norm(prog.b))
    r_dual = np.linalg.norm(prog.a.T @ y + prog.c) / (1.0 + np.linalg.norm(prog.c))
    ctx = float(prog.c @ x)
    bty = float(prog.b @ y)
    gap = abs(ctx + bty) / (1.0 + abs(ctx) + abs(bty))
    return float(r_primal), float(r_dual), float(gap)


def _equilibrate(prog, iters, d0=None, e0=None):
    """Ruiz scaling with uniform factors across the rows of each SOC block.

    Returns (d, e, sigma, rho, a_s, b_s, c_s) with a_s = diag(d) A diag(e),
    b_s = d * b, c_s = e * c; sigma and rho are suggested scalar divisors
    for b_s and c_s (callers apply them, and may adapt them later).

    `d0`/`e0` seed the scaling (e.g. from a structurally identical program
    solved a moment ago); the sweeps then only refine it, so far fewer
    iterations are needed for the same conditioning.
    """
    m, n = prog.a.shape
    a_csc = prog.a.tocsc()
    indptr, indices = a_csc.indptr, a_csc.indices
    data = np.abs(a_csc.data)
    col_of = np.repeat(np.arange(n, dtype=np.intp), np.diff(indptr))

    if d0 is not None:
        d = np.array(d0, dtype=float)
        e = np.array(e0, dtype=float)
        data *= d[indices] * e[col_of]
    else:
        d = np.ones(m)
        e = np.ones(n)

    soc_blocks = []
    start = 0
    for kind, dim in prog.cones:
        if kind == SOC and dim > 1:
            soc_blocks.append((start, start + dim))
        start += dim

    for _ in range(max(0, iters)):
        row_max = np.zeros(m)
        np.maximum.at(row_max, indices, data)
        for lo, hi in soc_blocks:
            row_max[lo:hi] = np.max(row_max[lo:hi])
        col_max = np.zeros(n)
        np.maximum.at(col_max, col_of, data)
        row_scale = 1.0 / np.sqrt(np.where(row_max > 0.0, row_max, 1.0))
        col_scale = 1.0 / np.sqrt(np.where(col_max > 0.0, col_max, 1.0))
        d *= row_scale
        e *= col_scale
        data *= row_scale[indices] * col_scale[col_of]

    a_s = sp.csc_matrix((a_csc.data * (d[indices] * e[col_of]),
                         indices.copy(), indptr.copy()), shape=(m, n))
    b_s = d * prog.b
    c_s = e * prog.c
    sigma = float(np.linalg.norm(b_s))
    rho = float(np.linalg.norm(c_s))
    sigma = min(max(sigma, 1e-6), 1e6) if sigma > 0.0 else 1.0
    rho = min(max(rho, 1e-6), 1e6) if rho > 0.0 else 1.0
    return d, e, sigma, rho, a_s, b_s, c_s


def warm_start(prog, x0, y0, s0):
    """Package (x0, y0, s0) as a warm start; s0 is projected onto the cone."""
    x0 = np.asarray(x0, dtype=float).copy()
    y0 = np.asarray(y0, dtype=float).copy()
    s0 = np.asarray(s0, dtype=float).copy()
    if x0.shape != (prog.n_vars,) or y0.shape != (prog.n_rows,) \
            or s0.shape != (prog.n_rows,):
        raise ValueError("warm-start shapes do not match the program")
    cone_index = _ConeIndex(prog.cones)
    s0 = cone_index.project_primal(s0)
    return WarmStart(x0, y0, s0)


def solve(prog, settings=None, warm=None, scaling=None):
    """Solve a conic program; never raises on solvable/infeasible inputs.

    Returns a ConicSolution whose status is one of optimal,
    optimal_inaccurate, primal_infeasible, dual_infeasible, iteration_limit
    or numerical_error.  `scaling` seeds the equilibration with the (d, e)
    pair of a previous solution whose program had the same structure.
    """
    t_start = time.perf_counter()
    settings = settings or SolverSettings()
    m, n = prog.a.shape

    if not prog.is_finite():
        return ConicSolution(NUMERICAL_ERROR, np.full(n, np.nan),
                             np.full(m, np.nan), np.full(m, np.nan),
                             math.nan, math.nan, math.nan, 0,
                             time.perf_counter() - t_start, math.nan)

    if scaling is not None and scaling[0].shape == (m,) \
            and scaling[1].shape == (n,):
        d, e, sigma, rho, a_s, b_ruiz, c_ruiz = _equilibrate(
            prog, 2, d0=scaling[0], e0=scaling[1])
    else:
        d, e, sigma, rho, a_s, b_ruiz, c_ruiz = _equilibrate(
            prog, settings.ruiz_iters)
    cone_index = _ConeIndex(prog.cones)
    dim = n + m + 1
    b_norm = float(np.linalg.norm(prog.b))
    c_norm = float(np.linalg.norm(prog.c))

    # A warm start carries the expected solution magnitude; fold it into
    # the scalar factors so the scaled iterate starts near unit norm.
    if warm is not None:
        wx = float(np.linalg.norm(warm.x / e))
        wy = float(np.linalg.norm(warm.y / d))
        if wx > 1e-12:
            sigma = min(max(wx, 1e-10), 1e12)
        if wy > 1e-12:
            rho = min(max(wy, 1e-10), 1e12)

    def factorize(sig, rh):
        # Homogeneous self-dual embedding: skew matrix over (x, y, tau).
        b_s = b_ruiz / sig
        c_s = c_ruiz / rh
        q_mat = sp.bmat([
            [None, a_s.T, c_s[:, None]],
            [-a_s, None, b_s[:, None]],
            [-c_s[None, :], -b_s[None, :], None],
        ], format="csc")
        return splu(sp.identity(dim, format="csc") + q_mat)

    lu = factorize(sigma, rho)

    def project_embed(p_vec):
        u_vec = p_vec.copy()
        cone_index.project_dual(u_vec[n:n + m], out=u_vec[n:n + m])
        if u_vec[-1] < 0.0:
            u_vec[-1] = 0.0
        return u_vec

    def unscale_xys(ux, uy, vs):
        x = sigma * e * ux
        y = rho * d * uy
        s = sigma * (vs / d)
        return x, y, s

    # Governing vector: u = Pi(p) and v = u - p recover the embedding pair.
    p = np.zeros(dim)
    p[-1] = 1.0
    if warm is not None:
        p = np.zeros(dim)
        p[:n] = warm.x / (e * sigma)
        p[n:n + m] = warm.y / (d * rho) - warm.s * d / sigma
        p[-1] = 1.0

    best = None
    alpha = settings.relax
    status = ITERATION_LIMIT
    iterations = settings.max_iter
    next_rescale = settings.rescale_after if settings.adaptive_scale else None
    rescales_left = settings.max_rescales
    gap_best = math.inf
    stall_checks = 0

    # Anderson acceleration state (type-II on the p-map); history lives in
    # ring buffers, one column per retained iterate difference.  The gram
    # matrix of the difference columns is maintained incrementally: each
    # iteration replaces one column, so one matvec refreshes its row.
    mem = settings.aa_memory
    if mem:
        dp_buf = np.empty((dim, mem))
        dg_buf = np.empty((dim, mem))
        gram_buf = np.empty((mem, mem))
        cn_buf = np.empty(mem)
    n_hist = 0
    head = 0
    p_prev = g_prev = None
    g_min = math.inf

    def reset_aa():
        nonlocal p_prev, g_prev, g_min, n_hist, head
        n_hist = 0
        head = 0
        p_prev = g_prev = None
        g_min = math.inf

    for k in range(1, settings.max_iter + 1):
        u = project_embed(p)

        # k == 1 catches warm starts seeded at (or near) the optimum.
        if k == 1 or k % settings.check_every == 0 or k == settings.max_iter:
            if not np.all(np.isfinite(u)):
                status, iterations = NUMERICAL_ERROR, k
                best = (np.full(n, np.nan), np.full(m, np.nan),
                        np.full(m, np.nan))
                break

            v = u - p
            tau = u[-1]
            candidate_ok = False
            if tau > 1e-12:
                x, y, s = unscale_xys(u[:n] / tau, u[n:n + m] / tau,
                                      v[n:n + m] / tau)
                r_pri, r_dua, gap = kkt_residuals(prog, x, y, s)
                best = (x, y, s)
                if r_pri <= settings.eps and r_dua <= settings.eps \
                        and gap <= settings.eps_gap:
                    status, iterations = OPTIMAL, k
                    break
                # The splitting's slowest mode is usually the gap: the
                # residuals land well inside tolerance while the gap creeps
                # by fractions of a percent per sweep.  Once it has stopped
                # making headway and sits within 10x of tolerance, return
                # the iterate as inaccurate instead of burning the budget.
                if r_pri <= settings.eps and r_dua <= settings.eps \
                        and gap <= 10.0 * settings.eps_gap \
                        and gap > 0.98 * gap_best:
                    stall_checks += 1
                    if stall_checks >= 8:
                        status, iterations = OPTIMAL_INACCURATE, k
                        break
                else:
                    stall_checks = 0
                gap_best = min(gap_best, gap)
                # A collapsed tau is itself evidence that the solution
                # dwarfs the embedding's unit scale, so accept a rougher
                # candidate for rescaling in that regime.
                candidate_ok = (r_pri <= 3e-2 and r_dua <= 3e-2) or \
                    (tau <= 1e-2 and r_pri <= 0.3 and r_dua <= 0.3)

            # Certificate checks on the raw (tau-free) iterate.  The
            # certificate is normalized to b'y = -1 (resp. c'x = -1) and
            # its residual weighted by ||b|| (resp. ||c||) so the test is
            # invariant to rescaling the problem data.  A test relative
            # to ||y|| itself would be unsound: feasible programs admit
            # near-null dual directions with slightly negative b'y.
            y_raw = rho * d * u[n:n + m]
            bty = float(prog.b @ y_raw)
            if bty < -1e-12:
                y_cert = y_raw / (-bty)
                if np.linalg.norm(prog.a.T @ y_cert) * b_norm \
                        <= settings.eps_infeas:
                    status, iterations = PRIMAL_INFEASIBLE, k
                    best = (np.full(n, np.nan), y_cert, np.full(m, np.nan))
                    break
            x_raw = sigma * e * u[:n]
            ctx = float(prog.c @ x_raw)
            if ctx < -1e-12:
                s_raw = sigma * (v[n:n + m] / d)
                x_cert = x_raw / (-ctx)
                s_cert = s_raw / (-ctx)
                if np.linalg.norm(prog.a @ x_cert + s_cert) * c_norm \
                        <= settings.eps_infeas:
                    status, iterations = DUAL_INFEASIBLE, k
                    best = (x_cert, np.full(m, np.nan), s_cert)
                    break

            # Iterate magnitudes far from O(1) slow the splitting down
            # badly.  Once the candidate is a ballpark solution (moderate
            # residuals, so its magnitudes reflect the solution rather
            # than a transient), fold them into the scalar factors and
            # restart from the remapped candidate.  Doubling the interval
            # keeps total refactorization cost low.
            if next_rescale is not None and k >= next_rescale \
                    and rescales_left > 0 and candidate_ok:
                nx = float(np.linalg.norm(u[:n])) / tau
                ny = float(np.linalg.norm(u[n:n + m])) / tau
                if nx > 4.0 or ny > 4.0 or 0.0 < nx < 0.25 \
                        or 0.0 < ny < 0.25:
                    x, y, s = best
                    if nx > 0.0:
                        sigma = min(max(sigma * nx, 1e-10), 1e12)
                    if ny > 0.0:
                        rho = min(max(rho * ny, 1e-10), 1e12)
                    lu = factorize(sigma, rho)
                    p = np.zeros(dim)
                    p[:n] = x / (e * sigma)
                    p[n:n + m] = y / (d * rho) - s * d / sigma
                    p[-1] = 1.0
                    reset_aa()
                    rescales_left -= 1
                    next_rescale *= 2
                    continue
                next_rescale *= 2

        u_tilde = lu.solve(2.0 * u - p)
        if alpha == 1.0:
            fp = p + u_tilde - u
        else:
            fp = p + alpha * (u_tilde - u)
        if mem == 0:
            p = fp
            continue

        g = fp - p
        ng = float(np.sqrt(g @ g))
        if ng > 2.0 * g_min and n_hist:
            # Residual blew up under acceleration: drop the memory and
            # fall back to the plain step.
            reset_aa()
            p = fp
            g_min = ng
            continue
        g_min = min(g_min, ng)
        if p_prev is not None:
            np.subtract(p, p_prev, out=dp_buf[:, head])
            np.subtract(g, g_prev, out=dg_buf[:, head])
            n_hist = min(n_hist + 1, mem)
            gcol = dg_buf[:, :n_hist].T @ dg_buf[:, head]
            gram_buf[head, :n_hist] = gcol
            gram_buf[:n_hist, head] = gcol
            cn_buf[head] = math.sqrt(max(gcol[head], 0.0))
            head = (head + 1) % mem
        p_prev, g_prev = p, g
        if n_hist:
            dp_sel = dp_buf if n_hist == mem else dp_buf[:, :n_hist]
            dg_sel = dg_buf if n_hist == mem else dg_buf[:, :n_hist]
            # Solve the column-normalized normal equations (equivalent to
            # the unnormalized ones, but far better conditioned).
            cn = np.where(cn_buf[:n_hist] > 0.0, cn_buf[:n_hist], 1.0)
            gram = gram_buf[:n_hist, :n_hist] / np.outer(cn, cn)
            gram.flat[::n_hist + 1] += 1e-12
            try:
                gamma = np.linalg.solve(gram, (dg_sel.T @ g) / cn) / cn
                p_acc = fp - dp_sel @ gamma
                p_acc -= dg_sel @ gamma
            except np.linalg.LinAlgError:
                p_acc = fp
            if np.all(np.isfinite(p_acc)):
                # The embedding is positively homogeneous, so the zero
                # vector is a (useless) fixed point; when acceleration
                # shrinks the iterate toward it, restore the magnitude of
                # the plain step, which follows the informative ray.
                na = float(np.sqrt(p_acc @ p_acc))
                nf = float(np.sqrt(fp @ fp))
                if na < 0.25 * nf:
                    p = p_acc * (nf / na) if na > 0.0 else fp
                else:
                    p = p_acc
            else:
                p = fp
        else:
            p = fp

    if best is None:
        u = project_embed(p)
        v = u - p
        tau = u[-1] if u[-1] > 1e-12 else 1.0
        best = unscale_xys(u[:n] / tau, u[n:n + m] / tau, v[n:n + m] / tau)

    x, y, s = best
    if status in (OPTIMAL, OPTIMAL_INACCURATE, ITERATION_LIMIT):
        r_pri, r_dua, gap = kkt_residuals(prog, x, y, s)
        objective = float(prog.c @ x)
        # The iterate at the cap is often a perfectly usable solution whose
        # duality gap is crawling through its last factor of a few; callers
        # (receding-horizon loops especially) should not have to discard
        # it.  Grade it inaccurate-optimal when within 10x of tolerance.
        if status == ITERATION_LIMIT and r_pri <= 10.0 * settings.eps \
                and r_dua <= 10.0 * settings.eps \
                and gap <= 10.0 * settings.eps_gap:
            status = OPTIMAL_INACCURATE
    else:
        r_pri = r_dua = gap = math.nan
        objective = math.nan
    return ConicSolution(status, x, y, s, r_pri, r_dua, gap, iterations,
                         time.perf_counter() - t_start, objective,
                         scaling=(d, e))


def check_primal_certificate(prog, y, tol=1e-6):
    """Validate a primal-infeasibility certificate: A^T y ~ 0, b^T y < 0,
    y in K*.  Returns (ok, details dict).

    The residual is ||A^T y|| * ||b|| / (-b^T y): dimensionless, and for a
    feasible program with any solution x* it is bounded below by
    ||b||/||x*||, so small values genuinely witness infeasibility.
    """
    cone_index = _ConeIndex(prog.cones)
    bty = float(prog.b @ y)
    if bty >= 0.0:
        return False, {"residual": math.inf, "bty": bty,
                       "dual_violation": math.inf}
    residual = float(np.linalg.norm(prog.a.T @ y)) \
        * float(np.linalg.norm(prog.b)) / (-bty)
    member, worst = cone_index.in_dual(y, tol * max(1.0,
                                                    float(np.linalg.norm(y))))
    ok = residual <= tol and member
    return ok, {"residual": residual, "bty": bty, "dual_violation": worst}


def check_dual_certificate(prog, x, s, tol=1e-6):
    """Validate a dual-infeasibility certificate: A x + s ~ 0 with s in K
    and c^T x < 0.  Residual ||Ax + s|| * ||c|| / (-c^T x), as in
    check_primal_certificate."""
    cone_index = _ConeIndex(prog.cones)
    ctx = float(prog.c @ x)
    if ctx >= 0.0:
        return False, {"residual": math.inf, "ctx": ctx}
    residual = float(np.linalg.norm(prog.a @ x + s)) \
        * float(np.linalg.norm(prog.c)) / (-ctx)
    s_proj = cone_index.project_primal(s.copy())
    member = float(np.linalg.norm(s_proj - s)) \
        <= tol * max(1.0, float(np.linalg.norm(s)))
    ok = residual <= tol and member
    return ok, {"residual": residual, "ctx": ctx}


def write_program(prog, path):
    """Write the program to a plain-text interchange file (17 sig digits)."""
    a_coo = prog.a.tocoo()
    lines = ["conicprogram 1"]
    lines.append(f"dims {prog.n_rows} {prog.n_vars}")
    lines.append("cones " + " ".join(f"{kind}:{dim}" for kind, dim in prog.cones))
    lines.append("c " + " ".join(f"{val:.17g}" for val in prog.c))
    lines.append("b " + " ".join(f"{val:.17g}" for val in prog.b))
    lines.append(f"annz {a_coo.nnz}")
    for i, j, val in zip(a_coo.row, a_coo.col, a_coo.data):
        lines.append(f"{i} {j} {val:.17g}")
    with open(path, "w", encoding="ascii") as handle:
        handle.write("\n".join(lines) + "\n")


def read_program(path):
    """Parse a file produced by `write_program`."""
    with open(path, encoding="ascii") as handle:
        lines = [ln.strip() for ln in handle if ln.strip()]
    if not lines or not lines[0].startswith("conicprogram"):
        raise ValueError("not a conic program interchange file")
    m, n = (int(tok) for tok in lines[1].split()[1:3])
    cones = []
    for tok in lines[2].split()[1:]:
        kind, dim = tok.split(":")
        cones.append((kind, int(dim)))
    c = np.array([float(tok) for tok in lines[3].split()[1:]])
    b = np.array([float(tok) for tok in lines[4].split()[1:]])
    nnz = int(lines[5].split()[1])
    rows, cols, vals = [], [], []
    for ln in lines[6:6 + nnz]:
        i, j, val = ln.split()
        rows.append(int(i))
        cols.append(int(j))
        vals.append(float(val))
    a = sp.coo_matrix((vals, (rows, cols)), shape=(m, n))
    return ConicProgram(c, a, b, cones)
