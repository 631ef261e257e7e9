"""Simplex projection and simplex-constrained least squares.

The weight estimation problem is min ||y - A w||^2 over the probability
simplex. It is solved as a quadratic program in the normal-equation form
f(w) = y'y - 2 c'w + w'Q w with Q = A'A, c = A'y, using accelerated projected
gradient descent (with the best visited iterate retained, so descent from any
start is guaranteed) followed by an exact refinement step on the active face.

Everything is batched: a batch row is one (problem, start) pair, and an
optional component mask pins excluded coordinates to zero, which is how the
nested candidate models share a single union design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK_FILL = -1e30


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    return project_rows_to_simplex(np.asarray(v, dtype=float)[None, :])[0]


def project_rows_to_simplex(v: np.ndarray) -> np.ndarray:
    """Project each row of `v` onto the simplex (sort-based algorithm)."""
    v = np.asarray(v, dtype=float)
    n = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    j = np.arange(1, n + 1, dtype=float)
    rho = np.sum(u - css / j > 0, axis=1)
    tau = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - tau[:, None], 0.0)


@dataclass
class BatchSolution:
    weights: np.ndarray     # (n_problems, n_coords)
    objective: np.ndarray   # (n_problems,)
    converged: np.ndarray   # (n_problems,) bool
    iterations: int


def _objective(w, q, c, y2):
    return y2 + np.einsum("rm,rmn,rn->r", w, q, w) - 2.0 * np.einsum("rm,rm->r", c, w)


def _active_face_refine(w, q, c, y2, f, mask):
    """Solve the equality-constrained LS restricted to each row's active face.

    Projected gradient identifies the support; on that face the optimum is the
    solution of a small KKT system. The refined point is kept only when it is
    feasible and improves the objective.
    """
    out = w.copy()
    f_out = f.copy()
    for r in range(w.shape[0]):
        active = w[r] > 1e-12
        if mask is not None:
            active &= mask[r]
        k = int(active.sum())
        if k == 0:
            continue
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2.0 * q[r][np.ix_(active, active)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([2.0 * c[r][active], [1.0]])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        w_face = sol[:k]
        if w_face.min() < -1e-12 or abs(w_face.sum() - 1.0) > 1e-9:
            continue
        cand = np.zeros_like(w[r])
        cand[active] = np.clip(w_face, 0.0, None)
        cand /= cand.sum()
        f_cand = _objective(cand[None], q[r : r + 1], c[r : r + 1], y2[r : r + 1])[0]
        if f_cand < f_out[r]:
            out[r] = cand
            f_out[r] = f_cand
    return out, f_out


def solve_simplex_lsq_batch(
    q: np.ndarray,
    c: np.ndarray,
    y2: np.ndarray,
    starts: np.ndarray,
    mask: np.ndarray | None = None,
    max_iter: int = 4000,
    rel_tol: float = 1e-12,
    check_every: int = 50,
) -> BatchSolution:
    """Minimize y2_r - 2 c_r'w + w'Q_r w over the simplex for every row r.

    q: (R, M, M) PSD matrices, c: (R, M), y2: (R,), starts: (R, M).
    mask: optional (R, M) boolean; False coordinates are fixed at exactly 0
    (the projection then acts on the unmasked sub-vector).

    Returns the best iterate visited per row, so the objective at the
    solution never exceeds the objective at the start.
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    w = np.asarray(starts, dtype=float).copy()
    n_rows = q.shape[0]
    mask_all = mask

    def proj(v, m):
        if m is not None:
            v = np.where(m, v, _MASK_FILL)
        out = project_rows_to_simplex(v)
        if m is not None:
            out = np.where(m, out, 0.0)
        return out

    w = proj(w, mask_all)
    # Lipschitz constant of the gradient is 2*lambda_max(Q); masked coords do
    # not move so the sub-matrix bound is dominated by the full one.
    lam = np.linalg.eigvalsh(q)[:, -1]
    step = 1.0 / np.maximum(2.0 * lam, 1e-300)

    out_w = w.copy()
    out_f = _objective(w, q, c, y2)
    out_converged = np.zeros(n_rows, dtype=bool)

    # per-row state, compacted as rows converge so stragglers do not keep
    # the whole batch iterating
    active = np.arange(n_rows)
    q_a, c_a, y2_a, step_a = q, c, y2, step
    mask_a = mask_all
    f_best = out_f.copy()
    w_best = w.copy()
    f_prev_check = f_best.copy()

    def retire(rows_local):
        w_ref, f_ref = _active_face_refine(
            w_best[rows_local],
            q_a[rows_local],
            c_a[rows_local],
            y2_a[rows_local],
            f_best[rows_local],
            None if mask_a is None else mask_a[rows_local],
        )
        out_w[active[rows_local]] = w_ref
        out_f[active[rows_local]] = f_ref

    z = w.copy()
    w_prev = w.copy()
    theta = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (np.einsum("rmn,rn->rm", q_a, z) - c_a)
        w_new = proj(z - step_a[:, None] * grad, mask_a)
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        z = w_new + ((theta - 1.0) / theta_new) * (w_new - w_prev)
        theta = theta_new
        w_prev = w_new

        f_new = _objective(w_new, q_a, c_a, y2_a)
        better = f_new < f_best
        f_best = np.where(better, f_new, f_best)
        w_best = np.where(better[:, None], w_new, w_best)

        if it % check_every == 0:
            scale = np.maximum(np.abs(f_prev_check), 1.0)
            done = (f_prev_check - f_best) <= rel_tol * scale
            if done.any():
                rows = np.flatnonzero(done)
                retire(rows)
                out_converged[active[rows]] = True
                keep = np.flatnonzero(~done)
                if keep.size == 0:
                    active = active[keep]
                    break
                active = active[keep]
                q_a, c_a, y2_a, step_a = q_a[keep], c_a[keep], y2_a[keep], step_a[keep]
                if mask_a is not None:
                    mask_a = mask_a[keep]
                z, w_prev = z[keep], w_prev[keep]
                f_best, w_best = f_best[keep], w_best[keep]
            f_prev_check = f_best.copy()

    if active.size:
        retire(np.arange(active.size))
    return BatchSolution(weights=out_w, objective=out_f, converged=out_converged, iterations=it)


def solve_simplex_lsq(
    design: np.ndarray,
    target: np.ndarray,
    starts: np.ndarray,
    max_iter: int = 4000,
    rel_tol: float = 1e-12,
) -> tuple[np.ndarray, float, bool]:
    """Multi-start simplex-constrained least squares for one problem.

    design: (X, M), target: (X,), starts: (S, M). Returns (weights,
    objective, converged) for the best start.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n_starts = starts.shape[0]
    q = np.broadcast_to(design.T @ design, (n_starts, design.shape[1], design.shape[1]))
    c = np.broadcast_to(design.T @ target, (n_starts, design.shape[1]))
    y2 = np.full(n_starts, float(target @ target))
    sol = solve_simplex_lsq_batch(q, c, y2, starts, max_iter=max_iter, rel_tol=rel_tol)
    best = int(np.argmin(sol.objective))
    return sol.weights[best], float(sol.objective[best]), bool(sol.converged[best])
