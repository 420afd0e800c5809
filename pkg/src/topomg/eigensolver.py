"""Generalized Davidson eigensolver for the buckling pencil A x = lambda B x.

Targets the largest eigenvalues with a B-orthonormal search space expanded by
preconditioned residuals. Converged modes are locked (kept in the basis for
implicit deflation) while the iteration continues on the next target.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class DavidsonConfig:
    j_min: int = 10
    j_max: int = 25
    n_modes: int = 6
    rtol_residual: float = 1e-6
    rtol_eigenvalue_stall: float = 1e-13
    max_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.j_min >= self.j_max:
            raise ValueError("j_min must be < j_max")
        if self.n_modes > self.j_min:
            raise ValueError("n_modes must be <= j_min")


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, B-orthonormal
    iterations: int
    converged_count: int
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    # per locked mode: "residual" or "stall" (stalled eigenvalue change)
    lock_reasons: list = field(default_factory=list)


def b_orthonormalize(V, z, B, reject_tol=1e-10):
    """Two-pass modified Gram-Schmidt of z against V in the B-inner product.

    Returns the appended unit-B-norm vector, or None if z was numerically in
    span(V) (rejection is a signal to try a different expansion vector).
    """
    z = np.asarray(z, dtype=float).copy()
    norm0 = np.sqrt(abs(z @ (B @ z)))
    if norm0 == 0:
        return None
    for _ in range(2):
        if V is not None and V.shape[1] > 0:
            Bz = B @ z
            z -= V @ (V.T @ Bz)
    nrm = np.sqrt(abs(z @ (B @ z)))
    if nrm < reject_tol * norm0:
        return None
    return z / nrm


def rayleigh_ritz(A, B, V):
    """Ritz pairs of the pencil restricted to span(V), sorted descending.

    V is assumed B-orthonormal; the projected B-matrix is re-checked and the
    basis re-orthonormalized once if conditioning was lost.
    """
    for attempt in range(2):
        Ap = V.T @ (A @ V)
        Bp = V.T @ (B @ V)
        Ap = 0.5 * (Ap + Ap.T)
        Bp = 0.5 * (Bp + Bp.T)
        try:
            theta, y = scipy.linalg.eigh(Ap, Bp)
            break
        except scipy.linalg.LinAlgError:
            if attempt == 1:
                raise
            V = _reorthonormalize(V, B)
    order = np.argsort(theta)[::-1]
    theta = theta[order]
    y = y[:, order]
    return theta, V @ y


def _reorthonormalize(V, B):
    out = []
    W = None
    for j in range(V.shape[1]):
        W = np.column_stack(out) if out else None
        z = b_orthonormalize(W, V[:, j], B)
        if z is not None:
            out.append(z)
    return np.column_stack(out)


def _random_b_basis(n, k, B, rng):
    cols = []
    while len(cols) < k:
        z = b_orthonormalize(np.column_stack(cols) if cols else None,
                             rng.standard_normal(n), B)
        if z is not None:
            cols.append(z)
    return np.column_stack(cols)


def generalized_davidson(A, B, M=None, cfg=None, initial_space=None):
    """Compute the cfg.n_modes largest eigenvalues of A x = lambda B x.

    B must be SPD; M approximates the action of B^-1 (typically a multigrid
    V-cycle built for B). A mode is converged when its relative residual falls
    below cfg.rtol_residual or its eigenvalue stalls between outer iterations.
    """
    cfg = cfg or DavidsonConfig()
    n = A.shape[0]
    rng = np.random.default_rng(cfg.seed)
    if M is None:
        M = lambda v: v

    # locked (converged) modes kept separate from the active search space
    locked_vals = []
    locked_vecs = []
    lock_reasons = []
    V = None
    if initial_space is not None:
        S = np.atleast_2d(np.asarray(initial_space, dtype=float))
        if S.shape[0] != n:
            S = S.T
        cols = []
        for j in range(S.shape[1]):
            z = b_orthonormalize(np.column_stack(cols) if cols else None,
                                 S[:, j], B)
            if z is not None:
                cols.append(z)
        if cols:
            V = np.column_stack(cols)
    if V is None or V.shape[1] < cfg.j_min:
        extra = cfg.j_min - (0 if V is None else V.shape[1])
        R = _random_b_basis(n, cfg.j_min, B, rng) if V is None else None
        if V is None:
            V = R
        else:
            for _ in range(extra):
                z = b_orthonormalize(V, rng.standard_normal(n), B)
                if z is not None:
                    V = np.column_stack([V, z])

    it = 0
    prev_theta = None
    while it < cfg.max_iterations and len(locked_vals) < cfg.n_modes:
        W = np.column_stack(locked_vecs + [V]) if locked_vecs else V
        theta, Q = rayleigh_ritz(A, B, W)
        # active target: largest Ritz value not matching a locked mode
        target_idx = _next_target(theta, Q, B, locked_vecs)
        th = theta[target_idx]
        q = Q[:, target_idx]
        r = A @ q - th * (B @ q)
        rel = np.linalg.norm(r) / max(np.linalg.norm(A @ q), 1e-300)
        stalled = (prev_theta is not None and
                   abs(th - prev_theta) <= cfg.rtol_eigenvalue_stall * max(abs(th), 1e-300))
        if rel <= cfg.rtol_residual or stalled:
            locked_vals.append(th)
            locked_vecs.append(q)
            lock_reasons.append("residual" if rel <= cfg.rtol_residual else "stall")
            prev_theta = None
            # remove the locked direction from the active basis
            V = _reorthonormalize_against(V, locked_vecs, B)
            if V is None or V.shape[1] == 0:
                V = _random_b_basis(n, cfg.j_min, B, rng)
                V = _reorthonormalize_against(V, locked_vecs, B)
            continue
        prev_theta = th
        # restart: compress the active space to the leading j_min Ritz vectors
        if V.shape[1] >= cfg.j_max:
            keep = []
            for idx in range(theta.size):
                z = _deflate(Q[:, idx], locked_vecs, B)
                z = b_orthonormalize(np.column_stack(keep) if keep else None, z, B)
                if z is not None:
                    keep.append(z)
                if len(keep) == cfg.j_min:
                    break
            V = np.column_stack(keep)
        z = M(r)
        z = _deflate(z, locked_vecs, B)
        znew = b_orthonormalize(V, z, B)
        if znew is None:
            znew = b_orthonormalize(V, _deflate(rng.standard_normal(n), locked_vecs, B), B)
        if znew is not None:
            V = np.column_stack([V, znew])
        it += 1

    # final extraction: Ritz values over locked + active space
    W = np.column_stack(locked_vecs + [V]) if locked_vecs else V
    theta, Q = rayleigh_ritz(A, B, W)
    k = min(cfg.n_modes, theta.size)
    vals = theta[:k]
    vecs = Q[:, :k]
    res = np.array([
        np.linalg.norm(A @ vecs[:, i] - vals[i] * (B @ vecs[:, i]))
        / max(np.linalg.norm(A @ vecs[:, i]), 1e-300)
        for i in range(k)
    ])
    converged = int(np.count_nonzero(res <= 2 * cfg.rtol_residual)) if it >= cfg.max_iterations \
        else len(locked_vals)
    converged = max(converged, min(len(locked_vals), k))
    return EigenResult(eigenvalues=vals, eigenvectors=vecs, iterations=it,
                       converged_count=min(converged, k), residuals=res,
                       lock_reasons=lock_reasons)


def _deflate(z, locked_vecs, B):
    if not locked_vecs:
        return z
    L = np.column_stack(locked_vecs)
    return z - L @ (L.T @ (B @ z))


def _reorthonormalize_against(V, locked_vecs, B):
    if V is None:
        return None
    cols = []
    for j in range(V.shape[1]):
        z = _deflate(V[:, j], locked_vecs, B)
        z = b_orthonormalize(np.column_stack(cols) if cols else None, z, B)
        if z is not None:
            cols.append(z)
    return np.column_stack(cols) if cols else None


def _next_target(theta, Q, B, locked_vecs):
    """Index of the largest Ritz value whose vector is not a locked mode."""
    if not locked_vecs:
        return 0
    L = np.column_stack(locked_vecs)
    for idx in range(theta.size):
        proj = np.linalg.norm(L.T @ (B @ Q[:, idx]))
        if proj < 0.9:
            return idx
    return 0
