"""Small dense linear-algebra kernel shared by the other modules.

Everything here operates at desk scale (matrices up to ~12x12), so the
emphasis is on determinism and accuracy rather than speed.  The SVD is a
one-sided Jacobi sweep with a fixed rotation order and an explicit sign
convention, so identical inputs always produce bit-identical outputs.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.optimize


# Central tolerance table.  Single tuning point for the whole package.
TOLERANCES = {
    "ortho": 1e-10,            # orthonormality of computed factors
    "reconstruction": 1e-10,   # relative factorization round-trip error
    "rank_rel": 1e-12,         # relative singular-value cutoff
    "sv_tie_rel": 1e-9,        # relative gap below which singular values tie
    "root_rel": 1e-10,         # |f(root) - target| <= root_rel * (1 + |target|)
    "spd_residual": 1e-10,     # linear-solve residual scale
    "margin_feas": 1e-9,       # hard-margin feasibility slack
    "dual_feas": 1e-10,        # dual multiplier nonnegativity slack
    "constraint": 1e-9,        # interpolation constraint residual
    "kkt_grad": 1e-8,          # stationarity residual for predictors
    "fd_grad_rel": 1e-6,       # finite-difference gradient agreement
    "decomp_recon": 1e-10,     # tensor decomposition reconstruction
    "imag_residue": 1e-10,     # allowed imaginary leakage in real results
    "support_rel": 1e-8,       # relative magnitude defining a support entry
    "sym_rel": 1e-10,          # symmetry check for eigendecomposition
}

_MAX_BRACKET_DOUBLINGS = 60
_JACOBI_MAX_SWEEPS = 60


class NumericError(RuntimeError):
    """Raised when a numerical routine cannot meet its contract."""


@dataclass(frozen=True)
class SVDResult:
    """Compact SVD A = U diag(s) V^T with s descending and nonnegative."""
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    tie: bool  # True when two kept singular values are within tolerance


def _apply_sign_convention(U, V):
    """Flip column pairs so the first maximal-magnitude entry of each left
    singular vector is positive."""
    U = U.copy()
    V = V.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]
    return U, V


def svd(A):
    """Compact SVD of a real matrix by one-sided Jacobi rotations.

    Deterministic: fixed cyclic sweep order, no pivoting.  Rank is revealed
    with a relative threshold; the returned factors satisfy
    U^T U = V^T V = I and A = U diag(s) V^T to TOLERANCES["reconstruction"].
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("svd expects a 2-D array")
    if not np.all(np.isfinite(A)):
        raise ValueError("svd requires finite entries")
    k1, k2 = A.shape
    if k1 < k2:
        # Work on the transpose so columns are the short side, then swap.
        res = svd(A.T)
        U, V = _apply_sign_convention(res.V, res.U)
        return SVDResult(U=U, s=res.s, V=V, tie=res.tie)

    B = A.copy()
    V = np.eye(k2)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        return SVDResult(U=np.zeros((k1, 0)), s=np.zeros(0),
                         V=np.zeros((k2, 0)), tie=False)

    for _ in range(_JACOBI_MAX_SWEEPS):
        off = 0.0
        for i in range(k2 - 1):
            for j in range(i + 1, k2):
                bi = B[:, i].copy()
                bj = B[:, j].copy()
                aa = bi @ bi
                bb = bj @ bj
                ab = bi @ bj
                if aa * bb == 0.0:
                    continue
                rel = abs(ab) / np.sqrt(aa * bb)
                if rel <= 1e-15:
                    continue
                off = max(off, rel)
                zeta = (bb - aa) / (2.0 * ab)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                B[:, i] = c * bi - s * bj
                B[:, j] = s * bi + c * bj
                vi = V[:, i].copy()
                V[:, i] = c * vi - s * V[:, j]
                V[:, j] = s * vi + c * V[:, j]
        if off < 1e-14:
            break

    norms = np.linalg.norm(B, axis=0)
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    B = B[:, order]
    V = V[:, order]

    smax = norms[0]
    keep = norms > TOLERANCES["rank_rel"] * smax
    m = int(np.count_nonzero(keep))
    s_vals = norms[:m]
    U = B[:, :m] / s_vals
    V = V[:, :m]
    U, V = _apply_sign_convention(U, V)
    tie = bool(np.any(np.diff(s_vals) > -TOLERANCES["sv_tie_rel"] * (1.0 + smax))) \
        if m > 1 else False
    return SVDResult(U=U, s=s_vals, V=V, tie=tie)


def solve_spd(A, b):
    """Solve A x = b for symmetric positive definite A (Cholesky)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), b)


def pinv_rows(X):
    """Right pseudoinverse X^T (X X^T)^{-1} of a full-row-rank matrix."""
    X = np.asarray(X, dtype=float)
    G = X @ X.T
    try:
        c, low = scipy.linalg.cho_factor(G)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError("X is rank-deficient (X X^T not positive definite)") from exc
    return scipy.linalg.cho_solve((c, low), X).T


def sym_eig(A):
    """Eigendecomposition (Q, lam) of a symmetric matrix, ascending order."""
    A = np.asarray(A, dtype=float)
    nrm = np.max(np.abs(A)) if A.size else 0.0
    if np.max(np.abs(A - A.T)) > TOLERANCES["sym_rel"] * (1.0 + nrm):
        raise ValueError("sym_eig requires a symmetric matrix")
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    return Q, lam


def bracket_and_solve(f, target, x0=0.0, step=1.0, lo=None, hi=None):
    """Root of f(x) = target for strictly increasing continuous f.

    Brackets by geometric expansion from x0 (clamped toward optional domain
    bounds lo/hi by repeated halving of the remaining gap), then solves with
    Brent's method.  Raises NumericError if no bracket is found within 2^60
    expansion.
    """
    def g(x):
        return f(x) - target

    a = b = float(x0)
    ga = gb = g(a)
    width = float(step)
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if ga <= 0.0 <= gb:
            break
        if gb < 0.0:
            if hi is None:
                b = b + width
            else:
                b = b + 0.5 * (hi - b)
            gb = g(b)
        if ga > 0.0:
            if lo is None:
                a = a - width
            else:
                a = a + 0.5 * (lo - a)
            ga = g(a)
        width *= 2.0
    else:
        raise NumericError("bracket_and_solve: no sign change within expansion budget")

    if ga == 0.0:
        root = a
    elif gb == 0.0:
        root = b
    else:
        root = scipy.optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                     maxiter=200)
    if abs(f(root) - target) > TOLERANCES["root_rel"] * (1.0 + abs(target)):
        raise NumericError("bracket_and_solve: root does not meet tolerance")
    return root


@dataclass(frozen=True)
class MarginSolution:
    """Hard-margin separator: min ||z||^2 s.t. y_i x_i^T z >= 1."""
    z: np.ndarray          # unnormalized solution
    margin: float          # optimal margin 1/||z||
    dual: np.ndarray       # KKT multipliers, one per data point
    active: tuple          # indices of the support constraints


def hard_margin_l2(X, y):
    """Exact hard-margin l2 separator by active-set enumeration.

    Desk scale only (n <= ~12): every candidate active set is solved
    exactly and checked against the KKT conditions; the feasible candidate
    of least norm is the optimum because the optimum is attained at such a
    vertex.  Raises NumericError when the data admits no separator.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    Z = X * y[:, None]
    best = None
    max_size = min(n, d)
    for size in range(1, max_size + 1):
        for subset in combinations(range(n), size):
            idx = list(subset)
            Zs = Z[idx]
            G = Zs @ Zs.T
            try:
                nu = np.linalg.solve(G, np.ones(size))
            except np.linalg.LinAlgError:
                nu, res, _, _ = np.linalg.lstsq(G, np.ones(size), rcond=None)
                if np.linalg.norm(G @ nu - 1.0) > 1e-10:
                    continue
            if np.min(nu) < -TOLERANCES["dual_feas"]:
                continue
            z = Zs.T @ nu
            margins = Z @ z
            if np.min(margins) < 1.0 - TOLERANCES["margin_feas"]:
                continue
            norm = np.linalg.norm(z)
            if best is None or norm < best[0] - 1e-12:
                dual = np.zeros(n)
                dual[idx] = np.clip(nu, 0.0, None)
                best = (norm, z, dual, subset)
    if best is None:
        raise NumericError("hard_margin_l2: data is not separable at desk scale")
    norm, z, dual, subset = best
    return MarginSolution(z=z, margin=1.0 / norm, dual=dual, active=subset)
