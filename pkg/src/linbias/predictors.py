"""Executable limit predictors with certificates.

Each routine characterizes where gradient flow ends up (a limit point for
regression, a limit direction for classification) without simulating, and
returns enough residual information to certify the claim from scratch:
constraint violations, KKT/stationarity gaps, and fit errors.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional

import numpy as np
import scipy.optimize

from . import scalar_ode
from .solvers import (TOLERANCES, NumericError, bracket_and_solve,
                      hard_margin_l2, pinv_rows, solve_spd, sym_eig)
from .tensors import Dataset, TensorNetwork


@dataclass(frozen=True)
class Prediction:
    """A predicted limit point or direction plus its certificate."""
    kind: str                  # point | direction
    value: np.ndarray
    theorem: str               # provenance tag naming the characterization
    certificate: dict
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        value = np.asarray(self.value, dtype=float)
        if self.kind not in ("point", "direction"):
            raise ValueError(f"unknown prediction kind {self.kind!r}")
        if self.kind == "direction":
            nrm = np.linalg.norm(value)
            if abs(nrm - 1.0) > 1e-12:
                raise ValueError("direction predictions must be unit norm")
        for name, v in self.certificate.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise ValueError(f"certificate entry {name} is negative")
        object.__setattr__(self, "value", value)

    def to_json_dict(self) -> dict:
        cert = {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                for k, v in self.certificate.items()}
        return {
            "kind": self.kind,
            "theorem": self.theorem,
            "value": [float(v) for v in self.value],
            "certificate": cert,
        }


def min_l2_interpolant(X, y) -> np.ndarray:
    """Minimum l2-norm interpolant X^T (X X^T)^{-1} y.

    This is the small-initialization limit of fully-connected regression.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return pinv_rows(X) @ y


def min_l1_interpolant(S, X, y, weights=None) -> np.ndarray:
    """Exact weighted-l1 interpolation by support enumeration.

    Minimizes sum_j |rho_j| / weights_j subject to X S^T rho = y, by trying
    every support of size <= n and keeping the feasible minimum.  With
    S = I this is plain basis pursuit in coefficient space.
    """
    S = np.asarray(S)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    A = X @ S.T
    if np.iscomplexobj(A):
        if np.max(np.abs(A.imag)) > TOLERANCES["imag_residue"]:
            raise ValueError("X S^T must be real for the l1 enumeration")
        A = A.real
    n, m = A.shape
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0.0):
        raise ValueError("weights must be positive")
    yscale = 1.0 + np.linalg.norm(y)
    if np.linalg.norm(y) <= TOLERANCES["constraint"]:
        return np.zeros(m)
    best = None
    for size in range(1, n + 1):
        for supp in combinations(range(m), size):
            cols = A[:, supp]
            sol, _, rank, _ = np.linalg.lstsq(cols, y, rcond=None)
            if np.linalg.norm(cols @ sol - y) > TOLERANCES["constraint"] * yscale:
                continue
            cost = float(np.sum(np.abs(sol) / w[list(supp)]))
            if best is None or cost < best[0] - 1e-12:
                rho = np.zeros(m)
                rho[list(supp)] = sol
                best = (cost, rho)
    if best is None:
        raise NumericError("min_l1_interpolant: constraints are infeasible")
    return best[1]


def min_l1_margin(A, y, weights=None) -> np.ndarray:
    """Exact weighted-l1 margin problem: min sum |rho_j|/w_j subject to
    y_i A_i^T rho >= 1, by support and active-set enumeration.

    Used as the two-layer (convex) classification solver and as the oracle
    behind the stationarity checker.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = A.shape
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    Z = A * y[:, None]
    best = None
    for size in range(1, n + 1):
        for supp in combinations(range(m), size):
            for active in combinations(range(n), size):
                B = Z[np.ix_(list(active), list(supp))]
                try:
                    sol = np.linalg.solve(B, np.ones(size))
                except np.linalg.LinAlgError:
                    continue
                rho = np.zeros(m)
                rho[list(supp)] = sol
                if np.min(Z @ rho) < 1.0 - TOLERANCES["margin_feas"]:
                    continue
                cost = float(np.sum(np.abs(sol) / w[list(supp)]))
                if best is None or cost < best[0] - 1e-12:
                    best = (cost, rho)
    if best is None:
        raise NumericError("min_l1_margin: no feasible vertex found")
    return best[1]


@dataclass(frozen=True)
class QSolution:
    """Constrained minimizer of the depth-L norm-like function Q."""
    rho: np.ndarray
    beta: np.ndarray
    nu: np.ndarray            # dual variables (accumulated residual integral)
    constraint_residual: float
    kkt_residual: float

    def prediction(self) -> Prediction:
        return Prediction(
            kind="point", value=self.beta, theorem="q-minimizer-regression",
            certificate={"constraint_residual": self.constraint_residual,
                         "kkt_residual": self.kkt_residual},
            extras={"rho": self.rho, "nu": self.nu})


def _h_and_prime(L, z):
    """Vectorized (h_L(z), h_L'(z)) evaluation."""
    h = np.array([scalar_ode.h(L, v) for v in z])
    hp = np.array([scalar_ode.h_prime(L, v) for v in z])
    return h, hp


def q_minimizer(L, alpha, eta_bar, S, X, y, max_iter=200) -> QSolution:
    """Solve min Q_{L,alpha,eta_bar}(rho) s.t. X S^T rho = y.

    Uses the stationarity parameterization
    rho = alpha^L |eta|^L * h_L(alpha^{L-2} |eta|^{L-2} * (S X^T nu))
    and runs damped Newton on the n dual variables; the Jacobian
    X S^T diag(...h_L'...) S X^T is positive definite because h_L' > 0.
    """
    L = int(L)
    eta = np.asarray(eta_bar, dtype=float)
    S = np.asarray(S, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(eta) <= 0.0):
        raise ValueError("q_minimizer requires all eta weights nonzero")
    w = np.abs(eta)
    A = X @ S.T                              # n x m
    c_outer = alpha ** L * w ** L            # multiplies h_L
    c_inner = alpha ** (L - 2) * w ** (L - 2)  # multiplies the dual image
    hint = scalar_ode.domain_hint(L) if L >= 3 else np.inf

    n = X.shape[0]
    nu = np.zeros(n)
    z = np.zeros_like(w)
    rho = np.zeros_like(w)
    g = A @ rho - y
    yscale = 1.0 + np.linalg.norm(y)

    for _ in range(max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm <= 1e-12 * yscale:
            break
        _, hp = _h_and_prime(L, z)
        D = c_outer * c_inner * hp
        J = A @ (D[:, None] * A.T)
        try:
            delta = solve_spd(J, -g)
        except NumericError:
            J = J + 1e-12 * np.trace(J) / max(n, 1) * np.eye(n)
            delta = solve_spd(J, -g)
        t = 1.0
        for _ in range(60):
            nu_new = nu + t * delta
            z_new = c_inner * (A.T @ nu_new)
            if np.max(np.abs(z_new)) < hint:
                h_new = np.array([scalar_ode.h(L, v) for v in z_new])
                with np.errstate(invalid="ignore", over="ignore"):
                    rho_new = c_outer * h_new
                    g_new = A @ rho_new - y
                    ok = np.all(np.isfinite(g_new)) and \
                        np.linalg.norm(g_new) <= (1.0 - 1e-4 * t) * gnorm
                if ok:
                    break
            t *= 0.5
        else:
            raise NumericError("q_minimizer: damped Newton failed to make progress")
        nu, z, rho, g = nu_new, z_new, rho_new, g_new
    else:
        raise NumericError(
            f"q_minimizer: no convergence after {max_iter} Newton steps "
            f"(residual {np.linalg.norm(g):.3e})")

    beta = S.T @ rho
    constraint_residual = float(np.linalg.norm(X @ beta - y))
    # Recompute the stationarity residual from scratch through h^{-1}.
    grad_q = np.array([alpha ** (2 - L) * wv ** (2 - L)
                       * scalar_ode.h_inv(L, rv / cv)
                       for wv, rv, cv in zip(w, rho, c_outer)])
    kkt_residual = float(np.max(np.abs(grad_q - S @ (X.T @ nu))))
    return QSolution(rho=rho, beta=beta, nu=nu,
                     constraint_residual=constraint_residual,
                     kkt_residual=kkt_residual)


@dataclass(frozen=True)
class TwoLayerRegressionLimit:
    v1: np.ndarray
    v2: np.ndarray
    nu: float
    fit_error: float

    def prediction_values(self):
        return self.v1, self.v2


def two_layer_regression_limit(U1, U2, s, vbar1, vbar2, alpha, y
                               ) -> TwoLayerRegressionLimit:
    """Closed-form limit of two-layer regression on a single data point.

    With M(x0) = U1 diag(s) U2^T and initialization alpha * (vbar1, vbar2),
    the flow converges to hyperbolic mixtures of the transformed initial
    coordinates, driven by a scalar nu solving g(nu) = y / alpha^2 for the
    strictly increasing g below.  Components outside the singular subspaces
    are carried through unchanged (scaled by alpha).
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    s = np.asarray(s, dtype=float)
    vbar1 = np.asarray(vbar1, dtype=float)
    vbar2 = np.asarray(vbar2, dtype=float)
    e1 = U1.T @ vbar1
    e2 = U2.T @ vbar2
    gap = e1 ** 2 - e2 ** 2
    if np.min(gap) <= 0.0:
        raise ValueError(
            "initialization condition violated: need [U1^T v1]_j^2 - "
            "[U2^T v2]_j^2 > 0 for every j (monotonicity of g)")

    def g(nu):
        return float(np.sum(s * (0.5 * (e1 ** 2 + e2 ** 2) * np.sinh(2.0 * s * nu)
                                 + e1 * e2 * np.cosh(2.0 * s * nu))))

    target = y / alpha ** 2
    nu = bracket_and_solve(g, target)
    ch = np.cosh(s * nu)
    sh = np.sinh(s * nu)
    v1 = alpha * (U1 @ (e1 * ch + e2 * sh)) + alpha * (vbar1 - U1 @ e1)
    v2 = alpha * (U2 @ (e2 * ch + e1 * sh)) + alpha * (vbar2 - U2 @ e2)
    eta1 = e1 * ch + e2 * sh
    eta2 = e2 * ch + e1 * sh
    fit = float(abs(alpha ** 2 * np.sum(s * eta1 * eta2) - y))
    return TwoLayerRegressionLimit(v1=v1, v2=v2, nu=float(nu), fit_error=fit)


@dataclass(frozen=True)
class TwoLayerMarginDirection:
    rho: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    tie: bool

    def direction(self, U1=None, U2=None):
        """Coefficient-space direction is assembled by the caller; here we
        only expose the transformed-space solution."""
        return self.rho / np.linalg.norm(self.rho)


def two_layer_margin_direction(U1, U2, s, y) -> TwoLayerMarginDirection:
    """Two-layer single-point classification limit in transformed space.

    The l1 margin problem min ||rho||_1 s.t. y s^T rho >= 1 puts all mass
    y / s_{j*} on the largest singular value; the parameter magnitudes are
    |rho|^{1/2} in both layers with signs tied through sign(y).  Ties on
    the top singular value are flagged and broken toward the lowest index.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("singular values must be nonnegative")
    smax = np.max(s) if s.size else 0.0
    if smax <= 0.0:
        raise NumericError("all singular values vanish: degenerate, inseparable")
    jstar = int(np.argmax(s))  # first maximizer
    tie = bool(np.count_nonzero(s >= smax - TOLERANCES["sv_tie_rel"] * (1 + smax)) > 1)
    rho = np.zeros_like(s)
    rho[jstar] = y / s[jstar]
    mag = np.sqrt(np.abs(rho))
    eta2 = mag.copy()
    eta1 = np.sign(y) * mag
    return TwoLayerMarginDirection(rho=rho, eta1=eta1, eta2=eta2, tie=tie)


@dataclass(frozen=True)
class SmallFilterDirection:
    direction: np.ndarray
    autocorrelation: float

    def prediction(self) -> Prediction:
        return Prediction(
            kind="direction", value=self.direction,
            theorem="small-filter-conv-direction",
            certificate={"abs_autocorrelation": abs(self.autocorrelation)},
            extras={"autocorrelation": self.autocorrelation})


def conv_small_filter_direction(x, y, k1) -> SmallFilterDirection:
    """Predicted limit direction for two-layer conv nets with tiny filters.

    k1 = 1: the direction is y*x.  k1 = 2: a filtered version of x built
    from its left/right circular shifts, with the combination sign decided
    by the autocorrelation x . (left shift of x); a vanishing
    autocorrelation means tied singular values and no unique direction.
    """
    x = np.asarray(x, dtype=float)
    if k1 == 1:
        dir_ = y * x
        auto = 0.0
    elif k1 == 2:
        x_left = np.roll(x, -1)
        x_right = np.roll(x, 1)
        auto = float(x @ x_left)
        if abs(auto) <= 1e-12 * (1.0 + x @ x):
            raise NumericError(
                "tie between singular values, direction undetermined "
                "(zero shift autocorrelation)")
        if auto > 0:
            dir_ = 2.0 * y * x + y * x_left + y * x_right
        else:
            dir_ = 2.0 * y * x - y * x_left - y * x_right
    else:
        raise ValueError("filter size must be 1 or 2")
    nrm = np.linalg.norm(dir_)
    if nrm == 0.0:
        raise NumericError("zero predicted direction")
    return SmallFilterDirection(direction=dir_ / nrm, autocorrelation=auto)


@dataclass(frozen=True)
class MaxMarginL2:
    direction: np.ndarray
    margin: float
    dual: np.ndarray
    min_margin: float

    def prediction(self) -> Prediction:
        return Prediction(
            kind="direction", value=self.direction, theorem="max-margin-l2",
            certificate={"margin_violation": max(0.0, 1.0 - self.min_margin),
                         "dual_infeasibility": max(0.0, -float(np.min(self.dual)))},
            extras={"margin": self.margin, "dual": self.dual})


def maxmargin_l2(X, y) -> MaxMarginL2:
    """Hard-margin l2 direction; the fully-connected classification limit."""
    sol = hard_margin_l2(X, y)
    z = sol.z
    direction = z / np.linalg.norm(z)
    margins = (np.asarray(X, dtype=float) * np.asarray(y, dtype=float)[:, None]) @ z
    return MaxMarginL2(direction=direction, margin=sol.margin, dual=sol.dual,
                       min_margin=float(np.min(margins)))


@dataclass(frozen=True)
class KKTReport:
    primal_violation: float
    stationarity_gap: float
    offsupport_gap: float
    complementary_slackness: float
    imag_residual: float
    dual: np.ndarray
    margins: np.ndarray

    def max_residual(self) -> float:
        return max(self.primal_violation, self.stationarity_gap,
                   self.offsupport_gap, self.complementary_slackness)


def kkt_residual_maxmargin_2overL(rho, S, X, y, L) -> KKTReport:
    """Stationarity checker for the transformed-space margin problem
    min ||rho||_{2/L} s.t. y_i x_i^T S^T rho >= 1.

    After rescaling rho to unit minimum margin, fits nonnegative dual
    multipliers by least squares against the subdifferential target
    (sign vector on the support for L = 2, the scaled |rho|^{2/L-1} phase
    condition for L > 2) and reports all residuals.  A checker only: the
    depth > 2 problem is nonconvex, so stationarity is the whole claim.
    """
    rho = np.asarray(rho, dtype=complex)
    S = np.asarray(S)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m = rho.shape[0]

    f = X @ (S.T @ rho)                 # complex margins y_i f_i
    margins = y * f.real
    imag_residual = float(np.max(np.abs(f.imag))) if f.size else 0.0
    minm = float(np.min(margins))
    if minm > 1e-12:
        rho = rho / minm
        f = f / minm
        margins = margins / minm
        primal_violation = max(0.0, 1.0 - float(np.min(margins)))
    else:
        primal_violation = 1.0 - minm

    absr = np.abs(rho)
    top = float(np.max(absr)) if m else 0.0
    if top == 0.0:
        return KKTReport(primal_violation=primal_violation, stationarity_gap=0.0,
                         offsupport_gap=0.0, complementary_slackness=0.0,
                         imag_residual=imag_residual, dual=np.zeros(X.shape[0]),
                         margins=margins)
    support = absr > TOLERANCES["support_rel"] * top
    phase = np.where(absr > 0, rho / np.where(absr > 0, absr, 1.0), 0.0)
    if L == 2:
        target = phase[support]
    else:
        target = (2.0 / L) * absr[support] ** (2.0 / L - 1.0) * phase[support]

    # Dual image: w(nu) = conj(S) X^T (nu * y); fit nu >= 0 on the support.
    # Complementary slackness enters the fit as penalty rows nu_i (m_i - 1),
    # so dual mass on slack constraints costs residual instead of hiding.
    Mmat = (S.conj() @ X.T) * y[None, :]      # m x n complex
    Msup = Mmat[support]
    slack_rows = np.diag(margins - 1.0)
    rows = np.vstack([Msup.real, Msup.imag, slack_rows])
    rhs = np.concatenate([target.real, target.imag, np.zeros(X.shape[0])])
    nu, _ = scipy.optimize.nnls(rows, rhs)
    w_full = Mmat @ nu
    stationarity_gap = float(np.max(np.abs(w_full[support] - target)))
    if L == 2 and np.any(~support):
        offsupport_gap = float(max(0.0, np.max(np.abs(w_full[~support])) - 1.0))
    else:
        offsupport_gap = 0.0
    comp_slack = float(np.max(nu * np.abs(margins - 1.0))) if nu.size else 0.0
    return KKTReport(primal_violation=primal_violation,
                     stationarity_gap=stationarity_gap,
                     offsupport_gap=offsupport_gap,
                     complementary_slackness=comp_slack,
                     imag_residual=imag_residual, dual=nu, margins=margins)


@dataclass(frozen=True)
class MatrixSensingLimit:
    M: np.ndarray
    rho: np.ndarray
    basis: np.ndarray
    eigenvalue_rows: np.ndarray
    fit_errors: np.ndarray

    def prediction(self) -> Prediction:
        return Prediction(
            kind="point", value=self.M.reshape(-1),
            theorem="commuting-matrix-sensing",
            certificate={"max_fit_error": float(np.max(self.fit_errors))},
            extras={"rho": self.rho})


def matrix_sensing_limit(sensors, y, alpha, L) -> MatrixSensingLimit:
    """Deep matrix sensing with commuting symmetric sensors.

    Jointly diagonalizes the sensors, reduces to diagonal-network
    regression on the eigenvalue rows (unit weights, identity transform),
    and reassembles M_inf = U diag(rho) U^T.  Interpolates nuclear-norm
    (small alpha) and Frobenius (large alpha) interpolation.
    """
    As = [np.asarray(A, dtype=float) for A in sensors]
    y = np.asarray(y, dtype=float)
    d = As[0].shape[0]
    for i, A in enumerate(As):
        if A.shape != (d, d):
            raise ValueError("sensors must share a common square shape")
        if np.max(np.abs(A - A.T)) > 1e-10 * (1.0 + np.max(np.abs(A))):
            raise ValueError(f"sensor {i + 1} is not symmetric")
    worst = 0.0
    for i in range(len(As)):
        for j in range(i + 1, len(As)):
            comm = As[i] @ As[j] - As[j] @ As[i]
            worst = max(worst, float(np.linalg.norm(comm)))
    if worst > 1e-10:
        raise ValueError(f"sensors do not commute (max commutator norm {worst:.3e})")

    # Eigenbasis of a fixed deterministic combination; verified afterwards.
    weights = np.cos(1.0 + np.arange(len(As), dtype=float))
    combo = sum(wgt * A for wgt, A in zip(weights, As))
    U, _ = sym_eig(combo)
    rows = []
    for i, A in enumerate(As):
        D = U.T @ A @ U
        off = D - np.diag(np.diag(D))
        if np.max(np.abs(off)) > 1e-8 * (1.0 + np.max(np.abs(D))):
            raise NumericError(
                f"sensor {i + 1} fails joint diagonalization to tolerance")
        rows.append(np.diag(D))
    Xeig = np.vstack(rows)

    if np.linalg.norm(y) <= TOLERANCES["constraint"]:
        rho = np.zeros(d)
    else:
        rho = q_minimizer(L, alpha, np.ones(d), np.eye(d), Xeig, y).rho
    M = U @ np.diag(rho) @ U.T
    fits = np.array([abs(float(np.sum(A * M)) - yi) for A, yi in zip(As, y)])
    return MatrixSensingLimit(M=M, rho=rho, basis=U, eigenvalue_rows=Xeig,
                              fit_errors=fits)


@dataclass(frozen=True)
class DirectionVerdict:
    u_infinity: np.ndarray
    s_estimate: float
    final_residuals: np.ndarray          # per mode
    checkpoints: List[dict]              # fraction -> max residual
    undefined: bool

    def residual_trend(self) -> List[float]:
        return [c["max_residual"] for c in self.checkpoints]


def singular_direction_verdict(trajectory, dataset: Dataset,
                               net: TensorNetwork) -> DirectionVerdict:
    """Check that a classification run heads toward a singular tuple of
    M(-u_inf).

    u_inf is estimated by averaging the normalized X^T r over the final 1%
    of records; the per-mode singular residuals of the normalized
    parameters are then evaluated at 25%/50%/100% of the run so the trend
    toward zero is visible, not just the endpoint.
    """
    if dataset.task != "classification":
        raise ValueError("singular-direction verdicts apply to classification only")
    if not trajectory.params:
        raise ValueError("trajectory must carry parameter snapshots")
    losses = np.asarray(trajectory.losses)
    if float(np.min(losses)) >= 1.0:
        raise ValueError("loss never dropped below 1; the direction result "
                         "does not apply")

    R = trajectory.n_records
    tail = max(1, R // 100)
    us = []
    for i in range(R - tail, R):
        g = dataset.X.T @ trajectory.residuals[i]
        nrm = np.linalg.norm(g)
        if nrm > 0.0:
            us.append(g / nrm)
    if not us:
        return DirectionVerdict(u_infinity=np.zeros(dataset.d), s_estimate=0.0,
                                final_residuals=np.array([]), checkpoints=[],
                                undefined=True)
    u = np.mean(us, axis=0)
    u = u / np.linalg.norm(u)
    A = net.builder(-u)

    def evaluate(params):
        units = []
        for v in params:
            nrm = np.linalg.norm(v)
            if nrm == 0.0:
                return None
            units.append(v / nrm)
        # Rayleigh-style estimate of the singular value, averaged over modes
        vals = []
        from .tensors import multilinear_mul
        for l in range(len(units)):
            maps = [uu if k != l else None for k, uu in enumerate(units)]
            contracted = multilinear_mul(A, maps).array
            vals.append(float(units[l] @ contracted))
        s_est = float(np.mean(vals))
        from .tensors import singular_residual
        res = singular_residual(A, units, s_est)
        return s_est, res

    checkpoints = []
    final = None
    for frac in (0.25, 0.5, 1.0):
        idx = min(R - 1, max(0, int(np.ceil(frac * R)) - 1))
        out = evaluate(trajectory.params[idx])
        if out is None:
            return DirectionVerdict(u_infinity=u, s_estimate=0.0,
                                    final_residuals=np.array([]),
                                    checkpoints=[], undefined=True)
        s_est, res = out
        checkpoints.append({"fraction": frac, "record_index": idx,
                            "max_residual": float(np.max(res))})
        if frac == 1.0:
            final = (s_est, res)
    return DirectionVerdict(u_infinity=u, s_estimate=final[0],
                            final_residuals=final[1], checkpoints=checkpoints,
                            undefined=False)
