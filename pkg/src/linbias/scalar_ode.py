"""Scalar ODE machinery for depth-L dynamics.

The system is p' = p^{L-2} q, q' = p^{L-1} with p(0) = 1, q(0) = 0 on its
maximal interval (-c, c).  It conserves p^2 - q^2 = 1, which reduces it to
the single separable equation q' = (1 + q^2)^{(L-1)/2}; that identity is
used here for the inverse maps while the rk4 integrator keeps the original
two-variable form for cross-validation.

Derived quantities: h_L(t) = p^{L-1} q (odd, strictly increasing, onto R),
its inverse, H_L(t) = int_0^t h_L^{-1}, and the norm-like function Q that
interpolates weighted l1 (small init scale) and weighted l2 (large scale).
"""

from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .solvers import NumericError

_OVERFLOW = 1e150
# largest q used when locating the practical end of the time domain
_Q_DOMAIN = 1e8


class DomainError(NumericError):
    """Time argument beyond the maximal interval of the depth-L system."""

    def __init__(self, msg, largest_safe_t):
        super().__init__(msg)
        self.largest_safe_t = largest_safe_t


def _check_depth(L):
    if int(L) != L or L < 2:
        raise ValueError("depth L must be an integer >= 2")
    return int(L)


def _time_of_q(L, q):
    """t as a function of q >= 0: int_0^q (1+u^2)^{-(L-1)/2} du."""
    if L == 2:
        return float(np.arcsinh(q))
    if L == 3:
        return float(np.arctan(q))
    if L == 4:
        return float(q / np.hypot(1.0, q))
    val, _ = scipy.integrate.quad(
        lambda u: (1.0 + u * u) ** (-(L - 1) / 2.0), 0.0, q,
        epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(val)


def blowup_time(L):
    """Length of the maximal interval: c = int_0^inf (1+u^2)^{-(L-1)/2} du.

    Infinite for L = 2; for L >= 3 equals int_0^{pi/2} cos^{L-3}.  This is
    the numerically observed horizon of the system, reported as such.
    """
    L = _check_depth(L)
    if L == 2:
        return np.inf
    if L == 3:
        return float(np.pi / 2.0)
    if L == 4:
        return 1.0
    val, _ = scipy.integrate.quad(lambda th: np.cos(th) ** (L - 3),
                                  0.0, np.pi / 2.0, epsabs=1e-13, epsrel=1e-13)
    return float(val)


_DOMAIN_HINTS = {}


def domain_hint(L):
    """Largest |t| accepted before the state overflows double precision."""
    L = _check_depth(L)
    if L not in _DOMAIN_HINTS:
        if L == 2:
            _DOMAIN_HINTS[L] = float(np.arcsinh(_OVERFLOW))
        else:
            _DOMAIN_HINTS[L] = _time_of_q(L, _Q_DOMAIN)
    return _DOMAIN_HINTS[L]


def _q_of_time(L, t):
    """Invert _time_of_q for t >= 0 (monotone bisection in q)."""
    if L == 2:
        return float(np.sinh(t))
    if L == 3:
        return float(np.tan(t))
    if L == 4:
        return float(t / np.sqrt(1.0 - t * t))
    if t == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(2000):
        if _time_of_q(L, hi) >= t:
            break
        lo, hi = hi, hi * 2.0
        if hi > _OVERFLOW:
            raise DomainError("time beyond the maximal interval", domain_hint(L))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _time_of_q(L, mid) < t:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return 0.5 * (lo + hi)


def integrate_pq(L, t):
    """(p(t), q(t)) by fixed-step rk4 with successive halving.

    The step count doubles until two consecutive answers agree to 1e-10
    relative.  L = 2 short-circuits to the closed form (cosh, sinh).
    Raises DomainError with the largest safe t when |t| is past the
    finite-time blowup (L >= 3).
    """
    L = _check_depth(L)
    t = float(t)
    if L == 2:
        return float(np.cosh(t)), float(np.sinh(t))
    hint = domain_hint(L)
    if abs(t) >= hint:
        raise DomainError(
            f"t={t} is outside the integrable domain (|t| < {hint:.6g})", hint)
    if t == 0.0:
        return 1.0, 0.0

    def rhs(state):
        p, q = state
        return np.array([p ** (L - 2) * q, p ** (L - 1)])

    def run(n_steps):
        dt = t / n_steps
        state = np.array([1.0, 0.0])
        for _ in range(n_steps):
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * dt * k1)
            k3 = rhs(state + 0.5 * dt * k2)
            k4 = rhs(state + dt * k3)
            state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > _OVERFLOW:
                raise DomainError("state overflow during integration", hint)
        return state

    prev = run(64)
    n = 128
    while n <= 2 ** 22:
        cur = run(n)
        if np.max(np.abs(cur - prev)) <= 1e-10 * (1.0 + np.max(np.abs(cur))):
            return float(cur[0]), float(cur[1])
        prev = cur
        n *= 2
    raise NumericError("integrate_pq did not reach successive-halving agreement")


def h(L, t):
    """h_L(t) = p(t)^{L-1} q(t); odd, strictly increasing, h(0) = 0."""
    L = _check_depth(L)
    t = float(t)
    if L == 2:
        with np.errstate(over="ignore"):
            return float(np.sinh(2.0 * t) / 2.0)
    q = _q_of_time(L, abs(t))
    val = (1.0 + q * q) ** ((L - 1) / 2.0) * q
    return float(np.copysign(val, t)) if t != 0.0 else 0.0


def h_prime(L, t):
    """Derivative h_L'(t) = (L-1) p^{2L-4} q^2 + p^{2L-2}, always > 0."""
    L = _check_depth(L)
    t = float(t)
    if L == 2:
        return float(np.cosh(2.0 * t))
    q = _q_of_time(L, abs(t))
    p2 = 1.0 + q * q
    return float((L - 1) * p2 ** (L - 2) * q * q + p2 ** (L - 1))


def _q_of_h(L, tau):
    """Solve (1+q^2)^{(L-1)/2} q = tau for q >= 0 (tau >= 0)."""
    if tau == 0.0:
        return 0.0
    if L == 2:
        # q sqrt(1+q^2) = tau  =>  q = sinh(arcsinh(2 tau)/2)
        return float(np.sinh(0.5 * np.arcsinh(2.0 * tau)))
    lo, hi = 0.0, max(1.0, tau)
    while (1.0 + hi * hi) ** ((L - 1) / 2.0) * hi < tau:
        hi *= 2.0
        if hi > _OVERFLOW:
            raise NumericError("q bracket overflow in _q_of_h")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (1.0 + mid * mid) ** ((L - 1) / 2.0) * mid < tau:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * (1.0 + hi):
            break
    # Newton polish
    q = 0.5 * (lo + hi)
    for _ in range(5):
        p2 = 1.0 + q * q
        f = p2 ** ((L - 1) / 2.0) * q - tau
        df = p2 ** ((L - 3) / 2.0) * ((L - 1) * q * q + p2)
        q = q - f / df
        if q < 0.0:
            q = 0.5 * (lo + hi)
            break
    return float(q)


def h_inv(L, tau):
    """Inverse of h_L, defined on all of R.

    Works in q-space: first solves (1+q^2)^{(L-1)/2} q = |tau| for q, then
    maps q back to time.  Odd by construction.
    """
    L = _check_depth(L)
    tau = float(tau)
    if L == 2:
        return float(np.arcsinh(2.0 * tau) / 2.0)
    if tau == 0.0:
        return 0.0
    q = _q_of_h(L, abs(tau))
    return float(np.copysign(_time_of_q(L, q), tau))


def H(L, t):
    """H_L(t) = int_0^t h_L^{-1}(tau) d tau; even, nonnegative, convex.

    Uses the exact change of variables tau = h_L(s):
    H(t) = h_L^{-1}(t) * t - q^2/2, with q the state value at h^{-1}(t).
    (Integration by parts plus int h ds = int q dq.)
    """
    L = _check_depth(L)
    t = abs(float(t))
    if t == 0.0:
        return 0.0
    q = _q_of_h(L, t)
    T = _time_of_q(L, q) if L != 2 else float(np.arcsinh(q))
    return float(T * t - 0.5 * q * q)


def q_value(L, alpha, eta_bar, rho):
    """The norm-like function alpha^2 sum_j eta_j^2 H_L(rho_j/(alpha^L |eta_j|^L))."""
    L = _check_depth(L)
    eta = np.asarray(eta_bar, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(eta == 0.0):
        raise ValueError("q_value requires all initialization weights nonzero")
    total = 0.0
    for e, r in zip(eta, rho):
        total += e * e * H(L, r / (alpha ** L * abs(e) ** L))
    return float(alpha ** 2 * total)


def q_limits(L, alpha, eta_bar, rho):
    """Both limiting functionals of Q for diagnostics.

    Small-scale limit: weighted l1, sum |rho_j| / |eta_j|^{L-2}.
    Large-scale limit: weighted l2, sum rho_j^2 / eta_j^{2L-2}.
    """
    L = _check_depth(L)
    eta = np.asarray(eta_bar, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(eta == 0.0):
        raise ValueError("q_limits requires all initialization weights nonzero")
    w_l1 = float(np.sum(np.abs(rho) / np.abs(eta) ** (L - 2)))
    w_l2 = float(np.sum(rho ** 2 / np.abs(eta) ** (2 * L - 2)))
    return w_l1, w_l2


@dataclass(frozen=True)
class HLTable:
    """Sampled (t, p, q, h) grid for one depth, symmetric around 0."""
    L: int
    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    h: np.ndarray
    domain_hint: float

    @classmethod
    def build(cls, L, n_points=201, t_max=None):
        L = _check_depth(L)
        hint = domain_hint(L)
        if t_max is None:
            t_max = min(5.0, 0.9 * hint)
        ts = np.linspace(-t_max, t_max, n_points)
        qs = np.array([np.copysign(_q_of_time(L, abs(t)), t) if t != 0.0 else 0.0
                       for t in ts])
        ps = np.sqrt(1.0 + qs ** 2)
        hs = ps ** (L - 1) * qs
        return cls(L=L, t=ts, p=ps, q=qs, h=hs, domain_hint=hint)
