"""Finite-order rational approximation of a worst-case spectrum and its controller.

The scalar spectrum N is approximated in the Chebyshev sense by P/Q with P, Q
symmetric trigonometric polynomials of order m (a sequence of LP feasibility
problems, bisected over the error level). P and Q are factored into causal
polynomials, L = L_P / L_Q is realized in state space, and the controller is
assembled as a finite-dimensional disturbance-feedback system

    e(t+1) = F e(t) + G w(t),   u(t) = H e(t) + J w(t).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .errors import ConvergenceError, InfeasibleError, InputError
from .grid import GridSamples, check_grid_size, unit_circle
from .lti import LqrBlocks, StateSpace, resolvent, solve_sylvester, spectral_radius, state_feedback_law

MARGINAL_TOL = 1e-10
LP_SLACK = 1e-9  # certificate slack relative to max N, covers the solver tolerances
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class SymTrigPoly:
    """c_0 + 2 sum_{k=1}^m c_k cos(k omega), i.e. sum_{|k|<=m} c_|k| z^{-k}."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.ndim != 1 or self.coeffs.size == 0:
            raise InputError("SymTrigPoly needs a nonempty 1-D coefficient vector")

    @property
    def m(self) -> int:
        return self.coeffs.size - 1

    def value(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        k = np.arange(1, self.m + 1)
        return self.coeffs[0] + 2 * np.cos(np.multiply.outer(omega, k)) @ self.coeffs[1:]

    def on_grid(self, N: int) -> np.ndarray:
        return self.value(2 * np.pi * np.arange(N) / N)

    def min_dense(self, N: int = 1024) -> float:
        return float(self.on_grid(8 * N).min())

    def is_positive(self, N: int = 1024) -> bool:
        return self.min_dense(N) >= -1e-9 * np.linalg.norm(self.coeffs)

    def trimmed(self, rtol: float = 1e-14) -> SymTrigPoly:
        c = self.coeffs
        scale = np.max(np.abs(c))
        k = c.size
        while k > 1 and abs(c[k - 1]) <= rtol * scale:
            k -= 1
        return SymTrigPoly(c[:k].copy())


def _cos_basis(omega: np.ndarray, m: int) -> np.ndarray:
    C = np.cos(np.multiply.outer(omega, np.arange(m + 1)))
    C[:, 1:] *= 2
    return C


def _real_samples(Nsamples: GridSamples) -> tuple[np.ndarray, np.ndarray]:
    """Real spectrum values and their frequencies, folded to the half grid when symmetric."""
    if Nsamples.shape != (1, 1):
        raise InputError("rational approximation is implemented for scalar spectra only")
    v = Nsamples.scalar()
    scale = float(np.max(np.abs(v)))
    if scale == 0 or np.max(np.abs(v.imag)) > 1e-8 * scale:
        raise InputError("spectrum samples must be real and not identically zero")
    v = v.real
    if v.min() <= 0:
        raise InputError(f"spectrum must be strictly positive (min {v.min():.3e})")
    n = Nsamples.N
    omega = Nsamples.omega
    mirror = v[(-np.arange(n)) % n]
    if np.max(np.abs(v - mirror)) <= 1e-12 * scale:
        half = np.arange(n // 2 + 1)
        return v[half], omega[half]
    return v, omega


def _slack_lp(vals, omega, m, eps):
    """Minimize s subject to the relaxed two-sided error rows, P >= 0, Q >= 0 and Q(1) = 1."""
    C = _cos_basis(omega, m)
    k = m + 1
    one = np.ones((C.shape[0], 1))
    zero = np.zeros_like(C)
    # positive row scaling leaves the sign of the optimal slack unchanged, and
    # makes the solver tolerance act on relative rather than absolute error
    w = (1 / (vals + eps))[:, None]
    A_ub = np.vstack(
        [
            np.hstack([w * C, -(vals + eps)[:, None] * w * C, -one]),
            np.hstack([-w * C, (vals - eps)[:, None] * w * C, -one]),
            np.hstack([-C, zero, -one]),
            np.hstack([zero, -C, -one]),
        ]
    )
    b_ub = np.zeros(A_ub.shape[0])
    A_eq = np.zeros((1, 2 * k + 1))
    A_eq[0, k : 2 * k] = _cos_basis(np.zeros(1), m)[0]
    cost = np.zeros(2 * k + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * (2 * k) + [(-1.0, None)]
    # tight dual simplex first; interior point and default tolerances as fallbacks
    attempts = [("highs-ds", _LP_OPTIONS), ("highs-ipm", _LP_OPTIONS), ("highs", {})]
    for method, options in attempts:
        res = linprog(
            cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method=method, options=options
        )
        if res.status == 0:
            return res.x[:k], res.x[k : 2 * k], float(res.x[-1])
    raise ConvergenceError(f"LP solver failed (status {res.status}): {res.message}")


def _margin_lp(vals, omega, m, eps):
    """Maximize t with P, Q >= t under hard error rows at level eps and Q(1) = 1."""
    C = _cos_basis(omega, m)
    k = m + 1
    zcol = np.zeros((C.shape[0], 1))
    one = np.ones((C.shape[0], 1))
    zero = np.zeros_like(C)
    A_ub = np.vstack(
        [
            np.hstack([C, -(vals + eps)[:, None] * C, zcol]),
            np.hstack([-C, (vals - eps)[:, None] * C, zcol]),
            np.hstack([-C, zero, one]),
            np.hstack([zero, -C, one]),
        ]
    )
    A_eq = np.zeros((1, 2 * k + 1))
    A_eq[0, k : 2 * k] = _cos_basis(np.zeros(1), m)[0]
    cost = np.zeros(2 * k + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * (2 * k) + [(None, 1.0)]
    for method, options in [("highs-ds", _LP_OPTIONS), ("highs-ipm", _LP_OPTIONS), ("highs", {})]:
        res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]), A_eq=A_eq, b_eq=[1.0],
                      bounds=bounds, method=method, options=options)
        if res.status == 0:
            return res.x[:k], res.x[k : 2 * k], float(res.x[-1])
    return None


def chebyshev_feasible(Nsamples: GridSamples, m: int, eps: float):
    """``(P, Q)`` with |P/Q - N| <= eps on the grid, P, Q >= 0 and Q(1) = 1, else None.

    Feasibility is decided by the sign of the optimal common slack: the pair is
    returned only when the slack is strictly negative, which also keeps Q
    strictly positive on the grid. The pair is then re-checked directly; if the
    solver's answer does not hold up to ``LP_SLACK`` max N, or the solver
    fails, the level counts as not certified and None is returned.
    """
    if m < 0:
        raise InputError(f"order must be nonnegative, got {m}")
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps}")
    vals, omega = _real_samples(Nsamples)
    scale = float(vals.max())
    try:
        p, q, s = _slack_lp(vals / scale, omega, m, eps / scale)
    except ConvergenceError:
        return None
    if not s < 0:
        return None
    P, Q = SymTrigPoly(p * scale), SymTrigPoly(q)
    if certify(P, Q, Nsamples) > eps * (1 + 1e-6) + LP_SLACK * scale:
        return None
    return P, Q


def _polish(P: SymTrigPoly, Q: SymTrigPoly, Nsamples: GridSamples, iters: int = 5):
    """Linearized weighted least-squares refinement of a rational fit.

    Each pass solves min sum_k ((P - N Q) / Q_prev)^2 with Q(1) = 1. Returns the
    pair with the smallest measured Chebyshev error among the passes that keep
    P and Q positive on the dense grid, or None if no pass improves on the input.
    """
    vals, omega = _real_samples(Nsamples)
    m = P.m
    C = _cos_basis(omega, m)
    best_err = certify(P, Q, Nsamples)
    best = None
    q_prev = Q.value(omega)
    # eliminate Q(1) = 1 through q_0 = 1 - 2 sum_{k>=1} q_k
    for _ in range(iters):
        w = 1 / q_prev
        Aq = -(vals * w)[:, None] * C
        A = np.hstack([w[:, None] * C, Aq[:, 1:] - 2 * Aq[:, :1]])
        rhs = -Aq[:, 0]
        col = np.linalg.norm(A, axis=0)
        col[col == 0] = 1
        x = np.linalg.lstsq(A / col, rhs, rcond=None)[0] / col
        q = np.concatenate([[1 - 2 * np.sum(x[m + 1 :])], x[m + 1 :]])
        cand = SymTrigPoly(x[: m + 1]), SymTrigPoly(q)
        q_prev = cand[1].value(omega)
        if q_prev.min() <= 0 or cand[0].min_dense(Nsamples.N) <= 0 or cand[1].min_dense(Nsamples.N) <= 0:
            break
        err = certify(*cand, Nsamples)
        if err < best_err:
            best, best_err = cand, err
    return best


def certify(P: SymTrigPoly, Q: SymTrigPoly, Nsamples: GridSamples) -> float:
    """max_k |P/Q - N| on the grid, computed directly."""
    v = Nsamples.scalar().real
    qv = Q.on_grid(Nsamples.N)
    if qv.min() <= 0:
        return math.inf
    return float(np.max(np.abs(P.on_grid(Nsamples.N) / qv - v)))


@dataclass
class RationalFit:
    P: SymTrigPoly
    Q: SymTrigPoly
    eps_star: float
    eps_lower: float
    probes: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return max(self.P.m, self.Q.m)


def fit_rational(
    Nsamples: GridSamples,
    m: int,
    eps_tol: float = 1e-6,
    max_probes: int = 200,
    margin_relax: float = 1e-3,
) -> RationalFit:
    """Smallest grid Chebyshev error of an order-m rational fit, by bisection on eps.

    ``eps_star`` is the measured error max_k |P/Q - N| of the returned pair.
    Bisection keeps the smallest level with a certified pair (see
    :func:`chebyshev_feasible`); ``eps_lower`` is the largest level probed
    without one, and the bracket has relative width at most ``eps_tol`` (or
    the level is below 1e-12 max N). The LP answer is then refined by
    :func:`_polish`, which is kept only when it measures better; this matters
    for (near) exactly rational spectra, where the LP tolerances rather than
    the model limit the accuracy.

    Where N dips below the error level only P >= 0 binds, and the optimal P
    tends to touch zero, leaving its factor with roots on the circle. If P or Q
    comes within 1e-6 (relative) of zero, a second LP maximizes their common
    lower bound with the error level relaxed by ``margin_relax``.
    """
    if not 0 < eps_tol < 1:
        raise InputError("eps_tol must lie in (0, 1)")
    vals, _ = _real_samples(Nsamples)
    top = float(vals.max())
    lo, hi = 0.0, top
    best = chebyshev_feasible(Nsamples, m, hi)
    if best is None:
        raise InfeasibleError(f"order-{m} fit infeasible even at eps = max(N) = {top:.6g}")
    probes = [(hi, True)]
    floor = 1e-12 * top
    while hi - lo > eps_tol * hi and hi > floor and len(probes) < max_probes:
        mid = 0.5 * (lo + hi)
        pair = chebyshev_feasible(Nsamples, m, mid)
        probes.append((mid, pair is not None))
        if pair is None:
            lo = mid
        else:
            hi, best = mid, pair
    P, Q = best
    polished = _polish(P, Q, Nsamples)
    if polished is not None:
        P, Q = polished
    if min(P.min_dense(Nsamples.N) / top, Q.min_dense(Nsamples.N)) < 1e-6 and margin_relax > 0:
        vals_h, omega_h = _real_samples(Nsamples)
        out = _margin_lp(vals_h / top, omega_h, m, hi * (1 + margin_relax) / top)
        if out is not None and out[2] > 0:
            hi = hi * (1 + margin_relax)
            P, Q = SymTrigPoly(out[0] * top), SymTrigPoly(out[1])
    err = certify(P, Q, Nsamples)
    if err > hi * (1 + 1e-6) + LP_SLACK * top:
        raise ConvergenceError(f"LP certificate failed: measured error {err:.3e} exceeds level {hi:.3e}")
    return RationalFit(P, Q, err, lo, probes)


def _newton_polish(coeffs: np.ndarray, roots: np.ndarray, steps: int = 3) -> np.ndarray:
    """A few Newton steps per root; companion eigenvalues lose digits when the
    outer coefficients are tiny."""
    d = np.polyder(coeffs)
    out = roots.astype(complex)
    for i, r in enumerate(out):
        f = np.polyval(coeffs, r)
        for _ in range(steps):
            df = np.polyval(d, r)
            if df == 0:
                break
            cand = r - f / df
            fc = np.polyval(coeffs, cand)
            if not abs(fc) < abs(f):
                break
            r, f = cand, fc
        out[i] = r
    return out


def poly_canonical_factor(R: SymTrigPoly) -> np.ndarray:
    """Causal l_0..l_m with |sum_k l_k z^{-k}|^2 = R on the circle, roots inside, l_0 > 0."""
    R = R.trimmed()
    c = R.coeffs
    m = R.m
    if R.value(0.0) <= 0 or not R.is_positive():
        raise InputError("canonical factorization needs a positive trigonometric polynomial")
    if m == 0:
        return np.array([math.sqrt(c[0])])
    # z^m R(z): coefficient of z^{m+k} is c_|k|
    full = np.concatenate([c[::-1], c[1:]])
    roots = np.roots(full)
    mod = np.abs(roots)
    if np.any(np.abs(mod - 1) < MARGINAL_TOL):
        raise InputError("polynomial spectrum has a root on the unit circle (marginal spectrum)")
    inside = roots[mod < 1]
    if inside.size != m:
        raise InputError(f"root pairing failed: {inside.size} roots inside the disc, expected {m}")
    inside = _newton_polish(full, inside)
    mono = np.real_if_close(np.poly(inside), tol=1e6).real
    l0 = math.sqrt(R.value(0.0)) / abs(np.sum(mono))
    return l0 * mono


def poly_response(coeffs, z) -> np.ndarray:
    """sum_k coeffs[k] z^{-k}."""
    zinv = 1 / np.asarray(z, dtype=complex)
    return np.polyval(np.atleast_1d(np.asarray(coeffs))[::-1], zinv)


@dataclass
class RealizedFactor:
    """L(z) = (1 + Ctil (zI - Atil)^{-1} Btil) Dtil^{1/2}."""

    Atil: np.ndarray
    Btil: np.ndarray
    Ctil: np.ndarray
    Dtil: float

    @property
    def m(self) -> int:
        return self.Atil.shape[0]

    def response(self, N: int) -> GridSamples:
        z = unit_circle(N)
        base = np.ones(N, dtype=complex)
        if self.m:
            base = base + (self.Ctil @ resolvent(self.Atil, z, self.Btil))[:, 0, 0]
        return GridSamples(base * math.sqrt(self.Dtil), "L")


def realize_L(numer, denom) -> RealizedFactor:
    """Controllable-canonical realization of L(z)/L(inf) - 1 with L = numer/denom in z^{-1}."""
    a = np.trim_zeros(np.atleast_1d(np.asarray(numer, dtype=float)), "b")
    b = np.trim_zeros(np.atleast_1d(np.asarray(denom, dtype=float)), "b")
    if a.size == 0 or a[0] == 0:
        raise InputError("numerator has l_0 = 0: the factor is strictly delayed")
    if b.size == 0 or b[0] == 0:
        raise InputError("denominator has zero leading coefficient")
    gain = a[0] / b[0]
    if gain <= 0:
        raise InputError("L(inf) must be positive")
    nd = max(a.size, b.size) - 1
    ah = np.zeros(nd + 1)
    bh = np.zeros(nd + 1)
    ah[: a.size] = a / a[0]
    bh[: b.size] = b / b[0]
    A = np.zeros((nd, nd))
    B = np.zeros((nd, 1))
    C = (ah[1:] - bh[1:])[None, :]
    if nd:
        A[0, :] = -bh[1:]
        A[1:, :-1] = np.eye(nd - 1)
        B[0, 0] = 1.0
        if spectral_radius(A) >= 1:
            raise InputError("denominator factor is not minimum phase")
        if spectral_radius(A - B @ C) >= 1:
            raise InputError("numerator factor is not minimum phase")
    return RealizedFactor(A, B, C, gain**2)


@dataclass
class ControllerSS:
    """Disturbance-feedback controller e+ = F e + G w, u = H e + J w."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    m: int = 0
    eps_star: float = 0.0
    label: str = ""

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        self.F = np.atleast_2d(F) if F.size else np.zeros((0, 0))
        k = self.F.shape[0]
        self.J = np.atleast_2d(np.asarray(self.J, dtype=float))
        d, p = self.J.shape
        self.G = np.asarray(self.G, dtype=float).reshape(k, p)
        self.H = np.asarray(self.H, dtype=float).reshape(d, k)

    @property
    def order(self) -> int:
        return self.F.shape[0]

    def response(self, N: int) -> GridSamples:
        check_grid_size(N)
        z = unit_circle(N)
        out = np.broadcast_to(self.J, (N,) + self.J.shape).astype(complex)
        if self.order:
            out = out + self.H @ resolvent(self.F, z, self.G)
        return GridSamples(out, self.label or "K")

    def spectral_radius(self) -> float:
        return spectral_radius(self.F) if self.order else 0.0

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "Ftil": self.F.tolist(),
            "Gtil": self.G.tolist(),
            "Htil": self.H.tolist(),
            "Jtil": self.J.tolist(),
            "eps_star": self.eps_star,
            "label": self.label,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, data: dict) -> ControllerSS:
        try:
            J = np.atleast_2d(np.asarray(data["Jtil"], dtype=float))
            d, p = J.shape
            F = np.asarray(data["Ftil"], dtype=float)
            k = F.shape[0] if F.size else 0
            return cls(
                F.reshape(k, k),
                np.asarray(data["Gtil"], dtype=float).reshape(k, p),
                np.asarray(data["Htil"], dtype=float).reshape(d, k),
                J,
                m=int(data.get("m", 0)),
                eps_star=float(data.get("eps_star", 0.0)),
                label=str(data.get("label", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed controller description: {exc}") from None

    @classmethod
    def load(cls, path) -> ControllerSS:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"controller file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)


def sylvester_U(blocks: LqrBlocks, ss: StateSpace, Lr: RealizedFactor) -> np.ndarray:
    """U = A_K^T U Atil + A_K^T P B_w Ctil."""
    AKt = blocks.A_K.T
    return solve_sylvester(AKt, Lr.Atil, AKt @ blocks.P @ ss.B_w @ Lr.Ctil)


def realize_controller(blocks: LqrBlocks, ss: StateSpace, Lr: RealizedFactor, eps_star: float = 0.0) -> ControllerSS:
    """Finite-dimensional realization of K = K_circ - Delta^{-1} S_L L^{-1} for rational L.

    Internal state (e1, e2): e1 runs the inverse-factor dynamics, e2 the LQR
    closed loop (it tracks -x along trajectories). Weights must be normalized.
    """
    if not ss.is_normalized:
        raise InputError("realize_controller expects normalized weights (Q = R = I)")
    m, n = Lr.m, ss.n
    P, Rbar2 = blocks.P, blocks.Rbar2
    Bu, Bw = ss.B_u, ss.B_w
    if m:
        U = sylvester_U(blocks, ss, Lr)
        Ak = Lr.Atil - Lr.Btil @ Lr.Ctil
        V = Rbar2 @ Bu.T @ U
        feed = P @ Bw + U @ Lr.Btil
    else:
        U = np.zeros((n, 0))
        Ak = np.zeros((0, 0))
        V = np.zeros((ss.d, 0))
        feed = P @ Bw
    F = np.block([[Ak, np.zeros((m, n))], [Bu @ V, blocks.A_K]])
    G = np.vstack([Ak @ Lr.Btil if m else np.zeros((0, ss.p)), -Bw + Bu @ Rbar2 @ Bu.T @ feed])
    H = np.hstack([-V, blocks.K_lqr])
    J = -Rbar2 @ Bu.T @ feed
    ctrl = ControllerSS(F, G, H, J, m=m, eps_star=eps_star, label=f"RA({m})")
    rho = ctrl.spectral_radius()
    if rho >= 1:
        raise InfeasibleError(f"realized controller is unstable (spectral radius {rho:.6f})")
    return ctrl


def symbolic_controller(blocks: LqrBlocks, ss: StateSpace, Lr: RealizedFactor, N: int) -> GridSamples:
    """Grid samples of the transfer-function assembly the realization must reproduce.

    K = Delta^{-1} {Delta K_circ}_+  -  Delta^{-1} z Rbar B_u^T U (zI - Atil)^{-1} Btil Ltil^{-1},
    with Ltil = 1 + Ctil (zI - Atil)^{-1} Btil.
    """
    z = unit_circle(N)
    A, Bu, Bw = ss.A, ss.B_u, ss.B_w
    P, Rbar = blocks.P, blocks.Rbar
    DeltaInv = (np.eye(ss.d) - blocks.K_lqr @ resolvent(blocks.A_K, z, Bu)) @ Rbar
    Gz = resolvent(A, z, Bw)
    plus = -Rbar @ Bu.T @ P @ A @ Gz - Rbar @ Bu.T @ P @ Bw
    K = DeltaInv @ plus
    if Lr.m:
        U = sylvester_U(blocks, ss, Lr)
        res_b = resolvent(Lr.Atil, z, Lr.Btil)
        Ltil = 1 + Lr.Ctil @ res_b
        corr = -z[:, None, None] * (Rbar @ Bu.T @ U @ res_b)
        K = K + DeltaInv @ corr / Ltil
    return GridSamples(K, "K_sym")


def freq_response_error(ctrl: ControllerSS, Ktarget: GridSamples) -> float:
    """max_k ||H(z_k I - F)^{-1} G + J - K_target(z_k)||_2."""
    resp = ctrl.response(Ktarget.N)
    if resp.shape != Ktarget.shape:
        raise InputError(f"shape mismatch: controller {resp.shape}, target {Ktarget.shape}")
    return float(np.max(np.linalg.norm(resp.values - Ktarget.values, ord=2, axis=(1, 2))))


def closed_loop_radius(ss: StateSpace, ctrl: ControllerSS) -> float:
    """Spectral radius of the plant + disturbance-feedback controller interconnection."""
    top = np.hstack([ss.A, ss.B_u @ ctrl.H])
    bottom = np.hstack([np.zeros((ctrl.order, ss.n)), ctrl.F])
    return spectral_radius(np.vstack([top, bottom]))


def state_feedback_controller(ss: StateSpace, P: np.ndarray, label: str = "") -> ControllerSS:
    """Controller u = -Kx (A x + B_w w), Kx = (R + B_u^T P B_u)^{-1} B_u^T P, run on a state copy."""
    H, J = state_feedback_law(ss, P)
    F = ss.A + ss.B_u @ H
    G = ss.B_w + ss.B_u @ J
    return ControllerSS(F, G, H, J, m=0, label=label)


@dataclass
class RationalDesign:
    fit: RationalFit
    L_P: np.ndarray
    L_Q: np.ndarray
    factor: RealizedFactor
    controller: ControllerSS


def rational_controller(
    Nsamples: GridSamples, m: int, blocks: LqrBlocks, ss: StateSpace, eps_tol: float = 1e-6
) -> RationalDesign:
    """Fit P/Q to the spectrum, factor both, realize L = L_P / L_Q and the controller."""
    fit = fit_rational(Nsamples, m, eps_tol)
    L_P = poly_canonical_factor(fit.P)
    L_Q = poly_canonical_factor(fit.Q)
    Lr = realize_L(L_P, L_Q)
    ctrl = realize_controller(blocks, ss, Lr, eps_star=fit.eps_star)
    ctrl.m = m
    return RationalDesign(fit, L_P, L_Q, Lr, ctrl)
