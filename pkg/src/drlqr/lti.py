"""Plant model, Riccati machinery and closed-form frequency-domain blocks.

Everything frequency-domain lives on the uniform grid of
:func:`drlqr.grid.unit_circle`. Transfer functions use the delay convention
``z^{-1}`` = one step back in time, so ``F(z) = (zI - A)^{-1} B_u`` is strictly
causal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, InfeasibleError, InputError
from .grid import GridSamples, hermitian, unit_circle

SYM_TOL = 1e-12
CIRCLE_TOL = 1e-9


def _as_matrix(name, value) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{name}: expected a real nested array") from None
    if arr.ndim != 2:
        raise InputError(f"{name}: expected a 2-D array, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: non-finite entries")
    return arr


def _check_symmetric(name, M):
    if M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got {M.shape}")
    scale = max(np.linalg.norm(M), 1.0)
    if np.linalg.norm(M - M.T) > SYM_TOL * scale:
        raise InputError(f"{name} is not symmetric")


@dataclass
class StateSpace:
    """x_{t+1} = A x_t + B_u u_t + B_w w_t with stage cost x'Qx + u'Ru."""

    A: np.ndarray
    B_u: np.ndarray
    B_w: np.ndarray
    Q: np.ndarray | None = None
    R: np.ndarray | None = None

    def __post_init__(self):
        self.A = _as_matrix("A", self.A)
        self.B_u = _as_matrix("B_u", self.B_u)
        self.B_w = _as_matrix("B_w", self.B_w)
        n = self.A.shape[0]
        self.Q = np.eye(n) if self.Q is None else _as_matrix("Q", self.Q)
        self.R = np.eye(self.B_u.shape[1]) if self.R is None else _as_matrix("R", self.R)
        if self.A.shape != (n, n):
            raise InputError(f"A must be square, got {self.A.shape}")
        if self.B_u.shape[0] != n or self.B_w.shape[0] != n:
            raise InputError("B_u and B_w must have as many rows as A")
        if self.Q.shape != (n, n):
            raise InputError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.R.shape != (self.d, self.d):
            raise InputError(f"R must be {self.d}x{self.d}, got {self.R.shape}")
        _check_symmetric("Q", self.Q)
        _check_symmetric("R", self.R)
        if np.linalg.eigvalsh(self.Q).min() < -1e-12 * max(np.linalg.norm(self.Q), 1.0):
            raise InputError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise InputError("R must be positive definite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B_u.shape[1]

    @property
    def p(self) -> int:
        return self.B_w.shape[1]

    @property
    def is_normalized(self) -> bool:
        return np.allclose(self.Q, np.eye(self.n), atol=1e-14) and np.allclose(
            self.R, np.eye(self.d), atol=1e-14
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n, "d": self.d, "p": self.p,
            "A": self.A.tolist(), "B_u": self.B_u.tolist(), "B_w": self.B_w.tolist(),
            "Q": self.Q.tolist(), "R": self.R.tolist(),
        }


def load_system(path) -> StateSpace:
    """Read and validate a system JSON file.

    The file holds ``n, d, p`` and row-major ``A, B_u, B_w, Q, R``. The
    dimension fields are optional but must agree with the arrays when given.
    After shape checks the LQR Riccati equation is solved once so that a
    non-stabilizable ``(A, B_u)`` is reported at load time.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top level must be an object")
    missing = [k for k in ("A", "B_u", "B_w") if k not in raw]
    if missing:
        raise InputError(f"{path}: missing fields {missing}")
    ss = StateSpace(raw["A"], raw["B_u"], raw["B_w"], raw.get("Q"), raw.get("R"))
    for key, actual in (("n", ss.n), ("d", ss.d), ("p", ss.p)):
        if key in raw and int(raw[key]) != actual:
            raise InputError(f"{path}: {key}={raw[key]} but arrays imply {actual}")
    check_stabilizable(ss)
    return ss


def save_system(ss: StateSpace, path) -> None:
    Path(path).write_text(json.dumps(ss.to_dict(), indent=2))


def _pbh_stabilizable(A, B) -> bool:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1 - 1e-12:
            M = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.linalg.norm(M))) < n:
                return False
    return True


def check_stabilizable(ss: StateSpace) -> None:
    """Raise InputError unless (A, B_u) and (A, B_w) are stabilizable."""
    if not _pbh_stabilizable(ss.A, ss.B_w):
        raise InputError("(A, B_w) is not stabilizable")
    try:
        P = solve_dare(ss)
    except ConvergenceError as exc:
        raise InputError(f"(A, B_u) is not stabilizable: {exc}") from None
    K = np.linalg.solve(ss.R + ss.B_u.T @ P @ ss.B_u, ss.B_u.T @ P @ ss.A)
    if spectral_radius(ss.A - ss.B_u @ K) >= 1:
        raise InputError("(A, B_u) is not stabilizable: LQR closed loop is unstable")


def spectral_radius(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((M + M.T) / 2)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def normalize_weights(ss: StateSpace) -> StateSpace:
    """Rescale x <- Q^{1/2} x and u <- R^{1/2} u so that Q = R = I."""
    if ss.is_normalized:
        return ss
    wq = np.linalg.eigvalsh(ss.Q)
    if wq.min() <= 1e-12 * max(wq.max(), 1e-300):
        raise InputError("Q is singular; weight normalization needs an invertible state rescaling")
    Qh = psd_sqrt(ss.Q)
    Rh = psd_sqrt(ss.R)
    Qh_inv = np.linalg.inv(Qh)
    return StateSpace(
        Qh @ ss.A @ Qh_inv,
        Qh @ ss.B_u @ np.linalg.inv(Rh),
        Qh @ ss.B_w,
        np.eye(ss.n),
        np.eye(ss.d),
    )


def solve_dare(ss: StateSpace, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Stabilizing DARE solution by iterating the Riccati recursion from P = Q."""
    A, B, Q, R = ss.A, ss.B_u, ss.Q, ss.R
    P = Q.copy()
    for it in range(max_iter):
        BtP = B.T @ P
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = (P_next + P_next.T) / 2
        scale = np.linalg.norm(P_next)
        if not np.isfinite(scale) or scale > 1e15:
            raise ConvergenceError(f"Riccati recursion diverged after {it + 1} iterations")
        if np.linalg.norm(P_next - P) <= tol * max(scale, 1e-300):
            return P_next
        P = P_next
    raise ConvergenceError(
        f"Riccati recursion did not converge in {max_iter} iterations "
        f"(last change {np.linalg.norm(P_next - P):.3e})"
    )


def dare_residual(ss: StateSpace, P: np.ndarray) -> float:
    A, B = ss.A, ss.B_u
    rhs = ss.Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(ss.R + B.T @ P @ B, B.T @ P @ A)
    return float(np.linalg.norm(P - rhs))


@dataclass
class LqrBlocks:
    P: np.ndarray
    K_lqr: np.ndarray
    A_K: np.ndarray
    Rbar: np.ndarray
    Abar: np.ndarray
    Dbar: np.ndarray
    Cbar: np.ndarray

    @property
    def Rbar2(self) -> np.ndarray:
        """Rbar^* Rbar = (R + B_u' P B_u)^{-1}."""
        return self.Rbar.T @ self.Rbar


def lqr_blocks(ss: StateSpace) -> LqrBlocks:
    P = solve_dare(ss)
    S = ss.R + ss.B_u.T @ P @ ss.B_u
    K = np.linalg.solve(S, ss.B_u.T @ P @ ss.A)
    A_K = ss.A - ss.B_u @ K
    if spectral_radius(A_K) >= 1:
        raise ConvergenceError(f"DARE solution is not stabilizing (rho={spectral_radius(A_K):.6f})")
    w, V = np.linalg.eigh((S + S.T) / 2)
    Rbar = (V / np.sqrt(w)) @ V.T
    return LqrBlocks(
        P=P,
        K_lqr=K,
        A_K=A_K,
        Rbar=Rbar,
        Abar=A_K.T,
        Dbar=A_K.T @ P @ ss.B_w,
        Cbar=-Rbar @ ss.B_u.T,
    )


def resolvent(A: np.ndarray, z: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stack of (z_k I - A)^{-1} B over the points z."""
    n = A.shape[0]
    if n == 0:
        return np.zeros((len(z), 0, B.shape[1]), dtype=complex)
    eig = np.linalg.eigvals(A)
    if eig.size and np.min(np.abs(z[:, None] - eig[None, :])) < 1e-12:
        raise InputError("grid point coincides with an eigenvalue of A")
    M = z[:, None, None] * np.eye(n) - A
    return np.linalg.solve(M, np.broadcast_to(B, (len(z),) + B.shape).astype(complex))


def _reject_circle_eigs(A):
    eig = np.linalg.eigvals(A)
    if eig.size and np.min(np.abs(np.abs(eig) - 1)) < CIRCLE_TOL:
        raise InputError("A has an eigenvalue on the unit circle; frequency samples are undefined")


def plant_freq(ss: StateSpace, N: int) -> tuple[GridSamples, GridSamples]:
    """Samples of F(z) = (zI-A)^{-1} B_u and G(z) = (zI-A)^{-1} B_w."""
    _reject_circle_eigs(ss.A)
    z = unit_circle(N)
    return (
        GridSamples(resolvent(ss.A, z, ss.B_u), "F"),
        GridSamples(resolvent(ss.A, z, ss.B_w), "G"),
    )


def closed_loop_quadratic(K: GridSamples, F: GridSamples, G: GridSamples) -> GridSamples:
    """T_K^* T_K = (FK + G)^*(FK + G) + K^*K at every sample."""
    if not (K.N == F.N == G.N):
        raise InputError(f"grid mismatch: K has {K.N}, F has {F.N}, G has {G.N} samples")
    X = F.values @ K.values + G.values
    Kv = K.values
    out = hermitian(X) @ X + hermitian(Kv) @ Kv
    return GridSamples((out + hermitian(out)) / 2, "TKquad")


@dataclass
class NoncausalBlocks:
    F: GridSamples
    G: GridSamples
    Kcirc: GridSamples
    DeltaInv: GridSamples
    DKplus: GridSamples
    DKminus: GridSamples
    TKcircQuad: GridSamples

    @property
    def N(self) -> int:
        return self.F.N


def noncausal_blocks(blocks: LqrBlocks, ss: StateSpace, N: int) -> NoncausalBlocks:
    if not ss.is_normalized:
        raise InputError("noncausal_blocks expects a weight-normalized system (Q = R = I)")
    F, G = plant_freq(ss, N)
    z = unit_circle(N)
    Fv, Gv = F.values, G.values
    Fh = hermitian(Fv)
    IFF = np.eye(ss.d) + Fh @ Fv
    if np.max(np.linalg.cond(IFF)) > 1e14:
        raise InputError("I + F^*F is too ill-conditioned on the grid")
    Kcirc = -np.linalg.solve(IFF, Fh @ Gv)

    Rbar, Bu, P = blocks.Rbar, ss.B_u, blocks.P
    DeltaInv = (np.eye(ss.d) - blocks.K_lqr @ resolvent(blocks.A_K, z, Bu)) @ Rbar
    DKplus = -Rbar @ Bu.T @ P @ ss.A @ Gv - Rbar @ Bu.T @ P @ ss.B_w
    DKminus = blocks.Cbar @ resolvent(blocks.Abar, 1 / z, blocks.Dbar)

    Kc = GridSamples(Kcirc, "Kcirc")
    return NoncausalBlocks(
        F=F,
        G=G,
        Kcirc=Kc,
        DeltaInv=GridSamples(DeltaInv, "DeltaInv"),
        DKplus=GridSamples(DKplus, "DKplus"),
        DKminus=GridSamples(DKminus, "DKminus"),
        TKcircQuad=closed_loop_quadratic(Kc, F, G),
    )


def solve_sylvester(Alhs: np.ndarray, Arhs: np.ndarray, Crhs: np.ndarray) -> np.ndarray:
    """Solve X = Alhs X Arhs + Crhs.

    Uses the Kronecker form (I - Arhs' (x) Alhs) vec X = vec C, which is fine for
    the small dimensions here.
    """
    Alhs = np.atleast_2d(np.asarray(Alhs, dtype=float))
    Arhs = np.atleast_2d(np.asarray(Arhs, dtype=float))
    Crhs = np.atleast_2d(np.asarray(Crhs, dtype=float))
    m, k = Crhs.shape
    if Alhs.shape != (m, m) or Arhs.shape != (k, k):
        raise InputError("solve_sylvester: incompatible shapes")
    if m == 0 or k == 0:
        return np.zeros((m, k))
    prods = np.outer(np.linalg.eigvals(Alhs), np.linalg.eigvals(Arhs))
    if np.min(np.abs(prods - 1)) < 1e-12:
        raise InputError("solve_sylvester: resonant coefficients (eigenvalue product equals 1)")
    M = np.eye(m * k) - np.kron(Arhs.T, Alhs)
    x = np.linalg.solve(M, Crhs.reshape(-1, order="F"))
    return x.reshape((m, k), order="F")


def h2_controller(blocks: LqrBlocks, nb: NoncausalBlocks) -> GridSamples:
    """K_H2 = Delta^{-1} {Delta K_circ}_+."""
    return GridSamples(nb.DeltaInv.values @ nb.DKplus.values, "K_H2")


# ---------------------------------------------------------------------------
# Full-information H-infinity (disturbance feedback may use the current w_t)


def _post_control(P, B_u):
    """P - P B_u (I + B_u' P B_u)^{-1} B_u' P: the value after the input reacts to w."""
    BtP = B_u.T @ P
    return P - BtP.T @ np.linalg.solve(np.eye(B_u.shape[1]) + BtP @ B_u, BtP)


def _game_rhs(ss: StateSpace, P: np.ndarray, gamma: float):
    """One step of the game recursion; None if the disturbance penalty is not PD."""
    A, Bw = ss.A, ss.B_w
    Pt = _post_control(P, ss.B_u)
    W = gamma * np.eye(ss.p) - Bw.T @ Pt @ Bw
    if np.linalg.eigvalsh((W + W.T) / 2).min() <= 0:
        return None
    PtA = Pt @ A
    P_next = ss.Q + A.T @ PtA + PtA.T @ Bw @ np.linalg.solve(W, Bw.T @ PtA)
    return (P_next + P_next.T) / 2


def _game_closed_loop(ss: StateSpace, P: np.ndarray, gamma: float) -> np.ndarray:
    Pt = _post_control(P, ss.B_u)
    W = gamma * np.eye(ss.p) - ss.B_w.T @ Pt @ ss.B_w
    Kw = np.linalg.solve(W, ss.B_w.T @ Pt @ ss.A)
    Kx_state, Kx_dist = state_feedback_law(ss, P)
    return ss.A + ss.B_u @ Kx_state + (ss.B_w + ss.B_u @ Kx_dist) @ Kw


def game_riccati(
    ss: StateSpace,
    gamma: float,
    method: str = "schur",
    tol: float = 1e-12,
    max_iter: int = 100_000,
):
    """Stabilizing solution of the full-information game Riccati equation.

    The input reacts to the current disturbance, so the level is feasible iff a
    PSD solution exists with ``gamma I - B_w' Pt B_w > 0`` (``Pt`` the
    post-control value matrix) and a stable saddle closed loop. Returns P, or
    None when the level is infeasible.

    ``method="schur"`` solves the stacked-input DARE with the generalized
    eigenvalue solver and then certifies the result; ``method="recursion"``
    iterates the game recursion from P = Q with the positivity check at every
    iterate (slow close to the optimal level).
    """
    if method == "recursion":
        P = ss.Q.copy()
        for _ in range(max_iter):
            P_next = _game_rhs(ss, P, gamma)
            if P_next is None:
                return None
            scale = np.linalg.norm(P_next)
            if not np.isfinite(scale) or scale > 1e14:
                return None
            if np.linalg.norm(P_next - P) <= tol * scale:
                return P_next if _game_rhs(ss, P_next, gamma) is not None else None
            P = P_next
        return None
    if method != "schur":
        raise InputError(f"unknown method {method!r}")

    B = np.hstack([ss.B_u, ss.B_w])
    R = np.zeros((ss.d + ss.p, ss.d + ss.p))
    R[: ss.d, : ss.d] = ss.R
    R[ss.d :, ss.d :] = -gamma * np.eye(ss.p)
    try:
        P = scipy.linalg.solve_discrete_are(ss.A, B, ss.Q, R)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(P)):
        return None
    P = (P + P.T) / 2
    scale = max(np.linalg.norm(P), 1.0)
    if np.linalg.eigvalsh(P).min() < -1e-10 * scale:
        return None
    rhs = _game_rhs(ss, P, gamma)
    if rhs is None:
        return None
    # the eigen-solver returns a non-solution, without raising, when none exists;
    # a genuine solution loses accuracy like 1/lambda_min(W) near the optimal level
    Pt = _post_control(P, ss.B_u)
    w_min = np.linalg.eigvalsh(gamma * np.eye(ss.p) - ss.B_w.T @ Pt @ ss.B_w).min()
    if np.linalg.norm(rhs - P) > 1e-8 * scale * max(1.0, gamma / w_min):
        return None
    if spectral_radius(_game_closed_loop(ss, P, gamma)) >= 1:
        return None
    return P


def state_feedback_law(ss: StateSpace, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gains of u = -Kx (A x + B_w w) with Kx = (I + B_u'PB_u)^{-1} B_u'P.

    Returns (-Kx A, -Kx B_w): the state and current-disturbance gains.
    """
    Kx = np.linalg.solve(ss.R + ss.B_u.T @ P @ ss.B_u, ss.B_u.T @ P)
    return -Kx @ ss.A, -Kx @ ss.B_w


def state_feedback_response(ss: StateSpace, P: np.ndarray, N: int) -> GridSamples:
    """Disturbance-feedback transfer function of the law from :func:`state_feedback_law`."""
    Kx_state, Kx_dist = state_feedback_law(ss, P)
    A_c = ss.A + ss.B_u @ Kx_state
    B_c = ss.B_w + ss.B_u @ Kx_dist
    z = unit_circle(N)
    return GridSamples(Kx_state @ resolvent(A_c, z, B_c) + Kx_dist, "K")


def hinf_gamma_lower_bound(
    ss: StateSpace, tol: float = 1e-6, N: int = 1024, cap: float = 1e8
) -> tuple[float, GridSamples]:
    """Squared optimal closed-loop H-infinity norm by bisection on the game level.

    Bracketed below by the noncausal peak and above by the H2 controller's
    peak; feasibility of a level is decided by :func:`game_riccati`.
    Returns ``(gamma_hinf, K_hinf)`` with ``K_hinf`` the central controller at
    ``gamma_hinf * (1 + 10 tol)``.
    """
    ss = normalize_weights(ss)
    if not np.any(ss.B_w):
        return 0.0, GridSamples(np.zeros((N, ss.d, ss.p)), "K_hinf")
    blocks = lqr_blocks(ss)
    nb = noncausal_blocks(blocks, ss, N)
    lo = float(np.max(np.linalg.eigvalsh(nb.TKcircQuad.values)))
    quad_h2 = closed_loop_quadratic(h2_controller(blocks, nb), nb.F, nb.G)
    hi = float(np.max(np.linalg.eigvalsh(quad_h2.values))) * (1 + 1e-9)
    hi = max(hi, lo * (1 + tol))
    while game_riccati(ss, hi) is None:
        lo = hi
        hi *= 2
        if hi > cap * max(lo, 1e-300):
            raise InfeasibleError(f"no feasible H-infinity level below {hi:.3e}")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if game_riccati(ss, mid) is None:
            lo = mid
        else:
            hi = mid
    level = hi * (1 + 10 * tol)
    P = game_riccati(ss, level)
    if P is None:
        raise InfeasibleError(f"central controller level {level:.6g} not certified")
    K = state_feedback_response(ss, P, N)
    K.label = "K_hinf"
    return hi, K
