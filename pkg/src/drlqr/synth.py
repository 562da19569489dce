"""Infinite-horizon Wasserstein-2 distributionally robust LQR synthesis.

For a fixed dual level gamma the saddle-point spectrum is the fixed point of

    L  ->  Bbar = mean_k (I - z_k Abar)^{-1} Dbar L(z_k)
       ->  N(z) = 1/4 (I + sqrt(I + 4/gamma (S^*S + U^*U)))^2
       ->  L = causal spectral factor of N,

with S(z) = Cbar (z^{-1} I - Abar)^{-1} Bbar and U(z) = T_{K_circ}(z) L(z).
The controller follows as K = K_circ - Delta^{-1} S L^{-1}. An outer
root-finder adjusts gamma until the worst-case spectrum sits at Wasserstein
radius r from the white nominal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, root

from .errors import ConvergenceError, InfeasibleError, InputError, UnsupportedError
from .grid import GridSamples, check_grid_size, hermitian, unit_circle
from .lti import (
    LqrBlocks,
    NoncausalBlocks,
    StateSpace,
    closed_loop_quadratic,
    h2_controller,
    hinf_gamma_lower_bound,
    lqr_blocks,
    noncausal_blocks,
    normalize_weights,
    resolvent,
)
from .spectral import avg_trace, cepstral_factor, hermitian_sqrt, idft


@dataclass
class SynthesisConfig:
    r: float
    N: int = 1024
    fp_tol: float = 1e-9
    fp_max_iters: int = 200_000
    gamma_tol: float = 1e-6
    gamma_cap: float = 1e12
    fp_method: str = "auto"
    picard_budget: int = 2000

    def __post_init__(self):
        if not self.r > 0:
            raise InputError(f"radius must be positive, got {self.r}")
        if not 0 < self.fp_tol < 1 or not 0 < self.gamma_tol < 1:
            raise InputError("fp_tol and gamma_tol must lie in (0, 1)")
        self.N = check_grid_size(self.N)


@dataclass
class FixedPointDiagnostics:
    gamma: float
    iterations: int = 0
    changes: list = field(default_factory=list)
    bw_steps: list = field(default_factory=list)
    history: list | None = None
    method: str = "picard"

    @property
    def residual(self) -> float:
        return self.changes[-1] if self.changes else math.inf


@dataclass
class SynthesisResult:
    gamma_star: float
    gamma_hinf: float
    K: GridSamples
    Nspec: GridSamples
    L: GridSamples
    cost: float
    diagnostics: FixedPointDiagnostics
    gamma_trace: list
    r: float
    anticausal: float = 0.0

    @property
    def radius_residual(self) -> float:
        return self.gamma_trace[-1][1] if self.gamma_trace else math.nan

    def summary(self) -> dict:
        return {
            "r": self.r,
            "gamma_star": self.gamma_star,
            "gamma_hinf": self.gamma_hinf,
            "cost": self.cost,
            "iters": self.diagnostics.iterations,
            "residual": self.diagnostics.residual,
            "gamma_evaluations": len(self.gamma_trace),
        }


class _Kernels:
    """Grid samples of (I - z Abar)^{-1} Dbar and Cbar (z^{-1} I - Abar)^{-1}."""

    def __init__(self, blocks: LqrBlocks, nb: NoncausalBlocks):
        z = unit_circle(nb.N)
        n = blocks.Abar.shape[0]
        self.avg = np.linalg.solve(
            np.eye(n) - z[:, None, None] * blocks.Abar,
            np.broadcast_to(blocks.Dbar, (nb.N,) + blocks.Dbar.shape).astype(complex),
        )
        self.anti = blocks.Cbar @ resolvent(blocks.Abar, 1 / z, np.eye(n))
        self.nb = nb

    def bbar(self, L: np.ndarray) -> np.ndarray:
        return np.mean(self.avg @ L, axis=0).real

    def spectrum(self, Bbar: np.ndarray, L: np.ndarray, gamma: float) -> np.ndarray:
        S = self.anti @ Bbar
        X = hermitian(S) @ S + hermitian(L) @ self.nb.TKcircQuad.values @ L
        p = X.shape[-1]
        if math.isinf(gamma):
            return np.broadcast_to(np.eye(p, dtype=complex), X.shape).copy()
        if p == 1:
            root = np.sqrt(1 + 4 * X.real / gamma)
            return (0.25 * (1 + root) ** 2).astype(complex)
        eye = np.eye(p)
        root = hermitian_sqrt(eye + 4 * X / gamma)
        half = eye + root
        return 0.25 * half @ half


def f1_bbar(L: GridSamples, blocks: LqrBlocks, nb: NoncausalBlocks) -> np.ndarray:
    """Grid average (1/N) sum_k (I - z_k Abar)^{-1} Dbar L(z_k) (real part)."""
    return _Kernels(blocks, nb).bbar(L.values)


def f2_spectrum(
    Bbar: np.ndarray, L: GridSamples, gamma: float, blocks: LqrBlocks, nb: NoncausalBlocks
) -> GridSamples:
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    return GridSamples(_Kernels(blocks, nb).spectrum(Bbar, L.values, gamma), "N")


def bures_wasserstein(Na: np.ndarray, Nb: np.ndarray) -> float:
    """Grid Bures-Wasserstein distance between two sampled spectra."""
    if Na.shape[-1] == 1:
        diff = np.sqrt(np.maximum(Na.real, 0)) - np.sqrt(np.maximum(Nb.real, 0))
        return float(np.sqrt(np.mean(diff**2)))
    rb = hermitian_sqrt(Nb)
    cross = hermitian_sqrt(rb @ Na @ rb)
    val = np.mean(np.trace(Na + Nb - 2 * cross, axis1=1, axis2=2)).real
    return float(np.sqrt(max(val, 0.0)))


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    num = np.linalg.norm(new - old, axis=(1, 2))
    den = np.maximum(np.linalg.norm(old, axis=(1, 2)), 1e-300)
    return float(np.max(num / den))


class _ScalarMaps:
    """Flat-array versions of the maps for p = 1.

    With p = 1 the spectrum update depends on L only through Bbar and the
    pointwise modulus |L|^2 = N, and the update is a quadratic in sqrt(N):
    ``a^2 (1 - t/gamma) - a - s/gamma = 0`` with ``s = |S|^2``, ``t = T_{K_circ}^*T_{K_circ}``.
    That closes the iteration on the n-vector Bbar, which :meth:`reduced_solve`
    exploits.
    """

    def __init__(self, ker: _Kernels, gamma: float):
        self.avg = ker.avg[:, :, 0]
        self.anti = ker.anti[:, 0, :]
        self.tq = ker.nb.TKcircQuad.values[:, 0, 0].real
        self.inv_g = 0.0 if math.isinf(gamma) else 1.0 / gamma
        self.N = ker.nb.N

    def factor(self, Nv: np.ndarray) -> np.ndarray:
        if Nv.min() <= 0 or not np.all(np.isfinite(Nv)):
            return cepstral_factor(GridSamples(Nv)).values[:, 0, 0]
        n = self.N
        lam = np.fft.irfft(np.log(Nv[: n // 2 + 1]), n=n)
        lam[0] /= 2
        lam[n // 2] /= 2
        lam[n // 2 + 1 :] = 0
        return np.exp(np.fft.fft(lam))

    def bbar(self, Lv: np.ndarray) -> np.ndarray:
        return (self.avg.T @ Lv).real / self.N

    def spectrum(self, Lv: np.ndarray) -> np.ndarray:
        S = self.anti @ self.bbar(Lv)
        X = S.real**2 + S.imag**2 + (Lv.real**2 + Lv.imag**2) * self.tq
        return 0.25 * (1 + np.sqrt(1 + 4 * self.inv_g * X)) ** 2

    def spectrum_of_bbar(self, b: np.ndarray) -> np.ndarray:
        S = self.anti @ b
        s = S.real**2 + S.imag**2
        c = 1 - self.tq * self.inv_g
        a = (1 + np.sqrt(1 + 4 * c * s * self.inv_g)) / (2 * c)
        return a * a

    def reduced_solve(self, b0: np.ndarray) -> np.ndarray | None:
        if np.min(1 - self.tq * self.inv_g) <= 0:
            return None

        def psi(b):
            return self.bbar(self.factor(self.spectrum_of_bbar(b))) - b

        sol = root(psi, b0, method="hybr", options={"xtol": 1e-15})
        if not np.all(np.isfinite(sol.x)):
            return None
        return self.spectrum_of_bbar(sol.x)


def fixed_point(
    gamma: float,
    blocks: LqrBlocks,
    nb: NoncausalBlocks,
    config: SynthesisConfig,
    L0: GridSamples | None = None,
    keep_history: bool = False,
    method: str | None = None,
    _kernels: _Kernels | None = None,
):
    """Iterate factor -> Bbar -> spectrum -> factor until the spectrum settles.

    Stops once the sup-relative change between successive spectra is at most
    ``config.fp_tol``. Returns ``(L, Nspec, diagnostics)`` where ``L`` is the
    factor of ``Nspec``, so one more application of the map moves ``Nspec`` by
    no more than the tolerance.

    ``method="picard"`` runs the plain iteration only. ``"auto"`` switches to
    the reduced root solve on Bbar once ``config.picard_budget`` iterations
    pass without convergence (the plain map contracts at roughly
    gamma_hinf / gamma, so it crawls near the H-infinity level), then resumes
    plain steps to certify the result.
    """
    method = method or config.fp_method
    if method not in ("picard", "auto"):
        raise InputError(f"unknown fixed-point method {method!r}")
    p = nb.G.shape[1]
    if p != 1:
        raise UnsupportedError("spectral factorization (and hence the fixed point) needs p = 1")
    ker = _kernels or _Kernels(blocks, nb)
    maps = _ScalarMaps(ker, gamma)
    diag = FixedPointDiagnostics(gamma=gamma, history=[] if keep_history else None)

    Lv = np.ones(nb.N, dtype=complex) if L0 is None else np.array(L0.values[:, 0, 0], dtype=complex)
    N_prev = maps.spectrum(Lv)
    if keep_history:
        diag.history.append(N_prev.copy())
    switched = method == "picard"
    for it in range(1, config.fp_max_iters + 1):
        Lv = maps.factor(N_prev)
        if not switched and it > config.picard_budget:
            switched = True
            N_red = maps.reduced_solve(maps.bbar(Lv))
            if N_red is not None:
                diag.method = "picard+reduced"
                N_prev = N_red
                Lv = maps.factor(N_prev)
        N_new = maps.spectrum(Lv)
        if not np.all(np.isfinite(N_new)):
            raise ConvergenceError(f"fixed point diverged at gamma={gamma:.10g}", diag.changes)
        change = float(np.max(np.abs(N_new - N_prev) / N_prev))
        diag.changes.append(change)
        diag.bw_steps.append(float(np.sqrt(np.mean((np.sqrt(N_prev) - np.sqrt(N_new)) ** 2))))
        diag.iterations = it
        if keep_history:
            diag.history.append(N_new.copy())
        if change <= config.fp_tol:
            return (
                GridSamples(Lv[:, None, None], "L"),
                GridSamples(N_prev[:, None, None].astype(complex), "N"),
                diag,
            )
        N_prev = N_new
    raise ConvergenceError(
        f"fixed point did not converge in {config.fp_max_iters} iterations at gamma={gamma:.10g} "
        f"(last change {diag.changes[-1]:.3e})",
        diag.changes,
    )


def kkt_residual(L: GridSamples, Nspec: GridSamples, gamma: float, blocks, nb) -> float:
    """max_k ||N - F2(F1(L), L)|| / ||N||."""
    ker = _Kernels(blocks, nb)
    again = ker.spectrum(ker.bbar(L.values), L.values, gamma)
    return _relative_change(again, Nspec.values)


def controller_from_L(L: GridSamples, blocks: LqrBlocks, nb: NoncausalBlocks) -> GridSamples:
    """K = K_circ - Delta^{-1} S_L L^{-1} at every sample."""
    Lv = L.values
    if np.min(np.abs(np.linalg.det(Lv))) < 1e-12:
        raise InputError("spectral factor is singular at some grid point")
    ker = _Kernels(blocks, nb)
    S = ker.anti @ ker.bbar(Lv)
    K = nb.Kcirc.values - nb.DeltaInv.values @ S @ np.linalg.inv(Lv)
    return GridSamples(K, "K_DR")


def anticausal_energy(K: GridSamples) -> float:
    """Relative energy of the strictly anticausal impulse-response coefficients."""
    h = idft(K.values)
    total = float(np.sum(np.abs(h) ** 2))
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(h[K.N // 2 + 1 :]) ** 2)) / total


# ---------------------------------------------------------------------------
# Worst case for a fixed controller


def _quad_eigs(TquadK: GridSamples) -> tuple[np.ndarray, np.ndarray]:
    v = TquadK.values
    w, V = np.linalg.eigh((v + hermitian(v)) / 2)
    return np.clip(w, 0, None), V


def _radius_sq(lams: np.ndarray, gamma: float) -> float:
    # avg_k tr(((I - T/gamma)^{-1} - I)^2), diagonalized
    x = lams / (gamma - lams)
    return float(np.mean(np.sum(x**2, axis=-1)))


def gamma_residual(TquadK: GridSamples, gamma: float, r: float) -> float:
    """avg_trace(((I - T^*T/gamma)^{-1} - I)^2) - r^2, decreasing in gamma."""
    lams, _ = _quad_eigs(TquadK)
    if math.isinf(gamma):
        return -r * r
    if gamma <= lams.max():
        raise InputError(f"gamma={gamma:.6g} does not exceed the pointwise peak {lams.max():.6g}")
    return _radius_sq(lams, gamma) - r * r


def worst_case_cost(TquadK: GridSamples, r: float) -> tuple[float, float, GridSamples]:
    """Worst-case expected cost of a fixed controller over the W2 ball of radius r.

    Returns ``(cost, gamma_star, Mhalf)`` with ``Mhalf = (I - T^*T/gamma_star)^{-1}``
    the square root of the worst-case disturbance spectrum.
    """
    if r < 0:
        raise InputError(f"radius must be nonnegative, got {r}")
    lams, V = _quad_eigs(TquadK)
    p = lams.shape[-1]
    eye = np.broadcast_to(np.eye(p, dtype=complex), TquadK.values.shape).copy()
    peak = float(lams.max())
    if r == 0 or peak == 0:
        return float(np.mean(np.sum(lams, axis=-1))), math.inf, GridSamples(eye, "Mhalf")

    def h(s):
        return _radius_sq(lams, peak * (1 + math.exp(s))) - r * r

    s_lo, s_hi = -1.0, 1.0
    while h(s_lo) <= 0:
        s_lo -= 2.0
        if s_lo < -700:
            raise InfeasibleError("worst-case gamma bracket failed below")
    while h(s_hi) >= 0:
        s_hi += 2.0
        if s_hi > 700:
            raise InfeasibleError("worst-case gamma bracket failed above")
    s = brentq(h, s_lo, s_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    gamma = peak * (1 + math.exp(s))
    x = lams / (gamma - lams)
    mh = 1 + x
    cost = gamma * r * r + float(np.mean(np.sum(-gamma * x**2 + lams * mh**2, axis=-1)))
    Mhalf = (V * mh[..., None, :]) @ hermitian(V)
    return cost, gamma, GridSamples(Mhalf, "Mhalf")


def convergence_ratio(diagnostics: FixedPointDiagnostics, floor: float = 1e-14) -> np.ndarray:
    """Ratios of successive Bures-Wasserstein step lengths of the fixed point."""
    d = np.asarray(diagnostics.bw_steps, dtype=float)
    if d.size < 2:
        raise InputError("convergence ratio needs at least three recorded iterates")
    out = np.zeros(d.size - 1)
    ok = d[:-1] >= floor
    out[ok] = d[1:][ok] / d[:-1][ok]
    return out


# ---------------------------------------------------------------------------


def _prepare(ss: StateSpace, N: int):
    ss = normalize_weights(ss)
    blocks = lqr_blocks(ss)
    return ss, blocks, noncausal_blocks(blocks, ss, N)


def synthesize(ss: StateSpace, config: SynthesisConfig, gamma_hinf: float | None = None) -> SynthesisResult:
    """DR-LQR controller for radius ``config.r``.

    gamma is searched on ``(gamma_hinf (1 + 10 gamma_tol), gamma_cap gamma_hinf]``
    through the variable ``u = log(gamma / gamma_hinf - 1)``; each evaluation
    runs the fixed point (warm-started from the nearest earlier level) and
    scores the resulting controller with :func:`gamma_residual`.
    """
    ss, blocks, nb = _prepare(ss, config.N)
    if ss.p != 1:
        raise UnsupportedError("synthesis supports scalar disturbances (p = 1) only")
    if gamma_hinf is None:
        gamma_hinf, _ = hinf_gamma_lower_bound(ss, tol=config.gamma_tol, N=config.N)
    if gamma_hinf <= 0:
        raise InputError("B_w = 0: the disturbance does not enter the plant")
    ker = _Kernels(blocks, nb)
    r2 = config.r**2
    cache: dict[float, tuple] = {}
    trace: list = []

    def evaluate(u):
        if u in cache:
            return cache[u]
        gamma = gamma_hinf * (1 + math.exp(u))
        warm = None
        if cache:
            nearest = min(cache, key=lambda v: abs(v - u))
            warm = cache[nearest][1]
        try:
            L, Nspec, diag = fixed_point(gamma, blocks, nb, config, L0=warm, _kernels=ker)
        except ConvergenceError as exc:
            raise ConvergenceError(f"{exc} (gamma search)", exc.trajectory) from None
        K = controller_from_L(L, blocks, nb)
        quad = closed_loop_quadratic(K, nb.F, nb.G)
        try:
            res = gamma_residual(quad, gamma, config.r)
        except InputError:
            # peak of T^*T reached gamma: the grid no longer resolves the
            # spectrum, treat as an infinite radius
            res = math.inf
        cache[u] = (res, L, Nspec, diag, K, quad, gamma)
        trace.append((gamma, res))
        return cache[u]

    u_min = math.log(10 * config.gamma_tol)
    u_max = math.log(config.gamma_cap)
    lo, hi = None, None
    u = 0.0
    first = evaluate(u)[0]
    if first > 0:
        lo = u
        while hi is None:
            # double gamma
            u = math.log(2 * (1 + math.exp(u)) - 1)
            if u > u_max:
                raise InfeasibleError(
                    f"radius residual still positive at gamma = {gamma_hinf * (1 + math.exp(u)):.3e}; "
                    "increase gamma_cap"
                )
            if evaluate(u)[0] < 0:
                hi = u
            else:
                lo = u
    else:
        hi = u
        while lo is None:
            u = max(u - 2.0, u_min)
            if evaluate(u)[0] > 0:
                lo = u
            elif u == u_min:
                raise InfeasibleError(
                    "radius residual negative at the H-infinity floor; radius too large for the grid"
                )
            else:
                hi = u

    def g(v):
        return min(evaluate(v)[0], 1e300) / r2

    best = None
    try:
        brentq(g, lo, hi, xtol=1e-13, rtol=1e-13, maxiter=200)
    except (ValueError, RuntimeError):
        pass
    best = min(cache, key=lambda v: abs(cache[v][0]))
    res, L, Nspec, diag, K, quad, gamma = cache[best]
    if abs(res) > config.gamma_tol * r2:
        raise ConvergenceError(
            f"gamma search stalled: |residual| = {abs(res):.3e} > {config.gamma_tol * r2:.3e}",
            [t[1] for t in trace],
        )
    cost, _, _ = worst_case_cost(quad, config.r)
    leak = anticausal_energy(K)
    if leak > 1e-6:
        warnings.warn(
            f"controller samples carry anticausal energy {leak:.1e}; the grid (N={config.N}) "
            "under-resolves the worst-case spectrum, consider a larger N",
            stacklevel=2,
        )
    trace.sort(key=lambda t: t[0])
    trace = [t for t in trace if t[0] != gamma] + [(gamma, res)]
    return SynthesisResult(
        gamma_star=gamma,
        gamma_hinf=gamma_hinf,
        K=K,
        Nspec=Nspec,
        L=L,
        cost=cost,
        diagnostics=diag,
        gamma_trace=trace,
        r=config.r,
        anticausal=leak,
    )


@dataclass
class Baselines:
    """Shared synthesis context for a system: blocks plus H2 / H-infinity controllers."""

    ss: StateSpace
    blocks: LqrBlocks
    nb: NoncausalBlocks
    K_h2: GridSamples
    K_hinf: GridSamples
    gamma_hinf: float

    @classmethod
    def build(cls, ss: StateSpace, N: int = 1024, tol: float = 1e-6) -> Baselines:
        ss, blocks, nb = _prepare(ss, N)
        gamma_hinf, K_hinf = hinf_gamma_lower_bound(ss, tol=tol, N=N)
        return cls(ss, blocks, nb, h2_controller(blocks, nb), K_hinf, gamma_hinf)

    def quad(self, K: GridSamples) -> GridSamples:
        return closed_loop_quadratic(K, self.nb.F, self.nb.G)

    def cost(self, K: GridSamples, r: float) -> float:
        return worst_case_cost(self.quad(K), r)[0]
