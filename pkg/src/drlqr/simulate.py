"""Time-domain rollouts of plant plus disturbance-feedback controller."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DivergenceError, InputError
from .grid import GridSamples
from .lti import StateSpace
from .rational import ControllerSS
from .spectral import stationary_gaussian

GUARD = 1e12
_CHUNK = 4096


@dataclass
class Trajectory:
    x: np.ndarray  # (T, n)
    u: np.ndarray  # (T, d)
    cost: np.ndarray  # (T,)


def _check_shapes(ss: StateSpace, ctrl: ControllerSS) -> None:
    if ctrl.J.shape != (ss.d, ss.p):
        raise InputError(f"controller maps {ctrl.J.shape[1]} -> {ctrl.J.shape[0]}, plant needs {ss.p} -> {ss.d}")


def _augmented(ss: StateSpace, ctrl: ControllerSS):
    """Stacked state xi = (x, e): xi+ = Acl xi + Bcl w, (x, u) = Cout xi + Dout w."""
    n, k = ss.n, ctrl.order
    Acl = np.block([[ss.A, ss.B_u @ ctrl.H], [np.zeros((k, n)), ctrl.F]])
    Bcl = np.vstack([ss.B_w + ss.B_u @ ctrl.J, ctrl.G])
    Cout = np.block([[np.eye(n), np.zeros((n, k))], [np.zeros((ss.d, n)), ctrl.H]])
    Dout = np.vstack([np.zeros((n, ss.p)), ctrl.J])
    return Acl, Bcl, Cout, Dout


def _rollout(ss: StateSpace, ctrl: ControllerSS, W: np.ndarray, keep: bool = False):
    """Batched rollout; W has shape (T, p, B). Returns per-step costs (T, B)."""
    _check_shapes(ss, ctrl)
    T, p, B = W.shape
    if p != ss.p:
        raise InputError(f"disturbance has {p} channels, plant expects {ss.p}")
    Acl, Bcl, Cout, Dout = _augmented(ss, ctrl)
    n = ss.n
    weight = np.zeros((n + ss.d, n + ss.d))
    weight[:n, :n] = ss.Q
    weight[n:, n:] = ss.R
    xi = np.zeros((Acl.shape[0], B))
    costs = np.empty((T, B))
    outs = np.empty((T, n + ss.d, B)) if keep else None
    buf = np.empty((_CHUNK, Acl.shape[0], B))
    for start in range(0, T, _CHUNK):
        stop = min(start + _CHUNK, T)
        for t in range(start, stop):
            buf[t - start] = xi
            xi = Acl @ xi + Bcl @ W[t]
        states = buf[: stop - start]
        y = Cout @ states + Dout @ W[start:stop]
        xnorm = np.linalg.norm(states[:, :n, :], axis=1)
        bad = ~np.isfinite(xnorm) | (xnorm > GUARD)
        if bad.any():
            t_bad, b_bad = np.argwhere(bad)[0]
            raise DivergenceError(
                f"state norm left the guard {GUARD:.0e} at step {start + t_bad}",
                trial=int(b_bad),
                step=int(start + t_bad),
            )
        costs[start:stop] = np.einsum("tib,ij,tjb->tb", y, weight, y)
        if keep:
            outs[start:stop] = y
    return costs, outs


def simulate(ss: StateSpace, ctrl: ControllerSS, w) -> Trajectory:
    """Roll out x+ = A x + B_u u + B_w w with the controller from x_0 = e_0 = 0.

    ``w`` has shape (T, p) (or (T,) when p = 1). The stage cost is
    x^T Q x + u^T R u, which is x^T x + u^T u for normalized weights.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    costs, outs = _rollout(ss, ctrl, w[:, :, None], keep=True)
    n = ss.n
    return Trajectory(outs[:, :n, 0], outs[:, n:, 0], costs[:, 0])


def cumulative_average(costs: np.ndarray) -> np.ndarray:
    """Running mean over the time axis (axis 0), starting at t = 0."""
    steps = np.arange(1, costs.shape[0] + 1).reshape((-1,) + (1,) * (costs.ndim - 1))
    return np.cumsum(costs, axis=0) / steps


def worst_case_disturbance(L: GridSamples, T: int, taps: int = 256, seed=0) -> np.ndarray:
    """Stationary Gaussian sequence with spectrum L L^* (filtered white noise)."""
    return stationary_gaussian(L, T, taps=taps, seed=seed)


@dataclass
class SimRun:
    horizon: int
    trials: int
    seed: int
    kind: str
    mean: np.ndarray
    std: np.ndarray
    label: str = ""
    taps: int = 0

    @property
    def terminal_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def terminal_se(self) -> float:
        return float(self.std[-1]) / np.sqrt(self.trials)

    def rows(self):
        for t in range(self.horizon):
            yield t, repr(float(self.mean[t])), repr(float(self.std[t]))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "mean_cum_avg_cost", "std_cum_avg_cost"])
            writer.writerows(self.rows())


def monte_carlo(
    ss: StateSpace,
    ctrl: ControllerSS,
    kind: str,
    T: int,
    trials: int,
    seed: int,
    L: GridSamples | None = None,
    taps: int = 256,
    label: str = "",
) -> SimRun:
    """Mean and std over trials of the cumulative-average cost curve.

    Trial i draws its disturbance from ``SeedSequence(seed).spawn(trials)[i]``,
    so results do not depend on how trials are batched. ``kind`` is ``"white"``
    (i.i.d. standard normal) or ``"worst"`` (filtered through ``L``).
    """
    if kind not in ("white", "worst"):
        raise InputError(f"disturbance kind must be 'white' or 'worst', got {kind!r}")
    if T < 1 or trials < 1:
        raise InputError("horizon and trials must be positive")
    if kind == "worst" and L is None:
        raise InputError("worst-case simulation needs the spectral factor L")
    children = np.random.SeedSequence(seed).spawn(trials)
    W = np.empty((T, ss.p, trials))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        if kind == "white":
            W[:, :, i] = rng.standard_normal((T, ss.p))
        else:
            W[:, :, i] = worst_case_disturbance(L, T, taps=taps, seed=rng)
    try:
        costs, _ = _rollout(ss, ctrl, W)
    except DivergenceError as exc:
        raise DivergenceError(f"trial {exc.trial}: {exc}", trial=exc.trial, step=exc.step) from None
    avg = cumulative_average(costs)
    mean = avg.mean(axis=1)
    std = avg.std(axis=1, ddof=1) if trials > 1 else np.zeros(T)
    return SimRun(T, trials, seed, kind, mean, std, label=label or ctrl.label, taps=taps if kind == "worst" else 0)
