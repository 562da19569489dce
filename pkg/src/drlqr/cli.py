"""Command-line front end.

    drlqr synth  --system sys.json --radius 1.5 --out run/
    drlqr approx --nspec run/N.csv --order 2 --system sys.json --out ra/
    drlqr eval   --system sys.json --controller h2 --radius 1.5
    drlqr sweep  --system sys.json --radii 0.01,0.1,1.5,10 --out sweep/
    drlqr sim    --system sys.json --controller ss:ra/controller.json --kind worst --radius 1.5 --out sim/

Exit codes: 0 success, 2 input error, 3 non-convergence, 4 infeasible.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import DRLQRError, InputError
from .grid import GridSamples
from .lti import game_riccati, load_system, normalize_weights
from .plotting import figure
from .rational import (
    ControllerSS,
    closed_loop_radius,
    fit_rational,
    freq_response_error,
    poly_canonical_factor,
    poly_response,
    rational_controller,
    realize_L,
    state_feedback_controller,
)
from .simulate import monte_carlo
from .spectral import avg_trace, cepstral_factor
from .synth import (
    Baselines,
    SynthesisConfig,
    controller_from_L,
    convergence_ratio,
    fixed_point,
    synthesize,
    worst_case_cost,
)

DEFAULTS = {
    "grid": 1024,
    "tol": 1e-9,
    "gamma_tol": 1e-6,
    "taps": 256,
    "trials": 100,
    "horizon": 210,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating, np.integer)):
        return _json_value(v.item())
    if isinstance(v, Path):
        return str(v)
    return v


class RunManifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.config = {k: _json_value(v) for k, v in sorted(vars(args).items()) if k != "func"}
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self._t0 = time.perf_counter()

    def add_input(self, path) -> Path:
        path = Path(path)
        if path.is_file():
            self.inputs[str(path)] = _sha256(path)
        return path

    def add(self, *paths) -> None:
        for p in paths:
            self.outputs.append(str(p))

    def write(self, out_dir: Path) -> Path:
        missing = [p for p in self.outputs if not Path(p).exists()]
        if missing:
            raise InputError(f"outputs missing at manifest time: {missing}")
        path = out_dir / "manifest.json"
        data = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            # relative to the output directory
            "outputs": [os.path.relpath(p, out_dir) for p in self.outputs],
            "duration_s": time.perf_counter() - self._t0,
        }
        path.write_text(json.dumps(data, indent=2) + "\n")
        return path


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int)) else repr(float(v)) for v in row])
    return path


def _write_json(path: Path, data: dict) -> Path:
    path.write_text(json.dumps({k: _json_value(v) for k, v in data.items()}, indent=2) + "\n")
    return path


def _load(manifest: RunManifest, path):
    return normalize_weights(load_system(manifest.add_input(path)))


def _parse_radii(text: str) -> list[float]:
    try:
        radii = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise InputError(f"cannot parse radii list {text!r}") from None
    if not radii or any(r <= 0 for r in radii):
        raise InputError("radii must be a nonempty list of positive numbers")
    return sorted(radii)


def _controller_samples(choice: str, base: Baselines, manifest: RunManifest) -> tuple[str, GridSamples]:
    if choice == "h2":
        return "h2", base.K_h2
    if choice == "hinf":
        return "hinf", base.K_hinf
    kind, _, path = choice.partition(":")
    if kind == "dr" and path:
        K = GridSamples.from_csv(manifest.add_input(path), shape=(base.ss.d, base.ss.p))
        if K.N != base.nb.N:
            raise InputError(f"{path}: grid size {K.N} differs from --grid {base.nb.N}")
        return choice, K
    if kind == "ss" and path:
        return choice, ControllerSS.load(manifest.add_input(path)).response(base.nb.N)
    raise InputError(f"controller must be h2, hinf, dr:PATH or ss:PATH, got {choice!r}")


def _realized_controller(choice: str, base: Baselines, gamma_tol: float, manifest: RunManifest) -> ControllerSS:
    if choice == "h2":
        return state_feedback_controller(base.ss, base.blocks.P, label="H2")
    if choice == "hinf":
        P = game_riccati(base.ss, base.gamma_hinf * (1 + 10 * gamma_tol))
        if P is None:
            raise InputError("H-infinity central controller could not be certified")
        return state_feedback_controller(base.ss, P, label="Hinf")
    kind, _, path = choice.partition(":")
    if kind == "ss" and path:
        return ControllerSS.load(manifest.add_input(path))
    if path and not kind:
        return ControllerSS.load(manifest.add_input(choice))
    raise InputError(f"simulation needs h2, hinf or ss:PATH (a realized controller), got {choice!r}")


# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    man = RunManifest("synth", args)
    ss = _load(man, args.system)
    out = _out_dir(args.out)
    base = Baselines.build(ss, args.grid, args.gamma_tol)
    cfg = SynthesisConfig(r=args.radius, N=args.grid, fp_tol=args.tol, gamma_tol=args.gamma_tol)
    res = synthesize(ss, cfg, gamma_hinf=base.gamma_hinf)

    for name, samples in (("K", res.K), ("N", res.Nspec), ("L", res.L), ("K_h2", base.K_h2), ("K_hinf", base.K_hinf)):
        path = out / f"{name}.csv"
        samples.to_csv(path)
        man.add(path)

    quads = {"dr": base.quad(res.K), "h2": base.quad(base.K_h2), "hinf": base.quad(base.K_hinf)}
    summary = res.summary()
    summary.update(
        N=args.grid,
        cost_h2=base.cost(base.K_h2, args.radius),
        cost_hinf=base.cost(base.K_hinf, args.radius),
        anticausal_energy=res.anticausal,
        fp_method=res.diagnostics.method,
        radius_residual=res.radius_residual,
    )
    man.add(_write_json(out / "result.json", summary))

    # the search warm-starts, so rerun cold from L = 1 for the convergence record
    _, _, diag = fixed_point(res.gamma_star, base.blocks, base.nb, cfg)
    ratios = list(convergence_ratio(diag)) if len(diag.bw_steps) >= 2 else []
    ratios += [math.nan] * (len(diag.changes) - len(ratios))
    man.add(
        _write_csv(
            out / "convergence.csv",
            ["iteration", "change", "bw_step", "ratio"],
            [(i + 1, c, b, q) for i, (c, b, q) in enumerate(zip(diag.changes, diag.bw_steps, ratios))],
        ),
        _write_csv(out / "gamma_trace.csv", ["gamma", "residual"], res.gamma_trace),
    )
    omega = res.K.omega
    half = slice(0, args.grid // 2 + 1)
    rows = zip(
        omega[half],
        res.Nspec.scalar().real[half],
        *(np.linalg.eigvalsh(q.values)[half, -1] for q in quads.values()),
    )
    man.add(_write_csv(out / "spectrum.csv", ["omega", "N", "TtT_dr", "TtT_h2", "TtT_hinf"], rows))
    man.add(
        *figure(
            {
                "data": "spectrum.csv",
                "output": "spectrum.png",
                "x": "omega",
                "series": [{"y": "N", "label": f"r = {args.radius:g}"}],
                "xlabel": "frequency (rad/sample)",
                "ylabel": "worst-case spectrum N",
                "title": "Worst-case disturbance spectrum",
            },
            out,
            "spectrum",
        ),
        *figure(
            {
                "data": "spectrum.csv",
                "output": "response.png",
                "x": "omega",
                "series": [
                    {"y": "TtT_dr", "label": "DR-LQR"},
                    {"y": "TtT_h2", "label": "H2"},
                    {"y": "TtT_hinf", "label": "H-infinity"},
                ],
                "xlabel": "frequency (rad/sample)",
                "ylabel": "largest eigenvalue of T*T",
                "yscale": "log",
                "title": "Closed-loop frequency response",
            },
            out,
            "response",
        ),
    )
    if diag.changes:
        man.add(
            *figure(
                {
                    "data": "convergence.csv",
                    "output": "convergence.png",
                    "x": "iteration",
                    "series": [{"y": "change", "label": "relative change"}],
                    "xlabel": "iteration",
                    "ylabel": "max relative change of N",
                    "yscale": "log",
                    "title": "Fixed-point convergence at gamma*",
                },
                out,
                "convergence",
            )
        )
    man.write(out)
    print(json.dumps({k: _json_value(v) for k, v in summary.items()}))
    return 0


def cmd_approx(args) -> int:
    man = RunManifest("approx", args)
    Nspec = GridSamples.from_csv(man.add_input(args.nspec), shape=(1, 1), label="N")
    out = _out_dir(args.out)
    if args.order < 0:
        raise InputError("--order must be nonnegative")
    ss = _load(man, args.system) if args.system else None

    report: dict = {"m": args.order}
    if ss is not None:
        base = Baselines.build(ss, Nspec.N, args.gamma_tol)
        design = rational_controller(Nspec, args.order, base.blocks, base.ss)
        fit, L_P, L_Q, Lr, ctrl = design.fit, design.L_P, design.L_Q, design.factor, design.controller
    else:
        fit = fit_rational(Nspec, args.order)
        L_P, L_Q = poly_canonical_factor(fit.P), poly_canonical_factor(fit.Q)
        Lr = realize_L(L_P, L_Q)
        ctrl = None

    z = Nspec.z
    ratio = fit.P.on_grid(Nspec.N) / fit.Q.on_grid(Nspec.N)
    factor_sq = np.abs(poly_response(L_P, z) / poly_response(L_Q, z)) ** 2
    nmin = float(Nspec.scalar().real.min())
    report.update(
        eps_star=fit.eps_star,
        eps_lower=fit.eps_lower,
        eps_relative_to_min_N=fit.eps_star / nmin,
        factor_roundtrip_error=float(np.max(np.abs(factor_sq - ratio) / ratio)),
        P=fit.P.coeffs.tolist(),
        Q=fit.Q.coeffs.tolist(),
        L_P=L_P.tolist(),
        L_Q=L_Q.tolist(),
        factor_order=Lr.m,
    )
    man.add(_write_json(out / "fit.json", report))

    if ctrl is not None:
        man.add(_write_json(out / "controller.json", ctrl.to_dict()))
        K_target = controller_from_L(cepstral_factor(Nspec), base.blocks, base.nb)
        err = freq_response_error(ctrl, K_target)
        resp = {
            "max_abs_error": err,
            "relative_error": err / K_target.sup_norm(),
            "controller_spectral_radius": ctrl.spectral_radius(),
            "closed_loop_spectral_radius": closed_loop_radius(base.ss, ctrl),
        }
        if args.radius is not None:
            resp["radius"] = args.radius
            resp["cost_rational"] = base.cost(ctrl.response(Nspec.N), args.radius)
            resp["cost_target"] = base.cost(K_target, args.radius)
        man.add(_write_json(out / "response_error.json", resp))
        report.update(resp)
    if fit.eps_star > 0.05 * nmin:
        print(
            f"warning: order-{args.order} fit error {fit.eps_star:.4g} is large relative to min N = {nmin:.4g}",
            file=sys.stderr,
        )
    man.write(out)
    print(json.dumps({k: _json_value(v) for k, v in report.items() if not isinstance(v, list)}))
    return 0


def cmd_eval(args) -> int:
    man = RunManifest("eval", args)
    ss = _load(man, args.system)
    if args.radius < 0:
        raise InputError("--radius must be nonnegative")
    base = Baselines.build(ss, args.grid, args.gamma_tol)
    name, K = _controller_samples(args.controller, base, man)
    cost, gamma, _ = worst_case_cost(base.quad(K), args.radius)
    result = {"controller": name, "r": args.radius, "cost": cost, "gamma_star": gamma}
    if args.out:
        out = _out_dir(args.out)
        man.add(_write_json(out / "eval.json", result))
        man.write(out)
    print(json.dumps({k: _json_value(v) for k, v in result.items()}))
    return 0


def cmd_sweep(args) -> int:
    man = RunManifest("sweep", args)
    ss = _load(man, args.system)
    radii = _parse_radii(args.radii)
    orders = [int(v) for v in args.orders.split(",") if v] if args.orders else []
    out = _out_dir(args.out)
    base = Baselines.build(ss, args.grid, args.gamma_tol)

    header = ["r", "gamma_star", "cost_dr", "cost_h2", "cost_hinf"] + [f"cost_ra{m}" for m in orders]
    rows, spectra = [], []
    for r in radii:
        cfg = SynthesisConfig(r=r, N=args.grid, fp_tol=args.tol, gamma_tol=args.gamma_tol)
        res = synthesize(ss, cfg, gamma_hinf=base.gamma_hinf)
        row = [r, res.gamma_star, res.cost, base.cost(base.K_h2, r), base.cost(base.K_hinf, r)]
        for m in orders:
            design = rational_controller(res.Nspec, m, base.blocks, base.ss)
            row.append(base.cost(design.controller.response(args.grid), r))
        rows.append(row)
        spectra.append(res.Nspec.scalar().real)
    man.add(_write_csv(out / "sweep.csv", header, rows))

    half = slice(0, args.grid // 2 + 1)
    omega = 2 * np.pi * np.arange(args.grid) / args.grid
    names = [f"N_r{i}" for i in range(len(radii))]
    man.add(_write_csv(out / "spectra.csv", ["omega"] + names, zip(omega[half], *(s[half] for s in spectra))))

    series = [{"y": "cost_dr", "label": "DR-LQR"}, {"y": "cost_h2", "label": "H2"}, {"y": "cost_hinf", "label": "H-infinity"}]
    series += [{"y": f"cost_ra{m}", "label": f"RA({m})", "style": "--"} for m in orders]
    man.add(
        *figure(
            {
                "data": "sweep.csv",
                "output": "sweep.png",
                "x": "r",
                "series": series,
                "xlabel": "Wasserstein radius r",
                "ylabel": "worst-case expected cost",
                "xscale": "log",
                "yscale": "log",
                "title": "Worst-case cost versus radius",
            },
            out,
            "sweep",
        ),
        *figure(
            {
                "data": "spectra.csv",
                "output": "spectra.png",
                "x": "omega",
                "series": [{"y": n, "label": f"r = {r:g}"} for n, r in zip(names, radii)],
                "xlabel": "frequency (rad/sample)",
                "ylabel": "worst-case spectrum N",
                "yscale": "log",
                "title": "Worst-case spectra",
            },
            out,
            "spectra",
        ),
    )
    man.write(out)
    for row in rows:
        print(",".join(repr(float(v)) for v in row))
    return 0


def cmd_sim(args) -> int:
    man = RunManifest("sim", args)
    ss = _load(man, args.system)
    out = _out_dir(args.out)
    base = Baselines.build(ss, args.grid, args.gamma_tol)
    ctrl = _realized_controller(args.controller, base, args.gamma_tol, man)
    quad = base.quad(ctrl.response(args.grid))

    L = None
    predicted = avg_trace(quad)
    if args.kind == "worst":
        if args.spectrum:
            M = GridSamples.from_csv(man.add_input(args.spectrum), shape=(1, 1), label="N")
        elif args.radius is not None:
            _, _, Mhalf = worst_case_cost(quad, args.radius)
            M = GridSamples(Mhalf.values @ Mhalf.values, "M")
        else:
            raise InputError("--kind worst needs --spectrum PATH or --radius R")
        if M.N != args.grid:
            raise InputError(f"spectrum grid {M.N} differs from --grid {args.grid}")
        L = cepstral_factor(M)
        predicted = avg_trace(GridSamples(quad.values @ M.values))

    run = monte_carlo(base.ss, ctrl, args.kind, args.horizon, args.trials, args.seed, L=L, taps=args.taps)
    path = out / "simrun.csv"
    run.to_csv(path)
    man.add(path)
    se = run.std / np.sqrt(run.trials)
    man.add(_write_csv(out / "simrun_band.csv", ["t", "mean", "se"], zip(range(run.horizon), run.mean, se)))
    summary = {
        "controller": args.controller,
        "kind": args.kind,
        "horizon": run.horizon,
        "trials": run.trials,
        "seed": run.seed,
        "terminal_mean": run.terminal_mean,
        "terminal_se": run.terminal_se,
        "stationary_prediction": predicted,
    }
    man.add(_write_json(out / "sim.json", summary))
    man.add(
        *figure(
            {
                "data": "simrun_band.csv",
                "output": "simrun.png",
                "x": "t",
                "series": [{"y": "mean", "err": "se", "label": f"{args.controller} ({args.kind})"}],
                "xlabel": "time step",
                "ylabel": "cumulative average cost",
                "title": "Monte Carlo cost",
            },
            out,
            "simrun",
        )
    )
    man.write(out)
    print(json.dumps({k: _json_value(v) for k, v in summary.items()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drlqr", description="Wasserstein distributionally robust LQR")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, system_required=True):
        p.add_argument("--system", required=system_required, help="system JSON (A, B_u, B_w, optional Q, R)")
        p.add_argument("--grid", type=int, default=DEFAULTS["grid"], help="frequency grid size (power of two)")
        p.add_argument("--gamma-tol", type=float, default=DEFAULTS["gamma_tol"])

    p = sub.add_parser("synth", help="synthesize the DR-LQR controller for one radius")
    common(p)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--tol", type=float, default=DEFAULTS["tol"], help="fixed-point tolerance")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("approx", help="rational approximation of a worst-case spectrum")
    p.add_argument("--nspec", required=True, help="N.csv written by synth")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--system", help="system JSON; needed to realize the controller")
    p.add_argument("--radius", type=float, help="also score the realized controller at this radius")
    p.add_argument("--gamma-tol", type=float, default=DEFAULTS["gamma_tol"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("eval", help="worst-case cost of a controller")
    common(p)
    p.add_argument("--controller", required=True, help="h2 | hinf | dr:K.csv | ss:controller.json")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="cost versus radius for DR-LQR, H2 and H-infinity")
    common(p)
    p.add_argument("--radii", required=True, help="comma-separated radii")
    p.add_argument("--orders", default="", help="comma-separated rational orders to include")
    p.add_argument("--tol", type=float, default=DEFAULTS["tol"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sim", help="Monte Carlo simulation of a realized controller")
    common(p)
    p.add_argument("--controller", required=True, help="h2 | hinf | ss:controller.json")
    p.add_argument("--kind", choices=("white", "worst"), default="white")
    p.add_argument("--spectrum", help="worst-case spectrum CSV (N.csv from synth)")
    p.add_argument("--radius", type=float, help="use the controller's own worst case at this radius")
    p.add_argument("--horizon", type=int, default=DEFAULTS["horizon"])
    p.add_argument("--trials", type=int, default=DEFAULTS["trials"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--taps", type=int, default=DEFAULTS["taps"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DRLQRError as exc:
        print(f"drlqr {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"drlqr {args.command}: error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
