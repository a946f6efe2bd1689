"""Command-line entry points.

Verbs: ``equilibrium``, ``modes``, ``gate``, ``sweep``, ``pulse-design``.
The first four read the key = value experiment config; pulse design takes
its beam parameters as flags.  The exit code is zero only when every
requested stage completed within its tolerances.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.constants as const

from .beams import Scheme, build_pulse_sequence, verify_conditions
from .bench import (
    ExperimentConfig,
    StageError,
    _write_spectrum,
    parse_config,
    run_experiment,
    save_state,
    sweep,
)
from .crystal import find_equilibrium
from .modes import build_hessian, classify_bands, williamson
from .scales import BOHR_MAGNETON


def _load(args) -> ExperimentConfig:
    config = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    return replace(config, **overrides) if overrides else config


def _cmd_equilibrium(args):
    config = _load(args)
    state = find_equilibrium(config.setup(), config.p_theta, config.schedule())
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_state(state, out / "equilibrium.txt")
    print(
        f"equilibrium: N={state.n_ions} omega_r/omega_c={state.rotation_frequency:.6f} "
        f"beta={state.anisotropy:.3e} grad={state.gradient_norm:.2e}"
    )
    return 0 if state.converged else 1


def _cmd_modes(args):
    config = _load(args)
    setup = config.setup()
    state = find_equilibrium(setup, config.p_theta, config.schedule())
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_state(state, out / "equilibrium.txt")
    spectrum = williamson(build_hessian(state))
    bands = classify_bands(spectrum, setup)
    _write_spectrum(out / "spectrum.csv", spectrum, bands, setup)
    gaps = ", ".join(f"({a:.4g}, {b:.4g})" for a, b, *_ in bands.gaps)
    print(f"modes: {spectrum.n_modes} frequencies, gaps: {gaps or 'none'}")
    return 0


def _cmd_gate(args):
    config = _load(args)
    artifacts = run_experiment(config)
    worst = max(1.0 - f for _, f, _ in artifacts.gate.fidelity_curve)
    print(
        f"gate: amplitude={artifacts.gate.amplitude:.4g} "
        f"nu={artifacts.gate.carrier_frequency / (2 * math.pi):.4g} Hz "
        f"worst infidelity={worst:.3e}"
    )
    print(f"artifacts in {artifacts.out_dir}")
    return 0


def _parse_grid(spec: str):
    if spec.startswith("log:"):
        _, lo, hi, num = spec.split(":")
        return list(np.geomspace(float(lo), float(hi), int(num)))
    if ":" in spec:
        lo, hi, num = spec.split(":")
        return list(np.linspace(float(lo), float(hi), int(num)))
    return [float(tok) for tok in spec.split(",")]


def _cmd_sweep(args):
    config = _load(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = _parse_grid(args.grid)
    path = out / f"sweep_{args.parameter}.csv"
    text = sweep(config, args.parameter, grid, out_path=path, threads=args.threads)
    bad = sum(1 for line in text.splitlines()[1:] if not line.endswith(",ok"))
    print(f"sweep: {len(grid)} points -> {path} ({bad} failed)")
    return 0 if bad == 0 else 1


def _cmd_pulse_design(args):
    scheme = Scheme(args.scheme)
    b_rate = BOHR_MAGNETON * args.b_field / const.hbar
    seq = build_pulse_sequence(
        scheme,
        nu=2.0 * math.pi * args.nu_hz,
        n_periods=args.periods,
        delta_1=2.0 * math.pi * args.delta_d1_hz,
        delta_2=2.0 * math.pi * args.delta_d2_hz,
        b_rate=b_rate,
    )
    report = verify_conditions(seq)
    out = Path(args.out or "pulse")
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t_start,duration,line,polarization,detuning_Hz,intensity_rel,ratio_branch"]
    for seg in seq.segments:
        lines.append(
            ",".join(
                [
                    f"{seg.start:.17g}",
                    f"{seg.duration:.17g}",
                    seg.line.value,
                    seg.polarization.value,
                    f"{seg.detuning / (2 * math.pi):.17g}",
                    f"{seg.peak_intensity:.17g}",
                    seg.ratio_branch,
                ]
            )
        )
    (out / "pulse_sequence.csv").write_text("\n".join(lines) + "\n")
    worst = max(report.opposition_residual, *report.mean_residual.values())
    print(
        f"pulse-design: {len(seq.segments)} segments, opposition residual "
        f"{report.opposition_residual:.2e}, mean residuals "
        f"{report.mean_residual['0']:.2e}/{report.mean_residual['1']:.2e}"
    )
    return 0 if worst < 1e-8 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="penninggate", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="key = value experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)

    common(sub.add_parser("equilibrium", help="solve the crystal equilibrium"))
    common(sub.add_parser("modes", help="equilibrium plus normal-mode spectrum"))
    common(sub.add_parser("gate", help="full gate pipeline with fidelity sweep"))
    p_sweep = sub.add_parser("sweep", help="sweep one parameter")
    common(p_sweep)
    p_sweep.add_argument("--parameter", required=True,
                         choices=("p_theta", "T", "nu", "tau_g"))
    p_sweep.add_argument("--grid", required=True,
                         help="comma list, lo:hi:n, or log:lo:hi:n")

    p_pulse = sub.add_parser("pulse-design", help="state-dependent force pulse train")
    p_pulse.add_argument("--scheme", required=True,
                         choices=[s.value for s in Scheme])
    p_pulse.add_argument("--nu-hz", type=float, required=True)
    p_pulse.add_argument("--periods", type=int, default=8)
    p_pulse.add_argument("--delta-d1-hz", type=float, required=True)
    p_pulse.add_argument("--delta-d2-hz", type=float, required=True)
    p_pulse.add_argument("--b-field", type=float, required=True, help="tesla")
    p_pulse.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.verb == "equilibrium":
            return _cmd_equilibrium(args)
        if args.verb == "modes":
            return _cmd_modes(args)
        if args.verb == "gate":
            return _cmd_gate(args)
        if args.verb == "sweep":
            return _cmd_sweep(args)
        if args.verb == "pulse-design":
            return _cmd_pulse_design(args)
    except (StageError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
