"""Orchestration, persistence, config handling, and determinism."""

from pathlib import Path

import numpy as np
import pytest

from penninggate import (
    ExperimentConfig,
    StageError,
    load_state,
    newton_refine,
    parse_config,
    run_experiment,
    save_state,
    select_pair,
    sweep,
)
from penninggate.bench import config_lines, resolve_carrier


def small_config(tmp_path, **overrides):
    base = dict(
        species="Be+",
        nu_c_hz=7.608e6,
        alpha_z=0.02,
        n_ions=6,
        p_theta=5000.0,
        tau_ratio=0.006,
        temperatures_k=(1e-4, 1e-3, 1e-2),
        anneal_cycles=6,
        anneal_steps=600,
        seed=4,
        out_dir=str(tmp_path / "out"),
    )
    base.update(overrides)
    return ExperimentConfig(**base).validate()


def test_config_round_trip(tmp_path):
    config = small_config(tmp_path)
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(config_lines(config)) + "\n")
    parsed = parse_config(path)
    assert parsed == config


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("species = Be+\nwibble = 3\n")
    with pytest.raises(ValueError, match="bad.cfg:2"):
        parse_config(path)


def test_config_temperature_grid_validation(tmp_path):
    with pytest.raises(ValueError, match="temperature grid"):
        small_config(tmp_path, temperatures_k=(1e-3, 1e-4))


def test_state_round_trip_bit_exact(eq_low_p4000, tmp_path):
    path = tmp_path / "eq.txt"
    save_state(eq_low_p4000, path)
    loaded = load_state(path)
    np.testing.assert_array_equal(loaded.positions, eq_low_p4000.positions)
    assert loaded.rotation_frequency == eq_low_p4000.rotation_frequency
    assert loaded.angular_momentum == eq_low_p4000.angular_momentum
    assert loaded.energy == eq_low_p4000.energy
    assert loaded.converged
    # second round trip is byte-identical
    path2 = tmp_path / "eq2.txt"
    save_state(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_truncated_file_reports_line(eq_low_p4000, tmp_path):
    path = tmp_path / "eq.txt"
    save_state(eq_low_p4000, path)
    lines = path.read_text().splitlines()
    (tmp_path / "cut.txt").write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ValueError, match="position rows"):
        load_state(tmp_path / "cut.txt")
    garbled = lines[:]
    garbled[7] = "0.1 0.2"
    (tmp_path / "bad.txt").write_text("\n".join(garbled) + "\n")
    with pytest.raises(ValueError, match="bad.txt:8"):
        load_state(tmp_path / "bad.txt")


def test_load_then_refine_takes_no_steps(eq_low_p4000, tmp_path):
    path = tmp_path / "eq.txt"
    save_state(eq_low_p4000, path)
    loaded = load_state(path)
    again = newton_refine(loaded)
    assert again.refine_iterations == 0
    np.testing.assert_array_equal(again.positions, loaded.positions)


def test_select_pair_rules(eq_high):
    pair = select_pair(eq_high)
    radii = np.hypot(eq_high.positions[:, 0], eq_high.positions[:, 1])
    assert pair[0] == int(np.argmin(radii))
    assert select_pair(eq_high, "indices:3,5") == (3, 5)


def test_run_experiment_single_ion_fails_cleanly(tmp_path):
    config = small_config(tmp_path, n_ions=1, p_theta=0.0)
    with pytest.raises(StageError, match=r"\[gate\]"):
        run_experiment(config)
    out = Path(config.out_dir)
    assert (out / "equilibrium.txt").exists()
    assert (out / "spectrum.csv").exists()
    assert (out / "FAILED").read_text().startswith("gate:")


def test_run_experiment_deterministic(tmp_path):
    config_a = small_config(tmp_path, out_dir=str(tmp_path / "a"))
    config_b = small_config(tmp_path, out_dir=str(tmp_path / "b"))
    art_a = run_experiment(config_a)
    art_b = run_experiment(config_b)
    for name in ("equilibrium_file", "spectrum_file", "fidelity_file", "phase_file"):
        assert getattr(art_a, name).read_bytes() == getattr(art_b, name).read_bytes()


def test_sweep_single_point_matches_run(tmp_path):
    config = small_config(tmp_path)
    artifacts = run_experiment(config)
    text = sweep(config, "T", [config.temperatures_k[0]])
    line = text.splitlines()[1].split(",")
    assert float(line[0]) == config.temperatures_k[0]
    assert float(line[1]) == pytest.approx(artifacts.gate.fidelity_curve[0][1], rel=1e-12)


def test_sweep_thread_invariance(tmp_path, setup_low, eq_low_p0):
    config = small_config(
        tmp_path,
        nu_c_hz=76.08e3,
        alpha_z=0.7,
        n_ions=30,
        p_theta=0.0,
        anneal_cycles=None,
        anneal_steps=None,
        seed=7,
    )
    grid = [0.0, 1000.0, 4000.0]
    serial = sweep(config, "p_theta", grid, threads=1)
    parallel = sweep(config, "p_theta", grid, threads=4)
    assert serial == parallel
    rows = [line.split(",") for line in serial.splitlines()[1:]]
    assert all(row[-1] == "ok" for row in rows)
    values = [float(row[1]) for row in rows]
    assert values[0] == 0.5
    assert values[1] > values[2]


def test_sweep_records_per_point_failure(tmp_path):
    config = small_config(tmp_path)
    # a carrier resonant with a mode makes calibration blow up per point
    text = sweep(config, "nu", [-1.0, 1e6], threads=1)
    rows = text.splitlines()[1:]
    assert rows[0].endswith("error:ValueError")
    assert rows[1].endswith(",ok")


def test_sweep_rejects_bad_input(tmp_path):
    config = small_config(tmp_path)
    with pytest.raises(ValueError, match="unknown sweep parameter"):
        sweep(config, "voltage", [1.0])
    with pytest.raises(ValueError, match="empty sweep grid"):
        sweep(config, "T", [])


def test_manifest_reproduces_run(tmp_path):
    config = small_config(tmp_path, out_dir=str(tmp_path / "first"))
    artifacts = run_experiment(config)
    manifest = artifacts.manifest_file
    replay = parse_config(manifest)
    replay = replay.validate()
    rerun = run_experiment(replay, out_dir=str(tmp_path / "replay"))
    assert artifacts.fidelity_file.read_bytes() == rerun.fidelity_file.read_bytes()
    assert artifacts.equilibrium_file.read_bytes() == rerun.equilibrium_file.read_bytes()


def test_resolve_carrier_midgap(bands_high):
    nu = resolve_carrier(bands_high)
    lo, hi, *_ = max(bands_high.gaps, key=lambda g: g[1] - g[0])
    assert nu == pytest.approx(0.5 * (lo + hi), rel=1e-12)
    assert lo < nu < hi


def test_tau_ratio_sweep_monotone_curves_ordered_by_carrier(tmp_path, setup_low,
                                                            eq_low_p4000):
    # three gate-time ratios at the slow-rotation point: each infidelity
    # curve is monotone in T and the required carrier scales like 1/tau_g
    config = ExperimentConfig(
        species="Be+", nu_c_hz=76.08e3, alpha_z=0.7, n_ions=30, p_theta=4000.0,
        tau_ratio=0.1, temperatures_k=(1e-4, 1e-3, 1e-2), seed=7,
        out_dir=str(tmp_path),
    ).validate()
    text = sweep(config, "tau_g", [1e-1, 1e-2, 1e-3])
    rows = [line.split(",") for line in text.splitlines()[1:]]
    assert all(row[-1] == "ok" for row in rows)
    by_ratio = {}
    for row in rows:
        by_ratio.setdefault(float(row[0]), []).append((float(row[2]), float(row[4])))
    assert sorted(by_ratio) == [1e-3, 1e-2, 1e-1]
    carriers = {ratio: float(next(r[1] for r in rows if float(r[0]) == ratio))
                for ratio in by_ratio}
    assert carriers[1e-2] == pytest.approx(10 * carriers[1e-1], rel=1e-9)
    assert carriers[1e-3] == pytest.approx(100 * carriers[1e-1], rel=1e-9)
    for ratio, curve in by_ratio.items():
        curve.sort()
        infidelities = [i for _, i in curve]
        assert all(b >= a - 1e-15 for a, b in zip(infidelities, infidelities[1:]))


def test_cli_verbs(tmp_path):
    from penninggate.cli import main

    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "\n".join(
            [
                "species = Be+",
                "nu_c_hz = 7.608e6",
                "alpha_z = 0.02",
                "n_ions = 6",
                "p_theta = 5000",
                "tau_ratio = 0.006",
                "temperatures_k = 1e-4,1e-3",
                "anneal_cycles = 6",
                "anneal_steps = 600",
                "seed = 4",
                f"out_dir = {tmp_path / 'out'}",
            ]
        )
        + "\n"
    )
    assert main(["equilibrium", "--config", str(cfg)]) == 0
    assert main(["modes", "--config", str(cfg)]) == 0
    assert main(["gate", "--config", str(cfg)]) == 0
    assert main(["sweep", "--config", str(cfg), "--parameter", "T",
                 "--grid", "1e-4,1e-3"]) == 0
    assert main([
        "pulse-design", "--scheme", "same-sigma+", "--nu-hz", "1e6",
        "--periods", "4", "--delta-d1-hz=-3e10", "--delta-d2-hz", "4.5e10",
        "--b-field", "0.5", "--out", str(tmp_path / "pulse"),
    ]) == 0
    assert (tmp_path / "pulse" / "pulse_sequence.csv").exists()
    # a broken config exits nonzero
    bad = tmp_path / "bad.cfg"
    bad.write_text("species = Be+\n")
    assert main(["gate", "--config", str(bad)]) == 1
