"""Command-line front end.

Four subcommands bind configuration, simulation, analysis and oracle
comparison into reproducible runs:

    homsim simulate --config paper.cfg --out run1
    homsim analyze run1/tags.htag --mode phase-histogram --out run1/phase
    homsim compare run1/phase/phase_hist_counts.dat --delay 0.7075
    homsim figures 2b --out figs

Every command writes a ``manifest.json`` into its output directory
recording the exact configuration, seed, command line, and input/output
paths.  Data outputs are deterministic for a fixed config and seed; the
CLI emits plot-ready delimited text plus a gnuplot script stub instead
of rendered images.

Exit codes: 0 success, 1 failed oracle comparison, 2 configuration
error, 3 data error, 4 analysis error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    G2Curve,
    expected_phase_profile,
    g2_pol_ideal,
    read_curve,
    write_curve,
)
from .config import RunSetup, config_as_dict, default_setup, load_config
from .errors import AnalysisError, ConfigurationError, DataError, HomsimError
from .mcsim import Channel, apply_detector_imperfections, generate_tags
from .model import EnvelopeSet, PolarizationAxis, envelope, eval_triangle_wave
from .tagio import read_tags, write_tags
from .tagproc import (
    dip_curve,
    find_coincidences,
    fit_triangle,
    fit_voigt_dip,
    phase_histogram,
    visibility_scan,
    write_summary,
)

EXIT_OK = 0
EXIT_COMPARISON = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ANALYSIS = 4

_ENV_OUT = "HOMSIM_OUT"


# ---------------------------------------------------------------------------
# helpers

def _default_out() -> str:
    return os.environ.get(_ENV_OUT, "homsim-out")


def _resolve_setup(args) -> RunSetup:
    setup = load_config(args.config) if args.config else default_setup()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "delay", None) is not None:
        overrides["tau_opt"] = args.delay
    if getattr(args, "duration", None) is not None:
        overrides["duration"] = args.duration * 1e9  # CLI flag is in seconds
    if getattr(args, "window", None) is not None:
        overrides["t_coin"] = args.window
    if getattr(args, "bin", None) is not None:
        overrides["bin_width"] = args.bin
    if overrides:
        setup = setup.replace_experiment(**overrides)
    # Modulation overrides require rebuilding the envelope set.
    duty = getattr(args, "duty", None)
    edge = getattr(args, "edge_time", None)
    waveform = getattr(args, "waveform", None)
    if duty is not None or edge is not None or waveform is not None:
        env = setup.envelopes
        cur_wave = "square" if env.modulated else "none"
        cur_duty = env.base.duty if env.modulated else 0.5
        cur_edge = env.base.edge_time if env.modulated else 0.0
        from .config import _build_envelopes

        new_env = _build_envelopes(
            waveform if waveform is not None else cur_wave,
            setup.experiment.t_mod,
            setup.experiment.tau_opt,
            duty if duty is not None else cur_duty,
            env.duty2,
            edge if edge is not None else cur_edge,
        )
        setup = RunSetup(setup.experiment, setup.coherence, new_env)
    return setup


def _write_manifest(out_dir: Path, name: str, command: list[str], setup: RunSetup | None,
                    seed, inputs: list[str], outputs: list[str], wall_s: float,
                    extra: dict | None = None) -> Path:
    manifest = {
        "artifact": f"homsim {__version__}",
        "command": command,
        "seed": seed,
        "config": config_as_dict(setup) if setup is not None else None,
        "inputs": inputs,
        "outputs": outputs,
        "wall_clock_s": round(wall_s, 3),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / name
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _find_manifest(tag_path: Path) -> dict | None:
    for cand in (tag_path.with_suffix(".manifest.json"), tag_path.parent / "manifest.json"):
        if cand.exists():
            try:
                return json.loads(cand.read_text())
            except (OSError, json.JSONDecodeError):
                return None
    return None


def _oracle_envelope(stream, args, manifest: dict | None) -> EnvelopeSet:
    """Envelope parameters for oracle curves: flags > manifest > header.

    Delay and edge-time flags are given against the requested modulation
    period; they are rescaled onto the realized (tick-snapped) clock.
    """
    t_mod = stream.t_mod  # realized (snapped) period
    duty = getattr(args, "duty", None)
    edge = getattr(args, "edge_time", None)
    delay = getattr(args, "delay", None)
    waveform = "square"
    requested = stream.config.t_mod if stream.config else t_mod
    if manifest and manifest.get("config"):
        mod = manifest["config"].get("modulation", {})
        exp = manifest["config"].get("experiment", {})
        if duty is None:
            duty = mod.get("duty")
        if edge is None:
            edge = mod.get("edge_time_ns")
        waveform = mod.get("waveform", "square")
        requested = exp.get("t_mod_ns", requested)
    scale = t_mod / requested
    if delay is not None:
        delay = delay * scale
    elif manifest and manifest.get("realized"):
        delay = manifest["realized"].get("tau_opt_ns")
    if delay is None:
        delay = stream.tau_opt
    if waveform == "none":
        return EnvelopeSet.cw(tau_opt=delay)
    return EnvelopeSet.ideal(
        t_mod, tau_opt=delay,
        duty=0.5 if duty is None else duty,
        edge_time=0.0 if edge is None else edge * scale,
    )


def _gnuplot_stub(out_dir: Path, lines: list[str]) -> None:
    body = ["# gnuplot script stub; run: gnuplot -p plot.gp", 'set style data histeps']
    body += lines
    (out_dir / "plot.gp").write_text("\n".join(body) + "\n")


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    t_start = time.monotonic()
    setup = _resolve_setup(args)
    cfg = setup.experiment
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    warning = cfg.validate_duration()
    if warning:
        print(f"warning: {warning}", file=sys.stderr)

    stream = generate_tags(cfg, setup.coherence, setup.envelopes)
    if cfg.dead_time > 0 or cfg.jitter_sigma > 0:
        stream = apply_detector_imperfections(
            stream, cfg.dead_time, cfg.jitter_sigma, seed=cfg.rng_seed + 1
        )

    tag_path = out_dir / (args.name + ".htag")
    write_tags(stream, tag_path)

    n3 = int(np.count_nonzero(stream.channels == int(Channel.DET3)))
    n4 = int(np.count_nonzero(stream.channels == int(Channel.DET4)))
    n_trig = len(stream) - n3 - n4
    dur_s = cfg.duration / 1e9
    rate3 = n3 / dur_s if dur_s > 0 else 0.0
    rate4 = n4 / dur_s if dur_s > 0 else 0.0

    _write_manifest(
        out_dir, args.name + ".manifest.json", sys.argv[1:], setup, cfg.rng_seed,
        inputs=[str(args.config)] if args.config else [],
        outputs=[str(tag_path)],
        wall_s=time.monotonic() - t_start,
        extra={
            "realized": {
                "t_mod_ns": cfg.t_mod_snapped,
                "tau_opt_ns": stream.tau_opt,
                "records": len(stream),
            }
        },
    )

    print(f"wrote {tag_path} ({len(stream)} records)")
    print(f"  duration {dur_s:g} s, modulation period {cfg.t_mod_snapped:g} ns "
          f"({cfg.t_mod_ticks} ticks), optical delay {stream.tau_opt:g} ns")
    print(f"  singles: DET3 {n3} ({rate3:,.0f}/s), DET4 {n4} ({rate4:,.0f}/s), "
          f"triggers {n_trig}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze

def _analyze_phase(stream, args, out_dir: Path, manifest) -> dict:
    coins = find_coincidences(stream, args.window or _window_default(stream),
                              all_pairs=args.all_pairs)
    hist = phase_histogram(coins, stream, bin_width=args.bin, periods=args.periods)

    env = _oracle_envelope(stream, args, manifest)
    window_ticks = int(round((args.window or _window_default(stream)) / stream.tick))
    oracle = expected_phase_profile(
        env, stream.tick, stream.t_mod_ticks, window_ticks,
        max(1, int(round(hist.bin_width / stream.tick))), periods=args.periods,
    )

    counts_curve = hist.curve()
    counts_curve.meta["window_ns"] = window_ticks * stream.tick
    counts_curve.meta["tau_opt_ns"] = stream.tau_opt
    counts_curve.meta["t_mod_requested_ns"] = (
        manifest["config"]["experiment"]["t_mod_ns"]
        if manifest and manifest.get("config") else stream.t_mod
    )
    counts_path = out_dir / "phase_hist_counts.dat"
    write_curve(counts_curve, counts_path)

    total_profile = float(oracle["profile"].sum())
    scale = hist.counts.sum() / total_profile if total_profile > 0 else 1.0
    ref = scale * oracle["reference"]
    with np.errstate(divide="ignore", invalid="ignore"):
        norm_y = np.where(ref > 0, hist.counts / np.where(ref > 0, ref, 1.0), 0.0)
        norm_err = np.where(ref > 0, np.sqrt(np.maximum(hist.counts, 1)) / np.where(ref > 0, ref, 1.0), 0.0)
    norm_meta = dict(counts_curve.meta)
    norm_meta["normalized"] = "yes"
    norm_curve = G2Curve(kind="t0", x=hist.centers(), y=norm_y, yerr=norm_err,
                         meta=norm_meta)
    norm_path = out_dir / "phase_hist_normalized.dat"
    write_curve(norm_curve, norm_path)

    oracle_curve = G2Curve(kind="t0", x=oracle["centers"], y=oracle["normalized"],
                           meta={"t_mod_ns": stream.t_mod, "periods": args.periods})
    oracle_path = out_dir / "phase_oracle.dat"
    write_curve(oracle_curve, oracle_path)

    _gnuplot_stub(out_dir, [
        f"plot 'phase_hist_normalized.dat' u 1:2:3 w yerrorbars t 'MC', \\",
        f"     'phase_oracle.dat' u 1:2 w lines t 'model'",
    ])
    return {
        "mode": "phase-histogram",
        "coincidences": len(coins),
        "skipped": hist.skipped,
        "window_ns": window_ticks * stream.tick,
        "bin_ns": hist.bin_width,
        "periods": args.periods,
        "outputs": [str(counts_path), str(norm_path), str(oracle_path)],
    }


def _window_default(stream) -> float:
    return stream.config.t_coin if stream.config else 4 * stream.tick


def _analyze_dip(stream, args, out_dir: Path, setup: RunSetup | None) -> dict:
    tau_coh = setup.coherence.tau_coh if setup else None
    span = args.tau_span if args.tau_span else (4.0 * tau_coh if tau_coh else 200 * stream.tick)
    bin_w = args.bin if args.bin else max(stream.tick, span / 200.0)
    curve = dip_curve(stream, tau_span=span, bin_width=bin_w,
                      t_coin=args.window or _window_default(stream))
    path = out_dir / "dip_curve.dat"
    write_curve(curve, path)
    fit = fit_voigt_dip(curve)
    _gnuplot_stub(out_dir, ["plot 'dip_curve.dat' u 1:2:3 w yerrorbars t 'MC dip'"])
    payload = {
        "mode": "dip",
        "outputs": [str(path)],
        "pairs": curve.meta.get("pairs"),
        "coincidences": curve.meta.get("coincidences"),
        "fit": {
            "model": fit.model,
            "converged": fit.converged,
            "params": fit.params,
            "uncertainties": fit.uncertainties,
            "chi2_per_dof": fit.chi2_per_dof,
        },
    }
    if fit.converged:
        print(f"dip fit: visibility {fit.params['visibility']:.4f} "
              f"+- {fit.uncertainties['visibility']:.4f}, "
              f"tau_coh {fit.params['tau_coh']:.4g} "
              f"+- {fit.uncertainties['tau_coh']:.2g} ns")
    return payload


def _analyze_scan(scan_dir: Path, args, out_dir: Path, setup: RunSetup | None) -> dict:
    tag_files = sorted(scan_dir.glob("*.htag"))
    if len(tag_files) < 8:
        raise AnalysisError(f"scan directory {scan_dir} holds {len(tag_files)} tag files; need >= 8")
    curves = {}
    t_mod = None
    for tf in tag_files:
        stream = read_tags(tf)
        t_mod = stream.t_mod
        manifest = _find_manifest(tf)
        delay = stream.tau_opt
        if manifest and manifest.get("scan_delay_ns") is not None:
            delay = float(manifest["scan_delay_ns"])
        tau_coh = setup.coherence.tau_coh if setup else None
        span = args.tau_span if args.tau_span else (4.0 * tau_coh if tau_coh else 200 * stream.tick)
        bin_w = args.bin if args.bin else max(stream.tick, span / 200.0)
        curves[delay] = dip_curve(stream, tau_span=span, bin_width=bin_w)
    scan = visibility_scan(curves, method="fit", t_mod=t_mod)
    scan_path = out_dir / "visibility_scan.dat"
    write_curve(scan, scan_path)
    fit = fit_triangle(scan)
    _gnuplot_stub(out_dir, ["plot 'visibility_scan.dat' u 1:2:3 w yerrorbars t 'visibility'"])
    payload = {
        "mode": "scan",
        "outputs": [str(scan_path)],
        "delays_ns": sorted(curves),
        "fit": {
            "model": fit.model,
            "converged": fit.converged,
            "params": fit.params,
            "uncertainties": fit.uncertainties,
            "chi2_per_dof": fit.chi2_per_dof,
        },
    }
    if fit.converged:
        print(f"triangle fit: period {fit.params['period']:.4g} "
              f"+- {fit.uncertainties['period']:.2g} ns, offset "
              f"{fit.params['offset']:.4g} +- {fit.uncertainties['offset']:.2g} ns")
    return payload


def cmd_analyze(args) -> int:
    t_start = time.monotonic()
    target = Path(args.target)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    setup = load_config(args.config) if args.config else None

    if args.mode == "scan":
        if not target.is_dir():
            raise DataError(f"scan mode expects a directory of tag files, got {target}")
        payload = _analyze_scan(target, args, out_dir, setup)
        stream_seed = None
    else:
        stream = read_tags(target)
        manifest = _find_manifest(target)
        stream_seed = stream.seed
        if args.mode == "phase-histogram":
            payload = _analyze_phase(stream, args, out_dir, manifest)
        elif args.mode == "dip":
            payload = _analyze_dip(stream, args, out_dir, setup)
        else:
            raise ConfigurationError(f"unknown analyze mode {args.mode!r}")

    payload["input"] = str(target)
    if args.json_summary:
        write_summary(out_dir / "summary.json", payload)
    _write_manifest(out_dir, "manifest.json", sys.argv[1:], setup, stream_seed,
                    inputs=[str(target)], outputs=payload.get("outputs", []),
                    wall_s=time.monotonic() - t_start)
    print(f"analysis written to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare

def _compare_curve(curve: G2Curve, args, setup: RunSetup | None) -> dict:
    if len(curve) == 0:
        raise AnalysisError("cannot compare an empty curve")

    if curve.kind == "t0":
        if curve.meta.get("normalized") == "yes":
            raise DataError("compare expects the raw counts curve, not the normalized one")
        t_mod = curve.meta.get("t_mod_ns")
        tick = curve.meta.get("tick_ns")
        periods = int(curve.meta.get("periods", 1))
        if not t_mod or not tick:
            raise DataError("curve metadata lacks t_mod_ns/tick_ns; cannot build oracle")
        if curve.x.max() > periods * t_mod + curve.meta.get("bin_ns", tick):
            raise DataError("curve abscissa extends beyond the declared fold range")
        scale = t_mod / curve.meta.get("t_mod_requested_ns", t_mod)
        if args.delay is not None:
            delay = args.delay * scale
        else:
            delay = curve.meta.get("tau_opt_ns", 0.0)
        env = EnvelopeSet.ideal(
            t_mod,
            tau_opt=delay,
            duty=args.duty if args.duty is not None else 0.5,
            edge_time=(args.edge_time * scale) if args.edge_time is not None else 0.0,
        )
        window_ticks = int(round(curve.meta.get("window_ns", 4 * tick) / tick))
        bin_ticks = max(1, int(round(curve.meta.get("bin_ns", 2 * tick) / tick)))
        oracle = expected_phase_profile(env, tick, int(round(t_mod / tick)),
                                        window_ticks, bin_ticks, periods=periods)
        if len(oracle["profile"]) != len(curve):
            raise DataError(
                f"oracle has {len(oracle['profile'])} bins but curve has {len(curve)}; "
                "incompatible abscissae"
            )
        counts = curve.y  # raw counts curve from analyze
        total = counts.sum()
        profile = oracle["profile"]
        if profile.sum() <= 0 or total <= 0:
            raise AnalysisError("cannot scale oracle to zero-count data")
        expected = total * profile / profile.sum()
        z = (counts - expected) / np.sqrt(np.maximum(expected, 1e-12))
        label = f"phase histogram vs window-aware square-envelope model (delay {delay:g} ns)"
    elif curve.kind == "tau":
        from .model import CoherenceSpec
        from .analytic import g2_cw

        tau_coh = args.tau_coh or (setup.coherence.tau_coh if setup else None)
        if not tau_coh:
            raise ConfigurationError("compare on a dip curve needs --tau-coh or --config")
        oracle_y = g2_cw(curve.x, CoherenceSpec(tau_coh=tau_coh))
        err = curve.yerr if curve.yerr is not None else np.full_like(curve.y, np.nan)
        if np.any(~np.isfinite(err)) or np.any(err <= 0):
            raise AnalysisError("dip comparison needs per-bin uncertainties")
        z = (curve.y - oracle_y) / err
        label = f"dip curve vs CW model (tau_coh {tau_coh:g} ns)"
    elif curve.kind == "tau_opt":
        t_mod = args.t_mod or (setup.experiment.t_mod if setup else None)
        if not t_mod:
            raise ConfigurationError("compare on a scan needs --t-mod or --config")
        offset = args.offset or 0.0
        oracle_y = 0.5 * eval_triangle_wave(t_mod, curve.x - offset)
        err = curve.yerr if curve.yerr is not None else np.full_like(curve.y, np.nan)
        if np.any(~np.isfinite(err)) or np.any(err <= 0):
            raise AnalysisError("scan comparison needs per-point uncertainties")
        z = (curve.y - oracle_y) / err
        label = f"visibility scan vs ideal triangle (period {t_mod:g} ns)"
    else:
        raise DataError(f"unknown curve kind {curve.kind!r}")

    chi2_dof = float(np.mean(z**2))
    max_z = float(np.max(np.abs(z)))
    passed = bool(max_z <= 3.0)
    return {
        "oracle": label,
        "n_bins": len(curve),
        "chi2_per_dof": chi2_dof,
        "max_abs_z": max_z,
        "pass": passed,
        "z_scores": z.tolist(),
    }


def cmd_compare(args) -> int:
    t_start = time.monotonic()
    curve = read_curve(args.curve)
    setup = load_config(args.config) if args.config else None
    report = _compare_curve(curve, args, setup)

    verdict = "PASS" if report["pass"] else "FAIL"
    print(f"{verdict}: {report['oracle']}")
    print(f"  bins {report['n_bins']}, chi2/dof {report['chi2_per_dof']:.3f}, "
          f"max |z| {report['max_abs_z']:.2f} (threshold 3.0)")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.json_summary:
            write_summary(out_dir / "compare_report.json", report)
        _write_manifest(out_dir, "manifest.json", sys.argv[1:], setup, None,
                        inputs=[str(args.curve)], outputs=["compare_report.json"],
                        wall_s=time.monotonic() - t_start)
    return EXIT_OK if report["pass"] else EXIT_COMPARISON


# ---------------------------------------------------------------------------
# figures

def _fig_delays(t_mod: float) -> dict[str, float]:
    return {"zero": 0.0, "quarter": t_mod / 4.0, "half": t_mod / 2.0}


def _figures_1b(setup: RunSetup, out_dir: Path) -> list[str]:
    t_mod = setup.experiment.t_mod
    outputs = []
    t = np.linspace(0.0, 2.0 * t_mod, 1025)
    for name, delay in _fig_delays(t_mod).items():
        env = EnvelopeSet.ideal(t_mod, tau_opt=delay)
        z1 = envelope(env, PolarizationAxis.H, 1, t)
        z2 = envelope(env, PolarizationAxis.H, 2, t)
        np.savetxt(out_dir / f"envelopes_{name}.dat",
                   np.column_stack([t, z1, z2]),
                   header=f"H envelopes, optical delay {delay:g} ns: t_ns zeta_H1 zeta_H2")
        curve = G2Curve(kind="t0", x=t, y=g2_pol_ideal(t, delay, t_mod),
                        meta={"t_mod_ns": t_mod, "tau_opt_ns": delay})
        path = out_dir / f"coincidences_{name}.dat"
        write_curve(curve, path)
        outputs += [f"envelopes_{name}.dat", f"coincidences_{name}.dat"]
    _gnuplot_stub(out_dir, [
        "plot 'coincidences_zero.dat' u 1:2 w lines t 'delay 0', \\",
        "     'coincidences_quarter.dat' u 1:2 w lines t 'delay T/4', \\",
        "     'coincidences_half.dat' u 1:2 w lines t 'delay T/2'",
    ])
    return outputs


def _simulate_to(setup: RunSetup, out_dir: Path, name: str, scan_delay: float | None = None):
    cfg = setup.experiment
    stream = generate_tags(cfg, setup.coherence, setup.envelopes)
    tag_path = out_dir / f"{name}.htag"
    write_tags(stream, tag_path)
    extra = {"realized": {"t_mod_ns": cfg.t_mod_snapped, "tau_opt_ns": stream.tau_opt}}
    if scan_delay is not None:
        extra["scan_delay_ns"] = scan_delay
    _write_manifest(out_dir, f"{name}.manifest.json", sys.argv[1:], setup, cfg.rng_seed,
                    inputs=[], outputs=[str(tag_path)], wall_s=0.0, extra=extra)
    return stream


def _figures_2b(setup: RunSetup, out_dir: Path, args) -> list[str]:
    outputs = []
    cfg = setup.experiment
    for i, (name, delay) in enumerate(_fig_delays(cfg.t_mod).items()):
        case = setup.replace_experiment(tau_opt=delay, rng_seed=cfg.rng_seed + i)
        stream = _simulate_to(case, out_dir, f"tags_{name}")
        sub = argparse.Namespace(
            window=None, all_pairs=False, bin=None, periods=2,
            delay=None, duty=None, edge_time=None,
        )
        _analyze_phase(stream, sub, out_dir, {"config": config_as_dict(case)})
        for src in ("phase_hist_counts.dat", "phase_hist_normalized.dat", "phase_oracle.dat"):
            dst = f"{name}_{src}"
            (out_dir / src).rename(out_dir / dst)
            outputs.append(dst)
    _gnuplot_stub(out_dir, [
        "plot 'zero_phase_hist_normalized.dat' u 1:2:3 w yerrorbars t 'delay 0', \\",
        "     'quarter_phase_hist_normalized.dat' u 1:2:3 w yerrorbars t 'delay T/4', \\",
        "     'half_phase_hist_normalized.dat' u 1:2:3 w yerrorbars t 'delay T/2', \\",
        "     'quarter_phase_oracle.dat' u 1:2 w lines t 'model T/4'",
    ])
    return outputs


def _figures_3(setup: RunSetup, out_dir: Path, args) -> list[str]:
    cfg = setup.experiment
    inherent_offset = 0.85  # built-in path mismatch reproduced by the scan
    n_delays = 18
    nominal = np.linspace(0.0, 7.14, n_delays)
    outputs = []
    curves = {}
    for i, x in enumerate(nominal):
        case = setup.replace_experiment(tau_opt=float(x + inherent_offset),
                                        rng_seed=cfg.rng_seed + i)
        stream = _simulate_to(case, out_dir, f"tags_{i:02d}", scan_delay=float(x))
        span = 4.0 * setup.coherence.tau_coh
        curve = dip_curve(stream, tau_span=span, bin_width=span / 200.0)
        path = out_dir / f"dip_{i:02d}.dat"
        write_curve(curve, path)
        outputs.append(path.name)
        curves[float(x)] = curve
    scan = visibility_scan(curves, method="fit", t_mod=cfg.t_mod)
    write_curve(scan, out_dir / "visibility_scan.dat")
    outputs.append("visibility_scan.dat")
    fit = fit_triangle(scan)
    write_summary(out_dir / "triangle_fit.json", {
        "converged": fit.converged,
        "params": fit.params,
        "uncertainties": fit.uncertainties,
        "chi2_per_dof": fit.chi2_per_dof,
        "inherent_offset_ns": inherent_offset,
        "note": "offset parameter reports the nominal delay of maximum visibility; "
                "the built-in path mismatch shifts it by -0.85 ns (mod period)",
    })
    outputs.append("triangle_fit.json")
    if fit.converged:
        print(f"figure 3 triangle fit: period {fit.params['period']:.4g} "
              f"+- {fit.uncertainties['period']:.2g} ns")
    _gnuplot_stub(out_dir, ["plot 'visibility_scan.dat' u 1:2:3 w yerrorbars t 'visibility'"])
    return outputs


def _figures_4(setup: RunSetup, out_dir: Path, args) -> list[str]:
    cfg = setup.experiment
    outputs = []
    for name, delay in (("half", cfg.t_mod / 2.0), ("zero", 0.0)):
        case = RunSetup(
            replace(cfg, tau_opt=delay, rng_seed=cfg.rng_seed + (0 if name == "half" else 1)),
            setup.coherence,
            EnvelopeSet.ideal(cfg.t_mod, tau_opt=delay, duty=0.7),
        )
        stream = _simulate_to(case, out_dir, f"tags_{name}")
        sub = argparse.Namespace(window=None, all_pairs=False, bin=None, periods=2,
                                 delay=None, duty=0.7, edge_time=None)
        _analyze_phase(stream, sub, out_dir, {"config": config_as_dict(case)})
        for src in ("phase_hist_counts.dat", "phase_hist_normalized.dat", "phase_oracle.dat"):
            dst = f"duty07_{name}_{src}"
            (out_dir / src).rename(out_dir / dst)
            outputs.append(dst)
    _gnuplot_stub(out_dir, [
        "plot 'duty07_half_phase_hist_normalized.dat' u 1:2:3 w yerrorbars t 'duty 0.7, delay T/2', \\",
        "     'duty07_half_phase_oracle.dat' u 1:2 w lines t 'model', \\",
        "     'duty07_zero_phase_hist_normalized.dat' u 1:2:3 w yerrorbars t 'duty 0.7, delay 0'",
    ])
    return outputs


def cmd_figures(args) -> int:
    t_start = time.monotonic()
    setup = load_config(args.config) if args.config else default_setup()
    if args.seed is not None:
        setup = setup.replace_experiment(rng_seed=args.seed)
    if args.duration is not None:
        setup = setup.replace_experiment(duration=args.duration * 1e9)
    elif args.config is None and args.figure in ("2b", "3", "4"):
        setup = setup.replace_experiment(duration=2.0e9)  # desk-scale default

    out_dir = Path(args.out) / f"fig{args.figure}"
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.figure == "1b":
        outputs = _figures_1b(setup, out_dir)
    elif args.figure == "2b":
        outputs = _figures_2b(setup, out_dir, args)
    elif args.figure == "3":
        outputs = _figures_3(setup, out_dir, args)
    elif args.figure == "4":
        outputs = _figures_4(setup, out_dir, args)
    else:
        raise ConfigurationError(f"unknown figure id {args.figure!r}")

    _write_manifest(out_dir, "manifest.json", sys.argv[1:], setup,
                    setup.experiment.rng_seed, inputs=[], outputs=outputs,
                    wall_s=time.monotonic() - t_start)
    print(f"figure {args.figure} data written to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homsim",
        description="Simulate and analyze structured HOM interference of "
                    "polarization-modulated CW laser light.",
    )
    parser.add_argument("--version", action="version", version=f"homsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a time-tag stream")
    sim.add_argument("--config", help="config file (defaults to built-in values)")
    sim.add_argument("--seed", type=int, help="override rng seed")
    sim.add_argument("--out", default=_default_out(), help="output directory")
    sim.add_argument("--name", default="tags", help="output file stem")
    sim.add_argument("--delay", type=float, help="optical delay in ns")
    sim.add_argument("--duty", type=float, help="modulator duty cycle")
    sim.add_argument("--edge-time", dest="edge_time", type=float, help="rise/fall time in ns")
    sim.add_argument("--waveform", choices=["square", "none"], help="modulation waveform")
    sim.add_argument("--duration", type=float, help="simulated time in seconds")
    sim.add_argument("--window", type=float, help="coincidence window in ns")
    sim.add_argument("--bin", type=float, help="histogram bin in ns")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="analyze a tag stream or sweep directory")
    ana.add_argument("target", help="tag file, or directory of tag files for scan mode")
    ana.add_argument("--mode", required=True, choices=["phase-histogram", "dip", "scan"])
    ana.add_argument("--config", help="config file for physics defaults (tau_coh)")
    ana.add_argument("--out", default=_default_out(), help="output directory")
    ana.add_argument("--bin", type=float, help="histogram bin in ns")
    ana.add_argument("--window", type=float, help="coincidence window in ns")
    ana.add_argument("--periods", type=int, default=1, help="fold length in modulation periods")
    ana.add_argument("--tau-span", dest="tau_span", type=float,
                     help="dip histogram half-span in ns")
    ana.add_argument("--delay", type=float, help="oracle optical delay in ns")
    ana.add_argument("--duty", type=float, help="oracle duty cycle")
    ana.add_argument("--edge-time", dest="edge_time", type=float, help="oracle edge time in ns")
    ana.add_argument("--all-pairs", dest="all_pairs", action="store_true",
                     help="use all-pairs coincidence counting (sensitivity check)")
    ana.add_argument("--json-summary", dest="json_summary", action="store_true")
    ana.set_defaults(func=cmd_analyze)

    cmp_ = sub.add_parser("compare", help="compare a curve file against the analytic oracle")
    cmp_.add_argument("curve", help="curve file produced by analyze")
    cmp_.add_argument("--config", help="config file for oracle parameters")
    cmp_.add_argument("--delay", type=float, help="oracle optical delay in ns")
    cmp_.add_argument("--duty", type=float, help="oracle duty cycle")
    cmp_.add_argument("--edge-time", dest="edge_time", type=float, help="oracle edge time in ns")
    cmp_.add_argument("--tau-coh", dest="tau_coh", type=float, help="oracle coherence time in ns")
    cmp_.add_argument("--t-mod", dest="t_mod", type=float, help="oracle modulation period in ns")
    cmp_.add_argument("--offset", type=float, help="oracle delay offset in ns (scan kind)")
    cmp_.add_argument("--out", help="optional report directory")
    cmp_.add_argument("--json-summary", dest="json_summary", action="store_true")
    cmp_.set_defaults(func=cmd_compare)

    fig = sub.add_parser("figures", help="regenerate reference figure data bundles")
    fig.add_argument("figure", choices=["1b", "2b", "3", "4"])
    fig.add_argument("--config", help="config file (defaults to built-in values)")
    fig.add_argument("--seed", type=int)
    fig.add_argument("--duration", type=float, help="simulated seconds per stream")
    fig.add_argument("--out", default=_default_out(), help="output directory")
    fig.set_defaults(func=cmd_figures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except AnalysisError as err:
        print(f"analysis error: {err}", file=sys.stderr)
        return EXIT_ANALYSIS
    except HomsimError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
