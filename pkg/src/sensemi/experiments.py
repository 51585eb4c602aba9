"""Experiment driver: run one parsed spec, write results and a manifest.

Metric-style commands (metrics, validate, the sweeps, dof, tradeoff) emit
one row per grid point with the pinned column set

    param, smi_theory, smi_mc, smi_mc_stderr, smi_upper, smi_lower,
    elmmse_theory, elmmse_mc, elmmse_mc_stderr, elmmse_lower,
    ebcrb_logdet, ebcrb_trace

at 12 significant digits; `dof` rows carry nan in the Monte-Carlo columns
(nothing is sampled there) and report the ladder limit in the manifest.
Optimizer commands emit their trajectory as `iteration, objective, residual`
rows instead.  Every run also writes <output>.manifest.json recording the
resolved config, the seed, and per-command summary values; worker count is
deliberately not recorded since it cannot affect any output byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from .asymptotic import MetricReport, asymptotic_report, sensing_dof, smi_asymptotic
from .config import ExperimentSpec, dbm_to_watts, draw_angles
from .linalg import psd_sqrt
from .montecarlo import McEstimate, PerRealization
from .optimize import optimize_isac, optimize_sensing
from .scene import (
    STREAM_SIGNAL,
    CorrelationPair,
    SceneConfig,
    build_comm_channel,
    build_correlations,
    comm_mi,
    sample_signal,
    stream_rng,
)

CSV_HEADER = (
    "param",
    "smi_theory",
    "smi_mc",
    "smi_mc_stderr",
    "smi_upper",
    "smi_lower",
    "elmmse_theory",
    "elmmse_mc",
    "elmmse_mc_stderr",
    "elmmse_lower",
    "ebcrb_logdet",
    "ebcrb_trace",
)

TRAJECTORY_HEADER = ("iteration", "objective", "residual")


def _fused_chunk(args) -> tuple[int, np.ndarray]:
    scene, phi_factor, pair, lo, hi = args
    per = PerRealization(phi_factor, pair, scene.sigma2_s)
    out = np.empty((hi - lo, 2))
    for i, trial in enumerate(range(lo, hi)):
        s = sample_signal(scene, stream_rng(scene.seed, STREAM_SIGNAL, trial))
        out[i] = per.smi_and_lmmse(s)
    return lo, out


def _fused_mc(
    scene: SceneConfig,
    pair: CorrelationPair,
    phi_factor: np.ndarray,
    n_trials: int,
    threads: int,
) -> tuple[McEstimate, McEstimate]:
    """Joint Monte-Carlo estimate of (SMI, LMMSE trace) over probing draws.

    One probe draw and one eigendecomposition serve both metrics.  Trials
    fill a fixed trial-indexed array and are reduced once, so the result is
    byte-identical for every worker count.
    """
    values = np.empty((n_trials, 2))
    if threads <= 1:
        _, values[:] = _fused_chunk((scene, phi_factor, pair, 0, n_trials))
    else:
        chunk = max(1, math.ceil(n_trials / (4 * threads)))
        jobs = [
            (scene, phi_factor, pair, lo, min(lo + chunk, n_trials))
            for lo in range(0, n_trials, chunk)
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for lo, vals in pool.map(_fused_chunk, jobs):
                values[lo : lo + len(vals)] = vals
    out = []
    for col in range(2):
        mean = float(np.mean(values[:, col]))
        stderr = float(np.std(values[:, col], ddof=1) / math.sqrt(n_trials))
        out.append(
            McEstimate(mean=mean, stderr=stderr, n_trials=n_trials, seed=scene.seed)
        )
    return out[0], out[1]


def _metric_row(
    param: float,
    report: MetricReport,
    smi_mc: McEstimate | None,
    lmmse_mc: McEstimate | None,
) -> list[float]:
    nan = float("nan")
    return [
        float(param),
        report.smi,
        smi_mc.mean if smi_mc else nan,
        smi_mc.stderr if smi_mc else nan,
        report.smi_upper,
        report.smi_lower,
        report.elmmse,
        lmmse_mc.mean if lmmse_mc else nan,
        lmmse_mc.stderr if lmmse_mc else nan,
        report.elmmse_lower,
        report.ebcrb_logdet,
        report.ebcrb_trace,
    ]


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _write_rows(
    path: str, header: Sequence[str], rows: Sequence[Sequence[float]], fmt: str
) -> None:
    if fmt == "csv":
        lines = [",".join(header)]
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        body = "\n".join(lines) + "\n"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(body)
        return
    payload = {
        "header": list(header),
        "rows": [
            [None if math.isnan(float(v)) else float(v) for v in row] for row in rows
        ],
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_manifest(spec: ExperimentSpec, extras: dict) -> str:
    path = spec.output_path + ".manifest.json"
    payload = {
        "config": spec.resolved,
        "seed": spec.scene.seed,
        "summary": extras,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def _uniform_factor(scene: SceneConfig) -> np.ndarray:
    return math.sqrt(scene.power_budget / scene.n_tx) * np.eye(
        scene.n_tx, dtype=complex
    )


def _uniform_phi(scene: SceneConfig) -> np.ndarray:
    return (scene.power_budget / scene.n_tx) * np.eye(scene.n_tx, dtype=complex)


def _scene_for_frames(scene: SceneConfig, n_frames: int) -> SceneConfig:
    return dataclasses.replace(scene, n_frames=n_frames)


def _scene_for_targets(
    scene: SceneConfig, count: int, angle_range: tuple[float, float]
) -> SceneConfig:
    lo, hi = angle_range
    tx, rx = draw_angles(scene.seed, lo, hi, count)
    return dataclasses.replace(
        scene,
        n_targets=count,
        target_angles_tx=tx,
        target_angles_rx=rx,
        target_gains=(1.0,) * count,
    )


def _rel_gap(theory: float, mc: float) -> float:
    return abs(theory - mc) / max(abs(mc), 1e-300)


def run(spec: ExperimentSpec, threads: int = 1) -> tuple[str, str]:
    """Execute one experiment; returns (results path, manifest path).

    Raises ConfigError/InfeasibleError/NumericalError subtypes on failure;
    the command-line wrapper maps those to exit codes.
    """
    command = spec.command
    rows: list[list[float]] = []
    extras: dict = {}
    header: Sequence[str] = CSV_HEADER

    if command in ("metrics", "validate", "sweep-ns", "sweep-k", "sweep-power"):
        scenes: list[tuple[float, SceneConfig]] = []
        if command == "metrics":
            scenes.append((float(spec.scene.n_frames), spec.scene))
        elif command in ("validate", "sweep-ns"):
            for g in spec.grid:
                scenes.append((float(g), _scene_for_frames(spec.scene, int(g))))
        elif command == "sweep-k":
            for g in spec.grid:
                scenes.append(
                    (float(g), _scene_for_targets(spec.scene, int(g), spec.angle_range))
                )
        else:
            for g in spec.grid:
                scenes.append(
                    (
                        float(g),
                        dataclasses.replace(
                            spec.scene, power_budget=dbm_to_watts(float(g))
                        ),
                    )
                )
        gaps_smi, gaps_lm = [], []
        for param, scene in scenes:
            pair = build_correlations(scene)
            report = asymptotic_report(
                _uniform_phi(scene), pair, scene.sigma2_s, scene.n_frames
            )
            smi_mc, lm_mc = _fused_mc(
                scene, pair, _uniform_factor(scene), spec.mc_trials, threads
            )
            rows.append(_metric_row(param, report, smi_mc, lm_mc))
            gaps_smi.append(_rel_gap(report.smi, smi_mc.mean))
            gaps_lm.append(_rel_gap(report.elmmse, lm_mc.mean))
        extras["max_smi_rel_gap"] = max(gaps_smi)
        extras["max_elmmse_rel_gap"] = max(gaps_lm)

    elif command == "dof":
        scene = spec.scene
        pair = build_correlations(scene)
        phi = _uniform_phi(scene)
        for s2 in spec.sigma_ladder:
            report = asymptotic_report(phi, pair, s2, scene.n_frames)
            rows.append(_metric_row(s2, report, None, None))
        last, extrapolated = sensing_dof(phi, pair, scene.n_frames, spec.sigma_ladder)
        extras["dof_last"] = last
        extras["dof_extrapolated"] = extrapolated

    elif command == "optimize-sensing":
        scene = spec.scene
        pair = build_correlations(scene)
        traj = optimize_sensing(scene, spec.gp, pair=pair)
        header = TRAJECTORY_HEADER
        rows = [[float(i), obj, res] for i, obj, res in traj.iterates]
        extras["final_smi"] = smi_asymptotic(
            traj.final_phi, pair, scene.sigma2_s, scene.n_frames
        )
        extras["iterations"] = len(traj.iterates)

    elif command == "optimize-isac":
        scene = spec.scene
        pair = build_correlations(scene)
        channel = build_comm_channel(scene, spec.comm_snr_db)
        traj = optimize_isac(scene, channel, spec.admm, pair=pair)
        header = TRAJECTORY_HEADER
        rows = [[float(i), obj, res] for i, obj, res in traj.iterates]
        extras["final_smi"] = smi_asymptotic(
            traj.final_phi, pair, scene.sigma2_s, scene.n_frames
        )
        extras["final_rate_nats"] = comm_mi(channel, traj.final_phi, scene.sigma2_c)
        extras["rate_floor_nats"] = spec.rate_floor
        extras["outer_iterations"] = len(traj.iterates)
        extras["primal_residual"] = traj.iterates[-1][2] if traj.iterates else 0.0

    elif command == "tradeoff":
        scene = spec.scene
        pair = build_correlations(scene)
        channel = build_comm_channel(scene, spec.comm_snr_db)
        finals = []
        for r0 in spec.grid:
            settings = dataclasses.replace(spec.admm, rate_floor=float(r0))
            traj = optimize_isac(scene, channel, settings, pair=pair)
            phi_opt = traj.final_phi
            report = asymptotic_report(phi_opt, pair, scene.sigma2_s, scene.n_frames)
            smi_mc, lm_mc = _fused_mc(
                scene, pair, psd_sqrt(phi_opt), spec.mc_trials, threads
            )
            rows.append(_metric_row(float(r0), report, smi_mc, lm_mc))
            finals.append(report.smi)
        extras["rate_floors_nats"] = [float(r) for r in spec.grid]
        extras["final_smis"] = finals

    else:  # pragma: no cover - config rejects unknown commands
        raise ValueError(f"unhandled command {command!r}")

    out_dir = os.path.dirname(os.path.abspath(spec.output_path))
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(spec.output_path, header, rows, spec.format)
    manifest = _write_manifest(spec, extras)
    return spec.output_path, manifest
