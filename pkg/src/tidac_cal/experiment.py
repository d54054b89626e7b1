"""Batch experiments: seeded calibration runs, Nyquist sweeps with the
grid-search baseline, and image-magnitude contour extraction.

Every command is reproducible from the config file and seed list alone:
reports embed a hash of the canonical config dump and contain no
timestamps, so identical inputs give byte-identical outputs.  Output files
are written atomically (temp file + rename) at command end.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .calibrate import AnnealParams, anneal, grid_search
from .meter import CaptureConfig, MeasurementSession, noiseless
from .plant import PlantModel, RegisterFile, ROLES, default_register_map
from .spectral import ContourGrid, DacConfig, ImpairmentState, ToneSpec, level_curve

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "default_config",
    "parse_config",
    "dump_config",
    "config_hash",
    "build_plant",
    "cmd_calibrate",
    "cmd_sweep",
    "cmd_contours",
]


class ConfigError(ValueError):
    """Config parse/validation failure; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid experiment config:\n" +
                         "\n".join(f"  - {v}" for v in self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    dac: DacConfig
    base_impairment: ImpairmentState
    steps: dict
    capture: CaptureConfig
    anneal: AnnealParams
    sweep_freqs_hz: tuple
    contour_freqs_hz: tuple
    tone_amplitude: float
    calibrate_tone_frac: float
    seeds: tuple
    output_dir: str
    grid_strides: dict
    grid_budget: int
    contour_threshold_dbc: float
    contour_grid: ContourGrid
    target_spur_dbc: float
    min_pass_fraction: float
    contour_tol_db: float


def _default_sweep(dac: DacConfig, start_frac=0.02, stop_frac=0.48, count=12):
    return tuple(float(f) for f in np.geomspace(start_frac, stop_frac, count) * dac.sample_rate_hz)


def default_config() -> ExperimentConfig:
    dac = DacConfig()
    ts = dac.sample_period_s
    return ExperimentConfig(
        dac=dac,
        base_impairment=ImpairmentState(alpha=0.01, gain_a=1.02, gain_b=1.0,
                                        skew_a_s=ts / 20.0, skew_b_s=0.0),
        steps={"current_a": 5e-4, "current_b": 5e-4, "duty_coarse": 2e-4,
               "duty_fine": 2e-5, "phase_a": ts / 2048.0, "phase_b": ts / 2048.0},
        capture=CaptureConfig(),
        anneal=AnnealParams(),
        sweep_freqs_hz=_default_sweep(dac),
        contour_freqs_hz=tuple(f * dac.sample_rate_hz for f in (0.1, 0.2, 0.4, 0.48)),
        tone_amplitude=1.0,
        calibrate_tone_frac=0.4,
        seeds=tuple(range(10)),
        output_dir="out",
        grid_strides={"current_a": 52, "current_b": 64, "duty_coarse": 42, "phase_a": 128},
        grid_budget=280,
        contour_threshold_dbc=-50.0,
        contour_grid=ContourGrid(),
        target_spur_dbc=-50.0,
        min_pass_fraction=0.95,
        contour_tol_db=0.1,
    )


def _check_tone_freq(f, dac, label, violations):
    nyq = dac.sample_rate_hz / 2.0
    quarter = dac.sample_rate_hz / 4.0
    if not 0 < f < nyq:
        violations.append(f"{label}: frequency {f} Hz outside the first Nyquist zone (0, {nyq})")
    elif abs(f - quarter) < 1e-9 * dac.sample_rate_hz:
        violations.append(f"{label}: frequency {f} Hz equals f_s/4, where the interleave "
                          "image coincides with the carrier")


def _section(raw, name, allowed, violations):
    data = raw.get(name, {})
    if data is None:
        data = {}
    if not isinstance(data, dict):
        violations.append(f"{name}: expected a mapping")
        return {}
    for key in data:
        if key not in allowed:
            violations.append(f"{name}: unknown key {key!r}")
    return {k: v for k, v in data.items() if k in allowed}


def parse_config(path) -> ExperimentConfig:
    """Load and validate a YAML experiment config; reports all violations at once."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([f"top level of {path} must be a mapping"])

    violations: list[str] = []
    top_allowed = {"dac", "plant", "capture", "anneal", "sweep", "contours", "grid",
                   "targets", "tone_amplitude", "calibrate_tone_frac", "seeds", "output_dir"}
    for key in raw:
        if key not in top_allowed:
            violations.append(f"unknown top-level key {key!r}")

    defaults = default_config()

    dac_kw = _section(raw, "dac", {"sample_rate_hz", "resolution_bits", "full_scale"}, violations)
    try:
        dac = DacConfig(**dac_kw)
    except (ValueError, TypeError) as exc:
        violations.append(f"dac: {exc}")
        dac = defaults.dac

    plant_raw = _section(raw, "plant", {"base_impairment", "steps"}, violations)
    base_kw = plant_raw.get("base_impairment", {})
    ts = dac.sample_period_s
    default_base = ImpairmentState(alpha=0.01, gain_a=1.02, gain_b=1.0,
                                   skew_a_s=ts / 20.0, skew_b_s=0.0)
    try:
        base = ImpairmentState(**base_kw) if base_kw else default_base
    except (ValueError, TypeError) as exc:
        violations.append(f"plant.base_impairment: {exc}")
        base = default_base
    steps = {"current_a": 5e-4, "current_b": 5e-4, "duty_coarse": 2e-4,
             "duty_fine": 2e-5, "phase_a": ts / 2048.0, "phase_b": ts / 2048.0}
    for role, value in (plant_raw.get("steps") or {}).items():
        if role not in ROLES:
            violations.append(f"plant.steps: unknown register role {role!r}")
        else:
            steps[role] = float(value)

    capture_kw = _section(raw, "capture", {"fft_size", "oversample", "coherent",
                                           "window", "noise_floor_dbc"}, violations)
    if capture_kw.get("noise_floor_dbc") in ("-inf", ".-inf", "-.inf"):
        capture_kw["noise_floor_dbc"] = -math.inf
    try:
        capture = CaptureConfig(**capture_kw)
    except (ValueError, TypeError) as exc:
        violations.append(f"capture: {exc}")
        capture = defaults.capture

    anneal_kw = _section(raw, "anneal", {"t_max", "t_min", "gamma", "beta", "k_inner",
                                         "neighbor_window", "t_min_ratio", "warmup_probes",
                                         "warmup_accept", "count_warmup", "remeasure_current",
                                         "early_stop_dbc"}, violations)
    try:
        anneal_params = AnnealParams(**anneal_kw)
    except (ValueError, TypeError) as exc:
        violations.append(f"anneal: {exc}")
        anneal_params = defaults.anneal

    sweep_raw = _section(raw, "sweep", {"freqs_hz", "start_frac", "stop_frac", "count"}, violations)
    if "freqs_hz" in sweep_raw:
        sweep = tuple(float(f) for f in sweep_raw["freqs_hz"])
    else:
        try:
            sweep = _default_sweep(dac, sweep_raw.get("start_frac", 0.02),
                                   sweep_raw.get("stop_frac", 0.48),
                                   int(sweep_raw.get("count", 12)))
        except (ValueError, TypeError) as exc:
            violations.append(f"sweep: {exc}")
            sweep = _default_sweep(dac)
    if not sweep:
        violations.append("sweep: frequency list is empty")
    for f in sweep:
        _check_tone_freq(f, dac, "sweep", violations)

    cont_raw = _section(raw, "contours", {"threshold_dbc", "gain_max_pct", "duty_max_pct",
                                          "rows", "tol_db", "freqs_frac"}, violations)
    threshold = float(cont_raw.get("threshold_dbc", -50.0))
    if threshold >= 0:
        violations.append(f"contours.threshold_dbc must be negative, got {threshold}")
    try:
        cgrid = ContourGrid(gain_max_pct=float(cont_raw.get("gain_max_pct", 2.0)),
                            duty_max_pct=float(cont_raw.get("duty_max_pct", 0.5)),
                            rows=int(cont_raw.get("rows", 24)),
                            tol_db=float(cont_raw.get("tol_db", 0.01)))
    except (ValueError, TypeError) as exc:
        violations.append(f"contours: {exc}")
        cgrid = ContourGrid()
    contour_freqs = tuple(float(f) * dac.sample_rate_hz
                          for f in cont_raw.get("freqs_frac", (0.1, 0.2, 0.4, 0.48)))
    for f in contour_freqs:
        _check_tone_freq(f, dac, "contours", violations)

    grid_raw = _section(raw, "grid", {"strides", "budget"}, violations)
    strides = dict(defaults.grid_strides)
    if "strides" in grid_raw:
        strides = {}
        for role, value in (grid_raw["strides"] or {}).items():
            if role not in ROLES:
                violations.append(f"grid.strides: unknown register role {role!r}")
            else:
                strides[role] = int(value)
    budget = int(grid_raw.get("budget", 280))

    targets_raw = _section(raw, "targets", {"post_cal_spur_dbc", "min_pass_fraction",
                                            "contour_tol_db"}, violations)

    if "seeds" not in raw:
        violations.append("seeds: required field is missing")
        seeds = defaults.seeds
    else:
        try:
            seeds = tuple(int(s) for s in raw["seeds"])
            if not seeds:
                violations.append("seeds: list is empty")
        except (ValueError, TypeError):
            violations.append(f"seeds: expected a list of integers, got {raw['seeds']!r}")
            seeds = defaults.seeds

    amplitude = float(raw.get("tone_amplitude", 1.0))
    if not 0 < amplitude <= 1:
        violations.append(f"tone_amplitude must be in (0, 1], got {amplitude}")
    cal_frac = float(raw.get("calibrate_tone_frac", 0.4))
    _check_tone_freq(cal_frac * dac.sample_rate_hz, dac, "calibrate_tone_frac", violations)

    if violations:
        raise ConfigError(violations)

    return ExperimentConfig(
        dac=dac, base_impairment=base, steps=steps, capture=capture,
        anneal=anneal_params, sweep_freqs_hz=sweep, contour_freqs_hz=contour_freqs,
        tone_amplitude=amplitude, calibrate_tone_frac=cal_frac, seeds=seeds,
        output_dir=str(raw.get("output_dir", "out")), grid_strides=strides,
        grid_budget=budget, contour_threshold_dbc=threshold, contour_grid=cgrid,
        target_spur_dbc=float(targets_raw.get("post_cal_spur_dbc", -50.0)),
        min_pass_fraction=float(targets_raw.get("min_pass_fraction", 0.95)),
        contour_tol_db=float(targets_raw.get("contour_tol_db", 0.1)),
    )


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML form of a config; re-parsing it reproduces the config."""
    data = {
        "dac": {"sample_rate_hz": cfg.dac.sample_rate_hz,
                "resolution_bits": cfg.dac.resolution_bits,
                "full_scale": cfg.dac.full_scale},
        "plant": {
            "base_impairment": {
                "alpha": cfg.base_impairment.alpha,
                "gain_a": cfg.base_impairment.gain_a,
                "gain_b": cfg.base_impairment.gain_b,
                "skew_a_s": cfg.base_impairment.skew_a_s,
                "skew_b_s": cfg.base_impairment.skew_b_s},
            "steps": dict(cfg.steps)},
        "capture": {"fft_size": cfg.capture.fft_size,
                    "oversample": cfg.capture.oversample,
                    "coherent": cfg.capture.coherent,
                    "window": cfg.capture.window,
                    "noise_floor_dbc": cfg.capture.noise_floor_dbc},
        "anneal": {"t_max": cfg.anneal.t_max, "t_min": cfg.anneal.t_min,
                   "gamma": cfg.anneal.gamma, "beta": cfg.anneal.beta,
                   "k_inner": cfg.anneal.k_inner,
                   "neighbor_window": cfg.anneal.neighbor_window,
                   "t_min_ratio": cfg.anneal.t_min_ratio,
                   "warmup_probes": cfg.anneal.warmup_probes,
                   "warmup_accept": cfg.anneal.warmup_accept,
                   "count_warmup": cfg.anneal.count_warmup,
                   "remeasure_current": cfg.anneal.remeasure_current,
                   "early_stop_dbc": cfg.anneal.early_stop_dbc},
        "sweep": {"freqs_hz": list(cfg.sweep_freqs_hz)},
        "contours": {"threshold_dbc": cfg.contour_threshold_dbc,
                     "gain_max_pct": cfg.contour_grid.gain_max_pct,
                     "duty_max_pct": cfg.contour_grid.duty_max_pct,
                     "rows": cfg.contour_grid.rows,
                     "tol_db": cfg.contour_grid.tol_db,
                     "freqs_frac": [f / cfg.dac.sample_rate_hz for f in cfg.contour_freqs_hz]},
        "grid": {"strides": dict(cfg.grid_strides), "budget": cfg.grid_budget},
        "targets": {"post_cal_spur_dbc": cfg.target_spur_dbc,
                    "min_pass_fraction": cfg.min_pass_fraction,
                    "contour_tol_db": cfg.contour_tol_db},
        "tone_amplitude": cfg.tone_amplitude,
        "calibrate_tone_frac": cfg.calibrate_tone_frac,
        "seeds": list(cfg.seeds),
        "output_dir": cfg.output_dir,
    }
    return yaml.safe_dump(data, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def build_plant(cfg: ExperimentConfig) -> PlantModel:
    return PlantModel(dac=cfg.dac, base_impairment=cfg.base_impairment,
                      steps=dict(cfg.steps), registers=default_register_map())


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    import io
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _true_spur_dbc(plant, codes, tone, capture) -> float:
    """Noise-free re-measurement of a register state, outside any budget."""
    session = MeasurementSession(plant, tone, noiseless(capture), seed=0)
    return session.measure(RegisterFile().load(codes)).spur_dbc


def cmd_calibrate(cfg: ExperimentConfig, out_dir=None) -> tuple[dict, bool]:
    """Anneal once per seed at the single calibrate tone; JSON report + trace CSVs."""
    out = Path(out_dir or cfg.output_dir)
    plant = build_plant(cfg)
    tone = ToneSpec(cfg.calibrate_tone_frac * cfg.dac.sample_rate_hz, cfg.tone_amplitude)
    trace_header = ["measurement_index", "temperature", "proposed_cost_dbc",
                    "accepted", "best_cost_dbc"]
    per_seed = []
    for seed in cfg.seeds:
        params = replace(cfg.anneal, seed=seed)
        result = anneal(plant, tone, cfg.capture, params)
        true_dbc = _true_spur_dbc(plant, result.best_state, tone, cfg.capture)
        per_seed.append({
            "seed": seed,
            "best_state": list(result.best_state),
            "post_cal_spur_dbc": true_dbc,
            "measurement_count": result.measurement_count,
            "warmup_measurements": result.warmup_measurements,
            "accepted_uphill": result.accepted_uphill,
            "outer_iterations": result.outer_iterations,
        })
        _write_csv(out / f"calibrate_trace_seed{seed}.csv", trace_header, result.csv_trace)
    spurs = [r["post_cal_spur_dbc"] for r in per_seed]
    counts = [r["measurement_count"] for r in per_seed]
    ok = all(s <= cfg.target_spur_dbc for s in spurs)
    report = {
        "command": "calibrate",
        "config_hash": config_hash(cfg),
        "seeds": list(cfg.seeds),
        "tone_freq_hz": tone.freq_hz,
        "per_seed": per_seed,
        "summary": {
            "mean_post_cal_dbc": float(np.mean(spurs)),
            "std_post_cal_dbc": float(np.std(spurs)),
            "worst_post_cal_dbc": float(np.max(spurs)),
            "mean_measurement_count": float(np.mean(counts)),
            "target_spur_dbc": cfg.target_spur_dbc,
            "passed": ok,
        },
    }
    _write_json(out / "calibrate_report.json", report)
    return report, ok


def cmd_sweep(cfg: ExperimentConfig, out_dir=None) -> tuple[dict, bool]:
    """Pre-cal vs post-SA vs post-grid spur across the Nyquist sweep.

    One CSV row per frequency; per-seed detail goes to the JSON report.
    """
    out = Path(out_dir or cfg.output_dir)
    plant = build_plant(cfg)
    rows = []
    detail = []
    all_pass = True
    for f_out in cfg.sweep_freqs_hz:
        tone = ToneSpec(f_out, cfg.tone_amplitude)
        reset_codes = RegisterFile().dump()
        pre_dbc = _true_spur_dbc(plant, reset_codes, tone, cfg.capture)
        sa_dbcs, sa_counts, grid_dbcs, grid_counts = [], [], [], []
        for seed in cfg.seeds:
            params = replace(cfg.anneal, seed=seed)
            res = anneal(plant, tone, cfg.capture, params)
            sa_dbcs.append(_true_spur_dbc(plant, res.best_state, tone, cfg.capture))
            sa_counts.append(res.measurement_count)
            gres = grid_search(plant, tone, cfg.capture, cfg.grid_strides,
                               cfg.grid_budget, seed=seed)
            grid_dbcs.append(_true_spur_dbc(plant, gres.best_state, tone, cfg.capture))
            grid_counts.append(gres.measurement_count)
        pass_frac = float(np.mean([d <= cfg.target_spur_dbc for d in sa_dbcs]))
        all_pass &= pass_frac >= cfg.min_pass_fraction
        rows.append([f_out, pre_dbc, float(np.mean(sa_dbcs)), float(np.max(sa_dbcs)),
                     pass_frac, float(np.mean(sa_counts)),
                     float(np.mean(grid_dbcs)), float(np.mean(grid_counts))])
        detail.append({"f_out_hz": f_out, "pre_cal_dbc": pre_dbc,
                       "sa_post_dbc": sa_dbcs, "sa_counts": sa_counts,
                       "grid_post_dbc": grid_dbcs, "grid_counts": grid_counts})
    header = ["f_out_hz", "pre_cal_dbc", "sa_mean_dbc", "sa_worst_dbc",
              "sa_pass_fraction", "sa_mean_count", "grid_mean_dbc", "grid_count"]
    _write_csv(out / "sweep.csv", header, rows)
    report = {
        "command": "sweep",
        "config_hash": config_hash(cfg),
        "seeds": list(cfg.seeds),
        "per_frequency": detail,
        "summary": {
            "target_spur_dbc": cfg.target_spur_dbc,
            "min_pass_fraction": cfg.min_pass_fraction,
            "passed": bool(all_pass),
        },
    }
    _write_json(out / "sweep_report.json", report)
    return report, bool(all_pass)


def cmd_contours(cfg: ExperimentConfig, out_dir=None) -> tuple[dict, bool]:
    """Level curves of the image magnitude, one CSV per contour frequency."""
    out = Path(out_dir or cfg.output_dir)
    from .spectral import analytic_spur_dbc  # self-consistency re-check

    files = []
    ok = True
    for f_out in cfg.contour_freqs_hz:
        tone = ToneSpec(f_out, cfg.tone_amplitude)
        points = level_curve(cfg.dac, tone, cfg.contour_threshold_dbc, cfg.contour_grid)
        worst_err = 0.0
        for gain_pct, duty_pct in points:
            imp = ImpairmentState(alpha=duty_pct / 100.0, gain_a=1.0 + gain_pct / 100.0)
            err = abs(analytic_spur_dbc(cfg.dac, imp, tone) - cfg.contour_threshold_dbc)
            worst_err = max(worst_err, err)
        ok &= bool(points) and worst_err <= cfg.contour_tol_db
        name = f"contour_{f_out/1e9:.3f}GHz.csv"
        _write_csv(out / name, ["gain_error_pct", "duty_error_pct"], points)
        files.append({"f_out_hz": f_out, "file": name, "n_points": len(points),
                      "worst_recheck_err_db": worst_err})
    report = {
        "command": "contours",
        "config_hash": config_hash(cfg),
        "threshold_dbc": cfg.contour_threshold_dbc,
        "contours": files,
        "summary": {"passed": bool(ok), "tolerance_db": cfg.contour_tol_db},
    }
    _write_json(out / "contours_report.json", report)
    return report, bool(ok)
