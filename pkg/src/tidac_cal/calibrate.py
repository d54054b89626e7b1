"""Simulated-annealing search over the six-register control space, plus the
grid-search baseline.

The cost C(s) is the measured interleave-image bin power (linear), so the
optimizer needs no model of the plant: it only writes registers and reads
the spur meter.  Annealing keeps a temperature T that decays geometrically
from t_max to t_min by the factor gamma; at each temperature, k_inner
neighbor states are proposed.  Cost-improving moves are always accepted
(and best-so-far s* updated); worsening moves are accepted with
probability exp(-beta * dE / T), which is what lets the search escape
local basins while T is high.

A neighbor differs from the current state in exactly one register: the
register index is drawn uniformly from the six, and the new code uniformly
from a +/-window LSB band around the current code (or from the register's
full range in "full_range" mode).  Drawing the current code again is
allowed.

t_max defaults to a short seeded warm-up calibration: 20 neighbor probes
around the start state estimate the typical uphill cost step, and t_max is
set so that the median such step would be accepted with probability
``warmup_accept``.  Warm-up measurements are tracked separately and by
default are not counted against the measurement budget.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .meter import CaptureConfig, MeasurementSession
from .plant import PlantModel, RegisterFile, RegisterSpec
from .spectral import ToneSpec

__all__ = [
    "AnnealParams",
    "AnnealResult",
    "CalibrationAborted",
    "GridBudgetError",
    "cooling_schedule",
    "uphill_accept_probability",
    "neighbor",
    "anneal",
    "grid_search",
    "default_grid_strides",
    "save_anneal_trace",
]

FULL_RANGE = "full_range"


class CalibrationAborted(RuntimeError):
    """A measurement failed mid-run; carries the partial result in ``partial``."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


class GridBudgetError(ValueError):
    """The requested stride lattice exceeds the measurement budget."""


@dataclass(frozen=True)
class AnnealParams:
    """Annealing inputs.  t_max/t_min of None trigger warm-up calibration
    (t_min then defaults to t_max / t_min_ratio)."""

    t_max: float | None = None
    t_min: float | None = None
    gamma: float = 0.8
    beta: float = 50.0
    k_inner: int = 30
    seed: int = 0
    neighbor_window: int | str = 24
    t_min_ratio: float = 7.0
    warmup_probes: int = 20
    warmup_accept: float = 0.2
    count_warmup: bool = False
    remeasure_current: bool = False
    early_stop_dbc: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.k_inner < 1:
            raise ValueError(f"k_inner must be >= 1, got {self.k_inner}")
        if self.t_max is not None and self.t_max <= 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.t_min is not None:
            if self.t_max is None:
                raise ValueError("t_min given without t_max")
            if not 0 < self.t_min < self.t_max:
                raise ValueError(f"need 0 < t_min < t_max, got {self.t_min} / {self.t_max}")
        if self.t_min_ratio <= 1:
            raise ValueError(f"t_min_ratio must exceed 1, got {self.t_min_ratio}")
        if not 0.0 < self.warmup_accept < 1.0:
            raise ValueError(f"warmup_accept must be in (0, 1), got {self.warmup_accept}")
        if self.warmup_probes < 1:
            raise ValueError(f"warmup_probes must be >= 1, got {self.warmup_probes}")
        if self.neighbor_window != FULL_RANGE and (
                not isinstance(self.neighbor_window, int) or self.neighbor_window < 1):
            raise ValueError(f"neighbor_window must be a positive int or {FULL_RANGE!r}")


@dataclass(frozen=True)
class AnnealResult:
    """Search outcome: best state s*, its cost, and the full evaluation trace.

    ``cost_trace`` holds one (measurement_index, cost, temperature) entry
    per budgeted measurement (the start state plus every proposed
    neighbor); ``measurement_count == len(cost_trace)`` unless warm-up
    probes were flagged into the count.  ``csv_trace`` rows carry
    (measurement_index, temperature, proposed_cost_dbc, accepted,
    best_cost_dbc) for export.
    """

    best_state: tuple[int, ...]
    best_cost: float
    cost_trace: tuple
    measurement_count: int
    accepted_uphill: int
    outer_iterations: int
    warmup_measurements: int = 0
    t_max: float = math.nan
    t_min: float = math.nan
    csv_trace: tuple = ()


def cooling_schedule(t_max: float, t_min: float, gamma: float) -> list[float]:
    """Temperatures visited: t_max * gamma**n for n = 0, 1, ... while > t_min."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if not 0 < t_min < t_max:
        raise ValueError(f"need 0 < t_min < t_max, got {t_min} / {t_max}")
    out = []
    t = t_max
    while t > t_min:
        out.append(t)
        t *= gamma
    return out


def uphill_accept_probability(delta_e: float, temperature: float, beta: float) -> float:
    """Metropolis acceptance probability exp(-beta * dE / T) for a worsening move."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if delta_e <= 0:
        return 1.0
    return math.exp(-beta * delta_e / temperature)


def neighbor(state: Sequence[int], registers: Sequence[RegisterSpec],
             rng: np.random.Generator, window: int | str = 24) -> tuple[int, ...]:
    """One-register mutation: uniform register index, uniform code in the window.

    The window is clipped to the register's code range; in "full_range"
    mode the draw covers the whole range.  The draw may return the current
    code, so the neighbor can equal the state.
    """
    idx = int(rng.integers(0, len(registers)))
    spec = registers[idx]
    if window == FULL_RANGE:
        lo, hi = 0, spec.max_code
    else:
        lo = max(0, state[idx] - window)
        hi = min(spec.max_code, state[idx] + window)
    out = list(state)
    out[idx] = int(rng.integers(lo, hi + 1))
    return tuple(out)


def _dbc(cost, carrier_power):
    if cost <= 0 or carrier_power <= 0:
        return -200.0
    return 10.0 * math.log10(cost / carrier_power)


def anneal(plant: PlantModel, tone: ToneSpec, cfg_capture: CaptureConfig | None = None,
           params: AnnealParams | None = None,
           s0: RegisterFile | None = None) -> AnnealResult:
    """Run the annealing search on one measurement session.

    ``s0`` is the device register file (fresh reset-state file when omitted);
    it is left loaded with the best state found.  Raises CalibrationAborted
    with the partial trace attached if a measurement fails mid-run.
    """
    params = params or AnnealParams()
    device = s0 if s0 is not None else RegisterFile()
    session = MeasurementSession(plant, tone, cfg_capture, seed=params.seed)
    rng = np.random.default_rng([params.seed, 0])
    registers = device.registers

    def evaluate(codes):
        device.load(codes)
        return session.measure(device)

    s = device.dump()
    m0 = evaluate(s)
    c_s = m0.image_power

    warmup_used = 0
    if params.t_max is None:
        uphill = []
        for _ in range(params.warmup_probes):
            m = evaluate(neighbor(s, registers, rng, params.neighbor_window))
            warmup_used += 1
            if m.image_power > c_s:
                uphill.append(m.image_power - c_s)
        device.load(s)
        scale = float(np.median(uphill)) if uphill else max(c_s, np.finfo(float).tiny)
        t_max = params.beta * scale / math.log(1.0 / params.warmup_accept)
        t_min = t_max / params.t_min_ratio
    else:
        t_max = params.t_max
        t_min = params.t_min if params.t_min is not None else t_max / params.t_min_ratio

    best, c_best, best_dbc = s, c_s, m0.spur_dbc
    trace = [(m0.measurement_index, c_s, t_max)]
    csv_rows = [(m0.measurement_index, t_max, m0.spur_dbc, True, best_dbc)]
    accepted_uphill = 0
    outer = 0
    temperature = t_max
    stop = False

    def partial():
        return AnnealResult(best_state=best, best_cost=c_best, cost_trace=tuple(trace),
                            measurement_count=len(trace) + (warmup_used if params.count_warmup else 0),
                            accepted_uphill=accepted_uphill, outer_iterations=outer,
                            warmup_measurements=warmup_used, t_max=t_max, t_min=t_min,
                            csv_trace=tuple(csv_rows))

    try:
        while temperature > t_min and not stop:
            outer += 1
            for _ in range(params.k_inner):
                if params.remeasure_current:
                    m_cur = evaluate(s)
                    c_s = m_cur.image_power
                    trace.append((m_cur.measurement_index, c_s, temperature))
                    csv_rows.append((m_cur.measurement_index, temperature,
                                     m_cur.spur_dbc, True, best_dbc))
                cand = neighbor(s, registers, rng, params.neighbor_window)
                m = evaluate(cand)
                trace.append((m.measurement_index, m.image_power, temperature))
                delta_e = m.image_power - c_s
                accepted = False
                if delta_e <= 0:
                    s, c_s = cand, m.image_power
                    accepted = True
                    if c_s < c_best:
                        best, c_best, best_dbc = s, c_s, m.spur_dbc
                elif rng.random() < uphill_accept_probability(delta_e, temperature, params.beta):
                    s, c_s = cand, m.image_power
                    accepted = True
                    accepted_uphill += 1
                csv_rows.append((m.measurement_index, temperature, m.spur_dbc,
                                 accepted, best_dbc))
                if params.early_stop_dbc is not None and best_dbc <= params.early_stop_dbc:
                    stop = True
                    break
            temperature *= params.gamma
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        raise CalibrationAborted(f"measurement failed mid-run: {exc}", partial()) from exc

    device.load(best)
    return partial()


def default_grid_strides() -> dict[str, int]:
    """280-point default allocation over the four most sensitive registers."""
    return {"current_a": 52, "current_b": 64, "duty_coarse": 42, "phase_a": 128}


def _lattice_codes(spec: RegisterSpec, stride: int) -> list[int]:
    """Stride lattice anchored at midscale, clipped to the code range."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    down = range(spec.midscale, -1, -stride)
    up = range(spec.midscale + stride, spec.max_code + 1, stride)
    return sorted(list(down) + list(up))


def grid_search(plant: PlantModel, tone: ToneSpec,
                cfg_capture: CaptureConfig | None = None,
                strides: Mapping[str, int] | None = None, budget: int = 280,
                seed: int = 0, s0: RegisterFile | None = None) -> AnnealResult:
    """Exhaustive scan of a midscale-anchored stride lattice.

    Registers named in ``strides`` sweep their lattice codes; the rest stay
    at their reset values.  Errors out before the first measurement when
    the lattice exceeds ``budget``.
    """
    strides = strides if strides is not None else default_grid_strides()
    device = s0 if s0 is not None else RegisterFile()
    registers = device.registers
    swept = [r for r in registers if r.role in strides]
    unknown = set(strides) - {r.role for r in registers}
    if unknown:
        raise ValueError(f"strides name unknown register roles: {sorted(unknown)}")
    axes = [_lattice_codes(r, strides[r.role]) for r in swept]
    n_points = int(np.prod([len(a) for a in axes])) if axes else 0
    if n_points == 0:
        raise ValueError("grid search needs at least one swept register")
    if n_points > budget:
        raise GridBudgetError(f"stride lattice has {n_points} points, budget is {budget}")

    session = MeasurementSession(plant, tone, cfg_capture, seed=seed)
    start = device.dump()
    best, c_best, best_dbc = None, math.inf, math.nan
    trace = []
    csv_rows = []
    for combo in product(*axes):
        codes = list(start)
        for reg, code in zip(swept, combo):
            codes[reg.address] = code
        device.load(codes)
        m = session.measure(device)
        trace.append((m.measurement_index, m.image_power, math.nan))
        if m.image_power < c_best:
            best, c_best, best_dbc = tuple(codes), m.image_power, m.spur_dbc
        csv_rows.append((m.measurement_index, math.nan, m.spur_dbc,
                         m.image_power == c_best, best_dbc))

    device.load(best)
    return AnnealResult(best_state=best, best_cost=c_best, cost_trace=tuple(trace),
                        measurement_count=len(trace), accepted_uphill=0,
                        outer_iterations=0, csv_trace=tuple(csv_rows))


def save_anneal_trace(result: AnnealResult, path) -> None:
    """CSV export: measurement_index, temperature, proposed_cost_dbc, accepted, best_cost_dbc."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measurement_index", "temperature", "proposed_cost_dbc",
                         "accepted", "best_cost_dbc"])
        writer.writerows(result.csv_trace)
