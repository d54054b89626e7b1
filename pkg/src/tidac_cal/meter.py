"""Closed-loop spur measurement: capture the DAC output and report the energy
in the interleave-image bin, which is the calibration cost function.

The emulated instrument plays the role of the wideband digitizer that closes
the loop around the converter.  Two capture paths exist:

* coherent (default): the tone is snapped so carrier and image land on
  exact bins of the capture grid, and each reported bin is the exact
  Fourier coefficient of the rendered pulse train over one record period,
  integrated rectangle by rectangle in closed form.  This matches what a
  band-limited instrument front end sees; naively point-sampling the RZ
  edges instead aliases the fractional edge positions (error ~ 1/oversample).
* non-coherent: plain windowed FFT of the point-sampled waveform
  (4-term Blackman-Harris), image and carrier each summed over 5 bins.

Measurement noise is additive per-bin complex Gaussian amplitude with
expected power ``carrier * 10**(noise_floor_dbc/10)``, drawn from a seeded
per-session stream so experiments replay exactly.  A session owns its
measurement counter; the counter is the budget currency that calibration
strategies are compared in.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .plant import PlantModel, RegisterFile
from .spectral import (DacConfig, ImpairmentState, SPUR_FLOOR_DBC, ToneSpec,
                       image_frequency, quantize_midtread, synthesize_waveform)

__all__ = [
    "CaptureConfig",
    "SpurMeasurement",
    "snap_coherent",
    "coherent_bin_amplitude",
    "window_coefficients",
    "power_spectrum",
    "MeasurementSession",
    "measure_cost",
]

WINDOWS = ("rectangular", "blackman-harris")
# 4-term Blackman-Harris
_BH_COEFFS = (0.35875, 0.48829, 0.14128, 0.01168)


@dataclass(frozen=True)
class CaptureConfig:
    """Capture parameters of the emulated spur-measurement instrument.

    ``oversample`` multiplies the aggregate DAC rate to give the capture
    rate; the record spans ``fft_size / oversample`` aggregate samples, so
    the bin spacing is ``oversample * f_s / fft_size``.  With ``coherent``
    the tone is snapped so that the carrier and the image at f_s/2 - f_out
    both land on exact bins.  ``noise_floor_dbc`` is the per-bin additive
    measurement noise level relative to the carrier; -inf disables it.
    """

    fft_size: int = 8192
    oversample: int = 8
    coherent: bool = True
    window: str = "rectangular"
    noise_floor_dbc: float = -75.0

    def __post_init__(self):
        if self.fft_size < 1024 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two >= 1024, got {self.fft_size}")
        if self.oversample < 4:
            raise ValueError(f"oversample must be >= 4, got {self.oversample}")
        if self.fft_size % (2 * self.oversample) or self.fft_size < 8 * self.oversample:
            raise ValueError("fft_size must be a multiple of 2*oversample and at least "
                             f"8*oversample, got {self.fft_size} / {self.oversample}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if not (self.noise_floor_dbc < 0 or self.noise_floor_dbc == -math.inf):
            raise ValueError(f"noise_floor_dbc must be negative, got {self.noise_floor_dbc}")

    @property
    def n_aggregate(self) -> int:
        return self.fft_size // self.oversample

    @property
    def n_cycles(self) -> int:
        return self.n_aggregate // 2

    def bin_hz(self, dac: DacConfig) -> float:
        return self.oversample * dac.sample_rate_hz / self.fft_size


@dataclass(frozen=True)
class SpurMeasurement:
    """One cost-function evaluation.

    ``image_power`` (the cost, linear power units of squared line amplitude)
    and ``carrier_power`` are post-noise; ``spur_dbc`` is their ratio,
    clamped at the floor when the image power underflows.
    """

    image_power: float
    carrier_power: float
    spur_dbc: float
    tone: ToneSpec
    measurement_index: int


def snap_coherent(tone: ToneSpec, cfg: CaptureConfig, dac: DacConfig) -> ToneSpec:
    """Snap the tone onto the nearest odd capture bin.

    Odd bin indices are coprime to the power-of-two record length, which
    exercises every quantizer phase and spreads quantization error instead
    of piling it onto a few bins.  The image bin fft_size/(2*oversample) - m
    is then automatically integral.  The snap moves the tone by at most one
    bin spacing.
    """
    if tone.freq_hz >= dac.sample_rate_hz / 2:
        raise ValueError("tone must lie inside the first Nyquist zone")
    bin_hz = cfg.bin_hz(dac)
    m_nyq = cfg.fft_size // (2 * cfg.oversample)
    u = tone.freq_hz / bin_hz
    lo = int(math.floor(u))
    lo_odd = lo if lo % 2 else lo - 1
    m = lo_odd if (u - lo_odd) <= (lo_odd + 2 - u) else lo_odd + 2
    m = min(max(m, 1), m_nyq - 1)
    if m == cfg.fft_size // (4 * cfg.oversample):  # image would land on the carrier
        m = m + 2 if m + 2 <= m_nyq - 1 else m - 2
    return ToneSpec(freq_hz=m * bin_hz, amplitude=tone.amplitude)


def coherent_bin_amplitude(dac: DacConfig, imp: ImpairmentState, tone: ToneSpec,
                           f: float, n_cycles: int, start_cycle: int = 0) -> complex:
    """Exact Fourier coefficient of the rendered pulse train at bin frequency f.

    Integrates the piecewise-constant output over ``n_cycles`` interleave
    cycles (record T = 2*n_cycles*Ts): each rectangle [t0, t1) of level h
    contributes h*(exp(-j2pi f t0) - exp(-j2pi f t1))/(j2pi f T).  Valid for
    f*T integer (record-periodic bins), where the result is independent of
    ``start_cycle`` up to the phase of a time shift.

    This is the waveform-route oracle: it shares only the pulse geometry
    with the closed-form line spectrum, none of the sinc/replica algebra.
    """
    if abs(imp.alpha) >= 0.5:
        raise ValueError(f"|alpha| >= 0.5 gives a non-positive RZ window width, got {imp.alpha}")
    if f <= 0:
        raise ValueError(f"bin frequency must be positive, got {f}")
    ts = dac.sample_period_s
    period = 2.0 * n_cycles * ts
    width_a = ts * (1.0 + 2.0 * imp.alpha)
    amp = tone.amplitude * dac.full_scale
    k = np.arange(start_cycle, start_cycle + n_cycles, dtype=np.float64)
    w = 2j * np.pi * f

    total = 0.0 + 0.0j
    for sub in ("a", "b"):
        skew = imp.skew_a_s if sub == "a" else imp.skew_b_s
        gain = imp.gain_a if sub == "a" else imp.gain_b
        if sub == "a":
            t0 = 2.0 * k * ts + skew
            t1 = t0 + width_a
            code_time = 2.0 * k * ts
        else:
            t0 = 2.0 * k * ts + width_a + skew
            t1 = 2.0 * (k + 1.0) * ts + skew
            code_time = 2.0 * k * ts + width_a
        levels = gain * quantize_midtread(
            amp * np.cos(2.0 * np.pi * tone.freq_hz * code_time),
            dac.resolution_bits, dac.full_scale)
        total += np.sum(levels * (np.exp(-w * t0) - np.exp(-w * t1))) / (w * period)
    return complex(total)


def window_coefficients(n: int, window: str) -> np.ndarray:
    if window == "rectangular":
        return np.ones(n)
    i = np.arange(n)
    a0, a1, a2, a3 = _BH_COEFFS
    return (a0 - a1 * np.cos(2 * np.pi * i / n) + a2 * np.cos(4 * np.pi * i / n)
            - a3 * np.cos(6 * np.pi * i / n))


def power_spectrum(samples: np.ndarray, window: str = "rectangular") -> np.ndarray:
    """One-sided per-bin power of a real capture record (relative units)."""
    w = window_coefficients(len(samples), window)
    spec = np.fft.rfft(samples * w)
    return np.abs(spec) ** 2


class MeasurementSession:
    """One instrument session: a plant under test, a tone, and a seeded noise stream.

    A session is used by exactly one optimizer at a time; its
    ``measurement_count`` tallies every cost evaluation.  With noise off
    and coherent capture, ``measure`` is a pure function of the register
    state.  Per-measurement rows (index, f_out, spur_dbc, cost) accumulate
    in ``trace_rows`` and can be saved as CSV.
    """

    def __init__(self, plant: PlantModel, tone: ToneSpec,
                 capture: CaptureConfig | None = None, seed: int = 0,
                 start_cycle: int = 0):
        self.plant = plant
        self.capture = capture or CaptureConfig()
        self.tone = snap_coherent(tone, self.capture, plant.dac) if self.capture.coherent else tone
        self.seed = seed
        self.start_cycle = start_cycle
        self.measurement_count = 0
        self.trace_rows: list[tuple] = []
        self._noise_rng = np.random.default_rng([seed, 17])
        dac = plant.dac
        self.image_freq_hz = image_frequency(dac, self.tone)
        if self.capture.coherent:
            bin_hz = self.capture.bin_hz(dac)
            self.carrier_bin = round(self.tone.freq_hz / bin_hz)
            self.image_bin = round(self.image_freq_hz / bin_hz)
            if self.carrier_bin == self.image_bin:
                raise ValueError("carrier and image coincide; tone too close to f_s/4")

    def measure(self, file: RegisterFile) -> SpurMeasurement:
        """Map registers to impairments, capture, and report the image-bin cost."""
        codes = file.dump() if isinstance(file, RegisterFile) else tuple(file)
        imp = self.plant.impairments(codes)
        if self.capture.coherent:
            image_amp, carrier_amp = self._coherent_amplitudes(imp)
            image_p, carrier_p = self._apply_noise(image_amp, carrier_amp)
        else:
            image_p, carrier_p = self._windowed_powers(imp)
        self.measurement_count += 1
        spur = self._ratio_dbc(image_p, carrier_p)
        meas = SpurMeasurement(image_power=image_p, carrier_power=carrier_p,
                               spur_dbc=spur, tone=self.tone,
                               measurement_index=self.measurement_count)
        self.trace_rows.append((meas.measurement_index, self.tone.freq_hz,
                                meas.spur_dbc, meas.image_power))
        return meas

    def capture_samples(self, file: RegisterFile) -> np.ndarray:
        """Point-sampled capture record (fft_size samples at oversample * f_s)."""
        codes = file.dump() if isinstance(file, RegisterFile) else tuple(file)
        imp = self.plant.impairments(codes)
        return synthesize_waveform(
            self.plant.dac, imp, self.tone, self.capture.n_aggregate,
            self.capture.oversample,
            start_index=self.start_cycle * 2 * self.capture.oversample)

    def save_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "f_out_hz", "spur_dbc", "cost_linear"])
            writer.writerows(self.trace_rows)

    def _coherent_amplitudes(self, imp):
        dac = self.plant.dac
        n_cyc = self.capture.n_cycles
        image = coherent_bin_amplitude(dac, imp, self.tone, self.image_freq_hz,
                                       n_cyc, self.start_cycle)
        carrier = coherent_bin_amplitude(dac, imp, self.tone, self.tone.freq_hz,
                                         n_cyc, self.start_cycle)
        return image, carrier

    def _apply_noise(self, image_amp: complex, carrier_amp: complex):
        floor = self.capture.noise_floor_dbc
        if floor == -math.inf:
            return abs(image_amp) ** 2, abs(carrier_amp) ** 2
        noise_power = abs(carrier_amp) ** 2 * 10.0 ** (floor / 10.0)
        sigma = math.sqrt(noise_power / 2.0)
        n = self._noise_rng.normal(0.0, sigma, 4)
        image_amp = image_amp + n[0] + 1j * n[1]
        carrier_amp = carrier_amp + n[2] + 1j * n[3]
        return abs(image_amp) ** 2, abs(carrier_amp) ** 2

    def _windowed_powers(self, imp):
        """Non-coherent path: Blackman-Harris FFT, 5-bin sums around each target."""
        samples = synthesize_waveform(
            self.plant.dac, imp, self.tone, self.capture.n_aggregate,
            self.capture.oversample,
            start_index=self.start_cycle * 2 * self.capture.oversample)
        spec = np.fft.rfft(samples * window_coefficients(len(samples), self.capture.window))
        bin_hz = self.capture.bin_hz(self.plant.dac)
        floor = self.capture.noise_floor_dbc

        def band_power(center_hz):
            b = round(center_hz / bin_hz)
            lo, hi = max(b - 2, 0), min(b + 2, len(spec) - 1)
            bins = spec[lo:hi + 1].copy()
            if floor != -math.inf:
                ref = np.max(np.abs(spec)) ** 2
                sigma = math.sqrt(ref * 10.0 ** (floor / 10.0) / 2.0)
                bins += self._noise_rng.normal(0, sigma, len(bins)) \
                    + 1j * self._noise_rng.normal(0, sigma, len(bins))
            return float(np.sum(np.abs(bins) ** 2))

        return band_power(self.image_freq_hz), band_power(self.tone.freq_hz)

    @staticmethod
    def _ratio_dbc(image_power: float, carrier_power: float) -> float:
        if carrier_power <= 0:
            raise ValueError("degenerate capture: carrier power is zero")
        if image_power <= 0:
            return SPUR_FLOOR_DBC
        return max(10.0 * math.log10(image_power / carrier_power), SPUR_FLOOR_DBC)


def measure_cost(model: PlantModel, file: RegisterFile, tone: ToneSpec,
                 cfg: CaptureConfig | None = None, seed: int = 0) -> SpurMeasurement:
    """One-shot cost evaluation through a fresh session."""
    return MeasurementSession(model, tone, cfg, seed).measure(file)


def noiseless(capture: CaptureConfig) -> CaptureConfig:
    """Copy of a capture config with measurement noise disabled."""
    return replace(capture, noise_floor_dbc=-math.inf)
