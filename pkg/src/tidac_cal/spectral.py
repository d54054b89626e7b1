"""Closed-form line spectrum and waveform synthesis for a twofold interleaved RZ DAC.

A twofold time-interleaved DAC multiplexes two half-rate sub-DACs (A and B)
onto one output.  Each sub-DAC drives the output through a return-to-zero
window covering nominally half of the 2*Ts interleave cycle (Ts = 1/f_s is
the aggregate sample period).  Three impairments are modeled:

* duty-cycle error ``alpha``: sub-DAC A's drive window is stretched to
  Ts*(1+2*alpha) and B's shrunk to Ts*(1-2*alpha),
* per-sub-DAC analog gains ``gain_a`` / ``gain_b``,
* per-sub-DAC timing skew, modeled as a pure time shift of that sub-DAC's
  entire pulse train.

For a sinusoidal input the output is a line spectrum: input lines at
+/-f_out replicated every f_s/2 by the half-rate impulse sampling, weighted
per sub-DAC by a sinc envelope and a window-position phase.  With
``alpha == 0`` the odd replicas of the two sub-DACs are exactly out of
phase, so they cancel if and only if the gains match and the skews are
equal; any mismatch leaks an interleave image at f_s/2 - f_out.

Conventions: ``sinc(x) = sin(pi*x)/(pi*x)``; line coefficients are
one-sided complex amplitudes (a cosine of amplitude a contributes a/2 at
+f and at -f); spectra are evaluated only at frequencies where a replica
line lands, returning the coefficient of that line.

Sub-DAC A drives the output at t = 0.  Within cycle k, A's window is
[2k*Ts, 2k*Ts + Ts*(1+2*alpha)) and B's is the complement up to 2(k+1)*Ts.
Each sub-DAC's code is the input evaluated at its own drive-window start,
which is what gives B's replica sum its extra exp(-j*pi*k*(1+2*alpha))
phase relative to A's.  Skew shifts windows but not code values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DacConfig",
    "ImpairmentState",
    "ToneSpec",
    "SpectrumSample",
    "ContourGrid",
    "quantize_midtread",
    "spectrum_sub_a",
    "spectrum_sub_b",
    "output_spectrum",
    "analytic_spur_dbc",
    "image_frequency",
    "synthesize_waveform",
    "level_curve",
]

SPUR_FLOOR_DBC = -200.0
# numerator magnitudes below this fraction of the carrier count as exact
# cancellation and report the floor instead of log of rounding noise
_CANCEL_EPS = 1e-15
# relative tolerance for deciding that a replica line lands on a query frequency
_LINE_RTOL = 1e-9


@dataclass(frozen=True)
class DacConfig:
    """Static converter parameters of the aggregate DAC.

    The interleave is twofold: each sub-DAC runs at ``sample_rate_hz / 2``.
    ``full_scale`` sets the output amplitude units; codes are clamped to
    +/-full_scale by the quantizer.
    """

    sample_rate_hz: float = 50e9
    resolution_bits: int = 10
    full_scale: float = 1.0

    def __post_init__(self):
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not (isinstance(self.resolution_bits, int) and 1 <= self.resolution_bits <= 48):
            raise ValueError(f"resolution_bits must be an integer in [1, 48], got {self.resolution_bits}")
        if not (self.full_scale > 0 and math.isfinite(self.full_scale)):
            raise ValueError(f"full_scale must be positive, got {self.full_scale}")

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def sub_rate_hz(self) -> float:
        return self.sample_rate_hz / 2.0


@dataclass(frozen=True)
class ImpairmentState:
    """Physical error vector of the interleave.

    ``alpha`` is the fractional duty-cycle error of the half-rate clock,
    in [-1, 1] with 0 the ideal 50% duty.  Skews are in seconds and must
    stay below one aggregate sample period (checked against a DacConfig at
    the point of use, since this type does not know Ts).
    """

    alpha: float = 0.0
    gain_a: float = 1.0
    gain_b: float = 1.0
    skew_a_s: float = 0.0
    skew_b_s: float = 0.0

    def __post_init__(self):
        if not (-1.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [-1, 1], got {self.alpha}")
        if not (self.gain_a > 0 and self.gain_b > 0):
            raise ValueError(f"sub-DAC gains must be positive, got {self.gain_a}, {self.gain_b}")
        for name in ("alpha", "gain_a", "gain_b", "skew_a_s", "skew_b_s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class ToneSpec:
    """Single-tone test stimulus: frequency and digital full-scale fraction."""

    freq_hz: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.freq_hz > 0 and math.isfinite(self.freq_hz)):
            raise ValueError(f"freq_hz must be positive, got {self.freq_hz}")
        if not (0 < self.amplitude <= 1.0):
            raise ValueError(f"amplitude must be in (0, 1], got {self.amplitude}")


@dataclass(frozen=True)
class SpectrumSample:
    """One evaluated spectrum point: line coefficient (complex amplitude) at freq_hz."""

    freq_hz: float
    value: complex

    def __post_init__(self):
        if not (math.isfinite(self.freq_hz) and np.isfinite(self.value)):
            raise ValueError("SpectrumSample requires finite frequency and value")


def _check_tone(cfg: DacConfig, tone: ToneSpec) -> None:
    nyq = cfg.sample_rate_hz / 2.0
    if not tone.freq_hz < nyq:
        raise ValueError(f"tone at {tone.freq_hz} Hz is outside the first Nyquist zone (< {nyq} Hz)")
    quarter = cfg.sample_rate_hz / 4.0
    if abs(tone.freq_hz - quarter) <= _LINE_RTOL * cfg.sample_rate_hz:
        raise ValueError("f_out = f_s/4 is degenerate: the interleave image lands on the carrier")


def _check_skews(cfg: DacConfig, imp: ImpairmentState) -> None:
    ts = cfg.sample_period_s
    if abs(imp.skew_a_s) >= ts or abs(imp.skew_b_s) >= ts:
        raise ValueError(f"skews must stay within one sample period ({ts:.3e} s), "
                         f"got {imp.skew_a_s:.3e}, {imp.skew_b_s:.3e}")


def quantize_midtread(x, resolution_bits: int, full_scale: float):
    """Mid-tread quantizer: round half away from zero, clamp to +/-full_scale.

    Step size is 2*full_scale / 2**resolution_bits, so a full-scale input
    exercises the entire code range.
    """
    x = np.asarray(x, dtype=np.float64)
    step = 2.0 * full_scale / (1 << resolution_bits)
    q = step * np.copysign(np.floor(np.abs(x) / step + 0.5), x)
    return np.clip(q, -full_scale, full_scale)


def image_frequency(cfg: DacConfig, tone: ToneSpec) -> float:
    """Location of the interleave image for the given tone: f_s/2 - f_out."""
    return cfg.sample_rate_hz / 2.0 - tone.freq_hz


def _sub_spectrum(cfg, imp, tone, f, k_range, sub):
    """Line coefficient of one sub-DAC at frequency f.

    Scans replica indices k in [-k_range, k_range]; each input line at
    +/-f_out lands replicas at f0 + k*f_s/2.  Returns the summed coefficient
    of every line within tolerance of f (zero when none lands).
    """
    if not math.isfinite(f):
        raise ValueError(f"evaluation frequency must be finite, got {f}")
    if k_range < 1:
        raise ValueError(f"k_range must be >= 1, got {k_range}")
    if abs(abs(imp.alpha) - 1.0) < 1e-12:
        raise ValueError("alpha = +/-1 makes one RZ window degenerate (width 0 or 2*Ts)")
    _check_tone(cfg, tone)
    _check_skews(cfg, imp)

    ts = cfg.sample_period_s
    half_fs = cfg.sample_rate_hz / 2.0
    tol = _LINE_RTOL * cfg.sample_rate_hz
    line_amp = tone.amplitude * cfg.full_scale / 2.0

    if sub == "a":
        width = 1.0 + 2.0 * imp.alpha
        gain, skew = imp.gain_a, imp.skew_a_s
    else:
        width = 1.0 - 2.0 * imp.alpha
        gain, skew = imp.gain_b, imp.skew_b_s

    envelope = (gain / 2.0) * width * np.sinc(f * ts * width) \
        * np.exp(-1j * np.pi * f * ts * width) * np.exp(-2j * np.pi * f * skew)

    total = 0.0 + 0.0j
    for k in range(-k_range, k_range + 1):
        # exp(-j*pi*k*(1+2*alpha)) split so the (-1)**k part is exact and the
        # odd-replica cancellation at alpha = 0 comes out identically zero
        replica_phase = 1.0 if sub == "a" else \
            (-1.0) ** k * np.exp(-2j * np.pi * k * imp.alpha)
        for f0 in (tone.freq_hz, -tone.freq_hz):
            if abs(f - (f0 + k * half_fs)) <= tol:
                total += envelope * replica_phase * line_amp
    return SpectrumSample(freq_hz=f, value=complex(total))


def spectrum_sub_a(cfg: DacConfig, imp: ImpairmentState, tone: ToneSpec,
                   f: float, k_range: int = 8) -> SpectrumSample:
    """Sub-DAC A line coefficient at f (RZ window width Ts*(1+2*alpha))."""
    return _sub_spectrum(cfg, imp, tone, f, k_range, "a")


def spectrum_sub_b(cfg: DacConfig, imp: ImpairmentState, tone: ToneSpec,
                   f: float, k_range: int = 8) -> SpectrumSample:
    """Sub-DAC B line coefficient at f.

    B's window is the complement of A's, so besides the (1-2*alpha) width
    factors its replica sum carries the extra exp(-j*pi*k*(1+2*alpha))
    phase; for alpha = 0 this is -1 at odd k, the term that cancels A's odd
    replicas when the gains match.
    """
    return _sub_spectrum(cfg, imp, tone, f, k_range, "b")


def output_spectrum(cfg: DacConfig, imp: ImpairmentState, tone: ToneSpec,
                    f: float, k_range: int = 8) -> SpectrumSample:
    """Total DAC output line coefficient: sum of both sub-DAC spectra at f."""
    a = spectrum_sub_a(cfg, imp, tone, f, k_range)
    b = spectrum_sub_b(cfg, imp, tone, f, k_range)
    return SpectrumSample(freq_hz=f, value=a.value + b.value)


def analytic_spur_dbc(cfg: DacConfig, imp: ImpairmentState, tone: ToneSpec,
                      k_range: int = 8, floor_dbc: float = SPUR_FLOOR_DBC) -> float:
    """Interleave image magnitude at f_s/2 - f_out, in dB relative to the carrier.

    Returns ``floor_dbc`` when the image is below 1e-15 of the carrier
    (exact cancellation up to rounding).  Raises on a zero carrier.
    """
    carrier = abs(output_spectrum(cfg, imp, tone, tone.freq_hz, k_range).value)
    if carrier == 0.0:
        raise ValueError("degenerate configuration: carrier amplitude is zero")
    image = abs(output_spectrum(cfg, imp, tone, image_frequency(cfg, tone), k_range).value)
    if image < _CANCEL_EPS * carrier:
        return floor_dbc
    return 20.0 * math.log10(image / carrier)


def synthesize_waveform(cfg: DacConfig, imp: ImpairmentState, tone: ToneSpec,
                        n_samples: int, oversample: int = 8,
                        start_index: int = 0) -> np.ndarray:
    """Render the DAC output on a uniform grid at oversample * f_s.

    Returns ``n_samples * oversample`` point samples of the continuous
    pulse-train model.  Even-cycle codes go out through sub-DAC A's window,
    the complementary codes through B's; codes are the tone quantized to
    the configured resolution, each sub-DAC sampling the tone at its own
    drive-window start.  Where skews make the windows overlap the sub-DACs
    sum; gaps render as zero.

    Point samples alias the fractional pulse-edge positions (error falls
    off only as 1/oversample), so spur readings from a plain FFT of this
    output are coarse; the spur meter's coherent path integrates the pulse
    train exactly instead.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if oversample < 4:
        raise ValueError(f"oversample must be >= 4, got {oversample}")
    if abs(imp.alpha) >= 0.5:
        raise ValueError(f"|alpha| >= 0.5 gives a non-positive RZ window width, got {imp.alpha}")
    _check_tone(cfg, tone)
    _check_skews(cfg, imp)
    f_cap = oversample * cfg.sample_rate_hz
    if tone.freq_hz >= f_cap / 2.0:
        raise ValueError("oversample too small to represent f_out in the captured grid")

    ts = cfg.sample_period_s
    n = n_samples * oversample
    # integer grid indices keep window-boundary comparisons exact when the
    # boundaries land on capture samples (alpha = 0, skews on-grid)
    idx = np.arange(start_index, start_index + n, dtype=np.float64)
    cycle = 2 * oversample
    width_a = oversample * (1.0 + 2.0 * imp.alpha)
    amp = tone.amplitude * cfg.full_scale

    out = np.zeros(n)
    for sub in ("a", "b"):
        skew = imp.skew_a_s if sub == "a" else imp.skew_b_s
        gain = imp.gain_a if sub == "a" else imp.gain_b
        pos = idx - skew * f_cap
        k = np.floor(pos / cycle)
        u = pos - cycle * k
        active = u < width_a if sub == "a" else u >= width_a
        code_time = 2.0 * k * ts + (0.0 if sub == "a" else ts * (1.0 + 2.0 * imp.alpha))
        codes = quantize_midtread(amp * np.cos(2.0 * np.pi * tone.freq_hz * code_time),
                                  cfg.resolution_bits, cfg.full_scale)
        out += np.where(active, gain * codes, 0.0)
    return out


@dataclass(frozen=True)
class ContourGrid:
    """Resolution spec for level-curve extraction.

    ``gain_max_pct`` / ``duty_max_pct`` bound the search quadrant; ``rows``
    duty-error values are then spaced from zero up to the curve's own
    duty-axis intercept (or ``duty_max_pct`` when the curve leaves the
    quadrant), and the gain error is bisected along each row.
    """

    gain_max_pct: float = 2.0
    duty_max_pct: float = 0.5
    rows: int = 24
    tol_db: float = 0.01

    def __post_init__(self):
        if self.gain_max_pct <= 0 or self.duty_max_pct <= 0:
            raise ValueError("contour grid extents must be positive")
        if self.rows < 2:
            raise ValueError(f"contour grid needs >= 2 rows, got {self.rows}")


def _spur_at(cfg, tone, gain_err_pct, duty_err_pct, k_range):
    imp = ImpairmentState(alpha=duty_err_pct / 100.0,
                          gain_a=1.0 + gain_err_pct / 100.0, gain_b=1.0)
    return analytic_spur_dbc(cfg, imp, tone, k_range)


def _bisect_crossing(spur_fn, lo, hi, threshold_dbc, tol_db):
    """Bisect spur_fn (nondecreasing) for the threshold crossing in [lo, hi]."""
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        v = spur_fn(mid)
        if abs(v - threshold_dbc) <= tol_db:
            return mid
        if v < threshold_dbc:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def level_curve(cfg: DacConfig, tone: ToneSpec, threshold_dbc: float = -50.0,
                grid: ContourGrid | None = None, k_range: int = 8):
    """Trace the (gain error %, duty error %) boundary where the image hits threshold_dbc.

    Gain error is 100*|g_A - g_B|/g_B and duty error 100*|alpha|, with
    skews held at zero.  Scans the positive-error quadrant row by row
    (fixed duty error, bisect gain error); the duty-axis intercept closes
    the curve.  The spur is nondecreasing in gain error along each row in
    this quadrant, so each row has a unique crossing.  Rows whose duty
    error alone already exceeds the threshold lie outside the passing
    region and end the scan.
    """
    if threshold_dbc >= 0:
        raise ValueError(f"threshold_dbc must be negative, got {threshold_dbc}")
    if threshold_dbc <= SPUR_FLOOR_DBC + 20:
        raise ValueError(f"threshold_dbc {threshold_dbc} is below the numerical floor")
    grid = grid or ContourGrid()
    _check_tone(cfg, tone)

    points = []
    # locate the duty-axis intercept so the rows hug the actual curve
    if _spur_at(cfg, tone, 0.0, grid.duty_max_pct, k_range) >= threshold_dbc:
        duty_top = _bisect_crossing(lambda x: _spur_at(cfg, tone, 0.0, x, k_range),
                                    0.0, grid.duty_max_pct, threshold_dbc, grid.tol_db)
        closed = True
    else:
        duty_top = grid.duty_max_pct  # curve leaves the searched quadrant
        closed = False
    for duty in np.linspace(0.0, duty_top, grid.rows)[:-1 if closed else None]:
        if _spur_at(cfg, tone, grid.gain_max_pct, duty, k_range) < threshold_dbc:
            continue  # crossing lies beyond the scanned gain range
        g = _bisect_crossing(lambda x: _spur_at(cfg, tone, x, duty, k_range),
                             0.0, grid.gain_max_pct, threshold_dbc, grid.tol_db)
        points.append((g, float(duty)))
    if closed:
        points.append((0.0, duty_top))
    return points
