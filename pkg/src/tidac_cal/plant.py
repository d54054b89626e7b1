"""Virtual control surface of the DAC: six discrete trim registers and the
affine map from register codes to the physical impairment state.

The register roles mirror the three trim objectives of the hardware (match
the sub-DAC gains, zero the duty-cycle error, align each sub-DAC's clock
and data) split into per-sub-DAC and coarse/fine registers:

    current_a / current_b   gain trim, one per sub-DAC
    duty_coarse / duty_fine cascaded duty-cycle trim
    phase_a / phase_b       per-sub-DAC skew trim

A RegisterFile behaves like one exclusive device session: writes and reads
go through an address/code interface and are appended to a transaction
log, exportable as a line-oriented trace ("W addr code" / "R addr code").
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .spectral import DacConfig, ImpairmentState, ToneSpec, analytic_spur_dbc

__all__ = [
    "ROLES",
    "RegisterSpec",
    "RegisterFile",
    "PlantModel",
    "PlantConfigError",
    "default_register_map",
    "default_plant",
    "impairments_from_registers",
]

ROLES = ("current_a", "current_b", "duty_coarse", "duty_fine", "phase_a", "phase_b")


class PlantConfigError(ValueError):
    """Raised when a plant cannot be calibrated to its target spur level."""


@dataclass(frozen=True)
class RegisterSpec:
    """One digital control register: address, width and role."""

    address: int
    name: str
    role: str
    width_bits: int = 8
    reset_value: int | None = None  # None -> midscale

    def __post_init__(self):
        if not 0 <= self.address <= 5:
            raise ValueError(f"register address must be in [0, 5], got {self.address}")
        if self.role not in ROLES:
            raise ValueError(f"unknown register role {self.role!r}")
        if self.width_bits < 1:
            raise ValueError(f"width_bits must be positive, got {self.width_bits}")
        if self.reset_value is None:
            object.__setattr__(self, "reset_value", self.midscale)
        if not 0 <= self.reset_value <= self.max_code:
            raise ValueError(f"reset_value {self.reset_value} outside [0, {self.max_code}]")

    @property
    def max_code(self) -> int:
        return (1 << self.width_bits) - 1

    @property
    def midscale(self) -> int:
        return 1 << (self.width_bits - 1)


def default_register_map() -> tuple[RegisterSpec, ...]:
    """Six 8-bit registers, one per role, reset at midscale."""
    return tuple(RegisterSpec(address=i, name=role.upper(), role=role)
                 for i, role in enumerate(ROLES))


class RegisterFile:
    """The six-register state vector plus its transaction log.

    One RegisterFile is one logical device session: a single writer at a
    time.  ``values`` is the current state vector s; every accepted write
    and every read is logged.
    """

    def __init__(self, registers: Sequence[RegisterSpec] | None = None):
        regs = tuple(registers) if registers is not None else default_register_map()
        if len(regs) != 6 or sorted(r.address for r in regs) != list(range(6)):
            raise ValueError("a register file needs exactly six registers at addresses 0..5")
        self.registers = tuple(sorted(regs, key=lambda r: r.address))
        self._values = [r.reset_value for r in self.registers]
        self.log: list[str] = []

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(self._values)

    def write(self, address: int, code: int) -> "RegisterFile":
        """Write one register; rejects out-of-range address/code, state unchanged."""
        spec = self._spec(address)
        code = int(code)
        if not 0 <= code <= spec.max_code:
            raise ValueError(f"code {code} outside [0, {spec.max_code}] for register "
                             f"{spec.name} at address {address}")
        self._values[address] = code
        self.log.append(f"W {address} {code}")
        return self

    def read(self, address: int) -> int:
        code = self._values[self._spec(address).address]
        self.log.append(f"R {address} {code}")
        return code

    def dump(self) -> tuple[int, ...]:
        """Current state vector without touching the log."""
        return self.values

    def load(self, codes: Sequence[int]) -> "RegisterFile":
        """Write every register whose code differs (one transaction each)."""
        if len(codes) != 6:
            raise ValueError(f"expected 6 codes, got {len(codes)}")
        for addr, code in enumerate(codes):
            if self._values[addr] != int(code):
                self.write(addr, int(code))
        return self

    @property
    def n_writes(self) -> int:
        return sum(1 for line in self.log if line.startswith("W "))

    def export_log(self) -> str:
        """Line-oriented transaction trace, one 'W addr code' / 'R addr code' per line."""
        return "\n".join(self.log) + ("\n" if self.log else "")

    def _spec(self, address) -> RegisterSpec:
        if not (isinstance(address, int) and 0 <= address <= 5):
            raise ValueError(f"register address must be an integer in [0, 5], got {address}")
        return self.registers[address]


def _default_steps(dac: DacConfig) -> dict[str, float]:
    ts = dac.sample_period_s
    return {
        "current_a": 5e-4,        # gain per LSB (0.05 %)
        "current_b": 5e-4,
        "duty_coarse": 2e-4,      # alpha per LSB (0.02 %)
        "duty_fine": 2e-5,
        "phase_a": ts / 2048.0,   # seconds per LSB
        "phase_b": ts / 2048.0,
    }


@dataclass(frozen=True)
class PlantModel:
    """Uncalibrated converter plus the register-to-impairment affine map.

    ``impairments(codes)`` applies base + step * (code - midscale) per
    register role and clamps the result to physically valid ranges; clamps
    are silent but recorded in ``clamp_events`` so an optimizer may probe
    the boundaries.  Construction verifies the plant is calibratable: the
    register file obtained by inverting the affine map (plus a small local
    search) must reach ``check_threshold_dbc`` at the probe tone.
    """

    dac: DacConfig
    base_impairment: ImpairmentState
    steps: Mapping[str, float]
    registers: tuple[RegisterSpec, ...] = field(default_factory=default_register_map)
    check_tone_frac: float = 0.4
    check_threshold_dbc: float = -50.0
    clamp_events: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        missing = [r for r in ROLES if r not in self.steps]
        if missing:
            raise ValueError(f"steps missing for roles: {missing}")
        probe = ToneSpec(freq_hz=self.check_tone_frac * self.dac.sample_rate_hz)
        codes = self.inverse_codes()
        spur = analytic_spur_dbc(self.dac, self.impairments(codes), probe)
        if spur > self.check_threshold_dbc:
            codes, spur = self._local_search(codes, probe, spur)
        if spur > self.check_threshold_dbc:
            raise PlantConfigError(
                f"plant is not calibratable: best spur {spur:.1f} dBc at "
                f"{probe.freq_hz:.3e} Hz exceeds {self.check_threshold_dbc} dBc")

    def impairments(self, codes: Sequence[int]) -> ImpairmentState:
        """Map a register state vector to the physical impairment state."""
        if len(codes) != 6:
            raise ValueError(f"expected 6 codes, got {len(codes)}")
        delta = {}
        for spec, code in zip(self.registers, codes):
            delta[spec.role] = self.steps[spec.role] * (int(code) - spec.midscale)
        base = self.base_impairment
        ts = self.dac.sample_period_s
        raw = {
            "alpha": base.alpha + delta["duty_coarse"] + delta["duty_fine"],
            "gain_a": base.gain_a + delta["current_a"],
            "gain_b": base.gain_b + delta["current_b"],
            "skew_a_s": base.skew_a_s + delta["phase_a"],
            "skew_b_s": base.skew_b_s + delta["phase_b"],
        }
        clamped = {
            "alpha": min(max(raw["alpha"], -1.0), 1.0),
            "gain_a": max(raw["gain_a"], 1e-6),
            "gain_b": max(raw["gain_b"], 1e-6),
            "skew_a_s": min(max(raw["skew_a_s"], -0.999 * ts), 0.999 * ts),
            "skew_b_s": min(max(raw["skew_b_s"], -0.999 * ts), 0.999 * ts),
        }
        for name, value in raw.items():
            if clamped[name] != value:
                self.clamp_events.append((name, value, clamped[name]))
        return ImpairmentState(**clamped)

    def inverse_codes(self) -> tuple[int, ...]:
        """Nearest register codes that undo the base impairment.

        Solves the affine map for zero duty error, matched gains (A trimmed
        to B's base gain) and matched skews, rounding to the grid;
        duty_fine mops up duty_coarse's rounding residual.
        """
        base = self.base_impairment
        by_role = {r.role: r for r in self.registers}

        def snap(role, target_delta):
            spec = by_role[role]
            code = spec.midscale + round(target_delta / self.steps[role])
            return int(min(max(code, 0), spec.max_code))

        codes = {r: by_role[r].midscale for r in ROLES}
        codes["current_a"] = snap("current_a", base.gain_b - base.gain_a)
        coarse = snap("duty_coarse", -base.alpha)
        codes["duty_coarse"] = coarse
        residual = -base.alpha - self.steps["duty_coarse"] * (coarse - by_role["duty_coarse"].midscale)
        codes["duty_fine"] = snap("duty_fine", residual)
        codes["phase_a"] = snap("phase_a", base.skew_b_s - base.skew_a_s)
        ordered = sorted(self.registers, key=lambda r: r.address)
        return tuple(codes[r.role] for r in ordered)

    def _local_search(self, codes, probe, spur):
        """Greedy +/-2 LSB coordinate refinement of the analytic spur."""
        best, best_spur = tuple(codes), spur
        improved = True
        while improved:
            improved = False
            for addr, spec in enumerate(self.registers):
                for step in (-2, -1, 1, 2):
                    trial = list(best)
                    code = trial[addr] + step
                    if not 0 <= code <= spec.max_code:
                        continue
                    trial[addr] = code
                    s = analytic_spur_dbc(self.dac, self.impairments(trial), probe)
                    if s < best_spur:
                        best, best_spur = tuple(trial), s
                        improved = True
        return best, best_spur


def impairments_from_registers(model: PlantModel, file: RegisterFile) -> ImpairmentState:
    """Impairment state for the register file's current contents."""
    return model.impairments(file.dump())


def default_plant(dac: DacConfig | None = None) -> PlantModel:
    """The stock uncalibrated plant: 2% gain error, 1% duty error, Ts/20 skew."""
    dac = dac or DacConfig()
    ts = dac.sample_period_s
    base = ImpairmentState(alpha=0.01, gain_a=1.02, gain_b=1.0,
                           skew_a_s=ts / 20.0, skew_b_s=0.0)
    return PlantModel(dac=dac, base_impairment=base, steps=_default_steps(dac))
