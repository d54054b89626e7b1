"""Virtual-plant tests: register transactions and the code-to-impairment map."""
import pytest

from tidac_cal.plant import (PlantConfigError, PlantModel, RegisterFile,
                             RegisterSpec, default_plant, default_register_map,
                             impairments_from_registers)
from tidac_cal.spectral import DacConfig, ImpairmentState, ToneSpec, analytic_spur_dbc


# --------------------------
# register file
# --------------------------

def test_fresh_file_holds_reset_values():
    f = RegisterFile()
    assert f.values == (128,) * 6
    assert f.dump() == (128,) * 6
    assert f.log == []


def test_read_your_write_and_last_write_wins():
    f = RegisterFile()
    f.write(2, 128)
    assert f.read(2) == 128
    f.write(2, 17)
    f.write(2, 200)
    assert f.read(2) == 200


def test_bad_address_and_code_leave_state_unchanged():
    f = RegisterFile()
    with pytest.raises(ValueError):
        f.write(7, 1)
    with pytest.raises(ValueError):
        f.write(0, 256)
    with pytest.raises(ValueError):
        f.write(0, -1)
    with pytest.raises(ValueError):
        f.read(-1)
    assert f.values == (128,) * 6


def test_dump_is_the_state_vector():
    f = RegisterFile()
    for addr in range(6):
        f.write(addr, 10 * addr)
    assert f.dump() == tuple(10 * a for a in range(6))


def test_transaction_log_counts_writes_and_exports_lines():
    f = RegisterFile()
    f.write(0, 5)
    f.write(0, 5)
    f.read(3)
    with pytest.raises(ValueError):
        f.write(1, 9999)
    assert f.n_writes == 2  # rejected write not logged
    lines = f.export_log().splitlines()
    assert lines == ["W 0 5", "W 0 5", "R 3 128"]


def test_load_writes_only_differing_registers():
    f = RegisterFile()
    f.load((128, 128, 40, 128, 128, 50))
    assert f.n_writes == 2
    assert f.values == (128, 128, 40, 128, 128, 50)


def test_register_spec_validation():
    with pytest.raises(ValueError):
        RegisterSpec(address=9, name="X", role="current_a")
    with pytest.raises(ValueError):
        RegisterSpec(address=0, name="X", role="bogus")
    with pytest.raises(ValueError):
        RegisterFile(default_register_map()[:5])


# --------------------------
# code -> impairment map
# --------------------------

def test_midscale_maps_to_base_impairment():
    plant = default_plant()
    imp = impairments_from_registers(plant, RegisterFile())
    assert imp == plant.base_impairment


def test_one_lsb_moves_one_step():
    plant = default_plant()
    f = RegisterFile()
    f.write(0, 129)  # current_a
    imp = impairments_from_registers(plant, f)
    assert imp.gain_a == pytest.approx(plant.base_impairment.gain_a + 5e-4, rel=1e-12)
    assert imp.gain_b == plant.base_impairment.gain_b


def test_impairment_deltas_are_additive_across_registers():
    plant = default_plant()
    base = plant.base_impairment
    joint = plant.impairments((140, 120, 100, 150, 128, 128))
    d_gain_a = plant.impairments((140, 128, 128, 128, 128, 128)).gain_a - base.gain_a
    d_gain_b = plant.impairments((128, 120, 128, 128, 128, 128)).gain_b - base.gain_b
    d_alpha_c = plant.impairments((128, 128, 100, 128, 128, 128)).alpha - base.alpha
    d_alpha_f = plant.impairments((128, 128, 128, 150, 128, 128)).alpha - base.alpha
    assert joint.gain_a == pytest.approx(base.gain_a + d_gain_a, rel=1e-12)
    assert joint.gain_b == pytest.approx(base.gain_b + d_gain_b, rel=1e-12)
    assert joint.alpha == pytest.approx(base.alpha + d_alpha_c + d_alpha_f, rel=1e-12)


def test_identical_codes_give_identical_impairments():
    plant = default_plant()
    codes = (77, 200, 13, 250, 1, 128)
    assert plant.impairments(codes) == plant.impairments(codes)


def test_inverse_codes_reach_minus_60_dbc_on_default_plant():
    plant = default_plant()
    codes = plant.inverse_codes()
    imp = plant.impairments(codes)
    for frac in (0.1, 0.3, 0.45):
        tone = ToneSpec(freq_hz=frac * plant.dac.sample_rate_hz)
        assert analytic_spur_dbc(plant.dac, imp, tone) <= -60.0


def test_uncalibratable_plant_is_rejected_at_construction():
    dac = DacConfig()
    base = ImpairmentState(alpha=0.01, gain_a=1.02)
    # steps far too small to trim out the base impairment
    steps = {r: 1e-12 for r in ("current_a", "current_b", "duty_coarse", "duty_fine")}
    steps.update(phase_a=1e-30, phase_b=1e-30)
    with pytest.raises(PlantConfigError):
        PlantModel(dac=dac, base_impairment=base, steps=steps)


def test_clamping_is_silent_but_logged():
    dac = DacConfig()
    plant = PlantModel(dac=dac, base_impairment=ImpairmentState(),
                       steps={"current_a": 5e-4, "current_b": 5e-4,
                              "duty_coarse": 0.02, "duty_fine": 2e-5,
                              "phase_a": dac.sample_period_s / 2048,
                              "phase_b": dac.sample_period_s / 2048})
    imp = plant.impairments((128, 128, 255, 128, 128, 128))  # alpha would be 2.54
    assert imp.alpha == 1.0
    assert any(name == "alpha" for name, _, _ in plant.clamp_events)


def test_missing_step_role_is_rejected():
    with pytest.raises(ValueError, match="steps"):
        PlantModel(dac=DacConfig(), base_impairment=ImpairmentState(),
                   steps={"current_a": 5e-4})
