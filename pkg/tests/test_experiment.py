"""End-to-end protocol runs: calibration, Cesaro series, tail reduction,
and the continuous-path rerun."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from torusobs import (
    RunConfig,
    WindowExceedsSimulation,
    calibration,
    conserved_energy,
    continuous_protocol_delta,
    run_protocol,
    tail_reduction_check,
    temporal_gram,
)
from torusobs.config import (
    DatumSpec,
    DesignOptions,
    ScheduleOptions,
    ToleranceSchedule,
    WindowSchedule,
)
from torusobs.experiment import gram_eigenvalue_band

TWO_PI = 2.0 * math.pi


def config_dict(**overrides):
    base = {
        "schema": 1,
        "space": {"dim": 1},
        "prototype": {"boxes": [[0, "1/4"]]},
        "model": "schrodinger",
        "duration": 1.0,
        "sim_window": 3,
        "interval_count": 4,
        "windows": {"kind": "stride", "stride": 2, "cap": 2},
        "tolerances": {"kind": "harmonic"},
        "datum": {"window": 3, "decay": "power", "decay_power": 2.0, "seed": 7},
    }
    base.update(overrides)
    return base


def quick_config(**overrides) -> RunConfig:
    return RunConfig.from_dict(config_dict(**overrides))


# ---------------------------------------------------------------- temporal grams


def test_temporal_gram_closed_form():
    got = temporal_gram(0.0, 0.3, 1.7)
    assert np.array_equal(got, np.array([[0.0, 0.0], [0.0, 1.7]]))

    grid = np.linspace(0.2, 1.2, 20001)
    for rho in (1.0, TWO_PI, 7.3):
        gram = temporal_gram(rho, 0.2, 1.0)
        s = np.sin(rho * grid)
        c = np.cos(rho * grid)
        dense = np.array(
            [
                [np.trapezoid(s * s, grid), np.trapezoid(s * c, grid)],
                [np.trapezoid(s * c, grid), np.trapezoid(c * c, grid)],
            ]
        )
        assert np.max(np.abs(gram - dense)) <= 1e-8


def test_gram_eigenvalue_band_is_offset_free():
    for rho in (1.0, TWO_PI, 7.3, 100.0):
        lo, hi = gram_eigenvalue_band(rho, 1.0)
        for t_start in (0.0, 0.37):
            eigs = np.linalg.eigvalsh(temporal_gram(rho, t_start, 1.0))
            assert eigs[0] == pytest.approx(lo, abs=1e-12)
            assert eigs[1] == pytest.approx(hi, abs=1e-12)
        assert lo == pytest.approx(0.5 - abs(math.sin(rho)) / (2.0 * rho), abs=1e-15)
    assert gram_eigenvalue_band(0.0, 1.3) == (0.0, 1.3)


def test_integer_frequencies_have_a_flat_band():
    lo, hi = gram_eigenvalue_band(TWO_PI, 1.0)
    assert lo == pytest.approx(0.5, abs=1e-15)
    assert hi == pytest.approx(0.5, abs=1e-15)


# ---------------------------------------------------------------- calibration


def test_first_order_calibration_is_the_interval_length():
    from torusobs import build_basis, TorusSpace

    basis = build_basis(TorusSpace(1), 2)
    for duration in (1.0, 2.5):
        constants = calibration("schrodinger", basis, 0.0, duration)
        assert constants.lower == duration
        assert constants.upper == duration
        assert constants.mode_frequencies == ()


def test_wave_calibration_table():
    from torusobs import build_basis, TorusSpace

    basis = build_basis(TorusSpace(1), 2)
    constants = calibration("wave", basis, 0.0, 1.0)
    assert constants.mode_frequencies == pytest.approx((0.0, TWO_PI, 2 * TWO_PI))
    # integer frequencies sit at the flat center of the band; the constant
    # mode is velocity-only and contributes the full interval
    assert constants.lower == pytest.approx(0.5, abs=1e-12)
    assert constants.upper == 1.0
    for rho, lo, hi in zip(
        constants.mode_frequencies, constants.gram_minima, constants.gram_maxima
    ):
        blo, bhi = gram_eigenvalue_band(rho, 1.0)
        assert lo == pytest.approx(blo, abs=1e-12)
        assert hi == pytest.approx(bhi, abs=1e-12)

    payload = constants.to_dict()
    assert len(payload["mode_table"]) == 3
    assert payload["mode_table"][1]["gram_min"] == constants.gram_minima[1]


def test_massive_calibration_is_dominated_by_the_slowest_mode():
    from torusobs import build_basis, TorusSpace

    basis = build_basis(TorusSpace(1), 2)
    constants = calibration("klein_gordon", basis, 1.0, 1.0)
    assert constants.mode_frequencies[0] == pytest.approx(1.0)
    assert constants.lower == pytest.approx(0.5 - math.sin(1.0) / 2.0, rel=1e-13)
    assert constants.lower < 0.08


def test_calibration_guards():
    from torusobs import build_basis, TorusSpace

    basis = build_basis(TorusSpace(1), 1)
    with pytest.raises(ValueError):
        calibration("schrodinger", basis, 0.0, 0.0)
    with pytest.raises(ValueError):
        calibration("schrodinger", basis, 1.0, 1.0)
    with pytest.raises(ValueError):
        calibration("wave", basis, 0.5, 1.0)
    with pytest.raises(ValueError):
        calibration("klein_gordon", basis, 0.0, 1.0)
    with pytest.raises(ValueError):
        calibration("transport", basis, 0.0, 1.0)


# ---------------------------------------------------------------- protocol runs


def test_protocol_records_are_internally_consistent():
    config = quick_config()
    series = run_protocol(config)
    assert len(series.records) == 4
    assert [r.index for r in series.records] == [1, 2, 3, 4]
    assert [r.window for r in series.records] == [1, 1, 2, 2]
    for r in series.records:
        assert r.tolerance == pytest.approx(0.25 / (r.index + 1), rel=1e-15)
        rate = series.design_bounds[r.window]
        expected_macros = max(1, math.ceil((0.25 + 1.0) * rate / r.tolerance))
        assert r.macro_count == expected_macros
        assert series.schedule_for(r.index).macro_count == r.macro_count
    observed = series.observed
    means = np.cumsum(observed) / np.arange(1, 5)
    assert np.max(np.abs(series.running_means - means)) <= 1e-15
    assert series.final_mean == series.records[-1].running_mean
    assert series.final_quarter_minimum == series.running_means[-1:].min()

    energy = conserved_energy(series.datum)
    assert series.energy == energy.total
    for r in series.records:
        assert r.windowed_energy == energy.below(r.window)
    assert set(series.designs) == {1, 2}
    for design in series.designs.values():
        assert design.residual <= 1e-12
    assert series.reference_bound == pytest.approx(
        0.25 * series.constants.lower * series.energy, rel=1e-15
    )


def test_full_torus_observations_sit_inside_the_calibration_band():
    config = quick_config(
        prototype={"boxes": [[0, 1]]},
        model="wave",
        datum={"window": 3, "seed": 2},
        tolerances={"kind": "fixed", "value": 0.4},
    )
    series = run_protocol(config)
    lower = series.constants.lower * series.energy
    upper = series.constants.upper * series.energy
    for value in series.observed:
        assert value >= lower * (1.0 - 1e-10)
        assert value <= upper * (1.0 + 1e-10)
    assert series.final_mean >= lower * (1.0 - 1e-10)


@pytest.mark.parametrize(
    "model,mass", [("wave", 0.0), ("klein_gordon", 1.0), ("schrodinger", 0.0)]
)
def test_windowed_data_meet_the_certified_floor(model, mass):
    config = quick_config(
        model=model,
        mass=mass,
        windows={"kind": "fixed", "value": 1},
        datum={"window": 1, "seed": 3},
    )
    series = run_protocol(config)
    c = series.constants.lower
    for r in series.records:
        floor = (0.25 - r.tolerance) * c * r.windowed_energy
        assert r.observed >= floor * (1.0 - 1e-10)


def test_single_interval_run_has_a_trivial_mean():
    series = run_protocol(quick_config(interval_count=1))
    assert len(series.records) == 1
    assert series.final_mean == series.records[0].observed


def test_thread_pool_does_not_change_the_numbers():
    config = quick_config()
    solo = run_protocol(config, threads=1)
    pooled = run_protocol(config, threads=3)
    assert np.array_equal(solo.observed, pooled.observed)
    assert np.array_equal(solo.running_means, pooled.running_means)


def test_windows_at_the_simulation_cutoff_are_rejected_at_runtime():
    config = RunConfig(
        dim=1,
        boxes=((0, Fraction(1, 4)),),
        model="schrodinger",
        mass=0.0,
        duration=1.0,
        sim_window=2,
        interval_count=1,
        windows=WindowSchedule(kind="fixed", value=2),
        tolerances=ToleranceSchedule(),
        datum=DatumSpec(window=2, seed=0),
        design=DesignOptions(),
        schedule=ScheduleOptions(),
    )
    with pytest.raises(WindowExceedsSimulation):
        run_protocol(config)


# ---------------------------------------------------------------- tail reduction


def test_tail_reduction_on_a_run_with_a_genuine_tail():
    series = run_protocol(quick_config())
    report = tail_reduction_check(series)
    assert report.upper_ok
    assert report.lower_ok
    assert report.lower_margin >= 1.0 - 1e-10
    assert all(report.split_ok.values())
    assert set(report.etas) == {0.5, 0.1, 0.01}
    # the split bound can never beat what was actually observed
    slack = 1e-8 * max(series.energy, 1.0)
    assert report.best_bound <= series.final_mean + slack
    assert report.tail_mean == pytest.approx(
        float(
            np.mean([series.energy - r.windowed_energy for r in series.records])
        ),
        rel=1e-12,
    )
    assert report.tail_fraction == report.tail_mean / series.energy
    assert report.tail_mean > 0.0
    json.dumps(report.to_dict())


def test_tail_reduction_without_a_tail_is_exact():
    config = quick_config(
        windows={"kind": "fixed", "value": 1},
        datum={"window": 1, "seed": 5},
    )
    series = run_protocol(config)
    report = tail_reduction_check(series)
    assert np.max(np.abs(report.truncated - report.observed)) <= 1e-12 * series.energy
    assert np.max(np.abs(report.tail)) <= 1e-14 * series.energy
    assert report.tail_mean == 0.0


def test_tail_reduction_eta_validation():
    series = run_protocol(quick_config(interval_count=1))
    with pytest.raises(ValueError):
        tail_reduction_check(series, etas=(0.0,))
    with pytest.raises(ValueError):
        tail_reduction_check(series, etas=(1.0,))


# ---------------------------------------------------------------- continuous rerun


def test_continuous_rerun_improves_with_speed():
    config = quick_config(model="wave", datum={"window": 3, "seed": 2})
    report = continuous_protocol_delta(config, speeds=(200.0, 10000.0))
    assert report.speeds == (200.0, 10000.0)
    assert report.monotone_ok
    assert report.realized_ok
    assert report.realized_margin >= 1.0 - 1e-9
    # the slow ladder rung certifies nothing here; the fast one does
    assert report.certified_factors[200.0] == 0.0
    assert report.certified_factors[10000.0] > 0.0
    for speed in report.speeds:
        recs = report.records[speed]
        assert len(recs) == 4
        means = np.cumsum([r.observed for r in recs]) / np.arange(1, 5)
        assert np.max(np.abs([r.running_mean for r in recs] - means)) <= 1e-15
    json.dumps(report.to_dict())


def test_continuous_rerun_needs_a_speed():
    with pytest.raises(ValueError):
        continuous_protocol_delta(quick_config(interval_count=1), speeds=())
