"""Interval-by-interval observation protocol with running-average verification.

The protocol partitions time into consecutive intervals of a fixed length,
grows the design cutoff slowly with the interval index, tightens the switching
loss target, and records the observed energy of one fixed datum per interval
together with its running (Cesaro) mean.  The mean is compared against
measure * lower_constant * conserved_energy, the asymptotic floor the
construction certifies for the windowed part; two companion reports verify the
hypotheses that let the spectral tail be discarded, and rerun the protocol
with continuous speed-bounded paths in place of switching.

Interval records are independent given the datum (evolution is evaluated at
absolute times), so they can be computed on a thread pool; results do not
depend on the degree of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import ConvexDesign, design_gammas, equispaced_design
from .evolve import (
    ModalDatum,
    conserved_energy,
    interval_output_energy,
    output_kind_for,
    path_observation_energy,
    random_datum,
    windowed_observation_energy,
)
from .schedule import (
    SwitchingSchedule,
    build_continuous,
    build_switching,
)
from .spectral import (
    ModalBasis,
    ObservationMatrix,
    build_basis,
    gamma_matrix,
    trajectory_lipschitz_bound,
)

__all__ = [
    "CalibrationConstants",
    "CesaroSeries",
    "ContinuousReport",
    "IntervalRecord",
    "TailReductionReport",
    "WindowExceedsSimulation",
    "calibration",
    "continuous_protocol_delta",
    "run_protocol",
    "tail_reduction_check",
    "temporal_gram",
]


class WindowExceedsSimulation(Exception):
    """A requested window cutoff reaches or exceeds the simulation cutoff."""


def temporal_gram(rho: float, t_start: float, duration: float) -> np.ndarray:
    """Gram matrix of {sin(rho t), cos(rho t)} over [t_start, t_start+duration].

    Closed form via product-to-sum identities; the zero-frequency pair
    degenerates to {0, 1} whose Gram is diag(0, duration).
    """
    if rho == 0.0:
        return np.array([[0.0, 0.0], [0.0, duration]])
    phase = rho * (2.0 * t_start + duration)
    swing = math.sin(rho * duration) / (2.0 * rho)
    ss = duration / 2.0 - math.cos(phase) * swing
    cc = duration / 2.0 + math.cos(phase) * swing
    sc = math.sin(phase) * swing
    return np.array([[ss, sc], [sc, cc]])


def gram_eigenvalue_band(rho: float, duration: float) -> tuple[float, float]:
    """Predicted temporal Gram eigenvalues duration/2 -+ |sin(rho T)|/(2 rho);
    the off-diagonal block is a reflection, so the band is offset-independent.
    At rho = 0 the analytic limit gives (0, duration)."""
    if rho == 0.0:
        return 0.0, duration
    swing = abs(math.sin(rho * duration)) / (2.0 * rho)
    return duration / 2.0 - swing, duration / 2.0 + swing


@dataclass(frozen=True, eq=False)
class CalibrationConstants:
    """Full-torus per-interval observation constants.

    lower * E <= interval output energy <= upper * E for every datum built on
    the calibrated basis and every interval of the given duration.  For the
    second-order models the table lists one row per distinct temporal
    frequency: (frequency, smallest and largest temporal Gram eigenvalue).
    """

    model: str
    mass: float
    duration: float
    lower: float
    upper: float
    mode_frequencies: tuple[float, ...]
    gram_minima: tuple[float, ...]
    gram_maxima: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "mass": self.mass,
            "duration": self.duration,
            "lower": self.lower,
            "upper": self.upper,
            "mode_table": [
                {"frequency": f, "gram_min": lo, "gram_max": hi}
                for f, lo, hi in zip(
                    self.mode_frequencies, self.gram_minima, self.gram_maxima
                )
            ],
        }


def calibration(
    model: str, basis: ModalBasis, mass: float, duration: float, t_start: float = 0.0
) -> CalibrationConstants:
    """Compute the interval observation constants over the simulated spectrum.

    The first-order model conserves the output norm pointwise in time, so both
    constants equal the interval length exactly.  For the second-order models
    each frequency contributes the eigenvalue band of its temporal Gram matrix
    (computed numerically from the closed-form entries); the zero-frequency
    mode carries velocity only and contributes the full interval length.  The
    lower constant is the infimum over the simulated spectrum only, which is
    exact for data supported on the calibrated basis.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if model == "schrodinger":
        if mass != 0.0:
            raise ValueError("schrodinger model carries no mass term")
        return CalibrationConstants(
            model=model,
            mass=0.0,
            duration=duration,
            lower=duration,
            upper=duration,
            mode_frequencies=(),
            gram_minima=(),
            gram_maxima=(),
        )
    if model not in ("wave", "klein_gordon"):
        raise ValueError(f"unknown model {model!r}")
    if model == "wave" and mass != 0.0:
        raise ValueError("wave model has mass 0; use klein_gordon otherwise")
    if model == "klein_gordon" and mass == 0.0:
        raise ValueError("klein_gordon needs a nonzero mass")
    rhos = np.unique(np.sqrt(basis.eigenvalues + mass * mass))
    minima: list[float] = []
    maxima: list[float] = []
    lower = math.inf
    for rho in rhos:
        eigs = np.linalg.eigvalsh(temporal_gram(float(rho), t_start, duration))
        minima.append(float(eigs[0]))
        maxima.append(float(eigs[1]))
        # the zero-frequency displacement is quotiented out, so that mode's
        # reachable output is the constant velocity: it contributes duration
        contribution = duration if rho == 0.0 else float(eigs[0])
        lower = min(lower, contribution)
    if lower <= 0.0:
        raise ValueError("degenerate calibration: lower constant is not positive")
    return CalibrationConstants(
        model=model,
        mass=mass,
        duration=duration,
        lower=lower,
        upper=duration,
        mode_frequencies=tuple(float(r) for r in rhos),
        gram_minima=tuple(minima),
        gram_maxima=tuple(maxima),
    )


@dataclass(frozen=True)
class IntervalRecord:
    """One interval of the protocol."""

    index: int             # 1-based interval number
    window: int            # design cutoff used on this interval
    tolerance: float       # switching loss target
    macro_count: int       # schedule repetitions realizing that target
    observed: float        # observation energy along the schedule
    running_mean: float    # mean of `observed` over intervals 1..index
    windowed_energy: float # conserved energy of the datum below `window`


@dataclass(eq=False)
class CesaroSeries:
    """Protocol output: interval records plus the context to re-derive them.

    The context (datum, designs, observation matrices) is kept so the
    verification reports can recompute interval energies for truncated data
    or alternative realizations without re-running the pipeline.
    """

    model: str
    mass: float
    measure: float
    duration: float
    energy: float
    constants: CalibrationConstants
    records: tuple[IntervalRecord, ...]
    datum: ModalDatum
    basis: ModalBasis
    designs: dict[int, ConvexDesign]
    design_bounds: dict[int, float]
    gammas: dict[int, tuple[ObservationMatrix, ...]]

    @property
    def reference_bound(self) -> float:
        """The asymptotic floor measure * lower_constant * energy."""
        return self.measure * self.constants.lower * self.energy

    @property
    def observed(self) -> np.ndarray:
        return np.array([r.observed for r in self.records])

    @property
    def running_means(self) -> np.ndarray:
        return np.array([r.running_mean for r in self.records])

    @property
    def final_mean(self) -> float:
        return self.records[-1].running_mean

    @property
    def final_quarter_minimum(self) -> float:
        """Minimum running mean over the last quarter of the run; the finite
        stand-in for the asymptotic lower limit."""
        count = max(1, len(self.records) // 4)
        return float(self.running_means[-count:].min())

    def interval(self, index: int) -> tuple[float, float]:
        """(start, duration) of interval `index` (1-based)."""
        return (index - 1) * self.duration, self.duration

    def schedule_for(self, index: int) -> SwitchingSchedule:
        """Rebuild the switching schedule used on interval `index`."""
        rec = self.records[index - 1]
        return build_switching(
            self.designs[rec.window],
            self.interval(index),
            self.design_bounds[rec.window],
            rec.tolerance,
        )

    def to_rows(self) -> list[tuple]:
        return [
            (
                r.index,
                r.window,
                r.tolerance,
                r.observed,
                r.running_mean,
                r.windowed_energy,
            )
            for r in self.records
        ]


def run_protocol(config, threads: int = 1) -> CesaroSeries:
    """Run the full switching protocol described by the config.

    For each interval: fetch (or build and cache) the equal-weight design for
    the interval's cutoff, build the switching schedule hitting the interval's
    loss target, and integrate the observed energy of the evolving datum in
    closed form.  Designs, Lipschitz bounds, and observation matrices are
    shared across intervals with equal cutoffs.
    """
    space = config.space()
    prototype = config.prototype()
    sim_basis = build_basis(space, config.sim_window)
    datum = random_datum(
        config.model,
        sim_basis,
        window=config.datum_window,
        decay=config.datum_decay,
        decay_power=config.datum_decay_power,
        seed=config.seed,
        mass=config.mass,
    )
    energy = conserved_energy(datum)
    constants = calibration(config.model, sim_basis, config.mass, config.duration)
    kind = output_kind_for(config.model)

    designs: dict[int, ConvexDesign] = {}
    design_bounds: dict[int, float] = {}
    gammas: dict[int, tuple[ObservationMatrix, ...]] = {}

    def prepare(window: int) -> None:
        if window in designs:
            return
        if window >= config.sim_window:
            raise WindowExceedsSimulation(
                f"window {window} needs modes outside the simulated cutoff "
                f"{config.sim_window}"
            )
        design_basis = build_basis(space, window)
        design = equispaced_design(design_basis, prototype)
        designs[window] = design
        design_bounds[window] = trajectory_lipschitz_bound(
            design_basis, config.model, config.mass, config.duration
        )
        gammas[window] = tuple(design_gammas(design, sim_basis, prototype))

    plan: list[tuple[int, int, float]] = []
    for m in range(1, config.interval_count + 1):
        window = config.window_at(m)
        tolerance = config.tolerance_at(m)
        prepare(window)
        plan.append((m, window, tolerance))

    def observe(item: tuple[int, int, float]) -> tuple[int, float]:
        m, window, tolerance = item
        schedule = build_switching(
            designs[window],
            ((m - 1) * config.duration, config.duration),
            design_bounds[window],
            tolerance,
        )
        value = windowed_observation_energy(datum, schedule, kind, list(gammas[window]))
        return schedule.macro_count, value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(observe, plan))
    else:
        results = [observe(item) for item in plan]

    records: list[IntervalRecord] = []
    total = 0.0
    for (m, window, tolerance), (macro_count, value) in zip(plan, results):
        total += value
        records.append(
            IntervalRecord(
                index=m,
                window=window,
                tolerance=tolerance,
                macro_count=macro_count,
                observed=value,
                running_mean=total / m,
                windowed_energy=energy.below(window),
            )
        )

    return CesaroSeries(
        model=config.model,
        mass=config.mass,
        measure=prototype.measure,
        duration=config.duration,
        energy=energy.total,
        constants=constants,
        records=tuple(records),
        datum=datum,
        basis=sim_basis,
        designs=designs,
        design_bounds=design_bounds,
        gammas=gammas,
    )


@dataclass(eq=False)
class TailReductionReport:
    """Numerical check of the hypotheses that discard the spectral tail.

    For each interval the observed energy is recomputed for the datum
    truncated at the interval's cutoff and for the complementary tail; the
    report verifies the uniform upper bound, the windowed lower bound, and
    the split inequality

        observed >= (1 - eta) * truncated - (1/eta - 1) * tail

    for every eta in the grid, and evaluates the running-mean floor each eta
    implies.
    """

    etas: tuple[float, ...]
    observed: np.ndarray
    truncated: np.ndarray
    tail: np.ndarray
    upper_margin: float            # max over m of observed / (upper * E)
    upper_ok: bool
    lower_margin: float            # min over m of truncated / windowed floor
    lower_ok: bool
    split_ok: dict[float, bool]
    eta_bounds: dict[float, float] # final-mean floor implied by each eta
    best_bound: float
    reference_bound: float
    tail_mean: float               # Cesaro average of tail energies E - E_leK
    tail_fraction: float           # tail_mean / E

    def to_dict(self) -> dict:
        return {
            "etas": list(self.etas),
            "upper_margin": self.upper_margin,
            "upper_ok": self.upper_ok,
            "lower_margin": self.lower_margin,
            "lower_ok": self.lower_ok,
            "split_ok": {str(k): v for k, v in self.split_ok.items()},
            "eta_bounds": {str(k): v for k, v in self.eta_bounds.items()},
            "best_bound": self.best_bound,
            "reference_bound": self.reference_bound,
            "tail_mean": self.tail_mean,
            "tail_fraction": self.tail_fraction,
        }


def tail_reduction_check(
    series: CesaroSeries, etas: tuple[float, ...] = (0.5, 0.1, 0.01)
) -> TailReductionReport:
    """Verify the tail-discarding hypotheses on a finished protocol run."""
    if any(eta <= 0.0 or eta >= 1.0 for eta in etas):
        raise ValueError("split parameters must lie in (0, 1)")
    kind = output_kind_for(series.model)
    observed = series.observed
    truncated = np.empty(len(series.records))
    tail = np.empty(len(series.records))
    floors = np.empty(len(series.records))
    for i, rec in enumerate(series.records):
        schedule = series.schedule_for(rec.index)
        gam = list(series.gammas[rec.window])
        truncated[i] = windowed_observation_energy(
            series.datum.windowed(rec.window), schedule, kind, gam
        )
        tail[i] = windowed_observation_energy(
            series.datum.tail(rec.window), schedule, kind, gam
        )
        floors[i] = (
            series.constants.lower
            * (series.measure - rec.tolerance)
            * rec.windowed_energy
        )

    scale = series.constants.upper * series.energy
    upper_margin = float(observed.max() / scale)
    upper_ok = bool(np.all(observed <= scale * (1.0 + 1e-10)))
    with np.errstate(divide="ignore", invalid="ignore"):
        lower_ratios = np.where(floors > 0, truncated / np.where(floors > 0, floors, 1.0), np.inf)
    lower_margin = float(lower_ratios.min())
    lower_ok = bool(np.all(truncated >= floors * (1.0 - 1e-10)))

    split_ok: dict[float, bool] = {}
    eta_bounds: dict[float, float] = {}
    slack = 1e-10 * max(series.energy, 1.0)
    for eta in etas:
        bound_terms = (1.0 - eta) * truncated - (1.0 / eta - 1.0) * tail
        split_ok[eta] = bool(np.all(observed >= bound_terms - slack))
        eta_bounds[eta] = float(bound_terms.mean())
    best_bound = max(eta_bounds.values())

    tails = series.energy - np.array([r.windowed_energy for r in series.records])
    tail_mean = float(tails.mean())
    return TailReductionReport(
        etas=tuple(etas),
        observed=observed,
        truncated=truncated,
        tail=tail,
        upper_margin=upper_margin,
        upper_ok=upper_ok,
        lower_margin=lower_margin,
        lower_ok=lower_ok,
        split_ok=split_ok,
        eta_bounds=eta_bounds,
        best_bound=best_bound,
        reference_bound=series.reference_bound,
        tail_mean=tail_mean,
        tail_fraction=tail_mean / series.energy,
    )


@dataclass(frozen=True)
class ContinuousIntervalRecord:
    """One interval of the continuous-path rerun at one speed."""

    index: int
    window: int
    macro_count: int
    certified_loss: float   # loss the path certifies (may exceed the measure)
    observed: float
    running_mean: float


@dataclass(eq=False)
class ContinuousReport:
    """Continuous-path rerun of the protocol over a ladder of speeds.

    For each speed the protocol intervals are re-realized by one continuous
    speed-bounded path each; the certified factor measure - loss(speed, R)
    must improve monotonically with speed, and for each interval the observed
    energy of the windowed datum must respect the certified factor times the
    full-torus interval energy.
    """

    speeds: tuple[float, ...]
    records: dict[float, tuple[ContinuousIntervalRecord, ...]]
    certified_factors: dict[float, float]  # worst certified factor per speed
    monotone_ok: bool
    realized_ok: bool
    realized_margin: float
    final_means: dict[float, float]

    def to_dict(self) -> dict:
        return {
            "speeds": list(self.speeds),
            "certified_factors": {str(v): f for v, f in self.certified_factors.items()},
            "monotone_ok": self.monotone_ok,
            "realized_ok": self.realized_ok,
            "realized_margin": self.realized_margin,
            "final_means": {str(v): f for v, f in self.final_means.items()},
            "records": {
                str(v): [
                    {
                        "interval": r.index,
                        "window": r.window,
                        "macro_count": r.macro_count,
                        "certified_loss": r.certified_loss,
                        "observed": r.observed,
                        "running_mean": r.running_mean,
                    }
                    for r in recs
                ]
                for v, recs in self.records.items()
            },
        }


def continuous_protocol_delta(config, speeds) -> ContinuousReport:
    """Rerun the protocol with continuous paths for each speed in the ladder.

    The realized-bound check is evaluated on the datum truncated at each
    interval's cutoff (the certificate covers the windowed part; the tail
    only adds energy), and only where the certified loss leaves a positive
    factor.
    """
    speeds = tuple(float(v) for v in speeds)
    if not speeds:
        raise ValueError("at least one speed is required")
    series = run_protocol(config)
    kind = output_kind_for(series.model)
    zero = series.basis.space.identity()
    gamma_base = gamma_matrix(series.basis, config.prototype(), zero)

    records: dict[float, tuple[ContinuousIntervalRecord, ...]] = {}
    certified: dict[float, float] = {}
    final_means: dict[float, float] = {}
    realized_ok = True
    realized_margin = math.inf
    for speed in speeds:
        recs: list[ContinuousIntervalRecord] = []
        total = 0.0
        worst_factor = math.inf
        for rec in series.records:
            t_start, duration = series.interval(rec.index)
            path = build_continuous(
                series.designs[rec.window],
                (t_start, duration),
                speed,
                series.design_bounds[rec.window],
            )
            value = path_observation_energy(series.datum, path, kind, gamma_base)
            total += value
            factor = max(series.measure - path.certified_loss, 0.0)
            worst_factor = min(worst_factor, factor)
            if factor > 0.0:
                part = series.datum.windowed(rec.window)
                part_value = path_observation_energy(part, path, kind, gamma_base)
                reference = interval_output_energy(part, t_start, duration, kind)
                if reference > 0.0:
                    ratio = part_value / (factor * reference)
                    realized_margin = min(realized_margin, ratio)
                    if part_value < factor * reference * (1.0 - 1e-9):
                        realized_ok = False
            recs.append(
                ContinuousIntervalRecord(
                    index=rec.index,
                    window=rec.window,
                    macro_count=path.macro_count,
                    certified_loss=path.certified_loss,
                    observed=value,
                    running_mean=total / rec.index,
                )
            )
        records[speed] = tuple(recs)
        certified[speed] = worst_factor
        final_means[speed] = recs[-1].running_mean

    monotone_ok = True
    for lo, hi in zip(speeds, speeds[1:]):
        if hi > lo:
            for r_lo, r_hi in zip(records[lo], records[hi]):
                if r_hi.certified_loss > r_lo.certified_loss * (1.0 + 1e-12):
                    monotone_ok = False
    return ContinuousReport(
        speeds=speeds,
        records=records,
        certified_factors=certified,
        monotone_ok=monotone_ok,
        realized_ok=realized_ok,
        realized_margin=realized_margin,
        final_means=final_means,
    )
