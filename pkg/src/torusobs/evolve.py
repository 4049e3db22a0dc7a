"""Exact spectral evolution and closed-form windowed observation energies.

Models on the torus, diagonal in the character basis:

  wave / klein_gordon   u_tt = Lap u - mass^2 u, modal frequency
                        rho_n = sqrt(lambda_n + mass^2);
                        state (a_n, b_n) = (displacement, velocity) rotates as
                        a -> a cos(rho t) + b sin(rho t)/rho,
                        b -> -a rho sin(rho t) + b cos(rho t).
                        The observed output is the time derivative (kinetic).
                        Mass zero quotients out the constant displacement:
                        the rho = 0 mode carries only a velocity coefficient.
  schrodinger           i u_t = Lap u; modal coefficients c_n pick up the
                        unit phase e^{i lambda_n t}.  The output is the field.

Conserved energy: sum(rho^2 |a|^2 + |b|^2) resp. sum |c|^2.

Every output coefficient trajectory is a sum of at most two complex
exponentials c * e^{i alpha t}.  All time integrals of Gram-weighted output
energies therefore reduce to the primitive

    int_{t1}^{t2} e^{i alpha t} dt = (t2-t1) * sinc(alpha (t2-t1) / 2) * e^{i alpha (t1+t2)/2},

which is exact for every alpha including alpha = 0 (the equal-frequency
degenerate case is the analytic sinc limit, no threshold branch needed), and

    sum_{r=0}^{R-1} e^{i alpha tau r} = e^{i delta (R-1)/2} * sin(R delta/2) / sin(delta/2),
    delta = alpha tau reduced mod 2 pi to (-pi, pi],

which aggregates the R repetitions of a macro-interval slot in O(1); this is
what makes 10^6-macro schedules affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .schedule import ContinuousPath, SwitchingSchedule
from .spectral import ModalBasis, ObservationMatrix

TWO_PI = 2.0 * math.pi

MODELS = ("wave", "klein_gordon", "schrodinger")

#: output kinds per model
FIELD = "field"
TIME_DERIVATIVE = "time_derivative"


class BasisMismatch(Exception):
    """Gram matrices and datum are built on different bases."""


@dataclass(frozen=True, eq=False)
class ModalDatum:
    """Modal coefficients of one datum on a simulation basis.

    wave/klein_gordon carry (a, b); schrodinger carries c.  Arrays are
    aligned with `basis.modes` and never mutated in place.
    """

    model: str
    mass: float
    basis: ModalBasis
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    c: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        d = self.basis.dim
        if self.model == "schrodinger":
            if self.mass != 0.0:
                raise ValueError("schrodinger model carries no mass term")
            if self.c is None or self.a is not None or self.b is not None:
                raise ValueError("schrodinger datum needs exactly the c array")
            if self.c.shape != (d,):
                raise ValueError("c has the wrong shape")
        else:
            if self.model == "wave" and self.mass != 0.0:
                raise ValueError("wave model has mass 0; use klein_gordon otherwise")
            if self.model == "klein_gordon" and self.mass == 0.0:
                raise ValueError("klein_gordon needs a nonzero mass")
            if self.a is None or self.b is None or self.c is not None:
                raise ValueError("wave/klein_gordon datum needs the (a, b) arrays")
            if self.a.shape != (d,) or self.b.shape != (d,):
                raise ValueError("(a, b) have the wrong shape")
            zero = self.rho == 0.0
            if np.any(zero) and np.any(self.a[zero] != 0.0):
                raise ValueError(
                    "zero-frequency displacement is quotiented out; a must vanish there"
                )

    @cached_property
    def rho(self) -> np.ndarray:
        """Temporal frequencies sqrt(lambda + mass^2) (wave/klein_gordon)."""
        return np.sqrt(self.basis.eigenvalues + self.mass * self.mass)

    def windowed(self, window: int) -> "ModalDatum":
        """Datum with all modes of max-norm above `window` zeroed."""
        return self._masked(self.basis.window_mask(window))

    def tail(self, window: int) -> "ModalDatum":
        """Datum with all modes of max-norm <= `window` zeroed."""
        return self._masked(~self.basis.window_mask(window))

    def _masked(self, mask: np.ndarray) -> "ModalDatum":
        if self.model == "schrodinger":
            return replace(self, c=self.c * mask)
        return replace(self, a=self.a * mask, b=self.b * mask)


def random_datum(
    model: str,
    basis: ModalBasis,
    window: int,
    decay: str = "flat",
    decay_power: float = 2.0,
    seed: int = 0,
    mass: float | None = None,
) -> ModalDatum:
    """Seeded complex Gaussian datum supported on modes |n|_inf <= window.

    decay "power" scales mode coefficients by (1 + |n|_2)^(-decay_power), so
    modal energies fall off like (1 + |n|)^(-2 p) in expectation; "flat"
    applies no scaling.  Identical (model, basis, window, decay, seed) give
    identical coefficients.
    """
    if decay not in ("flat", "power"):
        raise ValueError(f"unknown decay profile {decay!r}")
    if window < 0 or window > basis.cutoff:
        raise ValueError(f"window must lie in [0, {basis.cutoff}]")
    rng = np.random.default_rng(seed)
    d = basis.dim
    norms = np.linalg.norm(basis.mode_array.astype(float), axis=1)
    scale = (1.0 + norms) ** (-decay_power) if decay == "power" else np.ones(d)
    mask = basis.window_mask(window)

    def draw() -> np.ndarray:
        re = rng.standard_normal(d)
        im = rng.standard_normal(d)
        return (re + 1j * im) / math.sqrt(2.0)

    if model == "schrodinger":
        if mass not in (None, 0.0):
            raise ValueError("schrodinger model carries no mass term")
        c = draw() * scale * mask
        return ModalDatum(model=model, mass=0.0, basis=basis, c=c)
    if model == "wave":
        if mass not in (None, 0.0):
            raise ValueError("wave model has mass 0; use klein_gordon otherwise")
        mass = 0.0
    elif mass is None:
        mass = 1.0
    xi_a = draw()
    xi_b = draw()
    rho = np.sqrt(basis.eigenvalues + mass * mass)
    positive = rho > 0.0
    # scale the displacement by 1/rho so both summands of the modal energy
    # rho^2 |a|^2 + |b|^2 are unit-variance Gaussians before decay weighting
    a = np.where(positive, scale * xi_a / np.where(positive, rho, 1.0), 0.0)
    b = scale * xi_b
    return ModalDatum(model=model, mass=mass, basis=basis, a=a * mask, b=b * mask)


@dataclass(frozen=True, eq=False)
class EnergyDecomposition:
    """Conserved energy with its per-mode split and window partial sums."""

    total: float
    per_mode: np.ndarray
    window_sums: dict[int, float]

    def below(self, window: int) -> float:
        return self.window_sums[window]


def conserved_energy(datum: ModalDatum) -> EnergyDecomposition:
    """E = sum(rho^2 |a|^2 + |b|^2) for wave/klein_gordon, sum |c|^2 for
    schrodinger, with partial sums over every window up to the cutoff."""
    if datum.model == "schrodinger":
        per_mode = np.abs(datum.c) ** 2
    else:
        per_mode = (datum.rho * np.abs(datum.a)) ** 2 + np.abs(datum.b) ** 2
    sums = {
        k: float(per_mode[datum.basis.window_mask(k)].sum())
        for k in range(datum.basis.cutoff + 1)
    }
    return EnergyDecomposition(
        total=float(per_mode.sum()), per_mode=per_mode, window_sums=sums
    )


def evolve_to(datum: ModalDatum, t: float) -> ModalDatum:
    """Exact unitary evolution to absolute time t (zero-mode velocity is
    constant in the mass-zero quotient)."""
    if datum.model == "schrodinger":
        return replace(datum, c=datum.c * np.exp(1j * datum.basis.eigenvalues * t))
    rho = datum.rho
    cos = np.cos(rho * t)
    sin = np.sin(rho * t)
    positive = rho > 0.0
    safe_rho = np.where(positive, rho, 1.0)
    a_new = np.where(positive, datum.a * cos + datum.b * sin / safe_rho, datum.a)
    b_new = np.where(positive, -datum.a * safe_rho * sin + datum.b * cos, datum.b)
    return replace(datum, a=a_new, b=b_new)


def output_kind_for(model: str) -> str:
    return FIELD if model == "schrodinger" else TIME_DERIVATIVE


def output_expansion(datum: ModalDatum, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Output coefficients as sums of complex exponentials.

    Returns (C, alpha) of shape (dim, P): the output coefficient of mode n is
    v_n(t) = sum_p C[n, p] e^{i alpha[n, p] t}.  Schrodinger field output has
    one branch (alpha = lambda); the kinetic wave output has two
    (alpha = +-rho with C = (b +- i rho a)/2).
    """
    if datum.model == "schrodinger":
        if kind != FIELD:
            raise ValueError("schrodinger observations use the field output")
        c = datum.c[:, None]
        alpha = datum.basis.eigenvalues[:, None]
        return c.astype(complex), alpha.astype(float)
    if kind != TIME_DERIVATIVE:
        raise ValueError("wave/klein_gordon observations use the kinetic output")
    rho = datum.rho
    plus = (datum.b + 1j * rho * datum.a) / 2.0
    minus = (datum.b - 1j * rho * datum.a) / 2.0
    coeff = np.stack([plus, minus], axis=1)
    alpha = np.stack([rho, -rho], axis=1)
    return coeff.astype(complex), alpha.astype(float)


def phase_integral(alpha: np.ndarray, t1: float, t2: float) -> np.ndarray:
    """Exact elementwise integral of e^{i alpha t} over [t1, t2]."""
    dt = t2 - t1
    mid = 0.5 * (t1 + t2)
    # np.sinc(x) = sin(pi x)/(pi x); entire, so alpha = 0 needs no branch
    return dt * np.sinc(alpha * dt / TWO_PI) * np.exp(1j * alpha * mid)


def geometric_phase_sum(alpha: np.ndarray, tau: float, count: int) -> np.ndarray:
    """Exact elementwise sum of e^{i alpha tau r} for r = 0..count-1.

    Reduces alpha*tau mod 2 pi to delta in (-pi, pi] (each term is invariant
    under the reduction since r is an integer), then evaluates the Dirichlet
    ratio, which is stable because |sin(delta/2)| has no cancellation there.
    """
    x = alpha * tau
    delta = x - TWO_PI * np.round(x / TWO_PI)
    half = 0.5 * delta
    den = np.sin(half)
    safe = np.where(den == 0.0, 1.0, den)
    ratio = np.where(den == 0.0, float(count), np.sin(count * half) / safe)
    return ratio * np.exp(1j * (count - 1) * half)


def _flatten_expansion(
    coeff: np.ndarray, alpha: np.ndarray
) -> tuple[np.ndarray, np.ndarray, int]:
    branches = coeff.shape[1]
    return coeff.ravel(), alpha.ravel(), branches


def _expand_matrix(matrix: np.ndarray, branches: int) -> np.ndarray:
    """Lift a (dim, dim) mode matrix to the flattened (dim*P, dim*P) indexing."""
    if branches == 1:
        return matrix
    return np.kron(matrix, np.ones((branches, branches)))


def _check_gamma_basis(datum: ModalDatum, gamma: ObservationMatrix) -> None:
    if gamma.basis.modes != datum.basis.modes:
        raise BasisMismatch(
            "observation matrices must be assembled on the simulation basis"
        )


def windowed_observation_energy(
    datum: ModalDatum,
    schedule: SwitchingSchedule,
    kind: str,
    gammas: list[ObservationMatrix],
) -> float:
    """Observation energy of the datum along a switching schedule.

    Equals the sum over micro slots of v(t)^H Gamma(g_j) v(t) integrated in
    closed form; the R repetitions of each atom's slot are aggregated by the
    exact geometric phase sum.  Tail modes of the datum above the design
    cutoff are included; `gammas` must be on the datum's basis, aligned with
    the design atoms.
    """
    if len(gammas) != schedule.atom_count:
        raise ValueError("one observation matrix per design atom is required")
    for g in gammas:
        _check_gamma_basis(datum, g)
    coeff, alpha = output_expansion(datum, kind)
    flat_c, flat_a, branches = _flatten_expansion(coeff, alpha)
    diff = flat_a[None, :] - flat_a[:, None]
    geom = geometric_phase_sum(diff, schedule.macro_length, schedule.macro_count)
    tau = schedule.macro_length
    total = 0.0
    for j, gamma in enumerate(gammas):
        t1 = schedule.t_start + schedule.cum[j] * tau
        t2 = schedule.t_start + schedule.cum[j + 1] * tau
        base = phase_integral(diff, t1, t2)
        kernel = _expand_matrix(gamma.entries, branches) * base * geom
        total += float(np.real(np.vdot(flat_c, kernel @ flat_c)))
    return total


def interval_output_energy(
    datum: ModalDatum, t_start: float, duration: float, kind: str
) -> float:
    """Full-torus output energy over one interval (Gram = identity)."""
    coeff, alpha = output_expansion(datum, kind)
    flat_c, flat_a, branches = _flatten_expansion(coeff, alpha)
    diff = flat_a[None, :] - flat_a[:, None]
    base = phase_integral(diff, t_start, t_start + duration)
    kernel = _expand_matrix(np.eye(datum.basis.dim), branches) * base
    return float(np.real(np.vdot(flat_c, kernel @ flat_c)))


def path_observation_energy(
    datum: ModalDatum,
    path: ContinuousPath,
    kind: str,
    gamma_base: ObservationMatrix,
) -> float:
    """Observation energy along a continuous path.

    `gamma_base` is Gamma at shift 0 on the datum's basis; translation enters
    through the entrywise phases e^{2 pi i (n_j - n_i) . g}.  On a transit leg
    the position is affine in t, so the phase stays a complex exponential and
    every segment integral remains closed-form.  Macro repetitions aggregate
    exactly as for switching schedules.
    """
    _check_gamma_basis(datum, gamma_base)
    if any(x != 0.0 for x in gamma_base.shift.as_floats()):
        raise ValueError("gamma_base must be the unshifted observation matrix")
    coeff, alpha = output_expansion(datum, kind)
    flat_c, flat_a, branches = _flatten_expansion(coeff, alpha)
    diff = flat_a[None, :] - flat_a[:, None]
    geom = geometric_phase_sum(diff, path.macro_length, path.macro_count)
    modes = datum.basis.mode_array.astype(float)
    # mdiff[i, j, axis] = n_j - n_i, lifted to the flattened indexing
    mdiff = modes[None, :, :] - modes[:, None, :]
    base_entries = _expand_matrix(gamma_base.entries, branches)

    def lifted_phase_rate(vector: np.ndarray) -> np.ndarray:
        """TWO_PI * mdiff . vector on the flattened indexing."""
        rate = TWO_PI * (mdiff @ np.asarray(vector, dtype=float))
        return _expand_matrix(rate, branches)

    total = 0.0
    for seg in path.template:
        t1 = path.t_start + seg.offset_start
        t2 = path.t_start + seg.offset_end
        if t2 <= t1:
            continue
        shift_phase = np.exp(1j * lifted_phase_rate(seg.position))
        if seg.kind == "dwell":
            base = phase_integral(diff, t1, t2)
        else:
            rate = lifted_phase_rate(seg.velocity)
            # e^{i rate (t - t1)} folded into the exponential integral
            base = np.exp(-1j * rate * t1) * phase_integral(diff + rate, t1, t2)
        kernel = base_entries * shift_phase * base * geom
        total += float(np.real(np.vdot(flat_c, kernel @ flat_c)))
    return total
