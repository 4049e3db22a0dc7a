"""Modal bases on the torus and observation Gram matrices.

The profile space at cutoff K is spanned by the characters
e_n(y) = e^{2 pi i n.y} over integer frequency vectors with max-norm <= K,
listed in lexicographic order; the Laplacian eigenvalue of e_n is
lambda_n = 4 pi^2 |n|_2^2.

The observation matrix of a translated set g.omega is, in bra-ket convention,

    Gamma(g)[i, j] = integral over g.omega of conj(e_i) e_j dmu,

so that v^H Gamma(g) v is the energy of sum_n v_n e_n restricted to g.omega.
Entry (i, j) equals the indicator Fourier coefficient of g.omega at n_i - n_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .geometry import GroupElement, PrototypeSet, TorusSpace

FOUR_PI_SQ = 4.0 * math.pi**2

#: guard against accidentally huge profile spaces
DEFAULT_MAX_DIM = 4096


@dataclass(frozen=True)
class ModalBasis:
    """Characters with frequency max-norm <= cutoff, in lexicographic order."""

    space: TorusSpace
    cutoff: int
    modes: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.modes)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Laplacian eigenvalues 4 pi^2 |n|^2, aligned with `modes`."""
        sq = np.array([sum(c * c for c in n) for n in self.modes], dtype=float)
        return FOUR_PI_SQ * sq

    @cached_property
    def mode_array(self) -> np.ndarray:
        return np.array(self.modes, dtype=int)

    def window_mask(self, window: int) -> np.ndarray:
        """Boolean mask selecting modes with max-norm <= window."""
        return np.max(np.abs(self.mode_array), axis=1) <= window

    def index_of(self, mode: tuple[int, ...]) -> int:
        return self.modes.index(mode)


def build_basis(space: TorusSpace, cutoff: int, max_dim: int = DEFAULT_MAX_DIM) -> ModalBasis:
    """All modes with |n|_inf <= cutoff, lexicographic, with a size guard."""
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    dim = (2 * cutoff + 1) ** space.dim
    if dim > max_dim:
        raise ValueError(
            f"profile space would have dimension {dim} > maximum {max_dim}"
        )
    rng = range(-cutoff, cutoff + 1)
    modes = tuple(product(rng, repeat=space.dim))
    return ModalBasis(space=space, cutoff=cutoff, modes=modes)


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """Gram matrix of the modal basis restricted to a translated set.

    Hermitian and positive semidefinite with eigenvalues in [0, 1] and trace
    dim * measure(set).  Frozen value object; `entries` must not be mutated.
    """

    basis: ModalBasis
    prototype: PrototypeSet
    shift: GroupElement
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.dim

    def restricted_energy(self, coefficients: np.ndarray) -> float:
        """Energy of sum_n v_n e_n over the translated set: Re(v^H Gamma v)."""
        v = np.asarray(coefficients, dtype=complex)
        return float(np.real(np.vdot(v, self.entries @ v)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def validate(self, atol: float = 1e-12) -> None:
        """Check Hermitian symmetry, spectrum in [0,1], and the trace value."""
        a = self.entries
        if not np.allclose(a, a.conj().T, atol=atol, rtol=0.0):
            raise AssertionError("observation matrix is not Hermitian")
        eig = self.eigenvalues()
        if eig.min() < -atol or eig.max() > 1.0 + atol:
            raise AssertionError(f"spectrum {eig.min()}..{eig.max()} outside [0,1]")
        expected = self.dim * self.prototype.measure
        if abs(np.trace(a).real - expected) > max(atol, 1e-12 * self.dim):
            raise AssertionError("trace does not equal dim * measure")

    def to_debug_dict(self) -> dict:
        """Row-major re/im pairs for ad-hoc inspection (not a stable format)."""
        return {
            "cutoff": self.basis.cutoff,
            "shift": [float(s) for s in self.shift.as_floats()],
            "entries": [
                [[float(z.real), float(z.imag)] for z in row] for row in self.entries
            ],
        }


def gamma_matrix(basis: ModalBasis, prototype: PrototypeSet, shift: GroupElement) -> ObservationMatrix:
    """Assemble Gamma(g) exactly from indicator Fourier coefficients.

    Coefficients are evaluated once per frequency difference (max-norm <= 2K)
    and placed at entries[i, j] = coeff(n_i - n_j) of the translated set.
    """
    if basis.space != prototype.space:
        raise ValueError("basis and prototype live on different tori")
    if shift.dim != basis.space.dim:
        raise ValueError("shift dimension does not match the torus")
    translated = prototype.translate(shift)
    k2 = 2 * basis.cutoff
    rng = range(-k2, k2 + 1)
    coeff = {
        m: translated.fourier_coefficient(m)
        for m in product(rng, repeat=basis.space.dim)
    }
    n = basis.dim
    entries = np.empty((n, n), dtype=complex)
    for i, ni in enumerate(basis.modes):
        for j, nj in enumerate(basis.modes):
            entries[i, j] = coeff[tuple(a - b for a, b in zip(ni, nj))]
    entries.setflags(write=False)
    return ObservationMatrix(basis=basis, prototype=prototype, shift=shift, entries=entries)


def temporal_gram_min_eigenvalue(rho: float, duration: float) -> float:
    """Smallest eigenvalue of the 2x2 temporal Gram of {sin(rho t), cos(rho t)}
    over any interval of the given duration: T/2 - |sin(rho T)| / (2 rho).

    The zero-frequency mode is velocity-only (constant output) and contributes
    the full duration.
    """
    if rho == 0.0:
        return duration
    return duration / 2.0 - abs(math.sin(rho * duration)) / (2.0 * rho)


def trajectory_lipschitz_bound(
    basis: ModalBasis, model: str, mass: float, duration: float
) -> float:
    """Certified Lipschitz constant for windowed observation densities.

    For trajectories V built from the given basis, normalized to unit total
    interval energy, every t -> restricted-energy curve F(t) (any observation
    set, including the full torus) satisfies |F'| <= Lambda with

        wave / klein_gordon:  Lambda = 2 rho_max / c   (rho_n = sqrt(lambda_n + mass^2),
                              c = min_n of the temporal Gram minimum eigenvalue),
        schrodinger:          Lambda = 2 lambda_max / duration
                              (the full-torus density is constant in t).

    This is an over-estimate: validity of downstream certificates never
    depends on its tightness.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if basis.dim == 0:
        raise ValueError("basis must be nonempty")
    lam = basis.eigenvalues
    if model == "schrodinger":
        return 2.0 * float(lam.max()) / duration
    if model in ("wave", "klein_gordon"):
        rho = np.sqrt(lam + mass * mass)
        c = min(temporal_gram_min_eigenvalue(float(r), duration) for r in rho)
        if c <= 0:
            raise ValueError(
                f"temporal Gram degenerates (c = {c}); duration too short for this spectrum"
            )
        return 2.0 * float(rho.max()) / c
    raise ValueError(f"unknown model {model!r}")
