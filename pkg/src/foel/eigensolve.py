"""Sector eigensolvers and the spin / momentum labeling of their eigenvectors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from foel.basis import Geometry, Sector, SectorBasis, enumerate_sector
from foel.config import DEFAULT_DENSE_THRESHOLD, DEFAULT_SEED, SolverTolerances
from foel.errors import LabelAmbiguityError, SolverConvergenceError
from foel.operators import (
    apply_total_spin,
    apply_translation_op,
    build_sparse,
    two_h_linear_operator,
)

logger = logging.getLogger(__name__)

SolveMethod = Literal["dense", "lanczos"]

LEAKAGE_SAFETY = 10.0


@dataclass(frozen=True)
class LabeledLevel:
    """An eigenvalue of 2H together with the total spin and momenta of its eigenspace."""

    energy_2h: float
    total_spin_s: float
    momentum_indices: tuple[int, ...]
    multiplicity: int
    spin_residual: float = 0.0

    @property
    def energy_h(self) -> float:
        return self.energy_2h / 2


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    sector: Sector
    method: SolveMethod
    tolerances: SolverTolerances
    energies: np.ndarray
    vectors: np.ndarray | None = field(default=None, repr=False)
    levels: tuple[LabeledLevel, ...] = ()
    max_residual: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.sector.n_sites

    def levels_with_spin(self, spin: float) -> list[LabeledLevel]:
        return [level for level in self.levels if math.isclose(level.total_spin_s, spin)]

    def minimum_for_spin(self, spin: float) -> float | None:
        energies = [level.energy_2h for level in self.levels_with_spin(spin)]
        return min(energies) if energies else None

    def minimum_for_momentum(self, index: int) -> float | None:
        energies = [
            level.energy_2h for level in self.levels if index in level.momentum_indices
        ]
        return min(energies) if energies else None


def cluster_energies(energies: np.ndarray, tolerance: float) -> list[np.ndarray]:
    """Group sorted eigenvalue positions whose neighbours differ by less than the tolerance.

    The tolerance is relative to max(1, |E|), so it is absolute near zero.
    """
    if len(energies) == 0:
        return []
    clusters: list[list[int]] = [[0]]
    for position in range(1, len(energies)):
        previous = energies[position - 1]
        scale = max(1.0, abs(previous))
        if energies[position] - previous <= tolerance * scale:
            clusters[-1].append(position)
        else:
            clusters.append([position])
    return [np.asarray(cluster) for cluster in clusters]


def _residuals(basis: SectorBasis, energies: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    operator = two_h_linear_operator(basis)
    applied = np.column_stack([operator.matvec(vectors[:, col]) for col in range(vectors.shape[1])])
    return np.linalg.norm(applied - vectors * energies, axis=0)


def full_spectrum(
    basis: SectorBasis,
    *,
    tolerances: SolverTolerances | None = None,
    threshold: int = DEFAULT_DENSE_THRESHOLD,
    label: bool = True,
) -> SpectrumReport:
    tolerances = tolerances or SolverTolerances()
    matrix = build_sparse(basis, "two_h", threshold=threshold).toarray()
    energies, vectors = scipy.linalg.eigh(matrix)
    residual = float(np.max(np.linalg.norm(matrix @ vectors - vectors * energies, axis=0)))
    if residual > tolerances.residual_dense:
        raise SolverConvergenceError(
            f"Dense eigensolver residual {residual:.3e} exceeds "
            f"{tolerances.residual_dense:.1e} for N={basis.n_sites} k={basis.sector.n_magnons}.",
            residual=residual,
        )
    logger.info(
        "Dense spectrum N=%d k=%d %s: dim=%d, max residual %.2e",
        basis.n_sites,
        basis.sector.n_magnons,
        basis.geometry.value,
        basis.dimension,
        residual,
    )
    report = SpectrumReport(
        sector=basis.sector,
        method="dense",
        tolerances=tolerances,
        energies=energies,
        vectors=vectors,
        max_residual=residual,
    )
    return label_levels(report, basis) if label else report


def _complete_clusters(energies: np.ndarray, count: int, tolerance: float, exhaustive: bool) -> int:
    """Number of leading eigenvalues forming whole clusters that cover ``count`` values.

    Returns 0 when the clusters covering ``count`` might be cut off at the top.
    """
    clusters = cluster_energies(energies, tolerance)
    kept = 0
    for position, cluster in enumerate(clusters):
        is_last = position == len(clusters) - 1
        if is_last and not exhaustive:
            return 0
        kept += len(cluster)
        if kept >= count:
            return kept
    return kept


def lowest_band(
    basis: SectorBasis,
    count: int,
    *,
    tolerances: SolverTolerances | None = None,
    threshold: int = DEFAULT_DENSE_THRESHOLD,
    seed: int = DEFAULT_SEED,
    pad: int = 8,
    max_iter: int = 5000,
    label: bool = True,
) -> SpectrumReport:
    """The ``count`` lowest eigenpairs of 2H by implicitly restarted Lanczos.

    Whole degenerate clusters are kept, so the report can hold more than
    ``count`` energies. Sectors too small for Lanczos are solved densely.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    tolerances = tolerances or SolverTolerances()
    dim = basis.dimension

    if dim <= count + pad + 1:
        report = full_spectrum(basis, tolerances=tolerances, threshold=max(threshold, dim), label=False)
        kept = _complete_clusters(report.energies, count, tolerances.degeneracy, exhaustive=True)
        report = replace(
            report,
            energies=report.energies[:kept],
            vectors=report.vectors[:, :kept],  # type: ignore[index]
        )
        return label_levels(report, basis) if label else report

    if dim <= threshold:
        operator = build_sparse(basis, "two_h", threshold=threshold).matrix
    else:
        operator = two_h_linear_operator(basis)

    rng = np.random.default_rng(seed)
    start = rng.standard_normal(dim)
    requested = count + pad
    while True:
        requested = min(requested, dim - 1)
        try:
            energies, vectors = scipy.sparse.linalg.eigsh(
                operator, k=requested, which="SA", v0=start, maxiter=max_iter, tol=0
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverConvergenceError(
                f"Lanczos did not converge for N={basis.n_sites} k={basis.sector.n_magnons} "
                f"after {max_iter} iterations ({len(exc.eigenvalues)} of {requested} pairs)."
            ) from exc
        order = np.argsort(energies)
        energies, vectors = energies[order], vectors[:, order]
        kept = _complete_clusters(
            energies, count, tolerances.degeneracy, exhaustive=requested == dim - 1
        )
        if kept:
            break
        if requested == dim - 1:
            raise SolverConvergenceError(
                f"Could not isolate complete clusters for N={basis.n_sites} "
                f"k={basis.sector.n_magnons}."
            )
        logger.debug("Top Lanczos cluster may be cut; widening request from %d", requested)
        requested *= 2

    energies, vectors = energies[:kept], vectors[:, :kept]
    residual = float(np.max(_residuals(basis, energies, vectors)))
    if residual > tolerances.residual_lanczos:
        raise SolverConvergenceError(
            f"Lanczos residual {residual:.3e} exceeds {tolerances.residual_lanczos:.1e} "
            f"for N={basis.n_sites} k={basis.sector.n_magnons}.",
            residual=residual,
        )
    logger.info(
        "Lanczos band N=%d k=%d: %d pairs kept, max residual %.2e",
        basis.n_sites,
        basis.sector.n_magnons,
        kept,
        residual,
    )
    report = SpectrumReport(
        sector=basis.sector,
        method="lanczos",
        tolerances=tolerances,
        energies=energies,
        vectors=vectors,
        max_residual=residual,
    )
    return label_levels(report, basis) if label else report


def spin_from_casimir(value: float, n_sites: int, tolerance: float, *, energy: float = math.nan) -> float:
    """Invert s(s+1) = value onto the half-integers compatible with N."""
    estimate = (-1 + math.sqrt(max(1 + 4 * value, 0.0))) / 2
    # s is an integer for even N and a half-integer for odd N.
    offset = 0.5 if n_sites % 2 else 0.0
    spin = round(estimate - offset) + offset
    spin = max(spin, offset)
    if abs(spin * (spin + 1) - value) >= tolerance:
        raise LabelAmbiguityError(
            f"S^2 Rayleigh quotient {value:.10f} at 2H={energy:.10f} is not within "
            f"{tolerance:.1e} of any s(s+1).",
            energy=energy,
            value=value,
        )
    return spin


def momentum_from_eigenvalue(value: complex, n_sites: int, tolerance: float, *, energy: float = math.nan) -> int:
    """Index j of a translation eigenvalue e^{2 pi i j / N}."""
    angle = np.angle(value)
    index = int(round(angle * n_sites / (2 * math.pi))) % n_sites
    expected = np.exp(2j * math.pi * index / n_sites)
    if abs(value - expected) >= tolerance:
        raise LabelAmbiguityError(
            f"Translation eigenvalue {value:.8f} at 2H={energy:.10f} is not an N-th root of unity.",
            energy=energy,
            value=value,
        )
    return index


def _columns(apply, basis: SectorBasis, block: np.ndarray) -> np.ndarray:
    return np.column_stack([apply(basis, block[:, col]) for col in range(block.shape[1])])


def _leakage_tolerance(
    report: SpectrumReport,
    clusters: list[np.ndarray],
    position: int,
    operator_norm: float,
) -> float:
    """Largest leakage of a cluster out of an invariant subspace that still counts as noise.

    A solver backward error r rotates eigenvectors across a spectral gap g by
    up to r / g, so an operator of norm B leaks by up to B r / g.
    """
    energies = report.energies
    cluster = clusters[position]
    gap = math.inf
    if position > 0:
        gap = min(gap, float(energies[cluster[0]] - energies[clusters[position - 1][-1]]))
    if position < len(clusters) - 1:
        gap = min(gap, float(energies[clusters[position + 1][0]] - energies[cluster[-1]]))
    # 2H has norm at most 2 * edges and a ring has N edges
    noise = max(report.max_residual, float(np.finfo(float).eps) * 2 * report.n_sites)
    bound = LEAKAGE_SAFETY * operator_norm * noise / gap if gap > 0 else math.inf
    return max(report.tolerances.residual_lanczos, bound)


def label_levels(report: SpectrumReport, basis: SectorBasis | None = None) -> SpectrumReport:
    """Attach total spin and momentum labels to every eigenvalue cluster of a report."""
    if report.vectors is None:
        raise ValueError("Labeling needs the eigenvectors of the report.")
    if basis is None:
        basis = enumerate_sector(report.sector)
    tolerances = report.tolerances
    n_sites = basis.n_sites
    is_ring = basis.geometry is Geometry.RING
    levels: list[LabeledLevel] = []

    half = n_sites / 2
    spin_norm = half * (half + 1)
    clusters = cluster_energies(report.energies, tolerances.degeneracy)
    for position, cluster in enumerate(clusters):
        block = report.vectors[:, cluster]
        energy = float(np.mean(report.energies[cluster]))
        spin_block = _columns(apply_total_spin, basis, block)
        casimir = block.T @ spin_block
        casimir = (casimir + casimir.T) / 2
        values, rotation = np.linalg.eigh(casimir)
        invariance = float(np.linalg.norm(spin_block - block @ casimir))
        if invariance > tolerances.residual_lanczos:
            logger.debug("Eigenspace at 2H=%.10f leaks %.2e out of S^2 invariance", energy, invariance)
        if invariance > _leakage_tolerance(report, clusters, position, spin_norm):
            raise LabelAmbiguityError(
                f"Eigenspace at 2H={energy:.10f} is not S^2-invariant (residual {invariance:.2e}).",
                energy=energy,
                value=invariance,
            )

        spins = [spin_from_casimir(value, n_sites, tolerances.label, energy=energy) for value in values]
        for spin in sorted(set(spins)):
            columns = [col for col, label in enumerate(spins) if label == spin]
            spin_residual = max(abs(spin * (spin + 1) - values[col]) for col in columns)
            momenta: tuple[int, ...] = ()
            if is_ring:
                sub = block @ rotation[:, columns]
                shifted = _columns(apply_translation_op, basis, sub)
                restricted = sub.T @ shifted
                drift = float(np.linalg.norm(shifted - sub @ restricted))
                if drift > _leakage_tolerance(report, clusters, position, 2.0):
                    raise LabelAmbiguityError(
                        f"Eigenspace at 2H={energy:.10f}, s={spin} is not T-invariant "
                        f"(residual {drift:.2e}).",
                        energy=energy,
                        value=drift,
                    )
                phases = np.linalg.eigvals(restricted)
                momenta = tuple(
                    sorted(
                        {
                            momentum_from_eigenvalue(phase, n_sites, tolerances.momentum, energy=energy)
                            for phase in phases
                        }
                    )
                )
            levels.append(
                LabeledLevel(
                    energy_2h=energy,
                    total_spin_s=spin,
                    momentum_indices=momenta,
                    multiplicity=len(columns),
                    spin_residual=float(spin_residual),
                )
            )

    levels.sort(key=lambda level: (level.energy_2h, level.total_spin_s))
    logger.debug("Labeled %d levels for N=%d", len(levels), n_sites)
    return replace(report, levels=tuple(levels))


def spin_projected_minimum(
    basis: SectorBasis,
    *,
    tolerances: SolverTolerances | None = None,
    seed: int = DEFAULT_SEED,
    max_iter: int = 5000,
) -> LabeledLevel:
    """Lowest 2H level with the smallest spin s = |N/2 - k| of the sector.

    Lanczos runs on 2H + N (S^2 - s(s+1)): every level with spin s' > s is
    raised by at least 2N(s+1), above the whole spectrum of 2H.
    """
    tolerances = tolerances or SolverTolerances()
    spin = abs(basis.sector.magnetization)
    target = spin * (spin + 1)
    dim = basis.dimension
    operator = two_h_linear_operator(basis, spin_penalty=(float(basis.n_sites), target))
    if dim <= 3:
        matrix = np.column_stack([operator.matvec(column) for column in np.eye(dim)])
        values, vectors = np.linalg.eigh(matrix)
    else:
        start = np.random.default_rng(seed).standard_normal(dim)
        try:
            values, vectors = scipy.sparse.linalg.eigsh(
                operator, k=min(2, dim - 1), which="SA", v0=start, maxiter=max_iter, tol=0
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise SolverConvergenceError(
                f"Spin-projected Lanczos did not converge for N={basis.n_sites} "
                f"k={basis.sector.n_magnons}."
            ) from exc
    lowest = int(np.argmin(values))
    vector = vectors[:, lowest]
    two_h = two_h_linear_operator(basis).matvec(vector)
    energy = float(vector @ two_h)
    residual = float(np.linalg.norm(two_h - energy * vector))
    if residual > tolerances.residual_lanczos:
        raise SolverConvergenceError(
            f"Spin-projected residual {residual:.3e} exceeds {tolerances.residual_lanczos:.1e}.",
            residual=residual,
        )
    casimir = float(vector @ apply_total_spin(basis, vector))
    labeled = spin_from_casimir(casimir, basis.n_sites, tolerances.label, energy=energy)
    if not math.isclose(labeled, spin):
        raise LabelAmbiguityError(
            f"Spin-projected vector has s={labeled}, expected s={spin}.",
            energy=energy,
            value=casimir,
        )
    logger.info(
        "Spin-projected minimum N=%d k=%d s=%s: 2H=%.12f",
        basis.n_sites,
        basis.sector.n_magnons,
        spin,
        energy,
    )
    return LabeledLevel(
        energy_2h=energy,
        total_spin_s=spin,
        momentum_indices=(),
        multiplicity=1,
        spin_residual=abs(casimir - target),
    )
