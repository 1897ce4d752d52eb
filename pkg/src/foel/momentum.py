"""Momentum-resolved blocks of 2H and S^2 built from translation orbits.

The momentum-j state of an orbit with representative r and period p is

    |r, j> = p^{-1/2} sum_{l<p} exp(-2 pi i j l / N) T^l |r>,

which exists iff j * p is a multiple of N and satisfies T|r, j> = exp(2 pi i j / N)|r, j>.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from foel.basis import Geometry, SectorBasis, TranslationOrbit, orbit_decompose
from foel.config import SolverTolerances
from foel.eigensolve import cluster_energies, spin_from_casimir
from foel.errors import GeometryError
from foel.operators import EdgeSet, total_spin_shift

logger = logging.getLogger(__name__)

BlockKind = Literal["two_h", "total_spin"]


@dataclass(frozen=True, eq=False)
class MomentumBlock:
    index: int
    orbits: tuple[TranslationOrbit, ...]
    matrix: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.orbits)


@dataclass(frozen=True)
class MomentumLevel:
    index: int
    energy_2h: float
    total_spin_s: float
    multiplicity: int


def _compatible(orbit: TranslationOrbit, index: int, n_sites: int) -> bool:
    return (index * orbit.period) % n_sites == 0


def _row_terms(bits: int, pairs: list[tuple[int, int]], diagonal: float, off: float, per_anti: float) -> list[tuple[int, float]]:
    terms = [(bits, diagonal)]
    for u, v in pairs:
        if (bits >> u & 1) != (bits >> v & 1):
            terms[0] = (bits, terms[0][1] + per_anti)
            terms.append((bits ^ (1 << u | 1 << v), off))
    return terms


def momentum_block(
    basis: SectorBasis,
    index: int,
    which: BlockKind = "two_h",
    *,
    orbits: list[TranslationOrbit] | None = None,
) -> MomentumBlock:
    """Hermitian matrix of 2H (or S^2) on the momentum-``index`` orbit states."""
    if basis.geometry is not Geometry.RING:
        raise GeometryError("Momentum blocks are only defined on rings.")
    n_sites = basis.n_sites
    index %= n_sites
    orbits = orbits if orbits is not None else orbit_decompose(basis)
    kept = tuple(orbit for orbit in orbits if _compatible(orbit, index, n_sites))
    position = {orbit.representative.bits: row for row, orbit in enumerate(kept)}
    period = {orbit.representative.bits: orbit.period for orbit in orbits}

    if which == "two_h":
        pairs = EdgeSet.for_geometry(n_sites, Geometry.RING).zero_based()
        diagonal, off, per_anti = 0.0, -1.0, 1.0
    elif which == "total_spin":
        pairs = [(i, j) for i in range(n_sites) for j in range(i + 1, n_sites)]
        diagonal = total_spin_shift(n_sites, basis.sector.n_magnons)
        off, per_anti = 1.0, 0.0
    else:
        raise ValueError(f"Unknown block kind '{which}'.")

    phase = 2 * math.pi * index / n_sites
    matrix = np.zeros((len(kept), len(kept)), dtype=complex)
    for col, orbit in enumerate(kept):
        source = orbit.representative.bits
        for target, weight in _row_terms(source, pairs, diagonal, off, per_anti):
            if weight == 0:
                continue
            rep, shift = basis.representative_of(target)
            row = position.get(rep)
            if row is None:
                continue
            matrix[row, col] += weight * cmath.exp(1j * phase * shift) * math.sqrt(
                orbit.period / period[rep]
            )
    return MomentumBlock(index=index, orbits=kept, matrix=matrix)


def momentum_spectra(
    basis: SectorBasis,
    *,
    tolerances: SolverTolerances | None = None,
) -> list[MomentumLevel]:
    """Spin-labeled 2H levels of every momentum block, sorted by (index, energy)."""
    tolerances = tolerances or SolverTolerances()
    orbits = orbit_decompose(basis)
    n_sites = basis.n_sites
    levels: list[MomentumLevel] = []
    for index in range(n_sites):
        block = momentum_block(basis, index, orbits=orbits)
        if block.dimension == 0:
            continue
        spin_block = momentum_block(basis, index, "total_spin", orbits=orbits).matrix
        energies, vectors = np.linalg.eigh(block.matrix)
        for cluster in cluster_energies(energies, tolerances.degeneracy):
            sub = vectors[:, cluster]
            casimir = sub.conj().T @ spin_block @ sub
            values = np.linalg.eigvalsh((casimir + casimir.conj().T) / 2)
            energy = float(np.mean(energies[cluster]))
            spins = [spin_from_casimir(float(value), n_sites, tolerances.label, energy=energy) for value in values]
            for spin in sorted(set(spins)):
                levels.append(
                    MomentumLevel(
                        index=index,
                        energy_2h=energy,
                        total_spin_s=spin,
                        multiplicity=spins.count(spin),
                    )
                )
        logger.debug("Momentum block j=%d of N=%d: dim=%d", index, n_sites, block.dimension)
    logger.info(
        "Momentum spectra N=%d k=%d: %d orbits, %d levels",
        n_sites,
        basis.sector.n_magnons,
        len(orbits),
        len(levels),
    )
    return levels
