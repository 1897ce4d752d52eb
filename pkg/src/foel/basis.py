"""Ising configurations of fixed magnetization on rings and open chains.

Site ``j`` (0-based) carries a down spin iff bit ``j`` of the configuration is
set, so the number of set bits is the magnon count ``k``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from math import comb
from typing import Iterable

import numpy as np

from foel.errors import CapacityError, GeometryError

logger = logging.getLogger(__name__)

MAX_SITES = 32


class Geometry(str, enum.Enum):
    RING = "ring"
    CHAIN = "chain"


def _site_mask(n_sites: int) -> int:
    return (1 << n_sites) - 1


@dataclass(frozen=True, order=True)
class SpinConfiguration:
    bits: int
    n_sites: int

    def __post_init__(self) -> None:
        if not 2 <= self.n_sites <= MAX_SITES:
            raise CapacityError(
                f"N={self.n_sites} is outside the supported range 2..{MAX_SITES}."
            )
        if self.bits < 0 or self.bits & ~_site_mask(self.n_sites):
            raise CapacityError(
                f"Configuration {self.bits:#x} sets bits beyond site {self.n_sites}."
            )

    @classmethod
    def from_down_sites(cls, sites: Iterable[int], n_sites: int) -> SpinConfiguration:
        """Build a configuration from 1-based down-spin site labels."""
        bits = 0
        for site in sites:
            bits |= 1 << (site - 1)
        return cls(bits, n_sites)

    @property
    def n_down(self) -> int:
        return self.bits.bit_count()

    def down_sites(self) -> tuple[int, ...]:
        """1-based labels of the down spins."""
        return tuple(j + 1 for j in range(self.n_sites) if self.bits >> j & 1)

    def label(self) -> str:
        return "".join("d" if self.bits >> j & 1 else "u" for j in range(self.n_sites))


@dataclass(frozen=True)
class Sector:
    n_sites: int
    n_magnons: int
    geometry: Geometry = Geometry.RING

    def __post_init__(self) -> None:
        if not 2 <= self.n_sites <= MAX_SITES:
            raise CapacityError(
                f"N={self.n_sites} is outside the supported range 2..{MAX_SITES}."
            )
        if not 0 <= self.n_magnons <= self.n_sites:
            raise CapacityError(
                f"Magnon count k={self.n_magnons} must lie in 0..{self.n_sites}."
            )
        if self.geometry is Geometry.RING and self.n_sites < 3:
            raise CapacityError("A ring needs at least 3 sites; use a chain for N=2.")

    @property
    def dimension(self) -> int:
        return comb(self.n_sites, self.n_magnons)

    @property
    def magnetization(self) -> float:
        """S^z eigenvalue m = N/2 - k."""
        return self.n_sites / 2 - self.n_magnons

    def allowed_spins(self) -> tuple[float, ...]:
        """Total spins s >= |m| occurring in this sector, ascending."""
        lowest = abs(self.magnetization)
        count = int(round(self.n_sites / 2 - lowest)) + 1
        return tuple(lowest + step for step in range(count))


@dataclass(frozen=True)
class TranslationOrbit:
    representative: SpinConfiguration
    period: int


def translate(config: SpinConfiguration) -> SpinConfiguration:
    """Rotate the ring by one site: the spin at site j moves to site j+1."""
    n_sites = config.n_sites
    bits = config.bits
    rotated = ((bits << 1) | (bits >> (n_sites - 1))) & _site_mask(n_sites)
    return SpinConfiguration(rotated, n_sites)


def translate_bits(states: np.ndarray, n_sites: int) -> np.ndarray:
    """Vectorized form of :func:`translate` on an array of bit patterns."""
    states = states.astype(np.int64, copy=False)
    return ((states << 1) | (states >> (n_sites - 1))) & _site_mask(n_sites)


def _next_same_count(state: int) -> int:
    # Gosper's hack: next larger integer with the same number of set bits.
    smallest = state & -state
    ripple = state + smallest
    ones = ((state ^ ripple) >> 2) // smallest
    return ripple | ones


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Sorted enumeration of a fixed-magnon sector with its index lookup."""

    sector: Sector
    states: np.ndarray
    index: dict[int, int] = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.sector.n_sites

    @property
    def dimension(self) -> int:
        return len(self.states)

    @property
    def geometry(self) -> Geometry:
        return self.sector.geometry

    def configuration(self, position: int) -> SpinConfiguration:
        return SpinConfiguration(int(self.states[position]), self.n_sites)

    def position(self, config: SpinConfiguration | int) -> int:
        bits = config.bits if isinstance(config, SpinConfiguration) else config
        return self.index[bits]

    def translation_permutation(self) -> np.ndarray:
        """perm[i] is the position of T applied to state i."""
        if self.geometry is not Geometry.RING:
            raise GeometryError("Translation is only defined on rings.")
        shifted = translate_bits(self.states, self.n_sites)
        return np.searchsorted(self.states, shifted)

    def representative_of(self, bits: int) -> tuple[int, int]:
        """Return ``(rep, shift)`` with rep the orbit minimum and T^shift rep == bits."""
        n_sites = self.n_sites
        mask = _site_mask(n_sites)
        best, best_shift = bits, 0
        current = bits
        for step in range(1, n_sites):
            current = ((current << 1) | (current >> (n_sites - 1))) & mask
            if current < best:
                best, best_shift = current, step
        # T^step bits == best, so bits == T^(N - step) best.
        return best, (n_sites - best_shift) % n_sites


def enumerate_sector(sector: Sector) -> SectorBasis:
    n_sites, n_magnons = sector.n_sites, sector.n_magnons
    states = np.empty(sector.dimension, dtype=np.int64)
    if n_magnons == 0:
        states[0] = 0
    else:
        state = (1 << n_magnons) - 1
        for position in range(sector.dimension):
            states[position] = state
            state = _next_same_count(state)
    index = {int(state): position for position, state in enumerate(states)}
    logger.debug(
        "Enumerated %s sector N=%d k=%d with %d states",
        sector.geometry.value,
        n_sites,
        n_magnons,
        len(states),
    )
    return SectorBasis(sector=sector, states=states, index=index)


def orbit_decompose(basis: SectorBasis) -> list[TranslationOrbit]:
    """Partition a ring sector into translation orbits, ordered by representative."""
    if basis.geometry is not Geometry.RING:
        raise GeometryError("Translation orbits are only defined on rings.")
    n_sites = basis.n_sites
    seen: set[int] = set()
    orbits: list[TranslationOrbit] = []
    for state in basis.states:
        bits = int(state)
        if bits in seen:
            continue
        # States are visited in increasing order, so the first unseen member is the minimum.
        config = SpinConfiguration(bits, n_sites)
        current = translate(config)
        period = 1
        seen.add(bits)
        while current.bits != bits:
            seen.add(current.bits)
            current = translate(current)
            period += 1
        orbits.append(TranslationOrbit(representative=config, period=period))
    return orbits
