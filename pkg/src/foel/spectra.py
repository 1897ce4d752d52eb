"""E0 tables, FOEL findings, Sutherland's surmise and cross-spin degeneracies.

All comparisons run on 2H values; the H convention appears only in
:class:`EnergyTable` (``e0_h``), which holds exactly half of ``e0_2h``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from foel.basis import Geometry, Sector, enumerate_sector
from foel.config import DEFAULT_DENSE_THRESHOLD, DEFAULT_SEED, SolverTolerances
from foel.eigensolve import LabeledLevel, SpectrumReport, cluster_energies, full_spectrum, spin_projected_minimum
from foel.errors import GeometryError
from foel.momentum import MomentumLevel, momentum_spectra

logger = logging.getLogger(__name__)

TableMethod = Literal["dense", "lanczos"]


@dataclass(frozen=True)
class EnergyTable:
    n_sites: int
    geometry: Geometry
    e0_2h: tuple[float, ...]
    method: TableMethod = "dense"

    @property
    def e0_h(self) -> tuple[float, ...]:
        return tuple(value / 2 for value in self.e0_2h)

    @property
    def max_deviate(self) -> int:
        return len(self.e0_2h) - 1


@dataclass(frozen=True)
class Violation:
    lower: int
    upper: int
    e0_h_lower: float
    e0_h_upper: float


@dataclass(frozen=True)
class FoelFinding:
    n_sites: int
    violations: tuple[Violation, ...]
    equalities: tuple[tuple[int, int], ...]
    tolerance: float

    @property
    def holds(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class SutherlandRow:
    deviate: int
    momentum_min_2h: float
    spin_min_2h: float
    equal: bool


@dataclass(frozen=True)
class SutherlandReport:
    n_sites: int
    rows: tuple[SutherlandRow, ...]
    route: str

    @property
    def all_equal(self) -> bool:
        return all(row.equal for row in self.rows)


@dataclass(frozen=True)
class Coincidence:
    energy_2h: float
    spins: tuple[float, ...]


@dataclass(frozen=True)
class CosThetaPoint:
    index: int
    cos_theta: float
    energy_2h: float
    total_spin_s: float
    lowest: bool


def _snap_zero(value: float, tolerance: float) -> float:
    return 0.0 if abs(value) < tolerance else value


def _half_filled(n_sites: int, geometry: Geometry) -> Sector:
    return Sector(n_sites, n_sites // 2, geometry)


def e0_table(
    n_sites: int,
    geometry: Geometry = Geometry.RING,
    *,
    method: TableMethod = "dense",
    tolerances: SolverTolerances | None = None,
    threshold: int = DEFAULT_DENSE_THRESHOLD,
    seed: int = DEFAULT_SEED,
    max_iter: int = 5000,
) -> EnergyTable:
    """Minimum 2H over each spin s = N/2 - k, for k = 0..N//2.

    The dense route labels the full spectrum of the N//2-magnon sector, which
    holds a member of every multiplet. The Lanczos route solves each k-magnon
    sector with a spin penalty instead.
    """
    tolerances = tolerances or SolverTolerances()
    deviates = range(n_sites // 2 + 1)
    values: list[float] = []
    if method == "dense":
        report = full_spectrum(
            enumerate_sector(_half_filled(n_sites, geometry)),
            tolerances=tolerances,
            threshold=threshold,
        )
        for deviate in deviates:
            minimum = report.minimum_for_spin(n_sites / 2 - deviate)
            if minimum is None:
                raise GeometryError(f"No level with s={n_sites / 2 - deviate} for N={n_sites}.")
            values.append(minimum)
    elif method == "lanczos":
        for deviate in deviates:
            basis = enumerate_sector(Sector(n_sites, deviate, geometry))
            values.append(spin_projected_minimum(basis, tolerances=tolerances, seed=seed, max_iter=max_iter).energy_2h)
    else:
        raise ValueError(f"Unknown method '{method}'.")

    values = [_snap_zero(value, tolerances.degeneracy) for value in values]
    logger.info("E0 table N=%d (%s): %s", n_sites, method, ", ".join(f"{v / 2:.9f}" for v in values))
    return EnergyTable(n_sites=n_sites, geometry=geometry, e0_2h=tuple(values), method=method)


def foel_check(table: EnergyTable, *, tolerance: float | None = None) -> FoelFinding:
    """Pairs k < l whose minima break the ordering e0[k] <= e0[l], and the tied pairs."""
    tolerance = tolerance if tolerance is not None else SolverTolerances().violation
    violations: list[Violation] = []
    equalities: list[tuple[int, int]] = []
    values = table.e0_2h
    for lower in range(len(values)):
        for upper in range(lower + 1, len(values)):
            gap = values[upper] - values[lower]
            if gap < -tolerance:
                violations.append(
                    Violation(lower, upper, values[lower] / 2, values[upper] / 2)
                )
            elif abs(gap) <= tolerance:
                equalities.append((lower, upper))
    finding = FoelFinding(
        n_sites=table.n_sites,
        violations=tuple(violations),
        equalities=tuple(equalities),
        tolerance=tolerance,
    )
    if finding.violations:
        logger.info(
            "N=%d: FOEL violated at %s",
            table.n_sites,
            ", ".join(f"({v.lower},{v.upper})" for v in finding.violations),
        )
    return finding


def _momentum_route_levels(n_sites: int, tolerances: SolverTolerances) -> list[MomentumLevel]:
    basis = enumerate_sector(_half_filled(n_sites, Geometry.RING))
    return momentum_spectra(basis, tolerances=tolerances)


def sutherland_check(
    n_sites: int,
    *,
    tolerances: SolverTolerances | None = None,
    threshold: int = DEFAULT_DENSE_THRESHOLD,
) -> SutherlandReport:
    """Compare the minimum at momentum 2 pi k / N with the minimum at spin N/2 - k.

    Sectors within the dense threshold use the labeled dense spectrum;
    larger ones fall back to the momentum blocks.
    """
    tolerances = tolerances or SolverTolerances()
    sector = _half_filled(n_sites, Geometry.RING)
    deviates = range(n_sites // 2 + 1)
    momentum_min: dict[int, float] = {}
    spin_min: dict[int, float] = {}

    if sector.dimension <= threshold:
        route = "dense"
        report = full_spectrum(enumerate_sector(sector), tolerances=tolerances, threshold=threshold)
        for deviate in deviates:
            candidates = [
                level.energy_2h
                for level in report.levels
                if {deviate, (n_sites - deviate) % n_sites} & set(level.momentum_indices)
            ]
            momentum_min[deviate] = min(candidates)
            spin_min[deviate] = report.minimum_for_spin(n_sites / 2 - deviate)  # type: ignore[assignment]
    else:
        route = "momentum"
        levels = _momentum_route_levels(n_sites, tolerances)
        for deviate in deviates:
            momenta = {deviate, (n_sites - deviate) % n_sites}
            momentum_min[deviate] = min(level.energy_2h for level in levels if level.index in momenta)
            spin = n_sites / 2 - deviate
            spin_min[deviate] = min(
                level.energy_2h for level in levels if math.isclose(level.total_spin_s, spin)
            )

    rows = tuple(
        SutherlandRow(
            deviate=deviate,
            momentum_min_2h=_snap_zero(momentum_min[deviate], tolerances.degeneracy),
            spin_min_2h=_snap_zero(spin_min[deviate], tolerances.degeneracy),
            equal=abs(momentum_min[deviate] - spin_min[deviate]) <= tolerances.sutherland,
        )
        for deviate in deviates
    )
    result = SutherlandReport(n_sites=n_sites, rows=rows, route=route)
    logger.info("Sutherland check N=%d (%s route): all equal = %s", n_sites, route, result.all_equal)
    return result


def degeneracy_scan(
    sources: Iterable[SpectrumReport | LabeledLevel | MomentumLevel],
    *,
    tolerance: float | None = None,
) -> list[Coincidence]:
    """Energies shared by levels of different total spin."""
    tolerance = tolerance if tolerance is not None else SolverTolerances().degeneracy
    levels: list[LabeledLevel | MomentumLevel] = []
    for source in sources:
        if isinstance(source, SpectrumReport):
            levels.extend(source.levels)
        else:
            levels.append(source)
    levels.sort(key=lambda level: level.energy_2h)
    energies = [level.energy_2h for level in levels]

    coincidences: list[Coincidence] = []
    for cluster in cluster_energies(np.asarray(energies), tolerance):
        spins = tuple(sorted({levels[position].total_spin_s for position in cluster}))
        if len(spins) > 1:
            energy = sum(energies[position] for position in cluster) / len(cluster)
            coincidences.append(Coincidence(energy_2h=energy, spins=spins))
    return coincidences


def cos_theta_projection(
    n_sites: int,
    *,
    tolerances: SolverTolerances | None = None,
) -> list[CosThetaPoint]:
    """Every level of the N//2-magnon ring sector against cos(2 pi j / N) of its momentum."""
    tolerances = tolerances or SolverTolerances()
    levels = _momentum_route_levels(n_sites, tolerances)
    lowest: dict[int, float] = {}
    for level in levels:
        lowest[level.index] = min(lowest.get(level.index, math.inf), level.energy_2h)
    points = [
        CosThetaPoint(
            index=level.index,
            cos_theta=math.cos(2 * math.pi * level.index / n_sites),
            energy_2h=_snap_zero(level.energy_2h, tolerances.degeneracy),
            total_spin_s=level.total_spin_s,
            lowest=level.energy_2h == lowest[level.index],
        )
        for level in levels
    ]
    points.sort(key=lambda point: (point.cos_theta, point.energy_2h, point.index))
    return points


def lowest_band_monotone(points: Iterable[CosThetaPoint], *, tolerance: float = 1e-9) -> bool:
    """True when the per-momentum minimum does not increase as cos(theta) grows."""
    band = sorted(
        ((point.cos_theta, point.energy_2h) for point in points if point.lowest),
        key=lambda pair: pair[0],
    )
    return all(
        later <= earlier + tolerance
        for (_, earlier), (_, later) in zip(band, band[1:])
    )
