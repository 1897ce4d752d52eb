"""Bethe roots of the XXX ring, continuation in N, and the large-N energy curves.

Rapidities solve, for j = 1..k,

    N log((l_j + i/2)/(l_j - i/2)) - sum_{m != j} log((l_j - l_m + i)/(l_j - l_m - i)) = 2 pi i I_j

with principal logarithms and integer mode numbers I_j. A root contributes
1/(l^2 + 1/4) to 2H, so a single magnon at l = cot(p/2)/2 has 2H = 2(1 - cos p).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Iterable

import numpy as np
import scipy.special

from foel.basis import Geometry, Sector, enumerate_sector
from foel.config import DEFAULT_DENSE_THRESHOLD, DEFAULT_SEED, SolverTolerances
from foel.eigensolve import full_spectrum, lowest_band
from foel.errors import (
    BetheError,
    NewtonDivergenceError,
    RootCollisionError,
    SingularJacobianError,
)

logger = logging.getLogger(__name__)

HALF_I = 0.5j
MAX_CONDITION = 1e14
DIVERGENCE_LIMIT = 1e8
ED_BAND_SIZE = 32


@dataclass(frozen=True)
class ContinuationSchedule:
    step: float = 1.0
    min_step: float = 1 / 16
    max_floor_failures: int = 3
    newton_max_iter: int = 50
    newton_tol: float = 1e-10
    min_separation: float = 1e-9

    def __post_init__(self) -> None:
        if not 0 < self.min_step <= self.step:
            raise ValueError("Continuation steps must satisfy 0 < min_step <= step.")
        if self.max_floor_failures < 1 or self.newton_max_iter < 1:
            raise ValueError("Failure and iteration limits must be positive.")


@dataclass(frozen=True, eq=False)
class BetheState:
    n_param: float
    roots: np.ndarray
    mode_numbers: tuple[int, ...]
    residual_norm: float = math.inf
    converged: bool = False
    iterations: int = 0

    def __post_init__(self) -> None:
        if len(self.roots) != len(self.mode_numbers):
            raise ValueError(
                f"{len(self.roots)} roots but {len(self.mode_numbers)} mode numbers."
            )

    @property
    def k(self) -> int:
        return len(self.roots)

    @property
    def is_integer(self) -> bool:
        return abs(self.n_param - round(self.n_param)) < 1e-12

    def conjugation_closed(self, tolerance: float = 1e-8) -> bool:
        remaining = list(np.conj(self.roots))
        for root in self.roots:
            distances = [abs(root - other) for other in remaining]
            if not distances or min(distances) > tolerance:
                return False
            remaining.pop(int(np.argmin(distances)))
        return True

    def as_dict(self) -> dict[str, Any]:
        return {
            "n": self.n_param,
            "roots": [[root.real, root.imag] for root in self.roots],
            "mode_numbers": list(self.mode_numbers),
            "residual": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class ContinuationDiagnostics:
    refinements: int = 0
    failures: int = 0
    chaotic: bool = False
    stopped_at: float | None = None
    first_refinement_n: float | None = None
    breakdown_density: float | None = None
    message: str = ""


@dataclass(frozen=True)
class ContinuationResult:
    chain: tuple[BetheState, ...]
    diagnostics: ContinuationDiagnostics
    target: float

    @property
    def completed(self) -> bool:
        return abs(self.chain[-1].n_param - self.target) < 1e-12 and not self.diagnostics.chaotic

    def integer_states(self) -> list[BetheState]:
        return [state for state in self.chain if state.is_integer]


@dataclass(frozen=True)
class EllipticPair:
    modulus: float
    K: float
    E: float


@dataclass(frozen=True)
class CurvePoint:
    a: float
    d: float
    eps: float


def _check_separation(roots: np.ndarray, min_separation: float) -> None:
    for position, root in enumerate(roots):
        for pole in (HALF_I, -HALF_I):
            if abs(root - pole) < min_separation:
                raise RootCollisionError(f"Root {root:.6g} hits the singular point {pole}.")
        for other in roots[position + 1 :]:
            gap = root - other
            if abs(gap) < min_separation or min(abs(gap - 1j), abs(gap + 1j)) < min_separation:
                raise RootCollisionError(
                    f"Roots {root:.6g} and {other:.6g} are closer than {min_separation:g} "
                    "to a collision or an exact string."
                )


def bethe_residual(state: BetheState, *, min_separation: float = 1e-9) -> np.ndarray:
    roots = np.asarray(state.roots, dtype=complex)
    _check_separation(roots, min_separation)
    if len(roots) == 0:
        return np.zeros(0, dtype=complex)
    momentum = state.n_param * np.log((roots + HALF_I) / (roots - HALF_I))
    gaps = roots[:, None] - roots[None, :]
    np.fill_diagonal(gaps, 1.0)
    scattering = np.log((gaps + 1j) / (gaps - 1j))
    np.fill_diagonal(scattering, 0.0)
    modes = np.asarray(state.mode_numbers, dtype=float)
    return momentum - scattering.sum(axis=1) - 2j * math.pi * modes


def _jacobian(roots: np.ndarray, n_param: float) -> np.ndarray:
    gaps = roots[:, None] - roots[None, :]
    np.fill_diagonal(gaps, 0.0)
    kernel = -2j / (gaps**2 + 1)
    np.fill_diagonal(kernel, 0.0)
    jacobian = kernel.copy()
    diagonal = n_param * (-1j) / (roots**2 + 0.25) - kernel.sum(axis=1)
    jacobian[np.diag_indices_from(jacobian)] = diagonal
    return jacobian


def newton_refine(
    state: BetheState,
    max_iter: int = 50,
    tol: float = 1e-10,
    *,
    min_separation: float = 1e-9,
) -> BetheState:
    """Newton iteration on the logarithmic Bethe equations at fixed N."""
    roots = np.asarray(state.roots, dtype=complex).copy()
    history: list[dict[str, Any]] = []
    residual = bethe_residual(replace(state, roots=roots), min_separation=min_separation)
    norm = float(np.linalg.norm(residual))
    if norm <= tol:
        return replace(state, roots=roots, residual_norm=norm, converged=True, iterations=0)

    for iteration in range(1, max_iter + 1):
        jacobian = _jacobian(roots, state.n_param)
        condition = np.linalg.cond(jacobian)
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise SingularJacobianError(
                f"Bethe Jacobian is singular at N={state.n_param:g} (condition {condition:.3e})."
            )
        step = np.linalg.solve(jacobian, -residual)
        roots = roots + step
        try:
            residual = bethe_residual(replace(state, roots=roots), min_separation=min_separation)
        except RootCollisionError as exc:
            raise NewtonDivergenceError(
                f"Newton step {iteration} at N={state.n_param:g} collided roots: {exc}",
                history=history,
            ) from exc
        norm = float(np.linalg.norm(residual))
        history.append(
            {"iteration": iteration, "residual": norm, "step": float(np.linalg.norm(step))}
        )
        logger.debug("Newton N=%g iteration %d: |F|=%.3e", state.n_param, iteration, norm)
        if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
            break
        if norm <= tol:
            return replace(
                state, roots=roots, residual_norm=norm, converged=True, iterations=iteration
            )
    raise NewtonDivergenceError(
        f"Newton did not converge at N={state.n_param:g} for k={state.k} "
        f"(last |F|={norm:.3e} after {len(history)} iterations).",
        history=history,
    )


def hermite_zeros(k: int) -> np.ndarray:
    """Zeros of the physicists' Hermite polynomial H_k, ascending."""
    if k == 0:
        return np.zeros(0)
    zeros, _ = scipy.special.roots_hermite(k)
    return np.sort(zeros)


def hermite_init(k: int, n_sites: float, *, scale: float = 1.0, mode_number: int = 1) -> BetheState:
    """Low-density starting point for k magnons sharing one mode number.

    For N >> k the roots sit near N/(2 pi n), spread along the imaginary axis
    by i sqrt(2N)/(2 pi n) times the Hermite zeros.
    """
    center = n_sites / (2 * math.pi * mode_number)
    width = scale * math.sqrt(2 * n_sites) / (2 * math.pi * mode_number)
    roots = center + 1j * width * hermite_zeros(k)
    return BetheState(n_param=float(n_sites), roots=roots.astype(complex), mode_numbers=(mode_number,) * k)


def single_magnon_state(n_sites: int, index: int) -> BetheState:
    """The exact k = 1 solution with momentum 2 pi j / N."""
    if not 0 < index < n_sites:
        raise BetheError(f"Momentum index {index} must lie in 1..{n_sites - 1}; j = 0 has an infinite root.")
    root = complex(0.5 / math.tan(math.pi * index / n_sites))
    # Principal branch: j for j <= N/2, j - N above. Read it off the logarithm so
    # that the root at 0 for j = N/2 picks whichever side the rounding lands on.
    phase = n_sites * np.log((root + HALF_I) / (root - HALF_I))
    mode = int(round(phase.imag / (2 * math.pi)))
    state = BetheState(n_param=float(n_sites), roots=np.array([root]), mode_numbers=(mode,))
    norm = float(np.linalg.norm(bethe_residual(state)))
    return replace(state, residual_norm=norm, converged=norm <= 1e-10)


def energy_from_roots(state: BetheState) -> float:
    """2H energy of a converged state at integer N."""
    if not state.is_integer:
        raise BetheError(f"Energies are only defined at integer N, got N={state.n_param:g}.")
    if state.k == 0:
        return 0.0
    return float(np.sum(1 / (state.roots**2 + 0.25)).real)


def _predict(previous: BetheState | None, current: BetheState, n_next: float) -> np.ndarray:
    if previous is None:
        return current.roots.copy()
    slope = (current.roots - previous.roots) / (current.n_param - previous.n_param)
    return current.roots + slope * (n_next - current.n_param)


def _next_n(current: float, target: float, step: float, full_step: float) -> float:
    direction = 1.0 if target > current else -1.0
    # Land on every integer along the way.
    if direction > 0:
        boundary = math.floor(current + 1e-12) + 1
    else:
        boundary = math.ceil(current - 1e-12) - 1
    distance = min(step, abs(boundary - current), abs(target - current), full_step)
    return current + direction * distance


def continue_in_n(
    state: BetheState,
    n_target: float,
    schedule: ContinuationSchedule | None = None,
) -> ContinuationResult:
    """Follow a converged state from its N to ``n_target``.

    Steps land on every integer; a failed Newton solve halves the step down to
    ``schedule.min_step``. Repeated failures at the floor end the chain as chaotic,
    and the partial chain is returned with diagnostics instead of raising.
    """
    schedule = schedule or ContinuationSchedule()
    if not state.converged:
        state = newton_refine(
            state, schedule.newton_max_iter, schedule.newton_tol, min_separation=schedule.min_separation
        )
    chain = [state]
    previous: BetheState | None = None
    current = state
    step = schedule.step
    refinements = failures = floor_failures = 0
    first_refinement: float | None = None
    last_error: BetheError | None = None
    chaotic = False
    message = ""

    while abs(n_target - current.n_param) > 1e-12:
        n_next = _next_n(current.n_param, n_target, step, schedule.step)
        guess = _predict(previous, current, n_next)
        if step <= schedule.min_step:
            # Vary the starting point between attempts at the floor step.
            alternatives = [guess, current.roots.copy(), (guess + current.roots) / 2]
            guess = alternatives[min(floor_failures, len(alternatives) - 1)]
        candidate: BetheState | None = None
        try:
            candidate = newton_refine(
                replace(current, n_param=n_next, roots=guess, converged=False),
                schedule.newton_max_iter,
                schedule.newton_tol,
                min_separation=schedule.min_separation,
            )
        except BetheError as exc:
            last_error = exc

        if candidate is None:
            failures += 1
            if step <= schedule.min_step:
                floor_failures += 1
                if floor_failures >= schedule.max_floor_failures:
                    chaotic = True
                    message = f"Continuation became chaotic near N={current.n_param:g}: {last_error}"
                    logger.warning("k=%d: %s", current.k, message)
                    break
                continue
            step = max(step / 2, schedule.min_step)
            refinements += 1
            if first_refinement is None:
                first_refinement = current.n_param
                logger.warning(
                    "k=%d: Newton failed stepping from N=%g, refining the step to %g",
                    current.k,
                    current.n_param,
                    step,
                )
            else:
                logger.debug("Refining continuation step to %g at N=%g", step, current.n_param)
            continue

        chain.append(candidate)
        previous, current = current, candidate
        floor_failures = 0
        step = min(step * 2, schedule.step)
        if candidate.is_integer:
            logger.debug("k=%d converged at N=%g in %d iterations", candidate.k, candidate.n_param, candidate.iterations)

    breakdown_at = current.n_param if chaotic else first_refinement
    diagnostics = ContinuationDiagnostics(
        refinements=refinements,
        failures=failures,
        chaotic=chaotic,
        stopped_at=current.n_param if chaotic else None,
        first_refinement_n=first_refinement,
        breakdown_density=state.k / breakdown_at if breakdown_at else None,
        message=message,
    )
    logger.info(
        "Continuation k=%d from N=%g to N=%g: %d states, %d refinements, chaotic=%s",
        state.k,
        state.n_param,
        n_target,
        len(chain),
        refinements,
        chaotic,
    )
    return ContinuationResult(chain=tuple(chain), diagnostics=diagnostics, target=float(n_target))


def ed_match(
    state: BetheState,
    *,
    tolerances: SolverTolerances | None = None,
    threshold: int = DEFAULT_DENSE_THRESHOLD,
    band_size: int = ED_BAND_SIZE,
    pad: int = 8,
    seed: int = DEFAULT_SEED,
    max_iter: int = 5000,
) -> tuple[float, float] | None:
    """Nearest eigenvalue of 2H in the k-magnon ring sector and its distance to the Bethe energy.

    Sectors above ``threshold`` are searched in the lowest ``band_size`` levels
    only. Returns ``None`` when the Bethe energy lies above that band.
    """
    energy = energy_from_roots(state)
    n_sites = int(round(state.n_param))
    basis = enumerate_sector(Sector(n_sites, state.k, Geometry.RING))
    if basis.dimension <= threshold:
        report = full_spectrum(basis, tolerances=tolerances, threshold=threshold, label=False)
    else:
        report = lowest_band(
            basis,
            band_size,
            tolerances=tolerances,
            threshold=threshold,
            seed=seed,
            pad=pad,
            max_iter=max_iter,
            label=False,
        )
        top = float(report.energies[-1])
        if energy > top + report.tolerances.label:
            logger.debug(
                "Bethe energy %.10f at N=%d lies above the %d lowest levels (top %.10f)",
                energy,
                n_sites,
                len(report.energies),
                top,
            )
            return None
    nearest = float(report.energies[np.argmin(np.abs(report.energies - energy))])
    return nearest, abs(nearest - energy)


def elliptic_pair(modulus: float, *, tol: float = 1e-16, max_iter: int = 64) -> EllipticPair:
    """K and E at the given modulus by the arithmetic-geometric mean."""
    if not 0 <= modulus < 1:
        raise ValueError(f"The modulus must lie in [0, 1), got {modulus}.")
    a, b = 1.0, math.sqrt(1 - modulus**2)
    c = modulus
    weighted = 0.5 * c**2
    power = 0.5
    for _ in range(max_iter):
        if abs(c) <= tol:
            break
        a, b, c = (a + b) / 2, math.sqrt(a * b), (a - b) / 2
        power *= 2
        weighted += power * c**2
    K = math.pi / (2 * a)
    return EllipticPair(modulus=modulus, K=K, E=K * (1 - weighted))


def _series_coefficient(n: int) -> Fraction:
    return Fraction(math.comb(2 * n, n), 4**n) ** 2


def elliptic_series(modulus: float, order: int = 10) -> EllipticPair:
    """Power series of K and E in the modulus, truncated after the ``order`` power."""
    K = E = 0.0
    for n in range(order // 2 + 1):
        term = float(_series_coefficient(n)) * modulus ** (2 * n)
        K += term
        E += term / (1 - 2 * n)
    return EllipticPair(modulus=modulus, K=math.pi / 2 * K, E=math.pi / 2 * E)


def sutherland_curve(a: float) -> CurvePoint:
    """Spin-deviate density and energy density of the large-N lowest band at parameter a."""
    if a <= 1:
        raise ValueError(f"The curve parameter must exceed 1, got {a}.")
    pair = elliptic_pair(1 / a)
    d = 0.5 + a * (pair.E / pair.K - 1) / 2
    eps = 4 * pair.K * (2 * pair.E - (1 - 1 / a**2) * pair.K)
    return CurvePoint(a=a, d=d, eps=eps)


def dhar_shastry_eps(d: float) -> float:
    if not 0 <= d <= 1:
        raise ValueError(f"The density must lie in [0, 1], got {d}.")
    return 4 * math.pi**2 * d * (1 - d)


def sutherland_sweep(a_values: Iterable[float]) -> list[CurvePoint]:
    return [sutherland_curve(a) for a in a_values]


def curve_parameters(a_min: float, a_max: float, samples: int) -> np.ndarray:
    """Log-spaced curve parameters from a_min to a_max inclusive."""
    if samples < 2:
        raise ValueError("A curve sweep needs at least 2 samples.")
    return np.geomspace(a_min, a_max, samples)

