from __future__ import annotations

from dataclasses import dataclass, field, fields

from foel.basis import MAX_SITES, Geometry
from foel.errors import CapacityError

DEFAULT_DENSE_THRESHOLD = 4096
DEFAULT_SEED = 1234


@dataclass(frozen=True)
class SolverTolerances:
    """Numerical tolerances shared by the eigensolvers and the report builders."""

    degeneracy: float = 1e-9
    label: float = 1e-6
    residual_dense: float = 1e-10
    residual_lanczos: float = 1e-8
    violation: float = 1e-9
    sutherland: float = 1e-8
    momentum: float = 1e-6

    def __post_init__(self) -> None:
        for item in fields(self):
            value = getattr(self, item.name)
            if not value > 0:
                raise ValueError(f"Tolerance '{item.name}' must be positive, got {value}.")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs to reproduce a run."""

    command: str
    n_values: tuple[int, ...] = ()
    geometry: Geometry = Geometry.RING
    k: int | None = None
    tolerances: SolverTolerances = field(default_factory=SolverTolerances)
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD
    out_path: str | None = None
    output_format: str = "json"
    seed: int = DEFAULT_SEED
    lanczos_pad: int = 8
    max_lanczos_iter: int = 5000

    def __post_init__(self) -> None:
        for n_sites in self.n_values:
            if not 2 <= n_sites <= MAX_SITES:
                raise CapacityError(
                    f"N={n_sites} is outside the supported range 2..{MAX_SITES}."
                )
        if self.dense_threshold < 1:
            raise ValueError("The dense threshold must be at least 1.")
        if self.lanczos_pad < 0:
            raise ValueError("The Lanczos pad must be non-negative.")
        if self.max_lanczos_iter < 1:
            raise ValueError("The Lanczos iteration limit must be at least 1.")
        if self.output_format not in ("json", "csv"):
            raise ValueError(f"Unknown output format '{self.output_format}'.")
        if self.k is not None and self.k < 0:
            raise CapacityError(f"Magnon count k={self.k} must be non-negative.")
