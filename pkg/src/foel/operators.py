"""Matrix-free and sparse realizations of 2H, T and S^2 on sector bases.

2H is applied through the swap identity 2h_{uv} = 1 - SWAP_{uv}: every
anti-aligned edge contributes x[c] - x[swap(c)], aligned edges contribute 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import reduce
from math import comb
from typing import Literal

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from foel.basis import Geometry, SectorBasis
from foel.config import DEFAULT_DENSE_THRESHOLD
from foel.errors import DimensionMismatchError, GeometryError, ThresholdExceededError

logger = logging.getLogger(__name__)

OperatorKind = Literal["two_h", "translation", "total_spin"]


_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class EdgeSet:
    """Interaction edges as 1-based site pairs."""

    n_sites: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for u, v in self.edges:
            if u == v:
                raise GeometryError(f"Edge {{{u},{v}}} is a self-loop.")
            if not (1 <= u <= self.n_sites and 1 <= v <= self.n_sites):
                raise GeometryError(
                    f"Edge {{{u},{v}}} has an endpoint outside 1..{self.n_sites}."
                )

    @classmethod
    def for_geometry(cls, n_sites: int, geometry: Geometry) -> EdgeSet:
        edges = [(site, site + 1) for site in range(1, n_sites)]
        if geometry is Geometry.RING:
            edges.append((1, n_sites))
        return cls(n_sites=n_sites, edges=tuple(edges))

    def __len__(self) -> int:
        return len(self.edges)

    def zero_based(self) -> list[tuple[int, int]]:
        return [(u - 1, v - 1) for u, v in self.edges]


@dataclass(frozen=True, eq=False)
class SparseOperator:
    kind: str
    matrix: scipy.sparse.csr_matrix
    symmetric: bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def rows(self) -> list[list[tuple[int, float]]]:
        """Row-wise (column, coefficient) pairs, zero coefficients omitted."""
        csr = self.matrix
        return [
            [
                (int(csr.indices[slot]), csr.data[slot].item())
                for slot in range(csr.indptr[row], csr.indptr[row + 1])
            ]
            for row in range(csr.shape[0])
        ]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class _SwapTable:
    """For each site pair, the anti-aligned rows and the rows they swap into."""

    rows: tuple[np.ndarray, ...]
    targets: tuple[np.ndarray, ...]


def _swap_table(basis: SectorBasis, pairs: list[tuple[int, int]]) -> _SwapTable:
    states = basis.states
    rows: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for u, v in pairs:
        mask = (1 << u) | (1 << v)
        anti = np.nonzero(((states >> u) & 1) != ((states >> v) & 1))[0]
        swapped = states[anti] ^ mask
        rows.append(anti)
        targets.append(np.searchsorted(states, swapped))
    return _SwapTable(rows=tuple(rows), targets=tuple(targets))


def _check_dimension(basis: SectorBasis, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[0] != basis.dimension:
        raise DimensionMismatchError(basis.dimension, x.shape[0])
    return x


def _edges_or_default(basis: SectorBasis, edges: EdgeSet | None) -> EdgeSet:
    if edges is None:
        return EdgeSet.for_geometry(basis.n_sites, basis.geometry)
    if edges.n_sites != basis.n_sites:
        raise GeometryError(
            f"Edge set is for N={edges.n_sites}, basis has N={basis.n_sites}."
        )
    return edges


def _apply_with_table(table: _SwapTable, x: np.ndarray) -> np.ndarray:
    result = np.zeros_like(x, dtype=np.result_type(x, np.float64))
    for rows, targets in zip(table.rows, table.targets):
        result[rows] += x[rows] - x[targets]
    return result


def apply_two_h(basis: SectorBasis, edges: EdgeSet | None, x: np.ndarray) -> np.ndarray:
    x = _check_dimension(basis, x)
    edges = _edges_or_default(basis, edges)
    return _apply_with_table(_swap_table(basis, edges.zero_based()), x)


def apply_translation_op(basis: SectorBasis, x: np.ndarray) -> np.ndarray:
    """(T x) with T|c> = |translate(c)>."""
    x = _check_dimension(basis, x)
    result = np.empty_like(x)
    result[basis.translation_permutation()] = x
    return result


def total_spin_shift(n_sites: int, n_magnons: int) -> float:
    """Diagonal part of S^2 in a k-magnon sector.

    S^2 = N(4 - N)/4 + sum_{i<j} P_ij, and every aligned pair maps a
    configuration to itself, which adds C(k,2) + C(N-k,2) to the diagonal.
    """
    return n_sites * (4 - n_sites) / 4 + comb(n_magnons, 2) + comb(n_sites - n_magnons, 2)


def _all_pairs(n_sites: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_sites) for j in range(i + 1, n_sites)]


def apply_total_spin(basis: SectorBasis, x: np.ndarray) -> np.ndarray:
    x = _check_dimension(basis, x)
    table = _swap_table(basis, _all_pairs(basis.n_sites))
    shift = total_spin_shift(basis.n_sites, basis.sector.n_magnons)
    result = shift * x.astype(np.result_type(x, np.float64))
    for rows, targets in zip(table.rows, table.targets):
        result[rows] += x[targets]
    return result


def _swap_matrix(
    basis: SectorBasis, pairs: list[tuple[int, int]], diagonal_weight: float, off_weight: float
) -> scipy.sparse.csr_matrix:
    table = _swap_table(basis, pairs)
    dim = basis.dimension
    diag = np.zeros(dim)
    row_blocks: list[np.ndarray] = []
    col_blocks: list[np.ndarray] = []
    for rows, targets in zip(table.rows, table.targets):
        diag[rows] += diagonal_weight
        row_blocks.append(rows)
        col_blocks.append(targets)
    off_rows = np.concatenate(row_blocks) if row_blocks else np.empty(0, dtype=np.int64)
    off_cols = np.concatenate(col_blocks) if col_blocks else np.empty(0, dtype=np.int64)
    matrix = scipy.sparse.coo_matrix(
        (np.full(off_rows.shape[0], off_weight), (off_rows, off_cols)), shape=(dim, dim)
    ).tocsr()
    matrix = matrix + scipy.sparse.diags(diag, format="csr")
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


def build_sparse(
    basis: SectorBasis,
    which: OperatorKind,
    edges: EdgeSet | None = None,
    *,
    threshold: int = DEFAULT_DENSE_THRESHOLD,
) -> SparseOperator:
    if basis.dimension > threshold:
        raise ThresholdExceededError(basis.dimension, threshold)

    if which == "two_h":
        edges = _edges_or_default(basis, edges)
        matrix = _swap_matrix(basis, edges.zero_based(), 1.0, -1.0)
        return SparseOperator(kind=which, matrix=matrix, symmetric=True)

    if which == "translation":
        dim = basis.dimension
        perm = basis.translation_permutation()
        matrix = scipy.sparse.csr_matrix(
            (np.ones(dim), (perm, np.arange(dim))), shape=(dim, dim)
        )
        return SparseOperator(kind=which, matrix=matrix, symmetric=False)

    if which == "total_spin":
        matrix = _swap_matrix(basis, _all_pairs(basis.n_sites), 0.0, 1.0)
        shift = total_spin_shift(basis.n_sites, basis.sector.n_magnons)
        matrix = (matrix + shift * scipy.sparse.identity(basis.dimension, format="csr")).tocsr()
        matrix.eliminate_zeros()
        return SparseOperator(kind=which, matrix=matrix, symmetric=True)

    raise ValueError(f"Unknown operator kind '{which}'.")


def two_h_linear_operator(
    basis: SectorBasis,
    edges: EdgeSet | None = None,
    *,
    spin_penalty: tuple[float, float] | None = None,
) -> scipy.sparse.linalg.LinearOperator:
    """Matrix-free 2H, optionally plus ``c * (S^2 - target)`` for ``spin_penalty=(c, target)``."""
    edges = _edges_or_default(basis, edges)
    edge_table = _swap_table(basis, edges.zero_based())
    spin_table = _swap_table(basis, _all_pairs(basis.n_sites)) if spin_penalty else None
    shift = total_spin_shift(basis.n_sites, basis.sector.n_magnons)

    def matvec(x: np.ndarray) -> np.ndarray:
        x = np.ravel(x)
        result = _apply_with_table(edge_table, x)
        if spin_table is not None and spin_penalty is not None:
            weight, target = spin_penalty
            spin = (shift - target) * x
            for rows, targets in zip(spin_table.rows, spin_table.targets):
                spin[rows] += x[targets]
            result += weight * spin
        return result

    dim = basis.dimension
    return scipy.sparse.linalg.LinearOperator(
        (dim, dim), matvec=matvec, rmatvec=matvec, dtype=np.float64
    )


def _site_operator(single: np.ndarray, site: int, n_sites: int) -> scipy.sparse.csr_matrix:
    # Bit j of the full-space index is site j, so site N-1 is the leftmost Kronecker factor.
    factors = [
        single if position == site else np.eye(2, dtype=complex)
        for position in reversed(range(n_sites))
    ]
    return reduce(
        lambda left, right: scipy.sparse.kron(left, right, format="csr"), factors
    )


def pauli_two_h(n_sites: int, geometry: Geometry) -> scipy.sparse.csr_matrix:
    """2H on the full 2^N space from explicit S = sigma/2 matrices (reference oracle)."""
    if n_sites > 10:
        raise ThresholdExceededError(2**n_sites, 2**10)
    dim = 2**n_sites
    spins = [
        [_site_operator(pauli / 2, site, n_sites) for pauli in (_PAULI_X, _PAULI_Y, _PAULI_Z)]
        for site in range(n_sites)
    ]
    identity = scipy.sparse.identity(dim, dtype=complex, format="csr")
    total = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
    for u, v in EdgeSet.for_geometry(n_sites, geometry).zero_based():
        dot = sum(a @ b for a, b in zip(spins[u], spins[v]))
        total = total + 0.5 * identity - 2 * dot
    return total.real.tocsr()


def restrict_to_sector(full: scipy.sparse.spmatrix, basis: SectorBasis) -> np.ndarray:
    states = basis.states
    return full.tocsr()[states][:, states].toarray()
