"""Uniform half-open grid partitioning of a bounded box in R^k.

The grid covers ``[lower, upper)`` with per-dimension cell width ``gamma``.
Cell ``(i_0, ..., i_{k-1})`` owns the half-open box
``[lower + i*gamma, lower + (i+1)*gamma)``, so every in-bounds state belongs
to exactly one cell, and a point lying exactly on an interior grid plane
belongs to the cell on its high side.

Cells are addressed either by their per-dimension index tuple or by their
row-major ordinal (last dimension varies fastest).  The ordinal order is part
of the on-disk format contract of the shield and cache files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

# States within BOUNDARY_SNAP * gamma below a grid plane are assigned to the
# cell above it, absorbing accumulated floating-point error from simulation.
BOUNDARY_SNAP = 1e-12

# Refuse grids whose cell count cannot be indexed comfortably with int64.
MAX_CELLS = 2**62


class OutOfBoundsError(ValueError):
    """A state or cell index lies outside the partitioned box."""


class GridOverflowError(OverflowError):
    """The requested grid has more cells than the addressable limit."""


@dataclass(frozen=True, eq=False)
class PartitionSpec:
    """Bounded box plus per-dimension granularity.

    ``gamma`` may differ per dimension; a uniform vector recovers the common
    single-granularity setting.  The number of cells along dimension ``i`` is
    ``ceil((upper[i] - lower[i]) / gamma[i])``, with near-integer ratios
    rounded down so that e.g. ``15 / 0.02`` yields exactly 750 cells.
    """

    lower: np.ndarray
    upper: np.ndarray
    gamma: np.ndarray
    shape: np.ndarray = field(init=False, repr=False)
    strides: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64).reshape(-1).copy()
        upper = np.asarray(self.upper, dtype=np.float64).reshape(-1).copy()
        gamma = np.asarray(self.gamma, dtype=np.float64).reshape(-1).copy()
        if gamma.size == 1 and lower.size > 1:
            gamma = np.full(lower.size, gamma[0])
        if not (lower.size == upper.size == gamma.size):
            raise ValueError("lower, upper and gamma must have equal length")
        if lower.size == 0:
            raise ValueError("dimension must be positive")
        if not np.all(lower < upper):
            raise ValueError("need lower[i] < upper[i] for all dimensions")
        if not np.all(gamma > 0):
            raise ValueError("need gamma[i] > 0 for all dimensions")

        ratio = (upper - lower) / gamma
        shape = np.ceil(ratio - 1e-9).astype(np.int64)
        shape = np.maximum(shape, 1)

        count = 1
        for n in shape.tolist():
            count *= int(n)
            if count > MAX_CELLS:
                raise GridOverflowError(
                    f"grid would have more than {MAX_CELLS} cells"
                )
        # Row-major strides: last dimension varies fastest.
        strides = np.ones(len(shape), dtype=np.int64)
        for i in range(len(shape) - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]

        for arr in (lower, upper, gamma, shape, strides):
            arr.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "strides", strides)

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.shape))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartitionSpec):
            return NotImplemented
        return (
            np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and np.array_equal(self.gamma, other.gamma)
        )

    def __hash__(self) -> int:
        return hash(
            (self.lower.tobytes(), self.upper.tobytes(), self.gamma.tobytes())
        )

    # ------------------------------------------------------------------
    # state <-> cell mapping
    # ------------------------------------------------------------------

    def cell_of(self, state) -> tuple[int, ...]:
        """Index tuple of the unique cell containing ``state``.

        Raises OutOfBoundsError if any coordinate falls outside
        ``[lower, upper)`` (after boundary snapping, see BOUNDARY_SNAP).
        """
        s = np.asarray(state, dtype=np.float64).reshape(-1)
        if s.size != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional state")
        idx = np.floor((s - self.lower) / self.gamma + BOUNDARY_SNAP)
        if np.any(idx < 0) or np.any(idx >= self.shape):
            raise OutOfBoundsError(f"state {s.tolist()} outside partition box")
        return tuple(int(i) for i in idx)

    def cell_indices(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized cell_of: returns ``(indices (N, k), in_bounds (N,))``.

        Out-of-bounds rows carry clipped indices; consult the mask.
        """
        states = np.asarray(states, dtype=np.float64)
        idx = np.floor((states - self.lower) / self.gamma + BOUNDARY_SNAP)
        in_bounds = np.all((idx >= 0) & (idx < self.shape), axis=-1)
        idx = np.clip(idx, 0, self.shape - 1).astype(np.int64)
        return idx, in_bounds

    def state_ordinals(self, states: np.ndarray) -> np.ndarray:
        """Row-major ordinals of the cells containing ``states``.

        Out-of-bounds states map to the sentinel ordinal ``cell_count``.
        """
        idx, in_bounds = self.cell_indices(states)
        ordinals = idx @ self.strides
        ordinals[~in_bounds] = self.cell_count
        return ordinals

    def ordinal_of(self, cell) -> int:
        cell = np.asarray(cell, dtype=np.int64).reshape(-1)
        self._check_cell(cell)
        return int(cell @ self.strides)

    def cell_of_ordinal(self, ordinal: int) -> tuple[int, ...]:
        if not 0 <= ordinal < self.cell_count:
            raise OutOfBoundsError(f"ordinal {ordinal} outside grid")
        out = []
        rem = int(ordinal)
        for s in self.strides.tolist():
            out.append(rem // s)
            rem %= s
        return tuple(out)

    def indices_of_ordinals(self, ordinals: np.ndarray) -> np.ndarray:
        """Vectorized ordinal -> index-tuple conversion, shape ``(N, k)``."""
        ordinals = np.asarray(ordinals, dtype=np.int64)
        return (ordinals[..., None] // self.strides) % self.shape

    # ------------------------------------------------------------------
    # cell geometry
    # ------------------------------------------------------------------

    def cell_box(self, cell) -> tuple[np.ndarray, np.ndarray]:
        """Half-open box ``[low, high)`` of a cell given by index tuple."""
        cell = np.asarray(cell, dtype=np.int64).reshape(-1)
        self._check_cell(cell)
        low = self.lower + cell * self.gamma
        return low, low + self.gamma

    def boxes_of_ordinals(self, ordinals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized cell_box over ordinals: ``(lows (N, k), highs (N, k))``."""
        idx = self.indices_of_ordinals(ordinals)
        lows = self.lower + idx * self.gamma
        return lows, lows + self.gamma

    def _check_cell(self, cell: np.ndarray) -> None:
        if cell.size != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional cell index")
        if np.any(cell < 0) or np.any(cell >= self.shape):
            raise OutOfBoundsError(f"cell {cell.tolist()} outside grid")

    # ------------------------------------------------------------------
    # enumeration and sampling
    # ------------------------------------------------------------------

    def iterate_cells(self) -> Iterator[tuple[int, ...]]:
        """All cell index tuples in row-major (ordinal) order."""
        return iter(np.ndindex(*self.shape.tolist()))

    def contains(self, states: np.ndarray) -> np.ndarray:
        _, in_bounds = self.cell_indices(states)
        return in_bounds

    def sample_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples from the half-open box ``[lower, upper)``."""
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


def counts_per_dim(lower, upper, gamma) -> np.ndarray:
    """Cells per dimension without building a spec (shares the rounding rule)."""
    return PartitionSpec(lower, upper, gamma).shape.copy()


def cell_count(spec: PartitionSpec) -> int:
    return spec.cell_count


def cell_of(spec: PartitionSpec, state) -> tuple[int, ...]:
    return spec.cell_of(state)


def cell_box(spec: PartitionSpec, cell) -> tuple[np.ndarray, np.ndarray]:
    return spec.cell_box(cell)


def iterate_cells(spec: PartitionSpec) -> Iterator[tuple[int, ...]]:
    return spec.iterate_cells()
