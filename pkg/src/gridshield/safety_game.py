"""Two-player safety game over a finite cell transition system.

Player 1 picks an action in a cell, player 2 answers with any recorded
successor cell.  The maximal safe set is the greatest fixed point of

    S  =  initial  ∩  { c | exists action a such that all a-successors of c
                            lie in S }

computed here by a batched worklist that removes cells wave by wave.  The
most permissive strategy then keeps, per safe cell, every action whose
successors all stay inside the safe set.

Out-of-bounds successors (the sentinel ordinal ``cell_count``) are treated
according to a policy: ``forbid`` counts them as unsafe (conservative
default), ``allow`` counts them as safe.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .partition import PartitionSpec

OOB_FORBID = "forbid"
OOB_ALLOW = "allow"

# Three-valued cell classification against a safety property.
INSIDE = 0
OUTSIDE = 1
STRADDLES = 2

BRUTE_FORCE_LIMIT = 10_000


class SizeLimitError(ValueError):
    """brute_force_solve called on a system above its size bound."""


class NotAFixpointError(ValueError):
    """Strategy extraction found a safe cell with no closed action."""


# ---------------------------------------------------------------------------
# safety predicates
# ---------------------------------------------------------------------------


class SafetyPredicate:
    """Safety property: a set of states, evaluated exactly on states and
    three-valued on cell boxes.

    The property is the complement of a union of axis-aligned "unsafe"
    boxes.  A cell counts as intersecting an unsafe box only if the overlap
    has positive volume; touching along a boundary face does not exclude a
    cell.  This keeps the classification aligned with the half-open grid
    (a cell whose low face merely touches the unsafe region is Inside).

    ``holds_fn``, when given, provides the exact state-level predicate
    (e.g. with strict inequalities the box test cannot express); otherwise
    membership in the closed unsafe boxes is used.
    """

    def __init__(self, unsafe_boxes, holds_fn=None):
        self.unsafe_boxes = [
            (np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64))
            for lo, hi in unsafe_boxes
        ]
        self._holds_fn = holds_fn

    def holds(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if self._holds_fn is not None:
            return self._holds_fn(states)
        bad = np.zeros(states.shape[0], dtype=bool)
        for lo, hi in self.unsafe_boxes:
            bad |= np.all((states >= lo) & (states <= hi), axis=1)
        return ~bad

    def classify_boxes(self, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
        """Classify half-open boxes ``[low, high)`` as INSIDE / OUTSIDE /
        STRADDLES relative to the safety property."""
        lows = np.atleast_2d(lows)
        highs = np.atleast_2d(highs)
        out = np.full(lows.shape[0], INSIDE, dtype=np.int8)
        overlap_any = np.zeros(lows.shape[0], dtype=bool)
        contained_any = np.zeros(lows.shape[0], dtype=bool)
        for lo, hi in self.unsafe_boxes:
            # positive-volume overlap: strict interval intersection per dim
            overlap = np.all(
                (np.maximum(lows, lo) < np.minimum(highs, hi)), axis=1
            )
            contained = np.all((lows >= lo) & (highs <= hi), axis=1)
            overlap_any |= overlap
            contained_any |= contained
        out[overlap_any] = STRADDLES
        out[contained_any] = OUTSIDE
        return out

    def classify_cells(self, spec: PartitionSpec, chunk: int = 1 << 18) -> np.ndarray:
        """Classification code for every cell ordinal, shape ``(cell_count,)``."""
        codes = np.empty(spec.cell_count, dtype=np.int8)
        for start in range(0, spec.cell_count, chunk):
            ords = np.arange(start, min(start + chunk, spec.cell_count))
            lows, highs = spec.boxes_of_ordinals(ords)
            codes[start : start + len(ords)] = self.classify_boxes(lows, highs)
        return codes


def initial_safe_cells(spec: PartitionSpec, predicate: SafetyPredicate) -> np.ndarray:
    """Boolean mask over ordinals: cells wholly inside the safety property.

    Straddling cells are excluded (conservative: only cells contained in the
    property participate in the game).
    """
    return predicate.classify_cells(spec) == INSIDE


# ---------------------------------------------------------------------------
# safe set and game report
# ---------------------------------------------------------------------------


@dataclass
class SafeSet:
    """Result of the safety game: mask over cell ordinals."""

    spec: PartitionSpec
    mask: np.ndarray  # bool, shape (cell_count,)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def ordinals(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def contains_ordinal(self, ordinal: int) -> bool:
        return bool(self.mask[ordinal])

    def contains_state(self, state) -> bool:
        return bool(self.mask[self.spec.ordinal_of(self.spec.cell_of(state))])


@dataclass
class GameReport:
    iterations: int
    removed_per_iteration: list[int]
    seconds: float
    initial_state_safe: bool | None = None

    @property
    def removed_total(self) -> int:
        return int(sum(self.removed_per_iteration))


# ---------------------------------------------------------------------------
# fixed-point solver
# ---------------------------------------------------------------------------


def _gather_rows(indptr: np.ndarray, data: np.ndarray, rows: np.ndarray):
    """Concatenated CSR rows plus per-row lengths, fully vectorized."""
    counts = indptr[rows + 1] - indptr[rows]
    total = int(counts.sum())
    if total == 0:
        return data[:0], counts
    starts = np.repeat(indptr[rows], counts)
    offsets = np.arange(total) - np.repeat(
        np.concatenate(([0], np.cumsum(counts[:-1]))), counts
    )
    return data[starts + offsets], counts


def _row_unsafe_counts(indptr, succ, ext_safe):
    """Per-row count of successors outside ``ext_safe`` (cumsum-based so empty
    rows are handled)."""
    flags = (~ext_safe[succ]).astype(np.int64)
    cum = np.concatenate(([0], np.cumsum(flags)))
    return cum[indptr[1:]] - cum[indptr[:-1]]


def _reverse_edges(indptr, succ, num_cells):
    """Counting-sort transpose of one action's CSR successor map.

    Returns ``(rev_indptr, rev_src)`` where ``rev_src[rev_indptr[c]:
    rev_indptr[c+1]]`` lists the predecessor cells of ``c``.  Edges to the
    out-of-bounds sentinel are dropped (the sentinel never changes state).
    """
    counts = np.diff(indptr)
    src = np.repeat(np.arange(num_cells, dtype=np.int64), counts)
    keep = succ < num_cells
    dst = succ[keep].astype(np.int64)
    src = src[keep]
    order = np.argsort(dst, kind="stable")
    dst = dst[order]
    src = src[order]
    rev_indptr = np.zeros(num_cells + 1, dtype=np.int64)
    np.add.at(rev_indptr, dst + 1, 1)
    np.cumsum(rev_indptr, out=rev_indptr)
    return rev_indptr, src


def solve(ts, initial: np.ndarray, oob_policy: str = OOB_FORBID):
    """Greatest fixed point of the safety game on ``ts``.

    ``initial`` is a boolean mask over cell ordinals (the cells wholly
    inside the safety property).  Returns ``(SafeSet, GameReport)``.
    """
    t0 = time.perf_counter()
    spec = ts.spec
    num_cells = spec.cell_count
    num_actions = len(ts.actions)
    initial = np.asarray(initial, dtype=bool)
    if initial.shape != (num_cells,):
        raise ValueError("initial mask must cover every cell ordinal")

    safe = initial.copy()
    ext_safe = np.concatenate((safe, [oob_policy == OOB_ALLOW]))

    # bad[a][c] = number of recorded a-successors of c outside the safe set.
    bad = [
        _row_unsafe_counts(ts.indptr[a], ts.succ[a], ext_safe)
        for a in range(num_actions)
    ]
    closed = np.zeros(num_cells, dtype=np.int64)
    for a in range(num_actions):
        closed += bad[a] == 0

    rev = [_reverse_edges(ts.indptr[a], ts.succ[a], num_cells) for a in range(num_actions)]

    frontier = np.flatnonzero(safe & (closed == 0))
    safe[frontier] = False
    removed_per_iteration: list[int] = []
    iterations = 0
    while frontier.size:
        iterations += 1
        removed_per_iteration.append(int(frontier.size))
        touched = []
        for a in range(num_actions):
            rev_indptr, rev_src = rev[a]
            preds, _ = _gather_rows(rev_indptr, rev_src, frontier)
            if preds.size:
                np.add.at(bad[a], preds, 1)
                touched.append(preds)
        if touched:
            affected = np.unique(np.concatenate(touched))
            cl = np.zeros(affected.size, dtype=np.int64)
            for a in range(num_actions):
                cl += bad[a][affected] == 0
            frontier = affected[safe[affected] & (cl == 0)]
            safe[frontier] = False
        else:
            frontier = frontier[:0]
    report = GameReport(
        iterations=iterations,
        removed_per_iteration=removed_per_iteration,
        seconds=time.perf_counter() - t0,
    )
    return SafeSet(spec, safe), report


def brute_force_solve(ts, initial: np.ndarray, oob_policy: str = OOB_FORBID) -> SafeSet:
    """Testing oracle: naive full re-scan until stable.  Small systems only."""
    spec = ts.spec
    num_cells = spec.cell_count
    if num_cells > BRUTE_FORCE_LIMIT:
        raise SizeLimitError(
            f"brute force limited to {BRUTE_FORCE_LIMIT} cells, got {num_cells}"
        )
    oob_safe = oob_policy == OOB_ALLOW
    safe = set(np.flatnonzero(np.asarray(initial, dtype=bool)).tolist())
    changed = True
    while changed:
        changed = False
        for c in sorted(safe):
            ok = False
            for a in range(len(ts.actions)):
                succs = ts.successors(c, a)
                if all(
                    (int(s) in safe) if s < num_cells else oob_safe
                    for s in succs
                ):
                    ok = True
                    break
            if not ok:
                safe.discard(c)
                changed = True
    mask = np.zeros(num_cells, dtype=bool)
    mask[sorted(safe)] = True
    return SafeSet(spec, mask)


# ---------------------------------------------------------------------------
# most permissive strategy
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class MostPermissiveStrategy:
    """Per safe cell, the set of actions whose successors all stay safe.

    ``allowed`` holds one byte per cell ordinal, bit ``a`` set iff action
    ``a`` is allowed; ``0x00`` marks a cell outside the safe set.
    """

    spec: PartitionSpec
    actions: tuple
    allowed: np.ndarray  # uint8, shape (cell_count,)
    oob_policy: str = OOB_FORBID

    @property
    def full_mask(self) -> int:
        return (1 << len(self.actions)) - 1

    def safe_mask(self) -> np.ndarray:
        return self.allowed != 0

    def allowed_actions(self, ordinal: int) -> tuple[int, ...]:
        m = int(self.allowed[ordinal])
        return tuple(a for a in range(len(self.actions)) if m >> a & 1)

    def lift(self, state) -> tuple[tuple[int, ...], bool]:
        """Action set for the cell containing ``state``.

        Returns ``(actions, shielded)``.  For out-of-bounds states and
        unsafe cells the shield is undefined (``shielded=False``) and the
        action set follows the out-of-bounds policy: empty under ``forbid``,
        every action under ``allow``.
        """
        state = np.asarray(state, dtype=np.float64)
        ordinals = self.spec.state_ordinals(state.reshape(1, -1))
        o = int(ordinals[0])
        if o < self.spec.cell_count:
            m = int(self.allowed[o])
            if m:
                return tuple(a for a in range(len(self.actions)) if m >> a & 1), True
        if self.oob_policy == OOB_ALLOW:
            return tuple(range(len(self.actions))), False
        return (), False

    def lift_masks(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized lift: ``(masks (N,) uint8, shielded (N,) bool)``.

        Unshielded rows get mask 0 under ``forbid`` and the full mask under
        ``allow``.
        """
        ordinals = self.spec.state_ordinals(np.atleast_2d(states))
        in_bounds = ordinals < self.spec.cell_count
        masks = np.zeros(ordinals.shape[0], dtype=np.uint8)
        masks[in_bounds] = self.allowed[ordinals[in_bounds]]
        shielded = masks != 0
        if self.oob_policy == OOB_ALLOW:
            masks[~shielded] = self.full_mask
        return masks, shielded


def most_permissive(ts, safe: SafeSet, oob_policy: str = OOB_FORBID) -> MostPermissiveStrategy:
    """Extract the most permissive strategy from a solved safe set.

    Raises NotAFixpointError if some safe cell ends up with no allowed
    action (i.e. ``safe`` was not a fixed point of :func:`solve`).
    """
    num_cells = ts.spec.cell_count
    ext_safe = np.concatenate((safe.mask, [oob_policy == OOB_ALLOW]))
    allowed = np.zeros(num_cells, dtype=np.uint8)
    for a in range(len(ts.actions)):
        closed = _row_unsafe_counts(ts.indptr[a], ts.succ[a], ext_safe) == 0
        allowed |= (closed & safe.mask).astype(np.uint8) << a
    if np.any(safe.mask & (allowed == 0)):
        bad = np.flatnonzero(safe.mask & (allowed == 0))[:5]
        raise NotAFixpointError(
            f"cells {bad.tolist()} are marked safe but have no closed action"
        )
    return MostPermissiveStrategy(
        spec=ts.spec, actions=tuple(ts.actions), allowed=allowed, oob_policy=oob_policy
    )


def lift(strategy: MostPermissiveStrategy, state):
    return strategy.lift(state)
