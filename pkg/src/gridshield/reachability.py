"""Sampled approximation of the cell-level transition relation.

For every (cell, action) pair the builder simulates one control period from
``n`` evenly spaced supporting points per dimension (the corner-inclusive
lattice, with the top corner nudged inside the half-open box) and records
the set of cells hit.  Randomness is resolved either by the model's
worst-case draw or by a deterministic grid of evenly spaced quantile draws,
so a build is a pure function of (model config, partition, scheme) and needs
no seed.

The result underapproximates the true transition relation: every recorded
transition has a concrete simulation witness, but transitions may be
missing.  Successor sets are stored per action in CSR form (sorted unique
cell ordinals per row); the sentinel ordinal ``cell_count`` marks successors
that left the partitioned box.
"""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .partition import BOUNDARY_SNAP, PartitionSpec

WORST_CASE = "worst_case"
SAMPLED_GRID = "sampled_grid"

TOP_NUDGE = 1e-9  # lattice shrink factor keeping the top corner in the box

WORKERS_ENV = "GRIDSHIELD_WORKERS"


class NotBoxAffineError(TypeError):
    """Exact successor oracle requested for a model without box-image dynamics."""


class MemoryBudgetError(MemoryError):
    """Successor store exceeded the configured memory budget."""


@dataclass(frozen=True)
class SupportScheme:
    """Sampling plan: ``n`` supporting points per state dimension and a
    policy for the model's random draws.

    ``worst_case`` uses the model's single safety-pessimal draw vector;
    ``sampled_grid`` uses ``draws`` evenly spaced quantiles per random
    dimension (their Cartesian product), keeping the build deterministic.
    """

    n: int
    randomness: str = WORST_CASE
    draws: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one supporting point per dimension")
        if self.randomness not in (WORST_CASE, SAMPLED_GRID):
            raise ValueError(f"unknown randomness policy {self.randomness!r}")
        if self.randomness == SAMPLED_GRID and self.draws < 1:
            raise ValueError("need at least one draw per random dimension")

    def draw_combos(self, model) -> np.ndarray:
        """Unit draw vectors simulated per supporting point, shape (D, r)."""
        r = model.random_dims
        if r == 0:
            return np.zeros((1, 0))
        if self.randomness == WORST_CASE:
            return np.asarray(model.worst_case_draws(), dtype=np.float64).reshape(1, r)
        q = _quantiles(self.draws)
        cols = np.meshgrid(*([q] * r), indexing="ij")
        return np.stack([c.ravel() for c in cols], axis=1)

    def config(self) -> dict:
        return {"n": self.n, "randomness": self.randomness, "draws": self.draws}


def _quantiles(m: int) -> np.ndarray:
    if m == 1:
        return np.array([0.5])
    return np.linspace(0.0, 1.0, m)


def lattice_offsets(gamma: np.ndarray, n: int) -> np.ndarray:
    """Offsets of the supporting-point lattice within one cell, shape (n^k, k).

    ``n = 1`` uses the cell center; ``n >= 2`` spaces points from the low
    corner to ``gamma * (1 - TOP_NUDGE)`` so corners are included but the
    top face stays inside the half-open box.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if n == 1:
        per_dim = [np.array([0.5 * g]) for g in gamma]
    else:
        per_dim = [
            np.arange(n) * (g * (1.0 - TOP_NUDGE)) / (n - 1) for g in gamma
        ]
    grids = np.meshgrid(*per_dim, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def supporting_points(low, high, n: int) -> np.ndarray:
    """Evenly spaced supporting points of the half-open box ``[low, high)``."""
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    return low + lattice_offsets(high - low, n)


# ---------------------------------------------------------------------------
# transition system
# ---------------------------------------------------------------------------


class TransitionSystem:
    """Finite map (cell, action) -> set of successor cells, CSR per action."""

    def __init__(self, spec: PartitionSpec, actions, indptr, succ):
        self.spec = spec
        self.actions = tuple(actions)
        self.indptr = [np.asarray(p, dtype=np.int64) for p in indptr]
        self.succ = [np.asarray(s, dtype=np.int32) for s in succ]
        self._keys: dict[int, np.ndarray] = {}

    @property
    def oob_ordinal(self) -> int:
        return self.spec.cell_count

    @property
    def num_edges(self) -> int:
        return int(sum(s.size for s in self.succ))

    def successors(self, ordinal: int, action: int) -> np.ndarray:
        p = self.indptr[action]
        return self.succ[action][p[ordinal] : p[ordinal + 1]]

    def successor_cells(self, cell, action: int):
        """Successor index tuples plus ``has_oob`` flag, for small-scale use."""
        succ = self.successors(self.spec.ordinal_of(cell), action)
        oob = bool(succ.size and succ[-1] == self.oob_ordinal)
        inb = succ[succ < self.oob_ordinal]
        return [self.spec.cell_of_ordinal(int(o)) for o in inb], oob

    def _edge_keys(self, action: int) -> np.ndarray:
        if action not in self._keys:
            base = self.oob_ordinal + 1
            counts = np.diff(self.indptr[action])
            rows = np.repeat(
                np.arange(self.spec.cell_count, dtype=np.int64), counts
            )
            self._keys[action] = rows * base + self.succ[action]
        return self._keys[action]

    def membership(self, ordinals, action: int, succ_ordinals) -> np.ndarray:
        """Vectorized: is (cell, action, successor) a recorded transition?"""
        keys = self._edge_keys(action)
        base = self.oob_ordinal + 1
        query = np.asarray(ordinals, dtype=np.int64) * base + np.asarray(
            succ_ordinals, dtype=np.int64
        )
        if keys.size == 0:
            return np.zeros(np.shape(query), dtype=bool)
        pos = np.clip(np.searchsorted(keys, query), 0, keys.size - 1)
        return keys[pos] == query

    @classmethod
    def from_dict(cls, spec: PartitionSpec, actions, mapping) -> "TransitionSystem":
        """Build from {(ordinal, action): iterable of successor ordinals}.

        Intended for tests and tiny hand-built systems; missing keys get an
        empty successor set.
        """
        num_cells = spec.cell_count
        indptr, succ = [], []
        for a in range(len(actions)):
            counts = np.zeros(num_cells, dtype=np.int64)
            rows = {}
            for (c, act), succs in mapping.items():
                if act == a:
                    arr = np.unique(np.asarray(sorted(succs), dtype=np.int32))
                    rows[c] = arr
                    counts[c] = arr.size
            p = np.concatenate(([0], np.cumsum(counts)))
            values = np.zeros(p[-1], dtype=np.int32)
            for c, arr in rows.items():
                values[p[c] : p[c + 1]] = arr
            indptr.append(p)
            succ.append(values)
        return cls(spec, actions, indptr, succ)


@dataclass
class BuildStats:
    cells: int
    actions: int
    points_per_cell: int
    draw_combos: int
    simulations: int
    seconds: float


# ---------------------------------------------------------------------------
# Algorithm: sampled build
# ---------------------------------------------------------------------------


def _build_chunk(model, spec, offsets, draw_combos, start, stop, collect_witnesses):
    """Successor rows for cell ordinals [start, stop): per action a pair
    (row_counts, row_values) with rows sorted and deduplicated."""
    ords = np.arange(start, stop)
    m = ords.size
    n_pts = offsets.shape[0]
    lows, _ = spec.boxes_of_ordinals(ords)
    pts = (lows[:, None, :] + offsets[None, :, :]).reshape(m * n_pts, spec.dim)
    witnesses = {} if collect_witnesses else None
    out = []
    for a in range(model.num_actions):
        cols = np.empty((m * n_pts, len(draw_combos)), dtype=np.int32)
        for j, d in enumerate(draw_combos):
            draws = np.broadcast_to(d, (m * n_pts, d.size))
            nxt = model.step(pts, a, draws)
            dst = spec.state_ordinals(nxt).astype(np.int32)
            cols[:, j] = dst
            if collect_witnesses:
                for row in range(m * n_pts):
                    key = (int(ords[row // n_pts]), a, int(dst[row]))
                    witnesses.setdefault(key, (pts[row].copy(), d.copy()))
        mat = cols.reshape(m, n_pts * len(draw_combos))
        mat.sort(axis=1)
        keep = np.ones(mat.shape, dtype=bool)
        keep[:, 1:] = mat[:, 1:] != mat[:, :-1]
        out.append((keep.sum(axis=1).astype(np.int64), mat[keep]))
    return out, witnesses


def _chunk_task(args):
    model, spec, offsets, draw_combos, start, stop = args
    rows, _ = _build_chunk(model, spec, offsets, draw_combos, start, stop, False)
    return start, rows


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def build_transition_system(
    model,
    spec: PartitionSpec,
    scheme: SupportScheme,
    *,
    workers: int | None = None,
    chunk_rows: int = 1 << 20,
    memory_budget: int | None = None,
    record_witnesses: bool = False,
    verbose: bool = False,
):
    """Approximate the cell transition relation by systematic simulation.

    Returns ``(TransitionSystem, BuildStats, witnesses)`` where ``witnesses``
    maps (ordinal, action, successor ordinal) to one concrete
    ``(point, draws)`` pair when ``record_witnesses`` is set (small grids
    only), else ``None``.
    """
    if not (
        np.array_equal(model.lower, spec.lower)
        and np.array_equal(model.upper, spec.upper)
    ):
        raise ValueError("model state bounds must match the partition box")
    if spec.cell_count >= 2**31 - 1:
        raise MemoryBudgetError("grid too large for 32-bit cell ordinals")
    if record_witnesses and spec.cell_count > 50_000:
        raise ValueError("witness recording is meant for small grids")

    t0 = time.perf_counter()
    offsets = lattice_offsets(spec.gamma, scheme.n)
    draw_combos = scheme.draw_combos(model)
    rows_per_cell = offsets.shape[0] * len(draw_combos)
    chunk_cells = max(1, chunk_rows // max(rows_per_cell, 1))
    num_cells = spec.cell_count
    starts = list(range(0, num_cells, chunk_cells))
    if workers is None:
        workers = default_workers()

    counts = [np.empty(num_cells, dtype=np.int64) for _ in model.actions]
    values = [[None] * len(starts) for _ in model.actions]
    witnesses = {} if record_witnesses else None
    used_bytes = 0

    def _store(start, rows):
        nonlocal used_bytes
        ci = starts.index(start)
        stop = min(start + chunk_cells, num_cells)
        for a, (cnt, vals) in enumerate(rows):
            counts[a][start:stop] = cnt
            values[a][ci] = vals
            used_bytes += vals.nbytes
        if memory_budget is not None and used_bytes > memory_budget:
            raise MemoryBudgetError(
                f"successor store exceeded budget of {memory_budget} bytes"
            )

    if workers > 1 and not record_witnesses and len(starts) > 1:
        tasks = [
            (model, spec, offsets, draw_combos, s, min(s + chunk_cells, num_cells))
            for s in starts
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for start, rows in pool.map(_chunk_task, tasks):
                _store(start, rows)
                if verbose:
                    print(f"  built cells up to {start + chunk_cells}/{num_cells}")
    else:
        for start in starts:
            stop = min(start + chunk_cells, num_cells)
            rows, wit = _build_chunk(
                model, spec, offsets, draw_combos, start, stop, record_witnesses
            )
            if record_witnesses:
                witnesses.update(wit)
            _store(start, rows)
            if verbose:
                print(f"  built cells up to {stop}/{num_cells}")

    indptr, succ = [], []
    for a in range(model.num_actions):
        indptr.append(np.concatenate(([0], np.cumsum(counts[a]))))
        succ.append(
            np.concatenate(values[a]) if values[a] else np.zeros(0, dtype=np.int32)
        )
    ts = TransitionSystem(spec, model.actions, indptr, succ)
    stats = BuildStats(
        cells=num_cells,
        actions=model.num_actions,
        points_per_cell=offsets.shape[0],
        draw_combos=len(draw_combos),
        simulations=num_cells * model.num_actions * rows_per_cell,
        seconds=time.perf_counter() - t0,
    )
    return ts, stats, witnesses


def successors(model, spec, cell, action: int, scheme: SupportScheme) -> set[int]:
    """Successor ordinals of a single (cell, action) pair under the scheme."""
    low, _ = spec.cell_box(cell)
    pts = low + lattice_offsets(spec.gamma, scheme.n)
    out = set()
    for d in scheme.draw_combos(model):
        draws = np.broadcast_to(d, (pts.shape[0], d.size))
        nxt = model.step(pts, action, draws)
        out.update(spec.state_ordinals(nxt).tolist())
    return out


# ---------------------------------------------------------------------------
# exact successor oracle (box-affine models)
# ---------------------------------------------------------------------------


def _index_range(spec: PartitionSpec, lo: np.ndarray, hi: np.ndarray):
    """Per-dimension index range [first, last] of cells intersecting the
    half-open box [lo, hi), clipped to the grid, plus an out-of-bounds flag."""
    x_lo = (lo - spec.lower) / spec.gamma
    x_hi = (hi - spec.lower) / spec.gamma
    first = np.floor(x_lo + BOUNDARY_SNAP).astype(np.int64)
    last = np.ceil(x_hi - BOUNDARY_SNAP).astype(np.int64) - 1
    oob = bool(np.any(first < 0) or np.any(last >= spec.shape))
    first_c = np.clip(first, 0, spec.shape - 1)
    last_c = np.clip(last, 0, spec.shape - 1)
    return first_c, last_c, oob


def exact_successors_box(model, spec: PartitionSpec, cell, action: int) -> set[int]:
    """Exact successor set for models whose one-step image of a box is a box.

    Terminal cells map to themselves; cells straddling a terminal boundary
    raise NotBoxAffineError (align the grid with the terminal thresholds).
    Out-of-bounds image parts contribute the sentinel ordinal.
    """
    if not hasattr(model, "box_image") or not hasattr(model, "box_terminal_status"):
        raise NotBoxAffineError(
            f"model {model.name!r} does not expose exact box-image dynamics"
        )
    low, high = spec.cell_box(cell)
    status = model.box_terminal_status(low, high)
    if status == "mixed":
        raise NotBoxAffineError(
            "cell straddles a terminal boundary; use a grid aligned with the "
            "goal and time-limit thresholds"
        )
    if status in ("goal", "unsafe"):
        return {spec.ordinal_of(cell)}
    img_lo, img_hi = model.box_image(low, high, action)
    first, last, oob = _index_range(spec, img_lo, img_hi)
    ranges = [range(int(f), int(l) + 1) for f, l in zip(first, last)]
    out = {spec.ordinal_of(idx) for idx in itertools.product(*ranges)}
    if oob:
        out.add(spec.cell_count)
    return out


def build_exact_transition_system(model, spec: PartitionSpec) -> TransitionSystem:
    """Oracle-built transition system (every cell, every action)."""
    num_cells = spec.cell_count
    indptr, succ = [], []
    for a in range(model.num_actions):
        counts = np.empty(num_cells, dtype=np.int64)
        rows = []
        for o, cell in enumerate(spec.iterate_cells()):
            s = np.array(sorted(exact_successors_box(model, spec, cell, a)), dtype=np.int32)
            counts[o] = s.size
            rows.append(s)
        indptr.append(np.concatenate(([0], np.cumsum(counts))))
        succ.append(np.concatenate(rows))
    return TransitionSystem(spec, model.actions, indptr, succ)


# ---------------------------------------------------------------------------
# accuracy estimation
# ---------------------------------------------------------------------------


def accuracy_estimate(
    model,
    ts: TransitionSystem,
    num_samples: int,
    seed: int,
    batch: int = 1 << 19,
) -> float:
    """Fraction of uniformly sampled one-step transitions present in ``ts``.

    Samples states uniformly in the partition box, one uniformly random
    action and one random draw vector each, simulates one period and checks
    whether (cell(s), a, cell(s')) is recorded.
    """
    spec = ts.spec
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = num_samples
    while remaining > 0:
        m = min(batch, remaining)
        states = spec.sample_states(m, rng)
        actions = rng.integers(0, model.num_actions, size=m)
        draws = model.draw_batch(m, rng)
        src = spec.state_ordinals(states)
        for a in range(model.num_actions):
            rows = actions == a
            if not np.any(rows):
                continue
            nxt = model.step(states[rows], a, draws[rows])
            dst = spec.state_ordinals(nxt)
            hits += int(ts.membership(src[rows], a, dst).sum())
        remaining -= m
    return hits / num_samples
