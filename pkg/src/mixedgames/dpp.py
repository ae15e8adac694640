"""Backward dynamic programming on a spatial grid.

One partition interval is one backward step: at every grid node the
solver builds the matrix of next-step values reached by an explicit Euler
displacement per control pair, interpolated multilinearly from the
already-computed later field, and takes that matrix's game value (mixed
LP value, or pure maxmin/minmax depending on mode).  Multilinear
interpolation keeps every entry a convex combination of stored values, so
the scheme is monotone and sup-norm nonexpansive by construction.

States that leave the box are clamped componentwise before interpolating;
a padding audit at grid construction checks that the region of interest
plus the reachable displacement stays inside, which makes the clamping
invisible where results are read.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InternalError, MatrixGameError, SolverError, UsageError
from .games import GameSpec, Partition
from .matrix_games import game_values_batch

MODES = ("mixed", "pure_lower", "pure_upper")

# Interpolation weights this close to a node snap onto it, so querying a
# node's own coordinate reproduces the stored value exactly.
_SNAP = 1e-9


class PaddingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on a d-dimensional box."""

    lower: np.ndarray
    upper: np.ndarray
    counts: tuple
    h: np.ndarray
    axes: tuple
    padding_ok: bool | None = None
    padding_margin: float | None = None

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.counts))

    def points(self) -> np.ndarray:
        """All nodes as an (n_nodes, d) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def build_grid(domain_lower, domain_upper, resolution_per_axis, game: GameSpec,
               region_of_interest=None) -> Grid:
    """Uniform grid over the box; audits padding against the game's reach.

    If a region of interest is given, the margin between it and the box
    must cover the maximal displacement bound_f * horizon; otherwise a
    PaddingWarning is emitted and the grid records the failed audit.
    """
    d = game.state_dim
    lo = np.broadcast_to(np.asarray(domain_lower, dtype=float), (d,)).copy()
    hi = np.broadcast_to(np.asarray(domain_upper, dtype=float), (d,)).copy()
    if np.any(hi <= lo):
        raise UsageError("domain upper bound must exceed lower bound per axis")
    res = np.broadcast_to(np.asarray(resolution_per_axis, dtype=int), (d,))
    if np.any(res < 2):
        raise UsageError("need at least 2 nodes per axis")
    axes = tuple(np.linspace(lo[a], hi[a], int(res[a])) for a in range(d))
    h = np.array([(hi[a] - lo[a]) / (int(res[a]) - 1) for a in range(d)])

    padding_ok = None
    margin = None
    if region_of_interest is not None:
        roi_lo = np.broadcast_to(np.asarray(region_of_interest[0], dtype=float), (d,))
        roi_hi = np.broadcast_to(np.asarray(region_of_interest[1], dtype=float), (d,))
        margin = float(min(np.min(roi_lo - lo), np.min(hi - roi_hi)))
        reach = game.declared_bound_f * game.horizon
        padding_ok = margin >= reach - 1e-12
        if not padding_ok:
            warnings.warn(
                f"grid margin {margin:.3g} is below the reachable displacement "
                f"{reach:.3g}; clamping may contaminate the region of interest",
                PaddingWarning,
                stacklevel=2,
            )
    return Grid(lower=lo, upper=hi, counts=tuple(int(r) for r in res), h=h,
                axes=axes, padding_ok=padding_ok, padding_margin=margin)


@dataclass(frozen=True)
class ValueField:
    """Value samples on a grid at one time node."""

    grid: Grid
    time: float
    values: np.ndarray
    mode: str = "mixed"

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise UsageError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )


def interpolate_many(fieldv: ValueField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at (N, d) query points.

    Queries outside the box are clamped componentwise (constant
    extrapolation).  Weights within 1e-9 of a node snap, so exact node
    coordinates return stored values exactly.
    """
    grid = fieldv.grid
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != grid.dim:
        raise UsageError(f"points must have shape (N, {grid.dim})")
    n = pts.shape[0]
    idx = np.empty((n, grid.dim), dtype=np.intp)
    wts = np.empty((n, grid.dim))
    for a in range(grid.dim):
        r = (pts[:, a] - grid.lower[a]) / grid.h[a]
        r = np.clip(r, 0.0, grid.counts[a] - 1.0)
        ia = np.minimum(r.astype(np.intp), grid.counts[a] - 2)
        w = r - ia
        w[w < _SNAP] = 0.0
        w[w > 1.0 - _SNAP] = 1.0
        idx[:, a] = ia
        wts[:, a] = w
    flat = fieldv.values.ravel()
    strides = np.array(
        [int(np.prod(grid.counts[a + 1:], dtype=np.intp)) for a in range(grid.dim)],
        dtype=np.intp,
    )
    out = np.zeros(n)
    for corner in itertools.product((0, 1), repeat=grid.dim):
        weight = np.ones(n)
        offset = np.zeros(n, dtype=np.intp)
        for a, bit in enumerate(corner):
            weight *= wts[:, a] if bit else (1.0 - wts[:, a])
            offset += (idx[:, a] + bit) * strides[a]
        out += weight * flat[offset]
    return out


def interpolate(fieldv: ValueField, x) -> float:
    """Multilinear interpolation at a single point (clamped outside)."""
    x = np.asarray(x, dtype=float).reshape(1, fieldv.grid.dim)
    return float(interpolate_many(fieldv, x)[0])


def lipschitz_estimate(fieldv: ValueField) -> float:
    """Max |value difference| / spacing over adjacent node pairs."""
    best = 0.0
    for a in range(fieldv.grid.dim):
        d = np.diff(fieldv.values, axis=a)
        if d.size:
            best = max(best, float(np.max(np.abs(d))) / fieldv.grid.h[a])
    return best


@dataclass
class DppResult:
    game: GameSpec
    partition: Partition
    grid: Grid
    mode: str
    side: str
    fields: list = field(default_factory=list)
    lipschitz_per_node: list = field(default_factory=list)

    def field_at_node(self, i: int) -> ValueField:
        return self.fields[i]


def _one_step_entries(game: GameSpec, t: float, dt: float, points: np.ndarray,
                      next_field: ValueField) -> np.ndarray:
    """Matrix entries (m, k, N): next value after one Euler displacement."""
    m, k = game.n_controls_u, game.n_controls_v
    n = points.shape[0]
    entries = np.empty((m, k, n))
    for a in range(m):
        for b in range(k):
            vel = np.asarray(
                game.dynamics(t, points, game.controls_u[a], game.controls_v[b]),
                dtype=float,
            )
            if vel.shape != points.shape:
                raise SolverError(
                    f"dynamics of {game.name!r} returned shape {vel.shape}, "
                    f"expected {points.shape}"
                )
            entries[a, b] = interpolate_many(next_field, points + dt * vel)
    if not np.all(np.isfinite(entries)):
        raise SolverError(f"non-finite one-step values at t={t}")
    return entries


def backward_dpp(game: GameSpec, partition: Partition, grid: Grid,
                 mode: str = "mixed", tol: float = 1e-9,
                 side: str = "max") -> DppResult:
    """Fill value fields backward from the terminal payoff.

    `side` picks which player's LP is primal in mixed mode; the two runs
    must agree nodewise to 1e-8 (checked by the acceptance suite).
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    if abs(partition.horizon - game.horizon) > 1e-12:
        raise UsageError("partition horizon differs from the game horizon")
    if grid.padding_ok is False:
        warnings.warn("running on an underpadded grid", PaddingWarning, stacklevel=2)

    points = grid.points()
    nodes = partition.nodes
    n = partition.n_intervals
    terminal = np.asarray(game.terminal(points), dtype=float).reshape(grid.shape)
    if not np.all(np.isfinite(terminal)):
        raise SolverError("terminal payoff is non-finite on the grid")
    bound = float(np.max(np.abs(terminal)))

    fields: list = [None] * (n + 1)
    fields[n] = ValueField(grid=grid, time=float(nodes[n]), values=terminal, mode=mode)
    for i in range(n - 1, -1, -1):
        dt = float(nodes[i + 1] - nodes[i])
        entries = _one_step_entries(game, float(nodes[i]), dt, points, fields[i + 1])
        try:
            vals = game_values_batch(entries, mode, tol=tol, side=side)
        except MatrixGameError as exc:
            raise SolverError(
                f"matrix game failed at time node {i} (t={nodes[i]}): {exc}"
            ) from exc
        if not np.all(np.isfinite(vals)):
            raise SolverError(f"non-finite field at time node {i}")
        if np.max(np.abs(vals)) > bound + 1e-9:
            raise InternalError(
                f"sup-norm bound violated at time node {i}: "
                f"{np.max(np.abs(vals))} > {bound}"
            )
        fields[i] = ValueField(grid=grid, time=float(nodes[i]),
                               values=vals.reshape(grid.shape), mode=mode)

    result = DppResult(game=game, partition=partition, grid=grid, mode=mode, side=side)
    result.fields = fields
    result.lipschitz_per_node = [lipschitz_estimate(f) for f in fields]
    return result


@dataclass
class ConsistencyReport:
    max_residual: float
    bound_constant: float
    window: int
    points_checked: int


def dpp_consistency_check(result: DppResult, sample_points, l: int) -> ConsistencyReport:
    """Residual of the one-step recursion at off-grid points.

    For every time node i < l, recompute the value at each sample point
    by solving the one-step game against the frozen field at node i+1 and
    compare with the interpolated stored field at node i.  The residual
    is bounded by C * (h + mesh); the report carries the observed C.
    """
    if l < 0 or l > result.partition.n_intervals:
        raise UsageError("window index l out of range")
    pts = np.asarray(sample_points, dtype=float).reshape(-1, result.grid.dim)
    if l == 0 or pts.size == 0:
        return ConsistencyReport(0.0, 0.0, l, pts.shape[0])
    nodes = result.partition.nodes
    worst = 0.0
    for i in range(l):
        dt = float(nodes[i + 1] - nodes[i])
        entries = _one_step_entries(result.game, float(nodes[i]), dt, pts,
                                    result.fields[i + 1])
        recomputed = game_values_batch(entries, result.mode, side=result.side)
        stored = interpolate_many(result.fields[i], pts)
        worst = max(worst, float(np.max(np.abs(recomputed - stored))))
    denom = float(np.max(result.grid.h)) + result.partition.mesh
    return ConsistencyReport(
        max_residual=worst,
        bound_constant=worst / denom if denom > 0 else 0.0,
        window=l,
        points_checked=pts.shape[0],
    )
