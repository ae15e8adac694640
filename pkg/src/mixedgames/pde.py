"""Monotone finite-difference solver for the limiting Hamilton-Jacobi
equation, and the mesh-refinement harness comparing it with the dynamic
programming fields.

The terminal-value problem  dW/dt + H(t, x, grad W) = 0,  W(T, .) = g  is
marched backward with a local Lax-Friedrichs numerical Hamiltonian:
central gradient per axis plus an artificial-viscosity term whose
per-axis coefficient is the dynamics bound - a certified Lipschitz bound
of H in the gradient argument, which together with the CFL restriction
makes the update monotone in every stencil value.  H itself is the mixed
matrix-game value computed by LP at every node and step.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, InternalError, SolverError, UsageError
from .games import GameSpec, Partition, default_domain, uniform_partition
from .dpp import Grid, ValueField, backward_dpp, build_grid, interpolate_many
from .matrix_games import game_values_batch
from .hamiltonians import COMMUTATION_TOL


@dataclass
class PdeSolution:
    grid: Grid
    time_step: float
    fields: list          # descending in time: fields[0] at T, fields[-1] at 0
    dissipation: np.ndarray
    cfl_ratio: float

    @property
    def initial_field(self) -> ValueField:
        return self.fields[-1]


def _shifted(values: np.ndarray, axis: int, step: int) -> np.ndarray:
    """Neighbor values along an axis with clamped (copy-edge) boundaries."""
    src = [slice(None)] * values.ndim
    edge = [slice(None)] * values.ndim
    if step == +1:
        src[axis] = slice(1, None)
        edge[axis] = slice(-1, None)
        return np.concatenate([values[tuple(src)], values[tuple(edge)]], axis=axis)
    src[axis] = slice(None, -1)
    edge[axis] = slice(None, 1)
    return np.concatenate([values[tuple(edge)], values[tuple(src)]], axis=axis)


def lax_friedrichs_step(
    values: np.ndarray,
    grid: Grid,
    dt: float,
    sigma: np.ndarray,
    hamiltonian_at: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    """One backward step W <- W + dt * (H(x, D_c W) + dissipation).

    `hamiltonian_at(points, grads)` maps (N, d) points and gradients to
    (N,) Hamiltonian values.  Monotone provided dt * sum(sigma/h) <= 1
    and sigma dominates the gradient-Lipschitz constant of H.
    """
    d = grid.dim
    grads = []
    dissipation = np.zeros_like(values)
    for a in range(d):
        up = _shifted(values, a, +1)
        dn = _shifted(values, a, -1)
        grads.append((up - dn) / (2.0 * grid.h[a]))
        dissipation += sigma[a] * (up - 2.0 * values + dn) / (2.0 * grid.h[a])
    p = np.stack([g.ravel() for g in grads], axis=-1)
    ham = hamiltonian_at(grid.points(), p).reshape(values.shape)
    return values + dt * (ham + dissipation)


def _mixed_hamiltonian_batch(game: GameSpec, t: float, points: np.ndarray,
                             grads: np.ndarray, tol: float,
                             memo: dict | None) -> np.ndarray:
    m, k = game.n_controls_u, game.n_controls_v
    n = points.shape[0]

    if memo is not None:
        keys = [tuple(np.round(grads[i] / 1e-9).astype(np.int64).tolist())
                for i in range(n)]
        out = np.empty(n)
        todo = [i for i, key in enumerate(keys) if key not in memo]
        if todo:
            sub_pts = points[todo]
            sub_grd = grads[todo]
            vals = _mixed_hamiltonian_batch(game, t, sub_pts, sub_grd, tol, None)
            for pos, i in enumerate(todo):
                memo[keys[i]] = vals[pos]
        for i, key in enumerate(keys):
            out[i] = memo[key]
        return out

    entries = np.empty((m, k, n))
    for a in range(m):
        for b in range(k):
            vel = np.asarray(
                game.dynamics(t, points, game.controls_u[a], game.controls_v[b]),
                dtype=float,
            )
            entries[a, b] = np.einsum("nd,nd->n", vel, grads)
    v_max = game_values_batch(entries, "mixed", tol=tol, side="max")
    v_min = game_values_batch(entries, "mixed", tol=tol, side="min")
    worst = float(np.max(np.abs(v_max - v_min))) if n else 0.0
    if worst > COMMUTATION_TOL:
        raise InternalError(f"Hamiltonian sides disagree by {worst:.3e} at t={t}")
    return v_max


def solve_hji(game: GameSpec, grid: Grid, n_steps: int, cfl: float = 0.9,
              tol: float = 1e-9, memoize: bool = False) -> PdeSolution:
    """Backward march of the mixed-Hamiltonian equation on the grid.

    The time step is cfl / sum_a(sigma_a / h_a) with sigma_a equal to
    the dynamics bound; `n_steps` below the CFL-mandated count is rounded
    up.  With `memoize` (valid only for state/time-independent dynamics)
    Hamiltonian values are cached on the quantized gradient.
    """
    if not 0 < cfl <= 1.0:
        raise UsageError("cfl must be in (0, 1]")
    if n_steps < 1:
        raise UsageError("n_steps must be >= 1")
    if memoize and not game.dynamics_state_independent:
        raise UsageError("memoize requires state/time-independent dynamics")
    sigma = np.full(grid.dim, game.declared_bound_f)
    denom = float(np.sum(sigma / grid.h))
    if denom <= 0:
        raise UsageError("degenerate dissipation; is bound_f zero?")
    dt_max = cfl / denom
    steps = max(int(n_steps), math.ceil(game.horizon / dt_max - 1e-12))
    dt = game.horizon / steps
    cfl_ratio = dt * denom
    if cfl_ratio > 1.0 + 1e-12:
        raise InternalError("CFL violated after step rounding")

    memo: dict | None = {} if memoize else None
    points = grid.points()
    values = np.asarray(game.terminal(points), dtype=float).reshape(grid.shape)
    if not np.all(np.isfinite(values)):
        raise SolverError("terminal payoff non-finite on the grid")
    fields = [ValueField(grid=grid, time=game.horizon, values=values, mode="mixed")]

    def ham_at(t):
        def fn(pts, grads):
            return _mixed_hamiltonian_batch(game, t, pts, grads, tol, memo)
        return fn

    t = game.horizon
    for step in range(steps):
        values = lax_friedrichs_step(values, grid, dt, sigma, ham_at(t))
        t -= dt
        if not np.all(np.isfinite(values)):
            raise SolverError(f"non-finite PDE field at step {step}")
        fields.append(ValueField(grid=grid, time=max(t, 0.0), values=values,
                                 mode="mixed"))
    return PdeSolution(grid=grid, time_step=dt, fields=fields,
                       dissipation=sigma, cfl_ratio=cfl_ratio)


# ---------------------------------------------------------------------------
# Closed-form references for the builtin games (default tent payoff).

def tent_max_over_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """max over |y - x| <= radius of max(0, 1 - |y|), in closed form."""
    return np.clip(1.0 + radius - np.abs(x), 0.0, 1.0)


def closed_form_t0_reference(game: GameSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Exact limiting value at t=0 for builtin games with the tent payoff.

    For the product-dynamics games the mixed Hamiltonian vanishes, so the
    limit is the payoff itself; for the separable game the maximizing
    player expands the payoff over a horizon/2 ball (variational formula
    for H(p) = |p|/2).
    """
    if game.name in ("uv", "uv_shift"):
        return lambda pts: np.asarray(game.terminal(pts), dtype=float)
    if game.name == "separable":
        radius = 0.5 * game.horizon
        return lambda pts: tent_max_over_ball(np.asarray(pts)[:, 0], radius)
    raise UsageError(f"no closed-form reference for game {game.name!r}")


@dataclass
class ConvergenceRow:
    mesh: float
    grid_h: float
    sup_error: float
    seconds: float


@dataclass
class ConvergenceReport:
    rows: list
    reference: str
    slack: float

    def errors(self):
        return [r.sup_error for r in self.rows]


def convergence_study(
    game: GameSpec,
    meshes: Sequence[int],
    grid_h=1.0,
    reference: str = "closed-form",
    domain=None,
    region_of_interest=None,
    tol: float = 1e-9,
    cfl: float = 0.9,
    slack: float = 0.10,
) -> ConvergenceReport:
    """Run the mixed DPP scheme across refinement levels and measure
    sup-norm errors at t=0 over the region of interest.

    `meshes` are partition interval counts, coarsest first after sorting;
    `grid_h` is the spacing rule (numeric c means h = c/n, or a callable
    n -> h).  Reference is the closed form where available or the PDE
    solve at the finest spacing.  Errors must be non-increasing level to
    level within the given relative slack, else ConvergenceError.
    """
    meshes = sorted(int(n) for n in meshes)
    if len(meshes) < 3:
        raise UsageError("need at least 3 mesh levels")
    if any(n < 1 for n in meshes):
        raise UsageError("mesh levels must be positive")
    d_lo, d_hi, r_lo, r_hi = default_domain(game)
    if domain is not None:
        d_lo, d_hi = np.asarray(domain[0], float), np.asarray(domain[1], float)
    if region_of_interest is not None:
        r_lo = np.asarray(region_of_interest[0], float)
        r_hi = np.asarray(region_of_interest[1], float)

    spacing = grid_h if callable(grid_h) else (lambda n: float(grid_h) / n)

    ref_fn = None
    if reference == "closed-form":
        ref_fn = closed_form_t0_reference(game)
    elif reference != "finest-solve":
        raise UsageError("reference must be 'closed-form' or 'finest-solve'")

    levels = []
    for n in meshes:
        h = spacing(n)
        res = [int(round((d_hi[a] - d_lo[a]) / h)) + 1 for a in range(game.state_dim)]
        grid = build_grid(d_lo, d_hi, res, game, region_of_interest=(r_lo, r_hi))
        start = _time.perf_counter()
        result = backward_dpp(game, uniform_partition(game.horizon, n), grid,
                              mode="mixed", tol=tol)
        seconds = _time.perf_counter() - start
        levels.append((n, grid, result, seconds))

    if ref_fn is None:
        finest_grid = levels[-1][1]
        pde = solve_hji(game, finest_grid, n_steps=1, cfl=cfl, tol=tol)

        def ref_fn(pts):
            return interpolate_many(pde.initial_field, pts)

    rows = []
    for n, grid, result, seconds in levels:
        pts = grid.points()
        inside = np.all((pts >= r_lo - 1e-12) & (pts <= r_hi + 1e-12), axis=1)
        roi_pts = pts[inside]
        err = float(np.max(np.abs(
            interpolate_many(result.fields[0], roi_pts) - ref_fn(roi_pts)
        )))
        rows.append(ConvergenceRow(mesh=game.horizon / n, grid_h=float(np.max(grid.h)),
                                   sup_error=err, seconds=seconds))
    report = ConvergenceReport(rows=rows, reference=reference, slack=slack)
    for prev, cur in zip(rows, rows[1:]):
        if cur.sup_error > prev.sup_error * (1.0 + slack) + 1e-12:
            raise ConvergenceError(
                f"error grew under refinement: {prev.sup_error} -> {cur.sup_error}",
                report=report,
            )
    return report
