"""Pure and mixed Hamiltonians of a game, and the saddle-gap scan.

The payoff matrix at (t, x, p) has entries f(t, x, u_i, v_j) . p.  Pure
Hamiltonians are its maxmin/minmax over pure actions; their gap is what
the scan looks for.  The mixed Hamiltonian is the value of that matrix
over probability mixtures, where max and min commute; the solver computes
it from both sides and raises if they disagree beyond 1e-8.

These evaluations feed the finite-difference PDE solver.  The dynamic
programming solver never calls them - it solves games on interpolated
value fields directly - which keeps the two solution routes independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalError, UsageError
from .games import GameSpec, eval_dynamics
from .matrix_games import pure_values, solve_matrix_game

# Commutation of the two optimization orders is exact in theory; this is
# the numerical agreement we demand from the LP before trusting a value.
COMMUTATION_TOL = 1e-8

# A pure-strategy gap above this counts as a genuine saddle-point failure.
DEFAULT_GAP_TOL = 1e-6


def payoff_matrix_at(game: GameSpec, t: float, x, p) -> np.ndarray:
    """Matrix with entries f(t, x, u_i, v_j) . p (rows maximize)."""
    x = np.asarray(x, dtype=float).reshape(game.state_dim)
    p = np.asarray(p, dtype=float).reshape(game.state_dim)
    if not np.all(np.isfinite(p)):
        raise UsageError("costate p must be finite")
    m, k = game.n_controls_u, game.n_controls_v
    M = np.empty((m, k))
    for i in range(m):
        for j in range(k):
            M[i, j] = float(eval_dynamics(game, t, x, i, j) @ p)
    return M


def pure_hamiltonians(game: GameSpec, t: float, x, p) -> tuple[float, float]:
    """(maxmin, minmax) of the costate-projected dynamics over pure actions."""
    return pure_values(payoff_matrix_at(game, t, x, p))


def mixed_hamiltonian(game: GameSpec, t: float, x, p, tol: float = 1e-9) -> float:
    """Value of the local matrix game over mixed actions.

    Solved from the maximizer side and the minimizer side; the two must
    agree to COMMUTATION_TOL or the call fails loudly.
    """
    M = payoff_matrix_at(game, t, x, p)
    v_max = solve_matrix_game(M, tol=tol, side="max").value
    v_min = solve_matrix_game(M, tol=tol, side="min").value
    if abs(v_max - v_min) > COMMUTATION_TOL:
        raise InternalError(
            f"mixed Hamiltonian sides disagree: {v_max} vs {v_min} at t={t}, x={x}, p={p}"
        )
    return v_max


@dataclass(frozen=True)
class HamiltonianSample:
    t: float
    x: np.ndarray
    p: np.ndarray
    h_pure_lower: float
    h_pure_upper: float
    h_mixed: float

    @property
    def isaacs_gap(self) -> float:
        return self.h_pure_upper - self.h_pure_lower


@dataclass
class IsaacsScanReport:
    samples: list
    max_gap: float
    argmax: tuple | None
    violation_fraction: float
    gap_tolerance: float


def isaacs_gap_scan(
    game: GameSpec,
    t_samples,
    x_samples,
    p_samples,
    gap_tolerance: float = DEFAULT_GAP_TOL,
    tol: float = 1e-9,
) -> IsaacsScanReport:
    """Evaluate the Hamiltonians on the product of the sample sets.

    Reports the largest pure-strategy saddle gap, where it occurs, and
    the fraction of samples whose gap exceeds `gap_tolerance`.
    """
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float).reshape(-1, game.state_dim))
    p_samples = np.atleast_2d(np.asarray(p_samples, dtype=float).reshape(-1, game.state_dim))
    if t_samples.size == 0 or x_samples.size == 0 or p_samples.size == 0:
        raise UsageError("sample sets must be nonempty")

    samples = []
    max_gap = -np.inf
    argmax = None
    violations = 0
    for t in t_samples:
        for x in x_samples:
            for p in p_samples:
                lower, upper = pure_hamiltonians(game, float(t), x, p)
                mixed = mixed_hamiltonian(game, float(t), x, p, tol=tol)
                if mixed < lower - COMMUTATION_TOL or mixed > upper + COMMUTATION_TOL:
                    raise InternalError(
                        f"mixed Hamiltonian {mixed} escapes [{lower}, {upper}]"
                    )
                sample = HamiltonianSample(
                    t=float(t), x=np.array(x), p=np.array(p),
                    h_pure_lower=lower, h_pure_upper=upper, h_mixed=mixed,
                )
                samples.append(sample)
                if sample.isaacs_gap > max_gap:
                    max_gap = sample.isaacs_gap
                    argmax = (float(t), np.array(x), np.array(p))
                if sample.isaacs_gap > gap_tolerance:
                    violations += 1
    return IsaacsScanReport(
        samples=samples,
        max_gap=float(max_gap),
        argmax=argmax,
        violation_fraction=violations / len(samples),
        gap_tolerance=gap_tolerance,
    )
