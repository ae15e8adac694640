"""Exact and iterative solvers for finite zero-sum matrix games.

Rows are the maximizer's actions, columns the minimizer's.  The exact
solver goes through the classical LP formulation: shift the matrix
strictly positive, solve `max 1.y : My <= 1, y >= 0` by dense simplex
with Bland's anti-cycling rule, and read the row player off the duals.
Degenerate inputs (pure saddle points, in particular constant matrices)
short-circuit before the LP, which matters because the dynamic
programming solver calls this at every grid node.

`fictitious_play` is the deliberately independent cross-check: classic
alternating best-response averaging with bracketing value bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MatrixGameError, UsageError

try:  # optional jit for the fictitious-play inner loop
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is optional
    _njit = None


def as_payoff_matrix(matrix) -> np.ndarray:
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise UsageError("payoff matrix must be 2-D and nonempty")
    if not np.all(np.isfinite(M)):
        raise UsageError("payoff matrix entries must be finite")
    return M


@dataclass(frozen=True)
class MatrixGameSolution:
    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    certificate_gap: float
    method: str


def pure_values(matrix) -> tuple[float, float]:
    """(max_i min_j, min_j max_i) over pure actions; lower <= upper."""
    M = as_payoff_matrix(matrix)
    lower = float(M.min(axis=1).max())
    upper = float(M.max(axis=0).min())
    return lower, upper


def _certify(M: np.ndarray, mu: np.ndarray, nu: np.ndarray, value: float,
             tol: float, method: str) -> MatrixGameSolution:
    mu = np.clip(mu, 0.0, None)
    nu = np.clip(nu, 0.0, None)
    mu = mu / mu.sum()
    nu = nu / nu.sum()
    best_row = float(np.max(M @ nu))
    worst_col = float(np.min(mu @ M))
    gap = best_row - worst_col
    if gap > tol:
        raise MatrixGameError(
            f"uncertified matrix-game solution: gap {gap:.3e} > tol {tol:.3e}", matrix=M
        )
    lower, upper = pure_values(M)
    slack = max(tol, 1e-9)
    if value < lower - slack or value > upper + slack:
        raise MatrixGameError(
            f"value {value} escapes the pure-strategy sandwich [{lower}, {upper}]",
            matrix=M,
        )
    return MatrixGameSolution(
        value=float(value),
        row_strategy=mu,
        col_strategy=nu,
        certificate_gap=float(gap),
        method=method,
    )


def _simplex_max_ones(A: np.ndarray, max_pivots: int = 10000):
    """Maximize 1.y subject to A y <= 1, y >= 0 for strictly positive A.

    Returns (y, duals, objective).  Entering variable: smallest index with
    negative reduced cost; leaving: ratio test with ties broken by
    smallest basis index (Bland's rule, deterministic and cycle-free).
    """
    m, k = A.shape
    tab = np.zeros((m + 1, k + m + 1))
    tab[:m, :k] = A
    tab[:m, k:k + m] = np.eye(m)
    tab[:m, -1] = 1.0
    tab[m, :k] = -1.0
    basis = np.arange(k, k + m)
    for _ in range(max_pivots):
        negative = np.nonzero(tab[m, :k + m] < -1e-12)[0]
        if negative.size == 0:
            break
        e = int(negative[0])
        col = tab[:m, e]
        rows = np.nonzero(col > 1e-12)[0]
        if rows.size == 0:
            raise MatrixGameError("simplex tableau unbounded", matrix=A)
        ratios = tab[rows, -1] / col[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + 1e-14 * (1.0 + abs(rmin))]
        r = int(ties[np.argmin(basis[ties])])
        piv_row = tab[r] / tab[r, e]
        factors = tab[:, e].copy()
        factors[r] = 0.0
        tab -= np.outer(factors, piv_row)
        tab[r] = piv_row
        basis[r] = e
    else:
        raise MatrixGameError("simplex pivot limit exceeded", matrix=A)
    y = np.zeros(k)
    in_y = basis < k
    y[basis[in_y]] = tab[:m, -1][in_y]
    duals = tab[m, k:k + m].copy()
    return y, duals, float(tab[m, -1])


def _solve_lp_max_side(M: np.ndarray, tol: float) -> MatrixGameSolution:
    shift = 1.0 - float(M.min())
    y, duals, total = _simplex_max_ones(M + shift)
    if total <= 0:
        raise MatrixGameError("simplex returned nonpositive objective", matrix=M)
    value = 1.0 / total - shift
    nu = y / total
    mu = duals / total
    return _certify(M, mu, nu, value, tol, "simplex")


def solve_matrix_game(matrix, tol: float = 1e-9, side: str = "max") -> MatrixGameSolution:
    """Value and optimal mixed strategies of a zero-sum matrix game.

    `side` selects which player's LP is solved as the primal ("max" rows,
    "min" columns); by LP duality both give the same value, and the
    acceptance suite checks they agree to 1e-8.  The returned solution is
    always certified: the strategy pair's duality gap must be <= tol.
    """
    if not tol > 0:
        raise UsageError("tol must be positive")
    M = as_payoff_matrix(matrix)
    lower, upper = pure_values(M)
    if lower == upper:
        # Pure saddle point (includes constant matrices): canonical
        # first-index argmax/argmin selection, exact value.
        i_star = int(np.argmax(M.min(axis=1)))
        j_star = int(np.argmin(M.max(axis=0)))
        mu = np.zeros(M.shape[0])
        nu = np.zeros(M.shape[1])
        mu[i_star] = 1.0
        nu[j_star] = 1.0
        return _certify(M, mu, nu, lower, tol, "pure")
    if side == "max":
        return _solve_lp_max_side(M, tol)
    if side == "min":
        swapped = _solve_lp_max_side(-M.T, tol)
        return _certify(
            M, swapped.col_strategy, swapped.row_strategy, -swapped.value, tol, "simplex"
        )
    raise UsageError(f"side must be 'max' or 'min', got {side!r}")


# ---------------------------------------------------------------------------
# Fictitious play (independent oracle)

def _fp_core_py(M, iterations, start_row):
    m, k = M.shape
    row_counts = np.zeros(m)
    col_counts = np.zeros(k)
    row_gain = np.zeros(m)   # payoff of each row against the column history
    col_loss = np.zeros(k)   # payoff conceded by each column against the row history
    i = start_row
    best_lower = -np.inf
    best_upper = np.inf
    for t in range(1, iterations + 1):
        row_counts[i] += 1.0
        col_loss += M[i]
        j = np.argmin(col_loss)
        col_counts[j] += 1.0
        row_gain += M[:, j]
        i = np.argmax(row_gain)
        lower_t = col_loss[j] / t      # what the row mixture guarantees
        upper_t = row_gain[i] / t      # what the column mixture concedes
        if lower_t > best_lower:
            best_lower = lower_t
        if upper_t < best_upper:
            best_upper = upper_t
    return row_counts, col_counts, best_lower, best_upper


_fp_core = _njit(cache=True)(_fp_core_py) if _njit is not None else _fp_core_py


def fictitious_play(matrix, iterations: int, seed: int = 0) -> MatrixGameSolution:
    """Approximate solution by alternating best-response averaging.

    The value estimate is the midpoint of the tightest bracket
    [max_t guarantees, min_t concessions] seen along the run; the
    certificate gap reported is that of the final empirical mixtures and
    is not required to be small.  The seed picks the opening row.
    """
    if iterations < 1:
        raise UsageError("iterations must be >= 1")
    M = as_payoff_matrix(matrix)
    m, k = M.shape
    row_counts, col_counts, best_lower, best_upper = _fp_core(
        np.ascontiguousarray(M), int(iterations), int(seed) % m
    )
    mu = row_counts / row_counts.sum()
    nu = col_counts / col_counts.sum()
    gap = float(np.max(M @ nu) - np.min(mu @ M))
    return MatrixGameSolution(
        value=float(0.5 * (best_lower + best_upper)),
        row_strategy=mu,
        col_strategy=nu,
        certificate_gap=gap,
        method="fictitious_play",
    )


# ---------------------------------------------------------------------------
# Batched node games for the grid solvers

def game_values_batch(entries: np.ndarray, mode: str, tol: float = 1e-9,
                      side: str = "max") -> np.ndarray:
    """Game values for a stack of matrices, shape (m, k, N) -> (N,).

    Pure modes are fully vectorized.  In mixed mode, nodes whose pure
    bounds already coincide (to a 1e-12 relative test) take that exact
    value; the rest go through the LP one by one.
    """
    if entries.ndim != 3:
        raise UsageError("entries must have shape (m, k, N)")
    lower = entries.min(axis=1).max(axis=0)
    upper = entries.max(axis=0).min(axis=0)
    if mode == "pure_lower":
        return lower
    if mode == "pure_upper":
        return upper
    if mode != "mixed":
        raise UsageError(f"unknown mode {mode!r}")
    values = lower.copy()
    scale = max(1.0, float(np.abs(entries).max())) if entries.size else 1.0
    needs_lp = np.nonzero(upper - lower > 1e-12 * scale)[0]
    for idx in needs_lp:
        values[idx] = solve_matrix_game(
            np.ascontiguousarray(entries[:, :, idx]), tol=tol, side=side
        ).value
    return values
