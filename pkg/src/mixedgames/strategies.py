"""Randomized per-interval controls, delayed strategies, and play.

Randomness enters only through per-interval coordinate pairs drawn from
the counter-based generator: coordinate lane 0 belongs to the maximizing
player, lane 1 to the minimizer, so with the history held fixed the two
players' realized actions on an interval are independent.  Mixed actions
are realized by the quantile rule on the player's own coordinate.

A strategy produces one control index per interval and may read opponent
blocks only for strictly earlier intervals; that structural delay is what
lets a strategy pair resolve to a unique pair of admissible controls by a
single forward pass, which `resolve_play` re-verifies after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolationError, StrategyDelayError, UsageError
from .games import GameSpec, Partition, Trajectory, integrate_trajectory, intervals_from
from .dpp import DppResult, interpolate
from .matrix_games import solve_matrix_game
from .rng import unit_uniform_array


@dataclass(frozen=True)
class RandomizationStream:
    """Per-interval coordinate pairs keyed by (seed, sample, interval, lane)."""

    seed: int
    sample_index: int
    n_intervals: int

    def __post_init__(self):
        idx = np.arange(self.n_intervals)
        base = (self.seed, self.sample_index)
        object.__setattr__(self, "_lane0", unit_uniform_array(base, idx, 0))
        object.__setattr__(self, "_lane1", unit_uniform_array(base, idx, 1))

    def coord(self, j: int, lane: int) -> float:
        if not 0 <= j < self.n_intervals:
            raise UsageError(f"interval {j} out of range")
        return float(self._lane0[j] if lane == 0 else self._lane1[j])

    def pair(self, j: int) -> tuple[float, float]:
        return self.coord(j, 0), self.coord(j, 1)


class HistoryView:
    """Read access to the coordinate pairs of intervals before a cutoff."""

    __slots__ = ("_stream", "limit")

    def __init__(self, stream: RandomizationStream, limit: int = 0):
        self._stream = stream
        self.limit = limit

    def __len__(self):
        return self.limit

    def pair(self, j: int) -> tuple[float, float]:
        if j >= self.limit:
            raise StrategyDelayError(
                f"history access to interval {j} at cutoff {self.limit}"
            )
        return self._stream.pair(j)


class BlockView:
    """Guarded read access to a player's block sequence.

    Reading at or past the cutoff (or before the play started) raises,
    which is how delay violations by strategy implementations surface.
    """

    __slots__ = ("_blocks", "start", "limit")

    def __init__(self, blocks: list, start: int, limit: int = 0):
        self._blocks = blocks
        self.start = start
        self.limit = limit

    def __len__(self):
        return self.limit

    def __getitem__(self, j):
        j = int(j)
        if j < self.start or j >= self.limit:
            raise StrategyDelayError(
                f"block access to interval {j} outside [{self.start}, {self.limit})"
            )
        return self._blocks[j]


def quantile_index(probabilities, u: float) -> int:
    """Inverse-CDF draw: smallest index whose cumulative mass exceeds u."""
    c = 0.0
    last = 0
    for a, p in enumerate(probabilities):
        if p < -1e-12:
            raise UsageError("negative probability in mixed action")
        c += p
        last = a
        if u < c:
            return a
    return last


@dataclass(frozen=True)
class PlayContext:
    game: GameSpec
    partition: Partition
    t0: float
    x0: np.ndarray
    start_index: int
    n_intervals: int


class NadStrategy:
    """Base class: a per-interval block rule with the delay property.

    `session(ctx)` returns a callable
        block(j, history, own_blocks, opp_blocks, own_coord) -> index
    invoked with j increasing; a fresh session is created per play, so
    implementations may keep per-play state inside the closure.
    """

    def session(self, ctx: PlayContext) -> Callable:
        raise NotImplementedError


class ConstantStrategy(NadStrategy):
    def __init__(self, index: int):
        self.index = int(index)

    def session(self, ctx):
        def block(j, history, own, opp, coord):
            return self.index
        return block


class CopyOpponentStrategy(NadStrategy):
    """Play the opponent's previous block; a fixed index on the first."""

    def __init__(self, first_index: int = 0):
        self.first_index = int(first_index)

    def session(self, ctx):
        def block(j, history, own, opp, coord):
            if j == ctx.start_index:
                return self.first_index
            return int(opp[j - 1])
        return block


class MixedActionStrategy(NadStrategy):
    """Independently realize a fixed mixed action every interval."""

    def __init__(self, probabilities):
        self.probabilities = tuple(float(p) for p in probabilities)

    def session(self, ctx):
        def block(j, history, own, opp, coord):
            return quantile_index(self.probabilities, coord)
        return block


@dataclass(frozen=True)
class AdmissibleControlSpec:
    """History-measurable mixed action per interval, realized by quantile.

    `prob_fn(j, history) -> probability vector` may depend on the full
    coordinate history before interval j but not on interval j itself;
    the realized index on interval j then depends on the player's own
    coordinate alone, which is the conditional-independence structure.
    """

    n_actions: int
    prob_fn: Callable

    def probabilities(self, j: int, history: HistoryView):
        p = np.asarray(self.prob_fn(j, history), dtype=float)
        if p.shape != (self.n_actions,) or np.any(p < -1e-12):
            raise UsageError(f"invalid probability vector at interval {j}")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise UsageError(f"probabilities at interval {j} do not sum to 1")
        return p

    def realize(self, stream: RandomizationStream, lane: int, start_index: int = 0):
        """Realized control indices over all intervals from start_index."""
        history = HistoryView(stream, 0)
        out = []
        for j in range(start_index, stream.n_intervals):
            history.limit = j
            p = self.probabilities(j, history)
            out.append(quantile_index(p, stream.coord(j, lane)))
        return out

    def as_strategy(self) -> NadStrategy:
        spec = self

        class _Lifted(NadStrategy):
            def session(self, ctx):
                def block(j, history, own, opp, coord):
                    return quantile_index(spec.probabilities(j, history), coord)
                return block

        return _Lifted()


class SaddleStrategy(NadStrategy):
    """Markov strategy that re-solves the one-step game at its state.

    The state is reconstructed by the same one-Euler-step displacement
    the grid solver uses, from the blocks both players already revealed.
    The optimal mixed action of the local game (own side of the LP) is
    realized through the player's own coordinate.  Solved games are
    memoized on the quantized state, which only reuses results for
    states equal to 1e-9 resolution.
    """

    def __init__(self, dpp: DppResult, player: str, tol: float = 1e-9,
                 cache: bool = True):
        if dpp.mode != "mixed":
            raise UsageError("saddle synthesis needs a mixed-mode solve")
        if not dpp.fields or any(f is None for f in dpp.fields):
            raise UsageError("saddle synthesis needs all value fields")
        if player not in ("max", "min"):
            raise UsageError("player must be 'max' or 'min'")
        self.dpp = dpp
        self.player = player
        self.tol = tol
        self._cache: dict | None = {} if cache else None

    def _mixed_action(self, j: int, x: np.ndarray):
        key = None
        if self._cache is not None:
            key = (j, tuple(np.round(x / 1e-9).astype(np.int64).tolist()))
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        game = self.dpp.game
        nodes = self.dpp.partition.nodes
        dt = float(nodes[j + 1] - nodes[j])
        t = float(nodes[j])
        m, k = game.n_controls_u, game.n_controls_v
        matrix = np.empty((m, k))
        nxt = self.dpp.fields[j + 1]
        for a in range(m):
            for b in range(k):
                vel = np.asarray(
                    game.dynamics(t, x, game.controls_u[a], game.controls_v[b]),
                    dtype=float,
                )
                matrix[a, b] = interpolate(nxt, x + dt * vel)
        sol = solve_matrix_game(matrix, tol=self.tol,
                                side="max" if self.player == "max" else "min")
        probs = sol.row_strategy if self.player == "max" else sol.col_strategy
        probs = tuple(float(p) for p in probs)
        if key is not None:
            self._cache[key] = probs
        return probs

    def session(self, ctx):
        if ctx.partition.n_intervals != self.dpp.partition.n_intervals or \
                not np.allclose(ctx.partition.nodes, self.dpp.partition.nodes,
                                rtol=0.0, atol=1e-12):
            raise UsageError("play partition differs from the solved partition")
        if abs(ctx.t0 - float(ctx.partition.nodes[ctx.start_index])) > 1e-12:
            raise UsageError("saddle strategies need a node-aligned start time")
        game = ctx.game
        nodes = ctx.partition.nodes
        state = {"x": np.asarray(ctx.x0, dtype=float).copy(), "j": ctx.start_index}

        def block(j, history, own, opp, coord):
            x = state["x"]
            while state["j"] < j:
                jj = state["j"]
                u = game.controls_u[int(own[jj])]
                v = game.controls_v[int(opp[jj])]
                dt = float(nodes[jj + 1] - nodes[jj])
                x = x + dt * np.asarray(game.dynamics(float(nodes[jj]), x, u, v),
                                        dtype=float)
                state["j"] = jj + 1
            state["x"] = x
            return quantile_index(self._mixed_action(j, x), coord)

        return block


def synthesize_saddle_strategies(dpp: DppResult, tol: float = 1e-9,
                                 cache: bool = True):
    """Optimal strategy pair driven by the solved value fields."""
    return (SaddleStrategy(dpp, "max", tol=tol, cache=cache),
            SaddleStrategy(dpp, "min", tol=tol, cache=cache))


@dataclass(frozen=True)
class ResolvedPlay:
    start_index: int
    u_blocks: tuple
    v_blocks: tuple
    trajectory: Trajectory
    payoff: float


def _forward_pass(alpha_fn, beta_fn, stream, start, n, u_blocks, v_blocks,
                  history, u_view, v_view, verify_against=None):
    for j in range(start, n):
        history.limit = j
        u_view.limit = j
        v_view.limit = j
        uj = int(alpha_fn(j, history, u_view, v_view, stream.coord(j, 0)))
        vj = int(beta_fn(j, history, v_view, u_view, stream.coord(j, 1)))
        if verify_against is not None:
            exp_u, exp_v = verify_against
            if uj != exp_u[j] or vj != exp_v[j]:
                raise ContractViolationError(
                    f"strategy pair has no consistent control pair at interval {j}: "
                    f"replay gave ({uj}, {vj}), first pass ({exp_u[j]}, {exp_v[j]})"
                )
        u_blocks[j] = uj
        v_blocks[j] = vj


def resolve_play(
    alpha: NadStrategy,
    beta: NadStrategy,
    game: GameSpec,
    partition: Partition,
    stream: RandomizationStream,
    x0,
    t0: float = 0.0,
    substeps: int = 4,
    check_fixed_point: bool = True,
) -> ResolvedPlay:
    """Resolve a strategy pair into control blocks, trajectory, payoff.

    Forward pass over intervals: each block is computable because it may
    only read strictly earlier opponent blocks.  With `check_fixed_point`
    the blocks are replayed through fresh sessions against the completed
    opponent sequences and must reproduce themselves exactly.
    """
    if stream.n_intervals != partition.n_intervals:
        raise UsageError("stream does not cover the partition")
    live = intervals_from(partition, t0)
    if not live:
        raise UsageError("no intervals to play; t0 is at the horizon")
    start = live[0]
    n = partition.n_intervals
    x0 = np.asarray(x0, dtype=float).reshape(game.state_dim)
    ctx = PlayContext(game=game, partition=partition, t0=t0, x0=x0,
                      start_index=start, n_intervals=n)

    u_blocks = [-1] * n
    v_blocks = [-1] * n
    history = HistoryView(stream, 0)
    u_view = BlockView(u_blocks, start, 0)
    v_view = BlockView(v_blocks, start, 0)
    try:
        _forward_pass(alpha.session(ctx), beta.session(ctx), stream, start, n,
                      u_blocks, v_blocks, history, u_view, v_view)
    except IndexError as exc:
        raise ContractViolationError(f"strategy read outside its inputs: {exc}") from exc
    for j in range(start, n):
        if not 0 <= u_blocks[j] < game.n_controls_u:
            raise ContractViolationError(f"u block {u_blocks[j]} out of range at {j}")
        if not 0 <= v_blocks[j] < game.n_controls_v:
            raise ContractViolationError(f"v block {v_blocks[j]} out of range at {j}")

    if check_fixed_point:
        replay_u = [-1] * n
        replay_v = [-1] * n
        history2 = HistoryView(stream, 0)
        _forward_pass(alpha.session(ctx), beta.session(ctx), stream, start, n,
                      replay_u, replay_v, history2,
                      BlockView(replay_u, start, 0), BlockView(replay_v, start, 0),
                      verify_against=(u_blocks, v_blocks))

    trajectory = integrate_trajectory(
        game, t0, x0, partition,
        [u_blocks[j] for j in live], [v_blocks[j] for j in live],
        substeps=substeps,
    )
    payoff = float(np.asarray(game.terminal(trajectory.final_state), dtype=float))
    return ResolvedPlay(
        start_index=start,
        u_blocks=tuple(u_blocks[j] for j in live),
        v_blocks=tuple(v_blocks[j] for j in live),
        trajectory=trajectory,
        payoff=payoff,
    )


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    n_samples: int

    @property
    def ci_halfwidth(self) -> float:
        return 1.96 * self.stderr


def monte_carlo_payoff(
    game: GameSpec,
    t0: float,
    x0,
    alpha: NadStrategy,
    beta: NadStrategy,
    partition: Partition,
    n_samples: int,
    seed: int,
    substeps: int = 1,
) -> MonteCarloEstimate:
    """Sample mean payoff over independent randomization streams.

    Samples are keyed by index inside the generator, accumulated in index
    order, so the estimate is reproducible and independent of any worker
    scheduling.
    """
    if n_samples < 2:
        raise UsageError("need at least 2 samples")
    payoffs = np.empty(n_samples)
    for s in range(n_samples):
        stream = RandomizationStream(seed, s, partition.n_intervals)
        payoffs[s] = resolve_play(alpha, beta, game, partition, stream, x0,
                                  t0=t0, substeps=substeps).payoff
    mean = float(np.mean(payoffs))
    stderr = float(np.std(payoffs, ddof=1) / np.sqrt(n_samples))
    return MonteCarloEstimate(
        mean=mean,
        stderr=stderr,
        ci_low=mean - 1.96 * stderr,
        ci_high=mean + 1.96 * stderr,
        n_samples=n_samples,
    )


def random_deviation_strategy(n_actions: int, seed: int, index: int,
                              side_tag: int) -> NadStrategy:
    """Draw a deviation from a small family: constant block, copy the
    opponent with a random opening, or an iid random mixture."""
    from .rng import unit_uniform

    kind = unit_uniform(seed, side_tag, index, 0)
    pick = unit_uniform(seed, side_tag, index, 1)
    if kind < 1.0 / 3.0:
        return ConstantStrategy(int(pick * n_actions) % n_actions)
    if kind < 2.0 / 3.0:
        return CopyOpponentStrategy(int(pick * n_actions) % n_actions)
    weights = np.array([unit_uniform(seed, side_tag, index, 2 + a)
                        for a in range(n_actions)])
    weights = weights + 1e-9
    return MixedActionStrategy(weights / weights.sum())


@dataclass
class ExploitReport:
    reference_value: float
    advantage_vs_min: float     # best deviating maximizer against the saddle minimizer
    advantage_vs_max: float     # best deviating minimizer against the saddle maximizer
    max_stderr: float
    means_vs_min: list
    means_vs_max: list

    @property
    def worst_advantage(self) -> float:
        return max(self.advantage_vs_min, self.advantage_vs_max, 0.0)


def exploit_check(
    game: GameSpec,
    t0: float,
    x0,
    dpp: DppResult,
    partition: Partition,
    deviations: int,
    n_samples: int,
    seed: int,
    substeps: int = 1,
) -> ExploitReport:
    """Empirical saddle certificate: random deviations must not beat the
    synthesized strategies beyond scheme tolerance plus sampling noise."""
    alpha_star, beta_star = synthesize_saddle_strategies(dpp)
    start = intervals_from(partition, t0)[0]
    v_ref = interpolate(dpp.fields[start], np.asarray(x0, dtype=float))
    means_vs_min = []
    means_vs_max = []
    worst_se = 0.0
    for i in range(deviations):
        dev_alpha = random_deviation_strategy(game.n_controls_u, seed, i, 1)
        est = monte_carlo_payoff(game, t0, x0, dev_alpha, beta_star, partition,
                                 n_samples, seed + 1000 + i, substeps=substeps)
        means_vs_min.append(est.mean)
        worst_se = max(worst_se, est.stderr)
        dev_beta = random_deviation_strategy(game.n_controls_v, seed, i, 2)
        est = monte_carlo_payoff(game, t0, x0, alpha_star, dev_beta, partition,
                                 n_samples, seed + 2000 + i, substeps=substeps)
        means_vs_max.append(est.mean)
        worst_se = max(worst_se, est.stderr)
    adv_min = max((m - v_ref for m in means_vs_min), default=0.0)
    adv_max = max((v_ref - m for m in means_vs_max), default=0.0)
    return ExploitReport(
        reference_value=v_ref,
        advantage_vs_min=max(adv_min, 0.0) if means_vs_min else 0.0,
        advantage_vs_max=max(adv_max, 0.0) if means_vs_max else 0.0,
        max_stderr=worst_se,
        means_vs_min=means_vs_min,
        means_vs_max=means_vs_max,
    )
