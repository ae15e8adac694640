"""Game definitions, controlled trajectories, and regularity audits.

A game couples bounded dynamics over two finite control sets with a
terminal payoff.  The first player (rows everywhere downstream) maximizes
the terminal payoff, the second player minimizes it.  Dynamics callables
must broadcast: given a state array of shape (..., d) they return the
velocity with the same shape.

Declared regularity constants (sup norm and Lipschitz constants of the
dynamics and payoff) are carried on the spec and consumed by the solvers;
`check_regularity` audits them empirically instead of trusting them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ModelError, UsageError
from .expressions import compile_expression


@dataclass(frozen=True)
class GameSpec:
    """A two-player zero-sum differential game with finite control sets."""

    name: str
    state_dim: int
    horizon: float
    controls_u: tuple
    controls_v: tuple
    dynamics: Callable
    terminal: Callable
    declared_bound_f: float
    declared_lipschitz_f: float
    declared_lipschitz_g: float
    declared_bound_g: float
    # True when f ignores (t, x); lets solvers memoize Hamiltonian values.
    dynamics_state_independent: bool = False

    def __post_init__(self):
        if self.state_dim < 1:
            raise UsageError("state_dim must be >= 1")
        if not self.horizon > 0:
            raise UsageError("horizon must be positive")
        if len(self.controls_u) == 0 or len(self.controls_v) == 0:
            raise UsageError("control sets must be nonempty")
        for c in (self.declared_bound_f, self.declared_lipschitz_f,
                  self.declared_lipschitz_g, self.declared_bound_g):
            if not np.isfinite(c) or c < 0:
                raise UsageError("declared constants must be finite and nonnegative")

    @property
    def n_controls_u(self) -> int:
        return len(self.controls_u)

    @property
    def n_controls_v(self) -> int:
        return len(self.controls_v)


@dataclass(frozen=True)
class Partition:
    """Ordered time nodes 0 = t_0 < ... < t_n = T."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise UsageError("partition needs at least two nodes")
        if nodes[0] != 0.0:
            raise UsageError("partition must start at 0")
        if not np.all(np.diff(nodes) > 0):
            raise UsageError("partition nodes must be strictly increasing")

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])


def uniform_partition(horizon: float, n_intervals: int) -> Partition:
    if n_intervals < 1:
        raise UsageError("need at least one interval")
    return Partition(np.linspace(0.0, horizon, n_intervals + 1))


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the controlled state equation."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.times.shape[0] != self.states.shape[0]:
            raise UsageError("times and states must have equal length")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def eval_dynamics(game: GameSpec, t: float, x, u_idx: int, v_idx: int) -> np.ndarray:
    """Velocity at (t, x) under the indexed control pair."""
    if not 0 <= u_idx < game.n_controls_u:
        raise UsageError(f"u index {u_idx} out of range")
    if not 0 <= v_idx < game.n_controls_v:
        raise UsageError(f"v index {v_idx} out of range")
    x = np.asarray(x, dtype=float)
    vel = np.asarray(
        game.dynamics(t, x, game.controls_u[u_idx], game.controls_v[v_idx]), dtype=float
    )
    if not np.all(np.isfinite(vel)):
        raise ModelError(
            f"dynamics of {game.name!r} returned non-finite value at "
            f"t={t}, x={x.tolist()}, u={game.controls_u[u_idx]}, v={game.controls_v[v_idx]}"
        )
    return vel


def intervals_from(partition: Partition, t0: float):
    """Indices of partition intervals intersecting [t0, T]."""
    nodes = partition.nodes
    if t0 > nodes[-1]:
        raise UsageError("start time beyond horizon")
    return [j for j in range(partition.n_intervals) if nodes[j + 1] > t0]


def integrate_trajectory(
    game: GameSpec,
    t0: float,
    x0,
    partition: Partition,
    u_blocks: Sequence[int],
    v_blocks: Sequence[int],
    substeps: int = 4,
) -> Trajectory:
    """Integrate the state with piecewise-constant controls per interval.

    Classical fixed-step fourth-order Runge-Kutta with `substeps` equal
    sub-steps per partition interval; samples are returned at every
    sub-step boundary.  Deterministic for identical inputs.
    """
    if substeps < 1:
        raise UsageError("substeps must be >= 1")
    if t0 < 0 or t0 > partition.horizon:
        raise UsageError("t0 outside [0, T]")
    x = np.asarray(x0, dtype=float).reshape(game.state_dim).copy()
    live = intervals_from(partition, t0)
    if len(u_blocks) != len(live) or len(v_blocks) != len(live):
        raise UsageError(
            f"expected {len(live)} control blocks per player, got "
            f"{len(u_blocks)}/{len(v_blocks)}"
        )
    times = [t0]
    states = [x.copy()]
    nodes = partition.nodes
    for blk, j in enumerate(live):
        u = game.controls_u[int(u_blocks[blk])]
        v = game.controls_v[int(v_blocks[blk])]
        start = max(float(nodes[j]), t0)
        dt = (float(nodes[j + 1]) - start) / substeps
        s = start
        for _ in range(substeps):
            k1 = np.asarray(game.dynamics(s, x, u, v), dtype=float)
            k2 = np.asarray(game.dynamics(s + 0.5 * dt, x + 0.5 * dt * k1, u, v), dtype=float)
            k3 = np.asarray(game.dynamics(s + 0.5 * dt, x + 0.5 * dt * k2, u, v), dtype=float)
            k4 = np.asarray(game.dynamics(s + dt, x + dt * k3, u, v), dtype=float)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            s += dt
            times.append(s)
            states.append(x.copy())
    states = np.asarray(states)
    if not np.all(np.isfinite(states)):
        raise ModelError(f"trajectory of {game.name!r} left the finite range")
    return Trajectory(times=np.asarray(times), states=states)


@dataclass
class RegularityReport:
    """Empirical constants vs the declared ones, with a pass/fail verdict."""

    empirical_bound_f: float
    empirical_lipschitz_f: float
    empirical_lipschitz_g: float
    empirical_bound_g: float
    declared: dict
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def check_regularity(
    game: GameSpec,
    samples: int = 2000,
    seed: int = 0,
    domain=None,
    tolerance: float = 1e-6,
) -> RegularityReport:
    """Monte-Carlo audit of the declared dynamics/payoff constants.

    Samples (t, x, x') in the given box over all control pairs and
    reports maxima of |f|, of the x-difference quotients of f, and of the
    difference quotients of g.  A declared constant fails if the
    empirical maximum exceeds declared * (1 + tolerance).
    """
    if samples < 1:
        raise UsageError("samples must be >= 1")
    d = game.state_dim
    if domain is None:
        lo, hi = default_domain(game)[:2]
    else:
        lo, hi = domain
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.0, game.horizon, size=samples)
    xs = rng.uniform(lo, hi, size=(samples, d))
    ys = rng.uniform(lo, hi, size=(samples, d))

    max_f = 0.0
    max_lf = 0.0
    for u in game.controls_u:
        for v in game.controls_v:
            for s in range(samples):
                fx = np.asarray(game.dynamics(ts[s], xs[s], u, v), dtype=float)
                fy = np.asarray(game.dynamics(ts[s], ys[s], u, v), dtype=float)
                if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
                    raise ModelError(f"dynamics of {game.name!r} non-finite during audit")
                max_f = max(max_f, float(np.linalg.norm(fx)), float(np.linalg.norm(fy)))
                gap = float(np.linalg.norm(xs[s] - ys[s]))
                if gap > 1e-12:
                    max_lf = max(max_lf, float(np.linalg.norm(fx - fy)) / gap)
    gx = np.asarray(game.terminal(xs), dtype=float)
    gy = np.asarray(game.terminal(ys), dtype=float)
    seps = np.linalg.norm(xs - ys, axis=1)
    ok = seps > 1e-12
    max_lg = float(np.max(np.abs(gx[ok] - gy[ok]) / seps[ok])) if np.any(ok) else 0.0
    max_g = float(max(np.max(np.abs(gx)), np.max(np.abs(gy))))

    declared = {
        "bound_f": game.declared_bound_f,
        "lipschitz_f": game.declared_lipschitz_f,
        "lipschitz_g": game.declared_lipschitz_g,
        "bound_g": game.declared_bound_g,
    }
    empirical = {
        "bound_f": max_f,
        "lipschitz_f": max_lf,
        "lipschitz_g": max_lg,
        "bound_g": max_g,
    }
    failures = [
        key
        for key in declared
        if empirical[key] > declared[key] * (1.0 + tolerance) + 1e-12
    ]
    return RegularityReport(
        empirical_bound_f=max_f,
        empirical_lipschitz_f=max_lf,
        empirical_lipschitz_g=max_lg,
        empirical_bound_g=max_g,
        declared=declared,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# Builtin catalog

def hat_payoff(x) -> np.ndarray:
    """Tent payoff max(0, 1 - |x0|); 1-Lipschitz with sup norm 1."""
    x = np.asarray(x, dtype=float)
    return np.maximum(0.0, 1.0 - np.abs(x[..., 0]))


def _uv_dynamics(t, x, u, v):
    return np.full(np.shape(x), u * v, dtype=float)


def _separable_dynamics(t, x, u, v):
    return np.full(np.shape(x), u + v, dtype=float)


def _uv_shift_dynamics(t, x, u, v):
    return np.full(np.shape(x), u * v + 0.5 * u, dtype=float)


_BUILTINS = {
    "uv": dict(
        dynamics=_uv_dynamics,
        controls_u=(-1.0, 1.0),
        controls_v=(-1.0, 1.0),
        bound_f=1.0,
        lipschitz_f=0.0,
    ),
    "separable": dict(
        dynamics=_separable_dynamics,
        controls_u=(-1.0, 1.0),
        controls_v=(-0.5, 0.5),
        bound_f=1.5,
        lipschitz_f=0.0,
    ),
    "uv_shift": dict(
        dynamics=_uv_shift_dynamics,
        controls_u=(-1.0, 1.0),
        controls_v=(-1.0, 1.0),
        bound_f=1.5,
        lipschitz_f=0.0,
    ),
}

# Default solve box and region of interest per builtin (1-D, horizon 1).
_BUILTIN_DOMAINS = {
    "uv": ((-3.0,), (3.0,), (-2.0,), (2.0,)),
    "separable": ((-4.0,), (4.0,), (-2.0,), (2.0,)),
    "uv_shift": ((-4.0,), (4.0,), (-2.0,), (2.0,)),
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def make_builtin_game(
    name: str,
    horizon: float = 1.0,
    terminal: Callable | None = None,
    declared_lipschitz_g: float = 1.0,
    declared_bound_g: float = 1.0,
) -> GameSpec:
    """Instantiate a builtin game; terminal defaults to the tent payoff."""
    if name not in _BUILTINS:
        raise UsageError(f"unknown builtin game {name!r}; have {BUILTIN_NAMES}")
    b = _BUILTINS[name]
    return GameSpec(
        name=name,
        state_dim=1,
        horizon=horizon,
        controls_u=b["controls_u"],
        controls_v=b["controls_v"],
        dynamics=b["dynamics"],
        terminal=terminal if terminal is not None else hat_payoff,
        declared_bound_f=b["bound_f"],
        declared_lipschitz_f=b["lipschitz_f"],
        declared_lipschitz_g=declared_lipschitz_g,
        declared_bound_g=declared_bound_g,
        dynamics_state_independent=True,
    )


def default_domain(game: GameSpec):
    """(lower, upper, roi_lower, roi_upper) arrays for a game."""
    if game.name in _BUILTIN_DOMAINS:
        lo, hi, rlo, rhi = _BUILTIN_DOMAINS[game.name]
    else:
        lo = tuple(-3.0 for _ in range(game.state_dim))
        hi = tuple(3.0 for _ in range(game.state_dim))
        rlo, rhi = lo, hi
    return (np.asarray(lo), np.asarray(hi), np.asarray(rlo), np.asarray(rhi))


# ---------------------------------------------------------------------------
# Config-defined games

_GAME_KEYS = {
    "name", "state_dim", "horizon", "controls_u", "controls_v",
    "dynamics", "terminal", "bound_f", "lipschitz_f", "lipschitz_g",
    "bound_g", "domain", "region_of_interest",
}


def _control_points(raw, side: str):
    if not isinstance(raw, (list, tuple)) or len(raw) == 0:
        raise ConfigError(f"controls_{side} must be a nonempty list")
    pts = []
    for p in raw:
        if isinstance(p, (int, float)):
            pts.append(float(p))
        elif isinstance(p, (list, tuple)) and all(isinstance(q, (int, float)) for q in p):
            pts.append(tuple(float(q) for q in p))
        else:
            raise ConfigError(f"controls_{side} entries must be numbers or number lists")
    return tuple(pts)


def _bind_control(env: dict, prefix: str, point):
    if isinstance(point, tuple):
        for i, q in enumerate(point):
            env[f"{prefix}{i}"] = q
        env[prefix] = point[0]
    else:
        env[prefix] = point


def load_game_config(raw: dict) -> GameSpec:
    """Build a GameSpec from a parsed config mapping.

    Schema (all keys required unless noted): name, state_dim, horizon,
    controls_u, controls_v, dynamics (list of `state_dim` expressions over
    t, x0..x{d-1}, u[, u0..], v[, v0..]), terminal (expression over
    x0..x{d-1}), bound_f, lipschitz_f, lipschitz_g, bound_g.  Optional:
    domain, region_of_interest ([lower, upper] per-axis lists).
    """
    if not isinstance(raw, dict):
        raise ConfigError("game definition must be a mapping")
    unknown = set(raw) - _GAME_KEYS
    if unknown:
        raise ConfigError(f"unknown game config keys: {sorted(unknown)}")
    missing = {"name", "state_dim", "horizon", "controls_u", "controls_v",
               "dynamics", "terminal", "bound_f", "lipschitz_f",
               "lipschitz_g", "bound_g"} - set(raw)
    if missing:
        raise ConfigError(f"game config missing keys: {sorted(missing)}")

    d = int(raw["state_dim"])
    controls_u = _control_points(raw["controls_u"], "u")
    controls_v = _control_points(raw["controls_v"], "v")

    var_names = ["t"] + [f"x{i}" for i in range(d)]
    var_names += ["u"] + [f"u{i}" for i in range(8)]
    var_names += ["v"] + [f"v{i}" for i in range(8)]
    dyn_src = raw["dynamics"]
    if isinstance(dyn_src, str):
        dyn_src = [dyn_src]
    if len(dyn_src) != d:
        raise ConfigError(f"dynamics needs {d} expressions, got {len(dyn_src)}")
    dyn_exprs = [compile_expression(src, var_names) for src in dyn_src]
    term_expr = compile_expression(raw["terminal"], [f"x{i}" for i in range(d)])

    def dynamics(t, x, u, v):
        x = np.asarray(x, dtype=float)
        env = {"t": t}
        for i in range(d):
            env[f"x{i}"] = x[..., i]
        _bind_control(env, "u", u)
        _bind_control(env, "v", v)
        comps = [np.broadcast_to(np.asarray(e(env), dtype=float), x[..., 0].shape)
                 for e in dyn_exprs]
        return np.stack(comps, axis=-1)

    def terminal(x):
        x = np.asarray(x, dtype=float)
        env = {f"x{i}": x[..., i] for i in range(d)}
        return np.asarray(term_expr(env), dtype=float)

    return GameSpec(
        name=str(raw["name"]),
        state_dim=d,
        horizon=float(raw["horizon"]),
        controls_u=controls_u,
        controls_v=controls_v,
        dynamics=dynamics,
        terminal=terminal,
        declared_bound_f=float(raw["bound_f"]),
        declared_lipschitz_f=float(raw["lipschitz_f"]),
        declared_lipschitz_g=float(raw["lipschitz_g"]),
        declared_bound_g=float(raw["bound_g"]),
    )
