"""Exact single-agent computations on a game with the other players frozen.

Everything here is model-based: induced MDPs, optimal Q-factors, policy values
by direct linear solve, best-reply sets and the two separation constants
(minimum Q-factor gap and half the minimum score gap) the learners' tolerances
are tuned against.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .game import Game, GameError, RandomizedPolicy

log = logging.getLogger(__name__)

GAP_THRESHOLD = 1e-9
MAX_VI_ITER = 10 ** 6
ENUMERATION_GUARD = 65536


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MDP:
    """Single-agent MDP: ``cost[x, u]`` and ``kernel[x, u, x']``."""
    cost: np.ndarray
    kernel: np.ndarray

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    @property
    def n_actions(self) -> int:
        return self.cost.shape[1]


@dataclass(frozen=True, eq=False)
class QTable:
    player: int
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class GameConstants:
    """Game-dependent separation constants.

    ``scores[pi, i]`` is ``S^i(pi)``, the sum over states of player i's optimal
    Q-factor against ``pi^{-i}`` evaluated at its own component ``pi^i``.
    An infinite ``delta_bar`` / ``d_bar`` marks a degenerate game with no
    positive gap; ``warnings`` then says which.
    """
    delta_bar: float
    d_bar: float
    scores: np.ndarray
    warnings: tuple = field(default=())

    @property
    def degenerate(self) -> bool:
        return bool(self.warnings)


# -- induced MDPs ---------------------------------------------------------------

def _dist(game: Game, j: int, pol) -> np.ndarray:
    """Player j's policy as a (X, |U^j|) probability array."""
    if isinstance(pol, RandomizedPolicy):
        d = pol.dist_of_state
    elif hasattr(pol, "action_of_state"):
        d = np.eye(game.n_actions[j])[np.asarray(pol.action_of_state)]
    else:
        arr = np.asarray(pol)
        d = np.eye(game.n_actions[j])[arr] if arr.ndim == 1 else np.asarray(arr, float)
    if d.shape != (game.n_states, game.n_actions[j]):
        raise GameError(f"policy for player {j} has shape {d.shape}, "
                        f"expected {(game.n_states, game.n_actions[j])}")
    return d


def _as_dists(game: Game, player: int, others) -> list:
    """Opponents' policies as probability arrays indexed by player (None for ``player``)."""
    opps = [j for j in range(game.n_players) if j != player]
    others = list(others)
    if len(others) != len(opps):
        raise GameError(f"expected {len(opps)} opponent policies, got {len(others)}")
    dists = [None] * game.n_players
    for j, pol in zip(opps, others):
        dists[j] = _dist(game, j, pol)
    return dists


def induced_mdp(game: Game, player: int, others) -> MDP:
    """MDP faced by ``player`` when the others follow the given stationary policies.

    ``others`` holds one policy per opponent, in player order, each either a
    :class:`RandomizedPolicy`, a :class:`DeterministicPolicy`, an action array
    of length X or a probability array of shape (X, |U^j|).
    """
    dists = _as_dists(game, player, others)
    tab = game.joint_action_table  # (J, N)
    n_u = game.n_actions[player]
    cost = np.zeros((game.n_states, n_u))
    kernel = np.zeros((game.n_states, n_u, game.n_states))
    for x in range(game.n_states):
        w = np.ones(game.n_joint_actions)
        for j, d in enumerate(dists):
            if d is not None:
                w = w * d[x, tab[:, j]]
        for u in range(n_u):
            sel = tab[:, player] == u
            cost[x, u] = w[sel] @ game.cost[player, x, sel]
            kernel[x, u] = w[sel] @ game.kernel[x, sel]
    return MDP(cost, kernel)


# -- Q-factors ------------------------------------------------------------------

def _bellman(cost, kernel, discount, q):
    return cost + discount * np.einsum("...xuy,...y->...xu", kernel, q.min(axis=-1))


def _value_iteration(cost, kernel, discount, tol, max_iter=MAX_VI_ITER):
    """Batched Q value iteration; leading axes of cost/kernel are batch axes."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    stop = tol * (1 - discount) / (2 * discount)
    q = np.zeros_like(cost)
    for _ in range(max_iter):
        q_new = _bellman(cost, kernel, discount, q)
        diff = np.max(np.abs(q_new - q)) if q.size else 0.0
        q = q_new
        if diff < stop:
            return q
    raise OracleError(f"value iteration did not reach tol={tol} in {max_iter} iterations")


def value_iteration_q(mdp: MDP, discount: float, tol: float = 1e-10) -> np.ndarray:
    """Optimal Q-factors of ``mdp`` with ``||Q - Q*||_inf < tol``.

    Iterates the Bellman operator from zero until successive iterates differ by
    less than ``tol * (1 - beta) / (2 * beta)`` in sup norm.
    """
    return _value_iteration(mdp.cost, mdp.kernel, discount, tol)


def _evaluate_greedy(cost, kernel, discount, actions):
    """Exact value of the deterministic policies ``actions`` (batched)."""
    n = cost.shape[-2]
    c = np.take_along_axis(cost, actions[..., None], axis=-1)[..., 0]
    p = np.take_along_axis(kernel, actions[..., None, None], axis=-2)[..., 0, :]
    return np.linalg.solve(np.eye(n) - discount * p, c[..., None])[..., 0]


def exact_q(cost, kernel, discount, max_rounds=100):
    """Optimal Q-factors to machine precision: value iteration then policy iteration.

    Accepts batched ``cost`` (..., X, U) and ``kernel`` (..., X, U, X).
    """
    q = _value_iteration(cost, kernel, discount, 1e-8)
    greedy = q.argmin(axis=-1)
    for _ in range(max_rounds):
        v = _evaluate_greedy(cost, kernel, discount, greedy)
        q = cost + discount * np.einsum("...xuy,...y->...xu", kernel, v)
        cur = np.take_along_axis(q, greedy[..., None], axis=-1)[..., 0]
        best = q.min(axis=-1)
        if np.all(cur - best <= 1e-12 * (1 + np.abs(best))):
            return q
        improve = cur - best > 1e-12 * (1 + np.abs(best))
        greedy = np.where(improve, q.argmin(axis=-1), greedy)
    raise OracleError("policy iteration did not stabilise")


def policy_value(game: Game, joint, player: int) -> np.ndarray:
    """``J^i_x`` for every state under a joint stationary policy, by direct solve.

    ``joint`` holds one policy per player (any form accepted by
    :func:`induced_mdp`).
    """
    joint = list(joint)
    if len(joint) != game.n_players:
        raise GameError(f"expected {game.n_players} policies, got {len(joint)}")
    dists = [_dist(game, j, pol) for j, pol in enumerate(joint)]
    tab = game.joint_action_table
    c = np.zeros(game.n_states)
    p = np.zeros((game.n_states, game.n_states))
    for x in range(game.n_states):
        w = np.ones(game.n_joint_actions)
        for j, d in enumerate(dists):
            w = w * d[x, tab[:, j]]
        c[x] = w @ game.cost[player, x]
        p[x] = w @ game.kernel[x]
    beta = game.discount[player]
    return np.linalg.solve(np.eye(game.n_states) - beta * p, c)


# -- cached whole-game tables -------------------------------------------------------

def _guard(game: Game):
    if game.n_joint_policies > ENUMERATION_GUARD:
        raise OracleError(f"|Pi| = {game.n_joint_policies} exceeds enumeration guard "
                          f"{ENUMERATION_GUARD}")


def _opponent_actions(game: Game, player: int) -> np.ndarray:
    """Action tables of every deterministic opponent profile, shape (M, N, X).

    The row of ``player`` itself is filled with zeros.
    """
    counts = game.opponent_counts(player)
    m = int(np.prod(counts)) if counts else 1
    out = np.zeros((m, game.n_players, game.n_states), dtype=np.int64)
    opps = [j for j in range(game.n_players) if j != player]
    for k in range(m):
        sub = np.unravel_index(k, counts) if counts else ()
        for j, r in zip(opps, sub):
            out[k, j] = game.policy_table(j)[r]
    return out


def _induced_batch(game: Game, player: int):
    """Induced (cost, kernel) for every deterministic opponent profile."""
    opp = _opponent_actions(game, player)  # (M, N, X)
    strides = game.action_strides
    n_u = game.n_actions[player]
    base = np.einsum("mnx,n->mx", opp, strides)  # opponents' part of the joint action
    joint = base[:, :, None] + np.arange(n_u)[None, None, :] * strides[player]  # (M, X, U)
    xs = np.arange(game.n_states)[None, :, None]
    cost = game.cost[player][xs, joint]
    kernel = game.kernel[xs, joint]
    return cost, kernel


def optimal_q_table(game: Game, player: int) -> np.ndarray:
    """Exact ``Q*`` against every deterministic opponent profile, shape (M, X, |U^i|)."""
    key = ("qstar", player)
    if key not in game._cache:
        _guard(game)
        cost, kernel = _induced_batch(game, player)
        q = exact_q(cost, kernel, game.discount[player])
        q.setflags(write=False)
        game._cache[key] = q
    return game._cache[key]


def joint_values(game: Game) -> np.ndarray:
    """Exact ``J^i_x(pi)`` for every joint deterministic policy, shape (|Pi|, N, X)."""
    if "joint_values" not in game._cache:
        _guard(game)
        n_pi = game.n_joint_policies
        acts = np.stack([game.joint_policy_actions(k) for k in range(n_pi)])  # (P, N, X)
        joint = np.einsum("pnx,n->px", acts, game.action_strides)
        xs = np.arange(game.n_states)[None, :]
        p = game.kernel[xs, joint]  # (P, X, X)
        eye = np.eye(game.n_states)
        out = np.empty((n_pi, game.n_players, game.n_states))
        for i in range(game.n_players):
            c = game.cost[i][xs, joint]
            out[:, i] = np.linalg.solve(eye - game.discount[i] * p, c[..., None])[..., 0]
        out.setflags(write=False)
        game._cache["joint_values"] = out
    return game._cache["joint_values"]


def tilde_scores(game: Game) -> np.ndarray:
    """``S~^i(pi) = sum_x J^i_x(pi)`` for all joint policies, shape (|Pi|, N)."""
    return joint_values(game).sum(axis=2)


def _min_positive_gap(values: np.ndarray) -> float:
    """Smallest pairwise |difference| above GAP_THRESHOLD along the last axis."""
    v = np.sort(values, axis=-1)
    d = np.diff(v, axis=-1)
    d = d[d > GAP_THRESHOLD]
    return float(d.min()) if d.size else math.inf


def game_constants(game: Game) -> GameConstants:
    """Exhaustive scan for the minimum Q-factor gap and half the minimum score gap."""
    if "constants" in game._cache:
        return game._cache["constants"]
    _guard(game)
    n_pi = game.n_joint_policies
    scores = np.empty((n_pi, game.n_players))
    delta = math.inf
    for i in range(game.n_players):
        q = optimal_q_table(game, i)
        delta = min(delta, _min_positive_gap(q))
        table = game.policy_table(i)
        xs = np.arange(game.n_states)
        # S^i for every (opponent profile, own policy)
        s_by = q[:, xs, table].sum(axis=-1)  # (M, |Pi^i|)
        for k in range(n_pi):
            ranks = game.joint_ranks(k)
            scores[k, i] = s_by[game.opponent_index(i, ranks), ranks[i]]
    d_bar = 0.5 * min(_min_positive_gap(scores[:, i]) for i in range(game.n_players))
    warnings = []
    if math.isinf(delta):
        warnings.append("degenerate: all Q-factors equal")
    if math.isinf(d_bar):
        warnings.append("degenerate: all scores equal")
    for w in warnings:
        log.warning(w)
    scores.setflags(write=False)
    const = GameConstants(delta, d_bar, scores, tuple(warnings))
    game._cache["constants"] = const
    return const


def cost_score(game: Game, player: int, joint_index: int) -> float:
    """``S^i(pi)``: oracle Q-factors against ``pi^{-i}`` summed at ``pi^i``."""
    return float(game_constants(game).scores[joint_index, player])


def tilde_score(game: Game, player: int, joint_index: int) -> float:
    """``S~^i(pi)``: player's exact values under ``pi`` summed over states."""
    return float(tilde_scores(game)[joint_index, player])


# -- best replies ------------------------------------------------------------------

def br_tolerances(game: Game) -> tuple:
    """(comparison tolerance, value-iteration tol) used for best-reply sets."""
    delta = game_constants(game).delta_bar
    return delta / 4, min(1e-10, delta / 8)


def _br_mask(game: Game, q: np.ndarray, player: int, tol: float) -> np.ndarray:
    table = game.policy_table(player)
    xs = np.arange(game.n_states)
    ok = q <= q.min(axis=-1, keepdims=True) + tol  # (..., X, U)
    return ok[..., xs, table].all(axis=-1)  # (..., |Pi^i|)


def best_reply_table(game: Game, player: int) -> np.ndarray:
    """Boolean array (M, |Pi^i|): own policy is a best reply to opponent profile m."""
    key = ("br", player)
    if key not in game._cache:
        cmp_tol, vi_tol = br_tolerances(game)
        cost, kernel = _induced_batch(game, player)
        q = _value_iteration(cost, kernel, game.discount[player], vi_tol)
        mask = _br_mask(game, q, player, cmp_tol)
        mask.setflags(write=False)
        game._cache[key] = mask
    return game._cache[key]


def best_reply_set(game: Game, player: int, others) -> set:
    """Deterministic best replies of ``player`` to deterministic opponents.

    Returns the set of policy ranks (indices into
    :func:`~teamlearn.game.enumerate_policies`).
    """
    cmp_tol, vi_tol = br_tolerances(game)
    q = value_iteration_q(induced_mdp(game, player, others), game.discount[player], vi_tol)
    mask = _br_mask(game, q, player, cmp_tol)
    return {int(k) for k in np.flatnonzero(mask)}
