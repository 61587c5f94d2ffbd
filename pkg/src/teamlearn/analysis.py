"""Whole-game classification by exhaustive enumeration of joint policies.

The central object is the multi-DM strict best reply successor graph: an edge
``pi -> pi'`` exists when every player that changes its policy moves to a best
reply that strictly improves its own value in at least one state.  Equilibria,
weak acyclicity and the (aspiration-filtered) minimal closed sets are all read
off that graph.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .game import Game
from .oracle import best_reply_table, joint_values, tilde_scores

VALUE_TOL = 1e-9


@dataclass
class PolicySetReport:
    team_optimal: frozenset
    equilibria: frozenset
    common_interest: bool
    weakly_acyclic: bool
    max_path_length: int | None  # L: longest shortest path into the equilibria
    max_path_length_cumber: int  # L-bar: same, into the union of minimal cumber sets
    witness_paths: dict = field(default_factory=dict)
    minimal_cumber_sets: list = field(default_factory=list)


@dataclass
class CumberReport:
    minimal_cumber_sets: list
    minimal_lambda_cumber_sets: list
    lam: np.ndarray | None = None


def team_optimal_set(game: Game) -> frozenset:
    """Joint policies minimizing every player's value in every state at once."""
    values = joint_values(game)  # (P, N, X)
    best = values.min(axis=0)
    ok = np.all(values <= best + VALUE_TOL, axis=(1, 2))
    return frozenset(int(k) for k in np.flatnonzero(ok))


def _is_best_reply(game: Game, index: int) -> np.ndarray:
    """Per-player flags: own component is a best reply to the others."""
    ranks = game.joint_ranks(index)
    return np.array([best_reply_table(game, i)[game.opponent_index(i, ranks), ranks[i]]
                     for i in range(game.n_players)])


def equilibrium_set_deterministic(game: Game) -> frozenset:
    """Deterministic Markov perfect equilibria."""
    if "equilibria" not in game._cache:
        game._cache["equilibria"] = frozenset(
            k for k in range(game.n_joint_policies) if _is_best_reply(game, k).all())
    return game._cache["equilibria"]


def is_common_interest(game: Game) -> bool:
    opt = team_optimal_set(game)
    if not opt:
        return False
    s = tilde_scores(game)  # (P, N)
    best = s[sorted(opt)].min(axis=0)
    rest = [k for k in range(game.n_joint_policies) if k not in opt]
    return bool(np.all(best < s[rest] - VALUE_TOL)) if rest else True


def strict_best_replies(game: Game, index: int, player: int) -> list:
    """Ranks of ``player``'s strict best replies with respect to joint policy ``index``."""
    values = joint_values(game)
    ranks = list(game.joint_ranks(index))
    cur = values[index, player]
    br = best_reply_table(game, player)[game.opponent_index(player, ranks)]
    out = []
    for r in np.flatnonzero(br):
        if r == ranks[player]:
            continue
        alt = list(ranks)
        alt[player] = int(r)
        if np.any(values[game.joint_index(alt), player] < cur - VALUE_TOL):
            out.append(int(r))
    return out


def strict_best_reply_successors(game: Game, index: int, lam=None) -> set:
    """Multi-DM strict best reply successors of a joint policy, itself included.

    With aspiration levels ``lam`` a player may deviate only while its summed
    value ``S~^i(pi)`` strictly exceeds ``lam[i]``.
    """
    ranks = game.joint_ranks(index)
    scores = tilde_scores(game)[index]
    options = []
    for i in range(game.n_players):
        opts = [ranks[i]]
        if lam is None or scores[i] > lam[i] + VALUE_TOL:
            opts += strict_best_replies(game, index, i)
        options.append(opts)
    return {game.joint_index(combo) for combo in itertools.product(*options)}


def successor_graph(game: Game, lam=None) -> list:
    """Adjacency lists of the strict best reply graph (self loops removed)."""
    key = ("successors", None if lam is None else tuple(float(v) for v in lam))
    if key not in game._cache:
        game._cache[key] = [sorted(strict_best_reply_successors(game, k, lam) - {k})
                            for k in range(game.n_joint_policies)]
    return game._cache[key]


def _shortest_paths_to(adj: list, targets) -> tuple:
    """Reverse BFS: (distance array, next-hop array) toward ``targets``; -1 if unreachable."""
    n = len(adj)
    rev = [[] for _ in range(n)]
    for u, vs in enumerate(adj):
        for v in vs:
            rev[v].append(u)
    dist = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    queue = deque()
    for t in targets:
        dist[t] = 0
        queue.append(t)
    while queue:
        v = queue.popleft()
        for u in rev[v]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                nxt[u] = v
                queue.append(u)
    return dist, nxt


def _path(start: int, nxt: np.ndarray, dist: np.ndarray) -> list:
    if dist[start] < 0:
        return []
    path = [start]
    while dist[path[-1]] > 0:
        path.append(int(nxt[path[-1]]))
    return path


def _sink_components(adj: list) -> list:
    """Strongly connected components with no edge leaving them."""
    n = len(adj)
    rows = [u for u, vs in enumerate(adj) for _ in vs]
    cols = [v for vs in adj for v in vs]
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="strong")
    leaves = set(labels.tolist())
    for u, vs in enumerate(adj):
        for v in vs:
            if labels[u] != labels[v]:
                leaves.discard(labels[u])
    comps = [frozenset(int(k) for k in np.flatnonzero(labels == c)) for c in leaves]
    return sorted(comps, key=min)


def minimal_cumber_sets(game: Game) -> list:
    """Minimal sets closed under multi-DM strict best replies."""
    return _sink_components(successor_graph(game))


def minimal_lambda_cumber_sets(game: Game, lam) -> list:
    lam = np.asarray(lam, dtype=float)
    return _sink_components(successor_graph(game, lam))


def cumber_report(game: Game, lam=None) -> CumberReport:
    plain = minimal_cumber_sets(game)
    if lam is None:
        return CumberReport(plain, plain, None)
    return CumberReport(plain, minimal_lambda_cumber_sets(game, lam), np.asarray(lam, float))


def is_weakly_acyclic(game: Game) -> tuple:
    """``(weakly_acyclic, L, L_bar, witness_paths)``.

    ``L`` is the longest minimal strict-best-reply path into the equilibria
    (``None`` when some policy cannot reach one); ``L_bar`` is the same into
    the union of minimal cumber sets.  ``witness_paths`` maps each policy to
    one shortest path into the equilibria (empty when none exists).
    """
    adj = successor_graph(game)
    eq = equilibrium_set_deterministic(game)
    dist, nxt = _shortest_paths_to(adj, eq)
    acyclic = bool(eq) and bool(np.all(dist >= 0))
    big_l = int(dist.max()) if acyclic else None
    cumber = set().union(*minimal_cumber_sets(game))
    dist_c, _ = _shortest_paths_to(adj, cumber)
    paths = {k: _path(k, nxt, dist) for k in range(game.n_joint_policies)}
    return acyclic, big_l, int(dist_c.max()), paths


def analyze(game: Game) -> PolicySetReport:
    acyclic, big_l, l_bar, paths = is_weakly_acyclic(game)
    return PolicySetReport(
        team_optimal=team_optimal_set(game),
        equilibria=equilibrium_set_deterministic(game),
        common_interest=is_common_interest(game),
        weakly_acyclic=acyclic,
        max_path_length=big_l,
        max_path_length_cumber=l_bar,
        witness_paths=paths,
        minimal_cumber_sets=minimal_cumber_sets(game),
    )
