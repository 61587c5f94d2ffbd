"""Finite discounted stochastic games and their deterministic policy spaces.

Conventions used throughout the package:

* all indices are 0-based internally; the JSON file format and all
  human-facing policy strings use 1-based labels;
* a joint action ``(u_0, ..., u_{N-1})`` is flattened with player 0 as the
  fastest-varying digit, ``a = u_0 + |U_0| * (u_1 + |U_1| * (...))``;
* a deterministic policy of one player is a tuple of actions, one per state,
  and policies are ranked lexicographically with state 0 most significant;
* a joint deterministic policy is ranked lexicographically over the tuple of
  per-player ranks, player 0 most significant.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KERNEL_TOL = 1e-9


class GameError(ValueError):
    """Raised when a game description violates the model's invariants."""


@dataclass(frozen=True, eq=False)
class Game:
    """A finite discounted stochastic game.

    Parameters
    ----------
    n_actions : tuple of int
        Number of actions of each player.
    cost : ndarray, shape (N, X, J)
        Stage cost of each player for every state and flattened joint action.
    kernel : ndarray, shape (X, J, X)
        Transition probabilities ``P(x' | x, a)``.
    discount : ndarray, shape (N,)
        Per-player discount factors, each strictly inside (0, 1).
    labels : dict, optional
        Display labels, ``{"states": [...], "actions": [[...], ...]}``.
    """

    n_actions: tuple
    cost: np.ndarray
    kernel: np.ndarray
    discount: np.ndarray
    labels: dict | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n_actions = tuple(int(a) for a in self.n_actions)
        cost = np.array(self.cost, dtype=float)
        kernel = np.array(self.kernel, dtype=float)
        discount = np.atleast_1d(np.array(self.discount, dtype=float))
        object.__setattr__(self, "n_actions", n_actions)
        _validate(n_actions, cost, kernel, discount)
        for arr in (cost, kernel, discount):
            arr.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "discount", discount)

    @property
    def n_players(self) -> int:
        return len(self.n_actions)

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_joint_actions(self) -> int:
        return int(np.prod(self.n_actions))

    @property
    def policy_counts(self) -> tuple:
        """``|Pi^i| = |U^i| ** |X|`` for every player."""
        return tuple(a ** self.n_states for a in self.n_actions)

    @property
    def n_joint_policies(self) -> int:
        return int(np.prod(self.policy_counts, dtype=object))

    @property
    def action_strides(self) -> np.ndarray:
        strides = np.ones(self.n_players, dtype=np.int64)
        for i in range(1, self.n_players):
            strides[i] = strides[i - 1] * self.n_actions[i - 1]
        return strides

    def joint_action(self, actions) -> int:
        """Flatten per-player actions into a joint-action index."""
        return int(np.dot(np.asarray(actions, dtype=np.int64), self.action_strides))

    def split_joint_action(self, a: int) -> tuple:
        out = []
        for n in self.n_actions:
            out.append(a % n)
            a //= n
        return tuple(out)

    @property
    def joint_action_table(self) -> np.ndarray:
        """Array of shape (J, N): per-player action of every joint action."""
        if "joint_action_table" not in self._cache:
            tab = np.array([self.split_joint_action(a) for a in range(self.n_joint_actions)],
                           dtype=np.int64).reshape(self.n_joint_actions, self.n_players)
            tab.setflags(write=False)
            self._cache["joint_action_table"] = tab
        return self._cache["joint_action_table"]

    @property
    def c_max(self) -> np.ndarray:
        """Per-player ``max |c^i|``."""
        return np.abs(self.cost).reshape(self.n_players, -1).max(axis=1)

    def is_team(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.cost - self.cost[0]) <= tol)
                    and np.all(self.discount == self.discount[0]))

    def equals(self, other: "Game") -> bool:
        """Field-by-field equality (arrays compared exactly)."""
        return (self.n_actions == other.n_actions
                and np.array_equal(self.cost, other.cost)
                and np.array_equal(self.kernel, other.kernel)
                and np.array_equal(self.discount, other.discount)
                and (self.labels or None) == (other.labels or None))

    # -- policy helpers --------------------------------------------------
    def policy_table(self, player: int) -> np.ndarray:
        """All deterministic policies of ``player`` in canonical order, shape (|Pi^i|, X)."""
        key = ("policy_table", player)
        if key not in self._cache:
            n = self.n_actions[player]
            tab = np.array(list(itertools.product(range(n), repeat=self.n_states)),
                           dtype=np.int64).reshape(-1, self.n_states)
            tab.setflags(write=False)
            self._cache[key] = tab
        return self._cache[key]

    def policy_rank(self, player: int, actions) -> int:
        actions = np.asarray(actions, dtype=np.int64)
        n = self.n_actions[player]
        if actions.shape != (self.n_states,) or np.any(actions < 0) or np.any(actions >= n):
            raise GameError(f"invalid policy {actions.tolist()} for player {player}")
        return int(np.ravel_multi_index(tuple(actions), (n,) * self.n_states))

    def joint_index(self, ranks) -> int:
        return int(np.ravel_multi_index(tuple(int(r) for r in ranks), self.policy_counts))

    def joint_ranks(self, index: int) -> tuple:
        return tuple(int(r) for r in np.unravel_index(int(index), self.policy_counts))

    def joint_policy_actions(self, index: int) -> np.ndarray:
        """Per-player action tables of a joint policy, shape (N, X)."""
        ranks = self.joint_ranks(index)
        return np.stack([self.policy_table(i)[r] for i, r in enumerate(ranks)])

    def opponent_counts(self, player: int) -> tuple:
        return tuple(c for j, c in enumerate(self.policy_counts) if j != player)

    def opponent_index(self, player: int, ranks) -> int:
        """Rank of the opponents' sub-profile of a joint rank tuple."""
        sub = [int(r) for j, r in enumerate(ranks) if j != player]
        if not sub:
            return 0
        return int(np.ravel_multi_index(tuple(sub), self.opponent_counts(player)))

    def format_policy(self, player: int, actions) -> str:
        """Comma-separated 1-based action labels, one per state."""
        return ",".join(str(int(a) + 1) for a in actions)

    def format_joint(self, index: int) -> str:
        acts = self.joint_policy_actions(index)
        if self.n_states == 1:
            return "(" + ",".join(str(int(a[0]) + 1) for a in acts) + ")"
        return "(" + ";".join(self.format_policy(i, a) for i, a in enumerate(acts)) + ")"


def _validate(n_actions, cost, kernel, discount):
    if len(n_actions) < 1 or any(a < 1 for a in n_actions):
        raise GameError(f"actions must be positive integers, got {list(n_actions)}")
    n_players = len(n_actions)
    n_joint = int(np.prod(n_actions))
    if kernel.ndim != 3 or kernel.shape[0] < 1 or kernel.shape[0] != kernel.shape[2]:
        raise GameError(f"kernel must have shape (X, J, X), got {kernel.shape}")
    n_states = kernel.shape[0]
    if kernel.shape[1] != n_joint:
        raise GameError(f"kernel has {kernel.shape[1]} joint actions, expected {n_joint}")
    if cost.shape != (n_players, n_states, n_joint):
        raise GameError(f"costs must have shape {(n_players, n_states, n_joint)}, got {cost.shape}")
    if discount.shape != (n_players,):
        raise GameError(f"expected {n_players} discounts, got {discount.shape[0]}")
    bad = np.argwhere(~np.isfinite(cost))
    if bad.size:
        i, x, a = bad[0]
        raise GameError(f"costs[{i}][{x}][{a}] is not finite")
    for i, b in enumerate(discount):
        if not 0.0 < b < 1.0:
            raise GameError(f"discounts[{i}] = {b} outside (0, 1)")
    neg = np.argwhere(kernel < 0)
    if neg.size:
        x, a, y = neg[0]
        raise GameError(f"kernel[{x}][{a}][{y}] = {kernel[x, a, y]} is negative")
    sums = kernel.sum(axis=2)
    off = np.argwhere(np.abs(sums - 1.0) > KERNEL_TOL)
    if off.size:
        x, a = off[0]
        raise GameError(f"kernel[{x}][{a}] sums to {sums[x, a]!r}, expected 1")


# -- policies ---------------------------------------------------------------

@dataclass(frozen=True)
class DeterministicPolicy:
    player: int
    action_of_state: tuple

    def rank(self, game: Game) -> int:
        return game.policy_rank(self.player, self.action_of_state)


@dataclass(frozen=True, eq=False)
class RandomizedPolicy:
    player: int
    dist_of_state: np.ndarray

    def __post_init__(self):
        dist = np.array(self.dist_of_state, dtype=float)
        if dist.ndim != 2 or np.any(dist < 0) or np.any(np.abs(dist.sum(axis=1) - 1) > KERNEL_TOL):
            raise GameError(f"randomized policy of player {self.player} has invalid rows")
        dist.setflags(write=False)
        object.__setattr__(self, "dist_of_state", dist)

    @classmethod
    def from_deterministic(cls, policy: DeterministicPolicy, n_actions: int) -> "RandomizedPolicy":
        acts = np.asarray(policy.action_of_state)
        return cls(policy.player, np.eye(n_actions)[acts])


@dataclass(frozen=True)
class JointPolicy:
    policies: tuple
    index: int

    @classmethod
    def from_index(cls, game: Game, index: int) -> "JointPolicy":
        acts = game.joint_policy_actions(index)
        return cls(tuple(DeterministicPolicy(i, tuple(int(a) for a in row))
                         for i, row in enumerate(acts)), int(index))

    @classmethod
    def from_policies(cls, game: Game, policies) -> "JointPolicy":
        policies = tuple(policies)
        ranks = [p.rank(game) for p in policies]
        return cls(policies, game.joint_index(ranks))


def enumerate_policies(game: Game, player: int) -> list:
    """All deterministic policies of ``player`` in canonical lexicographic order."""
    return [DeterministicPolicy(player, tuple(int(a) for a in row))
            for row in game.policy_table(player)]


def parse_policy(text: str, game: Game, player: int) -> np.ndarray:
    """Parse a 1-based comma-separated policy string into an action array."""
    try:
        acts = np.array([int(s) - 1 for s in text.split(",")], dtype=np.int64)
    except ValueError as exc:
        raise GameError(f"cannot parse policy string {text!r}") from exc
    game.policy_rank(player, acts)
    return acts


# -- serialization ------------------------------------------------------------

_REQUIRED = ("players", "states", "actions", "discounts", "costs", "kernel")


def game_from_dict(doc: dict) -> Game:
    if not isinstance(doc, dict):
        raise GameError("game document must be a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise GameError(f"game document missing fields: {', '.join(missing)}")
    n_players, n_states = doc["players"], doc["states"]
    if not isinstance(n_players, int) or n_players < 1:
        raise GameError(f"players must be a positive integer, got {n_players!r}")
    if not isinstance(n_states, int) or n_states < 1:
        raise GameError(f"states must be a positive integer, got {n_states!r}")
    actions = doc["actions"]
    if not isinstance(actions, list) or len(actions) != n_players:
        raise GameError(f"actions must list {n_players} integers")
    try:
        cost = np.array(doc["costs"], dtype=float)
        kernel = np.array(doc["kernel"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise GameError(f"costs/kernel must be rectangular numeric arrays: {exc}") from exc
    if kernel.ndim == 3 and kernel.shape[0] != n_states:
        raise GameError(f"kernel has {kernel.shape[0]} states, document declares {n_states}")
    return Game(tuple(actions), cost, kernel, np.array(doc["discounts"], dtype=float),
                labels=doc.get("labels"))


def game_to_dict(game: Game) -> dict:
    doc = {
        "players": game.n_players,
        "states": game.n_states,
        "actions": list(game.n_actions),
        "discounts": game.discount.tolist(),
        "costs": game.cost.tolist(),
        "kernel": game.kernel.tolist(),
    }
    if game.labels:
        doc["labels"] = game.labels
    return doc


def loads_game(document: str) -> Game:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GameError(f"invalid JSON: {exc}") from exc
    return game_from_dict(doc)


def dumps_game(game: Game) -> str:
    return json.dumps(game_to_dict(game), indent=1)


def load_game(source) -> Game:
    """Load a game from a JSON string, a path, or an already-parsed dict."""
    if isinstance(source, dict):
        return game_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        return loads_game(Path(source).read_text())
    return loads_game(source)


# -- built-in example games

def _repeated_game(stage, discounts):
    """Two-player repeated game from a (rows, cols, 2) table of (c1, c2)."""
    stage = np.asarray(stage, dtype=float)
    n1, n2 = stage.shape[:2]
    cost = np.zeros((2, 1, n1 * n2))
    for u1 in range(n1):
        for u2 in range(n2):
            cost[:, 0, u1 + n1 * u2] = stage[u1, u2]
    return Game((n1, n2), cost, np.ones((1, n1 * n2, 1)), discounts)


def fig1_game(a: float = 1.0, b: float = 1.0, beta1: float = 0.8, beta2: float = 0.8) -> Game:
    """Two-action coordination game with a good and a bad equilibrium."""
    if a <= 0 or b <= 0:
        raise GameError("fig1 requires a, b > 0")
    stage = [[(a, b), (a + 1, b + 1)],
             [(a + 1, b + 1), (-a, -b)]]
    return _repeated_game(stage, [beta1, beta2])


def fig2_game(beta: float = 0.9) -> Game:
    stage = [[(10, 3), (5, 7), (20, 20)],
             [(5, 7), (10, 3), (20, 20)],
             [(20, 20), (20, 20), (0, 0)]]
    return _repeated_game(stage, [beta, beta])


def fig3_game(beta: float = 0.8) -> Game:
    """Two-state team whose optimum coordinates on ``u1 = u2 = x``."""
    stage = np.array([[[1, 3], [3, 1]],
                      [[10, 10], [10, 13]]], dtype=float)  # [x][u1][u2]
    cost = np.zeros((2, 2, 4))
    kernel = np.zeros((2, 4, 2))
    for x in range(2):
        for u1 in range(2):
            for u2 in range(2):
                a = u1 + 2 * u2
                cost[:, x, a] = stage[x, u1, u2]
                good = 0.95 if x == u1 == u2 else 0.05
                kernel[x, a] = [good, 1 - good]
    return Game((2, 2), cost, kernel, [beta, beta])


def build_example_game(which: str, **params) -> Game:
    """Build a built-in example game: ``fig1``, ``fig2`` or ``fig3``."""
    for key in ("beta", "beta1", "beta2"):
        if key in params and not 0 < params[key] < 1:
            raise GameError(f"{key} = {params[key]} outside (0, 1)")
    if which == "fig1":
        beta = params.pop("beta", None)
        if beta is not None:
            params.setdefault("beta1", beta)
            params.setdefault("beta2", beta)
        return fig1_game(**params)
    if which == "fig2":
        return fig2_game(**params)
    if which == "fig3":
        return fig3_game(**params)
    raise GameError(f"unknown example game {which!r}")
