"""The idealized policy update procedure as an exact Markov chain over joint policies.

Each player independently redraws its policy from a mixture of an update
kernel and the uniform distribution; the chain row of a joint policy is the
Kronecker product of the per-player mixtures.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import _accel
from .analysis import equilibrium_set_deterministic, is_weakly_acyclic, team_optimal_set
from .game import Game
from .oracle import ENUMERATION_GUARD, OracleError, best_reply_table

DIRECT_SOLVE_LIMIT = 4096
ROW_TOL = 1e-12


class ChainError(ValueError):
    pass


# -- update kernels ------------------------------------------------------------------

def inertial_kernel_prob(new: int, current: int, best: set, lam: float) -> float:
    """``R^{lam}(new | current, B)``: stay if already a best reply, else move with prob ``1-lam``."""
    if not best:
        raise ChainError("best-reply set must be nonempty")
    if current in best:
        return 1.0 if new == current else 0.0
    if new == current:
        return lam
    if new in best:
        return (1.0 - lam) / len(best)
    return 0.0


@dataclass(frozen=True)
class UpdateKernel:
    """Policy update kernel ``h(. | current, B)``.

    ``kind`` is one of ``inertial`` (parameter ``lam``), ``stay``, ``uniform`` or
    ``custom``.  A custom ``table`` has shape ``(n, 2**n, n)`` and is indexed by
    the current policy and the bitmask of the best-reply set.
    """

    kind: str
    lam: float = 0.5
    table: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("inertial", "stay", "uniform", "custom"):
            raise ChainError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "inertial" and not 0.0 <= self.lam <= 1.0:
            raise ChainError(f"inertia must lie in [0, 1], got {self.lam}")
        if self.kind == "custom":
            t = np.asarray(self.table, dtype=float)
            n = t.shape[0] if t.ndim == 3 else -1
            if t.ndim != 3 or t.shape != (n, 2 ** n, n):
                raise ChainError(f"custom table must have shape (n, 2**n, n), got {t.shape}")
            if np.any(t < 0) or np.any(np.abs(t.sum(axis=-1) - 1.0) > 1e-9):
                raise ChainError("custom table rows must be probability vectors")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    @classmethod
    def parse(cls, text: str) -> "UpdateKernel":
        """``"inertial:0.5"``, ``"stay"`` or ``"uniform"``."""
        kind, _, arg = text.strip().partition(":")
        if kind == "inertial":
            return cls("inertial", float(arg) if arg else 0.5)
        if arg:
            raise ChainError(f"kernel {kind!r} takes no parameter")
        return cls(kind)

    def __str__(self):
        return f"inertial:{self.lam:g}" if self.kind == "inertial" else self.kind

    def row(self, current: int, best_mask: np.ndarray) -> np.ndarray:
        """Distribution over the player's policies given the best-reply mask."""
        best_mask = np.asarray(best_mask, dtype=bool)
        n = best_mask.size
        out = np.zeros(n)
        if self.kind == "uniform":
            out[:] = 1.0 / n
        elif self.kind == "stay" or (self.kind == "inertial" and best_mask[current]):
            out[current] = 1.0
        elif self.kind == "inertial":
            if not best_mask.any():
                raise ChainError("best-reply set must be nonempty")
            out[best_mask] = (1.0 - self.lam) / best_mask.sum()
            out[current] += self.lam
        else:
            mask = int(np.dot(best_mask, 1 << np.arange(n)))
            out[:] = self.table[current, mask]
        return out


STAY = UpdateKernel("stay")


def as_kernel(spec) -> UpdateKernel:
    if isinstance(spec, UpdateKernel):
        return spec
    if isinstance(spec, str):
        return UpdateKernel.parse(spec)
    raise ChainError(f"cannot interpret {spec!r} as an update kernel")


def mixture_row(kernel: UpdateKernel, current: int, best_mask, eps: float) -> np.ndarray:
    """``(1 - eps) * kernel(. | current, B) + eps * uniform``."""
    r = kernel.row(current, best_mask)
    return (1.0 - eps) * r + eps / r.size


# -- chain -----------------------------------------------------------------------------

@dataclass
class ChainModel:
    matrix: np.ndarray
    game: Game = field(repr=False)
    gamma: np.ndarray
    kappa: np.ndarray
    h: tuple
    g: tuple
    satisfied: frozenset

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def label(self, index: int) -> str:
        return self.game.format_joint(index)


def _per_player(value, n_players, name) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n_players,)).copy()
    if np.any(arr < 0) or np.any(arr > 1):
        raise ChainError(f"{name} must lie in [0, 1], got {arr.tolist()}")
    return arr


def _kernels(value, n_players) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != n_players:
            raise ChainError(f"expected {n_players} kernels, got {len(value)}")
        return tuple(as_kernel(v) for v in value)
    return (as_kernel(value),) * n_players


def iup_transition_matrix(game: Game, gamma, kappa, h="inertial:0.5", g=None,
                          satisfied=None) -> ChainModel:
    """Transition matrix of the idealized update procedure.

    ``g`` is the kernel used on the satisfied set (default: the inertial kernel
    with ``h``'s inertia, or 0.5 when ``h`` is not inertial).  ``satisfied``
    defaults to the team-optimal set.
    """
    n_pi = game.n_joint_policies
    if n_pi > ENUMERATION_GUARD:
        raise OracleError(f"|Pi| = {n_pi} exceeds enumeration guard {ENUMERATION_GUARD}")
    n = game.n_players
    gamma = _per_player(gamma, n, "gamma")
    kappa = _per_player(kappa, n, "kappa")
    h = _kernels(h, n)
    if g is None:
        g = tuple(UpdateKernel("inertial", k.lam if k.kind == "inertial" else 0.5) for k in h)
    else:
        g = _kernels(g, n)
    sat = team_optimal_set(game) if satisfied is None else frozenset(int(k) for k in satisfied)
    br = [best_reply_table(game, i) for i in range(n)]
    matrix = np.empty((n_pi, n_pi))
    for k in range(n_pi):
        ranks = game.joint_ranks(k)
        row = np.ones(1)
        for i in range(n):
            mask = br[i][game.opponent_index(i, ranks)]
            if k in sat:
                p = mixture_row(g[i], ranks[i], mask, gamma[i])
            else:
                p = mixture_row(h[i], ranks[i], mask, kappa[i])
            row = np.kron(row, p)
        matrix[k] = row
    matrix.setflags(write=False)
    return ChainModel(matrix, game, gamma, kappa, h, g, sat)


def _matrix(chain) -> np.ndarray:
    return np.asarray(chain.matrix if isinstance(chain, ChainModel) else chain, dtype=float)


def is_irreducible(matrix: np.ndarray) -> bool:
    n_comp, _ = connected_components(np.asarray(matrix) > 0, directed=True, connection="strong")
    return n_comp == 1


def stationary_distribution(chain, allow_reducible: bool = False, tol: float = 1e-12,
                            max_iter: int = 10 ** 6) -> np.ndarray:
    """Stationary distribution ``mu = mu A``.

    Irreducible chains up to DIRECT_SOLVE_LIMIT states use a direct linear
    solve.  Larger ones, and reducible ones when ``allow_reducible`` is set,
    use power iteration from the uniform distribution.
    """
    a = _matrix(chain)
    n = a.shape[0]
    irreducible = is_irreducible(a)
    if not irreducible and not allow_reducible:
        raise ChainError("chain is reducible: stationary distribution is not unique")
    if irreducible and n <= DIRECT_SOLVE_LIMIT:
        m = a.T - np.eye(n)
        m[-1] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        mu = np.linalg.solve(m, rhs)
        mu = np.clip(mu, 0.0, None)
        return mu / mu.sum()
    mu = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = mu @ a
        if np.abs(nxt - mu).sum() < tol:
            mu = nxt
            break
        mu = nxt
    return mu / mu.sum()


def dobrushin_coefficient(matrix) -> float:
    """``min_{i,k} sum_j min(A[i,j], A[k,j])``."""
    a = np.ascontiguousarray(_matrix(matrix))
    return float(_accel.dobrushin(a))


def propagate(mu0, matrices) -> np.ndarray:
    """``mu0 A_0 A_1 ...`` applied left to right."""
    mu = np.asarray(mu0, dtype=float)
    for a in matrices:
        mu = mu @ _matrix(a)
    return mu


def optimal_mass_bound(chain: ChainModel) -> float:
    """Lower bound on stationary mass of the team-optimal set for a common-interest chain."""
    counts = np.asarray(chain.game.policy_counts, dtype=float)
    s = chain.gamma.sum()
    jump = np.prod(chain.kappa / counts)
    return 1.0 - s / (s + jump) if s + jump > 0 else 0.0


def weakly_acyclic_chain_bound(game: Game, gamma, kappa, lam, steps=(), mu0=None) -> dict:
    """``p_min`` from the longest minimal strict best reply path and the mass of
    the chain on the equilibrium set after each requested number of steps.

    The chain uses ``h = g = inertial(lam)`` and the equilibrium set as the
    satisfied set.
    """
    n = game.n_players
    lam = _per_player(lam, n, "lam")
    acyclic, big_l, _, _ = is_weakly_acyclic(game)
    counts = np.asarray(game.policy_counts, dtype=float)
    p_min = float(np.prod(np.minimum(lam, (1.0 - lam) / counts) ** big_l)) if acyclic else None
    kernels = [UpdateKernel("inertial", float(v)) for v in lam]
    eq = equilibrium_set_deterministic(game)
    chain = iup_transition_matrix(game, gamma, kappa, h=kernels, g=kernels, satisfied=eq)
    mu = np.full(chain.n, 1.0 / chain.n) if mu0 is None else np.asarray(mu0, dtype=float)
    idx = sorted(eq)
    mass = {}
    done = 0
    for m in sorted(int(s) for s in steps):
        mu = propagate(mu, [chain.matrix] * (m - done))
        done = m
        mass[m] = float(mu[idx].sum())
    return {"weakly_acyclic": acyclic, "L": big_l, "p_min": p_min, "mass_on_equilibria": mass}
