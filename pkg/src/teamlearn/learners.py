"""Independent aspiration-based Q-learners.

A learner only ever sees :class:`Transition` records: the current state, its
own action, its own realized cost and the next state.  Nothing about the other
players is available to it.

Two end-of-phase rules are provided.  ``alg2`` compares the phase score
``S = sum_x Q(x, pi(x))`` against a windowed aspiration ``min(past W scores) + d``.
``alg3`` compares ``sum_x J(x)`` (a TD(0) estimate of its realized value) against
a constant aspiration.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._accel import step_size
from .chain import UpdateKernel, as_kernel, mixture_row


class LearnerError(ValueError):
    pass


class Transition(NamedTuple):
    x: int
    action: int
    cost: float
    next_x: int


@dataclass
class LearnerConfig:
    """Per-player parameters.

    ``gamma`` is the satisfied-branch experimentation probability.  For
    ``alg3`` it is the initial value ``gamma_0`` of the schedule
    (``summable``: ``gamma_0 / (k+1)**2``, ``constant``: ``gamma_0``).
    ``q_bounds`` / ``j_bounds`` default to ``+-c_max / (1 - beta)`` once the
    harness knows the cost scale.
    """

    rho: float = 0.01
    gamma: float = 0.01
    kappa: float = 0.1
    lam: float = 0.5
    delta: float | None = None
    d: float | None = None
    window: int = 30
    aspiration: float | None = None
    step_size_exponent: float = 0.8
    gamma_schedule: str = "summable"
    q_bounds: tuple | None = None
    j_bounds: tuple | None = None
    h_kernel: UpdateKernel | str | None = None
    g_kernel: UpdateKernel | str | None = None

    def __post_init__(self):
        for name in ("rho", "gamma", "kappa", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise LearnerError(f"{name} must lie in [0, 1], got {v}")
        for name in ("delta", "d"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise LearnerError(f"{name} must be positive, got {v}")
        if int(self.window) < 1:
            raise LearnerError(f"window must be >= 1, got {self.window}")
        if not self.step_size_exponent > 0.5 or self.step_size_exponent > 1.0:
            raise LearnerError("step_size_exponent must lie in (0.5, 1]")
        if self.gamma_schedule not in ("summable", "constant"):
            raise LearnerError(f"unknown gamma schedule {self.gamma_schedule!r}")
        self.h_kernel = as_kernel(self.h_kernel) if self.h_kernel is not None \
            else UpdateKernel("inertial", self.lam)
        self.g_kernel = as_kernel(self.g_kernel) if self.g_kernel is not None \
            else UpdateKernel("inertial", self.lam)

    def gamma_at(self, k: int) -> float:
        """Satisfied-branch experimentation probability at phase ``k`` (alg3)."""
        if self.gamma_schedule == "constant":
            return self.gamma
        return self.gamma / (k + 1) ** 2

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "rho", "gamma", "kappa", "lam", "delta", "d", "window", "aspiration",
            "step_size_exponent", "gamma_schedule", "q_bounds", "j_bounds")}
        out["h_kernel"] = str(self.h_kernel)
        out["g_kernel"] = str(self.g_kernel)
        return out


@dataclass
class PhaseDiagnostics:
    k: int
    player: int
    score: float
    aspiration: float
    satisfied: bool
    br_size: int
    old_baseline: np.ndarray
    new_baseline: np.ndarray

    @property
    def branch(self) -> str:
        return "satisfied" if self.satisfied else "search"

    def policy_string(self) -> str:
        return ",".join(str(int(a) + 1) for a in self.new_baseline)


@dataclass
class LearnerState:
    """Runtime state of one learner.

    ``q``, ``nvis``, ``j``, ``mvis`` and ``baseline`` may be views into arrays
    shared with the compiled phase kernel; everything here is updated in place.
    """

    player: int
    config: LearnerConfig
    discount: float
    baseline: np.ndarray
    q: np.ndarray
    nvis: np.ndarray
    j: np.ndarray
    mvis: np.ndarray
    rng: np.random.Generator
    window: deque = field(default_factory=deque)
    k: int = 0

    @classmethod
    def create(cls, player, config, n_states, n_actions, discount, rng, baseline=None,
               q=None, nvis=None, j=None, mvis=None):
        if baseline is None:
            baseline = np.zeros(n_states, dtype=np.int64)
        q = np.zeros((n_states, n_actions)) if q is None else q
        nvis = np.zeros((n_states, n_actions), dtype=np.int64) if nvis is None else nvis
        j = np.zeros(n_states) if j is None else j
        mvis = np.zeros(n_states, dtype=np.int64) if mvis is None else mvis
        return cls(player, config, float(discount), baseline, q, nvis, j, mvis, rng,
                   deque(maxlen=int(config.window)))

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    def policy_table(self) -> np.ndarray:
        n, x = self.n_actions, self.n_states
        return np.stack(np.unravel_index(np.arange(n ** x), (n,) * x), axis=1).astype(np.int64)

    def baseline_rank(self) -> int:
        return int(np.ravel_multi_index(tuple(self.baseline), (self.n_actions,) * self.n_states))


# -- within-phase steps -----------------------------------------------------------------

def action_from_uniform(u: float, baseline_action: int, rho: float, n_actions: int) -> int:
    if u < rho:
        return min(int(u / rho * n_actions), n_actions - 1)
    return int(baseline_action)


def select_action(state: LearnerState, x: int, rng=None) -> int:
    """Baseline action with probability ``1 - rho``, else uniform."""
    rng = state.rng if rng is None else rng
    return action_from_uniform(rng.random(), state.baseline[x], state.config.rho, state.n_actions)


def q_step(state: LearnerState, tr: Transition, alpha: float | None = None) -> LearnerState:
    x, a = tr.x, tr.action
    state.nvis[x, a] += 1
    if alpha is None:
        alpha = step_size(state.nvis[x, a], state.config.step_size_exponent)
    target = tr.cost + state.discount * state.q[tr.next_x].min()
    state.q[x, a] = (1.0 - alpha) * state.q[x, a] + alpha * target
    return state


def j_step(state: LearnerState, tr: Transition, alpha: float | None = None) -> LearnerState:
    x = tr.x
    state.mvis[x] += 1
    if alpha is None:
        alpha = step_size(state.mvis[x], state.config.step_size_exponent)
    target = tr.cost + state.discount * state.j[tr.next_x]
    state.j[x] = (1.0 - alpha) * state.j[x] + alpha * target
    return state


# -- end of phase ------------------------------------------------------------------------

def best_reply_mask(q: np.ndarray, delta: float, table: np.ndarray) -> np.ndarray:
    """Policies whose action is within ``delta`` of the row minimum in every state."""
    ok = q <= q.min(axis=1, keepdims=True) + delta
    return ok[np.arange(q.shape[0]), table].all(axis=1)


def policy_score(q: np.ndarray, baseline: np.ndarray) -> float:
    return float(q[np.arange(q.shape[0]), baseline].sum())


def _draw(kernel: UpdateKernel, current: int, mask, eps: float, rng) -> int:
    p = mixture_row(kernel, current, mask, eps)
    return min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), p.size - 1)


def _reset(state: LearnerState):
    cfg = state.config
    if cfg.q_bounds is not None:
        np.clip(state.q, cfg.q_bounds[0], cfg.q_bounds[1], out=state.q)
    if cfg.j_bounds is not None:
        np.clip(state.j, cfg.j_bounds[0], cfg.j_bounds[1], out=state.j)
    state.nvis[...] = 0
    state.mvis[...] = 0


def _finish(state, score, aspiration, eps) -> PhaseDiagnostics:
    cfg = state.config
    if cfg.delta is None:
        raise LearnerError("best-reply tolerance delta is not set")
    table = state.policy_table()
    mask = best_reply_mask(state.q, cfg.delta, table)
    satisfied = score <= aspiration
    current = state.baseline_rank()
    if satisfied:
        new = _draw(cfg.g_kernel, current, mask, eps, state.rng)
    else:
        new = _draw(cfg.h_kernel, current, mask, cfg.kappa, state.rng)
    old = state.baseline.copy()
    state.baseline[:] = table[new]
    _reset(state)
    diag = PhaseDiagnostics(state.k, state.player, score, aspiration, bool(satisfied),
                            int(mask.sum()), old, state.baseline.copy())
    state.k += 1
    return diag


def end_phase_alg2(state: LearnerState) -> PhaseDiagnostics:
    """Windowed-aspiration update.  An empty window means an infinite aspiration."""
    cfg = state.config
    if cfg.d is None:
        raise LearnerError("aspiration tolerance d is not set")
    score = policy_score(state.q, state.baseline)
    aspiration = min(state.window) + cfg.d if state.window else math.inf
    diag = _finish(state, score, aspiration, cfg.gamma)
    state.window.append(score)
    return diag


def end_phase_alg3(state: LearnerState) -> PhaseDiagnostics:
    """Constant-aspiration update driven by the summed state values ``J``."""
    cfg = state.config
    if cfg.aspiration is None:
        raise LearnerError("aspiration level is not set")
    score = float(state.j.sum())
    return _finish(state, score, float(cfg.aspiration), cfg.gamma_at(state.k))
