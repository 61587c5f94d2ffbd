"""Hot numeric kernels, compiled with numba when available.

``simulate_phase`` runs one exploration phase for all learners in lockstep.
Step sizes come from a precomputed table ``alpha_tab[i, n]`` indexed by the
within-phase visit count, which must have more than ``len(u_env)`` columns.

Set ``TEAMLEARN_DISABLE_NUMBA=1`` to force the pure numpy/python path.  Both
paths consume the same pre-drawn uniforms and perform the same floating point
operations in the same order, so they produce bitwise identical results.
"""
from __future__ import annotations

import math
import os
from functools import lru_cache

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("TEAMLEARN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def step_size(n, theta):
    """``alpha_n = 1 / (n + 1) ** theta``."""
    return 1.0 / math.pow(n + 1.0, theta)


@lru_cache(maxsize=64)
def _step_table(theta: float, length: int) -> np.ndarray:
    # scalar libm pow so that table lookups equal step_size() bit for bit
    tab = np.array([step_size(n, theta) for n in range(length)])
    tab.setflags(write=False)
    return tab


def step_size_table(thetas, length: int) -> np.ndarray:
    """Array (N, length) with ``table[i, n] = step_size(n, thetas[i])``."""
    return np.stack([_step_table(float(t), int(length)) for t in thetas])


def cumulative_kernel(kernel: np.ndarray) -> np.ndarray:
    """Row-wise CDF of a transition tensor with the tail pinned above 1.

    Sampling picks the first next state whose CDF exceeds a uniform draw, so
    states after the last positive-probability state can never be chosen.
    """
    cum = np.cumsum(kernel, axis=-1)
    last = kernel.shape[-1] - 1 - np.argmax(kernel[..., ::-1] > 0, axis=-1)
    idx = np.arange(kernel.shape[-1])
    cum[idx >= last[..., None]] = 2.0
    return cum


# -- within-phase simulation -----------------------------------------------------

def _simulate_phase_py(x0, baseline, n_actions, strides, rho, cost, cum_kernel, discount,
                       alpha_tab, q, nvis, jval, mvis, u_act, u_env, update_j):
    """Reference loop: numpy over players, python over time."""
    n_players = baseline.shape[0]
    players = np.arange(n_players)
    n_states = cum_kernel.shape[2]
    x = int(x0)
    for t in range(u_env.shape[0]):
        u = u_act[t]
        explore = u < rho
        with np.errstate(divide="ignore", invalid="ignore"):
            rand_a = np.minimum((u / rho * n_actions).astype(np.int64), n_actions - 1)
        acts = np.where(explore, rand_a, baseline[:, x])
        joint = int(np.dot(acts, strides))
        row = cum_kernel[x, joint]
        y = n_states - 1
        for k in range(n_states):
            if u_env[t] < row[k]:
                y = k
                break
        c = cost[:, x, joint]
        nvis[players, x, acts] += 1
        alpha = alpha_tab[players, nvis[players, x, acts]]
        qmin = np.array([q[i, y, :n_actions[i]].min() for i in range(n_players)])
        target = c + discount * qmin
        q[players, x, acts] = (1.0 - alpha) * q[players, x, acts] + alpha * target
        if update_j:
            mvis[:, x] += 1
            alpha_m = alpha_tab[players, mvis[:, x]]
            jtarget = c + discount * jval[:, y]
            jval[:, x] = (1.0 - alpha_m) * jval[:, x] + alpha_m * jtarget
        x = y
    return x


def _simulate_phase_nb(x0, baseline, n_actions, strides, rho, cost, cum_kernel, discount,
                       alpha_tab, q, nvis, jval, mvis, u_act, u_env, update_j):
    n_players = baseline.shape[0]
    n_states = cum_kernel.shape[2]
    acts = np.empty(n_players, dtype=np.int64)
    x = x0
    for t in range(u_env.shape[0]):
        joint = 0
        for i in range(n_players):
            u = u_act[t, i]
            if u < rho[i]:
                a = np.int64(u / rho[i] * n_actions[i])
                if a > n_actions[i] - 1:
                    a = n_actions[i] - 1
            else:
                a = baseline[i, x]
            acts[i] = a
            joint += a * strides[i]
        y = n_states - 1
        for k in range(n_states):
            if u_env[t] < cum_kernel[x, joint, k]:
                y = k
                break
        # each player's update touches only (x, own action, own cost, y)
        for i in range(n_players):
            a = acts[i]
            c = cost[i, x, joint]
            nvis[i, x, a] += 1
            alpha = alpha_tab[i, nvis[i, x, a]]
            qmin = q[i, y, 0]
            for v in range(1, n_actions[i]):
                if q[i, y, v] < qmin:
                    qmin = q[i, y, v]
            target = c + discount[i] * qmin
            q[i, x, a] = (1.0 - alpha) * q[i, x, a] + alpha * target
            if update_j:
                mvis[i, x] += 1
                alpha_m = alpha_tab[i, mvis[i, x]]
                jtarget = c + discount[i] * jval[i, y]
                jval[i, x] = (1.0 - alpha_m) * jval[i, x] + alpha_m * jtarget
        x = y
    return x


def _dobrushin_py(a):
    n = a.shape[0]
    best = np.inf
    for i in range(n):
        overlap = np.minimum(a[i][None, :], a[i + 1:]).sum(axis=1)
        if overlap.size:
            best = min(best, float(overlap.min()))
    return 1.0 if n == 1 else best


def _dobrushin_nb(a):
    n = a.shape[0]
    if n == 1:
        return 1.0
    best = np.inf
    for i in range(n):
        for k in range(i + 1, n):
            s = 0.0
            for j in range(a.shape[1]):
                s += min(a[i, j], a[k, j])
            if s < best:
                best = s
    return best


simulate_phase_numpy = _simulate_phase_py
dobrushin_numpy = _dobrushin_py
if NUMBA_AVAILABLE:
    simulate_phase_numba = numba.njit(cache=True, nogil=True)(_simulate_phase_nb)
    dobrushin_numba = numba.njit(cache=True, nogil=True)(_dobrushin_nb)
else:  # pragma: no cover
    simulate_phase_numba = dobrushin_numba = None

if USE_NUMBA:
    simulate_phase = simulate_phase_numba
    dobrushin = dobrushin_numba
else:
    simulate_phase = simulate_phase_numpy
    dobrushin = dobrushin_numpy
