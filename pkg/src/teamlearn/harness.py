"""Environment stepping, seeded multi-run experiments, metrics and the reproduction study."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .analysis import equilibrium_set_deterministic, team_optimal_set
from .chain import iup_transition_matrix
from .game import Game, fig3_game, load_game, parse_policy
from .learners import LearnerConfig, LearnerState, end_phase_alg2, end_phase_alg3
from .oracle import game_constants

log = logging.getLogger(__name__)

ALGORITHMS = ("alg2", "alg3", "iup")


class ExperimentError(ValueError):
    pass


# -- environment -------------------------------------------------------------------------

def cumulative_kernel(game: Game) -> np.ndarray:
    if "cum_kernel" not in game._cache:
        cum = _accel.cumulative_kernel(np.asarray(game.kernel))
        cum.setflags(write=False)
        game._cache["cum_kernel"] = cum
    return game._cache["cum_kernel"]


def sample_next_state(cum_row: np.ndarray, u: float) -> int:
    hit = np.flatnonzero(u < cum_row)
    return int(hit[0]) if hit.size else cum_row.size - 1


def step_environment(game: Game, x: int, joint_action, rng) -> tuple:
    """``(cost vector, next state)``.  ``joint_action`` is a flat index or per-player tuple."""
    a = joint_action if np.isscalar(joint_action) else game.joint_action(joint_action)
    costs = np.asarray(game.cost[:, x, a])
    return costs, sample_next_state(cumulative_kernel(game)[x, a], rng.random())


# -- experiment description ----------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """One experiment: a game, an algorithm, per-player learner configs and a run schedule.

    ``phase_length`` is an int or a sequence of length ``phases``.
    ``initial_state`` is ``"uniform"`` or a state index.  ``initial_policies``
    is ``"random"`` or one policy per player (rank or 1-based string like "1,2").
    """

    game: Game
    algorithm: str
    players: list
    phases: int = 1000
    phase_length: object = 10000
    seeds: tuple = (0,)
    initial_state: object = "uniform"
    initial_policies: object = "random"
    burn_in: int = 0
    name: str = ""

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ExperimentError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if isinstance(self.players, LearnerConfig):
            self.players = [self.players]
        if len(self.players) == 1:
            self.players = [dataclasses.replace(self.players[0])
                            for _ in range(self.game.n_players)]
        if len(self.players) != self.game.n_players:
            raise ExperimentError(f"need {self.game.n_players} player configs, got {len(self.players)}")
        if int(self.phases) < 1:
            raise ExperimentError("phases must be >= 1")
        lengths = self.phase_lengths()
        if len(lengths) != self.phases or np.any(lengths < 1):
            raise ExperimentError("phase lengths must be >= 1, one per phase")
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ExperimentError("seeds must be nonempty and distinct")
        if not 0 <= self.burn_in < self.phases:
            raise ExperimentError("burn_in must lie in [0, phases)")

    def phase_lengths(self) -> np.ndarray:
        if np.isscalar(self.phase_length):
            return np.full(int(self.phases), int(self.phase_length), dtype=np.int64)
        return np.asarray(self.phase_length, dtype=np.int64)


@dataclass
class MetricsRecord:
    seed: int
    policy_index: np.ndarray  # (K,) joint baseline used during phase k
    in_opt: np.ndarray
    in_eq: np.ndarray
    scores: np.ndarray  # (K, N) S^i_k (alg2) or S~^i_k (alg3); nan for iup
    satisfied: np.ndarray  # (K, N)
    burn_in: int = 0
    diagnostics: list = field(default_factory=list, repr=False)

    @property
    def n_phases(self) -> int:
        return int(self.policy_index.size)

    @property
    def freq_opt(self) -> float:
        return float(self.in_opt[self.burn_in:].mean())

    @property
    def freq_eq(self) -> float:
        return float(self.in_eq[self.burn_in:].mean())

    def summary(self) -> dict:
        return {"seed": self.seed, "phases": self.n_phases, "burn_in": self.burn_in,
                "freq_opt": self.freq_opt, "freq_eq": self.freq_eq}


# -- running -----------------------------------------------------------------------------------

def _resolve_config(game: Game, i: int, cfg: LearnerConfig, algorithm: str) -> LearnerConfig:
    """Fill oracle-derived defaults (BR tolerance, aspiration tolerance, clamp bounds)."""
    cfg = dataclasses.replace(cfg)
    bound = float(game.c_max[i] / (1.0 - game.discount[i]))
    if cfg.q_bounds is None:
        cfg.q_bounds = (-bound, bound)
    if cfg.j_bounds is None:
        cfg.j_bounds = (-bound, bound)
    if algorithm != "iup" and (cfg.delta is None or (algorithm == "alg2" and cfg.d is None)):
        const = game_constants(game)
        if cfg.delta is None:
            cfg.delta = const.delta_bar / 2
        if algorithm == "alg2" and cfg.d is None:
            cfg.d = const.d_bar / 2
    if algorithm == "alg3" and cfg.aspiration is None:
        raise ExperimentError(f"player {i}: alg3 needs an aspiration level")
    return cfg


def _rngs(seed: int, n_players: int) -> tuple:
    children = np.random.SeedSequence(seed).spawn(n_players + 1)
    gens = [np.random.Generator(np.random.Philox(c)) for c in children]
    return gens[:-1], gens[-1]


def _initial_ranks(spec: ExperimentSpec, agent_rngs) -> list:
    game = spec.game
    if isinstance(spec.initial_policies, str) and spec.initial_policies == "random":
        return [int(r.integers(c)) for r, c in zip(agent_rngs, game.policy_counts)]
    out = []
    for i, pol in enumerate(spec.initial_policies):
        if isinstance(pol, str):
            pol = game.policy_rank(i, parse_policy(pol, game, i))
        out.append(int(pol))
    return out


def _initial_state(spec: ExperimentSpec, env_rng) -> int:
    if spec.initial_state == "uniform":
        return int(env_rng.integers(spec.game.n_states))
    x = int(spec.initial_state)
    if not 0 <= x < spec.game.n_states:
        raise ExperimentError(f"initial state {x} out of range")
    return x


def run_seed(spec: ExperimentSpec, seed: int, keep_diagnostics: bool = False) -> MetricsRecord:
    game = spec.game
    n, nx = game.n_players, game.n_states
    agent_rngs, env_rng = _rngs(seed, n)
    cfgs = [_resolve_config(game, i, c, spec.algorithm) for i, c in enumerate(spec.players)]
    ranks = _initial_ranks(spec, agent_rngs)
    x = _initial_state(spec, env_rng)
    opt = team_optimal_set(game)
    eq = equilibrium_set_deterministic(game)
    n_phases = int(spec.phases)
    index = np.empty(n_phases, dtype=np.int64)
    scores = np.full((n_phases, n), np.nan)
    satisfied = np.zeros((n_phases, n), dtype=bool)
    diags = []

    if spec.algorithm == "iup":
        chain = iup_transition_matrix(game, [c.gamma for c in cfgs], [c.kappa for c in cfgs],
                                      h=[c.h_kernel for c in cfgs], g=[c.g_kernel for c in cfgs])
        cum = np.cumsum(chain.matrix, axis=1)
        k_idx = game.joint_index(ranks)
        for k in range(n_phases):
            index[k] = k_idx
            satisfied[k] = k_idx in chain.satisfied
            k_idx = min(int(np.searchsorted(cum[k_idx], env_rng.random(), side="right")), chain.n - 1)
        return _record(seed, index, opt, eq, scores, satisfied, spec.burn_in, diags)

    amax = max(game.n_actions)
    q = np.zeros((n, nx, amax))
    nvis = np.zeros((n, nx, amax), dtype=np.int64)
    jval = np.zeros((n, nx))
    mvis = np.zeros((n, nx), dtype=np.int64)
    baseline = np.stack([game.policy_table(i)[r] for i, r in enumerate(ranks)]).astype(np.int64)
    states = [LearnerState.create(i, cfgs[i], nx, game.n_actions[i], game.discount[i], agent_rngs[i],
                                  baseline=baseline[i], q=q[i, :, :game.n_actions[i]],
                                  nvis=nvis[i, :, :game.n_actions[i]], j=jval[i], mvis=mvis[i])
              for i in range(n)]
    n_actions = np.asarray(game.n_actions, dtype=np.int64)
    strides = game.action_strides
    rho = np.array([c.rho for c in cfgs])
    thetas = [c.step_size_exponent for c in cfgs]
    cost = np.ascontiguousarray(game.cost)
    cum = cumulative_kernel(game)
    discount = np.asarray(game.discount, dtype=float)
    update_j = spec.algorithm == "alg3"
    end_phase = end_phase_alg3 if update_j else end_phase_alg2
    lengths = spec.phase_lengths()
    alpha_tab = _accel.step_size_table(thetas, int(lengths.max()) + 1)
    for k in range(n_phases):
        t_len = int(lengths[k])
        # all agents share the phase boundary; each draws from its own stream
        u_act = np.empty((t_len, n))
        for i in range(n):
            u_act[:, i] = agent_rngs[i].random(t_len)
        u_env = env_rng.random(t_len)
        x = int(_accel.simulate_phase(x, baseline, n_actions, strides, rho, cost, cum, discount,
                                      alpha_tab, q, nvis, jval, mvis, u_act, u_env, update_j))
        index[k] = game.joint_index([states[i].baseline_rank() for i in range(n)])
        for i in range(n):
            d = end_phase(states[i])
            scores[k, i] = d.score
            satisfied[k, i] = d.satisfied
            if keep_diagnostics:
                diags.append(d)
    return _record(seed, index, opt, eq, scores, satisfied, spec.burn_in, diags)


def _record(seed, index, opt, eq, scores, satisfied, burn_in, diags) -> MetricsRecord:
    in_opt = np.fromiter((k in opt for k in index), dtype=bool, count=index.size)
    in_eq = np.fromiter((k in eq for k in index), dtype=bool, count=index.size)
    return MetricsRecord(seed, index, in_opt, in_eq, scores, satisfied, burn_in, diags)


def thread_count() -> int:
    env = os.environ.get("TEAMLEARN_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_experiment(spec: ExperimentSpec, threads: int | None = None,
                   keep_diagnostics: bool = False) -> list:
    """Run every seed; the result is ordered by ``spec.seeds`` regardless of thread count."""
    # warm the oracle caches once so worker threads only read them
    team_optimal_set(spec.game)
    equilibrium_set_deterministic(spec.game)
    cumulative_kernel(spec.game)
    if spec.algorithm != "iup":
        game_constants(spec.game)
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(spec.seeds) == 1:
        return [run_seed(spec, s, keep_diagnostics) for s in spec.seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: run_seed(spec, s, keep_diagnostics), spec.seeds))


def summarize(records: list) -> dict:
    freqs = np.array([r.freq_opt for r in records])
    eqs = np.array([r.freq_eq for r in records])
    return {
        "seeds": [r.seed for r in records],
        "per_seed": [r.summary() for r in records],
        "mean_freq_opt": float(freqs.mean()) if freqs.size else math.nan,
        "std_freq_opt": float(freqs.std(ddof=1)) if freqs.size > 1 else 0.0,
        "mean_freq_eq": float(eqs.mean()) if eqs.size else math.nan,
    }


# -- experiment files -------------------------------------------------------------------------

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(LearnerConfig)}


def _config_from_dict(doc: dict) -> LearnerConfig:
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise ExperimentError(f"unknown learner fields: {sorted(unknown)}")
    doc = dict(doc)
    for key in ("q_bounds", "j_bounds"):
        if doc.get(key) is not None:
            doc[key] = tuple(doc[key])
    return LearnerConfig(**doc)


def spec_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentSpec:
    game = doc.get("game")
    if game is None:
        raise ExperimentError("experiment needs a 'game'")
    if isinstance(game, str) and base_dir is not None and not Path(game).is_absolute() \
            and (base_dir / game).exists():
        game = str(base_dir / game)
    game = load_game(game) if not isinstance(game, Game) else game
    players = doc.get("players", [{}])
    if isinstance(players, dict):
        players = [players]
    seeds = doc.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    return ExperimentSpec(
        game=game,
        algorithm=doc.get("algorithm", "alg2"),
        players=[_config_from_dict(p) for p in players],
        phases=int(doc.get("phases", 1000)),
        phase_length=doc.get("phase_length", 10000),
        seeds=tuple(seeds),
        initial_state=doc.get("initial_state", "uniform"),
        initial_policies=doc.get("initial_policies", "random"),
        burn_in=int(doc.get("burn_in", 0)),
        name=doc.get("name", ""),
    )


def load_experiment(path) -> ExperimentSpec:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    return spec_from_dict(doc, path.parent)


# -- metrics export ------------------------------------------------------------------------------

def csv_header(n_players: int) -> list:
    return (["seed", "phase", "policy_index", "in_opt", "in_eq"]
            + [f"S_{i + 1}" for i in range(n_players)]
            + [f"branch_{i + 1}" for i in range(n_players)])


def export_metrics(records: list, path, n_players: int | None = None) -> tuple:
    """Write ``<path>`` (CSV, one row per seed and phase) and ``<path stem>.json`` (summary)."""
    path = Path(path)
    if n_players is None:
        n_players = records[0].scores.shape[1] if records else 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(n_players))
        for r in records:
            for k in range(r.n_phases):
                w.writerow([r.seed, k, int(r.policy_index[k]), int(r.in_opt[k]), int(r.in_eq[k])]
                           + [repr(float(s)) for s in r.scores[k]]
                           + ["satisfied" if s else "search" for s in r.satisfied[k]])
    summary_path = path.with_suffix(".json")
    with open(summary_path, "w") as fh:
        json.dump(summarize(records), fh, indent=2)
    return path, summary_path


def summary_from_csv(path, burn_in: int = 0) -> dict:
    """Recompute per-seed frequencies from an exported CSV."""
    per_seed = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["phase"]) < burn_in:
                continue
            acc = per_seed.setdefault(int(row["seed"]), [0, 0, 0])
            acc[0] += int(row["in_opt"])
            acc[1] += int(row["in_eq"])
            acc[2] += 1
    return {s: {"freq_opt": a[0] / a[2], "freq_eq": a[1] / a[2]} for s, a in per_seed.items()}


# -- reproduction study ------------------------------------------------------------------------

# published team-optimal frequencies for the four study cases
REFERENCE_TABLE = {
    "A": {0.05: 0.638, 0.01: 0.902, 0.005: 0.922, 0.001: 0.972},
    "B": {0.05: 0.432, 0.01: 0.776, 0.005: 0.864, 0.001: 0.952},
    "C": {0.05: 0.648, 0.01: 0.908, 0.005: 0.960, 0.001: 0.984},
    "D": {0.05: 0.242, 0.01: 0.564, 0.005: 0.720, 0.001: 0.914},
}
DEFAULT_GAMMAS = (0.05, 0.01, 0.005, 0.001)

# knobs the study leaves open; see README
REPRO_DEFAULTS = {"rho": 0.01, "lam": 0.2, "d": 2.0, "step_size_exponent": 0.8, "aspiration": 30.0}


def case_config(case: str, gamma: float, **overrides) -> tuple:
    """``(algorithm, LearnerConfig, phase_length)`` for a study case."""
    knobs = {**REPRO_DEFAULTS, **overrides}
    common = dict(rho=knobs["rho"], gamma=gamma, step_size_exponent=knobs["step_size_exponent"])
    lam = knobs["lam"]
    if case == "A":
        cfg = LearnerConfig(kappa=gamma + 0.1, lam=lam, window=30, d=knobs["d"],
                            h_kernel=f"inertial:{lam}", g_kernel=f"inertial:{lam}", **common)
        return "alg2", cfg, 10000
    if case == "B":
        cfg = LearnerConfig(kappa=1.0, lam=1.0, window=50, d=knobs["d"],
                            h_kernel="inertial:1", g_kernel="inertial:1", **common)
        return "alg2", cfg, 5000
    if case in ("C", "D"):
        lam = lam if case == "C" else 1.0
        cfg = LearnerConfig(kappa=gamma + 0.2, lam=lam, aspiration=knobs["aspiration"],
                            gamma_schedule="constant", h_kernel=f"inertial:{lam}",
                            g_kernel=f"inertial:{lam}", **common)
        return "alg3", cfg, 7500
    raise ExperimentError(f"unknown case {case!r}")


def case_spec(case: str, gamma: float, seeds=10, phases: int = 1000, burn_in: int = 0,
              **overrides) -> ExperimentSpec:
    algorithm, cfg, t_len = case_config(case, gamma, **overrides)
    seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(seeds)
    return ExperimentSpec(fig3_game(0.8), algorithm, [cfg], phases=phases, phase_length=t_len,
                          seeds=seeds, burn_in=burn_in, name=f"case {case}, gamma={gamma}")


def repro_table(case: str, gammas=DEFAULT_GAMMAS, seeds=10, phases: int = 1000, burn_in: int = 0,
                threads: int | None = None, **overrides) -> list:
    """Rows ``{case, gamma, mean, std, reference}`` of team-optimal frequency over seeds."""
    rows = []
    for gamma in gammas:
        spec = case_spec(case, gamma, seeds, phases, burn_in, **overrides)
        summ = summarize(run_experiment(spec, threads))
        rows.append({"case": case, "gamma": float(gamma), "mean": summ["mean_freq_opt"],
                     "std": summ["std_freq_opt"],
                     "reference": REFERENCE_TABLE.get(case, {}).get(float(gamma), math.nan)})
    return rows


def write_table(rows: list, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["case", "gamma", "mean", "std", "reference"])
        w.writeheader()
        w.writerows(rows)
