"""Command line entry point: ``teamlearn <command> ...``; every command prints JSON."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, chain, harness, oracle
from .game import GameError, build_example_game, dumps_game, load_game, parse_policy


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(doc, out=None):
    text = json.dumps(_jsonable(doc), indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",")]


def _policy_sets(game, sets) -> list:
    return [[game.format_joint(k) for k in sorted(s)] for s in sets]


# -- commands ---------------------------------------------------------------------------------

def cmd_validate(args):
    game = load_game(args.game)
    _emit({"valid": True, "players": game.n_players, "states": game.n_states,
           "actions": list(game.n_actions), "joint_policies": game.n_joint_policies,
           "team": game.is_team()})


def cmd_example(args):
    params = {}
    if args.beta is not None:
        params["beta"] = args.beta
    for name in ("a", "b", "beta1", "beta2"):
        if getattr(args, name) is not None:
            params[name] = getattr(args, name)
    text = dumps_game(build_example_game(args.which, **params))
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def _opponents(game, player, text):
    parts = text.split(";")
    others = [j for j in range(game.n_players) if j != player]
    if len(parts) != len(others):
        raise GameError(f"expected {len(others)} opponent policies separated by ';'")
    return [parse_policy(p, game, j) for p, j in zip(parts, others)]


def cmd_oracle(args):
    game = load_game(args.game)
    what = args.what
    if what == "constants":
        c = oracle.game_constants(game)
        _emit({"delta_bar": c.delta_bar, "d_bar": c.d_bar, "warnings": list(c.warnings)})
        return
    if what == "values":
        vals = oracle.joint_values(game)
        _emit({game.format_joint(k): {"J": vals[k], "S_tilde": vals[k].sum(axis=1),
                                      "S": oracle.game_constants(game).scores[k]}
               for k in range(game.n_joint_policies)})
        return
    i = args.player - 1
    if args.opponents is None:
        raise GameError("--opponents is required for qstar and br")
    others = _opponents(game, i, args.opponents)
    if what == "qstar":
        mdp = oracle.induced_mdp(game, i, others)
        _emit({"player": args.player, "qstar": oracle.exact_q(mdp.cost, mdp.kernel, game.discount[i])})
    else:
        ranks = sorted(oracle.best_reply_set(game, i, others))
        table = game.policy_table(i)
        _emit({"player": args.player, "best_replies": [game.format_policy(i, table[r]) for r in ranks]})


def cmd_analyze(args):
    game = load_game(args.game)
    rep = analysis.analyze(game)
    doc = {
        "team_optimal": _policy_sets(game, [rep.team_optimal])[0],
        "equilibria": _policy_sets(game, [rep.equilibria])[0],
        "common_interest": rep.common_interest,
        "team": game.is_team(),
        "weakly_acyclic": rep.weakly_acyclic,
        "L": rep.max_path_length,
        "L_bar": rep.max_path_length_cumber,
        "minimal_cumber_sets": _policy_sets(game, rep.minimal_cumber_sets),
    }
    if args.lam:
        lam = _floats(args.lam)
        if len(lam) == 1:
            lam = lam * game.n_players
        doc["lambda"] = lam
        doc["minimal_lambda_cumber_sets"] = _policy_sets(
            game, analysis.minimal_lambda_cumber_sets(game, lam))
    _emit(doc)


def cmd_chain(args):
    game = load_game(args.game)
    model = chain.iup_transition_matrix(game, _floats(args.gamma), _floats(args.kappa), h=args.h,
                                        g=args.g)
    doc = {"n": model.n, "gamma": model.gamma, "kappa": model.kappa,
           "h": [str(k) for k in model.h], "g": [str(k) for k in model.g],
           "satisfied": _policy_sets(game, [model.satisfied])[0]}
    opt = sorted(model.satisfied)
    if args.stationary:
        mu = chain.stationary_distribution(model, allow_reducible=args.allow_reducible)
        doc["stationary"] = {game.format_joint(k): mu[k] for k in range(model.n)}
        doc["mass_satisfied"] = float(mu[opt].sum())
        doc["lower_bound"] = chain.optimal_mass_bound(model)
    if args.dobrushin:
        doc["dobrushin"] = chain.dobrushin_coefficient(model)
    if args.power is not None:
        mu = chain.propagate(np.full(model.n, 1.0 / model.n), [model.matrix] * args.power)
        doc["power"] = {"m": args.power, "mass_satisfied": float(mu[opt].sum()),
                        "distribution": {game.format_joint(k): mu[k] for k in range(model.n)}}
    _emit(doc)


def cmd_run(args):
    spec = harness.load_experiment(args.experiment)
    records = harness.run_experiment(spec, threads=args.threads)
    summary = harness.summarize(records)
    if args.out:
        harness.export_metrics(records, args.out, spec.game.n_players)
    _emit(summary)


def cmd_repro(args):
    overrides = {k: getattr(args, k) for k in ("rho", "lam", "d", "step_size_exponent")
                 if getattr(args, k) is not None}
    rows = []
    for case in args.case.split(","):
        rows += harness.repro_table(case.strip().upper(), _floats(args.gammas), args.seeds,
                                    args.phases, args.burn_in, args.threads, **overrides)
    if args.out:
        harness.write_table(rows, args.out)
    _emit(rows)


# -- parser -----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teamlearn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a game file")
    s.add_argument("game")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("example", help="write one of the built-in example games")
    s.add_argument("--which", required=True, choices=["fig1", "fig2", "fig3"])
    s.add_argument("--beta", type=float)
    s.add_argument("--beta1", type=float)
    s.add_argument("--beta2", type=float)
    s.add_argument("--a", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_example)

    s = sub.add_parser("oracle", help="exact Q-factors, values, best replies or separation constants")
    s.add_argument("game")
    s.add_argument("--what", required=True, choices=["qstar", "values", "br", "constants"])
    s.add_argument("--player", type=int, default=1, help="1-based player index")
    s.add_argument("--opponents", help="opponent policies, e.g. '1,2' (';' between players)")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("analyze", help="optimal set, equilibria, weak acyclicity, cumber sets")
    s.add_argument("game")
    s.add_argument("--lambda", dest="lam", help="aspiration levels, comma separated")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("chain", help="idealized update chain over joint policies")
    s.add_argument("game")
    s.add_argument("--gamma", required=True, help="one value or one per player")
    s.add_argument("--kappa", required=True, help="one value or one per player")
    s.add_argument("--h", default="inertial:0.5")
    s.add_argument("--g", default=None)
    s.add_argument("--stationary", action="store_true")
    s.add_argument("--allow-reducible", action="store_true")
    s.add_argument("--dobrushin", action="store_true")
    s.add_argument("--power", type=int)
    s.set_defaults(func=cmd_chain)

    s = sub.add_parser("run", help="run an experiment file")
    s.add_argument("experiment")
    s.add_argument("--out", help="CSV path for per-phase metrics (summary written next to it)")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("repro", help="team-optimal frequency table for the study cases")
    s.add_argument("--case", default="A", help="A, B, C, D or a comma list")
    s.add_argument("--gammas", default="0.05,0.01,0.005,0.001")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--phases", type=int, default=1000)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--threads", type=int)
    s.add_argument("--rho", type=float)
    s.add_argument("--lam", type=float)
    s.add_argument("--d", type=float)
    s.add_argument("--step-size-exponent", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
