import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teamlearn.analysis import team_optimal_set
from teamlearn.game import Game, RandomizedPolicy, fig1_game, fig2_game
from teamlearn.oracle import (MDP, OracleError, _bellman, best_reply_set, best_reply_table,
                              cost_score, exact_q, game_constants, induced_mdp, joint_values,
                              optimal_q_table, policy_value, tilde_score, value_iteration_q)

from conftest import random_game

# frozen regression values for the two-state coordination team at beta = 0.8
FIG3_DELTA_BAR = 2.0
FIG3_D_BAR = 0.011627906976741542


def test_induced_mdp_fig3(fig3):
    mdp = induced_mdp(fig3, 0, [np.array([0, 1])])
    assert mdp.cost[0, 0] == 1
    assert mdp.kernel[0, 0, 0] == pytest.approx(0.95)


def test_induced_mdp_single_player():
    g = Game((2,), [[[1.0, 2.0]]], [[[1.0], [1.0]]], [0.5])
    mdp = induced_mdp(g, 0, [])
    assert mdp.cost.tolist() == [[1.0, 2.0]]


def test_induced_mdp_uniform_opponent(fig1):
    uniform = RandomizedPolicy(1, [[0.5, 0.5]])
    assert induced_mdp(fig1, 0, [uniform]).cost[0].tolist() == [1.5, 0.5]


def test_induced_mdp_dimension_mismatch(fig3):
    with pytest.raises(ValueError):
        induced_mdp(fig3, 0, [])
    with pytest.raises(ValueError):
        induced_mdp(fig3, 0, [np.array([0, 1, 1])])


def test_value_iteration_geometric():
    q = value_iteration_q(MDP(np.array([[1.0]]), np.array([[[1.0]]])), 0.8)
    assert q[0, 0] == pytest.approx(5.0, abs=1e-9)


def test_value_iteration_fig1(fig1):
    q = value_iteration_q(induced_mdp(fig1, 0, [np.array([1])]), 0.8)
    assert q[0] == pytest.approx([-2.0, -5.0], abs=1e-9)


def test_value_iteration_fig3_argmin(fig3):
    q = value_iteration_q(induced_mdp(fig3, 0, [np.array([0, 1])]), 0.8)
    assert q.argmin(axis=1).tolist() == [0, 1]


def test_value_iteration_bad_tol(fig3):
    with pytest.raises(ValueError):
        value_iteration_q(induced_mdp(fig3, 0, [np.array([0, 1])]), 0.8, tol=0)


def test_value_iteration_iteration_cap():
    from teamlearn.oracle import _value_iteration
    with pytest.raises(OracleError):
        _value_iteration(np.array([[1.0]]), np.array([[[1.0]]]), 0.99, 1e-12, max_iter=3)


def test_policy_value_fig1(fig1):
    j_sub = policy_value(fig1, [np.array([0]), np.array([0])], 0)
    j_opt = policy_value(fig1, [np.array([1]), np.array([1])], 0)
    assert j_opt[0] == pytest.approx(-5.0)
    assert j_sub[0] - j_opt[0] == pytest.approx(10.0)


def test_policy_value_zero_cost():
    g = Game((2,), np.zeros((1, 2, 2)), np.full((2, 2, 2), 0.5), [0.9])
    assert np.all(policy_value(g, [np.array([0, 1])], 0) == 0)


def test_best_reply_sets(fig3, fig2):
    assert best_reply_set(fig3, 0, [np.array([0, 1])]) == {1}
    assert best_reply_set(fig2, 0, [np.array([0])]) == {1}
    g = Game((1,), [[[3.0], [1.0]]], [[[0.5, 0.5]], [[0.5, 0.5]]], [0.5])
    assert best_reply_set(g, 0, []) == {0}


def test_constants_fig3_golden(fig3):
    c = game_constants(fig3)
    assert c.delta_bar == pytest.approx(FIG3_DELTA_BAR, abs=1e-9)
    assert c.d_bar == pytest.approx(FIG3_D_BAR, abs=1e-9)
    assert not c.degenerate


def test_constants_degenerate():
    g = Game((2, 2), np.ones((2, 1, 4)), np.ones((1, 4, 1)), [0.5, 0.5])
    c = game_constants(g)
    assert math.isinf(c.delta_bar)
    assert "degenerate: all Q-factors equal" in c.warnings


def test_fig1_scores_unique_min(fig1):
    s = game_constants(fig1).scores
    assert np.argmin(s[:, 0]) == fig1.joint_index([1, 1])
    assert np.sum(s[:, 0] == s[:, 0].min()) == 1


def test_tilde_score_fig1(fig1):
    k = fig1.joint_index([1, 1])
    assert tilde_score(fig1, 0, k) == pytest.approx(-5.0)
    assert tilde_score(fig1, 0, k) == pytest.approx(joint_values(fig1)[k, 0, 0])


def test_score_equals_tilde_at_best_reply(fig3, fig2):
    for g in (fig3, fig2):
        for k in range(g.n_joint_policies):
            ranks = g.joint_ranks(k)
            for i in range(g.n_players):
                if best_reply_table(g, i)[g.opponent_index(i, ranks), ranks[i]]:
                    assert cost_score(g, i, k) == pytest.approx(tilde_score(g, i, k), abs=1e-9)


@pytest.mark.parametrize("maker", [lambda: fig1_game(1, 2, 0.8, 0.8), lambda: fig2_game(0.9),
                                   lambda: __import__("teamlearn").fig3_game(0.8)])
def test_q_score_separation(maker):
    g = maker()
    s = game_constants(g).scores
    opt = team_optimal_set(g)
    rest = [k for k in range(g.n_joint_policies) if k not in opt]
    for i in range(g.n_players):
        assert s[sorted(opt), i].max() < s[rest, i].min() - 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_oracle_properties(seed):
    g = random_game(np.random.default_rng(seed), 2, 2, 2)
    delta = game_constants(g).delta_bar
    for i in range(2):
        q = optimal_q_table(g, i)
        from teamlearn.oracle import _induced_batch
        cost, kernel = _induced_batch(g, i)
        assert np.max(np.abs(_bellman(cost, kernel, g.discount[i], q) - q)) < 1e-9
        assert best_reply_table(g, i).any(axis=1).all()
    # value of a best reply equals the state-wise optimum
    for k in range(g.n_joint_policies):
        ranks = g.joint_ranks(k)
        acts = g.joint_policy_actions(k)
        m = g.opponent_index(0, ranks)
        if best_reply_table(g, 0)[m, ranks[0]] and delta < math.inf:
            j = policy_value(g, list(acts), 0)
            assert j == pytest.approx(optimal_q_table(g, 0)[m].min(axis=1), abs=1e-8)


def test_exact_q_matches_value_iteration(fig3):
    mdp = induced_mdp(fig3, 1, [np.array([1, 0])])
    assert exact_q(mdp.cost, mdp.kernel, 0.8) == pytest.approx(
        value_iteration_q(mdp, 0.8, 1e-11), abs=1e-10)
