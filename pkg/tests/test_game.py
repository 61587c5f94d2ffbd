import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teamlearn.game import (DeterministicPolicy, Game, GameError, JointPolicy, RandomizedPolicy,
                            build_example_game, dumps_game, enumerate_policies, game_to_dict,
                            load_game, loads_game, parse_policy)

from conftest import random_game


def test_fig3_document_loads(fig3):
    g = loads_game(dumps_game(fig3))
    assert (g.n_players, g.n_states, g.n_actions) == (2, 2, (2, 2))
    assert np.allclose(g.discount, 0.8)
    assert g.equals(fig3)


def test_kernel_row_error_reports_coordinates(fig3):
    doc = game_to_dict(fig3)
    doc["kernel"][1][2] = [0.5, 0.4]
    with pytest.raises(GameError, match=r"kernel\[1\]\[2\]"):
        load_game(doc)


def test_discount_out_of_range(fig3):
    doc = game_to_dict(fig3)
    doc["discounts"] = [0.8, 1.0]
    with pytest.raises(GameError, match="discount"):
        load_game(doc)


def test_negative_kernel_and_nonfinite_cost(fig3):
    doc = game_to_dict(fig3)
    doc["kernel"][0][0] = [1.5, -0.5]
    with pytest.raises(GameError):
        load_game(doc)
    doc = game_to_dict(fig3)
    doc["costs"][0][0][0] = float("inf")
    with pytest.raises(GameError):
        load_game(doc)


def test_missing_fields():
    with pytest.raises(GameError, match="missing"):
        load_game({"players": 1})


def test_degenerate_single_game():
    g = load_game({"players": 1, "states": 1, "actions": [1], "discounts": [0.5],
                   "costs": [[[0.0]]], "kernel": [[[1.0]]]})
    assert g.n_joint_policies == 1 and g.c_max[0] == 0


def test_load_from_path(tmp_path, fig3):
    p = tmp_path / "g.json"
    p.write_text(dumps_game(fig3))
    assert load_game(str(p)).equals(fig3)
    assert load_game(p).equals(fig3)


def test_fig1_costs():
    g = build_example_game("fig1", a=1, b=1, beta=0.8)
    # stage table rows are player 1's action, columns player 2's
    table = g.cost[:, 0, :].T.reshape(2, 2, 2, order="F")  # [u1, u2, player]
    assert table[0, 0].tolist() == [1, 1]
    assert table[0, 1].tolist() == [2, 2]
    assert table[1, 0].tolist() == [2, 2]
    assert table[1, 1].tolist() == [-1, -1]


def test_fig2_costs(fig2):
    assert fig2.cost.shape == (2, 1, 9)
    assert fig2.cost[:, 0, fig2.joint_action([2, 2])].tolist() == [0, 0]
    assert fig2.cost[:, 0, fig2.joint_action([0, 0])].tolist() == [10, 3]


def test_fig3_costs_and_kernel(fig3):
    assert fig3.cost[:, 1, fig3.joint_action([1, 1])].tolist() == [13, 13]
    assert fig3.cost[:, 0, fig3.joint_action([0, 0])].tolist() == [1, 1]
    assert fig3.kernel[0, fig3.joint_action([0, 0]), 0] == pytest.approx(0.95)
    assert fig3.kernel[1, fig3.joint_action([1, 1]), 0] == pytest.approx(0.95)
    assert fig3.kernel[1, fig3.joint_action([0, 0]), 1] == pytest.approx(0.95)
    assert fig3.is_team()


def test_example_parameter_checks():
    with pytest.raises(GameError):
        build_example_game("fig3", beta=1.2)
    with pytest.raises(GameError):
        build_example_game("fig1", a=-1)
    with pytest.raises(GameError):
        build_example_game("fig9")


def test_enumerate_policies(fig3, fig2):
    assert len(enumerate_policies(fig3, 0)) == 4
    assert [p.action_of_state for p in enumerate_policies(fig2, 1)] == [(0,), (1,), (2,)]
    g = Game((3,), np.zeros((1, 1, 3)), np.ones((1, 3, 1)), [0.5])
    assert len(enumerate_policies(g, 0)) == 3


def test_joint_index_bijection(fig3):
    for k in range(fig3.n_joint_policies):
        jp = JointPolicy.from_index(fig3, k)
        assert JointPolicy.from_policies(fig3, jp.policies).index == k
        assert fig3.joint_index(fig3.joint_ranks(k)) == k


def test_policy_strings(fig3):
    acts = parse_policy("1,2", fig3, 0)
    assert acts.tolist() == [0, 1]
    assert fig3.format_joint(5) == "(1,2;1,2)"
    with pytest.raises(GameError):
        parse_policy("1,3", fig3, 0)
    with pytest.raises(GameError):
        parse_policy("x", fig3, 0)


def test_randomized_policy_validation():
    with pytest.raises(GameError):
        RandomizedPolicy(0, [[0.5, 0.6]])
    rp = RandomizedPolicy.from_deterministic(DeterministicPolicy(0, (1, 0)), 2)
    assert rp.dist_of_state.tolist() == [[0, 1], [1, 0]]


def test_game_arrays_read_only(fig3):
    with pytest.raises(ValueError):
        fig3.cost[0, 0, 0] = 5


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n_states=st.integers(1, 3), n_actions=st.integers(1, 3))
def test_roundtrip_and_enumeration(seed, n_states, n_actions):
    g = random_game(np.random.default_rng(seed), 2, n_states, n_actions)
    again = loads_game(json.dumps(game_to_dict(g)))
    assert again.equals(g)
    pols = [p.action_of_state for p in enumerate_policies(g, 0)]
    assert len(pols) == len(set(pols)) == n_actions ** n_states
    assert [g.policy_rank(0, p) for p in pols] == list(range(len(pols)))
