import numpy as np
import pytest

from teamlearn.game import Game, fig1_game, fig2_game, fig3_game


@pytest.fixture(scope="session")
def fig3():
    return fig3_game(0.8)


@pytest.fixture(scope="session")
def fig2():
    return fig2_game(0.9)


@pytest.fixture(scope="session")
def fig1():
    return fig1_game(1.0, 1.0, 0.8, 0.8)


def repeated(stage, beta=0.8):
    """Two-player single-state game from a (rows, cols, 2) cost table."""
    stage = np.asarray(stage, dtype=float)
    n1, n2 = stage.shape[:2]
    cost = np.zeros((2, 1, n1 * n2))
    for u1 in range(n1):
        for u2 in range(n2):
            cost[:, 0, u1 + n1 * u2] = stage[u1, u2]
    return Game((n1, n2), cost, np.ones((1, n1 * n2, 1)), [beta, beta])


@pytest.fixture(scope="session")
def pennies():
    # each player wants the opposite outcome; no joint minimizer
    return repeated([[(0, 1), (1, 0)], [(1, 0), (0, 1)]])


def random_game(rng, n_players=2, n_states=2, n_actions=2, beta=0.7):
    acts = (n_actions,) * n_players
    j = n_actions ** n_players
    cost = rng.integers(0, 6, size=(n_players, n_states, j)).astype(float)
    kernel = rng.dirichlet(np.ones(n_states), size=(n_states, j))
    return Game(acts, cost, kernel, [beta] * n_players)
