import numpy as np
import pytest

from milo.mdp import FiniteMDP, TabularPolicy


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    horizon: int,
    concentration: float = 1.0,
) -> FiniteMDP:
    """Random episodic MDP with Dirichlet transition rows and uniform costs."""
    transition = rng.dirichlet(
        np.full(n_states, concentration), size=(n_states, n_actions)
    )
    cost = rng.random((n_states, n_actions))
    d0 = rng.dirichlet(np.full(n_states, 1.0))
    return FiniteMDP(transition=transition, cost=cost, horizon=horizon, d0=d0)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.full(n_actions, 1.0), size=n_states))


@pytest.fixture
def rng():
    return np.random.default_rng(20260813)
