"""On-policy SARSA training of the value network.

The tabular update Q <- (1-a)Q + a(R + g*Q') becomes, with the network as
function approximator, the semi-gradient step w <- w + a*d*dQ/dw where
d = R + g*Q(s',a') - Q(s,a).  The bootstrap term is treated as a constant
(no gradient through the next observation) and terminal transitions use
Q' = 0.  Exploration is epsilon-greedy with a linear per-episode decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import TrainingDivergenceError
from .valuenet import QNetwork, apply_update, forward, grad_wrt_params


@dataclass(frozen=True)
class SarsaParams:
    alpha: float = 0.15
    gamma: float = 0.95
    epsilon: float = 0.1
    epsilon_dec: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.epsilon_dec < 0.0:
            raise ValueError(f"epsilon_dec must be >= 0, got {self.epsilon_dec}")


@dataclass(frozen=True)
class Transition:
    """One SARSA tuple; obs arrays are (3, N) feature matrices."""

    obs_t: np.ndarray
    action_t: int
    reward: float  # user satisfaction in [0, 1]
    obs_t1: np.ndarray | None  # None marks a terminal transition
    action_t1: int | None


def td_target(q_t: float, reward: float, q_t1: float | None, params: SarsaParams) -> float:
    """Tabular target (1-a)*q + a*(r + g*q'); q' = 0 at terminal."""
    boot = 0.0 if q_t1 is None else q_t1
    return (1.0 - params.alpha) * q_t + params.alpha * (reward + params.gamma * boot)


def td_error(q_t: float, reward: float, q_t1: float | None, gamma: float) -> float:
    boot = 0.0 if q_t1 is None else q_t1
    return reward + gamma * boot - q_t


def apply_td_step(
    qnet: QNetwork,
    cache,
    action: int,
    q_t: float,
    reward: float,
    q_t1: float | None,
    params: SarsaParams,
) -> float:
    """Semi-gradient update from an already-computed forward cache; returns delta."""
    delta = td_error(q_t, reward, q_t1, params.gamma)
    if not math.isfinite(delta):
        raise TrainingDivergenceError(f"non-finite TD error {delta}")
    apply_update(qnet, grad_wrt_params(qnet, cache, action), params.alpha * delta)
    return delta


def sarsa_step(qnet: QNetwork, transition: Transition, params: SarsaParams) -> float:
    """One on-policy update; mutates qnet in place and returns the TD error."""
    q_t_all, cache = forward(qnet, transition.obs_t)
    q_t = float(q_t_all[transition.action_t])
    if transition.obs_t1 is None:
        q_t1 = None
    else:
        q_t1_all, _ = forward(qnet, transition.obs_t1)
        q_t1 = float(q_t1_all[transition.action_t1])
    return apply_td_step(qnet, cache, transition.action_t, q_t, transition.reward, q_t1, params)


def decay_epsilon(params: SarsaParams) -> SarsaParams:
    """One per-episode decrement, floored at zero."""
    return replace(params, epsilon=max(0.0, params.epsilon - params.epsilon_dec))


def epsilon_at(params: SarsaParams, episode: int) -> float:
    """Exploration probability used during a (0-based) episode.

    Closed form rather than repeated subtraction, so the schedule is exact:
    it reaches 0.0 at episode ceil(eps0/eps_dec) with no float drift.
    """
    return max(0.0, params.epsilon - episode * params.epsilon_dec)
