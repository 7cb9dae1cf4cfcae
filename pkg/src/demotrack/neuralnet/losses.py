"""Training losses built on the gradient engine."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Var


def imitation_loss(mus: Sequence[Var], targets: Sequence[np.ndarray],
                   masks: Sequence[float]) -> Var:
    """Masked L1 distance between agent actions and expert target actions, summed over steps."""
    terms = [ag.masked_l1(mu, t, m) for mu, t, m in zip(mus, targets, masks)]
    loss = terms[0]
    for t in terms[1:]:
        loss = ag.add(loss, t)
    return loss


def actor_critic_loss(mus: Sequence[Var], values: Sequence[Var], samples: Sequence[np.ndarray],
                      sigmas: Sequence[np.ndarray], returns: Sequence[float],
                      value_coef: float = 0.5) -> tuple[Var, np.ndarray]:
    """``sum_i -log N(a_i; mu_i, sigma_i) * A_i + c_v * (R_i - v_i)^2``.

    The advantage ``A_i = R_i - v_i`` is a constant in the policy term.
    Returns the loss and the advantages.
    """
    advantages = np.array([r - float(v.data) for r, v in zip(returns, values)])
    loss = None
    for mu, v, a, s, r, adv in zip(mus, values, samples, sigmas, returns, advantages):
        policy = ag.mul(ag.gaussian_log_density(mu, a, s), -float(adv))
        critic = ag.mul(ag.square(ag.add(v, -float(r))), value_coef)
        term = ag.add(policy, critic)
        loss = term if loss is None else ag.add(loss, term)
    assert loss is not None, "empty rollout"
    return loss, advantages


def discounted_returns(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> list[float]:
    """``R_i = sum_{j>=i} gamma^(j-i) r_j + gamma^(n-i) * bootstrap``."""
    out = [0.0] * len(rewards)
    acc = bootstrap
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out
