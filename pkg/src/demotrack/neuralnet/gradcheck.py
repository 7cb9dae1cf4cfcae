"""Central finite-difference checks for every layer and loss of the engine."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

import numpy as np

from . import autograd as ag
from .autograd import Var
from .losses import actor_critic_loss, imitation_loss
from .model import ModelConfig, init_parameters, trace_step

STEP = 1e-5

TINY = ModelConfig(patch_size=8, channels=1, conv_filters=(2, 3), fc_widths=(5,),
                   lstm_width=4, action_head_gain=1.0)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Inf-norm of the difference relative to the larger inf-norm of the two gradients."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check(build: Callable[[dict[str, Var]], Var], inputs: dict[str, np.ndarray]) -> float:
    """Max relative error over all inputs of the scalar built by ``build``."""
    leaves = {k: Var(v, requires_grad=True) for k, v in inputs.items()}
    out = build(leaves)
    out.backward()
    worst = 0.0
    for name, arr in inputs.items():
        def f() -> float:
            with ag.no_grad():
                return float(build({k: Var(v) for k, v in inputs.items()}).data)
        num = numeric_gradient(f, arr)
        ana = leaves[name].grad if leaves[name].grad is not None else np.zeros_like(arr)
        worst = max(worst, relative_error(ana, num))
    return worst


def _weights(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def layer_checks(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    r = {}
    proj = rng.standard_normal((3, 4, 4))
    r["conv2d"] = check(
        lambda p: ag.total(ag.mul(ag.conv2d(p["x"], p["w"], p["b"], stride=2, pad=1), proj[None])),
        {"x": _weights(rng, (1, 2, 7, 7)), "w": _weights(rng, (3, 2, 3, 3)), "b": _weights(rng, (3,))})
    proj2 = rng.standard_normal(5)
    r["linear"] = check(lambda p: ag.total(ag.mul(ag.linear(p["x"], p["w"], p["b"]), proj2)),
                        {"x": _weights(rng, (6,)), "w": _weights(rng, (6, 5)), "b": _weights(rng, (5,))})
    # keep inputs away from the ReLU kink
    xr = rng.standard_normal(7)
    xr = np.where(np.abs(xr) < 0.05, 0.3, xr)
    proj3 = rng.standard_normal(7)
    r["relu"] = check(lambda p: ag.total(ag.mul(ag.relu(p["x"]), proj3)), {"x": xr})
    r["tanh"] = check(lambda p: ag.total(ag.mul(ag.tanh(p["x"]), proj3)), {"x": _weights(rng, (7,))})
    proj4 = rng.standard_normal((2, 3))
    r["lstm_cell"] = check(
        lambda p: ag.total(ag.mul(ag.concat([ag.reshape(v, (1, 3)) for v in ag.lstm_cell(p["z"], p["c"])]),
                                  proj4)),
        {"z": _weights(rng, (12,)), "c": _weights(rng, (3,))})
    sample = rng.standard_normal(4)
    sigma = 0.2 + rng.random(4)
    r["gaussian_log_density"] = check(
        lambda p: ag.gaussian_log_density(p["mu"], sample, sigma), {"mu": _weights(rng, (4,))})
    target = rng.standard_normal(4)
    mask = np.array([1.0, 0.0, 1.0, 1.0])
    r["masked_l1"] = check(lambda p: ag.masked_l1(p["mu"], target, mask),
                           {"mu": target + 0.1 + rng.random(4)})
    return r


def loss_checks(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed + 1)
    r = {}
    targets = [rng.uniform(-0.5, 0.5, 4) for _ in range(3)]
    masks = [1.0, 0.0, 1.0]
    r["imitation_loss"] = check(
        lambda p: imitation_loss([ag.tanh(p[f"z{i}"]) for i in range(3)], targets, masks),
        {f"z{i}": rng.uniform(-1, 1, 4) for i in range(3)})
    samples = [rng.uniform(-0.5, 0.5, 4) for _ in range(3)]
    sigmas = [0.1 + rng.random(4) for _ in range(3)]
    returns = [1.2, 0.7, -0.3]

    def ac(p):
        loss, _ = actor_critic_loss([ag.tanh(p[f"z{i}"]) for i in range(3)],
                                    [ag.reshape(p[f"v{i}"], ()) for i in range(3)],
                                    samples, sigmas, returns, 0.5)
        return loss

    inputs = {f"z{i}": rng.uniform(-1, 1, 4) for i in range(3)}
    inputs.update({f"v{i}": rng.uniform(-1, 1, 1) for i in range(3)})
    # the advantage is a constant: compare against finite differences of the
    # loss with advantages frozen at the evaluation point
    frozen = [r_ - float(inputs[f"v{i}"][0]) for i, r_ in enumerate(returns)]

    def ac_frozen(p):
        loss = None
        for i in range(3):
            mu = ag.tanh(p[f"z{i}"])
            v = ag.reshape(p[f"v{i}"], ())
            term = ag.add(ag.mul(ag.gaussian_log_density(mu, samples[i], sigmas[i]), -frozen[i]),
                          ag.mul(ag.square(ag.add(v, -returns[i])), 0.5))
            loss = term if loss is None else ag.add(loss, term)
        return loss

    leaves = {k: Var(v, requires_grad=True) for k, v in inputs.items()}
    ac(leaves).backward()
    worst = 0.0
    for name, arr in inputs.items():
        def f() -> float:
            with ag.no_grad():
                return float(ac_frozen({k: Var(v) for k, v in inputs.items()}).data)
        worst = max(worst, relative_error(leaves[name].grad, numeric_gradient(f, arr)))
    r["actor_critic_loss"] = worst
    return r


def rollout_check(seed: int = 0, cfg: ModelConfig = TINY) -> dict[str, float]:
    """Every parameter of a tiny network through a 2-step recurrent rollout and both losses."""
    rng = np.random.default_rng(seed + 2)
    params = init_parameters(cfg, seed)
    for k in params:
        if k.endswith(".b"):
            params[k] = params[k] + 0.1 * rng.standard_normal(params[k].shape)
    obs = [rng.uniform(-0.5, 0.5, (2, cfg.channels, cfg.patch_size, cfg.patch_size)) for _ in range(2)]
    h0 = rng.standard_normal(cfg.lstm_width) * 0.1
    c0 = rng.standard_normal(cfg.lstm_width) * 0.1
    targets = [rng.uniform(-0.5, 0.5, 4) for _ in range(2)]
    samples = [rng.uniform(-0.5, 0.5, 4) for _ in range(2)]
    sigmas = [0.3 + rng.random(4) for _ in range(2)]
    returns = [0.8, -0.4]

    def build(p, advantages=None):
        h, c = Var(h0), Var(c0)
        mus, values = [], []
        for o in obs:
            out = trace_step(cfg, p, o, h, c)
            mus.append(out.mu)
            values.append(out.value)
            h, c = out.h, out.c
        l1 = imitation_loss(mus, targets, [1.0, 1.0])
        if advantages is None:
            ac, adv = actor_critic_loss(mus, values, samples, sigmas, returns, 0.5)
        else:
            adv = advantages
            ac = None
            for mu, v, a, s, r_, ad in zip(mus, values, samples, sigmas, returns, adv):
                term = ag.add(ag.mul(ag.gaussian_log_density(mu, a, s), -float(ad)),
                              ag.mul(ag.square(ag.add(v, -r_)), 0.5))
                ac = term if ac is None else ag.add(ac, term)
        return ag.add(l1, ac), adv

    leaves = {k: Var(v, requires_grad=True) for k, v in params.items()}
    loss, adv = build(leaves)
    loss.backward()
    out = {}
    for name, arr in params.items():
        def f() -> float:
            with ag.no_grad():
                return float(build({k: Var(v) for k, v in params.items()}, adv)[0].data)
        out[name] = relative_error(leaves[name].grad, numeric_gradient(f, arr))
    return out


def run_all(seed: int = 0) -> dict[str, float]:
    results = {}
    results.update(layer_checks(seed))
    results.update(loss_checks(seed))
    results.update({f"rollout:{k}": v for k, v in rollout_check(seed).items()})
    split = replace(TINY, shared_encoder=False)
    results.update({f"rollout_split:{k}": v for k, v in rollout_check(seed, split).items()})
    return results
