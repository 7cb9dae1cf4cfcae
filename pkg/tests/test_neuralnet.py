import struct
from dataclasses import replace

import numpy as np
import pytest

from demotrack.geometry import ActionDelta
from demotrack.neuralnet import autograd as ag
from demotrack.neuralnet.autograd import Var
from demotrack.neuralnet.checkpoint import (CheckpointError, checkpoint_digest, decode_checkpoint,
                                            encode_checkpoint, load_checkpoint, load_into,
                                            save_checkpoint)
from demotrack.neuralnet.gradcheck import TINY, numeric_gradient, relative_error, run_all
from demotrack.neuralnet.losses import actor_critic_loss, discounted_returns, imitation_loss
from demotrack.neuralnet.model import (GraphStateError, ModelConfig, PolicyValueNet, RecurrentState,
                                       init_parameters, parameter_shapes)


def obs_for(cfg, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 0.5, (2, cfg.channels, cfg.patch_size, cfg.patch_size))


class TestForward:
    def test_zero_heads_give_identity(self):
        net = PolicyValueNet.create(ModelConfig(), 0)
        for k in ("pi.w", "pi.b", "v.w", "v.b"):
            net.params[k] = np.zeros_like(net.params[k])
        mu, value, state = net.forward(obs_for(net.cfg), net.initial_state())
        assert tuple(mu) == (0.0, 0.0, 0.0, 0.0) and value == 0.0
        assert np.all(np.isfinite(state.h))

    def test_deterministic(self):
        net = PolicyValueNet.create(TINY, 3)
        rs = RecurrentState(np.full(TINY.lstm_width, 0.2), np.full(TINY.lstm_width, -0.1))
        a = net.forward(obs_for(TINY), rs)
        b = net.forward(obs_for(TINY), rs)
        assert a[0] == b[0] and a[1] == b[1]
        assert np.array_equal(a[2].h, b[2].h) and np.array_equal(a[2].c, b[2].c)

    def test_action_bounded(self):
        rng = np.random.default_rng(0)
        cfg = replace(TINY, action_head_gain=50.0)
        for i in range(1000):
            net = PolicyValueNet.create(cfg, i)
            obs = rng.normal(0, 3, (2, 1, 8, 8))
            mu, _, _ = net.forward(obs, net.initial_state())
            assert all(-1.0 <= v <= 1.0 for v in mu)

    def test_shape_mismatch(self):
        net = PolicyValueNet.create(TINY, 0)
        with pytest.raises(ValueError):
            net.forward(np.zeros((2, 1, 9, 9)), net.initial_state())

    def test_split_encoder_layout(self):
        shapes = parameter_shapes(replace(TINY, shared_encoder=False))
        assert "enc0.conv0.w" in shapes and "enc1.conv1.b" in shapes and "enc.conv0.w" not in shapes
        net = PolicyValueNet.create(replace(TINY, shared_encoder=False), 0)
        mu, _, _ = net.forward(obs_for(TINY), net.initial_state())
        assert isinstance(mu, ActionDelta)

    @pytest.mark.parametrize("kwargs", [dict(lstm_width=0), dict(fc_widths=(0,)), dict(conv_stride=0)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)


class TestInit:
    def test_same_seed_equal(self):
        a, b = init_parameters(ModelConfig(), 4), init_parameters(ModelConfig(), 4)
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_different_seed_differs(self):
        a, b = init_parameters(ModelConfig(), 4), init_parameters(ModelConfig(), 5)
        assert not np.array_equal(a["fc0.w"], b["fc0.w"])

    def test_forget_bias(self):
        p = init_parameters(ModelConfig(lstm_width=16), 0)
        assert np.all(p["lstm.b"][16:32] == 1.0)
        assert np.all(p["lstm.b"][:16] == 0.0) and np.all(p["lstm.b"][32:] == 0.0)

    def test_fan_in_bounds(self):
        cfg = ModelConfig()
        p = init_parameters(cfg, 0)
        fan = cfg.channels * 9
        assert np.abs(p["enc.conv0.w"]).max() <= np.sqrt(6 / fan)
        assert np.abs(p["lstm.w"]).max() <= 1 / np.sqrt(p["lstm.w"].shape[0])


class TestGradients:
    def test_full_suite(self):
        results = run_all(0)
        assert any(k.startswith("rollout_split:enc1") for k in results)
        worst = max(results, key=results.get)
        assert results[worst] <= 1e-4, worst

    def test_sum_mu_wrt_action_bias(self):
        net = PolicyValueNet.create(TINY, 1)
        obs = obs_for(TINY, 2)

        def loss_value():
            mu, _, _ = net.forward(obs, net.initial_state())
            return float(sum(mu))

        g = net.graph()
        h, c = g.initial(net.initial_state())
        out = g.step(obs, h, c)
        grads = g.backward(ag.total(out.mu))
        numeric = numeric_gradient(loss_value, net.params["pi.b"])
        assert relative_error(grads["pi.b"], numeric) <= 1e-6

    def test_zero_loss_zero_gradient(self):
        net = PolicyValueNet.create(TINY, 1)
        g = net.graph()
        h, c = g.initial(net.initial_state())
        out = g.step(obs_for(TINY), h, c)
        grads = g.backward(imitation_loss([out.mu], [out.mu.data.copy()], [1.0]))
        assert all(not np.any(v) for v in grads.values())
        assert set(grads) == set(net.params)

    def test_backward_without_forward(self):
        with pytest.raises(GraphStateError):
            PolicyValueNet.create(TINY, 0).graph().backward(Var(0.0))

    def test_backward_requires_scalar(self):
        x = Var(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            ag.tanh(x).backward()

    def test_no_grad_records_nothing(self):
        x = Var(np.ones(3), requires_grad=True)
        with ag.no_grad():
            y = ag.tanh(x)
        assert not y.requires_grad and y.parents == ()


class TestLosses:
    def test_single_step_imitation(self):
        mu = Var(np.zeros(4), requires_grad=True)
        loss = imitation_loss([mu], [np.array([0.2, 0, 0, 0])], [1])
        assert float(loss.data) == pytest.approx(0.2)

    def test_masked_steps_contribute_nothing(self):
        mu = Var(np.zeros(4), requires_grad=True)
        loss = imitation_loss([mu], [np.ones(4)], [0])
        loss.backward()
        assert float(loss.data) == 0.0 and not np.any(mu.grad)

    def test_returns(self):
        assert discounted_returns([0.5, 0.7], 1.0) == pytest.approx([1.2, 0.7])
        assert discounted_returns([1.0, 1.0], 0.5, bootstrap=2.0) == pytest.approx([2.0, 2.0])

    def test_returns_match_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            r = rng.choice([-1.0, 0.0, 0.3, 1.0], n)
            boot = float(rng.normal())
            gamma = float(rng.uniform(0.5, 1.0))
            expected = [sum(gamma ** (j - i) * r[j] for j in range(i, n)) + gamma ** (n - i) * boot
                        for i in range(n)]
            assert discounted_returns(list(r), gamma, boot) == pytest.approx(expected, abs=1e-12)

    def test_advantage_is_constant(self):
        mu = Var(np.zeros(4), requires_grad=True)
        v = Var(np.asarray(0.5), requires_grad=True)
        loss, adv = actor_critic_loss([mu], [v], [np.full(4, 0.1)], [np.full(4, 0.2)], [1.5], 0.5)
        loss.backward()
        assert adv == pytest.approx([1.0])
        # value gradient only from the critic term: 2 * c_v * (v - R)
        assert float(v.grad) == pytest.approx(2 * 0.5 * (0.5 - 1.5))
        # policy gradient: -A * (a - mu) / sigma^2
        assert mu.grad == pytest.approx(-1.0 * 0.1 / 0.04 * np.ones(4))


class TestCheckpoint:
    def test_round_trip_outputs(self, tmp_path):
        net = PolicyValueNet.create(ModelConfig(), 7)
        net.meta = {"episodes": "12", "t_hat": "16"}
        digest = save_checkpoint(net, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt")
        assert back.cfg == net.cfg and back.meta == net.meta
        obs = obs_for(net.cfg)
        assert net.forward(obs, net.initial_state())[:2] == back.forward(obs, back.initial_state())[:2]
        assert digest == checkpoint_digest(back) == checkpoint_digest(net)

    def test_corruptions(self):
        raw = encode_checkpoint(PolicyValueNet.create(TINY, 0))
        with pytest.raises(CheckpointError):
            decode_checkpoint(b"XXXX" + raw[4:])
        with pytest.raises(CheckpointError):
            decode_checkpoint(raw[:4] + struct.pack("<I", 2) + raw[8:])
        with pytest.raises(CheckpointError):
            decode_checkpoint(raw[:-5])
        with pytest.raises(CheckpointError):
            decode_checkpoint(raw + b"\0")

    def test_load_into_config_mismatch(self, tmp_path):
        save_checkpoint(PolicyValueNet.create(TINY, 0), tmp_path / "t.ckpt")
        net = PolicyValueNet.create(replace(TINY, lstm_width=5), 0)
        with pytest.raises(CheckpointError):
            load_into(net, tmp_path / "t.ckpt")
        good = PolicyValueNet.create(TINY, 9)
        load_into(good, tmp_path / "t.ckpt")
        assert np.array_equal(good.params["lstm.w"], init_parameters(TINY, 0)["lstm.w"])
