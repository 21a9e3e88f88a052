import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regmarl import maddpg, numcore
from regmarl.maddpg import (
    AgentSpec,
    Batch,
    NoiseSchedule,
    Trainer,
    TrainerConfig,
    actor_loss,
    actor_update,
    batch_from_transitions,
    build_agent_specs,
    critic_target,
    critic_update,
    init_agents,
    prior_penalty,
    select_action,
    soft_update,
)
from regmarl.replay import Transition


def rng_of(seed=0):
    return np.random.default_rng(seed)


def zero_networks(agents):
    """Zero all live and target parameters: actors output uniform, critics 0."""
    for ag in agents:
        for net in (ag.actor, ag.critic, ag.target_actor, ag.target_critic):
            for p in net.parameters():
                p[:] = 0.0
    return agents


def tiny_agents(priors=((0.0, 0.6, 0.4),), hidden=(8,), seed=0):
    specs = build_agent_specs(list(priors), hidden, hidden)
    return init_agents(specs, rng_of(seed))


def random_batch(n_agents, m=3, b=6, seed=1):
    r = rng_of(seed)
    return Batch(
        obs=[r.uniform(-5, 5, (b, 2)) for _ in range(n_agents)],
        actions=[r.uniform(0, 1, (b, m)) for _ in range(n_agents)],
        rewards=[r.uniform(-7, 0, b) for _ in range(n_agents)],
        next_obs=[r.uniform(-5, 5, (b, 2)) for _ in range(n_agents)],
        terminal=(r.uniform(size=b) < 0.3).astype(np.float64),
    )


class FixedNoise:
    """rng stub whose normal() returns a preset vector."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def normal(self, loc, scale, size):
        return self.values


class TestAgentSpec:
    def test_prior_must_sum_to_one(self):
        with pytest.raises(ValueError):
            AgentSpec(np.array([0.5, 0.4]), (2, 4, 2), (5, 4, 1))

    def test_prior_entries_in_unit_interval(self):
        with pytest.raises(ValueError):
            AgentSpec(np.array([1.2, -0.2]), (2, 4, 2), (4, 4, 1))

    def test_action_count_matches_prior_length(self):
        spec = AgentSpec(np.array([0.0, 0.6, 0.4]), (2, 8, 3), (5, 8, 1))
        assert spec.action_count == 3

    def test_actor_output_width_must_match(self):
        with pytest.raises(ValueError):
            AgentSpec(np.array([0.5, 0.5]), (2, 4, 3), (4, 4, 1))

    def test_build_specs_dual_agent_critic_width(self):
        specs = build_agent_specs([(0.0, 0.6, 0.4), (0.4, 0.6, 0.0)], (700, 700), (700, 700))
        assert specs[0].actor_layer_sizes == (2, 700, 700, 3)
        assert specs[0].critic_layer_sizes == (8, 700, 700, 1)

    def test_targets_start_as_exact_copies(self):
        agents = tiny_agents()
        for ag in agents:
            for live, tgt in ((ag.actor, ag.target_actor), (ag.critic, ag.target_critic)):
                for lp, tp in zip(live.parameters(), tgt.parameters()):
                    assert np.array_equal(lp, tp)


class TestNoiseSchedule:
    def test_linear_decay_endpoints(self):
        sched = NoiseSchedule(0.5, 0.0, 0.8)
        assert sched.sigma_at(0, 3000) == pytest.approx(0.5)
        assert sched.sigma_at(1200, 3000) == pytest.approx(0.25)
        assert sched.sigma_at(2400, 3000) == 0.0
        assert sched.sigma_at(2999, 3000) == 0.0

    def test_monotone_nonincreasing(self):
        sched = NoiseSchedule(0.5, 0.1, 0.8)
        values = [sched.sigma_at(i, 100) for i in range(100)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert min(values) == pytest.approx(0.1)

    def test_rejects_increasing_schedule(self):
        with pytest.raises(ValueError):
            NoiseSchedule(0.1, 0.5, 0.8)


class TestSelectAction:
    def test_noiseless_is_actor_output_and_argmax(self):
        agents = zero_networks(tiny_agents())
        agents[0].actor.biases[-1][:] = np.log([0.1, 0.3, 0.6])
        vec, executed = select_action(agents[0], np.zeros(2), 0.0, rng_of())
        assert vec == pytest.approx([0.1, 0.3, 0.6])
        assert executed == 2

    def test_tie_breaks_to_lowest_index(self):
        agents = zero_networks(tiny_agents())
        # uniform softmax output -> exact three-way tie
        vec, executed = select_action(agents[0], np.zeros(2), 0.0, rng_of())
        assert executed == 0

    def test_noise_added_then_clipped_then_argmaxed(self):
        agents = zero_networks(tiny_agents())
        agents[0].actor.biases[-1][:] = np.log([0.04, 0.6, 0.36])
        noise = FixedNoise([0.9, 0.0, -0.5])
        vec, executed = select_action(agents[0], np.zeros(2), 0.5, noise)
        assert vec == pytest.approx([0.94, 0.6, 0.0])
        assert executed == 0

    def test_clip_keeps_unit_interval(self):
        agents = tiny_agents(seed=3)
        r = rng_of(4)
        for _ in range(50):
            vec, _ = select_action(agents[0], r.uniform(-5, 5, 2), 0.8, r)
            assert vec.min() >= 0.0 and vec.max() <= 1.0

    def test_rejects_negative_sigma(self):
        agents = tiny_agents()
        with pytest.raises(ValueError):
            select_action(agents[0], np.zeros(2), -0.1, rng_of())


class TestCriticTarget:
    def test_direct_formula(self):
        agents = zero_networks(tiny_agents())
        agents[0].target_critic.biases[-1][:] = -10.0
        batch = random_batch(1)
        batch.rewards[0][:] = -2.0
        batch.terminal[:] = 0.0
        target = critic_target(batch, agents, 0, 0.95)
        assert target == pytest.approx(np.full(batch.size, -11.5))

    def test_terminal_masks_bootstrap(self):
        agents = zero_networks(tiny_agents())
        agents[0].target_critic.biases[-1][:] = -10.0
        batch = random_batch(1)
        batch.rewards[0][:] = 0.0
        batch.terminal[:] = 1.0
        target = critic_target(batch, agents, 0, 0.95)
        assert target == pytest.approx(np.zeros(batch.size))

    def test_mask_disabled_bootstraps_through_terminals(self):
        agents = zero_networks(tiny_agents())
        agents[0].target_critic.biases[-1][:] = -10.0
        batch = random_batch(1)
        batch.rewards[0][:] = 0.0
        batch.terminal[:] = 1.0
        target = critic_target(batch, agents, 0, 0.95, mask_terminal=False)
        assert target == pytest.approx(np.full(batch.size, -9.5))

    def test_gamma_zero_equals_rewards(self):
        agents = tiny_agents(seed=5)
        batch = random_batch(1, seed=6)
        target = critic_target(batch, agents, 0, 0.0)
        assert target == pytest.approx(batch.rewards[0])

    def test_uses_target_networks_not_live(self):
        agents = zero_networks(tiny_agents())
        agents[0].critic.biases[-1][:] = 99.0  # live critic must not matter
        batch = random_batch(1)
        batch.rewards[0][:] = -1.0
        batch.terminal[:] = 0.0
        target = critic_target(batch, agents, 0, 0.95)
        assert target == pytest.approx(np.full(batch.size, -1.0))


class TestCriticUpdate:
    def test_perfect_fit_keeps_parameters(self):
        agents = zero_networks(tiny_agents())
        batch = random_batch(1)
        batch.rewards[0][:] = 0.0
        # Q == 0 == target everywhere -> zero loss, zero gradient
        before = [p.copy() for p in agents[0].critic.parameters()]
        loss = critic_update(batch, agents, 0, 0.06, 0.95)
        assert loss == 0.0
        for b, a in zip(before, agents[0].critic.parameters()):
            assert np.array_equal(b, a)

    def test_single_sample_loss_value(self):
        agents = zero_networks(tiny_agents())
        agents[0].critic.biases[-1][:] = 1.0     # Q == 1
        batch = random_batch(1, b=1)
        batch.rewards[0][:] = 3.0
        batch.terminal[:] = 1.0                  # target == 3
        loss = critic_update(batch, agents, 0, 0.0, 0.95)
        assert loss == pytest.approx(4.0)

    def test_does_not_touch_actor_or_other_agents(self):
        agents = tiny_agents(priors=((0.0, 0.6, 0.4), (0.4, 0.6, 0.0)), seed=7)
        batch = random_batch(2, seed=8)
        snapshot = [
            [p.copy() for p in net.parameters()]
            for ag in agents
            for net in (ag.actor, ag.target_actor, ag.target_critic)
        ] + [[p.copy() for p in agents[1].critic.parameters()]]
        critic_update(batch, agents, 0, 0.06, 0.95)
        flat = [
            list(net.parameters())
            for ag in agents
            for net in (ag.actor, ag.target_actor, ag.target_critic)
        ] + [list(agents[1].critic.parameters())]
        for before, after in zip(snapshot, flat):
            for b, a in zip(before, after):
                assert np.array_equal(b, a)


class TestActorLoss:
    def test_penalty_zero_when_mean_matches_prior(self):
        assert prior_penalty(np.array([0.0, 0.6, 0.4]), np.array([0.0, 0.6, 0.4]), 2.0) == 0.0

    def test_uniform_output_penalty_value(self):
        pen = prior_penalty(
            np.full(3, 1 / 3), np.array([0.0, 0.6, 0.4]), 2.0
        )
        assert pen == pytest.approx(28 / 225, abs=1e-12)

    def test_end_to_end_uniform_actor(self):
        # zero nets: actor outputs uniform for every observation, critic == 0
        agents = zero_networks(tiny_agents())
        batch = random_batch(1)
        loss = actor_loss(batch, agents, 0, 2.0)
        assert loss == pytest.approx(28 / 225, abs=1e-9)

    def test_lambda_zero_reduces_to_neg_mean_q(self):
        agents = tiny_agents(seed=9)
        batch = random_batch(1, seed=10)
        loss = actor_loss(batch, agents, 0, 0.0)
        current = numcore.forward(agents[0].actor, batch.obs[0])[0]
        x = np.concatenate([batch.obs[0], current], axis=1)
        q = numcore.forward(agents[0].critic, x)[0]
        assert loss == pytest.approx(-float(np.mean(q)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_penalty_matches_naive_reimplementation(self, seed):
        r = np.random.default_rng(seed)
        m = int(r.integers(2, 6))
        mean_action = r.uniform(0, 1, m)
        prior = r.uniform(0, 1, m)
        prior /= prior.sum()
        lam = float(r.uniform(0, 5))
        naive = 0.0
        for j in range(m):
            naive += (mean_action[j] - prior[j]) ** 2
        naive *= lam / m
        assert prior_penalty(mean_action, prior, lam) == pytest.approx(naive, abs=1e-12)


class TestActorUpdate:
    def test_zero_gradient_configuration_is_noop(self):
        agents = zero_networks(tiny_agents())
        batch = random_batch(1)
        # critic == 0 everywhere and lam == 0: loss has no gradient, and the
        # uniform actor output also zeroes the softmax jacobian pull
        before = [p.copy() for p in agents[0].actor.parameters()]
        actor_update(batch, agents, 0, 0.04, 0.0)
        for b, a in zip(before, agents[0].actor.parameters()):
            assert np.array_equal(b, a)

    def test_large_lambda_pulls_mean_to_prior(self):
        # lr scaled ~1/lam: the penalty's curvature grows with lam and a
        # fixed-rate SGD step oscillates instead of converging otherwise
        agents = tiny_agents(seed=11)
        batch = random_batch(1, seed=12)
        prior = agents[0].spec.prior
        for _ in range(500):
            actor_update(batch, agents, 0, 1e-5, 1e6)
        mean_out = numcore.forward(agents[0].actor, batch.obs[0])[0].mean(axis=0)
        assert np.abs(mean_out - prior).max() < 0.05

    def test_does_not_touch_critic_or_other_agents(self):
        agents = tiny_agents(priors=((0.0, 0.6, 0.4), (0.4, 0.6, 0.0)), seed=13)
        batch = random_batch(2, seed=14)
        snapshot = [
            [p.copy() for p in net.parameters()]
            for ag in agents
            for net in (ag.critic, ag.target_actor, ag.target_critic)
        ] + [[p.copy() for p in agents[1].actor.parameters()]]
        actor_update(batch, agents, 0, 0.04, 2.0)
        flat = [
            list(net.parameters())
            for ag in agents
            for net in (ag.critic, ag.target_actor, ag.target_critic)
        ] + [list(agents[1].actor.parameters())]
        for before, after in zip(snapshot, flat):
            for b, a in zip(before, after):
                assert np.array_equal(b, a)

    def test_lambda_zero_matches_unregularized_reference(self):
        # reference path: gradients computed with no penalty code at all
        def reference_actor_step(batch, agents, i, lr):
            current = []
            cache_i = None
            for k, ag in enumerate(agents):
                out, cache = numcore.forward(ag.actor, batch.obs[k])
                current.append(out)
                if k == i:
                    cache_i = cache
            x = np.concatenate([batch.obs[i]] + current, axis=1)
            q, ccache = numcore.forward(agents[i].critic, x)
            b = batch.size
            _, dx = numcore.backward(agents[i].critic, ccache, np.full((b, 1), -1.0 / b))
            off = 2 + sum(a.shape[1] for a in current[:i])
            ga = dx[:, off : off + current[i].shape[1]]
            grads, _ = numcore.backward(agents[i].actor, cache_i, ga)
            numcore.sgd_step(agents[i].actor, grads, lr)

        batch = random_batch(2, seed=16)
        a_test = tiny_agents(priors=((0.0, 0.6, 0.4), (0.4, 0.6, 0.0)), seed=15)
        a_ref = tiny_agents(priors=((0.0, 0.6, 0.4), (0.4, 0.6, 0.0)), seed=15)
        for i in range(2):
            actor_update(batch, a_test, i, 0.04, 0.0)
            reference_actor_step(batch, a_ref, i, 0.04)
        for at, ar in zip(a_test, a_ref):
            for pt, pr in zip(at.actor.parameters(), ar.actor.parameters()):
                assert np.array_equal(pt, pr)


class TestSoftUpdate:
    def test_tau_one_copies_exactly(self):
        agents = tiny_agents(seed=17)
        soft_update(agents[0].actor, agents[0].target_actor, 1.0)
        for lp, tp in zip(agents[0].actor.parameters(), agents[0].target_actor.parameters()):
            assert np.array_equal(lp, tp)

    def test_paper_tau_value(self):
        agents = tiny_agents(seed=18)
        live, target = agents[0].actor, agents[0].target_actor
        for p in live.parameters():
            p[:] = 1.0
        for p in target.parameters():
            p[:] = 0.0
        soft_update(live, target, 0.06)
        for p in target.parameters():
            assert p == pytest.approx(np.full_like(p, 0.06))

    def test_fixed_point(self):
        agents = tiny_agents(seed=19)
        live, target = agents[0].critic, agents[0].target_critic
        before = [p.copy() for p in target.parameters()]
        soft_update(live, target, 0.3)  # targets start as copies
        for b, a in zip(before, target.parameters()):
            assert np.allclose(b, a)

    def test_drift_contracts_by_one_minus_tau(self):
        agents = tiny_agents(seed=20)
        live, target = agents[0].actor, agents[0].target_actor
        for p in live.parameters():
            p += 1.0
        gaps = [np.abs(lp - tp).max() for lp, tp in zip(live.parameters(), target.parameters())]
        soft_update(live, target, 0.06)
        for gap, lp, tp in zip(gaps, live.parameters(), target.parameters()):
            assert np.abs(lp - tp).max() == pytest.approx(gap * (1 - 0.06))

    def test_rejects_shape_mismatch(self):
        a = tiny_agents(seed=21)[0].actor
        b = tiny_agents(hidden=(6,), seed=21)[0].actor
        with pytest.raises(ValueError):
            soft_update(a, b, 0.5)

    def test_rejects_tau_out_of_range(self):
        agents = tiny_agents(seed=22)
        for tau in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                soft_update(agents[0].actor, agents[0].target_actor, tau)


class TestGradientChecks:
    def test_critic_gradients_match_finite_differences(self):
        agents = tiny_agents(priors=((0.0, 0.6, 0.4), (0.4, 0.6, 0.0)), hidden=(8, 8), seed=23)
        batch = random_batch(2, b=4, seed=24)
        for i in range(2):
            assert maddpg.critic_gradient_error(batch, agents, i, 0.95) < 1e-4

    def test_actor_gradients_match_finite_differences(self):
        agents = tiny_agents(priors=((0.0, 0.6, 0.4), (0.4, 0.6, 0.0)), hidden=(8, 8), seed=25)
        batch = random_batch(2, b=4, seed=26)
        for i in range(2):
            assert maddpg.actor_gradient_error(batch, agents, i, 2.0) < 1e-4


class TestTrainer:
    def make_config(self, **over):
        defaults = dict(
            n_agents=1,
            batch_size=16,
            buffer_capacity=64,
            iterations=4,
            steps_per_iteration=24,
            epochs_per_iteration=2,
            noise=NoiseSchedule(0.3, 0.0, 0.8),
            seed=5,
        )
        defaults.update(over)
        return TrainerConfig(**defaults)

    def make_trainer(self, **over):
        cfg = self.make_config(**over)
        priors = [(0.0, 0.6, 0.4)] * cfg.n_agents
        specs = build_agent_specs(priors, (8, 8), (8, 8))
        return Trainer(cfg, specs)

    def test_collects_exact_step_count(self):
        tr = self.make_trainer()
        tr.train_iteration(0)
        assert len(tr.buffer) == 24
        tr.train_iteration(1)
        assert len(tr.buffer) == 48

    def test_runs_exact_epoch_count(self):
        tr = self.make_trainer()
        m0 = tr.train_iteration(0)   # buffer 24 >= 16: updates run
        assert m0.epochs_run == 2
        assert len(m0.actor_losses) == 1
        assert m0.actor_losses[0] is not None

    def test_warmup_skips_updates(self):
        tr = self.make_trainer(batch_size=64, steps_per_iteration=10)
        m = tr.train_iteration(0)
        assert m.epochs_run == 0
        assert m.actor_losses[0] is None
        assert m.critic_losses[0] is None

    def test_noop_configuration_leaves_parameters(self):
        tr = self.make_trainer(
            actor_lr=0.0, critic_lr=0.0, lam=0.0,
            noise=NoiseSchedule(0.0, 0.0, 0.8), tau=1.0,
        )
        before = [
            [p.copy() for p in net.parameters()]
            for ag in tr.agents
            for net in (ag.actor, ag.critic)
        ]
        tr.train_iteration(0)
        after = [
            list(net.parameters())
            for ag in tr.agents
            for net in (ag.actor, ag.critic)
        ]
        for bs, as_ in zip(before, after):
            for b, a in zip(bs, as_):
                assert np.array_equal(b, a)

    def test_action_frequencies_are_distributions(self):
        tr = self.make_trainer(n_agents=2)
        m = tr.train_iteration(0)
        for freq in m.action_freqs:
            assert freq is not None
            assert freq.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(freq >= 0)

    def test_train_returns_reported_when_episodes_complete(self):
        tr = self.make_trainer(steps_per_iteration=120)
        m = tr.train_iteration(0)
        assert m.episodes_completed >= 1
        assert m.train_returns[0] is not None
        assert m.train_returns[0] < 0.0

    def test_same_seed_identical_runs(self):
        a = self.make_trainer()
        b = self.make_trainer()
        for it in range(3):
            a.train_iteration(it)
            b.train_iteration(it)
        for ag_a, ag_b in zip(a.agents, b.agents):
            for pa, pb in zip(ag_a.actor.parameters(), ag_b.actor.parameters()):
                assert np.array_equal(pa, pb)

    def test_rejects_spec_count_mismatch(self):
        cfg = self.make_config(n_agents=2)
        specs = build_agent_specs([(0.0, 0.6, 0.4)], (8,), (8,))
        with pytest.raises(ValueError):
            Trainer(cfg, specs)


class TestTrainerConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(gamma=1.5),
            dict(gamma=-0.1),
            dict(tau=0.0),
            dict(tau=1.0001),
            dict(lam=-1.0),
            dict(batch_size=0),
            dict(iterations=0),
            dict(actor_lr=-0.1),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainerConfig(n_agents=1, **kwargs)
