import numpy as np
import pytest

from regmarl.config import ExperimentConfig
from regmarl.maddpg import NoiseSchedule, TrainerConfig


@pytest.fixture
def tiny_config_factory(tmp_path):
    """Small, fast experiment configs for harness-level tests."""

    def make(n_agents=1, out_name="run", **over):
        trainer_kwargs = dict(
            n_agents=n_agents,
            batch_size=16,
            buffer_capacity=64,
            iterations=4,
            steps_per_iteration=24,
            epochs_per_iteration=1,
            noise=NoiseSchedule(0.3, 0.0, 0.8),
            seed=9,
        )
        for k in list(over):
            if k in TrainerConfig.__dataclass_fields__:
                trainer_kwargs[k] = over.pop(k)
        trainer = TrainerConfig(**trainer_kwargs)
        priors = [(0.0, 0.6, 0.4), (0.4, 0.6, 0.0)][:n_agents]
        kwargs = dict(
            priors=tuple(tuple(p) for p in priors),
            actor_hidden=(8, 8),
            critic_hidden=(8, 8),
            eval_every=2,
            eval_episodes=2,
            out_dir=str(tmp_path / out_name),
            run_label="tiny",
        )
        kwargs.update(over)
        return ExperimentConfig(trainer=trainer, **kwargs)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(0)
