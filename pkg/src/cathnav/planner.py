"""Estimator-style facade over the training stack.

CGAILPlanner holds the hyperparameters as plain constructor attributes (the
scikit-learn convention, so ``get_params`` and ``clone`` work), trains on a
sequence of recorded demonstrations, and then predicts deterministic actions
or rolls out whole episodes in the scenario it was fitted for.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .environment import EpisodeResult
from .errors import ConfigError
from .learning import TrainConfig, load_checkpoint, save_checkpoint, train
from .metrics import MetricsReport, evaluate_episodes
from .scenario import Scenario


class CGAILPlanner(BaseEstimator):
    """Learning-from-demonstrations path planner for one navigation scenario.

    ``fit`` expects a sequence of Demonstration records (the ``X`` argument;
    ``y`` is accepted and ignored so the estimator composes with generic
    tooling). All heavy lifting happens in :func:`cathnav.learning.train`;
    this class only adds the estimator surface and persistence.
    """

    def __init__(
        self,
        scenario: Optional[Scenario] = None,
        rl_weight: float = 0.2,
        gail_weight: float = 0.8,
        bc_fraction: float = 0.7,
        curiosity_weight: float = 0.02,
        max_steps: int = 500_000,
        buffer_size: int = 10_240,
        batch_size: int = 1024,
        update_epochs: int = 3,
        learning_rate: float = 3.0e-4,
        hidden: int = 64,
        seed: int = 0,
        curriculum: bool = True,
    ):
        self.scenario = scenario
        self.rl_weight = rl_weight
        self.gail_weight = gail_weight
        self.bc_fraction = bc_fraction
        self.curiosity_weight = curiosity_weight
        self.max_steps = max_steps
        self.buffer_size = buffer_size
        self.batch_size = batch_size
        self.update_epochs = update_epochs
        self.learning_rate = learning_rate
        self.hidden = hidden
        self.seed = seed
        self.curriculum = curriculum

    # -- training ----------------------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            rl_weight=self.rl_weight,
            gail_weight=self.gail_weight,
            bc_fraction=self.bc_fraction,
            curiosity_weight=self.curiosity_weight,
            max_steps=self.max_steps,
            buffer_size=self.buffer_size,
            batch_size=self.batch_size,
            update_epochs=self.update_epochs,
            learning_rate=self.learning_rate,
            hidden=self.hidden,
            seed=self.seed,
            curriculum=self.curriculum,
        )

    def _require_scenario(self) -> Scenario:
        if self.scenario is None:
            raise ConfigError("planner has no scenario; pass one to the constructor")
        return self.scenario

    def fit(
        self,
        X: Sequence,
        y=None,
        log_path=None,
        checkpoint_path=None,
        init_params: Optional[dict] = None,
    ) -> "CGAILPlanner":
        scenario = self._require_scenario()
        env = scenario.build_env(seed=self.seed)
        result = train(
            env,
            X,
            self._train_config(),
            log_path=log_path,
            checkpoint_path=checkpoint_path,
            checkpoint_meta={"config_hash": scenario.config_hash()},
            init_params=init_params,
        )
        self.policy_ = result.policy
        self.value_net_ = result.value_net
        self.disc_ = result.disc
        self.curiosity_ = result.curiosity
        self.log_rows_ = result.log_rows
        self.curriculum_state_ = result.curriculum_state
        self.env_steps_ = result.env_steps
        self.n_features_in_ = env.observe_dim
        return self

    # -- inference ---------------------------------------------------------

    def predict(self, X) -> np.ndarray:
        """Deterministic (alpha, gamma, dl) rows for a matrix of observations."""
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"expected {self.n_features_in_}-wide observations, got {X.shape[1]}"
            )
        return self.policy_.mean_actions(X, self._require_scenario().catheter)

    def plan(self, seed: Optional[int] = None) -> EpisodeResult:
        """Roll out the deterministic policy once in a fresh environment."""
        check_is_fitted(self, "policy_")
        env = self._require_scenario().build_env(seed=seed)

        def controller(obs, rng):
            return self.policy_.mean_action(obs.vector(), env.active_spec)

        return env.run_episode(controller, np.random.default_rng(seed))

    def rollouts(self, n_episodes: int, seed: int = 0) -> List[EpisodeResult]:
        return [self.plan(seed=seed + i) for i in range(n_episodes)]

    def evaluate(
        self, n_episodes: int = 100, seed: int = 0, desired: Optional[np.ndarray] = None
    ) -> MetricsReport:
        """Aggregate rollout metrics; tracks the scenario centerline by default."""
        scenario = self._require_scenario()
        if desired is None:
            desired = scenario.centerline
        return evaluate_episodes(self.rollouts(n_episodes, seed), desired=desired)

    def score(self, X=None, y=None, n_episodes: int = 20, seed: int = 0) -> float:
        """Fraction of successful rollouts; X and y are ignored."""
        results = self.rollouts(n_episodes, seed)
        return float(np.mean([r.success for r in results]))

    # -- persistence -------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "policy_")
        scenario = self._require_scenario()
        params = {k: v for k, v in self.get_params().items() if k != "scenario"}
        meta = {
            "config_hash": scenario.config_hash(),
            "planner_params": params,
            "env_steps": self.env_steps_,
        }
        return save_checkpoint(
            path, self.policy_, self.value_net_, self.disc_, self.curiosity_, meta
        )

    @classmethod
    def load(cls, path, scenario: Scenario) -> "CGAILPlanner":
        policy, value_net, disc, curiosity, meta = load_checkpoint(
            path, expect_hash=scenario.config_hash()
        )
        planner = cls(scenario=scenario, **meta.get("planner_params", {}))
        planner.policy_ = policy
        planner.value_net_ = value_net
        planner.disc_ = disc
        planner.curiosity_ = curiosity
        planner.log_rows_ = []
        planner.curriculum_state_ = None
        planner.env_steps_ = meta.get("env_steps", 0)
        planner.n_features_in_ = policy.obs_dim
        return planner


def load_planner(path, scenario: Scenario) -> CGAILPlanner:
    """Module-level alias; raises SchemaMismatch on a config hash conflict."""
    return CGAILPlanner.load(path, scenario)


__all__ = ["CGAILPlanner", "load_planner"]
