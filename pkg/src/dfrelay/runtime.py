"""Scenario runtime: the immutable (config, grid, Markov model) bundle
shared by trainers, evaluators and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

from .channel import MarkovChannelModel, build_markov_model
from .config import ScenarioConfig
from .env import ParameterGrid, build_grid, observation_dim


@dataclass
class ScenarioRuntime:
    config: ScenarioConfig
    grid: ParameterGrid
    model: MarkovChannelModel

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.config.network.K, self.model.n_states,
                               self.config.env.obs_encoding)


def build_runtime(config: ScenarioConfig) -> ScenarioRuntime:
    """Build grid and Markov model from the scenario's own seeds, so every
    run of the same scenario interacts with the same environment."""
    grid = build_grid(config.network, config.geometry, config.thresholds)
    model = build_markov_model(config.network, grid.d_sk_cand, grid.d_kd_cand,
                               config.markov.states, config.markov.rho,
                               config.markov.sample_budget, seed=config.markov.seed)
    return ScenarioRuntime(config=config, grid=grid, model=model)
