"""Dataclass configs and the JSON scenario file format.

A scenario file fully determines an experiment: physical constants, node
geometry, Markov channel construction, RL hyperparameters and the
evaluation protocol. CLI flags may override individual keys but never add
new ones. See README for the documented schema.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Scenario file or override does not match the documented schema."""


@dataclass
class NetworkConfig:
    """Static physical constants of the relay network."""

    K: int = 3            # number of candidate relays
    n_s: int = 2          # antennas at the source
    n_d: int = 2          # antennas at the destination
    h_0: float = 1.0      # path-loss constant
    alpha: float = 3.0    # path-loss exponent
    P_0: float = 1e-3     # noise power [W] at relay and destination
    P_max: float = 0.1    # total transmit power budget [W]; P_r = P_max - P_s
    lambda_d: float = 1.0  # destination outage threshold [bits/s/Hz]

    def __post_init__(self):
        for name in ("K", "n_s", "n_d"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"network.{name} must be an integer >= 1, got {v!r}")
        for name in ("h_0", "alpha", "P_0", "P_max", "lambda_d"):
            v = float(getattr(self, name))
            if not v > 0:
                raise ConfigError(f"network.{name} must be > 0, got {v!r}")
            setattr(self, name, v)


@dataclass
class GeometryConfig:
    """Node placement: source at the origin, destination on the x-axis,
    per-relay candidate locations jittered uniformly in a box."""

    source_destination_distance: float = 6.0
    box_x: tuple[float, float] = (1.5, 4.5)
    box_y: tuple[float, float] = (-1.5, 1.5)
    locations_per_relay: int = 5   # L candidate locations per relay
    train_locations: int = 3       # first indices used for training
    seed: int = 2024               # placement seed, part of the scenario

    def __post_init__(self):
        self.box_x = tuple(float(v) for v in self.box_x)
        self.box_y = tuple(float(v) for v in self.box_y)
        if self.locations_per_relay < 1:
            raise ConfigError("geometry.locations_per_relay must be >= 1")
        if not 1 <= self.train_locations <= self.locations_per_relay:
            raise ConfigError("geometry.train_locations must be in [1, locations_per_relay]")
        if self.box_x[0] >= self.box_x[1] or self.box_y[0] >= self.box_y[1]:
            raise ConfigError("geometry box bounds must satisfy lo < hi")


@dataclass
class ThresholdConfig:
    """Per-relay decode-threshold candidate sets, drawn uniformly from
    [low, high]. candidates=1 pins every relay to `low`."""

    candidates: int = 1      # J candidate thresholds per relay
    low: float = 1.0
    high: float = 1.0
    train_candidates: int = 1
    seed: int = 77

    def __post_init__(self):
        if self.candidates < 1:
            raise ConfigError("thresholds.candidates must be >= 1")
        if not 1 <= self.train_candidates <= self.candidates:
            raise ConfigError("thresholds.train_candidates must be in [1, candidates]")
        if self.low <= 0 or self.high < self.low:
            raise ConfigError("thresholds require 0 < low <= high")


@dataclass
class MarkovConfig:
    """Finite-state Markov channel construction."""

    states: int = 8            # M quantization states per link
    rho: float = 0.9           # Gauss-Markov temporal correlation
    sample_budget: int = 200_000
    seed: int = 501            # build seed, part of the scenario

    def __post_init__(self):
        if self.states < 2:
            raise ConfigError("markov.states must be >= 2")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("markov.rho must be in [0, 1)")
        if self.sample_budget < 10_000:
            raise ConfigError("markov.sample_budget must be >= 10000")


@dataclass
class PpoConfig:
    """Hyperparameters for the PPO-based trainers (robust and vanilla)."""

    gamma: float = 0.9
    kappa: float = 0.2       # clip width of the probability ratio
    zeta: float = 1.0        # distance-penalty constant in the robust filter
    epochs: int = 4          # optimization epochs per accepted parameter
    u_max: int = 300         # training episodes
    m_max: int = 8           # environment parameters sampled per episode
    l_max: int = 8           # rollout trials per parameter
    t_max: int = 50          # time slots per trial
    lr_actor: float = 0.001
    lr_critic: float = 0.005
    max_grad_norm: float = 0.5  # global gradient-norm clip for both networks
    target_kl: float = 0.02     # stop an update's epoch loop once the
                                # approximate KL to the old actor exceeds this
    min_std_relay: float = 0.25  # exploration floor on the relay head std
    min_std_power: float = 0.02  # exploration floor on the power head std [W]

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("rl.gamma must be in [0, 1)")
        if not 0.0 < self.kappa < 1.0:
            raise ConfigError("rl.kappa must be in (0, 1)")
        if self.zeta < 0:
            raise ConfigError("rl.zeta must be >= 0")
        for name in ("epochs", "u_max", "m_max", "l_max", "t_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"rl.{name} must be >= 1")


@dataclass
class DqnConfig:
    power_levels: int = 5    # interior grid over (0, P_max)
    lr: float = 0.005
    buffer_size: int = 20_000
    batch_size: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6  # fraction of total steps over which eps decays
    target_sync: int = 200       # hard target-network sync period (updates)
    update_every: int = 4        # environment steps per gradient update
    warmup: int = 500            # buffer size before updates start
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if self.power_levels < 2:
            raise ConfigError("dqn.power_levels must be >= 2")


@dataclass
class DdpgConfig:
    tau: float = 0.005       # soft target update rate
    lr_actor: float = 0.001
    lr_critic: float = 0.005
    buffer_size: int = 20_000
    batch_size: int = 64
    noise_relay: float = 0.5     # exploration noise std on the raw relay output
    noise_power: float = 0.02    # exploration noise std on the raw power output [W]
    update_every: int = 4
    warmup: int = 500
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("ddpg.tau must be in (0, 1]")


@dataclass
class EvalProtocol:
    """Frozen-model evaluation over the full grid (seen + unseen)."""

    episodes: int = 100          # test episodes per evaluation
    train_eval_points: int = 20  # evaluation snapshots recorded during training
    train_eval_episodes: int = 2
    mode: str = "mean"           # "mean": act at the policy mean; "sample": stochastic

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("protocol.episodes must be >= 1")
        if self.mode not in ("mean", "sample"):
            raise ConfigError("protocol.mode must be 'mean' or 'sample'")


@dataclass
class EnvConfig:
    outage_mode: str = "or"      # "or": conventional DF outage; "and": joint event
    obs_encoding: str = "onehot"  # "onehot" or "index" per-link state encoding

    def __post_init__(self):
        if self.outage_mode not in ("or", "and"):
            raise ConfigError("env.outage_mode must be 'or' or 'and'")
        if self.obs_encoding not in ("onehot", "index"):
            raise ConfigError("env.obs_encoding must be 'onehot' or 'index'")


@dataclass
class ScenarioConfig:
    name: str = "default"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    markov: MarkovConfig = field(default_factory=MarkovConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    rl: PpoConfig = field(default_factory=PpoConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    protocol: EvalProtocol = field(default_factory=EvalProtocol)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


_SECTIONS = {f.name: f.type for f in fields(ScenarioConfig) if f.name != "name"}


def _build_section(cls, section: str, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section '{section}': {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        f = known[key]
        if f.type == "int" and isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    classes = {
        "network": NetworkConfig, "geometry": GeometryConfig,
        "thresholds": ThresholdConfig, "markov": MarkovConfig,
        "env": EnvConfig, "rl": PpoConfig, "dqn": DqnConfig,
        "ddpg": DdpgConfig, "protocol": EvalProtocol,
    }
    unknown = set(data) - set(classes) - {"name"}
    if unknown:
        raise ConfigError(f"unknown scenario section(s): {sorted(unknown)}")
    kwargs = {"name": data.get("name", "unnamed")}
    for section, cls in classes.items():
        section_data = data.get(section, {})
        if not isinstance(section_data, dict):
            raise ConfigError(f"scenario section '{section}' must be an object")
        kwargs[section] = _build_section(cls, section, section_data)
    return ScenarioConfig(**kwargs)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply `section.key=value` overrides to a raw scenario dict.

    Values are parsed as JSON literals, falling back to bare strings.
    """
    out = json.loads(json.dumps(data))  # deep copy
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw_value = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key must be section.key, got {dotted!r}")
        section, key = parts
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        out.setdefault(section, {})[key] = value
    return out
