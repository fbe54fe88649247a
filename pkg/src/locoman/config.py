"""Config file family: reward weights, PD gains, command ranges, domain
randomization, and harness defaults, with bit-exact YAML round-trip."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import yaml

from .rewards import PdGains, RewardWeights
from .sampling import CommandRanges, RandomizationConfig


@dataclass(frozen=True)
class TrackingConfig:
    """Kinematic stand-in for the trained policy's tracking behavior."""

    tau_base: float = 0.0        # base velocity first-order lag, seconds
    ee_rate: float = 8.0         # EE exponential convergence rate, 1/s
    noise_pos: float = 0.0       # EE position noise sigma, meters
    noise_ori: float = 0.0       # EE orientation noise sigma, radians

    def to_dict(self) -> dict:
        return {"tau_base": self.tau_base, "ee_rate": self.ee_rate,
                "noise_pos": self.noise_pos, "noise_ori": self.noise_ori}

    @staticmethod
    def from_dict(d: dict) -> "TrackingConfig":
        return TrackingConfig(**d)


@dataclass(frozen=True)
class Config:
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    pd_gains: PdGains = field(default_factory=PdGains)
    gamma_xy: float = 0.25
    gamma_w: float = 0.25
    f_target: float = 2.0
    command_ranges: dict = field(default_factory=lambda: {
        "train": CommandRanges.train(),
        "eval": CommandRanges.eval(),
        "roboduet": CommandRanges.roboduet(),
    })
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)

    def to_dict(self) -> dict:
        return {
            "reward_weights": self.reward_weights.to_dict(),
            "pd_gains": self.pd_gains.to_dict(),
            "gamma_xy": self.gamma_xy,
            "gamma_w": self.gamma_w,
            "f_target": self.f_target,
            "command_ranges": {k: v.to_dict() for k, v in self.command_ranges.items()},
            "randomization": self.randomization.to_dict(),
            "tracking": self.tracking.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Config":
        return Config(
            reward_weights=RewardWeights.from_dict(d["reward_weights"]),
            pd_gains=PdGains.from_dict(d["pd_gains"]),
            gamma_xy=d["gamma_xy"],
            gamma_w=d["gamma_w"],
            f_target=d["f_target"],
            command_ranges={k: CommandRanges.from_dict(v)
                            for k, v in d["command_ranges"].items()},
            randomization=RandomizationConfig.from_dict(d["randomization"]),
            tracking=TrackingConfig.from_dict(d["tracking"]),
        )

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @staticmethod
    def load(path) -> "Config":
        with open(path) as fh:
            return Config.from_dict(yaml.safe_load(fh))

    def digest(self) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()
