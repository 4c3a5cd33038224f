"""Scenario files: one canonical, versioned description of a run.

A scenario bundles everything a run needs — field rules, noise, module
configs, strategy profiles, seeds, and the run mode — so that a match,
a batch evaluation, or a subsystem test is reproducible from one file
plus nothing else. Serialization is canonical JSON (sorted keys, fixed
indent), so load -> save -> load is byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .behavior import PRESETS, StrategyProfile
from .field import Pose2D, RuleConfig
from .localization import ClapConfig
from .match import BallDynamics, MatchEngine
from .navigation.types import MpcConfig
from .perception import NoiseModel
from .proximity import ProximityConfig

SCHEMA_VERSION = 1
RUN_MODES = ("match", "batch_eval", "subsystem_test")
SUBSYSTEMS = ("localization", "navigation", "kick", "proximity", "strategy", "all")

# batch-evaluation matches are deliberately short: enough simulated play for
# strategy differences to express while a 200-match batch stays inside a
# desktop-core time budget
EVAL_RULES = RuleConfig(
    half_duration_s=20.0,
    halves=2,
    kickoff_wait_s=3.0,
    free_kick_wait_s=3.0,
    setup_duration_s=2.0,
)


class ScenarioError(ValueError):
    """Malformed scenario file, with enough context to fix it."""

    def __init__(self, message: str, field_path: str | None = None,
                 line: int | None = None, col: int | None = None):
        self.field_path = field_path
        self.line = line
        self.col = col
        where = []
        if line is not None:
            where.append(f"line {line}" + (f", col {col}" if col is not None else ""))
        if field_path:
            where.append(f"field '{field_path}'")
        prefix = f"[{'; '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")


def _profile_from_entry(entry, field_path: str) -> StrategyProfile:
    """A strategy entry is either a preset name or an inline profile."""
    if isinstance(entry, str):
        if entry not in PRESETS:
            raise ScenarioError(
                f"unknown preset {entry!r}; known: {sorted(PRESETS)}", field_path
            )
        return PRESETS[entry]
    if isinstance(entry, dict):
        try:
            return StrategyProfile.from_dict(entry)
        except TypeError as e:
            raise ScenarioError(f"bad inline profile: {e}", field_path) from None
    raise ScenarioError("expected a preset name or an inline profile", field_path)


def _profile_entry(profile: StrategyProfile):
    """Canonical form: preset name when the profile is exactly a preset."""
    preset = PRESETS.get(profile.name)
    if preset is not None and preset == profile:
        return profile.name
    return profile.to_dict()


@dataclass
class Scenario:
    name: str
    mode: str = "match"
    rules: RuleConfig = dc_field(default_factory=RuleConfig)
    noise: NoiseModel = dc_field(default_factory=NoiseModel)
    dynamics: BallDynamics = dc_field(default_factory=BallDynamics)
    mpc: MpcConfig = dc_field(default_factory=lambda: MpcConfig(horizon=6, dt=0.12))
    clap: ClapConfig = dc_field(default_factory=ClapConfig)
    proximity: ProximityConfig = dc_field(default_factory=ProximityConfig)
    strategy_a: StrategyProfile = dc_field(default_factory=lambda: PRESETS["shoot_on_goal"])
    strategy_b: StrategyProfile = dc_field(default_factory=lambda: PRESETS["shoot_on_goal"])
    seeds: list[int] = dc_field(default_factory=lambda: [0])
    subsystem: str = "all"  # only read in subsystem_test mode
    frozen_teams: tuple[int, ...] = ()
    ball: tuple[float, float] | None = None  # initial ball override
    poses: list[tuple[float, float, float]] | None = None  # initial pose override

    def __post_init__(self):
        if self.mode not in RUN_MODES:
            raise ScenarioError(f"mode must be one of {RUN_MODES}", "mode")
        if not self.seeds:
            raise ScenarioError("seed list must be non-empty", "seeds")
        if self.subsystem not in SUBSYSTEMS:
            raise ScenarioError(f"subsystem must be one of {SUBSYSTEMS}", "subsystem")

    # -------------------------------------------------------- construction

    def build_engine(self, seed: int | None = None) -> MatchEngine:
        eng = MatchEngine(
            self.strategy_a,
            self.strategy_b,
            rules=self.rules,
            seed=self.seeds[0] if seed is None else seed,
            dynamics=self.dynamics,
            noise=self.noise,
            mpc=self.mpc,
            clap=self.clap,
            frozen_teams=self.frozen_teams,
        )
        if self.ball is not None:
            eng.place_ball(np.array(self.ball, dtype=float))
        if self.poses is not None:
            for player, p in zip(eng.players, self.poses):
                eng.place_player(player.index, Pose2D(*map(float, p)))
        return eng

    # -------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "mode": self.mode,
            "rules": self.rules.to_dict(),
            "noise": self.noise.to_dict(),
            "dynamics": self.dynamics.to_dict(),
            "mpc": self.mpc.to_dict(),
            "clap": self.clap.to_dict(),
            "proximity": self.proximity.to_dict(),
            "strategy_a": _profile_entry(self.strategy_a),
            "strategy_b": _profile_entry(self.strategy_b),
            "seeds": list(self.seeds),
            "subsystem": self.subsystem,
            "frozen_teams": list(self.frozen_teams),
        }
        if self.ball is not None:
            d["ball"] = [float(self.ball[0]), float(self.ball[1])]
        if self.poses is not None:
            d["poses"] = [[float(x), float(y), float(t)] for x, y, t in self.poses]
        return d

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ScenarioError(
                f"schema_version {version!r} unsupported (expected {SCHEMA_VERSION})",
                "schema_version",
            )
        def section(key, loader, default):
            if key not in d:
                return default()
            try:
                return loader(d[key])
            except ScenarioError:
                raise
            except (TypeError, ValueError, KeyError) as e:
                raise ScenarioError(str(e), key) from None
        try:
            name = d["name"]
        except KeyError:
            raise ScenarioError("missing required field", "name") from None
        return Scenario(
            name=name,
            mode=d.get("mode", "match"),
            rules=section("rules", RuleConfig.from_dict, RuleConfig),
            noise=section("noise", NoiseModel.from_dict, NoiseModel),
            dynamics=section("dynamics", BallDynamics.from_dict, BallDynamics),
            mpc=section("mpc", MpcConfig.from_dict, lambda: MpcConfig(horizon=6, dt=0.12)),
            clap=section("clap", ClapConfig.from_dict, ClapConfig),
            proximity=section("proximity", ProximityConfig.from_dict, ProximityConfig),
            strategy_a=_profile_from_entry(d.get("strategy_a", "shoot_on_goal"), "strategy_a"),
            strategy_b=_profile_from_entry(d.get("strategy_b", "shoot_on_goal"), "strategy_b"),
            seeds=[int(s) for s in d.get("seeds", [0])],
            subsystem=d.get("subsystem", "all"),
            frozen_teams=tuple(int(t) for t in d.get("frozen_teams", [])),
            ball=None if d.get("ball") is None else (float(d["ball"][0]), float(d["ball"][1])),
            poses=None if d.get("poses") is None else [
                (float(p[0]), float(p[1]), float(p[2])) for p in d["poses"]
            ],
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.canonical_json())

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as f:
            text = f.read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioError(e.msg, None, e.lineno, e.colno) from None
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        return Scenario.from_dict(d)


# ------------------------------------------------------------------ builtins

def _eval_seeds(n: int) -> list[int]:
    return list(range(n))


def builtin(name: str) -> Scenario:
    """Named scenarios shipped with the package; `resolve` prefers files."""
    if name == "basic":
        return Scenario(name="basic", mode="match")
    if name == "quick":
        return Scenario(name="quick", mode="match", rules=EVAL_RULES)
    if name == "eval_away":
        return Scenario(
            name="eval_away", mode="batch_eval", rules=EVAL_RULES,
            strategy_a=PRESETS["kick_away_from_opponents"],
            strategy_b=PRESETS["shoot_on_goal"], seeds=_eval_seeds(200),
        )
    if name == "eval_pass":
        return Scenario(
            name="eval_pass", mode="batch_eval", rules=EVAL_RULES,
            strategy_a=PRESETS["kick_closest_to_goal"],
            strategy_b=PRESETS["shoot_on_goal"], seeds=_eval_seeds(200),
        )
    if name == "eval_mirror":
        return Scenario(
            name="eval_mirror", mode="batch_eval", rules=EVAL_RULES,
            strategy_a=PRESETS["shoot_on_goal"],
            strategy_b=PRESETS["shoot_on_goal"], seeds=_eval_seeds(500),
        )
    if name in SUBSYSTEMS:
        return Scenario(name=name, mode="subsystem_test", subsystem=name)
    raise ScenarioError(f"no builtin scenario {name!r}; known: {builtin_names()}")


def builtin_names() -> list[str]:
    return ["basic", "quick", "eval_away", "eval_pass", "eval_mirror", *SUBSYSTEMS]


def resolve(ref: str) -> Scenario:
    """A CLI scenario argument: an existing file path wins, else a builtin."""
    import os

    if os.path.exists(ref):
        return Scenario.load(ref)
    if ref.endswith(".scn"):
        raise ScenarioError(f"scenario file not found: {ref}")
    return builtin(ref)
