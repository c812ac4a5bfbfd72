"""Pipeline configuration.

Config files are flat key = value text (a TOML-compatible subset: comments
with #, quoted strings, ints, floats, booleans).  Unknown keys are rejected
so typos fail loudly.  The environment variable LEXIS_SEED, when set,
overrides the configured master seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

SEED_ENV = "LEXIS_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    keyframe_gate_m: float = 0.5
    odom_info_weight: float = 1.0
    neighbor_metric: str = "euclidean"   # or "temporal"
    refine_c: int = 5                    # neighbors per refinement vote
    refine_every_k: int = 10             # keyframes between refinement rounds
    stair_window: int = 5
    stair_dz_m: float = 0.5
    cluster_radius_m: float = 3.0
    connector_labels: str = "corridor,stairs"
    floor_unify_m: float = 1.0
    max_candidates: int = 5              # 0 = use every node in the cluster
    min_loop_gap: int = 30
    pnp_min_inliers: int = 12
    pnp_reproj_px: float = 2.0
    pnp_ransac_iters: int = 300
    loop_info_weight: float = 1.0
    dcs_phi: float = 1.0
    opt_tol: float = 1e-8
    opt_max_iters: int = 100
    unit_weights: bool = False           # planner edge weights
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ["keyframe_gate_m", "odom_info_weight", "stair_dz_m",
                    "cluster_radius_m", "floor_unify_m", "pnp_reproj_px",
                    "loop_info_weight", "dcs_phi", "opt_tol"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        at_least = {"refine_c": 1, "refine_every_k": 1, "stair_window": 2,
                    "min_loop_gap": 0, "pnp_min_inliers": 3,
                    "pnp_ransac_iters": 1, "opt_max_iters": 1,
                    "max_candidates": 0, "seed": 0}
        for name, low in at_least.items():
            if getattr(self, name) < low:
                raise ConfigError(f"{name} must be >= {low}")
        if self.neighbor_metric not in ("euclidean", "temporal"):
            raise ConfigError(f"unknown neighbor_metric {self.neighbor_metric!r}")

    @property
    def connector_label_set(self) -> tuple[str, ...]:
        return tuple(s.strip() for s in self.connector_labels.split(",") if s.strip())

    def with_env_seed(self) -> "PipelineConfig":
        """Apply the LEXIS_SEED environment override, if present."""
        raw = os.environ.get(SEED_ENV)
        if raw is None:
            return self
        try:
            seed = int(raw)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from e
        cfg = PipelineConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        cfg.seed = seed
        return cfg


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    raise ConfigError(f"cannot parse value {raw!r} (strings need double quotes)")


def parse_config_text(text: str) -> PipelineConfig:
    known = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        value = _parse_value(raw)
        if isinstance(value, int) and not isinstance(value, bool):
            # ints are acceptable for float fields
            default = getattr(PipelineConfig(), key)
            if isinstance(default, float):
                value = float(value)
        values[key] = value
    defaults = PipelineConfig()
    for key, value in values.items():
        expected = type(getattr(defaults, key))
        if not isinstance(value, expected):
            raise ConfigError(
                f"key {key!r} expects {expected.__name__}, got {type(value).__name__}")
    return PipelineConfig(**values)


def load_config(path: Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().with_env_seed()
    return parse_config_text(Path(path).read_text()).with_env_seed()
