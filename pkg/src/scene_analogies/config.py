"""Pipeline-wide configuration: one dataclass bundling every stage's knobs.

Loaded from a JSON config file with strict key checking (unknown keys are
rejected with their path), merged over defaults, and embedded verbatim in
every output artifact for reproducibility.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from dataclasses import field as _field

from .feature_field import FieldConfig
from .fine_align import OptimConfig
from .graph_matcher import AffinityConfig


@dataclass(frozen=True)
class PipelineConfig:
    edge_threshold: float = 1.5
    affinity: AffinityConfig = _field(default_factory=AffinityConfig)
    cluster_eps: float = 0.75
    cluster_min_pts: int = 2
    field: FieldConfig = _field(default_factory=FieldConfig)
    optim: OptimConfig = _field(default_factory=OptimConfig)
    tps_lambda: float = 1e-3
    tps_max_control_points: int = 2000
    eval_thresholds: tuple[float, ...] = (0.15, 0.20, 0.25)
    grid_resolution: float = 0.05
    grid_inflation: float = 0.15
    grid_margin: float = 0.5
    waypoint_stride: float = 1.0

    def validate(self) -> None:
        if self.edge_threshold <= 0:
            raise ValueError("edge_threshold must be positive")
        self.affinity.validate()
        if self.cluster_eps <= 0:
            raise ValueError("cluster_eps must be positive")
        if self.cluster_min_pts < 1:
            raise ValueError("cluster_min_pts must be >= 1")
        self.field.validate()
        self.optim.validate()
        if self.tps_lambda < 0:
            raise ValueError("tps_lambda must be >= 0")
        if self.tps_max_control_points < 4:
            raise ValueError("tps_max_control_points must be >= 4")
        if not self.eval_thresholds or any(t <= 0 for t in self.eval_thresholds):
            raise ValueError("eval_thresholds must be positive")
        for name in ("grid_resolution", "waypoint_stride"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.grid_inflation < 0 or self.grid_margin < 0:
            raise ValueError("grid_inflation and grid_margin must be >= 0")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["eval_thresholds"] = list(self.eval_thresholds)
        return out


_NESTED = {"affinity": AffinityConfig, "field": FieldConfig, "optim": OptimConfig}


def config_from_dict(doc: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    """Merge a (possibly partial) dict over `base`; unknown keys are errors."""
    if base is None:
        base = PipelineConfig()
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    updates: dict = {}
    for key, value in doc.items():
        if key not in known:
            raise ValueError(f"unknown config key '{key}'")
        if key in _NESTED:
            cls = _NESTED[key]
            if not isinstance(value, dict):
                raise ValueError(f"config key '{key}' must be an object")
            sub_known = {f.name for f in fields(cls)}
            sub_updates = {}
            for sub_key, sub_value in value.items():
                if sub_key not in sub_known:
                    raise ValueError(f"unknown config key '{key}.{sub_key}'")
                sub_updates[sub_key] = sub_value
            updates[key] = replace(getattr(base, key), **sub_updates)
        elif key == "eval_thresholds":
            updates[key] = tuple(float(t) for t in value)
        else:
            updates[key] = value
    cfg = replace(base, **updates)
    cfg.validate()
    return cfg
