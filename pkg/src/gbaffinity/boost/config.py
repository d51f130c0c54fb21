from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters.

    Defaults follow the tuned leaf-wise configuration (244 leaves, 20
    samples per child, 0.8 feature fraction, no bagging, no L2). Depth is
    unlimited when ``max_depth`` is None; ``max_leaves`` still bounds it.
    ``CATBOOST_LIKE`` is the depth-10 / L2 = 73.47 alternative.
    """

    n_trees: int = 1000
    learning_rate: float = 0.1
    max_depth: Optional[int] = None
    max_leaves: int = 244
    min_child_samples: int = 20
    l2_leaf_reg: float = 0.0
    bagging_fraction: float = 1.0
    bagging_freq: int = 0
    feature_fraction: float = 0.8
    max_bins: int = 255
    early_stopping_rounds: Optional[int] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        for name in ("max_leaves", "min_child_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.bagging_freq < 0:
            raise ValueError("bagging_freq must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if not self.l2_leaf_reg >= 0.0:
            raise ValueError("l2_leaf_reg must be >= 0")
        for name in ("bagging_fraction", "feature_fraction"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        if not 2 <= self.max_bins <= 255:
            raise ValueError("max_bins must be in [2, 255]")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be >= 1 when set")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


LIGHTGBM_LIKE = TrainConfig()
CATBOOST_LIKE = TrainConfig(max_depth=10, max_leaves=1024, l2_leaf_reg=73.47, feature_fraction=1.0)

PRESETS = {"lightgbm": LIGHTGBM_LIKE, "catboost": CATBOOST_LIKE}
