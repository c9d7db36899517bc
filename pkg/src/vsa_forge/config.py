"""Accelerator instance parameters and the default energy table."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .hdc import ConfigError

KB = 1024

# Abstract energy units per stage activation per tile.  Memory access and the
# integer datapath dominate; binary XOR/popcount logic is cheap.
DEFAULT_STAGE_ENERGY = {
    "MEM": 4.0,
    "GEN": 1.5,
    "BIND": 1.0,
    "MUL": 2.5,
    "BND": 3.0,
    "SGN": 1.5,
    "DC": 1.5,
}
DEFAULT_LEAKAGE = 1.5  # per active tile per cycle


@dataclass(frozen=True)
class AccConfig:
    name: str = "custom"
    fold_width: int = 512  # W
    tiles: int = 2  # K
    ca90_rf_regs: int = 2  # R
    bnd_rf_regs: int = 2  # B
    dsum_regs: int = 2  # D register count
    distance_bits: int = 12  # C
    bnd_bits: int = 8  # H
    memory_capacity: int = 128 * KB
    stage_energy: dict = field(default_factory=lambda: dict(DEFAULT_STAGE_ENERGY))
    leakage: float = DEFAULT_LEAKAGE
    active_tile_mask: int | None = None  # None: all tiles on

    def __post_init__(self):
        for key in ("fold_width", "tiles", "ca90_rf_regs", "bnd_rf_regs", "dsum_regs",
                    "distance_bits", "bnd_bits", "memory_capacity"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.memory_capacity % self.tiles:
            raise ConfigError("memory capacity must split evenly across tiles")
        if self.active_tile_mask is not None:
            if self.active_tile_mask == 0:
                raise ConfigError("tile mask activates no tiles")
            if self.active_tile_mask >> self.tiles:
                raise ConfigError("tile mask names tiles beyond K")
        missing = set(DEFAULT_STAGE_ENERGY) - set(self.stage_energy)
        if missing:
            raise ConfigError(f"stage_energy lacks {sorted(missing)}")

    @property
    def mask(self) -> int:
        if self.active_tile_mask is None:
            return (1 << self.tiles) - 1
        return self.active_tile_mask

    @property
    def active_tiles(self) -> list[int]:
        return [t for t in range(self.tiles) if self.mask >> t & 1]

    @property
    def num_active(self) -> int:
        return len(self.active_tiles)

    @property
    def tile_capacity(self) -> int:
        return self.memory_capacity // self.tiles

    def with_mask(self, mask: int | None) -> "AccConfig":
        return replace(self, active_tile_mask=mask)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AccConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


def _preset(name: str, k: int) -> AccConfig:
    return AccConfig(name=name, fold_width=512, tiles=k, ca90_rf_regs=k, bnd_rf_regs=k,
                     dsum_regs=k, distance_bits=12, bnd_bits=8, memory_capacity=64 * KB * k)


PRESETS = {
    "acc2": _preset("acc2", 2),
    "acc4": _preset("acc4", 4),
    "acc8": _preset("acc8", 8),
}


def load_config(name_or_path: str) -> AccConfig:
    """Resolve a preset name, a file in $VSA_FORGE_CONFIG_DIR, or a path.

    Files are JSON objects using the AccConfig field names.
    """
    if name_or_path.lower() in PRESETS:
        return PRESETS[name_or_path.lower()]
    candidates = [Path(name_or_path)]
    cfg_dir = os.environ.get("VSA_FORGE_CONFIG_DIR")
    if cfg_dir:
        candidates += [Path(cfg_dir) / name_or_path, Path(cfg_dir) / f"{name_or_path}.json"]
    for p in candidates:
        if p.is_file():
            data = json.loads(p.read_text())
            data.setdefault("name", p.stem)
            return AccConfig.from_dict(data)
    raise FileNotFoundError(f"config not found: {name_or_path}")
