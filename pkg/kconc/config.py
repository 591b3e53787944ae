import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from kconc.errors import MissingFileError
from kconc.models import SyntheticSpec, TrainConfig


class Settings(BaseSettings):
    """Process settings. Only log verbosity comes from the environment."""

    model_config = SettingsConfigDict(env_prefix="KCONC_", env_file=".env", extra="ignore")

    log_level: str = "INFO"


# Global instance
settings = Settings()


class BenchSettings(BaseModel):
    """Overrides used by ``bench``: at desk scale lr=0.001 barely moves the model within the step budget.

    ``use_bias`` switches biases on for every bench network, teachers included.
    Budgets still count weights only.
    """

    learning_rate: float = Field(0.05, ge=0)
    epochs: int = Field(40, ge=1)
    teacher_epochs: int = Field(40, ge=1)
    use_bias: bool = True
    generic_sizes: List[int] = [0, 2, 4, 6, 8]


class RunConfig(BaseModel):
    out_dir: Path = Path("runs/default")
    taxonomy_path: Optional[Path] = None
    dataset_path: Optional[Path] = None
    soft_targets_path: Optional[Path] = None
    experiment_label: str = "student"
    workers: int = Field(1, ge=1)
    data: SyntheticSpec = SyntheticSpec()
    train: TrainConfig = TrainConfig()
    bench: BenchSettings = BenchSettings()

    @property
    def taxonomy_file(self) -> Path:
        return self.taxonomy_path or self.out_dir / "taxonomy.jsonl"

    @property
    def dataset_file(self) -> Path:
        return self.dataset_path or self.out_dir / "dataset.jsonl"

    @property
    def soft_targets_file(self) -> Path:
        return self.soft_targets_path or self.out_dir / "soft_targets.jsonl"

    def teacher_file(self, vertical_id: int) -> Path:
        return self.out_dir / "teachers" / f"vertical-{vertical_id}.ckpt"

    def checkpoint_file(self, label: str) -> Path:
        return self.out_dir / "checkpoints" / f"{label}.ckpt"

    def curve_file(self, label: str) -> Path:
        return self.out_dir / "curves" / f"{label}.csv"


def _deep_merge(base: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """Defaults, then the JSON file, then flag overrides (nested dicts)."""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise MissingFileError(f"config file not found: {path}")
        data = json.loads(path.read_text())
    return RunConfig.model_validate(_deep_merge(data, overrides or {}))
