from .config import ConfigError, ExperimentConfig, load_config
from .runner import (
    ExperimentResult,
    RepeatResult,
    ScanResult,
    ScanSpec,
    run_experiment,
    run_repeat,
    run_scan,
)
from .snapshot import SnapshotError, load_snapshot, save_snapshot
