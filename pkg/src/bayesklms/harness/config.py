"""Experiment configuration: strict JSON parsing plus shipped presets."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

from ..kernels import gamma_from_divisor, gamma_from_size

SCENARIOS = ("gp_tracking", "poisson_tuning", "logistic_boundary", "steady_state")
ALGORITHMS = ("klms", "fklms", "norma", "qklms", "nlms", "poisson_klms", "bernoulli_klms")

COMPATIBLE = {
    "gp_tracking": {"klms", "fklms", "norma", "qklms", "nlms"},
    "poisson_tuning": {"poisson_klms"},
    "logistic_boundary": {"bernoulli_klms"},
    # linear filters only; a 20000-center expansion per repeat is not desk-scale
    "steady_state": {"klms", "nlms"},
}

FULL_GP_REPEATS = 2000

SCENARIO_DEFAULTS = {
    "gp_tracking": dict(n_steps=1000, gamma=gamma_from_size(0.2), repeats=200,
                        sigma_n2=0.1),
    "poisson_tuning": dict(n_steps=1000, gamma=gamma_from_divisor(100.0), repeats=11,
                           sigma_d2=0.1, lam=1.0),
    "logistic_boundary": dict(n_steps=1000, gamma=gamma_from_divisor(0.1), repeats=11,
                              sigma_d2=6.0, lam=1.0),
    "steady_state": dict(n_steps=20000, repeats=500, sigma_n2=0.01, eta=0.1),
}

# budgets follow the GP tracking experiment; step sizes, forgetting factors and
# diffusion variances are the winners of the preset scan grids in PRESET_GRIDS
ALGORITHM_DEFAULTS = {
    "klms": dict(eta=0.7),
    "fklms": dict(lam=0.95, sigma_d2=0.3, budget=20),
    "norma": dict(lam=0.9, eta=0.9, budget=20),
    "qklms": dict(eta=0.7, eps_q=0.05),
    "nlms": dict(eta=0.5),
    "poisson_klms": dict(lam=1.0),
    "bernoulli_klms": dict(lam=1.0),
}

PRESET_GRIDS = {
    "klms": {"eta": [0.3, 0.5, 0.7, 0.9]},
    "qklms": {"eta": [0.3, 0.5, 0.7, 0.9]},
    "norma": {"eta": [0.3, 0.5, 0.7, 0.9], "lambda": [0.8, 0.9, 0.95, 1.0]},
    "fklms": {"lambda": [0.9, 0.95, 1.0], "sigma_d2": [0.1, 0.3, 1.0]},
}

# JSON key -> dataclass field where they differ
_ALIASES = {"lambda": "lam"}
_REVERSE = {v: k for k, v in _ALIASES.items()}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    scenario: str
    algorithm: str
    run_id: str = "run"
    n_steps: int | None = None
    gamma: float | None = None
    lam: float | None = None
    sigma_d2: float | None = None
    sigma_n2: float | None = None
    eta: float | None = None
    eps_q: float | None = None
    budget: int | None = None
    prune_threshold: float | None = None
    repeats: int | None = None
    base_seed: int = 0
    output: str | None = None
    dim: int = 8
    sigma_q2: float = 0.0
    snr_db: float = 10.0
    asymptotic_start: int | None = None
    asymptotic_window: int | None = None
    probes: int = 500
    workers: int = 1
    write_steps: bool = True
    save_snapshots: bool = False

    def resolved(self) -> "ExperimentConfig":
        """Copy with scenario/algorithm presets filled in and everything validated."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.algorithm not in COMPATIBLE[self.scenario]:
            raise ConfigError(
                f"algorithm {self.algorithm!r} is incompatible with scenario {self.scenario!r}"
            )
        cfg = dataclasses.replace(self)
        presets = {**ALGORITHM_DEFAULTS[self.algorithm], **SCENARIO_DEFAULTS[self.scenario]}
        for k, v in presets.items():
            if getattr(cfg, k) is None:
                setattr(cfg, k, v)
        if cfg.lam is None:
            cfg.lam = 1.0
        if cfg.sigma_d2 is None:
            cfg.sigma_d2 = 1.0
        if cfg.sigma_n2 is None:
            cfg.sigma_n2 = 1.0
        if cfg.gamma is None:
            cfg.gamma = 1.0
        n = cfg.n_steps
        if cfg.scenario == "steady_state":
            start, window = n - n // 5, n // 5
        else:
            start, window = 200, 800
        if start + window > n or window < 1:
            # short runs: score everything after the first fifth
            start, window = n // 5, n - n // 5
        if cfg.asymptotic_start is None:
            cfg.asymptotic_start = start
        if cfg.asymptotic_window is None:
            cfg.asymptotic_window = n - cfg.asymptotic_start if n > cfg.asymptotic_start else window
        cfg._validate()
        return cfg

    def _validate(self):
        def positive(name, integer=False):
            v = getattr(self, name)
            if v is None:
                return
            bad = not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v)
            if integer and not isinstance(v, int):
                bad = True
            if bad or v <= 0:
                raise ConfigError(f"{_REVERSE.get(name, name)} must be a positive "
                                  f"{'integer' if integer else 'number'}, got {v!r}")

        for name in ("n_steps", "repeats", "budget", "dim", "probes", "workers"):
            positive(name, integer=True)
        for name in ("gamma", "sigma_d2", "sigma_n2", "eta", "eps_q"):
            positive(name)
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.algorithm == "klms" and not 0.0 < self.eta < 1.0:
            raise ConfigError(f"klms eta must lie in (0, 1), got {self.eta}")
        if self.algorithm == "nlms" and not 0.0 < self.eta < 2.0:
            raise ConfigError(f"nlms eta must lie in (0, 2), got {self.eta}")
        if self.prune_threshold is not None and self.prune_threshold < 0:
            raise ConfigError("prune_threshold must be non-negative")
        if self.sigma_q2 < 0:
            raise ConfigError("sigma_q2 must be non-negative")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError("base_seed must be a non-negative integer")
        if self.asymptotic_start < 0 or self.asymptotic_window < 1:
            raise ConfigError("invalid asymptotic window")
        if self.asymptotic_start + self.asymptotic_window > self.n_steps:
            raise ConfigError(
                f"asymptotic window [{self.asymptotic_start}, "
                f"{self.asymptotic_start + self.asymptotic_window}) exceeds n_steps={self.n_steps}"
            )

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            d[_REVERSE.get(f.name, f.name)] = getattr(self, f.name)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = _ALIASES.get(key, key)
            if name not in names or key in _REVERSE:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        for required in ("scenario", "algorithm"):
            if required not in kwargs:
                raise ConfigError(f"missing required config key {required!r}")
        return cls(**kwargs)

    def with_param(self, name: str, value) -> "ExperimentConfig":
        field_name = _ALIASES.get(name, name)
        if field_name not in {f.name for f in dataclasses.fields(self)}:
            raise ConfigError(f"unknown parameter {name!r}")
        return dataclasses.replace(self, **{field_name: value})


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)
