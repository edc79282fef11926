"""Service configuration: a flat key = value text format covering the
server, sampler, trainer, and feature settings, with environment overrides
for port and data directory."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .critic import TrainerConfig
from .errors import ConfigError
from .features import MfccSettings
from .patterns import PerturbParams
from .sampler import SamplerConfig
from .session import SessionConfig

ENV_PORT = "DRUMCRITIC_PORT"
ENV_DATA_DIR = "DRUMCRITIC_DATA_DIR"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    library_dir: str = ""
    data_dir: str = "./data"
    client_dir: str = ""
    seed_policy: str = "random"   # "random" | "fixed"
    fixed_seed: int = 0
    session: SessionConfig = field(default_factory=SessionConfig)

    def __post_init__(self):
        if self.seed_policy not in ("random", "fixed"):
            raise ConfigError(f"seed_policy must be 'random' or 'fixed', got {self.seed_policy!r}")
        if not (0 < self.port < 65536):
            raise ConfigError(f"port out of range: {self.port}")


def simulation_session_config() -> SessionConfig:
    """Profile used by the simulation CLI when no config file is given.

    Tuned for proxy runs on CPU: near-identity perturbations keep the
    generator's density spread visible to the proxy through the short
    chains, and the trained critic then acts through the Phase II
    threshold search. See README for the reasoning.
    """
    return SessionConfig(
        sampler=SamplerConfig(
            burn_in_steps=25,
            temperature=1.0,
            phase2_max_steps=500,
            phase2_max_restarts=5,
            perturbation=PerturbParams(cell_flip_prob=0.002, instrument_redraw_prob=0.01),
        ),
        trainer=TrainerConfig(learning_rate=5e-4, epochs_per_increment=3),
        mfcc=MfccSettings(dtype="float32"),
    )


_FLOAT = float
_INT = int
_STR = str
_BOOL = "bool"

# dotted key -> (target, field name, type)
_SCHEMA = {
    "host": ("service", "host", _STR),
    "port": ("service", "port", _INT),
    "library_dir": ("service", "library_dir", _STR),
    "data_dir": ("service", "data_dir", _STR),
    "client_dir": ("service", "client_dir", _STR),
    "seed_policy": ("service", "seed_policy", _STR),
    "fixed_seed": ("service", "fixed_seed", _INT),
    "session.phase1_ratings": ("session", "phase1_ratings", _INT),
    "session.phase2_per_model": ("session", "phase2_per_model", _INT),
    "sampler.burn_in_steps": ("sampler", "burn_in_steps", _INT),
    "sampler.temperature": ("sampler", "temperature", _FLOAT),
    "sampler.phase2_threshold": ("sampler", "phase2_threshold", _FLOAT),
    "sampler.phase2_max_steps": ("sampler", "phase2_max_steps", _INT),
    "sampler.phase2_max_restarts": ("sampler", "phase2_max_restarts", _INT),
    "sampler.cell_flip_prob": ("perturb", "cell_flip_prob", _FLOAT),
    "sampler.instrument_redraw_prob": ("perturb", "instrument_redraw_prob", _FLOAT),
    "trainer.learning_rate": ("trainer", "learning_rate", _FLOAT),
    "trainer.weight_decay": ("trainer", "weight_decay", _FLOAT),
    "trainer.batch_size": ("trainer", "batch_size", _INT),
    "trainer.epochs_per_increment": ("trainer", "epochs_per_increment", _INT),
    "trainer.retrain_epochs": ("trainer", "retrain_epochs", _INT),
    "mfcc.window": ("mfcc", "window", _INT),
    "mfcc.hop": ("mfcc", "hop", _INT),
    "mfcc.n_mels": ("mfcc", "n_mels", _INT),
    "mfcc.n_coeffs": ("mfcc", "n_coeffs", _INT),
    "mfcc.fmin": ("mfcc", "fmin", _FLOAT),
    "mfcc.fmax": ("mfcc", "fmax", _FLOAT),
    "mfcc.dtype": ("mfcc", "dtype", _STR),
}


def parse_config(text: str) -> ServiceConfig:
    """Parse the flat key = value format (# starts a comment)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = value

    buckets = {"service": {}, "session": {}, "sampler": {}, "perturb": {}, "trainer": {}, "mfcc": {}}
    for key, value in raw.items():
        target, name, typ = _SCHEMA[key]
        try:
            buckets[target][name] = typ(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc

    session = SessionConfig(
        sampler=SamplerConfig(
            perturbation=PerturbParams(**buckets["perturb"]), **buckets["sampler"]
        ),
        trainer=TrainerConfig(**buckets["trainer"]),
        mfcc=MfccSettings(**buckets["mfcc"]),
        **buckets["session"],
    )
    return ServiceConfig(session=session, **buckets["service"])


def dump_config(cfg: ServiceConfig) -> str:
    """Render a config so that parse_config(dump_config(cfg)) == cfg."""
    values = {
        "host": cfg.host,
        "port": cfg.port,
        "library_dir": cfg.library_dir,
        "data_dir": cfg.data_dir,
        "client_dir": cfg.client_dir,
        "seed_policy": cfg.seed_policy,
        "fixed_seed": cfg.fixed_seed,
        "session.phase1_ratings": cfg.session.phase1_ratings,
        "session.phase2_per_model": cfg.session.phase2_per_model,
        "sampler.burn_in_steps": cfg.session.sampler.burn_in_steps,
        "sampler.temperature": cfg.session.sampler.temperature,
        "sampler.phase2_threshold": cfg.session.sampler.phase2_threshold,
        "sampler.phase2_max_steps": cfg.session.sampler.phase2_max_steps,
        "sampler.phase2_max_restarts": cfg.session.sampler.phase2_max_restarts,
        "sampler.cell_flip_prob": cfg.session.sampler.perturbation.cell_flip_prob,
        "sampler.instrument_redraw_prob": cfg.session.sampler.perturbation.instrument_redraw_prob,
        "trainer.learning_rate": cfg.session.trainer.learning_rate,
        "trainer.weight_decay": cfg.session.trainer.weight_decay,
        "trainer.batch_size": cfg.session.trainer.batch_size,
        "trainer.epochs_per_increment": cfg.session.trainer.epochs_per_increment,
        "trainer.retrain_epochs": cfg.session.trainer.retrain_epochs,
        "mfcc.window": cfg.session.mfcc.window,
        "mfcc.hop": cfg.session.mfcc.hop,
        "mfcc.n_mels": cfg.session.mfcc.n_mels,
        "mfcc.n_coeffs": cfg.session.mfcc.n_coeffs,
        "mfcc.fmin": cfg.session.mfcc.fmin,
        "mfcc.fmax": cfg.session.mfcc.fmax,
        "mfcc.dtype": cfg.session.mfcc.dtype,
    }
    lines = ["# drumcritic configuration"]
    lines += [f"{key} = {value}" for key, value in values.items()]
    return "\n".join(lines) + "\n"


def load_config(path=None, apply_env: bool = True) -> ServiceConfig:
    """Defaults, optionally overlaid with a config file and env overrides."""
    if path is None:
        cfg = ServiceConfig()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = parse_config(path.read_text())
    if apply_env:
        updates = {}
        if os.environ.get(ENV_PORT):
            try:
                updates["port"] = int(os.environ[ENV_PORT])
            except ValueError as exc:
                raise ConfigError(f"{ENV_PORT} must be an integer") from exc
        if os.environ.get(ENV_DATA_DIR):
            updates["data_dir"] = os.environ[ENV_DATA_DIR]
        if updates:
            cfg = _replace_service(cfg, **updates)
    return cfg


def _replace_service(cfg: ServiceConfig, **updates) -> ServiceConfig:
    from dataclasses import replace

    return replace(cfg, **updates)
