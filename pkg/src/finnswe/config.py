"""Layered run configuration.

Resolution order, later layers win::

    built-in defaults  <-  config file (``key = value`` lines)  <-  ``--set key=value`` flags

Keys are dotted (``sim.cfl``, ``infer.lambda_smooth``). Unknown keys and
unparsable values raise ConfigError. ``none`` selects the derived value for
optional keys (e.g. ``sim.dt_s = none`` derives the step from the CFL bound).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, SweError
from .evaluation import ExperimentConfig
from .finn import DEFAULT_HIDDEN
from .inversion import InverseConfig
from .scenario import SIGMA_M
from .swe import DEFAULT_DURATION_S, Grid, SimConfig
from .topography import ARCTAN_AMPLITUDE_M, ARCTAN_STEEPNESS
from .training import TrainConfig


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(text: str):
        return None if text.lower() == "none" else parse(text)
    return inner


def _choice(*options: str) -> Callable[[str], str]:
    def inner(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return inner


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any


KEYS: list[Key] = [
    Key("sim.nx", int, 32),
    Key("sim.ny", int, 32),
    Key("sim.side_length_m", float, 1.0e6),
    Key("sim.g_m_s2", float, 9.81),
    Key("sim.cfl", float, 0.7),
    Key("sim.depth_ref_m", float, 100.0),
    Key("sim.duration_s", float, DEFAULT_DURATION_S),
    Key("sim.dt_s", _optional(float), None),
    Key("sim.steps", _optional(int), None),
    Key("sim.sigma_m", float, SIGMA_M),
    Key("topo.amplitude_m", float, ARCTAN_AMPLITUDE_M),
    Key("topo.steepness", float, ARCTAN_STEEPNESS),
    Key("topo.beta", _optional(float), None),
    Key("topo.seed", _optional(int), None),
    Key("train.epochs", int, 100),
    Key("train.batch_size", int, 8),
    Key("train.learning_rate", float, 1e-3),
    Key("train.optimizer", _choice("adam", "sgd"), "adam"),
    Key("train.window", _optional(int), None),
    Key("train.seed", int, 0),
    Key("train.hidden_width", int, DEFAULT_HIDDEN),
    Key("train.clip_norm", float, 1.0),
    Key("train.checkpoint_every", int, 0),
    Key("infer.iterations", int, 1600),
    Key("infer.lambda_smooth", float, 5e-7),
    Key("infer.lambda_edge", float, 5e-7),
    Key("infer.h_init_m", float, 70.0),
    Key("infer.learning_rate", float, 1e-2),
    Key("infer.batch_size", int, 8),
    Key("infer.seed", int, 0),
    Key("infer.clamp_min_m", float, 0.1),
    Key("infer.window", _optional(int), None),
    Key("infer.snapshot_every", int, 0),
    Key("report.n_train", int, 512),
    Key("report.n_infer", int, 256),
    Key("report.n_test", int, 256),
    Key("report.workers", int, 1),
    Key("report.label", str, "FINN"),
]
_BY_NAME = {k.name: k for k in KEYS}


def defaults() -> dict[str, Any]:
    return {k.name: k.default for k in KEYS}


def set_value(conf: dict[str, Any], name: str, text: str, where: str = "") -> None:
    key = _BY_NAME.get(name)
    if key is None:
        raise ConfigError(f"{where}unknown configuration key {name!r}")
    try:
        conf[name] = key.parse(text.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}bad value {text!r} for {name}: {exc}") from None


def parse_assignment(text: str, where: str = "") -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"{where}expected 'key = value', got {text!r}")
    name, value = text.split("=", 1)
    return name.strip(), value.strip()


def load_file(conf: dict[str, Any], path) -> None:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}: "
        set_value(conf, *parse_assignment(line, where), where=where)


def resolve(config_file=None, overrides: list[str] | None = None) -> dict[str, Any]:
    conf = defaults()
    if config_file is not None:
        load_file(conf, config_file)
    for item in overrides or []:
        where = f"--set {item}: "
        set_value(conf, *parse_assignment(item, where), where=where)
    return conf


def format_value(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump(conf: dict[str, Any]) -> str:
    """Every key in declaration order; the output reparses to the same values."""
    return "".join(f"{k.name} = {format_value(conf[k.name])}\n" for k in KEYS)


def _build(factory, **kwargs):
    try:
        return factory(**kwargs)
    except (SweError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def sim_config(conf: dict[str, Any]) -> SimConfig:
    grid = _build(Grid, nx=conf["sim.nx"], ny=conf["sim.ny"], side_length_m=conf["sim.side_length_m"])
    return _build(
        SimConfig, grid=grid, g_m_s2=conf["sim.g_m_s2"], cfl=conf["sim.cfl"],
        depth_ref_m=conf["sim.depth_ref_m"], duration_s=conf["sim.duration_s"],
        dt_s=conf["sim.dt_s"], steps=conf["sim.steps"],
    )


def train_config(conf: dict[str, Any]) -> TrainConfig:
    return _build(
        TrainConfig, epochs=conf["train.epochs"], batch_size=conf["train.batch_size"],
        learning_rate=conf["train.learning_rate"], optimizer=conf["train.optimizer"],
        train_window=conf["train.window"], seed=conf["train.seed"],
        hidden_width=conf["train.hidden_width"], clip_norm=conf["train.clip_norm"],
        checkpoint_every=conf["train.checkpoint_every"],
    )


def infer_config(conf: dict[str, Any]) -> InverseConfig:
    return _build(
        InverseConfig, iterations=conf["infer.iterations"], lambda_smooth=conf["infer.lambda_smooth"],
        lambda_edge=conf["infer.lambda_edge"], h_init_m=conf["infer.h_init_m"],
        learning_rate=conf["infer.learning_rate"], batch_size=conf["infer.batch_size"],
        seed=conf["infer.seed"], clamp_min_m=conf["infer.clamp_min_m"], window=conf["infer.window"],
        snapshot_every=conf["infer.snapshot_every"],
    )


def experiment_config(conf: dict[str, Any]) -> ExperimentConfig:
    return ExperimentConfig(
        sim=sim_config(conf), train=train_config(conf), infer=infer_config(conf),
        n_train=conf["report.n_train"], n_infer=conf["report.n_infer"], n_test=conf["report.n_test"],
        beta=conf["topo.beta"], topo_seed=conf["topo.seed"], label=conf["report.label"],
        sigma_m=conf["sim.sigma_m"], amplitude_m=conf["topo.amplitude_m"], steepness=conf["topo.steepness"],
    )
