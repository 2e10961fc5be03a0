"""Experiment configuration: flat INI-style files with one section per
parameter block. Unknown keys and missing required blocks are rejected
before any computation starts."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError

SCENARIOS = ("identify", "decouple-map", "controller-compare", "contact", "bench")


@dataclass(frozen=True)
class PlantBlock:
    units: float = 20.0
    strain_lo: float = -0.172
    strain_hi: float = 0.30


@dataclass(frozen=True)
class ControllerBlock:
    fb_enabled: bool = True
    f_T: float = 3.0
    f_K: float = 1.0
    zeta: float = 1.2
    slew_max: float = 20.0


@dataclass(frozen=True)
class IdentifyBlock:
    noise_std: float = 0.0
    rate: float = 50.0
    qs_duration: float = 240.0
    transient_duration: float = 40.0
    interval_lo: float = 0.0
    interval_hi: float = 0.10
    input_csv: str = ""          # optional measured trajectory (skips synthesis)


@dataclass(frozen=True)
class DecoupleBlock:
    n_grid: int = 41
    dt: float = 5e-4
    units: float = 1.0


@dataclass(frozen=True)
class CompareBlock:
    amplitudes: tuple[float, ...] = (0.5, 1.0, 1.5)
    dt: float = 5e-4
    duration: float = 10.0


@dataclass(frozen=True)
class ContactBlock:
    F_preload: float = 0.5
    B_eff: float = 0.5
    D_imp: float = 3.0
    dt: float = 1e-3
    horizon: float = 5.0
    units: float = 8.0
    K_low: float = 6.0
    K_high: float = 20.0
    alpha_d: float = 25.0
    adaptive_inverted: bool = True
    K_env_soft: float = 5.0
    K_env_rigid: float = 500.0
    D_env: float = 0.5
    theta_contact: float = 0.20
    approach_speed: float = 4.0
    approach_offset: float = 0.05


@dataclass(frozen=True)
class BenchBlock:
    n_ticks: int = 100_000
    n_cold: int = 20_000
    dt: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    seed: int = 0
    out: str = "results"
    plant: PlantBlock = field(default_factory=PlantBlock)
    controller: ControllerBlock = field(default_factory=ControllerBlock)
    identify: IdentifyBlock = field(default_factory=IdentifyBlock)
    decouple: DecoupleBlock = field(default_factory=DecoupleBlock)
    compare: CompareBlock = field(default_factory=CompareBlock)
    contact: ContactBlock = field(default_factory=ContactBlock)
    bench: BenchBlock = field(default_factory=BenchBlock)
    source_text: str = ""

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def canonical_text(self) -> str:
        parts = [f"scenario={self.scenario}", f"seed={self.seed}"]
        for name in ("plant", "controller", "identify", "decouple",
                     "compare", "contact", "bench"):
            block = getattr(self, name)
            for f in fields(block):
                parts.append(f"{name}.{f.name}={getattr(block, f.name)!r}")
        return "\n".join(parts)


_BLOCKS = {
    "plant": PlantBlock,
    "controller": ControllerBlock,
    "identify": IdentifyBlock,
    "decouple": DecoupleBlock,
    "compare": CompareBlock,
    "contact": ContactBlock,
    "bench": BenchBlock,
}

#: Parameter blocks each scenario requires beyond [run].
REQUIRED_BLOCKS = {
    "identify": ("identify",),
    "decouple-map": ("decouple",),
    "controller-compare": ("plant", "controller", "compare"),
    "contact": ("contact", "controller"),
    "bench": ("plant", "controller", "bench"),
}


def _coerce(raw: str, target_type):
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw.strip()
    if target_type is tuple or "tuple" in str(target_type):
        return tuple(float(v) for v in raw.replace(",", " ").split())
    raise ValueError(f"unsupported config type {target_type}")


def _parse_block(cls, section) -> object:
    known = {f.name: f for f in fields(cls)}
    values = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigurationError(
                f"unknown key {key!r} in section [{section.name}]"
            )
        f = known[key]
        base = f.type if isinstance(f.type, type) else None
        if base is None:
            default = getattr(cls(), f.name)
            base = type(default)
        try:
            values[key] = _coerce(raw, base)
        except ValueError as err:
            raise ConfigurationError(
                f"bad value for {section.name}.{key}: {err}"
            ) from None
    return cls(**values)


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (f_T vs f_K)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigurationError(f"config parse error: {err}") from None

    if "run" not in parser:
        raise ConfigurationError("missing required [run] section")
    run = parser["run"]
    for key in run:
        if key not in ("scenario", "seed", "out"):
            raise ConfigurationError(f"unknown key {key!r} in section [run]")
    scenario = run.get("scenario", "").strip()
    if scenario not in SCENARIOS:
        raise ConfigurationError(
            f"scenario must be one of {SCENARIOS}, got {scenario!r}"
        )
    seed = int(run.get("seed", "0"))
    out = run.get("out", "results").strip()

    blocks = {}
    for name, cls in _BLOCKS.items():
        if name in parser:
            blocks[name] = _parse_block(cls, parser[name])
        else:
            blocks[name] = cls()

    for name in parser.sections():
        if name != "run" and name not in _BLOCKS:
            raise ConfigurationError(f"unknown section [{name}]")

    # every key has a default, but the section header itself must be present
    # so configs are explicit about what they run
    missing = [b for b in REQUIRED_BLOCKS[scenario] if b not in parser]
    if missing:
        raise ConfigurationError(
            f"scenario {scenario!r} requires sections: "
            + ", ".join(f"[{b}]" for b in missing)
        )

    return ExperimentConfig(
        scenario=scenario, seed=seed, out=out, source_text=text, **blocks
    )


def default_config_text(scenario: str) -> str:
    """A complete, explicit config for the given scenario."""
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {scenario!r}")
    lines = [f"[run]", f"scenario = {scenario}", "seed = 0", "out = results", ""]
    for name in REQUIRED_BLOCKS[scenario]:
        cls = _BLOCKS[name]
        lines.append(f"[{name}]")
        block = cls()
        for f in fields(cls):
            v = getattr(block, f.name)
            if isinstance(v, tuple):
                v = " ".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)
