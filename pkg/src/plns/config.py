"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Required keys: ``dim``, ``n``,
``dt``, ``T_end``. Field-valued keys (``rho0``, ``u0``, ``m0``, ``f``) take a
kind or a number/list (constant); their parameters use dotted keys such as
``u0.amplitude``. The exponent key ``p`` takes a number (constant), a preset
name (``sine``, ``product``, ``bump``) or ``file`` (scalar snapshots listed in
``p.files``, interpolated in time between their header times).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InvalidInputError
from .exponent import PRESET_DEFAULTS, PRESETS, ConstantExponent, DEFAULT_EXPONENT, GriddedExponent, PresetExponent
from .galerkin import FieldSpec, INTEGRATORS, SimConfig, TRANSPORT_SCHEMES

REQUIRED = ("dim", "n", "dt", "T_end")
FIELD_KEYS = ("rho0", "u0", "m0", "f")
FIELD_PARAMS = ("value", "amplitude", "wavenumber", "omega", "seed", "file")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# key -> (default, description); shown by ``plns run --help``
DEFAULTS = {
    "dim": (None, "spatial dimension 1, 2 or 3 (required)"),
    "n": (None, "grid points per axis, even (required)"),
    "dt": (None, "maximal time step (required)"),
    "T_end": (None, "final time (required)"),
    "N": ("8*dim", "number of Galerkin modes"),
    "gamma": (1.5, "adiabatic exponent"),
    "delta": (1e-3, "density floor"),
    "mode": ("theorem", "theorem | potential (admissible exponent range)"),
    "p": (DEFAULT_EXPONENT, "constant value, preset name (sine, product, bump) or file"),
    "integrator": ("explicit-rk2", "explicit-rk2 | semi-implicit"),
    "transport": ("upwind", "upwind | muscl"),
    "rho0": (1.0, "initial density"),
    "u0": (0.0, "initial velocity"),
    "m0": (None, "initial momentum (overrides u0)"),
    "f": (0.0, "body force"),
    "snapshot_cadence": (0, "steps between snapshots (0: first and last only)"),
    "blowup1_max": (1e6, "stop threshold for blowup1"),
    "dtilde_q": ("2,2.4,3", "exponents q for the dtilde_l<q> columns"),
    "seed": (0, "default seed for random fields"),
    "output_dir": (".", "directory for run outputs"),
    "log_level": ("WARNING", "logging level"),
}
ALIASES = {"output_cadence": "snapshot_cadence", "T": "T_end"}


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    seed: int = 0
    output_dir: str = "."
    log_level: str = "WARNING"
    entries: tuple = field(default=())  # (key, raw value) in file order, for echoing


def _is_known(key: str) -> bool:
    if key in DEFAULTS or key in ALIASES:
        return True
    head, _, tail = key.partition(".")
    if head in FIELD_KEYS:
        return tail in FIELD_PARAMS
    if head == "p":
        return tail in PRESET_DEFAULTS or tail == "files"
    return False


def _read_entries(text: str) -> dict:
    entries: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if not _is_known(key):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {entries[key][0]})")
        entries[key] = (lineno, value)
    return entries


class _Reader:
    def __init__(self, entries):
        self.entries = entries

    def has(self, key):
        return key in self.entries

    def raw(self, key):
        return self.entries[key][1]

    def _convert(self, key, conv, what):
        lineno, value = self.entries[key]
        try:
            return conv(value)
        except (ValueError, TypeError):
            raise ConfigError(f"line {lineno}: key {key!r}: expected {what}, got {value!r}") from None

    def int(self, key, default=None):
        return self._convert(key, int, "an integer") if key in self.entries else default

    def float(self, key, default=None):
        if key not in self.entries:
            return default
        x = self._convert(key, float, "a number")
        if not math.isfinite(x):
            raise ConfigError(f"line {self.entries[key][0]}: key {key!r}: value must be finite")
        return x

    def floats(self, key, default=None):
        if key not in self.entries:
            return default
        return self._convert(key, lambda s: tuple(float(v) for v in s.split(",")), "a comma-separated list of numbers")

    def choice(self, key, options, default):
        if key not in self.entries:
            return default
        lineno, value = self.entries[key]
        if value not in options:
            raise ConfigError(f"line {lineno}: key {key!r}: expected one of {', '.join(options)}, got {value!r}")
        return value


def _field(r: _Reader, name: str, default_value: float | None, seed: int) -> FieldSpec | None:
    if not r.has(name):
        if default_value is None and not any(r.has(f"{name}.{p}") for p in FIELD_PARAMS):
            return None
        kind, value = "constant", (default_value or 0.0,)
    else:
        head = r.raw(name)
        if head in FieldSpec.KINDS:
            kind, value = head, (0.0,)
        else:
            kind, value = "constant", r.floats(name)
    value = r.floats(f"{name}.value", value)
    if kind == "constant" and all(v == 0.0 for v in value):
        kind = "zero"
    try:
        return FieldSpec(
            kind=kind,
            value=value,
            amplitude=r.float(f"{name}.amplitude", 0.0),
            wavenumber=r.int(f"{name}.wavenumber", 1),
            omega=r.float(f"{name}.omega", 0.0),
            seed=r.int(f"{name}.seed", seed),
            file=r.raw(f"{name}.file") if r.has(f"{name}.file") else None,
        )
    except InvalidInputError as exc:
        raise ConfigError(f"key {name!r}: {exc}") from None


def _exponent(r: _Reader):
    if not r.has("p"):
        return ConstantExponent(DEFAULT_EXPONENT)
    head = r.raw("p")
    if head == "file":
        if not r.has("p.files"):
            raise ConfigError("key 'p': kind 'file' needs p.files")
        paths = [s.strip() for s in r.raw("p.files").split(",")]
        try:
            return GriddedExponent.from_files(paths)
        except OSError as exc:
            raise ConfigError(f"key 'p.files': {exc}") from None
    if head in PRESETS:
        params = {k: r.float(f"p.{k}") for k in PRESET_DEFAULTS if r.has(f"p.{k}")}
        return PresetExponent(head, params)
    return ConstantExponent(r.float("p"))


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration; errors name the line and key."""
    entries = _read_entries(text)
    missing = [k for k in REQUIRED if k not in entries]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    r = _Reader(entries)
    seed = r.int("seed", 0)
    dim = r.int("dim")
    try:
        sim = SimConfig(
            dim=dim,
            n=r.int("n"),
            dt=r.float("dt"),
            t_end=r.float("T_end"),
            modes=r.int("N"),
            gamma=r.float("gamma", 1.5),
            delta=r.float("delta", 1e-3),
            exponent=_exponent(r),
            rho0=_field(r, "rho0", 1.0, seed),
            u0=_field(r, "u0", 0.0, seed),
            m0=_field(r, "m0", None, seed),
            forcing=_field(r, "f", 0.0, seed),
            integrator=r.choice("integrator", INTEGRATORS, "explicit-rk2"),
            transport=r.choice("transport", TRANSPORT_SCHEMES, "upwind"),
            mode=r.choice("mode", ("theorem", "potential"), "theorem"),
            output_cadence=r.int("snapshot_cadence", 0),
            blowup1_max=r.float("blowup1_max", 1e6),
            dtilde_q=r.floats("dtilde_q", (2.0, 2.4, 3.0)),
        )
        sim.validate()
    except InvalidInputError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunConfig(
        sim=sim,
        seed=seed,
        output_dir=r.raw("output_dir") if r.has("output_dir") else ".",
        log_level=r.choice("log_level", LOG_LEVELS, "WARNING"),
        entries=tuple((k, v) for k, (_, v) in sorted(entries.items(), key=lambda kv: kv[1][0])),
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def describe_keys() -> str:
    width = max(map(len, DEFAULTS))
    lines = [f"  {k:<{width}}  {desc} [default: {d}]" if d is not None else f"  {k:<{width}}  {desc}"
             for k, (d, desc) in DEFAULTS.items()]
    return "config keys:\n" + "\n".join(lines)
