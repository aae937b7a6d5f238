"""Run configuration: validated, fully defaulted, unknown keys rejected.

A RunConfig describes one batch run of any subcommand.  Speeds may be given
in units of the adiabaticity bound v0 (the paper-style convention, default)
or directly in natural units sigma/t; the conversion factor is computed per
run from the spectrum and recorded in the outputs.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .grid import Grid1D, make_grid
from .potential import ChannelId, TrajectorySpec, WellConfig

__all__ = [
    "GridModel",
    "WellModel",
    "TrajectoryModel",
    "NumericsModel",
    "OutputModel",
    "SpectrumModel",
    "EvolveModel",
    "GateModel",
    "BellModel",
    "AdiabaticityModel",
    "RunConfig",
    "ConfigError",
    "load_config",
    "apply_overrides",
    "resolve_workers",
    "WORKERS_ENV_VAR",
]

WORKERS_ENV_VAR = "TWEEZERSIM_WORKERS"

ChannelName = Literal["c00", "cPsiPlus", "c11", "cPsiMinus"]


class ConfigError(ValueError):
    """Configuration file or override could not be used."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridModel(_Strict):
    x_max: float = Field(default=12.0, gt=0, description="half extent, units of sigma")
    n_points: int = Field(default=241, ge=16)

    def build(self) -> Grid1D:
        return make_grid(self.x_max, self.n_points)


class WellModel(_Strict):
    v0: float = Field(default=30.0, gt=0, description="well depth, hbar^2/(m sigma^2)")
    sigma: float = Field(default=1.0, gt=0)
    scattering_lengths: dict[Literal["00", "01sym", "11"], float] = Field(
        default_factory=lambda: {"00": 0.1, "01sym": 0.1, "11": 0.1},
        description="per-channel scattering lengths, units of sigma",
    )
    omega_perp_w0: float = Field(default=5.0, gt=0, description="transverse frequency / omega0")

    @field_validator("scattering_lengths")
    @classmethod
    def _complete(cls, v):
        missing = {"00", "01sym", "11"} - set(v)
        if missing:
            raise ValueError(f"scattering_lengths missing {sorted(missing)}")
        return v

    def build(self) -> WellConfig:
        return WellConfig(
            v0=self.v0,
            sigma=self.sigma,
            scattering_lengths=dict(self.scattering_lengths),
            omega_perp_w0=self.omega_perp_w0,
        )


class TrajectoryModel(_Strict):
    d_max: float = Field(default=8.0, gt=0, description="start/end separation, sigma")
    d_min: float = Field(default=0.0, ge=0)
    v_in: float = Field(default=0.01, gt=0)
    v_out: float = Field(default=0.01, gt=0)
    hold_time: float = Field(default=0.0, ge=0, description="natural time units")
    profile: Literal["linear", "smoothstep"] = "smoothstep"
    speed_units: Literal["v0", "natural"] = "v0"

    def build(self, v_bound: Optional[float]) -> TrajectorySpec:
        scale = 1.0
        if self.speed_units == "v0":
            if v_bound is None:
                raise ConfigError("speeds in v0 units need the adiabaticity bound")
            scale = v_bound
        return TrajectorySpec(
            d_max=self.d_max,
            d_min=self.d_min,
            v_in=self.v_in * scale,
            hold_time=self.hold_time,
            v_out=self.v_out * scale,
            profile=self.profile,
        )


class NumericsModel(_Strict):
    dt_w0: float = Field(default=0.02, gt=0, description="time step in units of 1/omega0")
    k_states: int = Field(default=8, ge=6)
    d_step: float = Field(default=0.1, gt=0, description="separation sample spacing, sigma")

    def dt(self, well: WellConfig) -> float:
        return self.dt_w0 / well.omega0


class OutputModel(_Strict):
    directory: str = "runs"
    snapshot_every: int = Field(default=0, ge=0, description="steps between |psi| dumps; 0 = off")
    sample_every: int = Field(default=0, ge=0, description="steps between time-series rows; 0 = off")
    save_final_state: bool = False


class SpectrumModel(_Strict):
    d_min: float = Field(default=0.0, ge=0)
    d_max: float = Field(default=10.0, gt=0)
    eigenfunction_d_values: list[float] = Field(default_factory=lambda: [0.0, 4.0, 7.0, 10.0])
    k_single: int = Field(default=3, ge=1)


class EvolveModel(_Strict):
    channel: ChannelName = "c00"
    v_values: list[float] = Field(default_factory=lambda: [0.01, 0.1, 1.0])

    @field_validator("v_values")
    @classmethod
    def _sorted_positive(cls, v):
        if not v or any(x <= 0 for x in v) or sorted(v) != v:
            raise ValueError("v_values must be non-empty, positive, ascending")
        return v


class GateModel(_Strict):
    verify_propagation: bool = False


class BellModel(_Strict):
    linewidth_hw0: float = Field(default=0.05, gt=0, description="linewidth in hbar*omega0")


class AdiabaticityModel(_Strict):
    scan: bool = False
    scan_speeds: list[float] = Field(default_factory=lambda: [0.01, 0.1, 1.0])
    scan_channel: ChannelName = "c00"


class RunConfig(_Strict):
    well: WellModel = Field(default_factory=WellModel)
    grid: GridModel = Field(default_factory=GridModel)
    trajectory: TrajectoryModel = Field(default_factory=TrajectoryModel)
    channels: list[ChannelName] = Field(
        default_factory=lambda: ["c00", "cPsiPlus", "c11", "cPsiMinus"]
    )
    numerics: NumericsModel = Field(default_factory=NumericsModel)
    output: OutputModel = Field(default_factory=OutputModel)
    workers: Optional[int] = Field(default=None, ge=1)
    spectrum: SpectrumModel = Field(default_factory=SpectrumModel)
    evolve: EvolveModel = Field(default_factory=EvolveModel)
    gate: GateModel = Field(default_factory=GateModel)
    bell: BellModel = Field(default_factory=BellModel)
    adiabaticity: AdiabaticityModel = Field(default_factory=AdiabaticityModel)

    @field_validator("channels")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("channels must not be empty")
        if len(set(v)) != len(v):
            raise ValueError("channels contains duplicates")
        return v

    def channel_ids(self) -> list[ChannelId]:
        return [ChannelId(c) for c in self.channels]

    def canonical_dict(self) -> dict:
        return json.loads(self.model_dump_json())


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply key=value pairs with dotted paths; values parse as JSON when
    possible, else as strings.  Flags win over file values."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        keys = path.split(".")
        for key in keys[:-1]:
            nxt = node.get(key)
            if not isinstance(nxt, dict):
                nxt = {}
                node[key] = nxt
            node = nxt
        node[keys[-1]] = parsed
    return raw


def load_config(path: Optional[str], overrides: Optional[list[str]] = None) -> RunConfig:
    """Load a RunConfig from a JSON file (defaults when path is None)."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    if overrides:
        raw = apply_overrides(raw, overrides)
    return RunConfig.model_validate(raw)


def resolve_workers(cfg: RunConfig, cli_value: Optional[int] = None) -> int:
    """Worker count: CLI flag > config > environment > 1."""
    if cli_value is not None:
        return max(1, cli_value)
    if cfg.workers is not None:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}")
    return 1
