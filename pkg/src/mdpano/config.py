"""Pipeline configuration: one place for every stage default, with
versioned JSON load/save."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .exceptions import ConfigError

CONFIG_FILE_FORMAT = "mdpano-config"
CONFIG_FILE_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the reconstruction and rendering pipeline.

    rho_min/rho_max default to near/far when left unset.
    """

    near: float = 1.0
    far: float = 100.0
    mpi_layers: int = 32
    neighbors: int = 4
    sigma0: float = 0.05
    alpha_min: float = 0.999
    alpha_cull: float = 1e-4
    shells: int = 5
    rho_min: float | None = None
    rho_max: float | None = None
    partition_mode: str = "radius"
    pano_width: int = 2560
    pano_height: int = 640
    v_fov_slope: float = 1.0
    tau: float = 50.0
    epsilon: float = 1e-12
    workers: int = 1
    srgb_input: bool = True

    def __post_init__(self):
        if not (self.near > 0 and self.far > self.near):
            raise ConfigError("need far > near > 0")
        if self.mpi_layers < 2:
            raise ConfigError("mpi_layers must be at least 2")
        if self.neighbors < 1:
            raise ConfigError("neighbors must be at least 1")
        if self.shells < 1:
            raise ConfigError("shells must be at least 1")
        if self.partition_mode not in ("radius", "inverse"):
            raise ConfigError(
                f"partition_mode must be 'radius' or 'inverse', "
                f"got {self.partition_mode!r}"
            )
        if not (self.effective_rho_max > self.effective_rho_min > 0):
            raise ConfigError("need rho_max > rho_min > 0")
        if self.pano_width < 1 or self.pano_height < 1:
            raise ConfigError("panorama size must be at least 1x1")
        if not (self.tau > 0 and self.epsilon > 0):
            raise ConfigError("tau and epsilon must be positive")
        if self.alpha_cull < 0 or not 0 < self.alpha_min <= 1:
            raise ConfigError("bad alpha_cull or alpha_min")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def effective_rho_min(self) -> float:
        return self.near if self.rho_min is None else self.rho_min

    @property
    def effective_rho_max(self) -> float:
        return self.far if self.rho_max is None else self.rho_max


def save_config(cfg: PipelineConfig, path) -> None:
    doc = {"format": CONFIG_FILE_FORMAT, "version": CONFIG_FILE_VERSION}
    doc.update(dataclasses.asdict(cfg))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CONFIG_FILE_FORMAT:
        raise ConfigError(f"{path} is not a pipeline config file")
    if doc.get("version") != CONFIG_FILE_VERSION:
        raise ConfigError(
            f"unsupported config version {doc.get('version')!r}, "
            f"this reader supports version {CONFIG_FILE_VERSION}"
        )
    fields = {f.name for f in dataclasses.fields(PipelineConfig)}
    body = {k: v for k, v in doc.items() if k not in ("format", "version")}
    unknown = sorted(set(body) - fields)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    return PipelineConfig(**body)
