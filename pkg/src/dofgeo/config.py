"""Run configuration: defaults, file loading (JSON/TOML), validation.

Unknown keys are rejected so stale experiment configs fail loudly.
"""

from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .kernels import DEFAULT_BLADES, DEFAULT_MAX_RADIUS, DEFAULT_SCALE_COEFF, KernelSpec, KERNEL_FAMILIES
from .losses import LossWeights
from .optics import FOCUS_STRATEGIES, LensSpec


@dataclass(frozen=True)
class RunConfig:
    # optics (50mm f/5.6 lens on a 36mm full-frame sensor)
    focal_length: float = 0.050
    f_number: float = 5.6
    sensor_width: float = 0.036
    image_width: int = 1920
    # kernels (7x7 cap => max radius 3)
    kernel_family: str = "gaussian"
    max_kernel_radius: int = DEFAULT_MAX_RADIUS
    blades: int = DEFAULT_BLADES
    k_s: float = DEFAULT_SCALE_COEFF
    # focus
    focus_strategy: str = "median"
    focus_distance: float | None = None  # overrides the strategy when set
    # loss weights
    lambda_dssim: float = 0.2
    lambda_dssim_dof: float = 0.2
    lambda_geo: float = 0.05
    lambda_depth: float = 0.005
    alpha_depth_corr: float = 1.0
    # local grid bounds
    g_min: int = 15
    g_max: int = 60
    local_reg: float = 1e-6
    # thresholds
    tau_conf: float = 0.5
    tau_keep: float = 0.2
    alpha_min: float = 0.005
    grad_min: float = 0.0002
    # scale recovery
    lambda_ratio: float = 0.5
    # execution
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.kernel_family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.kernel_family!r}")
        if self.focus_strategy not in FOCUS_STRATEGIES:
            raise ValueError(f"unknown focus strategy {self.focus_strategy!r}")
        if self.g_min < 1 or self.g_max < self.g_min:
            raise ValueError("grid bounds must satisfy 1 <= g_min <= g_max")
        if not 0.0 <= self.tau_conf <= 1.0:
            raise ValueError("tau_conf must lie in [0, 1]")
        if not 0.0 < self.tau_keep <= 1.0:
            raise ValueError("tau_keep must lie in (0, 1]")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        # delegate range checks to the owning types
        self.lens()
        self.kernel_spec()
        self.loss_weights()

    def lens(self, image_width: int | None = None) -> LensSpec:
        return LensSpec(
            focal_length=self.focal_length,
            f_number=self.f_number,
            sensor_width=self.sensor_width,
            image_width=image_width if image_width is not None else self.image_width,
        )

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(
            family=self.kernel_family,
            radius=self.max_kernel_radius,
            blades=self.blades,
            k_s=self.k_s,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda_dssim=self.lambda_dssim,
            lambda_dssim_dof=self.lambda_dssim_dof,
            lambda_geo=self.lambda_geo,
            lambda_depth=self.lambda_depth,
            alpha_depth_corr=self.alpha_depth_corr,
        )

    def with_overrides(self, **kwargs) -> "RunConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        data = tomllib.loads(path.read_text())
    else:
        data = json.loads(path.read_text())
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data)
