"""
Experiment configuration: a flat JSON document validated by pydantic.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .channel import ScenarioParams
from .frame import OtfsGrid

logger = logging.getLogger(__name__)

ExperimentKind = Literal[
    "estimate", "prob-sweep", "mse-sweep", "beamform", "rate-sweep", "convergence", "velocity-sweep"
]
KINDS = list(ExperimentKind.__args__)


class ExperimentConfig(BaseModel):
    """Frame, arrays, paths and run settings; defaults follow the reference setup"""
    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind = "estimate"

    # Frame
    M: int = Field(64, ge=1)
    N: int = Field(16, ge=3)
    delta_f_hz: float = Field(15e3, gt=0)
    k_p: Optional[int] = Field(None, ge=0)
    l_p: Optional[int] = Field(None, ge=0)
    l_max: int = Field(8, ge=0)

    # Arrays
    n_b: int = Field(4, ge=1)
    n_i1: int = Field(8, ge=1)
    n_i2: int = Field(8, ge=1)

    # Paths
    l_ui: int = Field(4, ge=1)
    l_ib: int = Field(4, ge=1)
    v_max_kmh: float = Field(120.0, ge=0)
    f_c_hz: float = Field(28e9, gt=0)
    ib_doppler: bool = False
    irs: bool = True

    # Run
    snr_db: List[float] = Field(default_factory=lambda: [20.0], min_length=1)
    trials: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)
    gamma1: float = Field(1e-3, gt=0)
    t1: int = Field(10, ge=1)
    eps1: float = Field(1e-6, gt=0)
    x_p: float = Field(1.0, gt=0)
    admm_iters: int = Field(100, ge=1)
    oversample: int = Field(64, ge=64)
    fraction: Optional[float] = Field(None, ge=-0.5, le=0.5)
    velocities_kmh: List[float] = Field(
        default_factory=lambda: [60.0 * i for i in range(1, 13)], min_length=1
    )

    @field_validator("snr_db", mode="before")
    @classmethod
    def expand_snr(cls, value):
        """Accept a list, a scalar, or an inclusive {start, stop, step} range"""
        if isinstance(value, (int, float)):
            return [float(value)]
        if isinstance(value, dict):
            try:
                start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
            except KeyError as e:
                raise ValueError(f"snr_db range is missing {e.args[0]!r}") from e
            if step <= 0 or stop < start:
                raise ValueError("snr_db range needs step > 0 and stop >= start")
            count = int(round((stop - start) / step)) + 1
            return [start + i * step for i in range(count)]
        return value

    @model_validator(mode="after")
    def check_geometry(self):
        try:
            self.grid()
        except ValueError as e:
            raise ValueError(f"frame geometry (M, N, k_p, l_p, l_max): {e}") from e
        return self

    def grid(self) -> OtfsGrid:
        return OtfsGrid(M=self.M, N=self.N, delta_f=self.delta_f_hz,
                        k_p=self.k_p, l_p=self.l_p, l_max=self.l_max)

    def scenario_params(self, snr_db: float) -> ScenarioParams:
        return ScenarioParams(
            grid=self.grid(), n_b=self.n_b, n_i1=self.n_i1, n_i2=self.n_i2,
            l_ui=self.l_ui, l_ib=self.l_ib, v_max_kmh=self.v_max_kmh, f_c_hz=self.f_c_hz,
            snr_db=snr_db, x_p=self.x_p, ib_doppler=self.ib_doppler,
        )

    def sigma2(self, snr_db: float) -> float:
        return self.x_p ** 2 / 10 ** (snr_db / 10)

    def gamma1_hz2(self) -> float:
        """MSE target in Hz^2, gamma1 scaled by the squared Doppler resolution"""
        return self.gamma1 * self.grid().doppler_resolution ** 2

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a JSON config file (optional) and apply non-None overrides"""
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        logger.info(f"Loaded config from {path}")
    data.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.model_validate(data)
