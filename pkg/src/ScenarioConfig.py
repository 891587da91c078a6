"""
ScenarioConfig.py
=================

Validated parameter set for one simulated cell.

Responsibilities
----------------
- Hold every physical and algorithmic parameter of the relay-assisted
  cognitive OFDMA downlink (cluster counts, budgets, sensing quality,
  solver settings, PFS window).
- Reject invalid or unknown settings at construction time.
- Convert dB settings into the linear quantities used internally
  (noise power is normalised to 1).
- Produce swept copies of itself for parameter sweeps.

Configuration File
------------------
A YAML mapping whose keys are the field names below; an empty file gives
the defaults. Unknown keys are rejected. Example:

    M: 6
    N: 4
    q_act: 0.3
    receive_snr_dB: 10.0
    snr_reference: cell_edge

Power Calibration
-----------------
When ``receive_snr_dB`` is set it takes precedence over ``P0_dB``/``Pm_dB``:
the BS budget is chosen so that the un-shadowed receive SNR of the whole
budget equals the target at the reference distance (cell radius for
``cell_edge``, cluster-0 radius for ``cluster_edge``), and each relay budget
so that the same SNR is reached at the relay-cluster edge. Lognormal
shadowing has median 0 dB, so this is the median receive SNR there.
"""

import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

SWEEPABLE_PARAMETERS = ("q_act", "receive_snr_dB", "K", "sigma_e2")


class SnrReference(str, Enum):
    CELL_EDGE = "cell_edge"
    CLUSTER_EDGE = "cluster_edge"


class CsitModel(str, Enum):
    # forward: Hhat = H + dH with dH independent of H
    # estimate_centred: H = Hhat + dH with dH independent of Hhat
    FORWARD = "forward"
    ESTIMATE_CENTRED = "estimate_centred"


class CurveMode(str, Enum):
    PFS = "pfs"
    GENERAL = "general"


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Cell structure
    M: int = Field(6, ge=0)
    N: int = Field(4, ge=1)
    K0: int = Field(16, ge=1)
    Km: int = Field(5, ge=1)

    # Budgets and thresholds (dB relative to unit noise power)
    P0_dB: Optional[float] = None
    Pm_dB: Optional[float] = None
    receive_snr_dB: Optional[float] = 10.0
    snr_reference: SnrReference = SnrReference.CELL_EDGE
    I_bar_dB: float = 0.0

    # Link quality and sensing
    epsilon: float = Field(0.05, gt=0.0, lt=1.0)
    sigma_e2: float = Field(0.01, ge=0.0, lt=1.0)
    csit_model: CsitModel = CsitModel.FORWARD
    q_act: float = Field(0.3, ge=0.0, le=1.0)
    q_f: float = Field(0.2, ge=0.0, le=1.0)
    q_d: float = Field(0.8, gt=0.0, le=1.0)
    rs_activity_exponent: float = Field(1.0 / 6.0, gt=0.0, le=1.0)
    pu_coherence_frames: int = Field(1, ge=1)
    interference_tau_exponent: Literal[1, 2] = 1

    # Spectral-efficiency factors of the two hops
    g0: float = Field(0.5, gt=0.0)
    gm: float = Field(0.25, gt=0.0)

    # Geometry
    cell_radius_m: float = Field(5000.0, gt=0.0)
    cluster0_radius_m: float = Field(2000.0, gt=0.0)
    rs_ring_radius_m: float = Field(3000.0, gt=0.0)
    rs_cluster_radius_m: float = Field(1500.0, gt=0.0)
    guard_distance_m: float = Field(50.0, gt=0.0)
    shadowing_sigma_dB: float = Field(8.0, ge=0.0)

    # Scheduling
    t_s: float = Field(100.0, ge=1.0)
    pfs_floor: float = Field(1e-6, gt=0.0)
    pfs_average_goodput: bool = False
    pfs_literal_l: bool = False
    curve_mode: CurveMode = CurveMode.PFS
    frames_per_trial: int = Field(100, ge=1)
    rs_subchannel_policy: Literal["warn", "error"] = "warn"

    # Dual solver
    step0: float = Field(1.0, gt=0.0)
    max_iter: int = Field(5000, ge=1)
    tol: float = Field(1e-5, gt=0.0)
    gap_tol: float = Field(1e-3, gt=0.0)
    polish_candidates: int = Field(3, ge=0)

    # Reporting
    histogram_bins: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_structure(self) -> "ScenarioConfig":
        if self.K0 <= self.M:
            raise ValueError(
                f"K0 ({self.K0}) must exceed M ({self.M}): the first M receivers "
                "of cluster 0 are the relays"
            )
        explicit_power = self.P0_dB is not None and self.Pm_dB is not None
        if self.receive_snr_dB is None and not explicit_power:
            raise ValueError(
                "either receive_snr_dB or both P0_dB and Pm_dB must be set"
            )
        smallest_radius = min(self.cluster0_radius_m, self.rs_cluster_radius_m)
        if self.guard_distance_m >= smallest_radius:
            raise ValueError(
                "guard_distance_m must be smaller than every cluster radius"
            )
        if self.cluster0_radius_m > self.cell_radius_m:
            raise ValueError("cluster0_radius_m cannot exceed cell_radius_m")
        return self

    # --- Derived quantities ---

    @property
    def direct_users(self) -> int:
        return self.K0 - self.M

    @property
    def total_users(self) -> int:
        return self.direct_users + self.M * self.Km

    @property
    def I_bar(self) -> float:
        return db_to_linear(self.I_bar_dB)

    def power_budgets(self) -> tuple[float, float]:
        """Return the linear (P0, Pm) budgets, calibrated when receive_snr_dB is set."""
        # Imported here: Topology imports this module for its type hints
        from src.Topology import LinkType, path_gain_dB

        if self.receive_snr_dB is None:
            assert self.P0_dB is not None and self.Pm_dB is not None
            return db_to_linear(self.P0_dB), db_to_linear(self.Pm_dB)

        if self.snr_reference is SnrReference.CELL_EDGE:
            bs_reference_m = self.cell_radius_m
        else:
            bs_reference_m = self.cluster0_radius_m

        bs_loss = path_gain_dB(bs_reference_m / 1000.0, LinkType.ACCESS)
        rs_loss = path_gain_dB(self.rs_cluster_radius_m / 1000.0, LinkType.ACCESS)
        p0 = db_to_linear(self.receive_snr_dB + bs_loss)
        pm = db_to_linear(self.receive_snr_dB + rs_loss)
        return p0, pm

    def cluster_activity(self, low_rs_activity: bool = False) -> list[float]:
        """
        PU-active probability of every cluster (cluster 0 first).

        With ``low_rs_activity`` the relay clusters use
        1 - (1 - q_act)^rs_activity_exponent.
        """
        if not low_rs_activity:
            return [self.q_act] * (self.M + 1)
        outer = 1.0 - (1.0 - self.q_act) ** self.rs_activity_exponent
        return [self.q_act] + [outer] * self.M

    def with_value(self, parameter: str, value: float) -> "ScenarioConfig":
        """Return a validated copy with one swept parameter replaced."""
        if parameter not in SWEEPABLE_PARAMETERS:
            raise ValueError(
                f"Unknown sweep parameter '{parameter}'; "
                f"expected one of {', '.join(SWEEPABLE_PARAMETERS)}"
            )

        update: dict[str, Any]
        if parameter == "K":
            update = self._user_count_update(int(round(value)))
        else:
            update = {parameter: float(value)}

        data = self.model_dump()
        data.update(update)
        return ScenarioConfig.model_validate(data)

    def _user_count_update(self, total: int) -> dict[str, Any]:
        # Keeps the direct-user share of the current layout
        if total < 1:
            raise ValueError(f"Total user count must be positive, got {total}")
        if self.M == 0:
            return {"K0": total}
        share = self.direct_users / self.total_users
        direct = max(1, int(round(total * share)))
        per_cluster = max(1, int(round((total - direct) / self.M)))
        return {"K0": self.M + direct, "Km": per_cluster}


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """
    Read a YAML config file and validate it.

    Raises:
        FileNotFoundError: the file does not exist
        yaml.YAMLError: the file is not valid YAML
        ValueError: the document is not a mapping
        pydantic.ValidationError: a value violates the schema
    """
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file '{path}' must contain a key-value mapping")
    return ScenarioConfig.model_validate(data)


def config_hash(config: ScenarioConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def db_to_linear(value_db: float) -> float:
    return math.pow(10.0, value_db / 10.0)
