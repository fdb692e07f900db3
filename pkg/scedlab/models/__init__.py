import hashlib
import json
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


def digest_of(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


class DecoderKind(str, Enum):
    SPA = "spa"
    NMS = "nms"


class DecoderConfig(BaseModel):
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    kind: DecoderKind = DecoderKind.SPA
    normalization: float = Field(0.75, gt=0.0, le=1.0)
    max_iterations: int = Field(32, ge=1)
    llr_clip: float = Field(30.0, gt=0.0)
    early_stop: bool = True

    def digest(self) -> str:
        return digest_of(self.model_dump(mode="json"))


class ChannelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    ebn0_db: float
    rate: float = Field(gt=0.0, le=1.0)

    @computed_field  # type: ignore[misc]
    @property
    def sigma2(self) -> float:
        return 1.0 / (2.0 * self.rate * 10.0 ** (self.ebn0_db / 10.0))


class PoolKind(str, Enum):
    BERNOULLI = "bernoulli"
    CYCLE_FREE = "cycle_free"
    LC_TRIPLE = "lc_triple"
    INDEPENDENT_TRIPLE = "independent_triple"
    ROW_REMOVED = "row_removed"
    SELECTION = "selection"


class RowSampling(BaseModel):
    """How auxiliary rows are drawn: Bernoulli(p) entries or cycle-free rows of weight d_c."""

    model_config = ConfigDict(frozen=True)

    mode: Literal["bernoulli", "cycle_free"] = "bernoulli"
    p: Optional[float] = Field(None, gt=0.0, lt=1.0)
    d_c: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_parameters(self) -> "RowSampling":
        if self.mode == "bernoulli" and self.p is None:
            raise ValueError("bernoulli sampling needs p")
        if self.mode == "cycle_free" and self.d_c is None:
            raise ValueError("cycle_free sampling needs d_c")
        return self


class Provenance(BaseModel):
    kind: PoolKind
    p: Optional[float] = None
    d_c: Optional[int] = None
    group_size: int = 1
    seed: Optional[int] = None


class CoverageRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    candidate_index: int = Field(ge=0)
    decoded_frames: FrozenSet[int] = frozenset()


class EnsembleSelection(BaseModel):
    chosen: List[int]
    covered: FrozenSet[int]
    num_frames: int = Field(ge=1)
    curve: List[float] = []

    @computed_field  # type: ignore[misc]
    @property
    def relative_coverage(self) -> float:
        return len(self.covered) / self.num_frames

    @field_validator("chosen")
    @classmethod
    def distinct(cls, v: List[int]) -> List[int]:
        if len(set(v)) != len(v):
            raise ValueError("chosen candidate indices must be distinct")
        return v


class SimPoint(BaseModel):
    ebn0_db: float
    frames_sent: int
    frame_errors: int
    mean_iterations: List[float]
    mean_latency: float
    mean_complexity: float
    capped: bool = False

    @computed_field  # type: ignore[misc]
    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames_sent if self.frames_sent else 0.0


class SimResult(BaseModel):
    seed: int
    config_digest: str
    points: List[SimPoint] = []


# ---------- campaign configuration


class CodeSection(BaseModel):
    path: str
    puncture_mask_path: Optional[str] = None
    declared_k: Optional[int] = None


class PoolSection(BaseModel):
    kind: PoolKind = PoolKind.BERNOULLI
    # row sampler behind lc_triple pools
    triple_rows: Literal["bernoulli", "cycle_free"] = "cycle_free"
    p: Optional[float] = Field(0.0422, gt=0.0, lt=1.0)
    d_c: Optional[int] = Field(6, ge=1)
    size: int = Field(3000, ge=1)
    seed: int = 1


class SelectionSection(BaseModel):
    k_aux: int = Field(3, ge=1)
    k_max: Optional[int] = Field(None, ge=1)
    frames_path: Optional[str] = None
    num_frames: int = Field(1000, ge=1)
    ebn0_db: Optional[float] = None
    target_fer: float = Field(1e-3, gt=0.0, lt=1.0)
    seed: int = 2
    # frames simulated at most while collecting failures
    frame_cap: int = Field(100_000_000, ge=1)


class SimulationSection(BaseModel):
    snr_points: List[float] = Field(default_factory=lambda: [4.0], min_length=1)
    min_frame_errors: int = Field(200, ge=1)
    max_frames: int = Field(100_000_000, ge=1)
    seed: int = 0


class OutputSection(BaseModel):
    directory: str = "results"
    prefix: str = "run"


class CampaignConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    code: CodeSection
    decoder: DecoderConfig = DecoderConfig()
    pool: PoolSection = PoolSection()
    selection: SelectionSection = SelectionSection()
    simulation: SimulationSection = SimulationSection()
    output: OutputSection = OutputSection()
    ensemble_path: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)

    def digest(self) -> str:
        # the worker count never changes results
        return digest_of(self.model_dump(mode="json", exclude={"workers"}))
