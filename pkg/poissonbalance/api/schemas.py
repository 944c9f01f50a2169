from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Optional


class InstanceDocument(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    machines: int = Field(ge=1)
    jobs: List[float] = Field(default_factory=list)

    @field_validator("jobs")
    @classmethod
    def _non_negative(cls, value: List[float]) -> List[float]:
        for i, rate in enumerate(value):
            if rate < 0:
                raise ValueError(f"job {i} has negative rate {rate}")
        return value


class AssignmentDocument(BaseModel):
    model_config = ConfigDict(allow_inf_nan=False)

    assignment: List[int]
    loads: List[float]
    expected_max: float
    algorithm: str
    epsilon: float


class CompareRow(BaseModel):
    algorithm: str
    expected_max: Optional[float] = None
    mc_estimate: float
    mc_stderr: float
    wall_time: float
    branch: Optional[str] = None
