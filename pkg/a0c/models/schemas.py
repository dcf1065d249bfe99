"""
Pydantic Schemas for experiment records
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


CSV_COLUMNS = [
    "rep",
    "episode",
    "real_steps",
    "accounted_steps",
    "return",
    "policy_loss",
    "entropy",
    "value_loss",
    "wall_s",
]


class RunRecord(BaseModel):
    """One finished episode of one repetition"""
    rep: int = Field(..., ge=0, description="Repetition index")
    episode: int = Field(..., ge=0, description="Episode index within the repetition")
    real_steps: int = Field(..., ge=0, description="Cumulative real environment steps")
    accounted_steps: int = Field(..., ge=0, description="Cumulative real steps times n_trace")
    return_: float = Field(..., alias="return", description="Sum of scaled rewards of the episode")
    policy_loss: float = Field(float("nan"), description="Mean policy surrogate over the training phase")
    entropy: float = Field(float("nan"), description="Mean policy entropy over the training phase")
    value_loss: float = Field(float("nan"), description="Mean value loss over the training phase")
    wall_s: float = Field(0.0, ge=0, description="Seconds since the repetition started")
    skipped: int = Field(0, ge=0, description="Zero-density support points skipped in training")

    model_config = ConfigDict(populate_by_name=True)

    def csv_row(self) -> dict:
        """Values keyed by CSV column"""
        data = self.model_dump(by_alias=True)
        return {column: data[column] for column in CSV_COLUMNS}


class RepetitionResult(BaseModel):
    """All records of one repetition and, if it was aborted, the diagnostic"""
    rep: int = Field(..., ge=0)
    seed: int = Field(..., ge=0)
    n_trace: int = Field(..., ge=1)
    records: List[RunRecord] = Field(default_factory=list)
    error: Optional[str] = Field(None, description="Diagnostic of an aborted repetition")

    @model_validator(mode="after")
    def _accounting(self) -> "RepetitionResult":
        for record in self.records:
            if record.accounted_steps != record.real_steps * self.n_trace:
                raise ValueError(
                    f"episode {record.episode}: accounted_steps {record.accounted_steps} "
                    f"!= real_steps {record.real_steps} * n_trace {self.n_trace}"
                )
        return self

    @property
    def aborted(self) -> bool:
        return self.error is not None
