from pydantic import BaseModel, Field, field_validator
from typing import Optional


# Dataset schemas
class DatasetStats(BaseModel):
    users: int
    items: int
    interactions: int
    density: float

    def summary(self) -> str:
        return (
            f"{self.users} users, {self.items} items, "
            f"{self.interactions} interactions (density {self.density:.2e})"
        )


# Metric schemas
class MetricAtK(BaseModel):
    k: int = Field(ge=1)
    recall: float = Field(ge=0.0, le=1.0)
    ndcg: float = Field(ge=0.0, le=1.0)


class MetricReport(BaseModel):
    split: str
    metrics: list[MetricAtK]
    n_users: int
    seed: int
    wall_time: float = 0.0

    def at(self, k: int) -> MetricAtK:
        for m in self.metrics:
            if m.k == k:
                return m
        raise KeyError(k)

    def rows(self) -> list[dict]:
        """Report CSV rows: split,k,recall,ndcg,n_users,seed."""
        return [
            {
                "split": self.split,
                "k": m.k,
                "recall": m.recall,
                "ndcg": m.ndcg,
                "n_users": self.n_users,
                "seed": self.seed,
            }
            for m in self.metrics
        ]


# Training schemas
class HistoryRow(BaseModel):
    epoch: int
    bpr: float
    ssl: float
    reg: float
    val_ndcg: float  # NDCG at eval.val_k


class AblationRow(BaseModel):
    variant: str
    seed: int
    split: str
    k: int
    recall: float
    ndcg: float


class GradCheckRow(BaseModel):
    component: str
    max_rel_error: float
    passed: bool


class SweepRow(BaseModel):
    param: str
    value: str
    metrics: dict[str, float]

    @field_validator("value", mode="before")
    @classmethod
    def _stringify(cls, v):
        return str(v)

    def flat(self) -> dict:
        return {"param": self.param, "value": self.value, **self.metrics}


class RunSummaryRow(BaseModel):
    split: str
    k: int
    recall_mean: float
    recall_std: float
    ndcg_mean: float
    ndcg_std: float
    n_runs: int
    variant: Optional[str] = None
