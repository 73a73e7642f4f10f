"""
Cross-validation models for avgreward-opl.
"""

from typing import List, Tuple

import numpy as np
from pydantic import Field, model_validator

from .base import FloatArray, JsonFileMixin, OPLModel
from .fits import TuningPair

DEFAULT_PENALTIES = (1e-4, 1e-3, 1e-2, 1e-1)


def coupled_grid(values=DEFAULT_PENALTIES) -> List[TuningPair]:
    """Grid with lambda = mu per entry."""
    return [TuningPair(lam=v, mu=v) for v in values]


class TuningGrid(JsonFileMixin, OPLModel):
    """Candidate penalties for the value and ratio fits plus CV sizes."""

    value_grid: Tuple[TuningPair, ...] = Field(
        default_factory=lambda: tuple(coupled_grid()), description="Value-fit candidates"
    )
    ratio_grid: Tuple[TuningPair, ...] = Field(
        default_factory=lambda: tuple(coupled_grid()), description="Ratio-fit candidates"
    )
    n_candidates: int = Field(10, ge=1, description="Number of candidate policies M")
    n_folds: int = Field(3, ge=2, description="Number of folds K")

    @model_validator(mode="after")
    def _non_empty(self) -> "TuningGrid":
        if not self.value_grid or not self.ratio_grid:
            raise ValueError("grids need at least one entry")
        return self

    def canonical(self) -> "TuningGrid":
        """Grids sorted by lambda, then mu (the tie-breaking order)."""
        return self.model_copy(
            update={
                "value_grid": tuple(sorted(self.value_grid, key=TuningPair.sort_key)),
                "ratio_grid": tuple(sorted(self.ratio_grid, key=TuningPair.sort_key)),
            }
        )


class CVResult(JsonFileMixin, OPLModel):
    """Chosen penalties and the accumulated validation-error tables."""

    chosen_value: TuningPair
    chosen_ratio: TuningPair
    value_grid: Tuple[TuningPair, ...]
    ratio_grid: Tuple[TuningPair, ...]
    error_table_value: FloatArray = Field(..., description="e1(m, j), shape (M, J)")
    error_table_ratio: FloatArray = Field(..., description="e2(m, j), shape (M, J)")

    @staticmethod
    def select(table: np.ndarray) -> int:
        """argmin_j max_m table[m, j]; ties go to the smallest j."""
        worst = np.asarray(table).max(axis=0)
        return int(np.flatnonzero(worst == worst.min())[0])
