"""
Base models for avgreward-opl.

This module contains the pydantic base model and the numpy-array field types
shared by every domain model. Array fields are validated into read-only
``numpy.ndarray`` values and serialized as nested lists, so every model can
be written to and read back from a JSON document without loss.
"""

import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Mapping, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, PlainSerializer

ModelT = TypeVar("ModelT", bound=BaseModel)


def _frozen_array(dtype: Any):
    def convert(value: Any) -> np.ndarray:
        arr = np.array(value, dtype=dtype, copy=True)
        arr.flags.writeable = False
        return arr

    return convert


def _to_list(arr: np.ndarray) -> list:
    return np.asarray(arr).tolist()


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_array(np.float64)),
    PlainSerializer(_to_list, return_type=list),
]
IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_array(np.int64)),
    PlainSerializer(_to_list, return_type=list),
]


class OPLModel(BaseModel):
    """Base model for all avgreward-opl value objects."""

    model_config = ConfigDict(
        arbitrary_types_allowed=True,
        frozen=True,
        extra="forbid",
        populate_by_name=True,
    )


class JsonFileMixin(BaseModel):
    """Mixin for models persisted as a single JSON document."""

    def save_json(self, path: Union[str, Path]) -> Path:
        """Write the model to ``path`` and return the path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2, by_alias=True))
        return path

    @classmethod
    def load_json(cls: Type[ModelT], path: Union[str, Path]) -> ModelT:
        """Read a model previously written by :meth:`save_json`."""
        return cls.model_validate_json(Path(path).read_text())

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of this model."""
        return canonical_hash(self.model_dump(mode="json", by_alias=True))


def canonical_json(document: Mapping[str, Any]) -> str:
    """Sorted-key, compact JSON text of ``document``."""
    return json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def canonical_hash(document: Mapping[str, Any]) -> str:
    """Stable SHA-256 digest of a JSON-ready mapping."""
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()
