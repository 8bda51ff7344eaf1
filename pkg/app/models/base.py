from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, PlainSerializer, PlainValidator, WithJsonSchema
from typing_extensions import Annotated


def _to_array(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _to_flat_list(arr: np.ndarray) -> list:
    return np.asarray(arr, dtype=float).ravel().tolist()


# Read-only float array; serialised as a flat row-major list.
Array = Annotated[
    np.ndarray,
    PlainValidator(_to_array),
    PlainSerializer(_to_flat_list, return_type=list),
    WithJsonSchema({"type": "array", "items": {"type": "number"}}),
]


class FrozenModel(BaseModel):
    """Immutable value object; safe to share across threads."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)


def reshape_flat(data: Any, field: str) -> Any:
    """Undo flat serialisation of a matrix field when a ``shape`` entry is present."""
    if isinstance(data, dict) and "shape" in data:
        data = dict(data)
        shape = tuple(int(s) for s in data.pop("shape"))
        if field in data:
            data[field] = np.asarray(data[field], dtype=float).reshape(shape)
    return data
