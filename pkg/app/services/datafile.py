"""
Point data files.

The first line is a JSON header naming the manifold, e.g.
``{"manifold": "spd", "shape": [2, 2]}``; every further non-blank line is one
point as a flat row-major JSON array. Hyperboloid headers carry ``radius``.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import Field, PositiveFloat, ValidationError

from app.core.errors import DimensionMismatch, InvalidInputError
from app.models.base import FrozenModel
from app.models.points import HyperboloidPoint, ManifoldPoint, SpdMatrix, StiefelFrame, TorusPoint, UnitVector
from app.services.manifolds import stack_points, to_angles

logger = logging.getLogger(__name__)


class DataHeader(FrozenModel):
    manifold: Literal["sphere", "hyperboloid", "torus", "spd", "stiefel"]
    shape: List[int] = Field(min_length=1)
    radius: Optional[PositiveFloat] = None

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def header_for(points: Sequence[ManifoldPoint]) -> DataHeader:
    kind, xs, radius = stack_points(points)
    return DataHeader(manifold=kind, shape=list(xs.shape[1:]), radius=radius)


def _point(header: DataHeader, values: np.ndarray) -> ManifoldPoint:
    arr = values.reshape(header.shape)
    if header.manifold == "sphere":
        return UnitVector(coords=arr)
    if header.manifold == "hyperboloid":
        return HyperboloidPoint(coords=arr, radius=header.radius or 1.0)
    if header.manifold == "torus":
        return TorusPoint(components=arr)
    if header.manifold == "spd":
        return SpdMatrix(entries=arr)
    return StiefelFrame(entries=arr)


def dumps_points(points: Sequence[ManifoldPoint]) -> str:
    header = header_for(points)
    lines = [json.dumps(header.model_dump(exclude_none=True))]
    lines.extend(json.dumps(x.as_array().ravel().tolist()) for x in points)
    return "\n".join(lines) + "\n"


def loads_points(text: str) -> List[ManifoldPoint]:
    """Parse a data file; errors name the offending line."""
    lines = [(i, line) for i, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        raise InvalidInputError("data file is empty")
    try:
        header = DataHeader.model_validate_json(lines[0][1])
    except ValidationError as exc:
        raise InvalidInputError(f"line {lines[0][0]}: invalid header: {exc}") from exc

    points: List[ManifoldPoint] = []
    for lineno, line in lines[1:]:
        try:
            values = np.asarray(json.loads(line), dtype=float)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"line {lineno}: not a JSON array of numbers: {exc}") from exc
        if values.ndim != 1 or values.size != header.size:
            raise DimensionMismatch(f"line {lineno}: expected {header.size} numbers, got {values.size}")
        try:
            points.append(_point(header, values))
        except ValidationError as exc:
            raise InvalidInputError(f"line {lineno}: {exc.errors()[0]['msg']}") from exc
    if not points:
        raise InvalidInputError("data file holds a header but no points")
    logger.debug(f"read {len(points)} {header.manifold} points")
    return points


def read_points(path: Union[str, Path]) -> List[ManifoldPoint]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read data file {path}: {exc}") from exc
    return loads_points(text)


def points_csv(points: Sequence[ManifoldPoint]) -> str:
    """One row per point; torus points as angles, everything else as flat coordinates."""
    kind, xs, _ = stack_points(points)
    if kind == "torus":
        rows = to_angles(xs)
        columns = [f"angle_{i + 1}" for i in range(rows.shape[1])]
    else:
        rows = xs.reshape(xs.shape[0], -1)
        columns = [f"x{i + 1}" for i in range(rows.shape[1])]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    return buffer.getvalue()
