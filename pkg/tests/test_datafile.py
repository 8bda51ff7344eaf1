import json

import numpy as np
import pytest

from app.core.errors import DimensionMismatch, InvalidInputError
from app.models.points import HyperboloidPoint, SpdMatrix, StiefelFrame, TorusPoint, UnitVector
from app.services.datafile import dumps_points, header_for, loads_points, points_csv, read_points


def test_header_and_rows():
    pts = [SpdMatrix(entries=np.diag([1.0, 2.0])), SpdMatrix(entries=np.eye(2))]
    text = dumps_points(pts)
    lines = text.splitlines()
    assert json.loads(lines[0]) == {"manifold": "spd", "shape": [2, 2]}
    assert json.loads(lines[1]) == [1.0, 0.0, 0.0, 2.0]
    assert len(lines) == 3


def test_hyperboloid_header_carries_radius():
    pts = [HyperboloidPoint.apex(2, radius=2.0)]
    header = header_for(pts)
    assert header.radius == 2.0
    back = loads_points(dumps_points(pts))
    assert back[0].radius == 2.0


def test_stiefel_and_torus_read_back():
    frame = StiefelFrame.canonical(3, 2)
    torus = TorusPoint.from_angles([0.5, 4.0])
    for pts in ([frame], [torus]):
        back = loads_points(dumps_points(pts))
        assert type(back[0]) is type(pts[0])
        np.testing.assert_allclose(back[0].as_array(), pts[0].as_array())


def test_blank_lines_are_skipped():
    text = '{"manifold": "sphere", "shape": [2]}\n\n[1.0, 0.0]\n\n[0.0, 1.0]\n'
    assert len(loads_points(text)) == 2


@pytest.mark.parametrize(
    "text, error, fragment",
    [
        ("", InvalidInputError, "empty"),
        ('{"manifold": "sphere", "shape": [2]}\n', InvalidInputError, "no points"),
        ('{"manifold": "cube", "shape": [2]}\n[1, 0]\n', InvalidInputError, "line 1"),
        ('{"manifold": "sphere", "shape": [2]}\n[1, 0]\n[1, 0, 0]\n', DimensionMismatch, "line 3"),
        ('{"manifold": "sphere", "shape": [2]}\n[1, 0]\nnot json\n', InvalidInputError, "line 3"),
        ('{"manifold": "sphere", "shape": [2]}\n[2, 0]\n', InvalidInputError, "line 2"),
    ],
)
def test_parse_errors_name_the_line(text, error, fragment):
    with pytest.raises(error) as excinfo:
        loads_points(text)
    assert fragment in str(excinfo.value)


def test_read_points_missing_file(tmp_path):
    with pytest.raises(InvalidInputError):
        read_points(tmp_path / "nope.jsonl")
    path = tmp_path / "data.jsonl"
    path.write_text(dumps_points([UnitVector(coords=[0.0, 1.0])]))
    assert read_points(path)[0].coords.tolist() == [0.0, 1.0]


def test_points_csv():
    text = points_csv([TorusPoint.from_angles([0.25, 1.5])])
    header, row = text.splitlines()
    assert header == "angle_1,angle_2"
    np.testing.assert_allclose([float(v) for v in row.split(",")], [0.25, 1.5])
    assert points_csv([UnitVector(coords=[1.0, 0.0])]).splitlines() == ["x1,x2", "1.0,0.0"]
