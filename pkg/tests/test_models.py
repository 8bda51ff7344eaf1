import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError

from app.core.errors import ChainError, DimensionMismatch, InvalidInputError, NumericalError
from app.models.params import LangevinParams, OrbitLabel, TorusModelParams, TorusOrbit, WishartOrbit, WishartParams
from app.models.points import (
    HyperboloidPoint,
    ManifoldPoint,
    Orthogonal,
    SpdMatrix,
    StiefelFrame,
    TorusElement,
    TorusPoint,
    UnitVector,
)
from app.models.results import McmcConfig
from app.models.simulation import SimConfig


def test_unit_vector_rejects_non_unit_norm():
    with pytest.raises(ValidationError):
        UnitVector(coords=[1.0, 1.0])
    assert UnitVector.normalized([3.0, 4.0]).coords.tolist() == pytest.approx([0.6, 0.8])


def test_arrays_are_read_only():
    x = UnitVector(coords=[1.0, 0.0])
    with pytest.raises(ValueError):
        x.coords[0] = 2.0


def test_non_finite_coordinates_are_rejected():
    with pytest.raises(ValidationError):
        UnitVector(coords=[np.nan, 1.0])


def test_hyperboloid_point_checks_sheet_and_form():
    apex = HyperboloidPoint.apex(2, radius=2.0)
    assert apex.coords.tolist() == [0.0, 0.0, 2.0]
    with pytest.raises(ValidationError):
        HyperboloidPoint(coords=[0.0, -1.0])
    with pytest.raises(ValidationError):
        HyperboloidPoint(coords=[1.0, 1.0])


def test_spd_matrix_accepts_flat_entries_and_rejects_indefinite():
    x = SpdMatrix(entries=[2.0, 0.5, 0.5, 1.0])
    assert x.p == 2
    with pytest.raises(ValidationError):
        SpdMatrix(entries=[[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        SpdMatrix(entries=[[1.0, 0.1], [0.0, 1.0]])


def test_stiefel_frame_serialises_shape_and_round_trips():
    frame = StiefelFrame.canonical(3, 2)
    dumped = frame.model_dump()
    assert dumped["manifold"] == "stiefel"
    assert dumped["shape"] == [3, 2]
    assert len(dumped["entries"]) == 6
    back = TypeAdapter(ManifoldPoint).validate_python(dumped)
    assert isinstance(back, StiefelFrame)
    np.testing.assert_array_equal(back.entries, frame.entries)


def test_stiefel_frame_rejects_non_orthonormal_columns():
    with pytest.raises(ValidationError):
        StiefelFrame(entries=[[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])


def test_torus_point_angles():
    x = TorusPoint.from_angles([0.0, np.pi / 2, 3 * np.pi / 2])
    assert x.p == 3
    np.testing.assert_allclose(x.angles, [0.0, np.pi / 2, 3 * np.pi / 2], atol=1e-12)
    flat = TorusPoint(components=[1.0, 0.0, 0.0, 1.0])
    assert flat.p == 2


def test_manifold_point_union_dispatches_on_tag():
    point = TypeAdapter(ManifoldPoint).validate_python({"manifold": "sphere", "coords": [0.0, 1.0]})
    assert isinstance(point, UnitVector)


def test_isometry_compose_and_inverse():
    c, s = np.cos(0.3), np.sin(0.3)
    g = Orthogonal(matrix=[[c, -s], [s, c]])
    np.testing.assert_allclose(g.compose(g.inverse()).matrix, np.eye(2), atol=1e-12)
    with pytest.raises(ValidationError):
        Orthogonal(matrix=[[1.0, 1.0], [0.0, 1.0]])
    flip = TorusElement.diagonal(np.diag([1.0, -1.0]), 3)
    assert flip.determinants.tolist() == [-1.0, -1.0, -1.0]


def test_langevin_params_accept_aliases():
    theta = LangevinParams.model_validate({"H": StiefelFrame.canonical(3, 1), "lambda": 2.0})
    assert theta.lam == 2.0
    assert theta.model_dump(by_alias=True)["lambda"] == 2.0


def test_wishart_params_need_enough_degrees_of_freedom():
    with pytest.raises(ValidationError):
        WishartParams(dof=1, sigma=SpdMatrix(entries=np.eye(2)))


def test_wishart_orbit_eigenvalues_sorted_descending():
    orbit = WishartOrbit.from_eigenvalues([1.0, 3.0, 2.0], dof=5)
    assert orbit.eigenvalues.tolist() == [3.0, 2.0, 1.0]
    with pytest.raises(ValidationError):
        WishartOrbit(eigenvalues=[1.0, 2.0], dof=5)


def test_torus_params_check_interaction_count():
    with pytest.raises(ValidationError):
        TorusModelParams(mu=TorusPoint.from_angles([0.0, 1.0, 2.0]), kappa=[1.0, 1.0, 1.0], lam=[0.5])
    theta = TorusModelParams.constant([0.0, 1.0, 2.0], kappa=2.0, lam=1.0)
    assert theta.lam.tolist() == [1.0, 1.0, 1.0]


def test_orbit_label_union():
    orbit = TypeAdapter(OrbitLabel).validate_python({"kind": "torus", "kappa": [1.0, 2.0], "lambda": [0.5]})
    assert isinstance(orbit, TorusOrbit)
    assert orbit.p == 2


def test_mcmc_config_validation():
    with pytest.raises(ValidationError):
        McmcConfig(iterations=10, burn_in=10)
    cfg = McmcConfig(iterations=100, burn_in=40, thin=7)
    assert cfg.retained == 9


def test_sim_config_rejects_unknown_estimator():
    with pytest.raises(ValidationError):
        SimConfig(scenario="s", family="wishart", p=2, n=5, replicates=1, estimators=["adaptive_mre"])


def test_error_hierarchy_exit_codes():
    assert issubclass(DimensionMismatch, ValueError)
    assert InvalidInputError.exit_code == 1
    assert NumericalError.exit_code == 2
    err = ChainError("stuck", {"step": 3})
    assert "step" in str(err)
    assert err.exit_code == 2
