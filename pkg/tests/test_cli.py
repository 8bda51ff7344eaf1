import json

import numpy as np
import pytest

from app.cli import main, parse_args
from app.models.points import SpdMatrix, UnitVector
from app.services.datafile import dumps_points, loads_points


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _write(tmp_path, points, name="data.jsonl"):
    path = tmp_path / name
    path.write_text(dumps_points(points))
    return str(path)


def test_sample_draws_unit_vectors(capsys):
    code, out, _ = _run(capsys, "sample", "--family", "vmf", "--dim", "2", "--kappa", "2", "--n", "100", "--seed", "1")
    assert code == 0
    points = loads_points(out)
    assert len(points) == 100
    norms = np.linalg.norm([x.coords for x in points], axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-12)


def test_sample_is_byte_identical_for_a_seed(capsys):
    argv = ("sample", "--family", "torus", "--dim", "3", "--kappa", "2", "--lambda", "1", "--n", "20", "--seed", "9")
    _, first, _ = _run(capsys, *argv)
    _, second, _ = _run(capsys, *argv)
    assert first == second
    _, other, _ = _run(capsys, *argv[:-1], "10")
    assert other != first


def test_sample_csv_lists_angles(capsys):
    code, out, _ = _run(
        capsys, "sample", "--family", "torus", "--dim", "2", "--kappa", "1,2", "--lambda", "0.5", "--n", "4", "--format", "csv"
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "angle_1,angle_2"
    assert len(lines) == 5


def test_frechet_mean_json(capsys, tmp_path):
    data = _write(tmp_path, [SpdMatrix(entries=np.eye(2)), SpdMatrix(entries=np.diag([np.e ** 2, np.e ** 2]))])
    code, out, _ = _run(capsys, "frechet-mean", "--data", data)
    assert code == 0
    report = json.loads(out)
    assert report["mean"]["manifold"] == "spd"
    np.testing.assert_allclose(report["mean"]["entries"], [np.e, 0.0, 0.0, np.e])
    assert report["converged"] is True


def test_estimate_closed_form_csv(capsys, tmp_path):
    data = _write(tmp_path, [UnitVector(coords=[1.0, 0.0]), UnitVector(coords=[0.0, 1.0])])
    code, out, _ = _run(capsys, "estimate", "--data", data, "--estimator", "mre_closed_form", "--format", "csv")
    assert code == 0
    header, row = out.splitlines()
    assert header == "x1,x2"
    np.testing.assert_allclose([float(v) for v in row.split(",")], [np.sqrt(0.5), np.sqrt(0.5)])


def test_estimate_mre_mc_reports_diagnostics(capsys, tmp_path):
    data = _write(tmp_path, [UnitVector(coords=[0.6, 0.8, 0.0]), UnitVector(coords=[0.0, 0.6, 0.8])])
    code, out, _ = _run(
        capsys,
        "estimate",
        "--data",
        data,
        "--estimator",
        "mre_mc",
        "--orbit",
        '{"kind": "vmf", "kappa": 1.5}',
        "--mcmc-iters",
        "300",
    )
    assert code == 0
    report = json.loads(out)
    assert report["orbit"] == {"kind": "vmf", "kappa": 1.5}
    assert report["diagnostics"]["chain_length"] == 200


def test_out_writes_a_file(capsys, tmp_path):
    target = tmp_path / "sample.jsonl"
    code, out, _ = _run(capsys, "sample", "--family", "wishart", "--dim", "2", "--dof", "4", "--n", "3", "--out", str(target))
    assert code == 0 and out == ""
    assert len(loads_points(target.read_text())) == 3


@pytest.mark.parametrize(
    "argv",
    [
        ("sample", "--family", "cube", "--dim", "2", "--n", "3"),
        ("sample", "--family", "vmf", "--dim", "2", "--n", "3"),
        ("sample", "--family", "vmf", "--dim", "2", "--kappa", "-1", "--n", "3"),
        ("scenario", "table9_p1_n1"),
        ("table1", "--reps", "0"),
        ("frechet-mean", "--data", "/nonexistent/data.jsonl"),
    ],
)
def test_configuration_errors_exit_with_one(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == 1
    assert "error" in err


def test_estimate_errors_exit_with_one(capsys, tmp_path):
    data = _write(tmp_path, [SpdMatrix(entries=np.eye(2))])
    assert _run(capsys, "estimate", "--data", data, "--estimator", "mle")[0] == 1
    assert _run(capsys, "estimate", "--data", data, "--estimator", "mre_mc", "--orbit", "{oops")[0] == 1


def test_numerical_failures_exit_with_two(capsys, tmp_path):
    data = _write(tmp_path, [UnitVector(coords=[1.0, 0.0, 0.0]), UnitVector(coords=[-1.0, 0.0, 0.0])])
    code, out, err = _run(capsys, "frechet-mean", "--data", data)
    assert code == 2
    assert out == ""
    assert "error" in err


def test_config_file_supplies_defaults(tmp_path):
    config = tmp_path / "run.env"
    config.write_text("reps=3\nmcmc-iters=90\nrotate-truth=yes\n")
    args = parse_args(["table1", "--config", str(config), "--reps", "5"])
    assert args.reps == 5
    assert args.mcmc_iters == 90
    assert args.rotate_truth is True


def test_config_file_rejects_unknown_keys(capsys, tmp_path):
    config = tmp_path / "run.env"
    config.write_text("replicates=3\n")
    assert _run(capsys, "table1", "--config", str(config))[0] == 1


def test_tiny_table1_csv(capsys):
    code, out, _ = _run(
        capsys,
        "table1",
        "--p",
        "2",
        "--n",
        "5",
        "--reps",
        "2",
        "--mcmc-iters",
        "60",
        "--inner-draws",
        "100",
        "--population-draws",
        "200",
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("scenario,estimator,p,n")
    assert len(lines) == 5
