import json
import subprocess
import sys

import numpy as np
import pytest

from ridgeconf import io
from ridgeconf.cli import dispatch
from ridgeconf.density import sample, true_ridge
from ridgeconf.kde import EvalGrid
from ridgeconf.scenarios import arc_mixture


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    m = arc_mixture()
    io.write_json(root / "model.json", m.to_dict())
    io.write_sample(root / "sample.csv", sample(m, 400, 2))
    return root, m


def _run(argv, capsys):
    code = dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_constants(capsys):
    code, out, _ = _run(["constants", "--dim", "2", "--exponent", "5"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["a_K"] > 1


def test_no_arguments_is_usage_error(capsys):
    code, _, err = _run([], capsys)
    assert code == 2 and "usage" in err


def test_console_script_exit_code():
    proc = subprocess.run([sys.executable, "-m", "ridgeconf"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_unknown_flag(capsys):
    code, _, err = _run(["constants", "--dim", "2", "--bogus"], capsys)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "usage"


@pytest.mark.parametrize("content", [None, "", "x,y\n1,a\n", "1,2\n3\n", "1,nan\n"])
def test_bad_input_exit_3(tmp_path, capsys, content):
    path = tmp_path / "s.csv"
    if content is not None:
        path.write_text(content)
    code, _, err = _run(["estimate", "--input", path, "--h", "0.5", "--out", tmp_path], capsys)
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 3


def test_bad_model_exit_3(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({"components": [{"weight": 1.0}]}))
    code, _, _ = _run(["truth", "--model", tmp_path / "m.json", "--out", tmp_path], capsys)
    assert code == 3


def test_precondition_exit_4(files, tmp_path, capsys):
    root, _ = files
    code, _, err = _run(["truth", "--model", root / "model.json", "--r", "2", "--out", tmp_path], capsys)
    assert code == 4
    code, _, _ = _run(["region", "--input", root / "sample.csv", "--h", "1.5", "--grid", "0.2",
                       "--out", tmp_path], capsys)
    assert code == 4


def test_truth_matches_library(files, tmp_path, capsys):
    root, m = files
    code, _, _ = _run(["truth", "--model", root / "model.json", "--r", "1", "--spacing", "0.05",
                       "--out", tmp_path], capsys)
    assert code == 0
    rows, header = io.read_points_csv(tmp_path / "ridge.csv")
    assert header[:2] == ["x1", "x2"]
    np.testing.assert_array_equal(rows[:, :2], true_ridge(m, 1, 0.05).points)
    meta = io.read_json(tmp_path / "ridge.json")
    assert meta["polylines"] and meta["total_length"] > 0
    assert io.read_json(tmp_path / "config.json")["command"] == "truth"


def _outputs(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_estimate_and_region_reruns_identical(files, tmp_path, capsys):
    root, _ = files
    runs = {
        "e": ["estimate", "--input", root / "sample.csv", "--h", "0.7", "--grid", "0.1",
              "--box", "0.2,1.25,-0.9,0.5", "--out", tmp_path / "e"],
        "r": ["--threads", "2", "region", "--input", root / "sample.csv", "--h", "0.7", "--l", "1.1",
              "--grid", "0.1", "--box", "0.2,1.25,-0.9,0.5", "--out", tmp_path / "r"],
    }
    for key, argv in runs.items():
        assert _run(argv, capsys)[0] == 0
        first = _outputs(tmp_path / key)
        assert _run(argv, capsys)[0] == 0
        assert _outputs(tmp_path / key) == first

    summary = io.read_json(tmp_path / "r" / "region.json")
    grid, fields = io.read_grid(tmp_path / "r" / "region_grid")
    assert summary["cells_in_region"] == int(fields["mask"].sum())
    assert set(fields) == {"mask", "plain_mask", "stat", "lambda_rp1", "grad_norm"}
    assert grid.shape == (11, 15)


def test_coverage_rerun_identical(files, tmp_path, capsys):
    root, _ = files
    argv = ["coverage", "--model", root / "model.json", "--n", "500", "--h", "0.7", "--replicates", "2",
            "--probe-resolution", "0.05", "--seed", "4", "--out", tmp_path]
    snapshots = []
    for _ in range(2):
        code, _, err = _run(argv, capsys)
        assert code == 0
        assert "runtime_seconds" in json.loads(err.strip().splitlines()[-1])
        snapshots.append(_outputs(tmp_path))
    assert snapshots[0] == snapshots[1]
    report = io.read_json(tmp_path / "report.json")
    assert report["B"] == 2 and "runtime_seconds" not in report
    rows, header = io.read_points_csv(tmp_path / "replicates.csv")
    assert header[:2] == ["replicate", "covered"] and rows.shape[0] == 2


def test_gumbel_check_cli(files, tmp_path, capsys):
    root, _ = files
    code, out, _ = _run(["coverage", "--model", root / "model.json", "--n", "500", "--h", "0.5",
                         "--replicates", "3", "--check", "gumbel", "--probe-resolution", "0.05",
                         "--out", tmp_path], capsys)
    assert code == 0
    assert 0 <= json.loads(out)["ks_distance"] <= 1


class TestRoundTrip:
    def test_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(20, 3)) * 10.0 ** rng.integers(-300, 300, size=(20, 3))
        io.write_csv(tmp_path / "a.csv", a, ["p", "q", "r"])
        back, header = io.read_points_csv(tmp_path / "a.csv")
        assert header == ["p", "q", "r"]
        np.testing.assert_array_equal(back, a)

    def test_json(self, tmp_path):
        rng = np.random.default_rng(1)
        obj = {"x": rng.normal(size=5).tolist(), "n": 3, "nested": {"flag": True, "none": None,
               "v": float(rng.normal())}}
        io.write_json(tmp_path / "a.json", obj)
        assert io.read_json(tmp_path / "a.json") == obj

    def test_grid(self, tmp_path):
        grid = EvalGrid([0.0, -1.0], [0.1, 0.25], (4, 6))
        rng = np.random.default_rng(2)
        fields = {"u": rng.normal(size=grid.shape), "v": rng.normal(size=grid.shape)}
        io.write_grid(tmp_path / "g", grid, fields)
        g2, back = io.read_grid(tmp_path / "g")
        np.testing.assert_array_equal(g2.origin, grid.origin)
        assert g2.shape == grid.shape
        for k in fields:
            np.testing.assert_array_equal(back[k], fields[k])

    def test_grid_size_mismatch(self, tmp_path):
        grid = EvalGrid([0.0], [1.0], (5,))
        io.write_grid(tmp_path / "g", grid, {"u": np.zeros(5)})
        (tmp_path / "g.bin").write_bytes(b"\0" * 16)
        from ridgeconf.errors import InputFormatError

        with pytest.raises(InputFormatError):
            io.read_grid(tmp_path / "g")

    def test_model(self, tmp_path):
        m = arc_mixture()
        io.write_json(tmp_path / "m.json", m.to_dict())
        back = io.read_model(tmp_path / "m.json")
        for a, b in zip(m.components, back.components):
            np.testing.assert_array_equal(a.mean, b.mean)
            np.testing.assert_array_equal(a.cov, b.cov)
            assert a.weight == b.weight
        np.testing.assert_array_equal(m.domain_box, back.domain_box)
