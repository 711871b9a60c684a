import csv
import io
import json
import math

import pytest
import yaml

from irregdim.cli import main

SMALL_IRREGULAR = {
    "map": {"kind": "doubling"},
    "potential": {"kind": "indicator", "pattern": "1"},
    "seed": 7,
    "irregular": {
        "mu": {"bernoulli": [0.5, 0.5]},
        "nu": {"bernoulli": [0.9, 0.1]},
        "stages": 3, "base_length": 20, "growth": 2.0, "eps0": 0.8, "delta": 0.2,
        "points": 3, "point_length": 2000, "cloud": 1000, "cloud_length": 32,
    },
}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if not isinstance(data, str) else data)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_map_info_manneville_pomeau(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "manneville_pomeau", "s": 1.0},
                                  "potential": {"kind": "indicator", "pattern": "1"}})
    code, out, _ = run(capsys, "map-info", "--config", cfg)
    assert code == 0
    report = json.loads(out)
    assert report["parabolic_points"] == [0.0]
    assert report["parabolic_hull"] == [[1.0]]
    assert report["branches"][0]["abs_derivative"][0] == pytest.approx(1.0)


def test_map_info_doubling_has_empty_hull(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "doubling"},
                                  "potential": {"kind": "indicator", "pattern": "1"}})
    code, out, _ = run(capsys, "map-info", "--config", cfg)
    assert code == 0
    report = json.loads(out)
    assert report["parabolic_points"] == []
    assert report["parabolic_hull"] == []


def test_malformed_yaml_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "map: {kind: doubling\n  seed: [")
    code, _, err = run(capsys, "map-info", "--config", cfg)
    assert code == 2
    assert "malformed" in err


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "doubling"}, "sead": 1})
    assert run(capsys, "map-info", "--config", cfg)[0] == 2


def test_missing_config_flag_exits_2(capsys):
    assert run(capsys, "map-info")[0] == 2


def test_empty_alpha_grid_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "doubling"}, "seed": 0,
                                  "potential": {"kind": "indicator", "pattern": "1"},
                                  "spectrum": {"alphas": []}})
    code, _, err = run(capsys, "spectrum", "--config", cfg)
    assert code == 2
    assert "empty" in err


def test_stochastic_command_needs_seed(tmp_path, capsys):
    data = dict(SMALL_IRREGULAR)
    data.pop("seed")
    cfg = write_config(tmp_path, data)
    code, _, err = run(capsys, "irregular", "--config", cfg)
    assert code == 2
    assert "seed" in err


def test_cantor_sup_single_row(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "cantor"}, "seed": 0,
                                  "spectrum": {"sup": True, "order": 0, "starts": 4}})
    code, out, _ = run(capsys, "spectrum", "--config", cfg)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    assert float(rows[0]["dim"]) == pytest.approx(math.log(2) / math.log(3), abs=1e-6)


def test_spectrum_grid_writes_one_row_per_alpha(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "doubling"}, "seed": 0,
                                  "potential": {"kind": "indicator", "pattern": "1"},
                                  "spectrum": {"alphas": [0.25, 0.5], "order": 0, "starts": 4}})
    out_file = tmp_path / "spec.csv"
    code, out, _ = run(capsys, "spectrum", "--config", cfg, "--out", str(out_file))
    assert code == 0 and out == ""
    rows = list(csv.DictReader(io.StringIO(out_file.read_text())))
    assert [float(r["alpha"]) for r in rows] == [0.25, 0.5]
    assert float(rows[1]["dim"]) == pytest.approx(1.0, abs=1e-6)


def test_degenerate_phase_exits_4(tmp_path, capsys):
    data = yaml.safe_load(yaml.safe_dump(SMALL_IRREGULAR))
    data["irregular"]["nu"] = {"bernoulli": [1.0, 0.0]}
    cfg = write_config(tmp_path, data)
    code, _, err = run(capsys, "irregular", "--config", cfg)
    assert code == 4
    assert "stage" in err


def test_equal_phases_warn_not_irregular(tmp_path, capsys):
    data = yaml.safe_load(yaml.safe_dump(SMALL_IRREGULAR))
    data["irregular"]["nu"] = {"bernoulli": [0.5, 0.5]}
    cfg = write_config(tmp_path, data)
    code, _, err = run(capsys, "irregular", "--config", cfg)
    assert code == 0
    assert "not irregular" in err


def test_irregular_output_directory_is_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL_IRREGULAR)
    outputs = []
    for k in range(2):
        out_dir = tmp_path / f"run{k}"
        assert run(capsys, "irregular", "--config", cfg, "--out", str(out_dir))[0] == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out_dir.iterdir())})
    assert set(outputs[0]) == {"construction.yaml", "local_dimension.csv", "points.csv",
                               "boxcount.csv", "oscillation.csv", "summary.json"}
    assert outputs[0] == outputs[1]
    summary = json.loads(outputs[0]["summary.json"])
    assert summary["targets"] == [[0.5], [0.9]]


def test_seed_flag_changes_output(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL_IRREGULAR)
    _, a, _ = run(capsys, "oscillation", "--config", cfg, "--seed", "1")
    _, b, _ = run(capsys, "oscillation", "--config", cfg, "--seed", "1")
    _, c, _ = run(capsys, "oscillation", "--config", cfg, "--seed", "2")
    assert a == b
    assert a != c


@pytest.mark.parametrize("depth", [0, 2.5, -3])
def test_bad_boxdim_depth_exits_2(tmp_path, capsys, depth):
    cfg = write_config(tmp_path, {"map": {"kind": "cantor"}, "boxdim": {"depth": depth}})
    assert run(capsys, "boxdim", "--config", cfg)[0] == 2


def test_boxdim_over_budget_exits_4(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "doubling"}, "boxdim": {"depth": 12, "budget": 1000}})
    code, _, err = run(capsys, "boxdim", "--config", cfg)
    assert code == 4
    assert "budget" in err


def test_boxdim_cantor(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "cantor"}, "boxdim": {"depth": 10}})
    code, out, _ = run(capsys, "boxdim", "--config", cfg)
    assert code == 0
    assert json.loads(out)["slope"] == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_bad_threads_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"kind": "doubling"}})
    assert run(capsys, "map-info", "--config", cfg, "--threads", "0")[0] == 2
