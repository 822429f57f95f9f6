import json
import struct

import numpy as np
import pytest

from wesbench.cli import main
from wesbench.config import BenchmarkConfig
from wesbench.core import WeightedFrameSet
from wesbench.errors import ConfigError, FormatError
from wesbench.io import (decode_wetb, encode_wetb, load_frameset, read_json, read_wetb,
                         save_frameset, write_json, write_wetb)

SMALL = {
    "system": {"kind": "DOUBLE_WELL_2D"},
    "propagator": {"steps_per_segment": 200, "save_interval": 20},
    "reference": {"starts": [[-1.0, 0.0], [1.0, 0.0]], "segments_each": 10},
    "we": {"max_iterations": 4, "bins_per_dim": 3, "walkers_per_bin": 2},
    "tica": {"lag": 2, "n_components": 2},
    "msm": {"grid_n": 10},
    "macrostates": {"n_clusters": 8, "n_macrostates": 2},
    "metrics": {"histogram_bins": 30, "coverage_grid": 20},
    "seeds": {"reference": 3, "we": 4, "kmeans": 5},
}


# -- WETB ------------------------------------------------------------------------------

def test_wetb_round_trip(tmp_path, rng):
    frames = rng.normal(size=(7, 3, 2)).astype(np.float32)
    weights = rng.random(7)
    write_wetb(tmp_path / "a.wetb", frames, weights)
    f, w = read_wetb(tmp_path / "a.wetb")
    assert f.tobytes() == frames.tobytes() and w.tobytes() == weights.tobytes()
    s = WeightedFrameSet(frames, weights / weights.sum(), "WE_WEIGHTED")
    save_frameset(tmp_path / "b.wetb", s)
    back = load_frameset(tmp_path / "b.wetb", "WE_WEIGHTED")
    assert back.weights.tobytes() == s.weights.tobytes()
    assert not list(tmp_path.glob("*.tmp"))


def test_wetb_layout():
    buf = encode_wetb(np.ones((2, 1, 3), np.float32), [0.25, 0.75])
    assert buf[:4] == b"WETB"
    assert struct.unpack_from("<IIII", buf, 4) == (1, 2, 1, 3)
    assert np.frombuffer(buf, "<f8", 2, 20).tolist() == [0.25, 0.75]
    assert len(buf) == 20 + 16 + 24


def test_wetb_rejects_bad_input():
    good = encode_wetb(np.zeros((1, 1, 2)), [1.0])
    with pytest.raises(FormatError):
        decode_wetb(b"XXXX" + good[4:])
    with pytest.raises(FormatError):
        decode_wetb(good[:-1])
    with pytest.raises(FormatError):
        decode_wetb(good[:5])
    with pytest.raises(FormatError):
        decode_wetb(good[:4] + struct.pack("<I", 2) + good[8:])


def test_json_round_trip_is_bit_exact(tmp_path, rng):
    x = rng.random(20)
    write_json(tmp_path / "x.json", {"x": x, "n": np.int64(3)})
    d = read_json(tmp_path / "x.json")
    assert np.array(d["x"]).tobytes() == x.tobytes() and d["n"] == 3
    with pytest.raises(ValueError):
        write_json(tmp_path / "bad.json", {"x": float("nan")})


# -- config ---------------------------------------------------------------------------

def test_config_defaults():
    cfg = BenchmarkConfig.from_text("{}")
    assert cfg.we["max_iterations"] == 200 and cfg.we["walkers_per_bin"] == 3
    assert cfg.we["bins_per_dim"] == 7 and cfg.msm["grid_n"] == 80
    assert cfg.macrostates == {"n_clusters": 100, "n_macrostates": 5, "n_tics": 10}
    assert cfg.metrics["coverage_grid"] == 100 and cfg.metrics["histogram_bins"] == 100
    assert cfg.tica["n_components"] == 4


@pytest.mark.parametrize("text,line,fragment", [
    ('{\n  "we": {\n    "max_iterations": "many"\n  }\n}', 3, "max_iterations"),
    ('{\n  "we": {},\n  "bogus": 1\n}', 3, "bogus"),
    ('{\n  "msm": {\n    "grid_n": 80,\n    "lagg": 2\n  }\n}', 4, "lagg"),
    ('{\n  "tica": {"lag": 0}\n}', 2, "> 0"),
    ('{\n  "we": {\n    "bottleneck_bins": 1\n  }\n}', 3, "bool"),
    ('{\n  "system": {\n    "kind": "TRIPLE_WELL"\n  }\n}', 3, "TRIPLE_WELL"),
    ('{\n  "we": {"max_iterations": 3,}\n}', 2, "invalid JSON"),
    ('{\n  "propagator": {\n    "steps_per_segment": true\n  }\n}', 3, "int"),
])
def test_config_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as ei:
        BenchmarkConfig.from_text(text)
    assert ei.value.line == line
    assert fragment in str(ei.value) and f"line {line}" in str(ei.value)


def test_seed_override_and_paths(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"output_dir": "run"}))
    cfg = BenchmarkConfig.load(p).with_seed(10)
    assert cfg.seeds == {"reference": 10, "we": 11, "kmeans": 12}
    assert cfg.out_path == tmp_path / "run"


# -- CLI ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = dict(SMALL, output_dir="out")
    (d / "cfg.json").write_text(json.dumps(cfg, indent=2))
    c = str(d / "cfg.json")
    codes = [main(["reference", "--config", c]), main(["we-run", "--config", c]),
             main(["benchmark", "--config", c])]
    return d, c, codes


def test_cli_pipeline(small_run, capsys):
    d, c, codes = small_run
    assert codes == [0, 0, 0]
    out = d / "out"
    assert (out / "gt.wetrj").exists()
    assert read_json(out / "tica_model.json")["n_components"] == 2
    iters = sorted((out / "we").glob("iter_*.wetb"))
    assert len(iters) == 4
    per_seg = 200 // 20 + 1
    for it in iters:
        # every saved frame of a segment carries its walker's weight
        _, w = read_wetb(it)
        blocks = w.reshape(-1, per_seg)
        assert np.all(blocks == blocks[:, :1])
        assert abs(blocks[:, 0].sum() - 1) < 1e-12
    rep = read_json(out / "report.json")
    assert set(rep["rows"]) == {"KL", "W1"}
    assert rep["columns"] == ["TIC 0", "TIC 1", "TIC 2", "TIC 3", "Bonds", "Angles",
                              "Dihedrals", "Gyration"]
    assert len(list((out / "plots").glob("*.svg"))) >= 5
    assert main(["report", "--config", c]) == 0
    assert "coverage" in capsys.readouterr().out


def test_cli_walker_table_sums(small_run):
    d, _, _ = small_run
    lines = (d / "out" / "we" / "walkers.csv").read_text().splitlines()
    head = lines[0].split(",")
    it_col, w_col = head.index("iteration"), head.index("weight")
    sums = {}
    for row in lines[1:]:
        f = row.split(",")
        sums[f[it_col]] = sums.get(f[it_col], 0.0) + float(f[w_col])
    assert len(sums) >= 4
    assert all(abs(s - 1) < 1e-12 for s in sums.values())


def test_cli_reference_deterministic(small_run, tmp_path):
    d, _, _ = small_run
    cfg = dict(SMALL, output_dir=str(tmp_path / "again"))
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["reference", "--config", str(tmp_path / "cfg.json")]) == 0
    assert (tmp_path / "again" / "gt.wetrj").read_bytes() == (d / "out" / "gt.wetrj").read_bytes()


def test_cli_msm_weighting(small_run, tmp_path):
    d, _, _ = small_run
    cfg = dict(SMALL, output_dir=str(d / "out"))
    cfg["metrics"] = dict(SMALL["metrics"], weighting_mode="MSM_REWEIGHTED")
    (tmp_path / "msm.json").write_text(json.dumps(cfg))
    assert main(["benchmark", "--config", str(tmp_path / "msm.json")]) == 0
    rep = read_json(d / "out" / "report.json")
    assert rep["provenance"]["model_weighting"] == "MSM_REWEIGHTED"


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "we": {"walkers_per_bin": -1}\n}')
    assert main(["reference", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["reference", "--config", str(tmp_path / "missing.json")]) == 2
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps(dict(SMALL, output_dir="o")))
    assert main(["we-run", "--config", str(ok)]) == 1
    (tmp_path / "o").mkdir(exist_ok=True)
    (tmp_path / "o" / "gt.wetrj").write_bytes(b"nope")
    assert main(["tica-fit", "--config", str(ok)]) == 1
