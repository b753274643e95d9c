import math

import numpy as np
import pytest

from entirelab import cli
from entirelab.io import read_csv, read_manifest, read_snapshots


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "out"))
    return tmp_path / "out"


def values(out: str) -> dict:
    res = {}
    for line in out.splitlines():
        k, sep, v = line.partition(" = ")
        if sep:
            res[k.strip()] = v.strip()
    return res


def test_front_cubic_writes_profile(capsys, output_root):
    assert cli.main(["front", "--reaction", "cubic:0.3", "--output", "f"]) == 0
    res = values(capsys.readouterr().out)
    assert abs(float(res["c"]) - 0.4 / math.sqrt(2)) < 1e-4
    assert len(res["c"].replace("0.", "", 1).lstrip("0")) >= 16      # 17 significant digits
    header, cols = read_csv(output_root / "f" / "profile.csv")
    assert float(header["c"]) == float(res["c"])
    assert {"xi", "phi", "dphi"} <= set(cols)


def test_front_fisher_below_cmin(capsys):
    code = cli.main(["front", "--reaction", "fisher", "--speed", "1.0"])
    assert code != 0
    assert "c_min" in capsys.readouterr().err


def test_front_balanced_speed_zero(capsys):
    assert cli.main(["front", "--reaction", "cubic:0.5"]) == 0
    assert abs(float(values(capsys.readouterr().out)["c"])) < 1e-6


def test_config_keys_validated_and_overridden(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('reaction = "cubic:0.3"\nspeeed = 2.0\n')
    assert cli.main(["front", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "speeed" in capsys.readouterr().err
    good = tmp_path / "good.toml"
    good.write_text('reaction = "cubic:0.4"\n[grid]\ndx = 0.05\n')
    assert cli.main(["front", "--config", str(good), "--reaction", "cubic:0.3"]) == 0
    assert abs(float(values(capsys.readouterr().out)["c"]) - 0.4 / math.sqrt(2)) < 1e-4


def test_guards_before_compute(capsys):
    assert cli.main(["stability", "--experiment", "front", "--delta", "0.5"]) == cli.EXIT_CONFIG
    assert "theta" in capsys.readouterr().err
    assert cli.main(["entire", "--reaction", "cubic:0.7", "--case", "C1"]) == cli.EXIT_CONFIG
    assert "does not match" in capsys.readouterr().err
    assert cli.main(["entire", "--reaction", "cubic:0.5"]) == cli.EXIT_CONFIG
    assert cli.main(["entire", "--reaction", "cubic:0.3", "--n-list", "10"]) == cli.EXIT_CONFIG


def test_rerun_from_emitted_config_is_byte_identical(output_root, capsys):
    assert cli.main(["front", "--reaction", "cubic:0.3", "--lattice-dx", "0.1",
                     "--output", "one"]) == 0
    cfg = output_root / "one" / "config.toml"
    assert cli.main(["front", "--config", str(cfg), "--output", "two"]) == 0
    for name in ("profile.csv", "profile_lattice.csv", "checks.csv"):
        assert (output_root / "one" / name).read_bytes() == (output_root / "two" / name).read_bytes()
    man = read_manifest(output_root / "one" / "manifest.txt")
    assert man["config.reaction"] == "cubic:0.3" and man["all_pass"] is True


def test_dump_and_load_config_roundtrip(tmp_path):
    cfg = cli.RunConfig(reaction="fisher", dx=0.1, n_list=[5.0, 10.0], speed=2.5,
                        calibrated={"M9": 1.9073486328125e-06})
    path = tmp_path / "c.toml"
    path.write_text(cli.dump_config(cfg))
    assert cli.load_config(str(path), {}) == cfg


def test_calibrated_constant_pinned_and_cached(output_root):
    cfg = cli.RunConfig(calibrated={"M7": 1.5})
    assert cli._calibrated(cfg, "M7", ("k",), lambda: pytest.fail("recomputed")) == 1.5
    calls = []
    plain = cli.RunConfig()
    first = cli._calibrated(plain, "M7", ("k",), lambda: calls.append(1) or 2.25)
    again = cli._calibrated(plain, "M7", ("k",), lambda: calls.append(1) or 9.0)
    assert first == again == 2.25 and calls == [1]


def test_evolve_and_report(output_root, capsys):
    assert cli.main(["evolve", "--reaction", "cubic:0.3", "--initial", "front", "--T", "3",
                     "--halfwidth", "20", "--output", "ev"]) == 0
    out = capsys.readouterr().out
    assert "PASS schauder_ux" in out
    recs = read_snapshots(output_root / "ev" / "snapshots.bin")
    assert recs[-1][0] == pytest.approx(3.0)
    assert cli.main(["report", "--run", str(output_root / "ev")]) == 0
    assert (output_root / "ev" / "snapshots.png").exists()
    assert (output_root / "ev" / "range.png").exists()


def test_sweep_over_alpha_parallel(output_root, capsys):
    assert cli.main(["sweep", "--over", "alpha", "--values", "0.2,0.5,0.7", "--jobs", "2",
                     "--output", "sw"]) == 0
    _, cols = read_csv(output_root / "sw" / "sweep.csv")
    assert np.all(cols["error"] < 1e-4)
    assert np.sign(cols["c"][2]) == -1 and abs(cols["c"][1]) < 1e-6


def test_stability_front_row(output_root, capsys):
    assert cli.main(["stability", "--experiment", "front", "--delta", "0.05",
                     "--output", "st"]) == 0
    _, cols = read_csv(output_root / "st" / "stability.csv")
    assert cols["fitted_rate"][0] > 0
    assert (output_root / "st" / "series_front.csv").exists()
