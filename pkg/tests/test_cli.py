import hashlib

import numpy as np
import pytest

from gendim import generate_trajectory, make_system
from gendim.cli import ConfigError, compare, load_config_file, main, parse_list, resolve_config

SMALL_GAMMA = ["run", "gamma", "--system", "three-x", "--length", "100000", "--targets", "300",
               "--q", "0,2,3", "--r-min", "0.001", "--r-max", "0.05", "--radii", "6"]


def csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_parse_list():
    assert parse_list("2..6") == [2.0, 3.0, 4.0, 5.0, 6.0]
    assert parse_list("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_list("-1,0.5,3..4", integer=False) == [-1.0, 0.5, 3.0, 4.0]
    assert parse_list("2..4", integer=True) == [2, 3, 4]
    for bad in ("", "5..2", "0:1:0", "1,x"):
        with pytest.raises(ValueError):
            parse_list(bad)
    with pytest.raises(ConfigError):
        parse_list("1.5", integer=True)


def test_config_precedence(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("[run]\n# comment\nlength=5000\nquantile=0.99\n")
    cfg = resolve_config("localdim", load_config_file(f), {"quantile": "0.95"})
    assert cfg["length"] == 5000 and cfg["quantile"] == 0.95 and cfg["targets"] == 1000
    f.write_text("nonsense=1\n")
    with pytest.raises(ConfigError):
        load_config_file(f)


def test_invalid_quantile_exits_2(tmp_path, capsys):
    assert main(["--out", str(tmp_path / "o"), "run", "localdim", "--quantile", "1.2"]) == 2
    assert "quantile" in capsys.readouterr().err
    assert main(["run", "no-such-experiment"]) == 2
    assert main(["run", "tail", "--q", "1.5"]) == 2
    assert main(["--bogus"]) == 2


def test_insufficient_data_exits_3(tmp_path):
    assert main(["run", "localdim", "--system", "three-x", "--length", "500", "--targets", "10",
                 "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o" / "manifest.txt").exists()


def test_rerun_from_config_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--seed", "7", "--out", str(a)] + SMALL_GAMMA) == 0
    assert main(["run", "--config", str(a / "config.txt"), "--out", str(b), "--threads", "2"]) == 0
    assert csv_bytes(a) == csv_bytes(b) and len(csv_bytes(a)) == 2
    first = (a / "spectrum.csv").read_text().splitlines()[0]
    assert first.startswith("# config_hash=")
    assert first.split()[1] == (a / "manifest.txt").read_text().splitlines()[0]
    man = (a / "manifest.txt").read_text()
    for section in ("[config]", "[versions]", "[timing]", "[seeds]", "[files]"):
        assert section in man
    assert "seed=7" in man and "spectrum.csv sha256=" in man
    assert not list(a.glob(".staging-*"))


def test_refuses_to_overwrite(tmp_path):
    out = tmp_path / "o"
    assert main(["--out", str(out)] + SMALL_GAMMA) == 0
    before = csv_bytes(out)
    assert main(["--out", str(out)] + SMALL_GAMMA) == 2
    assert csv_bytes(out) == before


def test_seed_changes_results(tmp_path):
    assert main(["--seed", "1", "--out", str(tmp_path / "a")] + SMALL_GAMMA) == 0
    assert main(["--seed", "2", "--out", str(tmp_path / "b")] + SMALL_GAMMA) == 0
    assert (tmp_path / "a" / "spectrum.csv").read_bytes() != (tmp_path / "b" / "spectrum.csv").read_bytes()


def test_compare(tmp_path):
    a = tmp_path / "a"
    assert main(["--out", str(a)] + SMALL_GAMMA) == 0
    rows = compare(a / "spectrum.csv", a / "spectrum.csv", tmp_path / "cmp.csv")
    assert [r[0] for r in rows] == [0.0, 2.0, 3.0]
    assert all(r[3] == 0.0 and r[7] == 0.0 for r in rows)
    lines = (tmp_path / "cmp.csv").read_text().splitlines()
    assert lines[0].startswith("# compare a=")
    assert lines[1] == "q,dq_a,dq_b,diff,stderr_a,stderr_b,stderr_combined,z"
    b = tmp_path / "b"
    assert main(["--out", str(b)] + SMALL_GAMMA[:-6] + ["--q", "2,3"] + SMALL_GAMMA[-4:]) == 0
    assert main(["compare", str(a / "spectrum.csv"), str(b / "spectrum.csv")]) == 2


def test_dei_and_ratefn_outputs(tmp_path):
    assert main(["run", "dei", "--system", "three-x", "--length", "200000", "--replicas", "2",
                 "--q", "2", "--out", str(tmp_path / "d")]) == 0
    methods = [l.split(",")[4] for l in (tmp_path / "d" / "dei.csv").read_text().splitlines()[2:]]
    assert set(methods) == {"Suveges", "AnalyticClosedForm", "AnalyticQuadrature"}
    assert main(["run", "ratefn", "--length", "20000", "--targets", "200", "--r-levels", "0.1,0.05",
                 "--out", str(tmp_path / "r")]) == 0
    kinds = {l.split(",")[2] for l in (tmp_path / "r" / "ratefn.csv").read_text().splitlines()[2:]}
    assert {"Q", "Qhat", "fAlpha", "EmpiricalLocalDim"} <= kinds


def test_ingest_spectrum(tmp_path):
    x = generate_trajectory(make_system("sierpinski"), 3, 30000)
    x.to_csv(tmp_path / "s.csv")
    out = tmp_path / "o"
    assert main(["run", "ingest-spectrum", "--input", str(tmp_path / "s.csv"), "--p", "0.95,0.98",
                 "--stride", "100", "--out", str(out)]) == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[1] == "p,d_min,d_mean,d_q2,d_q3,d_max,r_eff,n_dropped"
    vals = np.array([float(v) for v in lines[2].split(",")])
    assert vals[1] <= vals[3] <= vals[2] <= vals[5]
    digest = hashlib.sha256((tmp_path / "s.csv").read_bytes()).hexdigest()
    assert f"sha256={digest} states=30000 dim=2" in (out / "manifest.txt").read_text()
    assert main(["run", "ingest-spectrum", "--input", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "p")]) == 2
