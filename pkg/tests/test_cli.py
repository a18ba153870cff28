import json

import numpy as np
import pytest

from replab import io
from replab.cli import disk_cloud, main, parse_profile
from replab.errors import GameError, InvalidProfile
from replab.game import RPS, RPS_FORK, one_player


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_bundled_games():
    assert np.array_equal(io.load_game(io.bundled_game_path("rps.json")).self_loop(0), RPS)
    assert np.array_equal(io.load_game(io.bundled_game_path("rps_fork.json")).self_loop(0), RPS_FORK)


def test_game_json_round_trip(tmp_path):
    g = one_player(RPS, name="rps")
    io.dump_game(g, tmp_path / "g.json")
    h = io.load_game(tmp_path / "g.json")
    assert h.sizes == g.sizes and np.array_equal(h.self_loop(0), RPS) and h.name == "rps"


def test_malformed_game(tmp_path):
    (tmp_path / "bad.json").write_text('{"players": [{"actions": 3}], "edges": [{"from": 0, "matrix": []}]}')
    with pytest.raises(GameError):
        io.load_game(tmp_path / "bad.json")


def test_parse_profile():
    assert parse_profile("1/3,1/3,1/3", (3,)).flat.tolist() == [1 / 3] * 3
    p = parse_profile("0.5,0.5;0.2,0.3,0.5", (2, 3))
    assert p.sizes == (2, 3)
    with pytest.raises(InvalidProfile):
        parse_profile("0.5,0.6", (2,))
    with pytest.raises(InvalidProfile):
        parse_profile("0.5,0.5", (3,))


def test_disk_cloud_deterministic():
    a = disk_cloud((1.0, 2.0), 0.5, 50, seed=3)
    assert np.array_equal(a, disk_cloud((1.0, 2.0), 0.5, 50, seed=3))
    assert not np.array_equal(a, disk_cloud((1.0, 2.0), 0.5, 50, seed=4))
    assert np.all(np.hypot(a[:, 0] - 1, a[:, 1] - 2) <= 0.5)
    # point k does not depend on how many points are drawn
    assert np.array_equal(a[:10], disk_cloud((1.0, 2.0), 0.5, 10, seed=3))


def test_simulate_rps(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--game", "rps.json", "--x0", "0.5,0.25,0.25", "--T", 100,
                       "--out", tmp_path)
    assert code == 0
    header, data = io.read_table(tmp_path / "trajectory.csv")
    assert header == ["t", "x_0_0", "x_0_1", "x_0_2"]
    assert len(data) == 2001
    side = json.loads((tmp_path / "diagnostics.json").read_text())
    assert side["diagnostics"]["kl_drift"] < 1e-6
    assert json.loads(out)["rows"] == 2001


def test_simulate_fork(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--game", "rps_fork.json", "--x0", "0.25,0.25,0.25,0.25",
                     "--T", 500, "--out", tmp_path)
    assert code == 0
    _, data = io.read_table(tmp_path / "trajectory.csv")
    assert data[-1, 4] < 1e-3


def test_simulate_rest_point(tmp_path, capsys):
    third = "0.3333333333333333"
    run(capsys, "simulate", "--game", "rps.json", "--x0", ",".join([third] * 3), "--T", 10, "--out", tmp_path)
    _, data = io.read_table(tmp_path / "trajectory.csv")
    assert np.all(data[:, 1:] == data[0, 1:])


def test_simulate_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "simulate", "--game", "rps.json", "--x0", "0.6,0.3,0.1", "--T", 20, "--out", tmp_path / d)
    for f in ("trajectory.csv", "diagnostics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_equilibrium_command(capsys, tmp_path):
    _, out, _ = run(capsys, "equilibrium", "--game", "rps.json")
    res = json.loads(out)
    assert res["is_interior"] and np.allclose(res["profile"], [[1 / 3] * 3])
    _, out, _ = run(capsys, "equilibrium", "--game", "rps_fork.json", "--out", tmp_path)
    res = json.loads(out)
    assert not res["is_interior"] and np.allclose(res["profile"], [[1 / 3, 1 / 3, 1 / 3, 0]])
    assert json.loads((tmp_path / "equilibrium.json").read_text()) == res


def test_equilibrium_all_ones(tmp_path, capsys):
    io.dump_game(one_player(np.ones((3, 3))), tmp_path / "ones.json")
    _, out, _ = run(capsys, "equilibrium", "--game", tmp_path / "ones.json")
    res = json.loads(out)
    assert res["degenerate"] and res["zero_sum_equivalent"]
    assert np.allclose(res["profile"], [[1 / 3] * 3])


def test_equilibrium_not_zero_sum(tmp_path, capsys):
    io.dump_game(one_player(np.diag([1.0, 0, 0])), tmp_path / "g.json")
    code, out, err = run(capsys, "equilibrium", "--game", tmp_path / "g.json")
    assert code != 0 and out == ""
    assert json.loads(err)["error"] == "NotZeroSum"


def test_classify_command(capsys):
    _, out, _ = run(capsys, "classify", "--game", "rps.json", "--x0", "0.5,0.25,0.25", "--T", 100)
    v = json.loads(out)
    assert v["prediction"] == "periodic" and v["measurement"] == "periodic" and v["agrees"]
    _, out, _ = run(capsys, "classify", "--game", "rps_fork.json", "--x0", "0.25,0.25,0.25,0.25")
    v = json.loads(out)
    assert v["measurement"] == "boundary_collapse" and v["limit_support"] == [[0, 1, 2]]


def test_cloud_command(tmp_path, capsys):
    code, out, _ = run(capsys, "cloud", "--game", "rps.json", "--count", 200, "--times", "0,30,60",
                       "--out", tmp_path / "a")
    assert code == 0
    summary = json.loads(out)
    assert summary["points_changing_color_band"] == 0
    assert summary["max_relative_deviation"] < 0.03
    header, vol = io.read_table(tmp_path / "a" / "volume.csv")
    assert header[:2] == ["t", "volume"] and vol.shape[0] == 3
    svgs = sorted((tmp_path / "a").glob("*.svg"))
    assert len(svgs) == 3
    bands = [[line.split('data-band="')[1].split('"')[0] for line in s.read_text().splitlines()
              if "<circle" in line] for s in svgs]
    assert bands[0] == bands[1] == bands[2]
    run(capsys, "cloud", "--game", "rps.json", "--count", 200, "--times", "0,30,60", "--out", tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_cloud_rejects_degenerate(tmp_path, capsys):
    code, _, err = run(capsys, "cloud", "--game", "rps.json", "--count", 1, "--out", tmp_path / "c")
    assert code != 0
    assert json.loads(err)["error"] == "DegenerateCloud"
    assert not (tmp_path / "c").exists()


def test_cloud_rejects_other_dimensions(tmp_path, capsys):
    code, _, err = run(capsys, "cloud", "--game", "rps_fork.json", "--out", tmp_path)
    assert code != 0 and json.loads(err)["error"] == "DegenerateCloud"


def test_verify_rps(capsys):
    code, out, _ = run(capsys, "verify", "--game", "rps.json")
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    names = {c["check"] for c in rep["checks"]}
    assert {"round_trip", "divergence_nullity", "kl_conservation", "boundary_gap"} <= names


def test_verify_fork(capsys):
    code, out, _ = run(capsys, "verify", "--game", "rps_fork.json")
    rep = json.loads(out)
    assert code == 0
    names = {c["check"] for c in rep["checks"]}
    assert "kl_decrease" in names and "kl_conservation" not in names


def test_verify_perturbed(tmp_path, capsys):
    a = RPS.copy()
    a[0, 1] = 1.2
    io.dump_game(one_player(a), tmp_path / "p.json")
    code, out, _ = run(capsys, "verify", "--game", tmp_path / "p.json")
    rep = json.loads(out)
    assert code != 0 and not rep["passed"]
    div = next(c for c in rep["checks"] if c["check"] == "divergence_nullity")
    assert div["status"] == "fail" and abs(div["witness"]["divergence"]) > 1e-6


def test_missing_game(capsys):
    code, _, err = run(capsys, "equilibrium", "--game", "/nonexistent/game.json")
    assert code != 0 and json.loads(err)["error"] == "FileNotFoundError"


def test_two_player_game(tmp_path, capsys):
    from replab.game import lift_to_two_player
    io.dump_game(lift_to_two_player(one_player(RPS)), tmp_path / "g2.json")
    _, out, _ = run(capsys, "equilibrium", "--game", tmp_path / "g2.json")
    res = json.loads(out)
    assert res["found"] and np.allclose(res["profile"], [[1 / 3] * 3] * 2)
    code, out, _ = run(capsys, "verify", "--game", tmp_path / "g2.json", "--T", 50)
    assert code == 0 and json.loads(out)["passed"]
    code, _, _ = run(capsys, "simulate", "--game", tmp_path / "g2.json", "--x0", "0.5,0.25,0.25;0.2,0.3,0.5",
                     "--T", 5, "--out", tmp_path / "s")
    header, _ = io.read_table(tmp_path / "s" / "trajectory.csv")
    assert code == 0 and header[-1] == "x_1_2"
