import json

import pytest
import yaml
from click.testing import CliRunner

from bubblekit import cli
from bubblekit.errors import DomainError


def run(args):
    return CliRunner().invoke(cli.main, args, catch_exceptions=False)


def test_unknown_config_key_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"dim": 7, "resonance": {"eps_minn": 0.1}}))
    res = run(["jacobi", "--config", str(path), "--out", str(tmp_path / "o")])
    assert res.exit_code != 0 and "resonance.eps_minn" in res.output
    assert not (tmp_path / "o").exists()


def test_invalid_dimension_rejected_before_compute(tmp_path):
    res = run(["constants", "--dim", "4", "--out", str(tmp_path / "o")])
    assert res.exit_code != 0 and "N = 4" in res.output
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("ladder", ["0.01,0.02", "0.01", "0.01,-0.001"])
def test_eps_ladder_validation(ladder):
    with pytest.raises(DomainError):
        cli.load_config(overrides={"eps_ladder": cli.parse_ladder(ladder)})


def test_config_roundtrip_and_hash(tmp_path):
    cfg = cli.load_config(overrides={"seed": 3})
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    again = cli.load_config(path)
    assert again.hash() == cfg.hash()
    assert cli.load_config(overrides={"seed": 4}).hash() != cfg.hash()
    assert cli.load_config(overrides={"seed": 3, "out": "elsewhere"}).hash() == cfg.hash()


def test_jacobi_command_passes(tmp_path):
    out = tmp_path / "o"
    res = run(["jacobi", "--out", str(out), "--no-figures"])
    assert res.exit_code == 0, res.output
    body = json.loads((out / "jacobi.json").read_text())
    assert body["schema"] == "jacobi/1" and body["passed"]
    assert all({"value", "tolerance", "passed"} <= set(g) for g in body["gates"])
    assert (out / "jacobi_spectrum.csv").exists() and not (out / "jacobi.png").exists()


def test_spectrum_rerun_byte_identical(tmp_path):
    out = tmp_path / "o"
    assert run(["spectrum", "--out", str(out)]).exit_code == 0
    first = (out / "spectrum.json").read_bytes()
    assert (out / "spectrum.png").exists()
    assert run(["spectrum", "--out", str(out)]).exit_code == 0
    assert (out / "spectrum.json").read_bytes() == first
    assert len((out / "runlog.jsonl").read_text().splitlines()) == 2


def test_stale_dependency_rebuilt(tmp_path):
    out = tmp_path / "o"
    run(["spectrum", "--out", str(out), "--seed", "1", "--no-figures"])
    old_hash = json.loads((out / "spectrum.json").read_text())["config_hash"]
    res = run(["constants", "--out", str(out), "--seed", "2", "--no-figures"])
    assert res.exit_code == 0, res.output
    body = json.loads((out / "constants.json").read_text())
    assert body["dependencies"]["spectrum"] == "rebuilt-stale"
    assert (out / f"spectrum.{old_hash}.json").exists()
    assert body["seed"] == 2


def test_params_exit_code_follows_gates(tmp_path):
    out = tmp_path / "o"
    res = run(["params", "--out", str(out), "--no-figures"])
    body = json.loads((out / "summary.json").read_text())
    assert res.exit_code == (0 if body["passed"] else 1)
    params = json.loads((out / "params.json").read_text())
    assert params["dependencies"] == {"spectrum": "built", "constants": "built"}
    assert len(params["payload"]["constants_hash"]) == 16


def test_resonance_command_finds_minima(tmp_path):
    out = tmp_path / "o"
    run(["resonance", "--out", str(out), "--no-figures"])
    body = json.loads((out / "resonance.json").read_text())
    gates = {g["name"]: g for g in body["gates"]}
    assert gates["detected minima"]["value"] >= 3 and gates["detected minima"]["passed"]
    assert gates["minima on m^2 rho^2 = D1 lambda1"]["passed"]
    lo, hi = body["payload"]["window"]
    assert 1e-3 <= lo < hi <= 1e-1
