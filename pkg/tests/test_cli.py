import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from sbmc.cli import CSV_COLUMNS, main

ROOT = Path(__file__).resolve().parents[1]
QUICK = ROOT / "configs" / "quick.toml"


def load(path):
    data = json.loads(Path(path).read_text())
    data.pop("created")
    return data


@pytest.fixture(scope="module")
def quick_runs(tmp_path_factory):
    outs = [tmp_path_factory.mktemp(f"run{i}") for i in range(2)]
    codes = [main(["estimate", str(QUICK), "--out", str(o)]) for o in outs]
    return outs, codes


def test_estimate_is_reproducible(quick_runs):
    (a, b), codes = quick_runs
    assert codes == [0, 0]
    assert load(a / "results.json") == load(b / "results.json")
    assert (a / "results.csv").read_text() == (b / "results.csv").read_text()


def test_results_match_schema(quick_runs):
    (a, _), _ = quick_runs
    schema = json.loads(resources.files("sbmc").joinpath("schema/results.schema.json").read_text())
    data = json.loads((a / "results.json").read_text())
    jsonschema.validate(data, schema)
    sources = {r["source"] for r in data["records"]}
    assert {"mcmc", "oracle"} <= sources
    header = (a / "results.csv").read_text().splitlines()[0].split(",")
    assert header == CSV_COLUMNS


def test_seed_changes_results(tmp_path, quick_runs):
    (a, _), _ = quick_runs
    main(["estimate", str(QUICK), "--out", str(tmp_path), "--seed", "99"])
    pick = lambda d: [r["value"] for r in d["records"] if r["source"] == "mcmc"]
    assert pick(load(tmp_path / "results.json")) != pick(load(a / "results.json"))


def test_strict_mode_flags_failed_identity(tmp_path):
    assert main(["estimate", str(QUICK), "--out", str(tmp_path), "--strict"]) == 1


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(QUICK.read_text().replace("[sampler]", "[sampler]\nbogus = 1"))
    assert main(["estimate", str(bad), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "sampler.bogus" in err and "bad.toml:" in err


def test_oracle_command(tmp_path):
    assert main(["oracle", str(QUICK), "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "oracle.json").read_text())
    names = {r["name"] for r in data["records"]}
    assert "perturbative_energy" in names and "ed:energy" in names


def test_sweep_over_T(tmp_path):
    cfg = tmp_path / "small.toml"
    text = QUICK.read_text().replace("sweeps = 300", "sweeps = 40").replace("burn_in = 100", "burn_in = 20")
    cfg.write_text(text.replace("enabled = true", "enabled = false"))
    assert main(["sweep", str(cfg), "--axis", "T", "--values", "7,8", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep_T.csv").read_text().splitlines()
    assert rows[0] == "axis,point,name,value,stderr,systematic"
    assert {r.split(",")[1] for r in rows[1:]} == {"7.0", "8.0"}
    assert main(["sweep", str(cfg), "--axis", "T", "--values", "5", "--out", str(tmp_path)]) == 2


def test_beta_ladder_domain(tmp_path):
    cfg = tmp_path / "small.toml"
    cfg.write_text(QUICK.read_text().replace("sweeps = 300", "sweeps = 40").replace("enabled = true",
                                                                                   "enabled = false"))
    assert main(["sweep", str(cfg), "--axis", "beta", "--values", "0.5,1.0", "--out", str(tmp_path)]) == 2
    assert main(["sweep", str(cfg), "--axis", "beta", "--values", "0.5,0.9", "--out", str(tmp_path)]) == 0
