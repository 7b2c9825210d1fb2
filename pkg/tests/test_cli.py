import csv
import json

import jsonschema
import numpy as np
import pytest

from flexregion.cli import SCHEMA_DIR, main


def _schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def _run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture(scope="module")
def noon_region(tmp_path_factory):
    out = tmp_path_factory.mktemp("noon")
    assert main(["region", "--times", "12:00,19:00", "--k", "8", "--out", str(out)]) == 0
    return out


def test_region_outputs_match_schema(noon_region):
    schema = _schema("polygon")
    for stem in ("1200", "1900"):
        doc = json.loads((noon_region / f"region_{stem}.json").read_text())
        jsonschema.validate(doc, schema)
        assert len(doc["vertices"]) == 8 and doc["day_type"] == "sunny"
        assert (noon_region / f"region_{stem}.svg").is_file()
    with open(noon_region / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["time"] for r in rows] == ["12:00", "19:00"]
    assert float(rows[0]["area_kw_kvar"]) > 0


def test_region_rerun_is_byte_identical(noon_region, tmp_path):
    assert main(["region", "--times", "12:00,19:00", "--k", "8", "--out", str(tmp_path)]) == 0
    for name in ("region_1200.json", "region_1900.json", "summary.csv", "region_1200.svg"):
        assert (tmp_path / name).read_bytes() == (noon_region / name).read_bytes(), name


def test_too_few_directions_is_usage_error(capsys, tmp_path):
    rc, _, err = _run(capsys, "region", "--k", "2", "--out", str(tmp_path / "x"))
    assert rc == 2
    assert json.loads(err)["error"] == "config"
    assert not (tmp_path / "x").exists()


@pytest.mark.parametrize("argv", [["region", "--eps-v", "1.5"], ["region", "--jobs", "0"],
                                  ["region", "--day-type", "rainy"], ["frobnicate"]])
def test_bad_arguments(capsys, argv):
    rc, _, err = _run(capsys, *argv)
    assert rc == 2 and "error" in json.loads(err)


def test_missing_input_file(capsys, tmp_path):
    rc, _, err = _run(capsys, "region", "--feeder", str(tmp_path / "none.json"), "--out", str(tmp_path))
    assert rc == 2
    assert json.loads(err)["error"] == "missing-file"


def test_corrupt_config_reports_byte_offset(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    text = '{"k": 8,\n "eps_v": 0.05,, "seed": 1}'
    cfg.write_text(text)
    rc, _, err = _run(capsys, "region", "--config", str(cfg), "--out", str(tmp_path))
    doc = json.loads(err)
    assert rc == 1 and doc["error"] == "parse"
    assert doc["offset"] == text.index(",,") + 1
    assert doc["line"] == 2


def test_corrupt_region_file(capsys, tmp_path):
    bad = tmp_path / "region_1200.json"
    bad.write_bytes(b'{"time": "12:00", "vertices": [[0, 0]')
    rc, _, err = _run(capsys, "validate", str(bad), "--out", str(tmp_path))
    doc = json.loads(err)
    assert rc == 1 and doc["error"] == "parse" and doc["offset"] == len(bad.read_bytes())


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"k": 8, "colour": "red"}')
    rc, _, err = _run(capsys, "region", "--config", str(cfg))
    assert rc == 2 and "colour" in json.loads(err)["message"]


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 4, "eps_v": 0.1, "times": ["03:00"], "out": str(tmp_path / "from_cfg")}))
    out = tmp_path / "from_flag"
    assert main(["region", "--config", str(cfg), "--k", "6", "--out", str(out), "--no-svg"]) == 0
    doc = json.loads((out / "region_0300.json").read_text())
    assert len(doc["vertices"]) == 6                    # flag beats config
    assert doc["epsilons"]["eps_v"] == 0.1              # config beats default
    assert doc["epsilons"]["eps_i"] == 0.05             # default
    assert not (tmp_path / "from_cfg").exists()
    assert not (out / "region_0300.svg").exists()


def test_validate_region_file(noon_region, tmp_path, capsys):
    region = noon_region / "region_1900.json"
    rc, out, _ = _run(capsys, "validate", str(region), "--samples", "1000", "--base", "--out", str(tmp_path))
    assert rc == 0
    doc = json.loads((tmp_path / "validate_1900.json").read_text())
    jsonschema.validate(doc, _schema("validation"))
    assert [r["point"] for r in doc["reports"]][:2] == ["base", "vertex 0"]
    assert len(doc["reports"]) == 9
    base = doc["reports"][0]
    assert base["max_voltage_violation"] == 0.0 and base["max_current_violation"] == 0.0
    for r in doc["reports"]:
        assert r["max_voltage_violation"] <= r["epsilons"]["eps_v"]
        assert r["max_current_violation"] <= r["epsilons"]["eps_i"]
    assert json.loads(out)["reports"] == 9


def test_validate_without_decisions(noon_region, tmp_path, capsys):
    doc = json.loads((noon_region / "region_1200.json").read_text())
    del doc["decisions"]
    p = tmp_path / "stripped.json"
    p.write_text(json.dumps(doc))
    rc, _, err = _run(capsys, "validate", str(p), "--out", str(tmp_path))
    assert rc == 1 and json.loads(err)["error"] == "region"


def _history(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day_type", "power_pu", "error_pu"])
        w.writerows(rows)


def test_fit_errors_single_gaussian(tmp_path, capsys):
    rng = np.random.default_rng(5)
    hist = tmp_path / "h.csv"
    _history(hist, [("sunny", 0.6, e) for e in rng.normal(0.0, 0.02, 1500)])
    rc, _, err = _run(capsys, "fit-errors", "--errors", str(hist), "--out", str(tmp_path), "--k-max", "4")
    assert rc == 0 and err == ""
    doc = json.loads((tmp_path / "error_table.json").read_text())
    jsonschema.validate(doc, _schema("error_table"))
    (model,) = doc["models"]
    assert len(model["weights"]) == 1
    with open(tmp_path / "aic_bic.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["k"]) for r in rows] == [1, 2, 3, 4]


def test_fit_errors_small_bin_warns(tmp_path, capsys):
    rng = np.random.default_rng(6)
    hist = tmp_path / "h.csv"
    rows = [("cloudy", 0.6, e) for e in rng.normal(0, 0.02, 600)]
    rows += [("cloudy", 0.1, e) for e in rng.normal(0, 0.01, 12)]
    _history(hist, rows)
    rc, _, err = _run(capsys, "fit-errors", "--errors", str(hist), "--out", str(tmp_path))
    assert rc == 0
    warnings = [json.loads(line)["warning"] for line in err.splitlines()]
    assert any("pool" in w for w in warnings)


def test_fit_errors_empty_history(tmp_path, capsys):
    hist = tmp_path / "h.csv"
    _history(hist, [])
    rc, _, err = _run(capsys, "fit-errors", "--errors", str(hist), "--out", str(tmp_path))
    assert rc == 1 and "no samples" in json.loads(err)["message"]


def test_fit_errors_default_history(tmp_path, capsys):
    rc, out, _ = _run(capsys, "fit-errors", "--out", str(tmp_path), "--k-max", "3")
    assert rc == 0 and json.loads(out)["models"] >= 3


def test_region_with_history_csv(tmp_path):
    from flexregion.cli import DATA_DIR
    rc = main(["region", "--times", "12:00", "--k", "4", "--errors", str(DATA_DIR / "error_history.csv"),
               "--out", str(tmp_path), "--no-svg"])
    assert rc == 0 and (tmp_path / "region_1200.json").is_file()


def test_inspect_kinds(noon_region, tmp_path, capsys):
    from flexregion.cli import DATA_DIR
    kinds = {}
    for path in (DATA_DIR / "feeder25.json", DATA_DIR / "fleet25.json", DATA_DIR / "error_table.json",
                 noon_region / "region_1200.json"):
        rc, out, _ = _run(capsys, "inspect", str(path))
        assert rc == 0
        kinds[path.name] = json.loads(out)
    assert kinds["feeder25.json"]["kind"] == "feeder" and kinds["feeder25.json"]["problems"] == []
    assert kinds["feeder25.json"]["buses"] == 25 and kinds["feeder25.json"]["slack"] == "650"
    assert kinds["fleet25.json"]["kind"] == "fleet"
    assert kinds["error_table.json"]["kind"] == "error-table"
    assert kinds["region_1200.json"]["vertices"] == 8
    other = tmp_path / "x.json"
    other.write_text("[1, 2]")
    rc, _, err = _run(capsys, "inspect", str(other))
    assert rc == 1


@pytest.mark.slow
def test_full_day(tmp_path):
    assert main(["region", "--k", "8", "--out", str(tmp_path), "--no-svg"]) == 0
    files = sorted(tmp_path.glob("region_*.json"))
    assert len(files) == 48
    assert files[0].name == "region_0000.json" and files[-1].name == "region_2330.json"
    with open(tmp_path / "summary.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 48
