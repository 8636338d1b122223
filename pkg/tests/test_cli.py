import csv
import json

import pytest

from bnsobol.bn import ParameterId
from bnsobol.cli import main
from bnsobol.networks import load_network
from bnsobol.oat import sensitivity_values_all

from helpers import brute_probability, finite_difference


def run(capsys, *argv, environ=None):
    code = main(list(argv), environ={} if environ is None else environ)
    out = capsys.readouterr()
    return code, out.out, out.err


def without_timing(text):
    data = json.loads(text)
    data.pop("timing", None)
    return data


def test_analyze_toy_json(tmp_path, capsys):
    out = tmp_path / "toy.json"
    code, stdout, _ = run(capsys, "analyze", "--input", "toy", "--target", "Y3=yes", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert len(data["records"]) == 6
    # prior mean of the target, close to the point value 0.424 but not equal on a finite grid
    assert data["mean"] == pytest.approx(brute_probability(load_network("toy"), "Y3=yes"), abs=1e-3)
    for rec in data["records"]:
        assert -1e-12 <= rec["variance_component"] <= rec["total_index"] + 1e-12 <= 1 + 2e-9
    assert set(data["timing"]) >= {"t_select", "t_sobol", "t_total"}
    # printed table carries the report columns
    for column in ("Original value", "Sensitivity value", "Variance component", "Total index"):
        assert column in stdout
    plot = list(csv.DictReader((tmp_path / "toy.plot.csv").open()))
    assert [r["label"] for r in plot] == [r["label"] for r in data["records"]]
    assert [float(r["total_index"]) for r in plot] == [r["total_index"] for r in data["records"]]


def test_csv_and_json_carry_the_same_numbers(tmp_path, capsys):
    common = ["analyze", "--input", "asia", "--target", "dysp=yes", "--bins", "9"]
    assert run(capsys, *common, "--out", str(tmp_path / "r.json"))[0] == 0
    assert run(capsys, *common, "--output", "csv", "--out", str(tmp_path / "r.csv"))[0] == 0
    data = json.loads((tmp_path / "r.json").read_text())
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert len(rows) == len(data["records"])
    for row, rec in zip(rows, data["records"]):
        assert row["label"] == rec["label"]
        for key in ("original", "alpha", "beta", "sensitivity_value", "variance_component", "total_index"):
            assert float(row[key]) == rec[key]
        for key in ("mean", "variance", "sigma2"):
            assert float(row[key]) == data[key]
        assert int(row["grid"]) == data["grid"]


def test_report_is_deterministic(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        code, _, _ = run(
            capsys, "analyze", "--input", "sachs", "--target", "random", "--seed", "4", "--mc-check", "2000", "--out", str(p)
        )
        assert code == 0
    a, b = (json.dumps(without_timing(p.read_text()), indent=2) for p in paths)
    assert a == b
    # the raw files differ only inside the timing block
    raw = [p.read_text().split('"timing"')[0] for p in paths]
    assert raw[0] == raw[1]


def test_report_to_stdout_keeps_table_on_stderr(capsys):
    code, stdout, stderr = run(capsys, "analyze", "--input", "toy", "--target", "Y3=yes", "--out", "-")
    assert code == 0
    assert len(json.loads(stdout)["records"]) == 6
    assert "Total index" in stderr


def test_random_target_on_sachs(capsys):
    code, stdout, _ = run(capsys, "analyze", "--input", "sachs", "--target", "random", "--seed", "1")
    assert code == 0
    assert "time:" in stdout


def test_mc_check_section(tmp_path, capsys):
    out = tmp_path / "mc.json"
    code, stdout, _ = run(
        capsys, "analyze", "--input", "toy", "--target", "Y3=yes", "--mc-check", "20000", "--seed", "3", "--out", str(out)
    )
    assert code == 0
    mc = json.loads(out.read_text())["mc_check"]
    assert mc["n_samples"] == 20000 and len(mc["records"]) == 6
    assert mc["max_abs_z_total"] < 4
    assert "Monte Carlo check" in stdout


def test_select_file(tmp_path, capsys):
    sel = tmp_path / "sel.json"
    sel.write_text(json.dumps([{"variable": "Y1", "child_state": "yes"}, {"variable": "Y2", "child_state": "yes"}]))
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "analyze", "--input", "toy", "--target", "Y3=yes", "--select", str(sel), "--out", str(out))
    assert code == 0
    records = json.loads(out.read_text())["records"]
    assert sorted(r["param"]["variable"] for r in records) == ["Y1", "Y2"]
    for r in records:
        assert r["total_index"] > r["variance_component"]


def test_oat_toy(tmp_path, capsys):
    out = tmp_path / "oat.json"
    code, _, _ = run(capsys, "oat", "--input", "toy", "--target", "Y3=yes", "--out", str(out))
    assert code == 0
    params = json.loads(out.read_text())["parameters"]
    assert len(params) == 12
    # every one of the six CPT rows has a nonzero value (both entries of a binary row share it)
    rows = {(p["variable"], tuple(p["parent_states"].values())) for p in params if p["sensitivity_value"]}
    assert len(rows) == 6


def test_oat_dseparated_listed_as_zero(tmp_path, capsys):
    out = tmp_path / "oat.csv"
    code, _, _ = run(capsys, "oat", "--input", "toy", "--target", "Y1=yes", "--output", "csv", "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 12
    for r in rows:
        assert (float(r["sensitivity_value"]) == 0.0) == (r["variable"] != "Y1")


def test_oat_asia_matches_finite_differences(tmp_path, capsys):
    out = tmp_path / "oat.json"
    assert run(capsys, "oat", "--input", "asia", "--target", "dysp=yes", "--out", str(out))[0] == 0
    bn = load_network("asia")
    for p in json.loads(out.read_text())["parameters"]:
        var = bn.variable(p["variable"])
        config = tuple(bn.variable(k).index(v) for k, v in p["parent_states"].items())
        param = ParameterId(var.name, var.index(p["child_state"]), config)
        if p["sensitivity_value"] is None:
            continue
        assert p["sensitivity_value"] == pytest.approx(finite_difference(bn, "dysp=yes", param), abs=1e-6)


def test_stats(tmp_path, capsys):
    out = tmp_path / "stats.json"
    code, _, _ = run(capsys, "stats", "--input", "alarm", "--target", "BP=LOW", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["n_variables"] == 37 and data["n_parameters"] == 752
    assert data["n_uncertainties"] > 0 and data["n_augmented_parameters"] > data["n_parameters"]
    t = data["timing"]
    assert t["t_total"] >= t["t_encoding"] + t["t_sobol"] - 1e-3


def test_stats_toy(tmp_path, capsys):
    out = tmp_path / "stats.csv"
    code, _, _ = run(capsys, "stats", "--input", "toy", "--target", "Y3=yes", "--output", "csv", "--out", str(out))
    assert code == 0
    (row,) = csv.DictReader(out.open())
    assert int(row["n_variables"]) == 3 and int(row["n_free_parameters"]) == 6


def test_bif_file_input(tmp_path, capsys):
    from bnsobol.bif import write_bif

    path = tmp_path / "net.bif"
    path.write_text(write_bif(load_network("toy")))
    assert run(capsys, "oat", "--input", str(path), "--target", "Y3=yes")[0] == 0


def test_env_overrides(tmp_path, capsys):
    out = tmp_path / "env.json"
    env = {"BNSOBOL_INPUT": "toy", "BNSOBOL_TARGET": "Y3=yes", "BNSOBOL_BINS": "9", "BNSOBOL_MEM_CAP": "1000000"}
    code, _, _ = run(capsys, "analyze", "--out", str(out), environ=env)
    assert code == 0
    assert json.loads(out.read_text())["grid"] == 9
    # command-line flags win over the environment
    code, _, _ = run(capsys, "analyze", "--bins", "5", "--out", str(out), environ=env)
    assert code == 0 and json.loads(out.read_text())["grid"] == 5


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--input", "toy", "--target", "Y3=maybe"],
        ["analyze", "--input", "toy", "--target", "Y9=yes"],
        ["analyze", "--input", "no-such-network", "--target", "Y3=yes"],
        ["analyze", "--input", "toy"],
        ["analyze", "--input", "toy", "--target", "Y3=yes", "--sigma2", "0"],
        ["analyze", "--input", "toy", "--target", "Y3=yes", "--bins", "1"],
        ["analyze", "--input", "toy", "--target", "Y3=yes", "--mc-check", "10"],
        ["analyze", "--input", "toy", "--target", "Y3=yes", "--select", "missing.json"],
        ["analyze", "--input", "toy", "--target", "Y3=yes", "--evidence", "Y1=perhaps"],
        ["analyze", "--input", "toy", "--target", "Y3=yes", "--output", "xml"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, stderr = run(capsys, *argv)
    assert code == 2
    assert stderr


def test_bad_select_entry_exits_2(tmp_path, capsys):
    sel = tmp_path / "sel.json"
    sel.write_text(json.dumps([{"variable": "Y1"}]))
    assert run(capsys, "analyze", "--input", "toy", "--target", "Y3=yes", "--select", str(sel))[0] == 2


def test_module_errors_exit_1(capsys):
    # too many uncertainties for the exact evidence path
    code, _, stderr = run(capsys, "analyze", "--input", "asia", "--target", "lung=yes", "--evidence", "dysp=yes")
    assert code == 1
    assert "Monte Carlo" in stderr
    # the memory cap is a module error, not a config error
    code, _, _ = run(capsys, "analyze", "--input", "alarm", "--target", "BP=LOW", "--mem-cap", "10")
    assert code == 1


def test_sensitivity_values_in_report_match_oat(tmp_path, capsys):
    out = tmp_path / "r.json"
    run(capsys, "analyze", "--input", "toy", "--target", "Y3=yes", "--out", str(out))
    bn = load_network("toy")
    values = sensitivity_values_all(bn, "Y3=yes")
    for rec in json.loads(out.read_text())["records"]:
        var = bn.variable(rec["param"]["variable"])
        config = tuple(bn.variable(k).index(v) for k, v in rec["param"]["parent_states"].items())
        param = ParameterId(var.name, var.index(rec["param"]["child_state"]), config)
        assert rec["sensitivity_value"] == values[param]
