import csv
import io
import json

import numpy as np
import pytest

from cpsurv.cli import dumps, main
from cpsurv.core import load_sample
from cpsurv.coxfit import CoxFit, fit_cox
from cpsurv.multicp import detect_changepoints
from cpsurv.scoreproc import detection_path
from cpsurv.simlab import generate_dataset, scenario_catalog
from cpsurv.singlecp import confidence_region


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def sample_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "s.csv"
    sc = scenario_catalog()["scenario4"]
    path.write_text(generate_dataset(sc, 0).to_csv())
    return path


def write(tmp_path, text, name="x.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_fit_outputs_json(capsys, sample_csv):
    code, out, err = run(capsys, "fit", sample_csv)
    assert code == 0
    d = json.loads(out)
    direct = fit_cox(load_sample(sample_csv.read_text()))
    assert d["beta_hat"] == direct.beta_hat
    assert d["std_err"] == direct.std_err
    assert "events=" in err


def test_fit_window(capsys, sample_csv):
    code, out, _ = run(capsys, "fit", sample_csv, "--window", 0, 0.2)
    assert code == 0
    assert json.loads(out)["window"] == [0.0, 0.2]


def test_fit_json_round_trip(capsys, sample_csv):
    _, out, _ = run(capsys, "fit", sample_csv)
    assert dumps(json.loads(out)) == out
    assert dumps(CoxFit.from_dict(json.loads(out)).to_dict()) == out


def test_constant_covariate_exit_3(capsys, tmp_path):
    p = write(tmp_path, "time,status,covariate\n1,1,2\n2,1,2\n3,0,2\n")
    code, out, err = run(capsys, "fit", p)
    assert code == 3
    assert out == ""
    assert err


def test_missing_file_exit_2(capsys, tmp_path):
    code, out, err = run(capsys, "fit", tmp_path / "nope.csv")
    assert code == 2 and out == "" and "error" in err


def test_malformed_csv_exit_2(capsys, tmp_path):
    p = write(tmp_path, "time,status,covariate\n1,1,0\n2,7,1\n")
    code, _, err = run(capsys, "fit", p)
    assert code == 2
    assert "line 3" in err


def test_region_matches_library(capsys, sample_csv):
    code, out, _ = run(capsys, "region", sample_csv, "--alpha", 0.05)
    assert code == 0
    d = json.loads(out)
    r = confidence_region(load_sample(sample_csv.read_text()), 0.05)
    assert d["gamma_hat"] == r.fit.gamma_hat
    assert d["hull"] == list(r.interval_hull)
    assert d["statistic"] == r.statistic_used


def test_region_alpha_changes_width(capsys, sample_csv):
    widths = []
    for a in (0.01, 0.2):
        _, out, _ = run(capsys, "region", sample_csv, "--alpha", a)
        lo, hi = json.loads(out)["hull"]
        widths.append(hi - lo)
    assert widths[0] >= widths[1]


def test_region_bad_alpha(capsys, sample_csv):
    with pytest.raises(SystemExit) as exc:
        main(["region", str(sample_csv), "--alpha", "1.5"])
    assert exc.value.code == 2


def test_detect_schema(capsys, sample_csv):
    code, out, _ = run(capsys, "detect", sample_csv, "-K", 3)
    assert code == 0
    d = json.loads(out)
    assert set(d) == {"K", "breakpoints", "segments", "total_rss"}
    assert d["K"] == 3
    assert len(d["breakpoints"]) == 2 and len(d["segments"]) == 3
    seg = detect_changepoints(detection_path(load_sample(sample_csv.read_text())), 3)
    assert [b["index"] for b in d["breakpoints"]] == list(seg.breakpoint_indices)
    assert d["segments"][0]["window"][1] == d["breakpoints"][0]["time"]
    assert d["segments"][-1]["window"][1] is None


def test_detect_requires_two_segments(capsys, sample_csv):
    with pytest.raises(SystemExit) as exc:
        main(["detect", str(sample_csv), "-K", "1"])
    assert exc.value.code == 2


def test_detect_too_short_exit_2(capsys, tmp_path):
    p = write(tmp_path, "time,status,covariate\n1,1,0\n2,1,1\n3,1,0\n4,1,1\n5,0,0\n")
    code, _, _ = run(capsys, "detect", p, "-K", 4)
    assert code == 2


def test_plot_data_origin(capsys, sample_csv):
    code, out, _ = run(capsys, "plot-data", sample_csv)
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "index,t,u,event_time"
    assert lines[1] == "0,0.0,0.0,"


def test_plot_data_with_fit(capsys, sample_csv):
    _, out, _ = run(capsys, "plot-data", sample_csv, "--with-fit", 3)
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["index", "t", "u", "event_time", "fit_1", "fit_2", "fit_3"]
    filled = np.array([[c != "" for c in r[4:]] for r in rows[1:]])
    assert np.all(filled.sum(axis=1) == 1)
    # each column group is one contiguous run
    for j in range(3):
        idx = np.flatnonzero(filled[:, j])
        assert np.all(np.diff(idx) == 1)


def test_plot_data_no_events_exit_2(capsys, tmp_path):
    p = write(tmp_path, "time,status,covariate\n1,0,0\n2,0,1\n")
    code, out, _ = run(capsys, "plot-data", p)
    assert code == 2 and out == ""


def test_simulate_deterministic(capsys, tmp_path):
    _, a, _ = run(capsys, "simulate", "--scenario", "scenario1", "--seed", 5, "--n", 50)
    _, b, _ = run(capsys, "simulate", "--scenario", "scenario1", "--seed", 5, "--n", 50)
    _, c, _ = run(capsys, "simulate", "--scenario", "scenario1", "--seed", 6, "--n", 50)
    assert a == b != c
    assert load_sample(a).n == 50


def test_simulate_scenario_file(capsys, tmp_path):
    sc = scenario_catalog()["scenario5-n200-c0"]
    p = write(tmp_path, json.dumps(sc.to_dict()), "sc.json")
    _, from_file, _ = run(capsys, "simulate", "--scenario", p)
    _, from_id, _ = run(capsys, "simulate", "--scenario", "scenario5-n200-c0")
    assert from_file == from_id


def test_unknown_scenario_exit_2(capsys):
    code, _, err = run(capsys, "simulate", "--scenario", "no-such-thing")
    assert code == 2 and "catalog" in err


def test_study_jobs_invariant(capsys, tmp_path):
    p = write(tmp_path, json.dumps({**scenario_catalog()["table3-b2-g0.3-c0"].to_dict(), "n": 200}), "sc.json")
    _, one, err = run(capsys, "study", "--scenario", p, "--reps", 4, "--jobs", 1)
    _, two, _ = run(capsys, "study", "--scenario", p, "--reps", 4, "--jobs", 2)
    assert one == two
    assert "PL" in err
    d = json.loads(one)
    assert d["kind"] == "comparison" and d["replications"] == 4


def test_study_table_to_file(capsys, tmp_path):
    p = write(tmp_path, json.dumps({**scenario_catalog()["scenario5-n200-c0"].to_dict(), "n": 200}), "sc.json")
    table = tmp_path / "t.txt"
    code, out, _ = run(capsys, "study", "--scenario", p, "--reps", 3, "--table", table)
    assert code == 0
    assert "gamma1" in table.read_text()
    assert json.loads(out)["kind"] == "precision"


def test_output_file(capsys, sample_csv, tmp_path):
    target = tmp_path / "fit.json"
    code, out, _ = run(capsys, "fit", sample_csv, "-o", target)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["converged"] is True
