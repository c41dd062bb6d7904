import filecmp
import os

import numpy as np
import pytest

from availpred.cli import main
from availpred.synth import generate_trace
from availpred.trace import read_matrix, write_matrix
from conftest import daily_structured_profiles

PROFILE_TEXT = """\
name=day
count=6
base_rate=0.9
daily=0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,1,1,1,1,1,1,1,1,1,1,0.1,0.1,0.1,0.1,0.1,0.1
noise=0.05

name=night
count=6
base_rate=0.9
daily=1,1,1,1,1,1,1,1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,1,1,1,1,1,1
noise=0.05
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    profiles = root / "profiles.cfg"
    profiles.write_text(PROFILE_TEXT)
    trace_path = root / "trace.am"
    assert main(["synth", "--profiles", str(profiles), "--weeks", "24", "--seed", "7",
                 "--out", str(trace_path)]) == 0
    return root


def test_synth_then_run_creates_report(workdir, tmp_path):
    out = tmp_path / "report"
    rc = main(["run", "--trace", str(workdir / "trace.am"), "--out", str(out), "--seed", "3"])
    assert rc == 0
    assert (out / "metrics.csv").exists()
    assert (out / "model.txt").exists()


def test_full_stage_by_stage_flow(workdir, tmp_path):
    trace_path = str(workdir / "trace.am")
    split_csv = tmp_path / "split.csv"
    assert main(["split", "--trace", trace_path, "--out", str(split_csv)]) == 0
    assert split_csv.read_text().splitlines()[1] == "A,0,1008"

    users_txt = tmp_path / "users.txt"
    assert main(["filter", "--trace", trace_path, "--reference", "A",
                 "--threshold", "4", "--out", str(users_txt)]) == 0
    assert len(users_txt.read_text().splitlines()) == 12  # all qualify at 4h/day

    design_csv = tmp_path / "design.csv"
    assert main(["features", "--trace", trace_path, "--obs-range", "A",
                 "--label-range", "B", "--standardize", "--out", str(design_csv)]) == 0

    model_txt = tmp_path / "model.txt"
    assert main(["train", "--design", str(design_csv), "--out", str(model_txt)]) == 0

    preds = tmp_path / "preds.pm"
    assert main(["predict", "--model", str(model_txt), "--trace", trace_path,
                 "--obs-range", "C", "--target-range", "D", "--out", str(preds)]) == 0

    eval_dir = tmp_path / "eval"
    assert main(["eval", "--pred", str(preds), "--labels", trace_path,
                 "--range", "D", "--out", str(eval_dir)]) == 0
    lines = (eval_dir / "metrics.csv").read_text().splitlines()
    assert lines[0] == "metric,scope,value"
    metric = {row.split(",")[0]: float(row.split(",")[2]) for row in lines[1:3]}
    assert 0.5 < metric["auc"] <= 1.0
    assert 0.0 < metric["gm"] < 1.0

    cluster_csv = tmp_path / "clusters.csv"
    assert main(["cluster", "--trace", trace_path, "--range", "2016:2184",
                 "--k", "2", "--seed", "1", "--out", str(cluster_csv)]) == 0
    assert cluster_csv.read_text().startswith("cluster_id,size")

    dht_dir = tmp_path / "dht"
    assert main(["sim-dht", "--pred", str(preds), "--trace", trace_path,
                 "--replicas", "2", "--reps", "3", "--iterations", "10",
                 "--seed", "5", "--out", str(dht_dir)]) == 0
    report = (dht_dir / "dht_report.csv").read_text().splitlines()
    assert report[0] == "rep,strategy,predicted_avail,real_avail"
    assert len(report) == 1 + 3 * 2

    f2f_dir = tmp_path / "f2f"
    assert main(["sim-f2f", "--pred", str(preds), "--trace", trace_path,
                 "--capacity", "2", "--degree", "4", "--reps", "2",
                 "--seed", "5", "--out", str(f2f_dir)]) == 0
    assert (f2f_dir / "f2f_summary.csv").exists()

    curve_csv = tmp_path / "curve.csv"
    assert main(["sim-newsfeed", "--pred", str(preds), "--trace", trace_path,
                 "--max-n", "5", "--out", str(curve_csv)]) == 0
    assert curve_csv.read_text().startswith("strategy,n,hit_ratio")


def test_ingest_round_trip(tmp_path):
    events = tmp_path / "events.csv"
    events.write_text("user_id,login_ts,logout_ts\nbob,1800,9000\nann,0,3600\n")
    out = tmp_path / "m.am"
    rc = main(["ingest", "--events", str(events), "--origin-ts", "0",
               "--horizon-slots", "4", "--out", str(out)])
    assert rc == 0
    m = read_matrix(out)
    assert m.users == ("ann", "bob")
    assert m.cells[1].tolist() == [True, True, True, False]


def test_rerun_byte_identical_and_thread_independent(workdir, tmp_path):
    trace_path = str(workdir / "trace.am")
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / name
        rc = main(["run", "--trace", trace_path, "--seed", "11", "--sim-newsfeed",
                   "--threads", threads, "--out", str(out)])
        assert rc == 0
        outs.append(out)
    for name in sorted(os.listdir(outs[0])):
        assert filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False), name
        assert filecmp.cmp(outs[0] / name, outs[2] / name, shallow=False), name


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command", "--out", "x"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["synth"])  # missing required flags
    assert exc.value.code == 2


def test_data_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.am"
    bad.write_text("not a matrix\n")
    rc = main(["split", "--trace", str(bad), "--out", str(tmp_path / "s.csv")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err

    missing = tmp_path / "missing.csv"
    rc = main(["ingest", "--events", str(missing), "--origin-ts", "0",
               "--horizon-slots", "2", "--out", str(tmp_path / "m.am")])
    assert rc == 1


def test_short_trace_errors(tmp_path):
    m = generate_trace(daily_structured_profiles(4), weeks=10, seed=0)
    path = tmp_path / "short.am"
    write_matrix(m, path)
    rc = main(["split", "--trace", str(path), "--out", str(tmp_path / "out.csv")])
    assert rc == 1
