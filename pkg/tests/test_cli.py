import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdpslds.cli import io
from hdpslds.cli.config import RunConfig
from hdpslds.cli.main import main
from hdpslds.cli.preprocess import apply_steps, invert_steps
from hdpslds.errors import ParameterError
from hdpslds.gibbs import TraceRecord

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def write_config(path, **fields):
    path.write_text(json.dumps(fields))
    return path


def generated(tmp_path, scenario="ar2-3mode", T=60, seed=1):
    out = tmp_path / "data"
    assert main(["generate", "--scenario", scenario, "--seed", str(seed), "--T", str(T),
                 "--out", str(out)]) == 0
    return out


def tiny_config(tmp_path, scenario="ar2-3mode", T=60, **extra):
    generated(tmp_path, scenario, T)
    fields = dict(data=["data/data.csv"], order=2, L=4, chains=2, seed=3,
                  schedule={"n_iters": 6, "burn_in": 2})
    fields.update(extra)
    return write_config(tmp_path / "run.json", **fields)


# --- generate -----------------------------------------------------------------------

def test_generate_writes_data_and_one_based_truth(tmp_path):
    out = generated(tmp_path, "var1-5mode", T=200)
    y, header = io.read_matrix_csv(out / "data.csv")
    assert y.shape == (200, 3) and header == ["y1", "y2", "y3"]
    z = io.read_labels_csv(out / "truth.csv")
    assert z.shape == (200,) and z.min() >= 0 and z.max() <= 4
    assert (out / "truth.csv").read_text().splitlines()[0] == "mode"


def test_generate_is_byte_identical_per_seed(tmp_path):
    a = generated(tmp_path / "a", "slds-3mode", T=50, seed=9)
    b = generated(tmp_path / "b", "slds-3mode", T=50, seed=9)
    c = generated(tmp_path / "c", "slds-3mode", T=50, seed=10)
    for name in ("data.csv", "truth.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "data.csv").read_bytes() != (c / "data.csv").read_bytes()


def test_generate_unknown_scenario_is_a_usage_error(tmp_path, capsys):
    assert main(["generate", "--scenario", "nope", "--out", str(tmp_path)]) == 2
    assert "unknown scenario" in capsys.readouterr().err


# --- fit ------------------------------------------------------------------------------

def test_fit_writes_traces_and_manifest(tmp_path):
    cfg = tiny_config(tmp_path)
    assert main(["fit", "--config", str(cfg)]) == 0
    run = tmp_path / "run"
    traces = io.read_traces(run / "traces")
    assert sorted(traces) == [0, 1] and all(len(r) == 6 for r in traces.values())
    manifest = io.read_json(run / "manifest.json")
    assert manifest["seed"] == 3 and manifest["chains"] == 2
    assert manifest["config_hash"] == io.config_hash(manifest["config"])
    assert {"hdpslds", "numpy", "scipy", "python"} <= set(manifest["versions"])


def test_fit_reproduces_traces_byte_identically(tmp_path):
    cfg = tiny_config(tmp_path, workers=2)
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "r1")]) == 0
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "r2")]) == 0
    for c in range(2):
        name = f"traces/chain_{c:03d}.jsonl"
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_fit_overrides_change_the_manifest(tmp_path):
    cfg = tiny_config(tmp_path)
    assert main(["fit", "--config", str(cfg), "--seed", "4", "--chains", "1", "--out", str(tmp_path / "o")]) == 0
    manifest = io.read_json(tmp_path / "o" / "manifest.json")
    assert manifest["seed"] == 4 and manifest["chains"] == 1
    assert list(io.read_traces(tmp_path / "o" / "traces")) == [0]


def test_fit_missing_data_is_an_io_error_naming_the_path(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", data=["missing.csv"])
    assert main(["fit", "--config", str(cfg)]) == 3
    assert "missing.csv" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_fit_rejects_unknown_keys_before_reading_data(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", data=["missing.csv"], bogus=1)
    assert main(["fit", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_fit_rejects_inconsistent_model(tmp_path):
    cfg = write_config(tmp_path / "run.json", data=["d.csv"], dynamics="shared", prior="mniw")
    assert main(["fit", "--config", str(cfg)]) == 2


def test_fit_non_finite_data_is_rejected_as_input(tmp_path, capsys):
    y = np.random.default_rng(0).standard_normal((30, 1))
    y[10] = np.inf
    io.write_matrix_csv(tmp_path / "d.csv", y)
    cfg = write_config(tmp_path / "run.json", data=["d.csv"], L=3, schedule={"n_iters": 2})
    assert main(["fit", "--config", str(cfg)]) == 2
    assert "finite" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_overflowing_data_is_a_numerical_error(tmp_path, capsys):
    y = np.random.default_rng(0).standard_normal((30, 1))
    y[10] = 1e200
    io.write_matrix_csv(tmp_path / "d.csv", y)
    cfg = write_config(tmp_path / "run.json", data=["d.csv"], L=3, schedule={"n_iters": 2})
    assert main(["fit", "--config", str(cfg)]) == 4
    assert "numerical error" in capsys.readouterr().err


# --- evaluate ------------------------------------------------------------------------------

def test_supervised_fit_evaluates_to_zero_hamming(tmp_path):
    cfg = tiny_config(tmp_path, supervision=["data/truth.csv"])
    assert main(["fit", "--config", str(cfg)]) == 0
    assert main(["evaluate", "--traces", str(tmp_path / "run"), "--protocol", "hamming",
                 "--truth", str(tmp_path / "data" / "truth.csv")]) == 0
    ev = tmp_path / "run" / "evaluation"
    header, rows = io.read_rows_csv(ev / "hamming.csv")
    assert header == ["chain", "iteration", "distance"] and len(rows) == 12
    assert all(float(r[2]) == 0.0 for r in rows)
    header, rows = io.read_rows_csv(ev / "hamming_quantiles.csv")
    assert len(rows) == 3 and [float(r[0]) for r in rows] == [0.1, 0.5, 0.9]
    _, rows = io.read_rows_csv(ev / "hamming_by_iteration.csv")
    assert len(rows) == 6


def test_roc_heldout_and_mode_protocols(tmp_path):
    cfg = tiny_config(tmp_path, "regime3", T=100, order=1)
    assert main(["fit", "--config", str(cfg)]) == 0
    run, truth = str(tmp_path / "run"), str(tmp_path / "data" / "truth.csv")
    assert main(["evaluate", "--traces", run, "--protocol", "roc", "--truth", truth, "--window", "5"]) == 0
    _, rows = io.read_rows_csv(tmp_path / "run" / "evaluation" / "roc.csv")
    fpr = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(fpr) >= 0) and fpr[0] == 0.0 and fpr[-1] == 1.0
    _, auc = io.read_rows_csv(tmp_path / "run" / "evaluation" / "roc_auc.csv")
    assert 0.0 <= float(auc[0][1]) <= 1.0

    generated(tmp_path / "held", "regime3", T=100, seed=5)
    assert main(["evaluate", "--traces", run, "--protocol", "heldout",
                 "--heldout", str(tmp_path / "held" / "data" / "data.csv")]) == 0
    _, rows = io.read_rows_csv(tmp_path / "run" / "evaluation" / "heldout_interval.csv")
    assert rows[0][0] == "exact-forward-sum" and float(rows[0][2]) <= float(rows[0][3])

    assert main(["evaluate", "--traces", run, "--protocol", "modes"]) == 0
    _, rows = io.read_rows_csv(tmp_path / "run" / "evaluation" / "modes.csv")
    assert abs(sum(float(r[1]) for r in rows) - 1.0) < 1e-12


def test_state_space_heldout(tmp_path):
    generated(tmp_path, "slds-3mode", T=40)
    cfg = write_config(tmp_path / "run.json", data=["data/data.csv"], family="slds", order=3, L=3,
                       schedule={"n_iters": 4, "inner_iters": 1})
    assert main(["fit", "--config", str(cfg)]) == 0
    assert main(["evaluate", "--traces", str(tmp_path / "run"), "--protocol", "heldout",
                 "--heldout", str(tmp_path / "data" / "data.csv"), "--seed", "1"]) == 0
    _, rows = io.read_rows_csv(tmp_path / "run" / "evaluation" / "heldout_interval.csv")
    assert rows[0][0] == "sampled-modes-kalman"


def test_evaluate_requires_truth_and_traces(tmp_path):
    cfg = tiny_config(tmp_path)
    assert main(["fit", "--config", str(cfg)]) == 0
    assert main(["evaluate", "--traces", str(tmp_path / "run"), "--protocol", "hamming"]) == 2
    assert main(["evaluate", "--traces", str(tmp_path / "nowhere"), "--protocol", "modes"]) == 3


# --- preprocess --------------------------------------------------------------------------------

def test_preprocess_center_scale_round_trip(tmp_path):
    y = np.random.default_rng(2).standard_normal((50, 3)) * [1.0, 10.0, 0.1] + 4.0
    io.write_matrix_csv(tmp_path / "in.csv", y, ["a", "b", "c"])
    assert main(["preprocess", "--input", str(tmp_path / "in.csv"), "--steps", "center_scale",
                 "--out", str(tmp_path / "out.csv")]) == 0
    out, header = io.read_matrix_csv(tmp_path / "out.csv")
    assert header == ["a", "b", "c"]
    assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12) and np.allclose(out.std(axis=0), 1.0)
    meta = io.read_json(tmp_path / "out.meta.json")
    assert np.abs(invert_steps(out, meta["steps"]) - y).max() < 1e-12


def test_preprocess_first_difference_length(tmp_path):
    y = np.cumsum(np.random.default_rng(3).standard_normal((40, 2)), axis=0)
    out, metas = apply_steps(y, ["first_difference"])
    assert out.shape == (39, 2)
    assert np.abs(invert_steps(out, metas) - y).max() < 1e-12


def test_log_squared_clamps_zero_returns(tmp_path):
    y = np.array([[0.0], [0.5], [0.0], [-2.0]])
    io.write_matrix_csv(tmp_path / "r.csv", y)
    assert main(["preprocess", "--input", str(tmp_path / "r.csv"), "--steps", "log_squared,max_abs_scale",
                 "--out", str(tmp_path / "o.csv")]) == 0
    meta = io.read_json(tmp_path / "o.meta.json")["steps"]
    assert meta[0] == {"step": "log_squared", "floor": 1e-12, "clamped_entries": 2}
    out, _ = io.read_matrix_csv(tmp_path / "o.csv")
    assert np.abs(out).max() == pytest.approx(10.0)
    with pytest.raises(ParameterError):
        invert_steps(out, meta)


def test_preprocess_unknown_step(tmp_path):
    io.write_matrix_csv(tmp_path / "r.csv", np.ones((3, 1)))
    assert main(["preprocess", "--input", str(tmp_path / "r.csv"), "--steps", "smooth",
                 "--out", str(tmp_path / "o.csv")]) == 2


# --- file formats ------------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 4), st.data())
def test_property_matrix_csv_round_trip(T, d, data):
    import tempfile
    from pathlib import Path
    y = np.array(data.draw(st.lists(finite, min_size=T * d, max_size=T * d))).reshape(T, d)
    with tempfile.TemporaryDirectory() as tmp:
        io.write_matrix_csv(Path(tmp) / "m.csv", y)
        back, _ = io.read_matrix_csv(Path(tmp) / "m.csv")
    assert np.array_equal(back, y)


def test_labels_round_trip_and_unlabelled_entries(tmp_path):
    z = np.array([0, 3, 3, 1])
    io.write_labels_csv(tmp_path / "z.csv", z)
    assert np.array_equal(io.read_labels_csv(tmp_path / "z.csv"), z)
    (tmp_path / "s.csv").write_text("mode\n2\n0\n\n1\n")
    assert list(io.read_labels_csv(tmp_path / "s.csv")) == [1, -1, -1, 0]
    (tmp_path / "bad.csv").write_text("mode\n-3\n")
    with pytest.raises(io.DataFileError):
        io.read_labels_csv(tmp_path / "bad.csv")


def test_malformed_matrix_names_the_file(tmp_path):
    (tmp_path / "m.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(io.DataFileError, match="m.csv"):
        io.read_matrix_csv(tmp_path / "m.csv")
    (tmp_path / "n.csv").write_text("a\nx\n")
    with pytest.raises(io.DataFileError, match="non-numeric"):
        io.read_matrix_csv(tmp_path / "n.csv")


def test_trace_record_round_trip():
    rng = np.random.default_rng(0)
    rec = TraceRecord(iteration=7, chain=2, z=[np.array([0, 1, 1]), np.array([2])], active_modes=3,
                      log_joint=-12.5, hyper={"alpha": 1.5, "kappa": 0.25},
                      beta=rng.dirichlet(np.ones(3)), pi=rng.dirichlet(np.ones(3), 3),
                      A=rng.standard_normal((3, 2, 2)), Sigma=np.tile(np.eye(2), (3, 1, 1)),
                      mu=rng.standard_normal((3, 2)), ard_precisions=rng.random((3, 2)))
    back = io.dict_to_record(json.loads(json.dumps(io.record_to_dict(rec))))
    assert back.iteration == 7 and back.chain == 2 and back.hyper == rec.hyper
    assert all(np.array_equal(a, b) for a, b in zip(back.z, rec.z))
    for name in ("beta", "pi", "A", "Sigma", "mu", "ard_precisions"):
        assert np.array_equal(getattr(back, name), getattr(rec, name))
    assert back.R is None and back.log_joint == -12.5
    slim = io.dict_to_record(io.record_to_dict(rec, parameters=False))
    assert slim.A is None and slim.active_modes == 3


def test_trace_schema_version_checked():
    with pytest.raises(ParameterError):
        io.dict_to_record({"schema_version": 99})


def test_config_hash_tracks_every_field():
    base = RunConfig(data=["d.csv"]).model_dump(mode="json")
    h = io.config_hash(base)
    assert io.config_hash(dict(reversed(list(base.items())))) == h
    changed = [
        {"seed": 1}, {"chains": 2}, {"L": 21}, {"sticky": False}, {"output": "other"},
        {"schedule": {**base["schedule"], "thin": 2}},
        {"hyperpriors": {**base["hyperpriors"], "c_rho": 11.0}},
        {"preprocess": ["center_scale"]},
    ]
    hashes = {io.config_hash(RunConfig.model_validate({**base, **c}).model_dump(mode="json"))
              for c in changed}
    assert h not in hashes and len(hashes) == len(changed)
