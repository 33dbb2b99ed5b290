import json
import subprocess
import sys

import numpy as np
import pytest

from lata.arraystore import load_manifest, read_container
from lata.cli import main
from lata.synthetic import generate_bundles

EXACT_COPY = dict(n_pool=300, n_val=200, n_test=150, dim=12, num_classes=4,
                  m_foundations=2, foundation_dim=16, pool_noise=0.0,
                  correct_noise=0.0, wrong_noise=0.0)
NOISY = dict(n_pool=300, n_val=200, n_test=150, dim=12, num_classes=4,
             m_foundations=2, foundation_dim=16)


@pytest.fixture(scope="module")
def copy_bundles(tmp_path_factory):
    out = tmp_path_factory.mktemp("copy_bundles")
    return generate_bundles(out, seed=9, **EXACT_COPY)


@pytest.fixture(scope="module")
def noisy_bundles(tmp_path_factory):
    out = tmp_path_factory.mktemp("noisy_bundles")
    return generate_bundles(out, seed=5, **NOISY)


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def help_text(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    return capsys.readouterr().out


EXPECTED_FLAGS = {
    "ingest": ["--config", "--features", "--foundation", "--logits", "--labels",
               "--split", "--seed", "--manifest", "--out"],
    "agree": ["--config", "--pool", "--test", "--k", "--models", "--out"],
    "calibrate": ["--config", "--pool", "--val", "--k", "--models", "--out"],
    "eval": ["--config", "--pool", "--val", "--test", "--k", "--models", "--out", "--format"],
    "sweep-k": ["--config", "--pool", "--val", "--k-grid", "--models", "--out", "--format"],
    "sweep-pool": ["--config", "--pool", "--val", "--pool-sizes", "--k-grid",
                   "--models", "--seed", "--out", "--format"],
    "theory": ["--config", "--trials", "--seed", "--out"],
    "report": ["--config", "--pool", "--val", "--test", "--k", "--models",
               "--bins", "--out", "--format"],
}


def test_help_lists_every_flag(capsys):
    for command, flags in EXPECTED_FLAGS.items():
        text = help_text(command, capsys)
        for flag in flags:
            assert flag in text, f"{command} help is missing {flag}"


def test_ingest_round_trip(tmp_path, capsys, rng):
    feats = rng.normal(size=(100, 16)).astype(np.float32)
    logits = rng.normal(size=(100, 5)).astype(np.float32)
    labels = rng.integers(0, 5, size=100)
    np.savetxt(tmp_path / "feats.csv", feats, delimiter=",", fmt="%.8g")
    np.savetxt(tmp_path / "found.csv", feats @ rng.normal(size=(16, 20)).astype(np.float32),
               delimiter=",", fmt="%.8g")
    np.savetxt(tmp_path / "logits.csv", logits, delimiter=",", fmt="%.8g")
    np.savetxt(tmp_path / "labels.csv", labels[:, None], delimiter=",", fmt="%d")
    code, out, err = run_cli([
        "ingest", "--features", str(tmp_path / "feats.csv"),
        "--foundation", f"enc0={tmp_path / 'found.csv'}",
        "--logits", str(tmp_path / "logits.csv"),
        "--labels", str(tmp_path / "labels.csv"),
        "--split", "pool", "--seed", "3", "--out", str(tmp_path / "bundle"),
    ], capsys)
    assert code == 0, err
    bundle = load_manifest(tmp_path / "bundle" / "manifest.json")
    assert bundle.n == 100
    assert bundle.classifier_features.shape == (100, 16)
    assert bundle.model_ids == ["enc0"]


def test_ingest_ragged_csv(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("1,2,3\n4,5\n")
    (tmp_path / "ok.csv").write_text("1,2\n3,4\n")
    (tmp_path / "labels.csv").write_text("0\n1\n")
    code, out, err = run_cli([
        "ingest", "--features", str(tmp_path / "bad.csv"),
        "--logits", str(tmp_path / "ok.csv"),
        "--labels", str(tmp_path / "labels.csv"),
        "--split", "pool", "--out", str(tmp_path / "b"),
    ], capsys)
    assert code == 3
    doc = json.loads(err)
    assert doc["error"] == "ParseError"
    assert "line 2" in doc["message"]


def test_ingest_label_out_of_range(tmp_path, capsys):
    (tmp_path / "f.csv").write_text("1,2\n3,4\n")
    (tmp_path / "l.csv").write_text("0.5,0.5\n0.5,0.5\n")
    (tmp_path / "y.csv").write_text("0\n2\n")  # C=2, so label 2 is out of range
    code, out, err = run_cli([
        "ingest", "--features", str(tmp_path / "f.csv"),
        "--logits", str(tmp_path / "l.csv"),
        "--labels", str(tmp_path / "y.csv"),
        "--split", "pool", "--out", str(tmp_path / "b"),
    ], capsys)
    assert code == 3
    assert json.loads(err)["error"] == "LabelOutOfRange"


def test_agree_rotated_copy_all_ones(copy_bundles, tmp_path, capsys):
    out = tmp_path / "agree"
    code, _, err = run_cli([
        "agree", "--pool", str(copy_bundles["pool"]),
        "--test", str(copy_bundles["test"]), "--k", "10", "--out", str(out),
    ], capsys)
    assert code == 0, err
    scores = read_container(out / "agreement.latc").reshape(-1)
    assert scores.shape[0] == EXACT_COPY["n_test"]
    np.testing.assert_array_equal(scores, 1.0)
    lines = (out / "agreement.csv").read_text().strip().splitlines()
    assert lines[0] == "sample_id,score"
    assert len(lines) == EXACT_COPY["n_test"] + 1


def test_agree_missing_manifest(tmp_path, capsys):
    code, out, err = run_cli([
        "agree", "--pool", str(tmp_path / "absent.json"),
        "--test", str(tmp_path / "absent.json"), "--k", "10",
        "--out", str(tmp_path / "o"),
    ], capsys)
    assert code == 2
    doc = json.loads(err)
    assert doc["error"] == "MissingFile"


def test_agree_k_out_of_range(copy_bundles, tmp_path, capsys):
    code, _, err = run_cli([
        "agree", "--pool", str(copy_bundles["pool"]),
        "--test", str(copy_bundles["test"]), "--k", "4000",
        "--out", str(tmp_path / "o"),
    ], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "KOutOfRange"


def test_unknown_flag_is_json_usage_error(capsys):
    code, out, err = run_cli(["agree", "--nonsense", "1"], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "UsageError"


def test_calibrate_writes_models(noisy_bundles, tmp_path, capsys):
    out = tmp_path / "cal"
    code, _, err = run_cli([
        "calibrate", "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]), "--k", "20", "--out", str(out),
    ], capsys)
    assert code == 0, err
    vanilla = json.loads((out / "calibration_vanilla.json").read_text())
    agreement = json.loads((out / "calibration_agreement.json").read_text())
    assert vanilla["variant"] == "vanilla" and vanilla["t_s"] == 0.0
    assert agreement["variant"] == "agreement"
    assert set(vanilla) == {"variant", "t", "t_s", "tau_floor"}


def test_eval_end_to_end(noisy_bundles, tmp_path, capsys):
    out = tmp_path / "eval"
    code, _, err = run_cli([
        "eval", "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]),
        "--test", str(noisy_bundles["test"]),
        "--k", "20", "--out", str(out), "--format", "both",
    ], capsys)
    assert code == 0, err
    doc = json.loads((out / "report.json").read_text())
    by_method = {row["method"]: row["auroc"] for row in doc["rows"]}
    assert by_method["ts_agreement_multi"] > by_method["msp"]
    csv_lines = (out / "report.csv").read_text().strip().splitlines()
    assert len(csv_lines) == len(doc["rows"]) + 1
    # JSON and CSV agree on every AUROC value
    for line in csv_lines[1:]:
        method, value = line.split(",")[0], float(line.split(",")[1])
        assert by_method[method] == pytest.approx(value, abs=1e-9)


def test_eval_rerun_identical_minus_timestamp(noisy_bundles, tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _, err = run_cli([
            "eval", "--pool", str(noisy_bundles["pool"]),
            "--val", str(noisy_bundles["validation"]),
            "--test", str(noisy_bundles["test"]),
            "--k", "10", "--out", str(out),
        ], capsys)
        assert code == 0, err
        outs.append(out)
    docs = [json.loads((o / "report.json").read_text()) for o in outs]
    for doc in docs:
        doc.pop("timestamp")
    assert docs[0] == docs[1]
    assert (outs[0] / "report.csv").read_bytes() == (outs[1] / "report.csv").read_bytes()


def test_config_file_precedence(noisy_bundles, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"k": 20, "out": str(tmp_path / "from_config")}))
    code, _, err = run_cli([
        "eval", "--config", str(config),
        "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]),
        "--test", str(noisy_bundles["test"]),
    ], capsys)
    assert code == 0, err
    doc = json.loads((tmp_path / "from_config" / "report.json").read_text())
    assert doc["rows"][0]["k"] == 20
    # explicit flag beats the config value
    code, _, err = run_cli([
        "eval", "--config", str(config), "--k", "10",
        "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]),
        "--test", str(noisy_bundles["test"]),
        "--out", str(tmp_path / "flag_wins"),
    ], capsys)
    assert code == 0, err
    doc = json.loads((tmp_path / "flag_wins" / "report.json").read_text())
    assert doc["rows"][0]["k"] == 10


def test_sweep_k_command(noisy_bundles, tmp_path, capsys):
    out = tmp_path / "sweep"
    code, stdout, err = run_cli([
        "sweep-k", "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]),
        "--k-grid", "10,20,1000", "--out", str(out),
    ], capsys)
    assert code == 0, err
    table = json.loads((out / "sweep_k.json").read_text())
    assert [row["k"] for row in table] == [10, 20, 1000]
    assert table[2]["skipped"] is True
    best = json.loads((out / "best_k.json").read_text())["best_k"]
    assert best in (10, 20)
    assert f"best_k {best}" in stdout


def test_sweep_pool_command(noisy_bundles, tmp_path, capsys):
    out = tmp_path / "sweeppool"
    code, _, err = run_cli([
        "sweep-pool", "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]),
        "--pool-sizes", "100,200", "--k-grid", "10,20",
        "--seed", "4", "--out", str(out),
    ], capsys)
    assert code == 0, err
    rows = json.loads((out / "sweep_pool.json").read_text())
    assert {row["n"] for row in rows} == {100, 200}


def test_theory_command(tmp_path, capsys):
    out = tmp_path / "theory"
    code, _, err = run_cli(["theory", "--trials", "40", "--seed", "1",
                            "--out", str(out)], capsys)
    assert code == 0, err
    summary = json.loads((out / "theory_summary.json").read_text())
    assert summary["prop1"]["violations"] == 0
    assert summary["prop2"]["violations"] == 0
    assert summary["prop1"]["trials"] == 40
    assert (out / "prop1_trials.csv").exists()
    assert (out / "prop2_trials.csv").exists()


def test_report_command(noisy_bundles, tmp_path, capsys):
    out = tmp_path / "report"
    code, _, err = run_cli([
        "report", "--pool", str(noisy_bundles["pool"]),
        "--val", str(noisy_bundles["validation"]),
        "--test", str(noisy_bundles["test"]),
        "--k", "20", "--bins", "5", "--out", str(out),
    ], capsys)
    assert code == 0, err
    bins = (out / "agreement_accuracy_bins.csv").read_text().strip().splitlines()
    assert bins[0] == "bin_center,accuracy,count"
    assert len(bins) == 6
    corr = (out / "model_correlation.csv").read_text().strip().splitlines()
    assert corr[0].startswith("model_id,")
    assert len(corr) == 3  # m=2 models
    diag = corr[1].split(",")[1]
    assert diag == "" or float(diag) == pytest.approx(1.0)


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "lata.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ingest" in proc.stdout and "theory" in proc.stdout
