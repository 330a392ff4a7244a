"""End-to-end CLI workflow: train, export, train decoders both ways, audit."""

import json

import pytest
from click.testing import CliRunner

from csilab.cli import main


CHANNELS = {"scenario": "mixed", "count": 60, "seed": 17}


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture(scope="module")
def workflow_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliflow")
    runner = CliRunner()

    e2e_cfg = _write(root / "e2e.json", {
        "family": "dense_a", "channels": CHANNELS, "epochs": 3,
        "out_dir": str(root / "e2e")})
    result = runner.invoke(main, ["train-e2e", e2e_cfg, "--seed", "5"])
    assert result.exit_code == 0, result.output

    export_cfg = _write(root / "export.json", {
        "encoder": str(root / "e2e" / "encoder.csmw"),
        "channels": CHANNELS, "out": str(root / "a.csix")})
    result = runner.invoke(main, ["export-dataset", export_cfg])
    assert result.exit_code == 0, result.output

    return root, runner


def test_train_decoder_from_exchange(workflow_dir):
    root, runner = workflow_dir
    cfg = _write(root / "dec.json", {
        "dataset": str(root / "a.csix"), "epochs": 3,
        "out_dir": str(root / "dec")})
    result = runner.invoke(main, ["train-decoder", cfg, "--seed", "5"])
    assert result.exit_code == 0, result.output
    assert (root / "dec" / "decoder.csmw").exists()
    report = json.loads((root / "dec" / "report.json").read_text())
    assert report["method"] == "SEQ_DEDICATED"
    assert len(report["holdout_sgcs"]) == 4


def test_train_common_needs_two_vendors(workflow_dir):
    root, runner = workflow_dir
    cfg = _write(root / "common1.json", {
        "datasets": [str(root / "a.csix")], "epochs": 1,
        "out_dir": str(root / "common")})
    result = runner.invoke(main, ["train-common", cfg])
    assert result.exit_code == 2


def test_train_common_two_vendors(workflow_dir):
    root, runner = workflow_dir
    e2e_b = _write(root / "e2e_b.json", {
        "family": "shared_b", "channels": CHANNELS, "epochs": 3,
        "out_dir": str(root / "e2e_b")})
    assert runner.invoke(main, ["train-e2e", e2e_b, "--seed", "6"]).exit_code == 0
    export_b = _write(root / "export_b.json", {
        "encoder": str(root / "e2e_b" / "encoder.csmw"),
        "channels": CHANNELS, "out": str(root / "b.csix")})
    assert runner.invoke(main, ["export-dataset", export_b]).exit_code == 0

    cfg = _write(root / "common2.json", {
        "datasets": [str(root / "a.csix"), str(root / "b.csix")],
        "epochs": 2, "out_dir": str(root / "common2")})
    result = runner.invoke(main, ["train-common", cfg, "--seed", "7"])
    assert result.exit_code == 0, result.output
    assert (root / "common2" / "decoder.csmw").exists()
    assert (root / "common2" / "report_encoder0.json").exists()
    assert (root / "common2" / "report_encoder1.json").exists()


def test_train_gnb_first_cli(workflow_dir):
    root, runner = workflow_dir
    cfg = _write(root / "gnb.json", {
        "ue_family": "shared_b", "proxy_family": "dense_a",
        "channels": CHANNELS, "epochs": 2, "stage3_epochs": 2,
        "out_dir": str(root / "gnb")})
    result = runner.invoke(main, ["train-gnb-first", cfg, "--seed", "8"])
    assert result.exit_code == 0, result.output
    assert (root / "gnb" / "decoder.csmw").exists()
    assert (root / "gnb" / "encoder.csmw").exists()


def test_audit_cli(workflow_dir):
    root, runner = workflow_dir
    ok_cfg = _write(root / "audit_ok.json", {
        "artifacts": [str(root / "a.csix"), str(root / "e2e" / "codebook.csqc")]})
    result = runner.invoke(main, ["audit", ok_cfg])
    assert result.exit_code == 0, result.output
    assert "PASS" in result.output

    bad_cfg = _write(root / "audit_bad.json", {
        "artifacts": [str(root / "a.csix"), str(root / "e2e" / "encoder.csmw")]})
    result = runner.invoke(main, ["audit", bad_cfg])
    assert result.exit_code == 1
    assert "FAIL" in result.output


def test_missing_config_key_exits_2(workflow_dir):
    root, runner = workflow_dir
    cfg = _write(root / "bad.json", {"family": "dense_a"})
    result = runner.invoke(main, ["train-e2e", cfg])
    assert result.exit_code == 2


def test_malformed_json_exits_2(workflow_dir):
    root, runner = workflow_dir
    bad = root / "broken.json"
    bad.write_text("{not json")
    result = runner.invoke(main, ["train-e2e", str(bad)])
    assert result.exit_code == 2
