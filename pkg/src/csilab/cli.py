"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 stage failure. All
structured-text configs are JSON; see README for the schemas.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import training as T
from . import wire as W
from .channel import save_channels, scenario_preset
from .codec import default_codebook, load_codebook, load_model, save_codebook, save_model
from .experiment import (ConfigError, ExperimentConfig, StageFailure,
                         compare_runs, dataset_for_scenario, run_experiment)


def _config_fail(msg):
    click.echo(f"config error: {msg}", err=True)
    return SystemExit(2)


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise _config_fail(f"cannot read config {path}: {e}")


def _require(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise _config_fail(f"missing keys {missing}")


def _channels_from_config(channels_cfg: dict):
    _require(channels_cfg, "scenario", "count")
    try:
        return dataset_for_scenario(channels_cfg["scenario"],
                                    int(channels_cfg.get("seed", 0)),
                                    int(channels_cfg["count"]))
    except ValueError as e:
        raise _config_fail(str(e))


def _train_config(cfg: dict, seed) -> T.TrainConfig:
    return T.TrainConfig(
        epochs=int(cfg.get("epochs", 40)),
        batch_size=int(cfg.get("batch_size", 64)),
        learning_rate=float(cfg.get("learning_rate", 1e-3)),
        seed=int(seed if seed is not None else cfg.get("seed", 0)),
        holdout_fraction=float(cfg.get("holdout_fraction", 0.1)),
        min_samples=int(cfg.get("min_samples", 200)),
        n_layers=int(cfg.get("n_layers", 4)),
        encoder_id=cfg.get("encoder_id"),
        proxy_family=cfg.get("proxy_family", "dense_a"),
        stage3_epochs=cfg.get("stage3_epochs"),
    )


def _write_report(path, report: T.TrainReport):
    with open(path, "w") as f:
        json.dump({"method": report.method, "epoch_losses": report.epoch_losses,
                   "holdout_sgcs": report.holdout_sgcs, "config": report.config},
                  f, indent=2, sort_keys=True)


@click.group()
def main():
    """Link-level lab for interoperable ML-based CSI feedback compression."""


@main.command("gen-channels")
@click.option("--scenario", required=True, help="Preset name: los or nlos.")
@click.option("--count", required=True, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--out", required=True, type=click.Path())
def gen_channels(scenario, count, seed, out):
    """Generate a channel dataset file (CSCH)."""
    try:
        cfg = scenario_preset(scenario, seed)
        from .channel import generate_dataset
        save_channels(out, generate_dataset(cfg, count))
    except ValueError as e:
        raise _config_fail(str(e))
    click.echo(f"wrote {count} realizations to {out}")


@main.command("train-e2e")
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def train_e2e(config, seed):
    """Joint end-to-end training of one encoder family (single vendor)."""
    cfg = _load_json(config)
    _require(cfg, "family", "channels", "out_dir")
    channels = _channels_from_config(cfg["channels"])
    tc = _train_config(cfg, seed)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        enc, proxy, report = T.train_end_to_end(cfg["family"], channels, tc)
    except ValueError as e:
        raise _config_fail(str(e))
    except FloatingPointError as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    save_model(out / "encoder.csmw", enc)
    save_model(out / "proxy_decoder.csmw", proxy)
    save_codebook(out / "codebook.csqc", default_codebook())
    _write_report(out / "report.json", report)
    click.echo(f"holdout SGCS per rank: {[round(s, 4) for s in report.holdout_sgcs]}")


@main.command("export-dataset")
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def export_dataset(config, seed):
    """Export the vendor exchange dataset from a trained encoder."""
    cfg = _load_json(config)
    _require(cfg, "encoder", "channels", "out")
    enc = load_model(cfg["encoder"])
    cb = load_codebook(cfg["codebook"]) if "codebook" in cfg else default_codebook()
    channels = _channels_from_config(cfg["channels"])
    try:
        ds = T.export_exchange_dataset(enc, cb, channels,
                                       provenance=cfg.get("provenance", ""))
        T.save_exchange_dataset(cfg["out"], ds)
    except ValueError as e:
        raise _config_fail(str(e))
    click.echo(f"wrote {len(ds)} records to {cfg['out']}")


@main.command("train-decoder")
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def train_decoder(config, seed):
    """Train a dedicated decoder from one exchange dataset."""
    cfg = _load_json(config)
    _require(cfg, "dataset", "out_dir")
    ds = T.load_exchange_dataset(cfg["dataset"])
    tc = _train_config(cfg, seed)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        dec, report = T.train_dedicated_decoder(ds, tc)
    except ValueError as e:
        raise _config_fail(str(e))
    except FloatingPointError as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    save_model(out / "decoder.csmw", dec)
    _write_report(out / "report.json", report)
    click.echo(f"holdout SGCS per rank: {[round(s, 4) for s in report.holdout_sgcs]}")


@main.command("train-common")
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def train_common(config, seed):
    """Train one common decoder over several vendors' exchange datasets."""
    cfg = _load_json(config)
    _require(cfg, "datasets", "out_dir")
    datasets = [T.load_exchange_dataset(p) for p in cfg["datasets"]]
    tc = _train_config(cfg, seed)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        dec, reports = T.train_common_decoder(datasets, tc)
    except ValueError as e:
        raise _config_fail(str(e))
    except FloatingPointError as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    save_model(out / "decoder.csmw", dec)
    for eid, report in sorted(reports.items()):
        _write_report(out / f"report_encoder{eid}.json", report)
        click.echo(f"encoder {eid} holdout SGCS per rank: "
                   f"{[round(s, 4) for s in report.holdout_sgcs]}")


@main.command("train-gnb-first")
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def train_gnb_first_cmd(config, seed):
    """Decoder-first sequential training (network vendor trains first)."""
    cfg = _load_json(config)
    _require(cfg, "ue_family", "channels", "out_dir")
    channels = _channels_from_config(cfg["channels"])
    tc = _train_config(cfg, seed)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        dec, enc, report = T.train_gnb_first(channels, cfg["ue_family"], tc)
    except ValueError as e:
        raise _config_fail(str(e))
    except FloatingPointError as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    save_model(out / "decoder.csmw", dec)
    save_model(out / "encoder.csmw", enc)
    _write_report(out / "report.json", report)
    click.echo(f"chained holdout SGCS per rank: {[round(s, 4) for s in report.holdout_sgcs]}")


@main.command("audit")
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
def audit(config, seed):
    """Audit boundary-crossing artifacts (files classified by magic)."""
    cfg = _load_json(config)
    _require(cfg, "artifacts")
    report = T.vendor_boundary_audit(cfg["artifacts"])
    for c in report.crossings:
        click.echo(f"  {c.kind:18s} {c.description}")
    click.echo("PASS" if report.passed else "FAIL")
    if not report.passed:
        for v in report.violations:
            click.echo(f"violation: {v.kind} ({v.description})", err=True)
        sys.exit(1)


@main.command("emulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--transport", type=click.Choice(["inproc", "socket"]), default="inproc")
@click.option("--addr", default=None, help="host:port for the socket transport")
@click.option("--ticks", default=None, type=int)
@click.option("--out", default=None, type=click.Path(), help="session log (JSONL)")
def emulate(config_path, transport, addr, ticks, out):
    """Run a UE/gNB link-emulator session."""
    cfg = _load_json(config_path)
    _require(cfg, "encoder", "decoder", "channels")
    enc = load_model(cfg["encoder"])
    dec = load_model(cfg["decoder"])
    cb = load_codebook(cfg["codebook"]) if "codebook" in cfg else default_codebook()
    channel_list = _channels_from_config(cfg["channels"])
    channels = {c.realization_id: c for c in channel_list}
    model_id = int(cfg.get("model_id", getattr(enc, "encoder_id", 0)))
    ue = W.UeConfig(enc, cb, channels, model_id=model_id,
                    ri=int(cfg.get("ri", 4)), snr_db=float(cfg.get("snr_db", 10.0)))
    gnb = W.GnbConfig({model_id: dec}, cb, channels,
                      snr_db=float(cfg.get("snr_db", 10.0)))
    n_ticks = ticks if ticks is not None else int(cfg.get("ticks", len(channels)))
    ids = [c.realization_id for c in channel_list][:n_ticks]
    try:
        log = W.emulate_link(ue, gnb, ids, transport=transport, addr=addr)
    except W.SessionAbort as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    out_path = out or cfg.get("out", "session.jsonl")
    log.write_jsonl(out_path)
    ok = [r for r in log.records if r.status == "ok"]
    mean_cap = float(np.mean([r.capacity for r in ok])) if ok else float("nan")
    click.echo(f"{len(log.records)} ticks ({len(ok)} decoded), "
               f"mean capacity {mean_cap:.3f} bits/s/Hz, log at {out_path}")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--jobs", default=1, type=int)
def run(config_path, jobs):
    """Run a full experiment from a JSON config."""
    raw = _load_json(config_path)
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except ConfigError as e:
        raise _config_fail(str(e))
    try:
        table = run_experiment(cfg, jobs=jobs)
    except StageFailure as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    click.echo(f"result table at {Path(cfg.out_dir) / 'result_table.json'}")
    for fam in table.families:
        for m in table.methods:
            click.echo(f"  {fam:10s} {m:14s} avg SGCS {table.method_average(fam, m):.4f}")


@main.command("report")
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["txt", "csv"]), default="txt")
def report_cmd(run_dir, fmt):
    """Render report files (tables, traces, figures) for a finished run."""
    from .experiment import ResultTable
    from .report import emit_report
    path = Path(run_dir) / "result_table.json"
    if not path.exists():
        raise _config_fail(f"{path} not found")
    table = ResultTable.from_json(path.read_text())
    try:
        written = emit_report(table, fmt, Path(run_dir) / "report")
    except ValueError as e:
        click.echo(f"stage failure: {e}", err=True)
        sys.exit(3)
    for p in written:
        click.echo(str(p))


@main.command("compare")
@click.argument("dir_a", type=click.Path(exists=True))
@click.argument("dir_b", type=click.Path(exists=True))
@click.option("--threshold", default=0.02, type=float)
def compare(dir_a, dir_b, threshold):
    """Cell-wise diff of two run directories' result tables."""
    try:
        diff = compare_runs(dir_a, dir_b, threshold)
    except (FileNotFoundError, ValueError) as e:
        raise _config_fail(str(e))
    click.echo(f"max |delta| = {diff.max_abs_delta:.6f}")
    for k in diff.highlighted:
        click.echo(f"  {k}: delta {diff.deltas[k]:+.4f} exceeds {threshold}")
    if not diff.highlighted:
        click.echo(f"no cell differs by more than {threshold}")


if __name__ == "__main__":
    main()
