"""Experiment orchestration: train the configured protocols, evaluate every
(family, rank, method) cell on held-out channels, run the capacity grid
against the wideband codebook baseline, and leave reproducible artifacts on
disk.
"""

from __future__ import annotations

import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blocks import blocks_to_vectors, extract_block_dataset, report_to_blocks
from .channel import (derive_seed, generate_dataset, generate_mixed_dataset,
                      scenario_preset)
from .codec import (DecoderModel, EncoderModel, decoder_forward,
                    default_codebook, dequantize_array, encoder_forward,
                    quantize_array, save_codebook, save_model)
from .constants import N_SUBBANDS
from .precoding import (closed_loop_capacity, extract_precoders,
                        make_dft_codebook, reorthogonalize, sgcs_rows,
                        type1_baseline)
from .training import (METHOD_COMMON, METHOD_E2E, METHOD_GNB_FIRST,
                       METHOD_SEQ_DEDICATED, TrainConfig, TrainReport,
                       evaluate_codec_sgcs, export_exchange_dataset,
                       save_exchange_dataset, train_common_decoder,
                       train_dedicated_decoder, train_end_to_end,
                       train_gnb_first, vendor_boundary_audit)

KNOWN_SCENARIOS = ("los", "nlos", "mixed")
KNOWN_PROTOCOLS = (METHOD_E2E, METHOD_SEQ_DEDICATED, METHOD_COMMON, METHOD_GNB_FIRST)
KNOWN_FAMILIES = ("dense_a", "shared_b")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class StageFailure(RuntimeError):
    """A pipeline stage failed; the stage name is in the message."""


@dataclass
class ExperimentConfig:
    train_scenarios: list[str]
    eval_scenarios: list[str]
    families: list[str]
    protocols: list[str]
    out_dir: str
    n_train_realizations: int = 1000
    n_eval_realizations: int = 100
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    snr_db: float = 10.0
    n_layers: int = 4
    capacity_family: str | None = None
    stage3_epochs: int | None = None
    min_samples: int = 200

    def validate(self):
        for s in self.train_scenarios + self.eval_scenarios:
            if s not in KNOWN_SCENARIOS:
                raise ConfigError(f"unknown scenario {s!r} (have {KNOWN_SCENARIOS})")
        for f in self.families:
            if f not in KNOWN_FAMILIES:
                raise ConfigError(f"unknown family {f!r} (have {KNOWN_FAMILIES})")
        for p in self.protocols:
            if p not in KNOWN_PROTOCOLS:
                raise ConfigError(f"unknown protocol {p!r} (have {KNOWN_PROTOCOLS})")
        if not self.train_scenarios or not self.eval_scenarios:
            raise ConfigError("need at least one train and one eval scenario")
        if not self.families or not self.protocols:
            raise ConfigError("need at least one family and one protocol")
        if METHOD_COMMON in self.protocols and len(self.families) < 2:
            raise ConfigError("COMMON requires at least two encoder families")
        if self.capacity_family is not None and self.capacity_family not in self.families:
            raise ConfigError(f"capacity_family {self.capacity_family!r} not in families")
        if self.n_train_realizations < 1 or self.n_eval_realizations < 1:
            raise ConfigError("realization counts must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"train_scenarios", "eval_scenarios", "families",
                   "protocols", "out_dir"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            cfg = cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


@dataclass
class ResultTable:
    """SGCS matrix, capacity-gain grid and per-sub-band traces of one run."""

    families: list[str]
    methods: list[str]
    n_layers: int
    sgcs: dict[str, float] = field(default_factory=dict)      # "family|rank|method"
    gains: dict[str, float] = field(default_factory=dict)     # "eval|train"
    capacity_ml: dict[str, float] = field(default_factory=dict)
    capacity_baseline: dict[str, float] = field(default_factory=dict)
    sgcs_ml: dict[str, float] = field(default_factory=dict)
    sgcs_baseline: dict[str, float] = field(default_factory=dict)
    traces: dict[str, list] = field(default_factory=dict)     # layer/subband/sgcs columns
    meta: dict = field(default_factory=dict)

    @staticmethod
    def sgcs_key(family: str, rank: int, method: str) -> str:
        return f"{family}|{rank}|{method}"

    @staticmethod
    def gain_key(eval_scenario: str, train_scenario: str) -> str:
        return f"{eval_scenario}|{train_scenario}"

    def sgcs_cell(self, family: str, rank: int, method: str) -> float:
        return self.sgcs[self.sgcs_key(family, rank, method)]

    def method_average(self, family: str, method: str) -> float:
        vals = [self.sgcs_cell(family, r, method) for r in range(1, self.n_layers + 1)]
        return float(np.mean(vals))

    def missing_cells(self) -> list[tuple[str, int, str]]:
        out = []
        for f in self.families:
            for r in range(1, self.n_layers + 1):
                for m in self.methods:
                    if self.sgcs_key(f, r, m) not in self.sgcs:
                        out.append((f, r, m))
        return out

    def check_complete(self):
        missing = self.missing_cells()
        if missing:
            f, r, m = missing[0]
            raise ValueError(f"result table incomplete: missing (family={f}, "
                             f"rank={r}, method={m}) and {len(missing) - 1} more")
        for k, v in self.sgcs.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"SGCS cell {k} = {v} outside [0, 1]")

    def to_json(self) -> str:
        from dataclasses import asdict
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        d = json.loads(text)
        return cls(**d)


# ---------------------------------------------------------------------------
# Channel plumbing


def dataset_for_scenario(name: str, seed: int, count: int):
    """Channel realizations for a named scenario; "mixed" interleaves presets."""
    if name == "mixed":
        a = scenario_preset("los", derive_seed(seed, "los"))
        b = scenario_preset("nlos", derive_seed(seed, "nlos"))
        return generate_mixed_dataset(a, b, count)
    return generate_dataset(scenario_preset(name, seed), count)


def reconstruct_vectors(ch, enc: EncoderModel, dec: DecoderModel, cb,
                        n_layers: int, decode_id=None):
    """Ground-truth report and decoded precoders for one realization."""
    truth = extract_precoders(ch, n_layers)
    blocks, _ = report_to_blocks(truth)
    z, _ = encoder_forward(enc, blocks)
    zq = dequantize_array(quantize_array(z, cb), cb)
    ids = None if decode_id is None else np.full(zq.shape[0], decode_id)
    y, _ = decoder_forward(dec, zq, ids)
    return truth, blocks_to_vectors(y, n_layers)


# ---------------------------------------------------------------------------
# Per-train-scenario cell (trainings + evaluations)


def _train_scenario_cell(cfg: ExperimentConfig, ts: str):
    """Train every configured protocol for one train scenario.

    Returns (systems, reports, exchange_datasets, crossings, codebook) where
    systems maps (family, method) -> (encoder, decoder, decode_id or None).
    """
    cb = default_codebook()
    channels = dataset_for_scenario(ts, derive_seed(cfg.seed, "train", ts),
                                    cfg.n_train_realizations)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                     learning_rate=cfg.learning_rate,
                     seed=derive_seed(cfg.seed, "fit", ts),
                     n_layers=cfg.n_layers, min_samples=cfg.min_samples,
                     stage3_epochs=cfg.stage3_epochs)

    systems: dict[tuple[str, str], tuple] = {}
    reports: dict[str, TrainReport] = {}
    exchanges: dict[str, object] = {}
    crossings: list = []

    need_encoders = any(p in cfg.protocols
                        for p in (METHOD_E2E, METHOD_SEQ_DEDICATED, METHOD_COMMON))
    encoders: dict[str, EncoderModel] = {}
    for fam in cfg.families:
        if need_encoders:
            enc, proxy, rep = train_end_to_end(fam, channels, tc, cb)
            encoders[fam] = enc
            reports[f"{fam}/{METHOD_E2E}"] = rep
            if METHOD_E2E in cfg.protocols:
                systems[(fam, METHOD_E2E)] = (enc, proxy, None)
        if METHOD_SEQ_DEDICATED in cfg.protocols or METHOD_COMMON in cfg.protocols:
            ds = export_exchange_dataset(encoders[fam], cb, channels,
                                         n_layers=cfg.n_layers,
                                         provenance=f"{fam}/{ts}")
            exchanges[fam] = ds
            crossings += [ds, cb, encoders[fam].encoder_id]
        if METHOD_SEQ_DEDICATED in cfg.protocols:
            ded, rep = train_dedicated_decoder(exchanges[fam], tc)
            reports[f"{fam}/{METHOD_SEQ_DEDICATED}"] = rep
            systems[(fam, METHOD_SEQ_DEDICATED)] = (encoders[fam], ded, None)

    if METHOD_COMMON in cfg.protocols:
        common_dec, per_enc = train_common_decoder(
            [exchanges[f] for f in cfg.families], tc)
        for fam in cfg.families:
            eid = encoders[fam].encoder_id
            reports[f"{fam}/{METHOD_COMMON}"] = per_enc[eid]
            systems[(fam, METHOD_COMMON)] = (encoders[fam], common_dec, eid)

    if METHOD_GNB_FIRST in cfg.protocols:
        for fam in cfg.families:
            gnb_dec, ue_enc, rep = train_gnb_first(channels, fam, tc, cb,
                                                   crossings=crossings)
            reports[f"{fam}/{METHOD_GNB_FIRST}"] = rep
            systems[(fam, METHOD_GNB_FIRST)] = (ue_enc, gnb_dec, None)

    return systems, reports, exchanges, crossings, cb


def _eval_sgcs_cells(cfg: ExperimentConfig, systems, cb, table: ResultTable, ts: str):
    """Fill (family, rank, method) SGCS cells from the eval set of scenario ts."""
    eval_channels = dataset_for_scenario(ts, derive_seed(cfg.seed, "eval", ts),
                                         cfg.n_eval_realizations)
    x, layer_idx, _ = extract_block_dataset(eval_channels, cfg.n_layers)
    for (fam, method), (enc, dec, decode_id) in systems.items():
        per_layer = evaluate_codec_sgcs(enc, dec, cb, x, layer_idx,
                                        cfg.n_layers, decode_id=decode_id)
        for rank, val in enumerate(per_layer, start=1):
            table.sgcs[ResultTable.sgcs_key(fam, rank, method)] = val


def _capacity_system(cfg: ExperimentConfig, systems):
    """The (encoder, decoder, decode_id) used for the capacity grid and traces."""
    fam = cfg.capacity_family or cfg.families[0]
    for method in (METHOD_SEQ_DEDICATED, METHOD_E2E, METHOD_COMMON, METHOD_GNB_FIRST):
        if (fam, method) in systems:
            return fam, method, systems[(fam, method)]
    raise StageFailure("no trained system available for the capacity grid")


def _eval_capacity_grid(cfg: ExperimentConfig, systems, cb, table: ResultTable, ts: str):
    """Capacity and SGCS of the ML system vs the wideband codebook baseline."""
    fam, method, (enc, dec, decode_id) = _capacity_system(cfg, systems)
    dft = make_dft_codebook(4)
    for es in cfg.eval_scenarios:
        channels = dataset_for_scenario(es, derive_seed(cfg.seed, "eval", es),
                                        cfg.n_eval_realizations)
        ml_caps, base_caps, ml_sgcs, base_sgcs = [], [], [], []
        for ch in channels:
            truth, v_hat = reconstruct_vectors(ch, enc, dec, cb, cfg.n_layers,
                                               decode_id)
            ml_sgcs.append(float(np.mean(sgcs_rows(truth.v, v_hat))))
            w = np.swapaxes(reorthogonalize(np.swapaxes(v_hat, 0, 1)), 0, 1)
            ml_caps.append(closed_loop_capacity(ch, w, cfg.snr_db))
            base = type1_baseline(truth, dft)
            base_sgcs.append(float(np.mean(sgcs_rows(truth.v, base.v))))
            base_caps.append(closed_loop_capacity(ch, base.v, cfg.snr_db))
        key = ResultTable.gain_key(es, ts)
        cap_ml, cap_base = float(np.mean(ml_caps)), float(np.mean(base_caps))
        table.capacity_ml[key] = cap_ml
        table.capacity_baseline[key] = cap_base
        table.gains[key] = (cap_ml - cap_base) / cap_base
        table.sgcs_ml[key] = float(np.mean(ml_sgcs))
        table.sgcs_baseline[key] = float(np.mean(base_sgcs))
    table.meta.setdefault("capacity_system", f"{fam}/{method}")


def _eval_traces(cfg: ExperimentConfig, systems, cb, table: ResultTable, ts: str):
    """Per-sub-band SGCS traces: mean over eval realizations plus one snapshot."""
    fam, method, (enc, dec, decode_id) = _capacity_system(cfg, systems)
    channels = dataset_for_scenario(ts, derive_seed(cfg.seed, "eval", ts),
                                    cfg.n_eval_realizations)
    acc = np.zeros((cfg.n_layers, N_SUBBANDS))
    snapshot = None
    for ch in channels:
        truth, v_hat = reconstruct_vectors(ch, enc, dec, cb, cfg.n_layers, decode_id)
        per_sb = sgcs_rows(truth.v, v_hat)  # [n_layers, 70]
        acc += per_sb
        if snapshot is None:
            snapshot = per_sb
    acc /= len(channels)
    layers, subbands, means, snaps = [], [], [], []
    for l in range(cfg.n_layers):
        for k in range(N_SUBBANDS):
            layers.append(l + 1)
            subbands.append(k)
            means.append(float(acc[l, k]))
            snaps.append(float(snapshot[l, k]))
    table.traces = {"layer": layers, "subband": subbands,
                    "sgcs_mean": means, "sgcs_snapshot": snaps}


# ---------------------------------------------------------------------------
# Run driver


def _save_run_artifacts(cfg: ExperimentConfig, out: Path, ts: str, systems,
                        reports, exchanges, cb):
    models = out / "models" / ts
    models.mkdir(parents=True, exist_ok=True)
    save_codebook(models / "codebook.csqc", cb)
    for (fam, method), (enc, dec, _) in systems.items():
        save_model(models / f"{fam}_{method.lower()}_encoder.csmw", enc)
        save_model(models / f"{fam}_{method.lower()}_decoder.csmw", dec)
    exch = out / "exchange" / ts
    exch.mkdir(parents=True, exist_ok=True)
    for fam, ds in exchanges.items():
        save_exchange_dataset(exch / f"{fam}.csix", ds)
    report_blob = {
        key: {"method": r.method, "epoch_losses": r.epoch_losses,
              "holdout_sgcs": r.holdout_sgcs, "config": r.config}
        for key, r in reports.items()
    }
    with open(out / f"train_reports_{ts}.json", "w") as f:
        json.dump(report_blob, f, indent=2, sort_keys=True)


def _run_one_train_scenario(cfg: ExperimentConfig, ts: str, primary: bool,
                            save_artifacts: bool = True):
    """Worker for one train scenario; returns a partial ResultTable."""
    table = ResultTable(families=list(cfg.families), methods=list(cfg.protocols),
                        n_layers=cfg.n_layers)
    out = Path(cfg.out_dir)
    stage = f"train[{ts}]"
    try:
        systems, reports, exchanges, crossings, cb = _train_scenario_cell(cfg, ts)
        if primary:
            stage = f"eval-sgcs[{ts}]"
            _eval_sgcs_cells(cfg, systems, cb, table, ts)
            stage = f"traces[{ts}]"
            _eval_traces(cfg, systems, cb, table, ts)
        stage = f"capacity[{ts}]"
        _eval_capacity_grid(cfg, systems, cb, table, ts)
        stage = f"artifacts[{ts}]"
        audit = vendor_boundary_audit(crossings)
        table.meta[f"audit/{ts}"] = {
            "passed": audit.passed,
            "crossings": [[c.kind, c.description] for c in audit.crossings],
            "violations": [[c.kind, c.description] for c in audit.violations],
        }
        if save_artifacts:
            _save_run_artifacts(cfg, out, ts, systems, reports, exchanges, cb)
    except Exception as e:
        raise StageFailure(f"stage {stage}: {e}") from e
    return table


def _merge_tables(base: ResultTable, part: ResultTable):
    base.sgcs.update(part.sgcs)
    base.gains.update(part.gains)
    base.capacity_ml.update(part.capacity_ml)
    base.capacity_baseline.update(part.capacity_baseline)
    base.sgcs_ml.update(part.sgcs_ml)
    base.sgcs_baseline.update(part.sgcs_baseline)
    if part.traces:
        base.traces = part.traces
    base.meta.update(part.meta)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ResultTable:
    """Execute the configured grid and leave all artifacts under cfg.out_dir.

    The SGCS matrix and traces come from the first train scenario (the
    primary cell, mirroring the single-dataset accuracy table); the capacity
    grid covers every (eval scenario, train scenario) pair. On a stage
    failure, partial artifacts stay on disk under a failed/ marker and the
    failure is re-raised.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)

    table = ResultTable(families=list(cfg.families), methods=list(cfg.protocols),
                        n_layers=cfg.n_layers)
    table.meta["seed"] = cfg.seed
    table.meta["train_scenarios"] = list(cfg.train_scenarios)
    table.meta["eval_scenarios"] = list(cfg.eval_scenarios)

    try:
        scenario_args = [(ts, i == 0) for i, ts in enumerate(cfg.train_scenarios)]
        if jobs > 1 and len(scenario_args) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_one_train_scenario, cfg, ts, primary)
                           for ts, primary in scenario_args]
                for fut in futures:
                    _merge_tables(table, fut.result())
        else:
            for ts, primary in scenario_args:
                _merge_tables(table, _run_one_train_scenario(cfg, ts, primary))
        table.check_complete()
    except Exception as e:
        failed = out / "failed"
        failed.mkdir(exist_ok=True)
        stage = e.args[0].split(":")[0] if isinstance(e, StageFailure) and e.args else "unknown"
        with open(failed / "marker.txt", "w") as f:
            f.write(f"{stage}\n\n{traceback.format_exc()}")
        raise

    with open(out / "result_table.json", "w") as f:
        f.write(table.to_json())
    return table


# ---------------------------------------------------------------------------
# Run comparison


@dataclass
class DiffSummary:
    max_abs_delta: float
    deltas: dict[str, float]
    highlighted: list[str]
    threshold: float


def compare_runs(dir_a, dir_b, threshold: float = 0.02) -> DiffSummary:
    """Cell-wise ResultTable deltas between two run directories."""
    tables = []
    for d in (dir_a, dir_b):
        path = Path(d) / "result_table.json"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found")
        tables.append(ResultTable.from_json(path.read_text()))
    a, b = tables
    if set(a.sgcs) != set(b.sgcs) or set(a.gains) != set(b.gains):
        raise ValueError("result table schemas do not match "
                         f"(sgcs keys {len(a.sgcs)} vs {len(b.sgcs)}, "
                         f"gain keys {len(a.gains)} vs {len(b.gains)})")
    deltas = {k: b.sgcs[k] - a.sgcs[k] for k in sorted(a.sgcs)}
    deltas.update({f"gain:{k}": b.gains[k] - a.gains[k] for k in sorted(a.gains)})
    mx = max((abs(v) for v in deltas.values()), default=0.0)
    highlighted = [k for k, v in sorted(deltas.items()) if abs(v) > threshold]
    return DiffSummary(mx, deltas, highlighted, threshold)
