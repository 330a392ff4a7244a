"""Vendor-interoperable training protocols.

Four procedures: joint end-to-end training (single vendor), UE-first
sequential training via dataset exchange, multi-vendor common-decoder
training, and the reverse decoder-first direction. Model weights never
cross the vendor boundary; the exchange artifact holds only dequantized
latents and target blocks, and the record type structurally cannot carry
weights. vendor_boundary_audit checks a run's crossings against the
allowed artifact kinds.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks import extract_block_dataset
from .channel import ChannelRealization, derive_seed
from .codec import (DENSE_A, AdamState, DecoderModel, EncoderModel,
                    QuantCodebook, codebooks_equal, decoder_forward,
                    decoder_train_step, default_codebook, dequantize_array,
                    encoder_ce_train_step, encoder_forward, init_decoder,
                    init_encoder, quantize_array, sgcs_blocks, train_step)
from .constants import BLOCKS_PER_LAYER, BLOCK_SUBBANDS, LATENT_DIM, N_TX

EXCHANGE_FILE_MAGIC = b"CSIX"
EXCHANGE_FILE_VERSION = 1

METHOD_E2E = "E2E"
METHOD_SEQ_DEDICATED = "SEQ_DEDICATED"
METHOD_COMMON = "COMMON"
METHOD_GNB_FIRST = "GNB_FIRST"

# Default encoder_id per family when the config does not assign one.
DEFAULT_ENCODER_IDS = {"dense_a": 0, "shared_b": 1}


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    holdout_fraction: float = 0.1
    min_samples: int = 200
    n_layers: int = 4
    encoder_id: int | None = None
    proxy_family: str = DENSE_A     # decoder-first stage 1 encoder family
    stage3_epochs: int | None = None
    stage3_learning_rate: float | None = None
    eval_batch: int = 512

    def echo(self, **extra) -> dict:
        d = asdict(self)
        d.update(extra)
        return d


@dataclass
class TrainReport:
    """Loss trajectory and held-out accuracy of one training run."""

    method: str
    epoch_losses: list[float]
    holdout_sgcs: list[float]  # per eigenvector rank, strongest first
    config: dict

    @property
    def mean_sgcs(self) -> float:
        return float(np.mean(self.holdout_sgcs))


# ---------------------------------------------------------------------------
# Exchange dataset


@dataclass
class ExchangeRecord:
    dequantized_latent: np.ndarray  # [64] float32, exact codebook levels
    target_block: np.ndarray        # [14, 16] float32
    layer_index: int
    encoder_id: int


@dataclass
class ExchangeDataset:
    """Columnar store of exchange records (float32, file-exact)."""

    latents: np.ndarray      # [N, 64] float32
    targets: np.ndarray      # [N, 14, 16] float32
    layer_idx: np.ndarray    # [N] uint8
    encoder_ids: np.ndarray  # [N] uint8
    codebook: QuantCodebook
    provenance: str = ""

    def __len__(self):
        return self.latents.shape[0]

    @property
    def encoder_ids_present(self) -> set[int]:
        return set(int(i) for i in np.unique(self.encoder_ids))

    def record(self, i: int) -> ExchangeRecord:
        return ExchangeRecord(self.latents[i], self.targets[i],
                              int(self.layer_idx[i]), int(self.encoder_ids[i]))

    def validate(self):
        if len(self) == 0:
            raise ValueError("exchange dataset is empty")
        levels = np.asarray(self.codebook.levels, dtype=np.float32)
        if not np.all(np.isin(self.latents, levels)):
            raise ValueError("latent entries are not exact codebook levels")
        norms = np.sqrt(np.sum(self.targets.astype(np.float64) ** 2, axis=2))
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("target blocks are not unit norm per sub-band")


def export_exchange_dataset(encoder: EncoderModel, cb: QuantCodebook,
                            channels: list[ChannelRealization],
                            n_layers: int = 4, provenance: str = "") -> ExchangeDataset:
    """One record per (realization, layer, block): encode, quantize, dequantize.

    The record arrays hold no weight material by construction.
    """
    if not channels:
        raise ValueError("empty channel dataset")
    x, layer_idx, _ = extract_block_dataset(channels, n_layers)
    lat = np.empty((x.shape[0], LATENT_DIM), dtype=np.float32)
    for lo in range(0, x.shape[0], 1024):
        z, _ = encoder_forward(encoder, x[lo:lo + 1024])
        lat[lo:lo + 1024] = dequantize_array(quantize_array(z, cb), cb).astype(np.float32)
    ds = ExchangeDataset(
        latents=lat,
        targets=x.astype(np.float32),
        layer_idx=layer_idx.astype(np.uint8),
        encoder_ids=np.full(x.shape[0], encoder.encoder_id, dtype=np.uint8),
        codebook=cb,
        provenance=provenance,
    )
    ds.validate()
    return ds


def concat_exchange(datasets: list[ExchangeDataset]) -> ExchangeDataset:
    if len(datasets) < 2:
        raise ValueError("need at least two datasets")
    cb = datasets[0].codebook
    seen = set()
    for ds in datasets:
        if not codebooks_equal(ds.codebook, cb):
            raise ValueError("codebook mismatch across exchange datasets")
        ids = ds.encoder_ids_present
        if ids & seen:
            raise ValueError(f"duplicate encoder_id across vendors: {ids & seen}")
        seen |= ids
    return ExchangeDataset(
        latents=np.concatenate([d.latents for d in datasets]),
        targets=np.concatenate([d.targets for d in datasets]),
        layer_idx=np.concatenate([d.layer_idx for d in datasets]),
        encoder_ids=np.concatenate([d.encoder_ids for d in datasets]),
        codebook=cb,
        provenance=";".join(d.provenance for d in datasets),
    )


# Exchange file ("CSIX", little-endian): magic, version u16, encoder_id u16,
# latent_dim u16, n_subbands u16, n_tx u16, record count u32, embedded
# codebook block (CSQC layout), then per record: 64 f32 latent, 224 f32
# target, u8 layer_index.

_EXCHANGE_HEADER = struct.Struct("<4sHHHHHI")


def save_exchange_dataset(path, ds: ExchangeDataset):
    ds.validate()
    ids = ds.encoder_ids_present
    if len(ids) != 1:
        raise ValueError("exchange file holds a single encoder_id per vendor")
    from .codec import CODEBOOK_FILE_MAGIC, CODEBOOK_FILE_VERSION
    with open(path, "wb") as f:
        f.write(_EXCHANGE_HEADER.pack(EXCHANGE_FILE_MAGIC, EXCHANGE_FILE_VERSION,
                                      ids.pop(), LATENT_DIM, BLOCK_SUBBANDS, N_TX,
                                      len(ds)))
        f.write(struct.pack("<4sHH", CODEBOOK_FILE_MAGIC, CODEBOOK_FILE_VERSION,
                            len(ds.codebook.levels)))
        f.write(np.asarray(ds.codebook.edges, dtype="<f4").tobytes())
        f.write(np.asarray(ds.codebook.levels, dtype="<f4").tobytes())
        for i in range(len(ds)):
            f.write(ds.latents[i].astype("<f4").tobytes())
            f.write(ds.targets[i].astype("<f4").tobytes())
            f.write(struct.pack("<B", int(ds.layer_idx[i])))


def load_exchange_dataset(path) -> ExchangeDataset:
    from .codec import CODEBOOK_FILE_MAGIC
    with open(path, "rb") as f:
        head = f.read(_EXCHANGE_HEADER.size)
        if len(head) < _EXCHANGE_HEADER.size:
            raise ValueError("exchange file truncated in header")
        magic, version, encoder_id, latent_dim, n_sb, n_tx, count = _EXCHANGE_HEADER.unpack(head)
        if magic != EXCHANGE_FILE_MAGIC:
            raise ValueError(f"bad exchange magic {magic!r}")
        if version != EXCHANGE_FILE_VERSION:
            raise ValueError(f"unsupported exchange version {version}")
        if (latent_dim, n_sb, n_tx) != (LATENT_DIM, BLOCK_SUBBANDS, N_TX):
            raise ValueError("unexpected exchange dimensions")
        cb_magic, cb_version, n_levels = struct.unpack("<4sHH", f.read(8))
        if cb_magic != CODEBOOK_FILE_MAGIC:
            raise ValueError("missing embedded codebook")
        edges = np.frombuffer(f.read((n_levels - 1) * 4), dtype="<f4").astype(np.float64)
        levels = np.frombuffer(f.read(n_levels * 4), dtype="<f4").astype(np.float64)
        cb = QuantCodebook(levels=levels, edges=edges)
        cb.validate()

        rec = BLOCK_SUBBANDS * 2 * N_TX
        latents = np.empty((count, LATENT_DIM), dtype=np.float32)
        targets = np.empty((count, BLOCK_SUBBANDS, 2 * N_TX), dtype=np.float32)
        layer_idx = np.empty(count, dtype=np.uint8)
        for i in range(count):
            buf = f.read(LATENT_DIM * 4 + rec * 4 + 1)
            if len(buf) < LATENT_DIM * 4 + rec * 4 + 1:
                raise ValueError("exchange file truncated in record")
            latents[i] = np.frombuffer(buf, dtype="<f4", count=LATENT_DIM)
            targets[i] = np.frombuffer(buf, dtype="<f4", count=rec,
                                       offset=LATENT_DIM * 4).reshape(BLOCK_SUBBANDS, 2 * N_TX)
            layer_idx[i] = buf[-1]
    ds = ExchangeDataset(latents, targets, layer_idx,
                         np.full(count, encoder_id, dtype=np.uint8), cb)
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# Shared training machinery


def _holdout_mask_by_rid(rids: np.ndarray, fraction: float) -> np.ndarray:
    """Held-out iff realization_id % 100 < round(100 * fraction)."""
    pct = int(round(100 * fraction))
    return (rids % 100) < pct


def _require_split(name: str, mask: np.ndarray, min_samples: int):
    n_hold = int(mask.sum())
    n_train = int(mask.size - n_hold)
    if n_hold == 0:
        raise ValueError(f"{name}: held-out split is empty; grow the dataset "
                         f"or raise holdout_fraction")
    if n_train < min_samples:
        raise ValueError(f"{name}: only {n_train} training blocks, "
                         f"need >= {min_samples}")


def _holdout_mask_by_group(n_records: int, group_size: int, fraction: float) -> np.ndarray:
    """Group-wise split; a group is one realization's contiguous records."""
    groups = np.arange(n_records) // group_size
    pct = int(round(100 * fraction))
    return (groups % 100) < pct


def _per_layer_sgcs(per_row: np.ndarray, layer_idx: np.ndarray, n_layers: int) -> list[float]:
    out = []
    for l in range(n_layers):
        sel = layer_idx == l
        out.append(float(np.mean(per_row[sel])) if np.any(sel) else float("nan"))
    return out


def evaluate_codec_sgcs(enc: EncoderModel, dec: DecoderModel, cb: QuantCodebook,
                        x: np.ndarray, layer_idx: np.ndarray, n_layers: int = 4,
                        decode_id=None, batch: int = 512) -> list[float]:
    """Held-out per-layer mean SGCS of the operational encode->Q->Q^-1->decode chain."""
    per_block = np.empty(x.shape[0])
    for lo in range(0, x.shape[0], batch):
        xb = np.asarray(x[lo:lo + batch], dtype=np.float64)
        z, _ = encoder_forward(enc, xb)
        zq = dequantize_array(quantize_array(z, cb), cb)
        ids = None if decode_id is None else np.full(xb.shape[0], decode_id)
        y, _ = decoder_forward(dec, zq, ids)
        per_block[lo:lo + batch] = np.mean(sgcs_blocks(xb, y), axis=1)
    return _per_layer_sgcs(per_block, layer_idx, n_layers)


def evaluate_decoder_sgcs(dec: DecoderModel, latents: np.ndarray, targets: np.ndarray,
                          layer_idx: np.ndarray, n_layers: int = 4,
                          ids=None, batch: int = 512) -> list[float]:
    """Per-layer mean SGCS of decoder outputs against target blocks."""
    per_block = np.empty(latents.shape[0])
    for lo in range(0, latents.shape[0], batch):
        zb = np.asarray(latents[lo:lo + batch], dtype=np.float64)
        idb = None if ids is None else np.asarray(ids[lo:lo + batch])
        y, _ = decoder_forward(dec, zb, idb)
        tb = np.asarray(targets[lo:lo + batch], dtype=np.float64)
        per_block[lo:lo + batch] = np.mean(sgcs_blocks(tb, y), axis=1)
    return _per_layer_sgcs(per_block, layer_idx, n_layers)


def _epoch_perm(seed: int, tag: str, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng(derive_seed(seed, tag, epoch)).permutation(n)


def _train_autoencoder(enc, dec, cb, x_train, cfg: TrainConfig, tag: str) -> list[float]:
    opt = AdamState()
    losses = []
    for epoch in range(cfg.epochs):
        perm = _epoch_perm(cfg.seed, tag, epoch, x_train.shape[0])
        total, nb = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            batch = x_train[perm[lo:lo + cfg.batch_size]]
            try:
                total += train_step(enc, dec, cb, batch, opt, cfg.learning_rate)
            except FloatingPointError as e:
                raise FloatingPointError(
                    f"{tag}: diverged at epoch {epoch}, batch {nb}: {e}") from e
            nb += 1
        losses.append(total / nb)
    return losses


# ---------------------------------------------------------------------------
# Protocols


def train_end_to_end(family: str, channels: list[ChannelRealization],
                     cfg: TrainConfig, cb: QuantCodebook | None = None):
    """Joint autoencoder training inside one vendor.

    Returns (EncoderModel, proxy DecoderModel, TrainReport). The decoder is
    a proxy: it supports the encoder's training and never crosses the
    vendor boundary.
    """
    cb = cb or default_codebook()
    x, layer_idx, rids = extract_block_dataset(channels, cfg.n_layers)
    hold = _holdout_mask_by_rid(rids, cfg.holdout_fraction)
    _require_split("end-to-end", hold, cfg.min_samples)
    x_train = x[~hold]

    encoder_id = cfg.encoder_id if cfg.encoder_id is not None else DEFAULT_ENCODER_IDS.get(family, 0)
    enc = init_encoder(family, encoder_id, seed=derive_seed(cfg.seed, "enc", family))
    dec = init_decoder(0, seed=derive_seed(cfg.seed, "proxy_dec", family))
    losses = _train_autoencoder(enc, dec, cb, x_train, cfg, f"e2e/{family}")
    sgcs = evaluate_codec_sgcs(enc, dec, cb, x[hold], layer_idx[hold],
                               cfg.n_layers, batch=cfg.eval_batch)
    report = TrainReport(METHOD_E2E, losses, sgcs,
                         cfg.echo(family=family, encoder_id=encoder_id,
                                  n_blocks=int(x.shape[0])))
    return enc, dec, report


def train_dedicated_decoder(ds: ExchangeDataset, cfg: TrainConfig):
    """Network-side decoder trained on one vendor's exchange dataset.

    Records are grouped into contiguous runs of n_layers*5 (one realization,
    given export order) for the held-out split, since the record layout
    carries no realization id.
    """
    ds.validate()
    ids = ds.encoder_ids_present
    if len(ids) != 1:
        raise ValueError("multiple encoder ids present; use train_common_decoder")
    group = cfg.n_layers * BLOCKS_PER_LAYER
    hold = _holdout_mask_by_group(len(ds), group, cfg.holdout_fraction)
    _require_split("dedicated decoder", hold, cfg.min_samples)
    lat_train = ds.latents[~hold].astype(np.float64)
    tgt_train = ds.targets[~hold].astype(np.float64)

    dec = init_decoder(0, seed=derive_seed(cfg.seed, "ded_dec", ids.copy().pop()))
    opt = AdamState()
    losses = []
    for epoch in range(cfg.epochs):
        perm = _epoch_perm(cfg.seed, "ded", epoch, lat_train.shape[0])
        total, nb = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            try:
                total += decoder_train_step(dec, lat_train[sel], tgt_train[sel],
                                            opt, cfg.learning_rate)
            except FloatingPointError as e:
                raise FloatingPointError(f"dedicated: diverged at epoch {epoch}: {e}") from e
            nb += 1
        losses.append(total / nb)
    sgcs = evaluate_decoder_sgcs(dec, ds.latents[hold], ds.targets[hold],
                                 ds.layer_idx[hold], cfg.n_layers, batch=cfg.eval_batch)
    report = TrainReport(METHOD_SEQ_DEDICATED, losses, sgcs,
                         cfg.echo(encoder_id=int(ids.pop()), n_records=len(ds)))
    return dec, report


def train_common_decoder(datasets: list[ExchangeDataset], cfg: TrainConfig):
    """One decoder for several vendor encoders, id appended as an extra input.

    Returns (DecoderModel, {encoder_id: TrainReport}) with per-encoder
    held-out accuracy.
    """
    combined = concat_exchange(datasets)  # validates codebooks and id disjointness
    if len(combined.encoder_ids_present) < 2:
        raise ValueError("common decoder needs >= 2 distinct encoder ids")

    group = cfg.n_layers * BLOCKS_PER_LAYER
    train_parts, hold_parts = [], []
    for ds in datasets:
        hold = _holdout_mask_by_group(len(ds), group, cfg.holdout_fraction)
        _require_split("common decoder", hold, 1)
        train_parts.append((ds.latents[~hold], ds.targets[~hold],
                            ds.encoder_ids[~hold]))
        hold_parts.append((ds.latents[hold], ds.targets[hold],
                           ds.layer_idx[hold], ds.encoder_ids[hold]))
    lat = np.concatenate([p[0] for p in train_parts]).astype(np.float64)
    tgt = np.concatenate([p[1] for p in train_parts]).astype(np.float64)
    eids = np.concatenate([p[2] for p in train_parts]).astype(np.float64)
    if lat.shape[0] < cfg.min_samples:
        raise ValueError(f"only {lat.shape[0]} training records, need >= {cfg.min_samples}")

    # interleave vendors with one seeded shuffle before epoch shuffling
    base = np.random.default_rng(derive_seed(cfg.seed, "common_interleave")).permutation(lat.shape[0])
    lat, tgt, eids = lat[base], tgt[base], eids[base]

    dec = init_decoder(1, seed=derive_seed(cfg.seed, "common_dec"))
    opt = AdamState()
    losses = []
    for epoch in range(cfg.epochs):
        perm = _epoch_perm(cfg.seed, "common", epoch, lat.shape[0])
        total, nb = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            try:
                total += decoder_train_step(dec, lat[sel], tgt[sel], opt,
                                            cfg.learning_rate, encoder_ids=eids[sel])
            except FloatingPointError as e:
                raise FloatingPointError(f"common: diverged at epoch {epoch}: {e}") from e
            nb += 1
        losses.append(total / nb)

    reports = {}
    for (hl, ht, hli, hid) in hold_parts:
        eid = int(hid[0])
        sgcs = evaluate_decoder_sgcs(dec, hl, ht, hli, cfg.n_layers,
                                     ids=hid.astype(np.float64), batch=cfg.eval_batch)
        reports[eid] = TrainReport(METHOD_COMMON, losses, sgcs,
                                   cfg.echo(encoder_id=eid, n_records=lat.shape[0]))
    return dec, reports


def train_gnb_first(channels: list[ChannelRealization], ue_family: str,
                    cfg: TrainConfig, cb: QuantCodebook | None = None,
                    crossings: list | None = None):
    """Decoder-first sequential training.

    Stage 1: the network vendor trains a proxy encoder + decoder end to end.
    Stage 2: it exports (dequantized latent, target block) pairs, the same
    exchange artifact as the UE-first direction but produced by the proxy
    encoder. Stage 3: the UE vendor fits its own encoder family to the
    proxy's quantization indices with a per-dimension cross entropy.
    Returns (DecoderModel, EncoderModel, TrainReport); the report evaluates
    the chained UE encoder -> Q -> Q^-1 -> network decoder on held-out
    channels. When `crossings` is given, the artifacts that crossed the
    vendor boundary are appended to it for auditing.
    """
    cb = cb or default_codebook()
    x, layer_idx, rids = extract_block_dataset(channels, cfg.n_layers)
    hold = _holdout_mask_by_rid(rids, cfg.holdout_fraction)
    _require_split("decoder-first", hold, cfg.min_samples)
    x_train = x[~hold]

    proxy_enc = init_encoder(cfg.proxy_family, 0,
                             seed=derive_seed(cfg.seed, "enc", cfg.proxy_family))
    dec = init_decoder(0, seed=derive_seed(cfg.seed, "gnb_dec"))
    stage1_losses = _train_autoencoder(proxy_enc, dec, cb, x_train, cfg, "gnb_first/stage1")
    stage1_sgcs = evaluate_codec_sgcs(proxy_enc, dec, cb, x[hold], layer_idx[hold],
                                      cfg.n_layers, batch=cfg.eval_batch)

    # Stage 2: the reverse exchange dataset (decoder inputs + target blocks).
    lat_train = np.empty((x_train.shape[0], LATENT_DIM), dtype=np.float32)
    for lo in range(0, x_train.shape[0], 1024):
        z, _ = encoder_forward(proxy_enc, x_train[lo:lo + 1024])
        lat_train[lo:lo + 1024] = dequantize_array(quantize_array(z, cb), cb).astype(np.float32)
    reverse_ds = ExchangeDataset(
        latents=lat_train,
        targets=x_train.astype(np.float32),
        layer_idx=layer_idx[~hold].astype(np.uint8),
        encoder_ids=np.full(x_train.shape[0], proxy_enc.encoder_id, dtype=np.uint8),
        codebook=cb,
        provenance=f"gnb_first/{cfg.proxy_family}",
    )
    reverse_ds.validate()
    if crossings is not None:
        crossings += [reverse_ds, cb, proxy_enc.encoder_id]

    # UE side recovers the index targets from the exact level values.
    idx_train = quantize_array(reverse_ds.latents.astype(np.float64), cb)

    encoder_id = cfg.encoder_id if cfg.encoder_id is not None else DEFAULT_ENCODER_IDS.get(ue_family, 0)
    ue_enc = init_encoder(ue_family, encoder_id,
                          seed=derive_seed(cfg.seed, "enc", ue_family))
    stage3_epochs = cfg.stage3_epochs if cfg.stage3_epochs is not None else cfg.epochs
    stage3_lr = cfg.stage3_learning_rate if cfg.stage3_learning_rate is not None else cfg.learning_rate
    opt = AdamState()
    losses = list(stage1_losses)
    for epoch in range(stage3_epochs):
        perm = _epoch_perm(cfg.seed, "gnb_stage3", epoch, x_train.shape[0])
        total, nb = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            try:
                total += encoder_ce_train_step(ue_enc, x_train[sel], idx_train[sel],
                                               cb, opt, stage3_lr)
            except FloatingPointError as e:
                raise FloatingPointError(f"gnb_first: diverged at epoch {epoch}: {e}") from e
            nb += 1
        losses.append(total / nb)

    sgcs = evaluate_codec_sgcs(ue_enc, dec, cb, x[hold], layer_idx[hold],
                               cfg.n_layers, batch=cfg.eval_batch)
    report = TrainReport(METHOD_GNB_FIRST, losses, sgcs,
                         cfg.echo(ue_family=ue_family, proxy_family=cfg.proxy_family,
                                  encoder_id=encoder_id, n_blocks=int(x.shape[0]),
                                  stage1_holdout_sgcs=stage1_sgcs))
    return dec, ue_enc, report


# ---------------------------------------------------------------------------
# Vendor boundary audit


ALLOWED_CROSSINGS = ("exchange_dataset", "quant_codebook", "encoder_id",
                     "feedback_message")


@dataclass
class BoundaryCrossing:
    kind: str
    description: str


@dataclass
class AuditReport:
    passed: bool
    crossings: list[BoundaryCrossing] = field(default_factory=list)
    violations: list[BoundaryCrossing] = field(default_factory=list)


def classify_artifact(obj) -> BoundaryCrossing:
    """Kind of one boundary-crossing artifact (object or file path)."""
    from .wire import FeedbackMessage

    if isinstance(obj, ExchangeDataset):
        return BoundaryCrossing("exchange_dataset",
                                f"exchange dataset ({len(obj)} records, "
                                f"ids {sorted(obj.encoder_ids_present)})")
    if isinstance(obj, QuantCodebook):
        return BoundaryCrossing("quant_codebook", "quantizer codebook")
    if isinstance(obj, (int, np.integer)):
        return BoundaryCrossing("encoder_id", f"encoder_id={int(obj)}")
    if isinstance(obj, FeedbackMessage):
        return BoundaryCrossing("feedback_message", "feedback message")
    if isinstance(obj, (EncoderModel, DecoderModel)):
        return BoundaryCrossing("model_weights", f"{type(obj).__name__} weights")
    if isinstance(obj, (str, bytes)) or hasattr(obj, "__fspath__"):
        with open(obj, "rb") as f:
            magic = f.read(4)
        kinds = {b"CSIX": "exchange_dataset", b"CSQC": "quant_codebook",
                 b"CSMW": "model_weights", b"CSCH": "channel_data"}
        return BoundaryCrossing(kinds.get(magic, "unknown"), f"file {obj}")
    return BoundaryCrossing("unknown", repr(type(obj)))


def vendor_boundary_audit(artifacts) -> AuditReport:
    """Check that every artifact that crossed the vendor boundary is allowed.

    Model weights (objects or CSMW files) are hard failures; so is anything
    not in the allowed set. Never raises; reports violations.
    """
    crossings = [classify_artifact(a) for a in artifacts]
    violations = [c for c in crossings if c.kind not in ALLOWED_CROSSINGS]
    return AuditReport(passed=not violations, crossings=crossings,
                       violations=violations)
