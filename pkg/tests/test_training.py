import numpy as np
import pytest

from csilab.blocks import extract_block_dataset
from csilab.channel import derive_seed, generate_dataset, scenario_preset
from csilab.codec import (QuantCodebook, default_codebook, init_encoder,
                          save_model)
from csilab.experiment import dataset_for_scenario
from csilab.training import (ExchangeDataset, TrainConfig, concat_exchange,
                             evaluate_codec_sgcs, export_exchange_dataset,
                             load_exchange_dataset, save_exchange_dataset,
                             train_common_decoder, train_dedicated_decoder,
                             train_end_to_end, train_gnb_first,
                             vendor_boundary_audit)


@pytest.fixture(scope="module")
def small_channels():
    return dataset_for_scenario("mixed", derive_seed(9, "train", "mixed"), 120)


@pytest.fixture(scope="module")
def trained_pair(small_channels):
    """One quickly trained encoder per family plus their exchange datasets."""
    cfg = TrainConfig(epochs=6, seed=5)
    cb = default_codebook()
    out = {}
    for fam in ("dense_a", "shared_b"):
        enc, proxy, rep = train_end_to_end(fam, small_channels, cfg, cb)
        ds = export_exchange_dataset(enc, cb, small_channels, provenance=fam)
        out[fam] = (enc, proxy, rep, ds)
    return out


# ---------------------------------------------------------------------------
# End-to-end training


def test_e2e_zero_epochs_keeps_init(small_channels):
    cfg = TrainConfig(epochs=0, seed=7)
    enc, dec, rep = train_end_to_end("dense_a", small_channels, cfg)
    ref = init_encoder("dense_a", 0, seed=derive_seed(7, "enc", "dense_a"))
    for la, lb in zip(enc.layers, ref.layers):
        assert np.array_equal(la.w, lb.w)
    assert rep.epoch_losses == []
    assert all(0.0 <= s <= 1.0 for s in rep.holdout_sgcs)
    assert rep.method == "E2E"


def test_e2e_improves_over_untrained_baseline():
    channels = generate_dataset(scenario_preset("los", seed=31), 200)
    cfg = TrainConfig(epochs=10, seed=3)
    # untrained oracle first
    init_rep = train_end_to_end("dense_a", channels, TrainConfig(epochs=0, seed=3))[2]
    enc, dec, rep = train_end_to_end("dense_a", channels, cfg)
    assert rep.holdout_sgcs[0] >= init_rep.holdout_sgcs[0] + 0.2
    assert rep.epoch_losses[-1] < rep.epoch_losses[0]


def test_e2e_insufficient_data_rejected():
    channels = generate_dataset(scenario_preset("los", seed=1), 5)
    with pytest.raises(ValueError, match="training blocks"):
        train_end_to_end("dense_a", channels, TrainConfig(epochs=1, min_samples=10_000))


def test_e2e_reproducible(small_channels):
    cfg = TrainConfig(epochs=2, seed=11)
    a = train_end_to_end("dense_a", small_channels, cfg)
    b = train_end_to_end("dense_a", small_channels, cfg)
    assert a[2].epoch_losses == b[2].epoch_losses
    assert a[2].holdout_sgcs == b[2].holdout_sgcs
    assert all(np.array_equal(x.w, y.w) for x, y in zip(a[0].layers, b[0].layers))


# ---------------------------------------------------------------------------
# Exchange dataset


def test_export_counts_and_levels(small_channels):
    enc = init_encoder("dense_a", 0, seed=0)
    cb = default_codebook()
    ds = export_exchange_dataset(enc, cb, small_channels[:10])
    assert len(ds) == 10 * 4 * 5
    levels = set(np.unique(ds.latents).tolist())
    assert levels <= {-0.75, -0.25, 0.25, 0.75}
    assert ds.encoder_ids_present == {0}
    rec = ds.record(7)
    assert rec.layer_index == ds.layer_idx[7]


def test_exchange_roundtrip_bit_identical(tmp_path, small_channels):
    enc = init_encoder("shared_b", 4, seed=2)
    ds = export_exchange_dataset(enc, default_codebook(), small_channels[:6],
                                 provenance="v")
    path = tmp_path / "x.csix"
    save_exchange_dataset(path, ds)
    back = load_exchange_dataset(path)
    assert np.array_equal(ds.latents, back.latents)
    assert np.array_equal(ds.targets, back.targets)
    assert np.array_equal(ds.layer_idx, back.layer_idx)
    assert back.encoder_ids_present == {4}
    assert np.array_equal(np.asarray(back.codebook.levels, dtype=np.float32),
                          np.asarray(ds.codebook.levels, dtype=np.float32))


def test_exchange_validation_rejects_off_level_latents(small_channels):
    enc = init_encoder("dense_a", 0, seed=0)
    ds = export_exchange_dataset(enc, default_codebook(), small_channels[:3])
    ds.latents[0, 0] = 0.5
    with pytest.raises(ValueError, match="codebook levels"):
        ds.validate()


# ---------------------------------------------------------------------------
# Dedicated decoder


def test_dedicated_zero_epochs_is_init_level(trained_pair):
    _, _, _, ds = trained_pair["dense_a"]
    dec, rep = train_dedicated_decoder(ds, TrainConfig(epochs=0, seed=1))
    assert rep.epoch_losses == []
    assert all(0.0 <= s <= 1.0 for s in rep.holdout_sgcs)


def test_dedicated_deterministic(trained_pair):
    _, _, _, ds = trained_pair["dense_a"]
    cfg = TrainConfig(epochs=2, seed=8)
    a = train_dedicated_decoder(ds, cfg)[1]
    b = train_dedicated_decoder(ds, cfg)[1]
    assert a.epoch_losses == b.epoch_losses
    assert a.holdout_sgcs == b.holdout_sgcs


def test_dedicated_rejects_multi_vendor(trained_pair):
    ds_a = trained_pair["dense_a"][3]
    ds_b = trained_pair["shared_b"][3]
    combined = concat_exchange([ds_a, ds_b])
    with pytest.raises(ValueError, match="train_common_decoder"):
        train_dedicated_decoder(combined, TrainConfig(epochs=1))


def test_e2e_layer_sgcs_ordering(trained_pair):
    # stronger eigenvector ranks reconstruct better even at small scale
    rep = trained_pair["dense_a"][2]
    sgcs = rep.holdout_sgcs
    assert all(sgcs[i] >= sgcs[i + 1] for i in range(3))


def test_dedicated_tracks_e2e(trained_pair):
    # the gap claim at desk scale lives in the acceptance suite; here only
    # sanity: dedicated decoder reaches the same ballpark as the proxy
    enc, proxy, e2e_rep, ds = trained_pair["dense_a"]
    dec, rep = train_dedicated_decoder(ds, TrainConfig(epochs=6, seed=5))
    assert abs(rep.mean_sgcs - e2e_rep.mean_sgcs) < 0.1


# ---------------------------------------------------------------------------
# Common decoder


def test_common_requires_two_datasets(trained_pair):
    ds = trained_pair["dense_a"][3]
    with pytest.raises(ValueError, match="two datasets"):
        train_common_decoder([ds], TrainConfig(epochs=1))


def test_common_rejects_codebook_mismatch(trained_pair):
    ds_a = trained_pair["dense_a"][3]
    ds_b = trained_pair["shared_b"][3]
    other = QuantCodebook(levels=np.array([-0.9, -0.3, 0.3, 0.9]),
                          edges=np.array([-0.6, 0.0, 0.6]), lo=-1.2, hi=1.2)
    clone = ExchangeDataset(ds_b.latents, ds_b.targets, ds_b.layer_idx,
                            ds_b.encoder_ids, other, "v")
    with pytest.raises(ValueError, match="codebook mismatch"):
        train_common_decoder([ds_a, clone], TrainConfig(epochs=1))


def test_common_rejects_duplicate_ids(trained_pair):
    ds_a = trained_pair["dense_a"][3]
    with pytest.raises(ValueError, match="duplicate encoder_id"):
        train_common_decoder([ds_a, ds_a], TrainConfig(epochs=1))


def test_common_id_input_is_informative(trained_pair, small_channels):
    enc_a, _, _, ds_a = trained_pair["dense_a"]
    enc_b, _, _, ds_b = trained_pair["shared_b"]
    dec, reports = train_common_decoder([ds_a, ds_b], TrainConfig(epochs=6, seed=5))
    assert set(reports) == {0, 1}
    x, layer_idx, _ = extract_block_dataset(small_channels[:20], 4)
    right = np.mean(evaluate_codec_sgcs(enc_a, dec, default_codebook(), x,
                                        layer_idx, decode_id=0))
    wrong = np.mean(evaluate_codec_sgcs(enc_a, dec, default_codebook(), x,
                                        layer_idx, decode_id=1))
    assert right > wrong


# ---------------------------------------------------------------------------
# Decoder-first direction


def test_gnb_first_zero_stage3_below_stage1(small_channels):
    cfg = TrainConfig(epochs=4, stage3_epochs=0, seed=6, proxy_family="dense_a")
    dec, enc, rep = train_gnb_first(small_channels, "dense_a", cfg)
    stage1 = train_end_to_end("dense_a", small_channels,
                              TrainConfig(epochs=4, seed=6))[2]
    assert rep.mean_sgcs < stage1.mean_sgcs


def test_gnb_first_self_distillation(small_channels):
    # same family and seed: the UE encoder starts at the proxy's init and
    # is distilled back onto its indices, landing near the stage-1 accuracy
    cfg = TrainConfig(epochs=8, stage3_epochs=12, seed=5, proxy_family="dense_a")
    dec, enc, rep = train_gnb_first(small_channels, "dense_a", cfg)
    stage1_mean = float(np.mean(rep.config["stage1_holdout_sgcs"]))
    assert abs(rep.mean_sgcs - stage1_mean) < 0.01


def test_gnb_first_records_crossings(small_channels):
    crossings = []
    cfg = TrainConfig(epochs=1, stage3_epochs=1, seed=2)
    train_gnb_first(small_channels, "shared_b", cfg, crossings=crossings)
    kinds = [vendor_boundary_audit([c]).crossings[0].kind for c in crossings]
    assert kinds == ["exchange_dataset", "quant_codebook", "encoder_id"]
    audit = vendor_boundary_audit(crossings)
    assert audit.passed


# ---------------------------------------------------------------------------
# Boundary audit


def test_audit_sequential_run_passes(trained_pair):
    _, _, _, ds = trained_pair["dense_a"]
    report = vendor_boundary_audit([ds, default_codebook(), 0])
    assert report.passed
    assert [c.kind for c in report.crossings] == \
        ["exchange_dataset", "quant_codebook", "encoder_id"]


def test_audit_e2e_labeled_cross_vendor_fails(trained_pair):
    enc, proxy, _, _ = trained_pair["dense_a"]
    report = vendor_boundary_audit([proxy])
    assert not report.passed
    assert report.violations[0].kind == "model_weights"


def test_audit_common_run_lists_datasets(trained_pair):
    ds_a = trained_pair["dense_a"][3]
    ds_b = trained_pair["shared_b"][3]
    report = vendor_boundary_audit([ds_a, ds_b, default_codebook(), 0, 1])
    assert report.passed
    assert sum(c.kind == "exchange_dataset" for c in report.crossings) == 2


def test_audit_classifies_files(tmp_path, trained_pair):
    from csilab.channel import save_channels
    from csilab.codec import save_codebook
    enc, _, _, ds = trained_pair["dense_a"]
    model_path = tmp_path / "enc.csmw"
    save_model(model_path, enc)
    ds_path = tmp_path / "a.csix"
    save_exchange_dataset(ds_path, ds)
    cb_path = tmp_path / "cb.csqc"
    save_codebook(cb_path, default_codebook())
    ch_path = tmp_path / "c.csch"
    save_channels(ch_path, generate_dataset(scenario_preset("los", seed=1), 1))

    ok = vendor_boundary_audit([str(ds_path), str(cb_path)])
    assert ok.passed
    bad = vendor_boundary_audit([str(ds_path), str(model_path), str(ch_path)])
    assert not bad.passed
    kinds = {v.kind for v in bad.violations}
    assert kinds == {"model_weights", "channel_data"}


def test_feedback_message_is_allowed_crossing():
    from csilab.wire import FeedbackMessage
    msg = FeedbackMessage(0, 1, 0, bytes(80))
    assert vendor_boundary_audit([msg]).passed
