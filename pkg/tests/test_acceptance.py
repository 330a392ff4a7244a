"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Criteria 5, 6, 7, 9 and 10 share one full-scale experiment run (mixed
scenario, 1000 train / 100 eval realizations = 20k blocks, 40 epochs,
seed 0) provided by a session fixture.
"""

import time

import numpy as np
import pytest

from conftest import margin_batch
from csilab import constants
from csilab.channel import ScenarioConfig, derive_seed, generate_channel
from csilab.codec import (block_loss_and_grad, decoder_backward,
                          decoder_forward, default_codebook, encoder_backward,
                          encoder_forward, init_decoder, init_encoder,
                          model_params)
from csilab.experiment import (ExperimentConfig, dataset_for_scenario,
                               run_experiment)
from csilab.precoding import (capacity_per_subband, extract_precoders,
                              hermitian_eig_batch, reorthogonalize, sgcs)
from csilab.training import (ALLOWED_CROSSINGS, METHOD_COMMON, METHOD_E2E,
                             METHOD_GNB_FIRST, METHOD_SEQ_DEDICATED,
                             TrainConfig, train_end_to_end,
                             vendor_boundary_audit)
from csilab.wire import (GnbConfig, UeConfig, WireError, assemble_report,
                         decode_frame, disassemble_report, emulate_link,
                         offline_session_metrics, pack, unpack)

GAP_TOL = 0.02
GNB_TOL = 0.05


def _verdict(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name} failed ({detail})"


@pytest.fixture(scope="session")
def acceptance_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_run")
    cfg = ExperimentConfig.from_dict({
        "train_scenarios": ["mixed"],
        "eval_scenarios": ["los", "nlos", "mixed"],
        "families": ["dense_a", "shared_b"],
        "protocols": [METHOD_E2E, METHOD_SEQ_DEDICATED, METHOD_COMMON,
                      METHOD_GNB_FIRST],
        "n_train_realizations": 1000,
        "n_eval_realizations": 100,
        "epochs": 40,
        "seed": 0,
        "out_dir": str(out),
    })
    t0 = time.time()
    table = run_experiment(cfg)
    return cfg, table, time.time() - t0


def test_criterion_1_bit_budget():
    constants.check_bit_budget()
    t0 = time.time()
    ok = (constants.REPORT_INPUT_BITS == 8 * 70 * 2 * 16 * 4 == 71680
          and constants.REPORT_PAYLOAD_BITS == 4 * 5 * 128 == 2560
          and constants.REPORT_INPUT_BITS == 28 * constants.REPORT_PAYLOAD_BITS
          and constants.COMPRESSION_RATIO == 28
          and constants.ENCODER_CALLS_PER_REPORT == 20
          and time.time() - t0 < 1.0)
    _verdict("criterion 1 bit-budget identity", ok,
             f"{constants.REPORT_INPUT_BITS} = 28 x {constants.REPORT_PAYLOAD_BITS}, "
             f"20 encoder calls")


def test_criterion_2_wire_codec():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    checked = 0
    for ri in (1, 2, 3, 4):
        for _ in range(10_000):
            idx = rng.integers(0, 4, (ri, 5, 64))
            msg = assemble_report(idx, int(rng.integers(0, 16)), ri,
                                  int(rng.integers(0, 16)))
            back = unpack(pack(msg))
            assert back == msg
            assert np.array_equal(disassemble_report(back), idx)
            checked += 1
    crashes = 0
    for _ in range(100_000):
        buf = rng.integers(0, 256, int(rng.integers(0, 420)), dtype=np.uint8).tobytes()
        try:
            unpack(buf)
        except WireError:
            pass
        except Exception:
            crashes += 1
        try:
            decode_frame(buf)
        except WireError:
            pass
        except Exception:
            crashes += 1
    took = time.time() - t0
    _verdict("criterion 2 wire codec", checked == 40_000 and crashes == 0 and took < 30,
             f"{checked} round trips, 100000 fuzz buffers, 0 crashes, {took:.1f}s")


def test_criterion_3_numerical_core():
    t0 = time.time()
    rng = np.random.default_rng(33)

    # eigensolver residuals on 1000 seeded matrices
    mats = []
    for _ in range(1000):
        m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        mats.append(m @ m.conj().T * rng.uniform(0.01, 100.0))
    mats = np.stack(mats)
    vals, vecs = hermitian_eig_batch(mats)
    resid = np.linalg.norm(mats @ vecs - vecs * vals[:, None, :], axis=(1, 2))
    norms = np.linalg.norm(mats, axis=(1, 2))
    eig_ok = bool(np.all(resid <= 1e-8 * norms))

    # SGCS phase/scale invariance at 1e-12
    inv_ok = True
    for _ in range(1000):
        v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        w = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        a = rng.uniform(0.1, 4.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        b = rng.uniform(0.1, 4.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        s = sgcs(v, w)
        inv_ok &= (0.0 <= s <= 1.0 + 1e-12)
        inv_ok &= abs(sgcs(a * v, b * w) - s) < 1e-12

    # re-orthogonalization Gram and idempotence
    orth_ok = True
    for _ in range(500):
        v = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
        out = reorthogonalize(v)
        gram = out.conj() @ out.T
        orth_ok &= np.max(np.abs(gram - np.eye(4))) < 1e-6
        orth_ok &= np.max(np.abs(reorthogonalize(out) - out)) < 1e-9

    # eigen precoders beat 100 random orthonormal precoders on 100 channels
    opt_ok = True
    cfg = ScenarioConfig("acc", 8, 0.3, 30.0, 5.0, 15.0, 404)
    for i in range(100):
        ch = generate_channel(cfg, i)
        rep = extract_precoders(ch, 4)
        cap_eig = capacity_per_subband(ch, rep.v, 10.0)
        for _ in range(100):
            m = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
            q, _ = np.linalg.qr(m)
            w = np.repeat(q.T[:, None, :], 70, axis=1)
            cap_rand = capacity_per_subband(ch, w, 10.0)
            if not np.all(cap_eig >= cap_rand - 1e-9):
                opt_ok = False
    took = time.time() - t0
    _verdict("criterion 3 numerical core",
             eig_ok and inv_ok and orth_ok and opt_ok and took < 120,
             f"max resid/norm {np.max(resid / norms):.2e}, optimality 100x100, {took:.1f}s")


def test_criterion_4_gradient_correctness():
    t0 = time.time()
    worst = {}
    configs = [("dense_a", (6, 5)), ("shared_b", (3, 5))]
    for family, hidden in configs:
        enc = init_encoder(family, 0, seed=3, hidden=hidden)
        dec = init_decoder(0, seed=4, hidden=(7, 6))
        x, tgt = margin_batch(enc, dec, seed=11)

        def loss_fn():
            z, _ = encoder_forward(enc, x)
            y, _ = decoder_forward(dec, z)
            return block_loss_and_grad(tgt, y)[0]

        z, ecache = encoder_forward(enc, x)
        y, dcache = decoder_forward(dec, z)
        _, dy = block_loss_and_grad(tgt, y)
        dgrads, dz = decoder_backward(dec, dcache, dy)
        egrads = encoder_backward(enc, ecache, dz)
        for model, grads, prefix in ((enc, egrads, family), (dec, dgrads, f"decoder[{family}]")):
            for name, p in model_params(model).items():
                flat = p.reshape(-1)
                fd = np.empty(flat.size)
                for j in range(flat.size):
                    old = flat[j]
                    flat[j] = old + 1e-4
                    lp = loss_fn()
                    flat[j] = old - 1e-4
                    lm = loss_fn()
                    flat[j] = old
                    fd[j] = (lp - lm) / 2e-4
                g = grads[name].reshape(-1)
                rel = np.linalg.norm(fd - g) / max(np.linalg.norm(fd),
                                                   np.linalg.norm(g), 1e-12)
                worst[f"{prefix}.{name}"] = rel
    took = time.time() - t0
    ok = all(v < 1e-4 for v in worst.values()) and took < 120
    _verdict("criterion 4 gradient correctness", ok,
             f"{len(worst)} tensors, worst rel err {max(worst.values()):.2e}, {took:.1f}s")


def test_criterion_5_interoperability_gap(acceptance_run):
    cfg, table, took = acceptance_run
    details = []
    ok = took < 1800
    blocks = cfg.n_train_realizations * 20
    ok &= blocks >= 20_000
    for fam in cfg.families:
        e2e = table.method_average(fam, METHOD_E2E)
        seq = table.method_average(fam, METHOD_SEQ_DEDICATED)
        common = table.method_average(fam, METHOD_COMMON)
        g1, g2 = abs(seq - e2e), abs(common - seq)
        ok &= g1 <= GAP_TOL and g2 <= GAP_TOL
        details.append(f"{fam}: |seq-e2e|={g1:.4f} |common-seq|={g2:.4f}")
    _verdict("criterion 5 interoperability gap", ok,
             f"{blocks} blocks, {'; '.join(details)}, tol {GAP_TOL}, run {took:.0f}s")


def test_criterion_6_rank_monotonicity(acceptance_run):
    cfg, table, _ = acceptance_run
    ok = True
    worst = 0.0
    for fam in cfg.families:
        for method in cfg.protocols:
            vals = [table.sgcs_cell(fam, r, method) for r in range(1, 5)]
            diffs = np.diff(vals)
            worst = min(worst, float(-np.max(diffs)))
            ok &= bool(np.all(diffs <= 1e-12))
    _verdict("criterion 6 rank monotonicity", ok,
             f"non-increasing rank SGCS for all "
             f"{len(cfg.families) * len(cfg.protocols)} trained systems")


def test_criterion_7_baseline_superiority(acceptance_run):
    cfg, table, _ = acceptance_run
    ok = True
    details = []
    for key in sorted(table.gains):
        cap_ml = table.capacity_ml[key]
        cap_base = table.capacity_baseline[key]
        s_ml, s_base = table.sgcs_ml[key], table.sgcs_baseline[key]
        ok &= cap_ml > cap_base and s_ml > s_base
        details.append(f"{key}: gain {100 * table.gains[key]:.1f}%")
    _verdict("criterion 7 baseline superiority", ok,
             "; ".join(details) + " (sign test only)")


def test_criterion_8_emulator_offline_equivalence():
    t0 = time.time()
    channels_list = dataset_for_scenario("mixed", derive_seed(88, "emu"), 100)
    channels = {c.realization_id: c for c in channels_list}
    train = channels_list[:60]
    enc, dec, _ = train_end_to_end("dense_a", train, TrainConfig(epochs=3, seed=8))
    cb = default_codebook()
    ue = UeConfig(enc, cb, channels, model_id=0, ri=4, snr_db=10.0)
    gnb = GnbConfig({0: dec}, cb, channels, snr_db=10.0)
    ids = list(range(100))
    log = emulate_link(ue, gnb, ids, transport="inproc")
    offline = offline_session_metrics(ue, gnb, ids)
    ok = len(log.records) == 100
    for a, b in zip(log.records, offline.records):
        ok &= (a.sgcs == b.sgcs and a.capacity == b.capacity and a.cqi == b.cqi
               and a.status == "ok")
    took = time.time() - t0
    _verdict("criterion 8 emulator/offline equivalence", ok and took < 120,
             f"100 ticks bit-exact (SGCS, capacity, CQI), {took:.1f}s")


def test_emulated_session_capacity_beats_offline_baseline(acceptance_run):
    # 100-tick emulator session with the trained sequential system against
    # the wideband-codebook baseline computed offline on the same channels
    from pathlib import Path
    from csilab.codec import load_model
    from csilab.precoding import closed_loop_capacity, make_dft_codebook, type1_baseline

    cfg, _, _ = acceptance_run
    models = Path(cfg.out_dir) / "models" / "mixed"
    enc = load_model(models / "dense_a_seq_dedicated_encoder.csmw")
    dec = load_model(models / "dense_a_seq_dedicated_decoder.csmw")
    channels_list = dataset_for_scenario("mixed", derive_seed(cfg.seed, "eval", "mixed"), 100)
    channels = {c.realization_id: c for c in channels_list}
    cb = default_codebook()
    ue = UeConfig(enc, cb, channels, model_id=0, ri=4, snr_db=cfg.snr_db)
    gnb = GnbConfig({0: dec}, cb, channels, snr_db=cfg.snr_db)
    log = emulate_link(ue, gnb, sorted(channels))
    ml_capacity = float(np.mean([r.capacity for r in log.records]))

    dft = make_dft_codebook(4)
    base_caps = []
    for ch in channels_list:
        rep = extract_precoders(ch, 4)
        base_caps.append(closed_loop_capacity(ch, type1_baseline(rep, dft).v, cfg.snr_db))
    assert ml_capacity >= float(np.mean(base_caps))


def test_criterion_9_gnb_first_parity(acceptance_run):
    cfg, table, _ = acceptance_run
    ok = True
    details = []
    for fam in cfg.families:
        gnb = table.method_average(fam, METHOD_GNB_FIRST)
        seq = table.method_average(fam, METHOD_SEQ_DEDICATED)
        gap = abs(gnb - seq)
        ok &= gap <= GNB_TOL
        details.append(f"{fam}: |gnb-seq|={gap:.4f}")
    _verdict("criterion 9 decoder-first parity", ok,
             f"{'; '.join(details)}, tol {GNB_TOL}")


def test_criterion_10_vendor_boundary_audit(acceptance_run):
    cfg, table, _ = acceptance_run
    audits = {k: v for k, v in table.meta.items() if k.startswith("audit/")}
    ok = bool(audits) and all(v["passed"] for v in audits.values())
    kinds = set()
    for v in audits.values():
        kinds |= {c[0] for c in v["crossings"]}
    ok &= kinds <= set(ALLOWED_CROSSINGS) and "exchange_dataset" in kinds

    # the on-disk exchange artifacts audit clean as files too
    from pathlib import Path
    exch = sorted((Path(cfg.out_dir) / "exchange" / "mixed").glob("*.csix"))
    cb = Path(cfg.out_dir) / "models" / "mixed" / "codebook.csqc"
    file_audit = vendor_boundary_audit([str(p) for p in exch] + [str(cb)])
    ok &= file_audit.passed and len(exch) == len(cfg.families)
    # a model file crossing the boundary must fail
    model_file = next((Path(cfg.out_dir) / "models" / "mixed").glob("*encoder.csmw"))
    bad_audit = vendor_boundary_audit([str(model_file)])
    ok &= not bad_audit.passed
    _verdict("criterion 10 vendor-boundary audit", ok,
             f"crossing kinds {sorted(kinds)}; weight-file crossing rejected")
