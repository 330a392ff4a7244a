"""Deterministic synthetic frequency-selective MIMO channel generator.

A clustered plane-wave model stands in for measured channels: each
realization is a sum of propagation paths, each with a complex gain, a
departure/arrival direction pair (half-wavelength uniform linear arrays)
and a delay that turns into a linear phase ramp across sub-bands. A
line-of-sight knob concentrates a configurable power fraction in a single
zero-delay path. Scenario presets are uncalibrated proxies for indoor
(LOS-heavy) and outdoor (NLOS-heavy) conditions.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .constants import N_PHYSICAL_SUBBANDS, N_RX, N_SUBBANDS, N_TX

CHANNEL_FILE_MAGIC = b"CSCH"
CHANNEL_FILE_VERSION = 1

# Mean departure/arrival azimuth is drawn uniformly in +/- this many degrees
# per realization (the terminal moves between snapshots).
MEAN_ANGLE_RANGE_DEG = 60.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one named channel scenario."""

    name: str
    n_paths: int
    los_power_fraction: float
    angle_spread_deg: float
    delay_spread_subbands: float
    snr_db: float
    seed: int

    def validate(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0.0 <= self.los_power_fraction <= 1.0:
            raise ValueError(f"los_power_fraction outside [0,1]: {self.los_power_fraction}")
        if not (math.isfinite(self.angle_spread_deg) and self.angle_spread_deg > 0):
            raise ValueError(f"angle_spread_deg must be finite and > 0: {self.angle_spread_deg}")
        if not (math.isfinite(self.delay_spread_subbands) and self.delay_spread_subbands > 0):
            raise ValueError(f"delay_spread_subbands must be finite and > 0: {self.delay_spread_subbands}")
        # +inf disables noise; NaN and -inf are rejected.
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be a real value or +inf: {self.snr_db}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in u64: {self.seed}")


@dataclass
class ChannelRealization:
    """One downlink channel snapshot, h[subband][rx][tx], 70x4x8 complex."""

    h: np.ndarray
    scenario_name: str
    realization_id: int

    def validate(self):
        if self.h.shape != (N_SUBBANDS, N_RX, N_TX):
            raise ValueError(f"channel shape {self.h.shape} != {(N_SUBBANDS, N_RX, N_TX)}")
        if not np.all(np.isfinite(self.h.view(np.float64))):
            raise ValueError("channel contains non-finite entries")


def scenario_preset(name: str, seed: int = 0) -> ScenarioConfig:
    """Built-in scenario presets (proxies, not calibrated to any testbed)."""
    presets = {
        "los": ScenarioConfig("los", n_paths=3, los_power_fraction=0.85,
                              angle_spread_deg=6.0, delay_spread_subbands=2.0,
                              snr_db=20.0, seed=seed),
        "nlos": ScenarioConfig("nlos", n_paths=12, los_power_fraction=0.0,
                               angle_spread_deg=40.0, delay_spread_subbands=8.0,
                               snr_db=10.0, seed=seed),
    }
    if name not in presets:
        raise ValueError(f"unknown scenario preset {name!r} (have {sorted(presets)})")
    return presets[name]


def _rng_for(seed: int, realization_id: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, realization_id & 0xFFFFFFFFFFFFFFFF])


def _steering(angles_rad: np.ndarray, n_ant: int) -> np.ndarray:
    """Half-wavelength ULA steering vectors, shape [n_paths, n_ant]."""
    idx = np.arange(n_ant)
    return np.exp(1j * np.pi * np.sin(angles_rad)[:, None] * idx[None, :])


def generate_channel(cfg: ScenarioConfig, realization_id: int) -> ChannelRealization:
    """Generate one channel realization, deterministic in (cfg.seed, realization_id).

    Sum-of-paths construction: path p contributes
    g_p * a_rx(phi_p)[r] * a_tx(theta_p)[t] * exp(-2j*pi*tau_p*k/70) on
    sub-band k. When los_power_fraction > 0, path 0 has zero delay, unit-
    magnitude gain carrying that power fraction, and the remaining paths
    share the rest. Per-entry mean power is normalized to 1 before complex
    Gaussian noise at cfg.snr_db is added, then sub-bands 66 and 67 are
    copied to slots 68 and 69.
    """
    cfg.validate()
    if realization_id < 0:
        raise ValueError("realization_id must be non-negative")
    rng = _rng_for(cfg.seed, realization_id)

    n = cfg.n_paths
    f_los = cfg.los_power_fraction
    spread = math.radians(cfg.angle_spread_deg)
    mean_rad = math.radians(MEAN_ANGLE_RANGE_DEG)

    tx_mean = rng.uniform(-mean_rad, mean_rad)
    rx_mean = rng.uniform(-mean_rad, mean_rad)
    tx_angles = tx_mean + rng.uniform(-spread, spread, size=n)
    rx_angles = rx_mean + rng.uniform(-spread, spread, size=n)
    delays = rng.exponential(cfg.delay_spread_subbands, size=n)

    gains = np.empty(n, dtype=np.complex128)
    if f_los > 0:
        tx_angles[0] = tx_mean
        rx_angles[0] = rx_mean
        delays[0] = 0.0
        gains[0] = math.sqrt(f_los) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        n_nlos = n - 1
        if n_nlos > 0:
            scale = math.sqrt((1.0 - f_los) / n_nlos / 2.0)
            gains[1:] = scale * (rng.standard_normal(n_nlos) + 1j * rng.standard_normal(n_nlos))
        expected_power = f_los + (1.0 - f_los if n_nlos > 0 else 0.0)
    else:
        scale = math.sqrt(1.0 / n / 2.0)
        gains[:] = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        expected_power = 1.0

    a_tx = _steering(tx_angles, N_TX)        # [n, 8]
    a_rx = _steering(rx_angles, N_RX)        # [n, 4]
    k = np.arange(N_PHYSICAL_SUBBANDS)
    ramp = np.exp(-2j * np.pi * delays[:, None] * k[None, :] / N_SUBBANDS)  # [n, 68]

    # h[k, r, t] = sum_p g_p * ramp[p, k] * a_rx[p, r] * a_tx[p, t]
    h = np.einsum("p,pk,pr,pt->krt", gains, ramp, a_rx, a_tx)
    h /= math.sqrt(expected_power)

    if cfg.snr_db != math.inf:
        noise_std = math.sqrt(10.0 ** (-cfg.snr_db / 10.0) / 2.0)
        h = h + noise_std * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))

    full = np.empty((N_SUBBANDS, N_RX, N_TX), dtype=np.complex128)
    full[:N_PHYSICAL_SUBBANDS] = h
    full[68] = h[66]
    full[69] = h[67]

    out = ChannelRealization(full, cfg.name, realization_id)
    out.validate()
    return out


def generate_dataset(cfg: ScenarioConfig, count: int) -> list[ChannelRealization]:
    """Realizations with ids 0..count-1."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [generate_channel(cfg, i) for i in range(count)]


def iter_dataset(cfg: ScenarioConfig, count: int):
    """Streaming variant of generate_dataset (constant memory per item)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    for i in range(count):
        yield generate_channel(cfg, i)


def generate_mixed_dataset(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig,
                           count: int) -> list[ChannelRealization]:
    """Interleave two scenarios: even realization ids from cfg_a, odd from cfg_b.

    This is a dataset-level mixture (two channel types in one training set),
    not an intermediate parameter set.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = []
    for i in range(count):
        cfg = cfg_a if i % 2 == 0 else cfg_b
        out.append(generate_channel(cfg, i))
    return out


def derive_seed(base: int, *tags) -> int:
    """Stable 64-bit seed derived from a base seed and string/int tags."""
    m = hashlib.sha256()
    m.update(str(int(base)).encode())
    for t in tags:
        m.update(b"|")
        m.update(str(t).encode())
    return int.from_bytes(m.digest()[:8], "little")


# ---------------------------------------------------------------------------
# Channel dataset file format ("CSCH", little-endian):
#   magic (4 bytes), version u16, count u32, n_subbands u16, n_rx u16,
#   n_tx u16; then per record: interleaved f32 (re, im) in [subband][rx][tx]
#   order, followed by the u64 realization_id.

_HEADER = struct.Struct("<4sHIHHH")


def save_channels(path, realizations: list[ChannelRealization]):
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CHANNEL_FILE_MAGIC, CHANNEL_FILE_VERSION,
                             len(realizations), N_SUBBANDS, N_RX, N_TX))
        for r in realizations:
            r.validate()
            flat = np.empty((N_SUBBANDS, N_RX, N_TX, 2), dtype="<f4")
            flat[..., 0] = r.h.real
            flat[..., 1] = r.h.imag
            f.write(flat.tobytes())
            f.write(struct.pack("<Q", r.realization_id))


def load_channels(path, scenario_name: str = "") -> list[ChannelRealization]:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError("channel file truncated in header")
        magic, version, count, n_sb, n_rx, n_tx = _HEADER.unpack(head)
        if magic != CHANNEL_FILE_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {CHANNEL_FILE_MAGIC!r}")
        if version != CHANNEL_FILE_VERSION:
            raise ValueError(f"unsupported channel file version {version}")
        if (n_sb, n_rx, n_tx) != (N_SUBBANDS, N_RX, N_TX):
            raise ValueError(f"unexpected dimensions {(n_sb, n_rx, n_tx)}")
        rec_floats = n_sb * n_rx * n_tx * 2
        out = []
        for _ in range(count):
            buf = f.read(rec_floats * 4)
            idbuf = f.read(8)
            if len(buf) < rec_floats * 4 or len(idbuf) < 8:
                raise ValueError("channel file truncated in record")
            flat = np.frombuffer(buf, dtype="<f4").reshape(n_sb, n_rx, n_tx, 2)
            h = flat[..., 0].astype(np.float64) + 1j * flat[..., 1].astype(np.float64)
            (rid,) = struct.unpack("<Q", idbuf)
            out.append(ChannelRealization(h, scenario_name, rid))
    return out
