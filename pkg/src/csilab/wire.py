"""Bit-exact feedback message codec and a two-endpoint UE/gNB link emulator.

Message layout (MAC-CE style), MSB first within each byte:
  header, 2 bytes: model_id (4 bits), ri-1 (2 bits), cqi (4 bits),
  reserved zeros (6 bits);
  payload: for layer 0..ri-1, for block 0..4, 64 two-bit indices packed
  MSB-first (16 bytes per block). Total bytes = 2 + ri*80.

Frames on the byte stream are length-prefixed: length u16 (little-endian,
body size), kind u8, body. The transport only has to deliver bytes
reliably and in order; an in-process pipe pair and a stream socket wrapper
are provided.
"""

from __future__ import annotations

import json
import socket as socket_mod
import struct
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocks import blocks_to_vectors, report_to_blocks
from .channel import ChannelRealization
from .codec import (EncoderModel, QuantCodebook, decoder_forward,
                    dequantize_array, encoder_forward, quantize_array)
from .constants import BLOCKS_PER_LAYER, LATENT_DIM
from .precoding import (closed_loop_capacity, extract_precoders,
                        reorthogonalize, sgcs_rows)

CSI_TRIGGER = 1
CSI_REPORT = 2
PRECODER_ACK = 3
_FRAME_KINDS = (CSI_TRIGGER, CSI_REPORT, PRECODER_ACK)

ACK_OK = 0
ACK_UNKNOWN_MODEL = 1

_BLOCK_BYTES = LATENT_DIM // 4  # 16 bytes per 64 two-bit indices


class WireError(ValueError):
    """Malformed message or frame."""


class SessionAbort(RuntimeError):
    """Unrecoverable framing failure during an emulator session."""


# ---------------------------------------------------------------------------
# Feedback message


@dataclass
class FeedbackMessage:
    model_id: int
    ri: int
    cqi: int
    payload: bytes  # ri * 80 octets of packed two-bit indices

    def validate(self):
        if not 0 <= self.model_id <= 15:
            raise WireError(f"model_id {self.model_id} out of 0..15")
        if not 1 <= self.ri <= 4:
            raise WireError(f"ri {self.ri} out of 1..4")
        if not 0 <= self.cqi <= 15:
            raise WireError(f"cqi {self.cqi} out of 0..15")
        expect = self.ri * BLOCKS_PER_LAYER * _BLOCK_BYTES
        if len(self.payload) != expect:
            raise WireError(f"payload {len(self.payload)} bytes, expected {expect}")


def pack(msg: FeedbackMessage) -> bytes:
    """Feedback message to its canonical byte representation."""
    msg.validate()
    b0 = (msg.model_id << 4) | ((msg.ri - 1) << 2) | (msg.cqi >> 2)
    b1 = (msg.cqi & 0b11) << 6
    return bytes((b0, b1)) + msg.payload


def unpack(buf: bytes) -> FeedbackMessage:
    """Exact inverse of pack; rejects truncation and nonzero reserved bits."""
    if len(buf) < 2:
        raise WireError(f"buffer of {len(buf)} bytes lacks the 2-byte header")
    b0, b1 = buf[0], buf[1]
    model_id = b0 >> 4
    ri = ((b0 >> 2) & 0b11) + 1
    cqi = ((b0 & 0b11) << 2) | (b1 >> 6)
    if b1 & 0b00111111:
        raise WireError("nonzero reserved header bits")
    expect = 2 + ri * BLOCKS_PER_LAYER * _BLOCK_BYTES
    if len(buf) != expect:
        raise WireError(f"buffer is {len(buf)} bytes, ri={ri} requires {expect}")
    msg = FeedbackMessage(model_id, ri, cqi, bytes(buf[2:]))
    msg.validate()
    return msg


def pack_indices(indices: np.ndarray) -> bytes:
    """Two-bit indices [..., 64] -> MSB-first packed bytes (16 per group)."""
    idx = np.asarray(indices, dtype=np.uint8).reshape(-1, 4)
    if idx.size % LATENT_DIM:
        raise WireError("index count not a multiple of 64")
    if np.any(idx > 3):
        raise WireError("index out of 0..3")
    octets = (idx[:, 0] << 6) | (idx[:, 1] << 4) | (idx[:, 2] << 2) | idx[:, 3]
    return octets.tobytes()


def unpack_indices(buf: bytes, n_groups: int) -> np.ndarray:
    """Packed payload -> indices [n_groups, 64]."""
    if len(buf) != n_groups * _BLOCK_BYTES:
        raise WireError("payload size mismatch")
    octets = np.frombuffer(buf, dtype=np.uint8)
    out = np.empty((octets.size, 4), dtype=np.uint8)
    out[:, 0] = octets >> 6
    out[:, 1] = (octets >> 4) & 3
    out[:, 2] = (octets >> 2) & 3
    out[:, 3] = octets & 3
    return out.reshape(n_groups, LATENT_DIM)


def assemble_report(indices: np.ndarray, model_id: int, ri: int, cqi: int) -> FeedbackMessage:
    """Index tensor [ri, 5, 64] -> feedback message (layer-major payload)."""
    indices = np.asarray(indices)
    if indices.shape != (ri, BLOCKS_PER_LAYER, LATENT_DIM):
        raise WireError(f"index tensor {indices.shape} does not match ri={ri}")
    msg = FeedbackMessage(model_id, ri, cqi, pack_indices(indices))
    msg.validate()
    return msg


def disassemble_report(msg: FeedbackMessage) -> np.ndarray:
    """Feedback message -> index tensor [ri, 5, 64]."""
    msg.validate()
    flat = unpack_indices(msg.payload, msg.ri * BLOCKS_PER_LAYER)
    return flat.reshape(msg.ri, BLOCKS_PER_LAYER, LATENT_DIM)


# ---------------------------------------------------------------------------
# Frames and transports


@dataclass
class WireFrame:
    kind: int
    body: bytes


_FRAME_HEADER = struct.Struct("<HB")


def encode_frame(frame: WireFrame) -> bytes:
    if frame.kind not in _FRAME_KINDS:
        raise WireError(f"unknown frame kind {frame.kind}")
    if len(frame.body) > 0xFFFF:
        raise WireError("frame body too large")
    return _FRAME_HEADER.pack(len(frame.body), frame.kind) + frame.body


def decode_frame(buf: bytes) -> WireFrame:
    """Parse one complete frame from a byte buffer (must match exactly)."""
    if len(buf) < _FRAME_HEADER.size:
        raise WireError("frame shorter than its header")
    length, kind = _FRAME_HEADER.unpack_from(buf)
    if kind not in _FRAME_KINDS:
        raise WireError(f"unknown frame kind {kind}")
    if len(buf) != _FRAME_HEADER.size + length:
        raise WireError(f"frame length field {length} does not match body")
    return WireFrame(kind, bytes(buf[_FRAME_HEADER.size:]))


class InprocTransport:
    """One endpoint of an in-process reliable duplex byte stream."""

    def __init__(self, rx_buf, rx_cond, tx_buf, tx_cond, state):
        self._rx, self._rx_cond = rx_buf, rx_cond
        self._tx, self._tx_cond = tx_buf, tx_cond
        self._state = state

    def send(self, data: bytes):
        with self._tx_cond:
            if self._state["closed"]:
                raise SessionAbort("transport closed")
            self._tx.extend(data)
            self._tx_cond.notify_all()

    def recv_exact(self, n: int) -> bytes:
        with self._rx_cond:
            while len(self._rx) < n:
                if self._state["closed"]:
                    raise EOFError("transport closed")
                self._rx_cond.wait()
            out = bytes(self._rx[:n])
            del self._rx[:n]
            return out

    def close(self):
        with self._rx_cond, self._tx_cond:
            self._state["closed"] = True
            self._rx_cond.notify_all()
            self._tx_cond.notify_all()


def inproc_pair():
    """Two connected in-process transports (a, b)."""
    buf_ab, buf_ba = bytearray(), bytearray()
    cond_ab, cond_ba = threading.Condition(), threading.Condition()
    state = {"closed": False}
    a = InprocTransport(buf_ba, cond_ba, buf_ab, cond_ab, state)
    b = InprocTransport(buf_ab, cond_ab, buf_ba, cond_ba, state)
    return a, b


class SocketTransport:
    """Duplex byte stream over a connected socket."""

    def __init__(self, sock):
        self._sock = sock

    def send(self, data: bytes):
        self._sock.sendall(data)

    def recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            chunk = self._sock.recv(n - got)
            if not chunk:
                raise EOFError("peer closed")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self):
        try:
            self._sock.shutdown(socket_mod.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def write_frame(transport, frame: WireFrame):
    transport.send(encode_frame(frame))


def read_frame(transport) -> WireFrame:
    head = transport.recv_exact(_FRAME_HEADER.size)
    length, kind = _FRAME_HEADER.unpack(head)
    if kind not in _FRAME_KINDS:
        raise SessionAbort(f"unknown frame kind {kind} on the wire")
    return WireFrame(kind, transport.recv_exact(length))


# ---------------------------------------------------------------------------
# Endpoints


@dataclass
class UeConfig:
    encoder: EncoderModel
    codebook: QuantCodebook
    channels: dict  # realization_id -> ChannelRealization
    model_id: int
    ri: int = 4
    snr_db: float = 10.0


@dataclass
class GnbConfig:
    decoders: dict  # model_id -> DecoderModel
    codebook: QuantCodebook
    channels: dict  # realization_id -> ChannelRealization (ground truth)
    snr_db: float = 10.0


@dataclass
class TickRecord:
    tick: int
    realization_id: int
    status: str                 # "ok" or "nack"
    model_id: int
    ri: int
    cqi: int
    trigger_bytes: int
    report_bytes: int
    ack_bytes: int
    sgcs: list[float] = field(default_factory=list)
    capacity: float = float("nan")
    decode_ms: float = float("nan")


@dataclass
class SessionLog:
    records: list[TickRecord] = field(default_factory=list)

    def write_jsonl(self, path):
        with open(path, "w") as f:
            for r in self.records:
                f.write(json.dumps(asdict(r)) + "\n")


def compute_cqi(dominant_eigenvalues: np.ndarray, snr_db: float) -> int:
    """Coarse quality index from the mean dominant eigenvalue at the UE SNR."""
    rho = 10.0 ** (snr_db / 10.0)
    val = np.log2(1.0 + float(np.mean(dominant_eigenvalues)) * rho)
    return int(np.clip(round(val), 0, 15))


def ue_encode_tick(cfg: UeConfig, ch: ChannelRealization):
    """UE side of one tick: precoders -> latents -> indices (+ CQI)."""
    report = extract_precoders(ch, cfg.ri)
    blocks, _ = report_to_blocks(report)
    z, _ = encoder_forward(cfg.encoder, blocks)  # one batch of ri*5 blocks
    idx = quantize_array(z, cfg.codebook).reshape(cfg.ri, BLOCKS_PER_LAYER, LATENT_DIM)
    cqi = compute_cqi(report.eigenvalues[0], cfg.snr_db)
    return idx, cqi


def gnb_decode_tick(cfg: GnbConfig, msg: FeedbackMessage, ch: ChannelRealization):
    """gNB side of one tick: indices -> blocks -> metrics vs ground truth.

    Per-layer SGCS is measured on the decoder output; capacity uses the
    re-orthogonalized precoders. Returns (sgcs list, capacity, decode_ms).
    """
    decoder = cfg.decoders[msg.model_id]
    idx = disassemble_report(msg)
    zq = dequantize_array(idx.reshape(-1, LATENT_DIM), cfg.codebook)
    t0 = time.perf_counter()
    ids = np.full(zq.shape[0], msg.model_id) if decoder.id_dims else None
    y, _ = decoder_forward(decoder, zq, ids)
    decode_ms = (time.perf_counter() - t0) * 1e3
    v_hat = blocks_to_vectors(y, msg.ri)

    truth = extract_precoders(ch, msg.ri)
    sgcs = [float(np.mean(sgcs_rows(truth.v[l], v_hat[l]))) for l in range(msg.ri)]
    w = np.swapaxes(reorthogonalize(np.swapaxes(v_hat, 0, 1)), 0, 1)
    capacity = closed_loop_capacity(ch, w, cfg.snr_db)
    return sgcs, capacity, decode_ms


def _ue_loop(cfg: UeConfig, transport):
    while True:
        try:
            frame = read_frame(transport)
        except EOFError:
            return
        if frame.kind == PRECODER_ACK:
            continue
        if frame.kind != CSI_TRIGGER:
            raise SessionAbort(f"UE expected trigger, got kind {frame.kind}")
        if len(frame.body) != 8:
            raise SessionAbort("trigger body must be a u64 realization id")
        (rid,) = struct.unpack("<Q", frame.body)
        ch = cfg.channels[rid]
        idx, cqi = ue_encode_tick(cfg, ch)
        msg = assemble_report(idx, cfg.model_id, cfg.ri, cqi)
        write_frame(transport, WireFrame(CSI_REPORT, pack(msg)))


def _ack_body(status: int, rid: int, capacity: float, sgcs: list[float]) -> bytes:
    body = struct.pack("<BQdB", status, rid, capacity, len(sgcs))
    for s in sgcs:
        body += struct.pack("<d", s)
    return body


def run_gnb_session(cfg: GnbConfig, transport, realization_ids) -> SessionLog:
    """Drive the session: one trigger/report/ack exchange per logical tick."""
    log = SessionLog()
    for tick, rid in enumerate(realization_ids):
        trigger = WireFrame(CSI_TRIGGER, struct.pack("<Q", int(rid)))
        write_frame(transport, trigger)
        try:
            frame = read_frame(transport)
        except EOFError as e:
            raise SessionAbort(f"UE vanished at tick {tick}") from e
        if frame.kind != CSI_REPORT:
            raise SessionAbort(f"expected CSI_REPORT, got kind {frame.kind}")
        try:
            msg = unpack(frame.body)
        except WireError as e:
            raise SessionAbort(f"malformed feedback at tick {tick}: {e}") from e

        ch = cfg.channels[int(rid)]
        rec = TickRecord(tick=tick, realization_id=int(rid), status="ok",
                         model_id=msg.model_id, ri=msg.ri, cqi=msg.cqi,
                         trigger_bytes=len(encode_frame(trigger)),
                         report_bytes=len(encode_frame(frame)), ack_bytes=0)
        if msg.model_id not in cfg.decoders:
            rec.status = "nack"
            ack = WireFrame(PRECODER_ACK, _ack_body(ACK_UNKNOWN_MODEL, int(rid), float("nan"), []))
        else:
            sgcs, capacity, decode_ms = gnb_decode_tick(cfg, msg, ch)
            rec.sgcs, rec.capacity, rec.decode_ms = sgcs, capacity, decode_ms
            ack = WireFrame(PRECODER_ACK, _ack_body(ACK_OK, int(rid), capacity, sgcs))
        rec.ack_bytes = len(encode_frame(ack))
        write_frame(transport, ack)
        log.records.append(rec)
    return log


def emulate_link(ue_cfg: UeConfig, gnb_cfg: GnbConfig, realization_ids,
                 transport: str = "inproc", addr: str | None = None) -> SessionLog:
    """Run a full session over the chosen transport; returns the gNB log.

    transport "inproc" uses an in-process byte pipe; "socket" runs the same
    endpoints over a local stream socket (addr "host:port", default an
    ephemeral loopback port).
    """
    if transport == "inproc":
        gnb_tp, ue_tp = inproc_pair()
        closer = gnb_tp.close
    elif transport == "socket":
        host, port = ("127.0.0.1", 0)
        if addr:
            host, _, port_s = addr.rpartition(":")
            host, port = host or "127.0.0.1", int(port_s)
        listener = socket_mod.socket()
        listener.bind((host, port))
        listener.listen(1)
        client = socket_mod.socket()
        client.connect(listener.getsockname())
        server_side, _ = listener.accept()
        listener.close()
        gnb_tp, ue_tp = SocketTransport(server_side), SocketTransport(client)
        closer = gnb_tp.close
    else:
        raise ValueError(f"unknown transport {transport!r}")

    ue_error = []

    def ue_main():
        try:
            _ue_loop(ue_cfg, ue_tp)
        except (EOFError, SessionAbort):
            pass
        except Exception as e:  # surfaced after join; close so the gNB unblocks
            ue_error.append(e)
            ue_tp.close()

    ue_thread = threading.Thread(target=ue_main, name="ue-endpoint", daemon=True)
    ue_thread.start()
    try:
        log = run_gnb_session(gnb_cfg, gnb_tp, realization_ids)
    except SessionAbort:
        if ue_error:
            raise ue_error[0]
        raise
    finally:
        closer()
        if transport == "socket":
            ue_tp.close()
        ue_thread.join(timeout=10)
    if ue_error:
        raise ue_error[0]
    return log


def offline_session_metrics(ue_cfg: UeConfig, gnb_cfg: GnbConfig,
                            realization_ids) -> SessionLog:
    """The emulator's math without the wire: same code paths per tick.

    Logged SGCS, capacity and CQI match emulate_link bit-exactly on the
    same inputs because the feedback codec is lossless on the indices.
    """
    log = SessionLog()
    for tick, rid in enumerate(realization_ids):
        ch = ue_cfg.channels[int(rid)]
        idx, cqi = ue_encode_tick(ue_cfg, ch)
        msg = assemble_report(idx, ue_cfg.model_id, ue_cfg.ri, cqi)
        rec = TickRecord(tick=tick, realization_id=int(rid), status="ok",
                         model_id=msg.model_id, ri=msg.ri, cqi=msg.cqi,
                         trigger_bytes=11, report_bytes=3 + len(pack(msg)),
                         ack_bytes=0)
        if msg.model_id not in gnb_cfg.decoders:
            rec.status = "nack"
        else:
            sgcs, capacity, decode_ms = gnb_decode_tick(gnb_cfg, msg, ch)
            rec.sgcs, rec.capacity, rec.decode_ms = sgcs, capacity, decode_ms
        rec.ack_bytes = 3 + len(_ack_body(ACK_OK if rec.status == "ok" else ACK_UNKNOWN_MODEL,
                                          int(rid), rec.capacity, rec.sgcs))
        log.records.append(rec)
    return log
