"""Classical CSI math: eigenvector precoders, SGCS, re-orthogonalization,
closed-loop capacity and the wideband DFT-codebook baseline.

The Hermitian eigensolver is a cyclic complex Jacobi iteration with a fixed
sweep order, vectorized across a batch of matrices. All operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .constants import N_RX, N_SUBBANDS, N_TX

_JACOBI_MAX_SWEEPS = 30
_JACOBI_TOL = 1e-14
# Fixed rotation schedule: upper-triangle pairs in row-major order.
_SWEEP_PAIRS = [(p, q) for p in range(N_TX) for q in range(p + 1, N_TX)]


@dataclass
class PrecoderReport:
    """Per-layer, per-sub-band unit-norm eigenvector precoders.

    v[l][k] is the l-th strongest eigenvector of the sub-band covariance,
    with the first nonzero entry rotated to be real non-negative.
    """

    v: np.ndarray            # [n_layers, 70, 8] complex
    eigenvalues: np.ndarray  # [n_layers, 70] real, descending in l
    realization_id: int

    @property
    def n_layers(self) -> int:
        return self.v.shape[0]


@dataclass
class DftCodebook:
    """Oversampled 1D DFT codebook over the 8-antenna transmit array."""

    entries: np.ndarray  # [n_entries, 8] complex, unit norm
    oversampling: int


def make_dft_codebook(oversampling: int = 4) -> DftCodebook:
    if oversampling < 1:
        raise ValueError("oversampling must be >= 1")
    n_entries = N_TX * oversampling
    m = np.arange(n_entries)
    t = np.arange(N_TX)
    entries = np.exp(-2j * np.pi * np.outer(m, t) / n_entries) / np.sqrt(N_TX)
    return DftCodebook(entries, oversampling)


# ---------------------------------------------------------------------------
# Hermitian eigendecomposition (cyclic complex Jacobi)


def _jacobi_batch(a: np.ndarray):
    """Diagonalize a batch of 8x8 Hermitian matrices in place.

    Returns (eigenvalues [B, 8] unsorted, eigenvectors [B, 8, 8] columns).
    Fixed sweep order; rotations with negligible off-diagonal mass are
    skipped so converged matrices are exact fixed points.
    """
    a = a.copy()
    v = np.broadcast_to(np.eye(N_TX, dtype=np.complex128), a.shape).copy()

    scale = np.maximum(np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2))), 1e-300)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off_sq = (np.sum(np.abs(a) ** 2, axis=(1, 2))
                  - np.sum(np.abs(np.diagonal(a, axis1=1, axis2=2)) ** 2, axis=1))
        off = np.sqrt(np.maximum(off_sq, 0.0))
        if np.all(off <= _JACOBI_TOL * scale):
            break
        for p, q in _SWEEP_PAIRS:
            apq = a[:, p, q]
            abs_apq = np.abs(apq)
            diag_mag = np.abs(a[:, p, p].real) + np.abs(a[:, q, q].real)
            active = abs_apq > 1e-15 * np.maximum(diag_mag, 1e-300)
            if not np.any(active):
                continue

            # Phase that makes the (p, q) entry real, then a real rotation.
            phase = np.where(abs_apq > 0, apq / np.where(abs_apq > 0, abs_apq, 1.0), 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = (a[:, q, q].real - a[:, p, p].real) / (2.0 * np.where(abs_apq > 0, abs_apq, 1.0))
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            phase = np.where(active, phase, 1.0)

            cs = c[:, None]
            sp = (s * phase)[:, None]         # s * e^{i phi}
            spc = (s * np.conj(phase))[:, None]  # s * e^{-i phi}

            # A <- A J (columns p, q), then A <- J^H A (rows p, q).
            col_p = a[:, :, p].copy()
            col_q = a[:, :, q].copy()
            a[:, :, p] = cs * col_p - spc * col_q
            a[:, :, q] = sp * col_p + cs * col_q
            row_p = a[:, p, :].copy()
            row_q = a[:, q, :].copy()
            a[:, p, :] = cs * row_p - sp * row_q
            a[:, q, :] = spc * row_p + cs * row_q

            # The rotated pair is zero by construction; pin it exactly.
            a[:, p, q] = np.where(active, 0.0, a[:, p, q])
            a[:, q, p] = np.where(active, 0.0, a[:, q, p])
            # Diagonal stays real.
            a[:, p, p] = a[:, p, p].real
            a[:, q, q] = a[:, q, q].real

            vcol_p = v[:, :, p].copy()
            vcol_q = v[:, :, q].copy()
            v[:, :, p] = cs * vcol_p - spc * vcol_q
            v[:, :, q] = sp * vcol_p + cs * vcol_q

    return np.diagonal(a, axis1=1, axis2=2).real.copy(), v


def hermitian_eig_batch(a: np.ndarray):
    """Eigendecomposition of a batch of 8x8 Hermitian matrices.

    Returns (eigenvalues [B, 8] descending, eigenvectors [B, 8, 8]) with
    eigenvector i in column [:, :, i]. Deterministic for a given batch.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 2:
        a = a[None]
    if a.shape[-2:] != (N_TX, N_TX):
        raise ValueError(f"expected trailing 8x8, got {a.shape}")
    if not np.all(np.isfinite(a.view(np.float64))):
        raise ValueError("non-finite input matrix")

    herm_err = np.max(np.abs(a - np.conj(np.swapaxes(a, 1, 2))), axis=(1, 2))
    norm = np.maximum(np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2))), 1.0)
    if np.any(herm_err > 1e-9 * norm):
        raise ValueError("input not Hermitian within 1e-9")
    a = 0.5 * (a + np.conj(np.swapaxes(a, 1, 2)))

    vals, vecs = _jacobi_batch(a)
    order = np.argsort(-vals, axis=1, kind="stable")
    vals_sorted = np.take_along_axis(vals, order, axis=1)
    vecs_sorted = np.take_along_axis(vecs, order[:, None, :], axis=2)
    return vals_sorted, vecs_sorted


def hermitian_eig(a: np.ndarray):
    """Single-matrix variant: (eigenvalues[8] descending, eigenvectors 8x8)."""
    vals, vecs = hermitian_eig_batch(np.asarray(a)[None])
    return vals[0], vecs[0]


# ---------------------------------------------------------------------------
# Precoders and similarity metrics


def apply_phase_convention(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate vectors (last axis) so the first entry above tol is real >= 0."""
    v = np.asarray(v, dtype=np.complex128)
    flat = v.reshape(-1, v.shape[-1])
    mags = np.abs(flat)
    nonzero = mags > tol
    has_ref = nonzero.any(axis=1)
    first = np.argmax(nonzero, axis=1)  # index of first entry above tol
    ref = flat[np.arange(flat.shape[0]), first]
    ref_mag = np.abs(ref)
    factor = np.where(has_ref, np.conj(ref) / np.where(ref_mag > 0, ref_mag, 1.0), 1.0)
    return (flat * factor[:, None]).reshape(v.shape)


def extract_precoders(ch: ChannelRealization, n_layers: int) -> PrecoderReport:
    """Top eigenvectors of each sub-band transmit covariance H_k^H H_k.

    The realization's 70 covariances are diagonalized as one batch, which
    keeps the result identical between offline and emulator paths.
    """
    if not 1 <= n_layers <= N_RX:
        raise ValueError(f"n_layers must be in 1..{N_RX}, got {n_layers}")
    ch.validate()
    h = ch.h  # [70, 4, 8]
    cov = np.einsum("krt,kru->ktu", np.conj(h), h)  # [70, 8, 8]
    vals, vecs = hermitian_eig_batch(cov)
    v = np.swapaxes(vecs[:, :, :n_layers], 1, 2)  # [70, n_layers, 8]
    v = apply_phase_convention(v)
    v = np.swapaxes(v, 0, 1)                      # [n_layers, 70, 8]
    eig = np.maximum(vals[:, :n_layers].T, 0.0)   # [n_layers, 70]
    return PrecoderReport(np.ascontiguousarray(v), np.ascontiguousarray(eig),
                          ch.realization_id)


def sgcs(v: np.ndarray, v_hat: np.ndarray) -> float:
    """Squared generalized cosine similarity |v^H v_hat|^2 / (|v|^2 |v_hat|^2)."""
    v = np.asarray(v, dtype=np.complex128)
    v_hat = np.asarray(v_hat, dtype=np.complex128)
    nv = np.sum(np.abs(v) ** 2)
    nh = np.sum(np.abs(v_hat) ** 2)
    if nv == 0 or nh == 0:
        raise ValueError("sgcs of a zero vector is undefined")
    inner = np.vdot(v, v_hat)
    return float((inner * np.conj(inner)).real / (nv * nh))


def sgcs_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized SGCS along the last axis for matching stacks of vectors."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    na = np.sum(np.abs(a) ** 2, axis=-1)
    nb = np.sum(np.abs(b) ** 2, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("sgcs of a zero vector is undefined")
    inner = np.sum(np.conj(a) * b, axis=-1)
    return (inner * np.conj(inner)).real / (na * nb)


def mean_sgcs(a: PrecoderReport, b: PrecoderReport, layer: int) -> float:
    """Average SGCS over all sub-bands for one layer."""
    if a.v.shape != b.v.shape:
        raise ValueError(f"shape mismatch {a.v.shape} vs {b.v.shape}")
    if not 0 <= layer < a.n_layers:
        raise ValueError(f"layer {layer} out of range")
    return float(np.mean(sgcs_rows(a.v[layer], b.v[layer])))


# ---------------------------------------------------------------------------
# Re-orthogonalization and capacity


def _deterministic_filler(basis_rows: np.ndarray) -> np.ndarray:
    """First canonical basis vector with a usable residual against basis_rows."""
    for j in range(N_TX):
        e = np.zeros(N_TX, dtype=np.complex128)
        e[j] = 1.0
        for row in basis_rows:
            e = e - np.vdot(row, e) * row
        n = np.linalg.norm(e)
        if n > 0.5:
            return e / n
    raise AssertionError("no canonical filler found (basis cannot span C^8)")


def reorthogonalize(v_hat: np.ndarray) -> np.ndarray:
    """Gram-Schmidt in layer order (strongest first) along the last two axes.

    Accepts [..., n_layers, 8]; layer 0 keeps its direction. Layers that
    collapse below norm 1e-6 after projection are replaced by a
    deterministic canonical-basis filler orthogonal to the prior layers.
    """
    v_hat = np.asarray(v_hat, dtype=np.complex128)
    if v_hat.shape[-1] != N_TX:
        raise ValueError(f"last axis must be {N_TX}")
    lead = v_hat.shape[:-2]
    n_layers = v_hat.shape[-2]
    flat = v_hat.reshape(-1, n_layers, N_TX).copy()
    nb = flat.shape[0]

    n0 = np.linalg.norm(flat[:, 0, :], axis=-1)
    if np.any(n0 < 1e-300):
        raise ValueError("layer-0 vector is zero")

    out = np.empty_like(flat)
    out[:, 0, :] = flat[:, 0, :] / n0[:, None]
    for l in range(1, n_layers):
        cur = flat[:, l, :]
        for m in range(l):  # modified Gram-Schmidt
            proj = np.sum(np.conj(out[:, m, :]) * cur, axis=-1)
            cur = cur - proj[:, None] * out[:, m, :]
        norms = np.linalg.norm(cur, axis=-1)
        collapsed = norms < 1e-6
        safe = np.where(collapsed, 1.0, norms)
        out[:, l, :] = cur / safe[:, None]
        if np.any(collapsed):
            for i in np.nonzero(collapsed)[0]:
                out[i, l, :] = _deterministic_filler(out[i, :l, :])
    return out.reshape(*lead, n_layers, N_TX)


def capacity_per_subband(ch: ChannelRealization, w: np.ndarray, snr_db: float) -> np.ndarray:
    """log2 det(I + (rho/nu) H_k W_k W_k^H H_k^H) for every sub-band."""
    ch.validate()
    w = np.asarray(w, dtype=np.complex128)
    if w.ndim != 3 or w.shape[1] != N_SUBBANDS or w.shape[2] != N_TX:
        raise ValueError(f"w must be [n_layers, {N_SUBBANDS}, {N_TX}], got {w.shape}")
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    if not np.all(np.isfinite(w.view(np.float64))):
        raise ValueError("non-finite precoder")
    n_layers = w.shape[0]

    gram = np.einsum("lkt,mkt->klm", np.conj(w), w)  # [70, L, L]
    if np.max(np.abs(gram - np.eye(n_layers))) > 1e-4:
        raise ValueError("precoders not orthonormal within 1e-4; reorthogonalize first")

    rho = 10.0 ** (snr_db / 10.0)
    m = np.einsum("krt,lkt->krl", ch.h, w)  # [70, 4, L], columns H_k w_l
    a = np.eye(N_RX) + (rho / n_layers) * np.einsum("krl,ksl->krs", m, np.conj(m))
    sign, logdet = np.linalg.slogdet(a)
    return logdet / np.log(2.0)


def closed_loop_capacity(ch: ChannelRealization, w: np.ndarray, snr_db: float) -> float:
    """Mean over sub-bands of the per-sub-band closed-loop capacity (bits/s/Hz)."""
    return float(np.mean(capacity_per_subband(ch, w, snr_db)))


# ---------------------------------------------------------------------------
# Type-I-style wideband baseline


def type1_baseline(report: PrecoderReport, codebook: DftCodebook) -> PrecoderReport:
    """Wideband codebook selection: one DFT entry per layer, greedy by layer.

    For each layer (strongest first) pick the unused entry maximizing the
    mean SGCS against the true per-sub-band eigenvectors, replicate it
    across all sub-bands, then re-orthogonalize per sub-band. Ties break
    toward the lowest codebook index.
    """
    entries = codebook.entries
    if entries.shape[0] == 0:
        raise ValueError("empty codebook")
    n_layers = report.n_layers
    if n_layers > entries.shape[0]:
        raise ValueError(f"{n_layers} layers exceed {entries.shape[0]} codebook entries")

    used = set()
    chosen = np.empty((n_layers, N_TX), dtype=np.complex128)
    for l in range(n_layers):
        # mean over sub-bands of SGCS(v[l][k], entry) for every entry
        inner = np.einsum("kt,et->ke", np.conj(report.v[l]), entries)
        scores = np.mean((inner * np.conj(inner)).real, axis=0)  # entries are unit norm
        order = np.argsort(-scores, kind="stable")
        pick = next(int(i) for i in order if int(i) not in used)
        used.add(pick)
        chosen[l] = entries[pick]

    v = np.repeat(chosen[:, None, :], N_SUBBANDS, axis=1)  # [L, 70, 8]
    v = np.swapaxes(reorthogonalize(np.swapaxes(v, 0, 1)), 0, 1)
    return PrecoderReport(np.ascontiguousarray(v), report.eigenvalues.copy(),
                          report.realization_id)
