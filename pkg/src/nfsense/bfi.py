"""Beamforming-feedback compression and the motion-sensitivity analysis.

The downlink channel matrix is decomposed as H = U S V*; the transmit
beamforming matrix V is phase-normalized (last row real, non-negative),
converted into Givens-rotation angles, quantized, and reconstructed on the
AP side.  A diagonal motion model Q_rx H Q_tx then shows that the
reconstructed matrix responds only to changes of the subject-to-AP
direction, not to radial subject-UE motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 100
_UNITARY_TOL = 1e-9
_MAX_DIM = 8


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex MIMO channel for one subcarrier: N_rx rows x N_tx columns."""

    h: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.h, dtype=complex)
        object.__setattr__(self, "h", h)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"channel matrix must be 2-D and non-empty, got shape {h.shape}")
        if not np.all(np.isfinite(h.view(float))):
            raise ValueError("channel matrix entries must be finite")

    @property
    def n_rx(self) -> int:
        return self.h.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True)
class BeamformingMatrix:
    """Unitary N_tx x N_tx beamforming matrix."""

    v: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=complex)
        object.__setattr__(self, "v", v)
        n = v.shape[0]
        if v.ndim != 2 or v.shape != (n, n):
            raise ValueError(f"beamforming matrix must be square, got {v.shape}")
        err = np.max(np.abs(v.conj().T @ v - np.eye(n)))
        if err > 1e-6:
            raise ValueError(f"matrix is not unitary (max deviation {err:.3g})")


@dataclass(frozen=True)
class MotionUpdate:
    """Diagonal channel update caused by a small subject displacement.

    delta_theta: change of the subject->AP direction; delta_d_t: common
    Tx-side path change; delta_d_r: per-Rx-antenna path changes; rho:
    per-Rx amplitude ratios; ell: Tx antenna spacing; theta: subject->AP
    direction angle.
    """

    delta_theta: float = 0.0
    delta_d_t: float = 0.0
    delta_d_r: tuple[float, ...] = ()
    rho: tuple[float, ...] = ()
    ell: float = 0.05
    theta: float = math.pi / 4

    def __post_init__(self) -> None:
        if any(r <= 0 for r in self.rho):
            raise ValueError(f"rho entries must be > 0, got {self.rho}")
        if not (self.ell > 0):
            raise ValueError(f"ell must be > 0, got {self.ell}")


def _complete_basis(u_cols: list[np.ndarray], n: int) -> np.ndarray:
    """Extend orthonormal columns to a full n x n unitary (deterministic)."""
    basis = list(u_cols)
    for k in range(n):
        if len(basis) == n:
            break
        cand = np.zeros(n, dtype=complex)
        cand[k] = 1.0
        for b in basis:
            cand = cand - (b.conj() @ cand) * b
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            basis.append(cand / norm)
    return np.column_stack(basis)


def svd_decompose(h: ChannelMatrix) -> tuple[np.ndarray, np.ndarray, BeamformingMatrix]:
    """One-sided Jacobi SVD: returns (U, S, V) with H = U S V*.

    S is the rectangular diagonal matrix (non-negative, non-increasing).
    Only small matrices are supported; the rotation count grows fast.
    """
    mat = h.h
    n_rx, n_tx = mat.shape
    if max(n_rx, n_tx) > _MAX_DIM:
        raise ValueError(f"matrix dimensions {mat.shape} exceed the supported {_MAX_DIM}")

    a = mat.astype(complex).copy()
    v = np.eye(n_tx, dtype=complex)
    scale = np.max(np.abs(a))
    if scale == 0.0:
        s = np.zeros((n_rx, n_tx))
        return np.eye(n_rx, dtype=complex), s, BeamformingMatrix(v)

    # Columns whose squared norm falls below this are numerically zero
    # (rank deficiency); rotating them against each other only stirs noise.
    null_thresh = (1e-14 * scale) ** 2 * n_rx

    for _ in range(_JACOBI_MAX_SWEEPS):
        off_mass = 0.0
        norm_sq = np.real(np.sum(a.conj() * a, axis=0))
        for p in range(n_tx - 1):
            for q in range(p + 1, n_tx):
                hpp, hqq = norm_sq[p], norm_sq[q]
                if hpp <= null_thresh or hqq <= null_thresh:
                    continue
                hpq = complex(a[:, p].conj() @ a[:, q])
                mag = abs(hpq)
                off_mass = max(off_mass, mag * mag / (hpp * hqq))
                if mag * mag <= (_JACOBI_TOL ** 2) * hpp * hqq:
                    continue
                # Phase-reduce to the real symmetric 2x2 case, then rotate.
                beta_c = np.conj(hpq / mag)
                theta = 0.5 * math.atan2(2.0 * mag, hpp - hqq)
                c, s_ = math.cos(theta), math.sin(theta)
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p + s_ * beta_c * col_q
                a[:, q] = -s_ * col_p + c * beta_c * col_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp + s_ * beta_c * vq
                v[:, q] = -s_ * vp + c * beta_c * vq
                norm_sq[p] = np.real(a[:, p].conj() @ a[:, p])
                norm_sq[q] = np.real(a[:, q].conj() @ a[:, q])
        if off_mass < _JACOBI_TOL ** 2:
            break

    sigma = np.sqrt(np.real(np.sum(a.conj() * a, axis=0)))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    a = a[:, order]
    v = v[:, order]

    tol = 1e-13 * max(float(sigma[0]), 1e-300)
    u_cols = [a[:, j] / sigma[j] for j in range(min(n_rx, n_tx)) if sigma[j] > tol]
    u = _complete_basis(u_cols, n_rx)
    s = np.zeros((n_rx, n_tx))
    for j in range(min(n_rx, n_tx)):
        s[j, j] = sigma[j]
    return u, s, BeamformingMatrix(v)


def phase_normalize(v: BeamformingMatrix) -> tuple[BeamformingMatrix, tuple[int, ...]]:
    """Rotate each column so the last-row entry is real and non-negative.

    Returns the normalized matrix and the indices of columns whose last-row
    entry was zero; those take their phase reference from the last non-zero
    entry instead (a zero entry is already real, so the compression contract
    still holds).
    """
    mat = v.v.copy()
    n = mat.shape[0]
    flagged = []
    for c in range(mat.shape[1]):
        col = mat[:, c]
        z = col[n - 1]
        if abs(z) < 1e-15:
            flagged.append(c)
            nz = np.nonzero(np.abs(col) >= 1e-15)[0]
            if nz.size == 0:
                continue
            z = col[nz[-1]]
        mat[:, c] = col * (z.conjugate() / abs(z))
    return BeamformingMatrix(mat), tuple(flagged)


@dataclass(frozen=True)
class BfiReport:
    """Angle-encoded beamforming feedback for one subcarrier.

    ``b_phi``/``b_psi`` are quantizer bit widths; 0 means no quantization
    (exact angles, used by analysis code).  ``phi_codes``/``psi_codes`` hold
    the integer cell indices when quantized.
    """

    n_tx: int
    n_cols: int
    b_phi: int
    b_psi: int
    phi_angles: np.ndarray
    psi_angles: np.ndarray
    phi_codes: np.ndarray | None = None
    psi_codes: np.ndarray | None = None

    def __post_init__(self) -> None:
        n_phi, n_psi = angle_counts(self.n_tx, self.n_cols)
        if len(self.phi_angles) != n_phi or len(self.psi_angles) != n_psi:
            raise ValueError(
                f"angle counts {len(self.phi_angles)}/{len(self.psi_angles)} do not match "
                f"the Givens decomposition of a {self.n_tx}x{self.n_cols} matrix "
                f"({n_phi} phi, {n_psi} psi)")
        if self.b_phi:
            if self.phi_codes is None or np.any(self.phi_codes < 0) or \
                    np.any(self.phi_codes >= 2 ** self.b_phi):
                raise ValueError("phi codes out of range for the stated bit width")
        if self.b_psi:
            if self.psi_codes is None or np.any(self.psi_codes < 0) or \
                    np.any(self.psi_codes >= 2 ** self.b_psi):
                raise ValueError("psi codes out of range for the stated bit width")


def angle_counts(n_tx: int, n_cols: int) -> tuple[int, int]:
    """Number of (phi, psi) angles in the Givens decomposition."""
    stages = min(n_cols, n_tx - 1)
    n_phi = sum(n_tx - 1 - i for i in range(stages))
    n_psi = sum(n_tx - 1 - i for i in range(stages))
    return n_phi, n_psi


def _quantize(angles: np.ndarray, bits: int, span: float) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint quantization of angles in [0, span) to 2^bits uniform cells."""
    cells = 2 ** bits
    width = span / cells
    codes = np.floor(np.mod(angles, span) / width).astype(int)
    codes = np.clip(codes, 0, cells - 1)
    return codes, (codes + 0.5) * width


def extract_angles(v: BeamformingMatrix, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Givens-angle extraction from a phase-normalized unitary matrix.

    Column-major elimination: for each stage i, the phases of rows i..M-2 of
    column i are removed (phi angles), then real rotations on row pairs
    (i, l) for l = i+1..M-1 zero the sub-diagonal entries (psi angles).
    """
    w = v.v.copy()
    m = w.shape[0]
    stages = min(n_cols, m - 1)
    phis: list[float] = []
    psis: list[float] = []
    for i in range(stages):
        for l in range(i, m - 1):
            phi = math.atan2(w[l, i].imag, w[l, i].real) % (2.0 * math.pi)
            phis.append(phi)
            w[l, :] *= np.exp(-1j * phi)
        for l in range(i + 1, m):
            psi = math.atan2(w[l, i].real, w[i, i].real)
            psis.append(psi)
            c, s = math.cos(psi), math.sin(psi)
            row_i = w[i, :].copy()
            row_l = w[l, :].copy()
            w[i, :] = c * row_i + s * row_l
            w[l, :] = -s * row_i + c * row_l
    return np.array(phis), np.array(psis)


def compress(v: BeamformingMatrix, b_phi: int = 6, b_psi: int = 4,
             n_cols: int | None = None) -> BfiReport:
    """Convert a beamforming matrix into an angle report.

    The input must be phase-normalized (last row real, non-negative); pass it
    through :func:`phase_normalize` first.  ``n_cols`` defaults to the full
    matrix width; pass min(n_rx, n_tx) to compress only the steering columns.
    """
    mat = v.v
    n_tx = mat.shape[0]
    if n_cols is None:
        n_cols = mat.shape[1]
    last_row = mat[n_tx - 1, :n_cols]
    if np.max(np.abs(last_row.imag)) > 1e-9:
        raise ValueError("input is not phase-normalized: last row has imaginary parts")
    phis, psis = extract_angles(v, n_cols)
    phi_codes = psi_codes = None
    if b_phi:
        phi_codes, phis = _quantize(phis, b_phi, 2.0 * math.pi)
    if b_psi:
        psi_codes, psis = _quantize(psis, b_psi, math.pi / 2.0)
    return BfiReport(n_tx=n_tx, n_cols=n_cols, b_phi=b_phi, b_psi=b_psi,
                     phi_angles=phis, psi_angles=psis,
                     phi_codes=phi_codes, psi_codes=psi_codes)


def decompress(report: BfiReport) -> BeamformingMatrix:
    """Rebuild the beamforming matrix from an angle report.

    The result is exactly unitary (product of rotations and phase diagonals)
    and matches the original up to quantization error, with unreported
    columns completed to an orthonormal basis.
    """
    m = report.n_tx
    stages = min(report.n_cols, m - 1)
    w = np.eye(m, dtype=complex)
    phi_slices: list[np.ndarray] = []
    psi_slices: list[np.ndarray] = []
    pos_phi = pos_psi = 0
    for i in range(stages):
        n_i = m - 1 - i
        phi_slices.append(np.asarray(report.phi_angles[pos_phi:pos_phi + n_i]))
        psi_slices.append(np.asarray(report.psi_angles[pos_psi:pos_psi + n_i]))
        pos_phi += n_i
        pos_psi += n_i
    for i in reversed(range(stages)):
        psis = psi_slices[i]
        for l in reversed(range(i + 1, m)):
            psi = psis[l - i - 1]
            c, s = math.cos(psi), math.sin(psi)
            row_i = w[i, :].copy()
            row_l = w[l, :].copy()
            # transpose of the extraction rotation
            w[i, :] = c * row_i - s * row_l
            w[l, :] = s * row_i + c * row_l
        phases = np.ones(m, dtype=complex)
        for l in range(i, m - 1):
            phases[l] = np.exp(1j * phi_slices[i][l - i])
        w = phases[:, None] * w
    return BeamformingMatrix(w)


def apply_motion(h0: ChannelMatrix, m: MotionUpdate, lambda_m: float) -> ChannelMatrix:
    """Apply the diagonal motion model: H1 = Q_rx H0 Q_tx."""
    n_rx, n_tx = h0.h.shape
    rho = m.rho if m.rho else tuple(1.0 for _ in range(n_rx))
    ddr = m.delta_d_r if m.delta_d_r else tuple(0.0 for _ in range(n_rx))
    if len(rho) != n_rx or len(ddr) != n_rx:
        raise ValueError(f"rho/delta_d_r must have {n_rx} entries, got {len(rho)}/{len(ddr)}")
    k = 2.0 * math.pi / lambda_m
    q_rx = np.array([r * np.exp(-1j * k * d) for r, d in zip(rho, ddr)])
    tx_phase = [m.delta_d_t - kk * m.ell * m.delta_theta * math.sin(m.theta)
                for kk in range(n_tx)]
    q_tx = np.exp(-1j * k * np.array(tx_phase))
    return ChannelMatrix(q_rx[:, None] * h0.h * q_tx[None, :])


def reconstructed_v(h: ChannelMatrix, b_phi: int = 0, b_psi: int = 0) -> BeamformingMatrix:
    """Full UE-side + AP-side chain: SVD, normalize, compress, decompress."""
    _, _, v = svd_decompose(h)
    v_hat, _ = phase_normalize(v)
    return decompress(compress(v_hat, b_phi=b_phi, b_psi=b_psi))


def predicted_v_change(n_tx: int, m: MotionUpdate, lambda_m: float) -> np.ndarray:
    """Closed-form left diagonal factor relating the reconstructed matrices.

    After a motion step, the new reconstructed matrix equals
    diag(e^{i 2 pi (N_tx - k) ell dtheta sin(theta) / lambda}) times the old
    one, k = 1..N_tx: only the direction change enters.
    """
    k = 2.0 * math.pi / lambda_m
    shift = m.ell * m.delta_theta * math.sin(m.theta)
    return np.exp(1j * k * shift * (n_tx - 1 - np.arange(n_tx)))


def bfi_sensitivity_demo(h0: ChannelMatrix, motions: Sequence[MotionUpdate],
                         lambda_m: float, b_phi: int = 0, b_psi: int = 0) -> list[tuple[float, float]]:
    """Per-step (CSI phase change, reconstructed-BFI change) series.

    CSI change is the unwrapped phase excursion of H[0,0] relative to the
    start; BFI change is the Frobenius distance between the reconstructed
    beamforming matrices.
    """
    v0 = reconstructed_v(h0, b_phi, b_psi)
    raw_phases = [np.angle(h0.h[0, 0])]
    rows: list[tuple[float, float]] = []
    for m in motions:
        h1 = apply_motion(h0, m, lambda_m)
        raw_phases.append(np.angle(h1.h[0, 0]))
        v1 = reconstructed_v(h1, b_phi, b_psi)
        unwrapped = np.unwrap(np.array(raw_phases))
        csi_change = abs(float(unwrapped[-1] - unwrapped[0]))
        bfi_change = float(np.linalg.norm(v1.v - v0.v))
        rows.append((csi_change, bfi_change))
    return rows


def save_report(report: BfiReport, path) -> None:
    """Text serialization: header ``N_tx N_cols b_phi b_psi`` then integer codes."""
    if not (report.b_phi and report.b_psi):
        raise ValueError("only quantized reports (b_phi, b_psi >= 1) can be saved")
    with open(path, "w") as fh:
        fh.write(f"{report.n_tx} {report.n_cols} {report.b_phi} {report.b_psi}\n")
        for code in report.phi_codes:
            fh.write(f"{code}\n")
        for code in report.psi_codes:
            fh.write(f"{code}\n")


def load_report(path) -> BfiReport:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"{path}: malformed BFI report header")
        n_tx, n_cols, b_phi, b_psi = (int(x) for x in header)
        codes = [int(line) for line in fh if line.strip()]
    n_phi, n_psi = angle_counts(n_tx, n_cols)
    if len(codes) != n_phi + n_psi:
        raise ValueError(f"{path}: expected {n_phi + n_psi} codes, found {len(codes)}")
    phi_codes = np.array(codes[:n_phi], dtype=int)
    psi_codes = np.array(codes[n_phi:], dtype=int)
    phi_angles = (phi_codes + 0.5) * (2.0 * math.pi / 2 ** b_phi)
    psi_angles = (psi_codes + 0.5) * (math.pi / 2.0 / 2 ** b_psi)
    return BfiReport(n_tx=n_tx, n_cols=n_cols, b_phi=b_phi, b_psi=b_psi,
                     phi_angles=phi_angles, psi_angles=psi_angles,
                     phi_codes=phi_codes, psi_codes=psi_codes)
