"""Scene construction: array geometry, channel statistics, and samplers.

A scene is a uniform linear transmit/receive array pair observing K point
scatterers plus an optional downlink communication channel.  Target angles
enter through array steering vectors; the transmit-side correlation carries
the per-target gains while the receive side uses unit weights.

All randomness flows through counter-based streams keyed by
(seed, stream index, trial index), so any draw can be reproduced in
isolation and Monte-Carlo runs are independent of worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg import hermitian_part, kron, logdet_plus, psd_sqrt

# Stream indices for the counter-based RNG.
STREAM_SIGNAL = 0
STREAM_TARGET = 1
STREAM_COMM = 2
STREAM_ANGLES = 3


def stream_rng(seed: int, stream: int, trial: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream, trial).

    Built on Philox, so draws depend only on the key, never on how many
    other generators were created first.
    """
    ss = np.random.SeedSequence(entropy=(int(seed), int(stream), int(trial)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SceneConfig:
    """Static description of one sensing scene.

    Angles are in radians, powers in linear watts.  `n_frames` is the number
    of probing frames per coherent processing interval and may not be smaller
    than the transmit array size.
    """

    n_tx: int
    n_rx: int
    n_frames: int
    n_targets: int
    sigma2_s: float
    power_budget: float
    target_angles_tx: tuple[float, ...]
    target_angles_rx: tuple[float, ...]
    target_gains: tuple[float, ...]
    n_comm: int = 1
    sigma2_c: float = 1.0
    antenna_spacing: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_frames", "n_comm"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be a positive integer")
        if self.n_targets < 0:
            raise DomainError("n_targets must be nonnegative")
        if self.n_frames < self.n_tx:
            raise DomainError(
                f"n_frames ({self.n_frames}) must be at least n_tx ({self.n_tx}): "
                "each processing interval needs at least as many frames as "
                "transmit antennas"
            )
        for name in ("sigma2_s", "sigma2_c", "power_budget"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive")
        if self.antenna_spacing <= 0.0:
            raise DomainError("antenna_spacing must be positive")
        for name in ("target_angles_tx", "target_angles_rx", "target_gains"):
            if len(getattr(self, name)) != self.n_targets:
                raise DomainError(
                    f"{name} must list exactly n_targets ({self.n_targets}) values"
                )
        if any(g <= 0.0 for g in self.target_gains):
            raise DomainError("target_gains must be positive")


@dataclass(frozen=True)
class CorrelationPair:
    """Transmit/receive channel correlation matrices (Hermitian PSD)."""

    r_tx: np.ndarray
    r_rx: np.ndarray


@dataclass(frozen=True)
class CommChannel:
    """Flat-fading downlink matrix, shape (n_comm, n_tx)."""

    h: np.ndarray


def steering_vector(theta: float, n: int, spacing: float = 0.5) -> np.ndarray:
    """ULA steering vector: entry i is exp(j 2 pi spacing i sin theta)."""
    if n < 1:
        raise DomainError("steering vector needs at least one antenna")
    phase = 2.0 * np.pi * spacing * np.arange(n) * np.sin(theta)
    return np.exp(1j * phase)


def build_correlations(cfg: SceneConfig) -> CorrelationPair:
    """Sum of steering outer products on each side of the channel.

    The transmit matrix weights each target by its gain; the receive matrix
    uses unit weights.  Zero targets yields zero matrices.
    """
    r_tx = np.zeros((cfg.n_tx, cfg.n_tx), dtype=complex)
    r_rx = np.zeros((cfg.n_rx, cfg.n_rx), dtype=complex)
    for k in range(cfg.n_targets):
        a_t = steering_vector(cfg.target_angles_tx[k], cfg.n_tx, cfg.antenna_spacing)
        a_r = steering_vector(cfg.target_angles_rx[k], cfg.n_rx, cfg.antenna_spacing)
        r_tx += cfg.target_gains[k] * np.outer(a_t, a_t.conj())
        r_rx += np.outer(a_r, a_r.conj())
    return CorrelationPair(r_tx=hermitian_part(r_tx), r_rx=hermitian_part(r_rx))


def build_comm_channel(cfg: SceneConfig, snr_db: float = 10.0) -> CommChannel:
    """Draw the i.i.d. Gaussian downlink matrix for this scene.

    Entries are scaled so that the average per-receive-antenna SNR under the
    uniform precoder (power_budget/n_tx) I equals `snr_db`.
    """
    rng = stream_rng(cfg.seed, STREAM_COMM)
    snr_lin = 10.0 ** (snr_db / 10.0)
    entry_power = snr_lin * cfg.sigma2_c / cfg.power_budget
    h = rng.standard_normal((cfg.n_comm, cfg.n_tx)) + 1j * rng.standard_normal(
        (cfg.n_comm, cfg.n_tx)
    )
    return CommChannel(h=np.sqrt(entry_power / 2.0) * h)


def sample_signal(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    """One probing-signal realization, shape (n_tx, n_frames).

    Entries are i.i.d. circular complex Gaussian with variance 1/n_frames,
    so the per-frame Gram matrix averages to the identity.
    """
    shape = (cfg.n_tx, cfg.n_frames)
    s = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return s * np.sqrt(0.5 / cfg.n_frames)


def sample_target_channel(pair: CorrelationPair, rng: np.random.Generator) -> np.ndarray:
    """One stacked target-channel vector h = R^(1/2) w, R = r_rx (x) r_tx."""
    root = kron(psd_sqrt(pair.r_rx), psd_sqrt(pair.r_tx))
    n = root.shape[0]
    w = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(0.5)
    return root @ w


def comm_mi(channel: CommChannel, phi: np.ndarray, sigma2_c: float) -> float:
    """Downlink mutual information log det(I + H Phi H^H / sigma2_c), in nats."""
    if sigma2_c <= 0.0:
        raise DomainError("sigma2_c must be positive")
    h = np.asarray(channel.h, dtype=complex)
    return logdet_plus(hermitian_part(h @ phi @ h.conj().T) / sigma2_c)
