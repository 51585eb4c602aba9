"""Per-realization sensing metrics and schedule-independent Monte Carlo.

Exact (finite-frame) metrics are evaluated in a reduced per-receive-
eigenvalue form: one Hermitian eigendecomposition of the n_tx x n_tx probe
Gram per realization serves every receive eigenvalue.  Full Kronecker-space
forms are assembled only for the matrix-valued oracles, which tests run on
small scenes.

`mc_estimate` draws each trial from its own counter-based stream, fills a
trial-indexed array, and reduces it once with pairwise summation, so the
estimate is identical down to the last bit for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .asymptotic import rx_load_eigs, support_logdet
from .errors import DomainError, NumericalError
from .linalg import RANK_RTOL, hermitian_eig, hermitian_part, kron, psd_sqrt
from .scene import STREAM_SIGNAL, CorrelationPair, SceneConfig, sample_signal, stream_rng


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo mean with its standard error."""

    mean: float
    stderr: float
    n_trials: int
    seed: int


class PerRealization:
    """Reduced-form exact metrics for one scene, reusable across trials.

    Caches b = r_tx^(1/2) F so each realization costs one small matmul and
    one eigendecomposition of the whitened probe Gram.
    """

    def __init__(self, phi_factor: np.ndarray, pair: CorrelationPair, sigma2_s: float):
        self.sigma2_s = float(sigma2_s)
        self.pair = pair
        self.b = psd_sqrt(pair.r_tx) @ np.asarray(phi_factor, dtype=complex)
        self.lam = rx_load_eigs(pair, sigma2_s)
        self.r_tx = np.asarray(pair.r_tx, dtype=complex)

    def _gram_eig(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = self.b @ np.asarray(s, dtype=complex)
        gam, u = hermitian_eig(y @ y.conj().T)
        return np.clip(gam, 0.0, None), u

    def smi(self, s: np.ndarray) -> float:
        gam, _ = self._gram_eig(s)
        return float(sum(np.sum(np.log1p(rho * gam)) for rho in self.lam))

    def lmmse_trace(self, s: np.ndarray) -> float:
        gam, u = self._gram_eig(s)
        d = np.real(np.sum(u.conj() * (self.r_tx @ u), axis=0))
        total = 0.0
        for rho in self.lam:
            total += self.sigma2_s * rho * float(np.sum(d / (1.0 + rho * gam)))
        return total

    def smi_and_lmmse(self, s: np.ndarray) -> tuple[float, float]:
        gam, u = self._gram_eig(s)
        d = np.real(np.sum(u.conj() * (self.r_tx @ u), axis=0))
        smi = 0.0
        lmmse = 0.0
        for rho in self.lam:
            smi += float(np.sum(np.log1p(rho * gam)))
            lmmse += self.sigma2_s * rho * float(np.sum(d / (1.0 + rho * gam)))
        return smi, lmmse


def smi_exact(
    s: np.ndarray,
    phi_factor: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
) -> float:
    """Exact sensing mutual information of one probe realization, in nats."""
    return PerRealization(phi_factor, pair, sigma2_s).smi(s)


def lmmse_trace(
    s: np.ndarray,
    phi_factor: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
) -> float:
    """Trace of the LMMSE error covariance for one probe realization."""
    return PerRealization(phi_factor, pair, sigma2_s).lmmse_trace(s)


def lmmse_matrix(
    s: np.ndarray,
    phi_factor: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
) -> np.ndarray:
    """LMMSE error covariance of the stacked target channel (Hermitian PSD).

    Assembled blockwise in the receive eigenbasis as
    sum_j  (u_j u_j^H) (x) sigma2 rho_j r_tx^(1/2) (I + rho_j T_S)^(-1) r_tx^(1/2),
    which equals R - R A^H (A R A^H + sigma2 I)^(-1) A R exactly.  Quadratic
    storage in n_tx * n_rx; intended for small scenes.
    """
    sigma2_s = float(sigma2_s)
    if sigma2_s <= 0.0:
        raise DomainError("sigma2_s must be positive")
    e_rx, u_rx = hermitian_eig(pair.r_rx)
    e_rx = np.clip(e_rx, 0.0, None)
    root = psd_sqrt(pair.r_tx)
    y = root @ np.asarray(phi_factor, dtype=complex) @ np.asarray(s, dtype=complex)
    gam, u = hermitian_eig(y @ y.conj().T)
    gam = np.clip(gam, 0.0, None)
    ru = root @ u
    n_rx, n_tx = e_rx.size, gam.size
    out = np.zeros((n_rx * n_tx, n_rx * n_tx), dtype=complex)
    for j, lam_tilde in enumerate(e_rx):
        if lam_tilde <= 0.0:
            continue
        rho = lam_tilde / sigma2_s
        block = (ru / (1.0 + rho * gam)) @ ru.conj().T * lam_tilde
        uj = u_rx[:, j]
        out += kron(np.outer(uj, uj.conj()), block)
    return hermitian_part(out)


def _support_basis(pair: CorrelationPair) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis and eigenvalues of the prior R on its support."""
    e_rx, u_rx = hermitian_eig(pair.r_rx)
    e_tx, u_tx = hermitian_eig(pair.r_tx)
    prods = np.outer(np.clip(e_rx, 0.0, None), np.clip(e_tx, 0.0, None)).ravel()
    if prods.size == 0 or prods.max() == 0.0:
        raise DomainError("the prior correlation is zero; no support to evaluate")
    keep = prods > RANK_RTOL * prods.max()
    basis = kron(u_rx, u_tx)[:, keep]
    return basis, prods[keep]


def bcrb_matrix(
    s: np.ndarray,
    phi_factor: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
) -> np.ndarray:
    """Bayesian Cramer-Rao matrix for one realization, on the prior support.

    Inverts prior-precision plus scaled Fisher information restricted to the
    nonzero-eigenvalue subspace of R and embeds the result back; for S = 0
    this returns R itself.
    """
    sigma2_s = float(sigma2_s)
    if sigma2_s <= 0.0:
        raise DomainError("sigma2_s must be positive")
    x = np.asarray(phi_factor, dtype=complex) @ np.asarray(s, dtype=complex)
    basis, prior_eigs = _support_basis(pair)
    n_rx = pair.r_rx.shape[0]
    fisher_full = kron(np.eye(n_rx), x @ x.conj().T) / sigma2_s
    fisher = basis.conj().T @ fisher_full @ basis
    a = np.diag(1.0 / prior_eigs) + hermitian_part(fisher)
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular posterior information matrix: {exc}") from exc
    return hermitian_part(basis @ inv @ basis.conj().T)


def verify_prop4(
    s: np.ndarray,
    phi_factor: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
) -> tuple[float, float]:
    """Cross-check the estimation-information identities on one realization.

    Returns (max entry gap between the Bayesian bound matrix and the LMMSE
    error covariance on the prior support, absolute gap in
    logdet(R|support) - logdet(bound|support) - SMI).
    """
    basis, prior_eigs = _support_basis(pair)
    psi_l = lmmse_matrix(s, phi_factor, pair, sigma2_s)
    proj_l = basis.conj().T @ psi_l @ basis
    x = np.asarray(phi_factor, dtype=complex) @ np.asarray(s, dtype=complex)
    n_rx = pair.r_rx.shape[0]
    fisher_full = kron(np.eye(n_rx), x @ x.conj().T) / float(sigma2_s)
    a = np.diag(1.0 / prior_eigs) + hermitian_part(
        basis.conj().T @ fisher_full @ basis
    )
    proj_b = np.linalg.inv(a)
    max_matrix_gap = float(np.abs(proj_l - proj_b).max())
    sign, logdet_a = np.linalg.slogdet(a)
    if sign.real <= 0:
        raise NumericalError("posterior information matrix lost positivity")
    prior_logdet, _ = support_logdet(pair)
    smi = smi_exact(s, phi_factor, pair, sigma2_s)
    # logdet of the bound on the support is -logdet_a
    identity_gap = abs(prior_logdet + logdet_a - smi)
    return max_matrix_gap, identity_gap


def _trial_values(
    metric: Callable[[np.ndarray], float],
    cfg: SceneConfig,
    trials: range,
    stream: int,
) -> np.ndarray:
    out = np.empty(len(trials))
    for i, trial in enumerate(trials):
        s = sample_signal(cfg, stream_rng(cfg.seed, stream, trial))
        out[i] = metric(s)
    return out


def _chunk_worker(args) -> tuple[int, np.ndarray]:
    metric, cfg, lo, hi, stream = args
    return lo, _trial_values(metric, cfg, range(lo, hi), stream)


def mc_estimate(
    metric: Callable[[np.ndarray], float],
    cfg: SceneConfig,
    n_trials: int,
    threads: int = 1,
    stream: int = STREAM_SIGNAL,
) -> McEstimate:
    """Monte-Carlo mean of a per-realization metric over probing draws.

    Trial t sees the signal from stream (cfg.seed, stream, t) regardless of
    scheduling, and the reduction runs over the assembled trial array, so the
    result does not depend on `threads`.  With threads > 1 the metric must be
    picklable (a module-level function).
    """
    if n_trials < 2:
        raise DomainError("n_trials must be at least 2 to report a standard error")
    values = np.empty(n_trials)
    if threads <= 1:
        values[:] = _trial_values(metric, cfg, range(n_trials), stream)
    else:
        chunk = max(1, math.ceil(n_trials / (4 * threads)))
        jobs = [
            (metric, cfg, lo, min(lo + chunk, n_trials), stream)
            for lo in range(0, n_trials, chunk)
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for lo, vals in pool.map(_chunk_worker, jobs):
                values[lo : lo + len(vals)] = vals
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n_trials))
    return McEstimate(mean=mean, stderr=stderr, n_trials=n_trials, seed=cfg.seed)
