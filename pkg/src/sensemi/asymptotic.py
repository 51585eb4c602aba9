"""Closed-form large-frame metrics for Gaussian-probed sensing.

Every metric here reduces to per-receive-eigenvalue scalar work through the
effective transmit matrix T = r_tx^(1/2) Phi r_tx^(1/2).  For each nonzero
eigenvalue rho of r_rx / sigma2_s, a scalar fixed point

    delta = (1/n_frames) tr( T (I + alpha T)^(-1) ),   alpha = rho / (1 + rho delta)

is solved by damped Picard iteration; the sensing mutual information, the
ergodic linear-MMSE trace, their frame-count derivatives, and the Bayesian
bound pair are then explicit functions of (delta, alpha) and the spectrum
of T.  Eigenvalues of the receive correlation below the relative rank
threshold contribute exactly zero and are skipped.

Frame counts are accepted as floats so derivative checks can difference the
formulas in a continuous frame parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError, NumericalError
from .linalg import (
    RANK_RTOL,
    hermitian_eig,
    hermitian_part,
    numerical_rank,
    psd_sqrt,
    require_hermitian,
)
from .scene import CorrelationPair

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITERS = 10_000
_MIN_DAMPING = 2.0**-20


@dataclass(frozen=True)
class FixedPointSolution:
    """One solved operating point of the trace fixed point."""

    rho: float
    delta: float
    alpha: float
    m_t: np.ndarray  # (I + alpha T)^(-1)
    residual: float


@dataclass(frozen=True)
class MetricReport:
    """Bundle of scene metrics produced by one evaluation method."""

    smi: float
    smi_upper: float
    smi_lower: float
    elmmse: float
    elmmse_lower: float
    ebcrb_logdet: float
    ebcrb_trace: float
    dof_interval: tuple[float, float] | None
    method: str
    stderr: dict[str, float] | None = None
    support_dim: int | None = None


def t_of_phi(phi: np.ndarray, r_tx: np.ndarray) -> np.ndarray:
    """Effective transmit matrix r_tx^(1/2) Phi r_tx^(1/2)."""
    root = psd_sqrt(r_tx)
    return hermitian_part(root @ require_hermitian(phi) @ root)


def _clip_psd_eigs(eigs: np.ndarray, what: str) -> np.ndarray:
    top = float(eigs[0]) if eigs.size else 0.0
    if eigs.size and float(eigs[-1]) < -1e-10 * max(top, 1e-300):
        raise DomainError(f"{what} expects a PSD matrix")
    return np.clip(eigs, 0.0, None)


def _fixed_point_eigs(
    t_eigs: np.ndarray,
    rho: float,
    n_frames: float,
    tol: float = FIXED_POINT_TOL,
    max_iters: int = FIXED_POINT_MAX_ITERS,
) -> tuple[float, float, int]:
    """Damped Picard iteration on the scalar fixed point.

    Starts from the rho -> 0 solution tr(T)/n_frames, which upper-bounds the
    fixed point; the update map is monotone increasing with slope
    alpha^2 tr((T M)^2) / n_frames <= rank(T)/n_frames, so iterates descend
    monotonically.  Damping halves on a sign flip of the update as a
    safeguard.  Returns (delta, residual, iterations).
    """
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    if rho < 0.0:
        raise DomainError("rho must be nonnegative")
    tsum = float(t_eigs.sum())
    delta = tsum / n_frames
    if rho == 0.0 or tsum == 0.0:
        return delta, 0.0, 0
    omega = 1.0
    prev_diff = 0.0
    for it in range(max_iters):
        alpha = rho / (1.0 + rho * delta)
        rhs = float(np.sum(t_eigs / (1.0 + alpha * t_eigs))) / n_frames
        diff = rhs - delta
        if abs(diff) <= tol:
            return delta, abs(diff), it
        if prev_diff != 0.0 and diff * prev_diff < 0.0 and omega > _MIN_DAMPING:
            omega *= 0.5
        prev_diff = diff
        delta = delta + omega * diff
        if delta < 0.0:
            delta = 0.0
    alpha = rho / (1.0 + rho * delta)
    residual = abs(float(np.sum(t_eigs / (1.0 + alpha * t_eigs))) / n_frames - delta)
    raise ConvergenceError(
        f"fixed point did not reach tol={tol:.1e} within {max_iters} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
    )


def solve_fixed_point(
    t: np.ndarray,
    rho: float,
    n_frames: float,
    tol: float = FIXED_POINT_TOL,
) -> FixedPointSolution:
    """Solve the trace fixed point for effective matrix T at load rho.

    Returns delta, alpha = rho/(1 + rho delta), the resolvent
    (I + alpha T)^(-1), and the substitution residual |delta - rhs(delta)|.
    """
    if n_frames <= 0:
        raise DomainError("n_frames must be positive")
    eigs, vecs = hermitian_eig(t)
    eigs = _clip_psd_eigs(eigs, "solve_fixed_point")
    delta, residual, _ = _fixed_point_eigs(eigs, float(rho), float(n_frames), tol)
    alpha = float(rho) / (1.0 + float(rho) * delta)
    m_t = (vecs / (1.0 + alpha * eigs)) @ vecs.conj().T
    return FixedPointSolution(
        rho=float(rho),
        delta=delta,
        alpha=alpha,
        m_t=hermitian_part(m_t),
        residual=residual,
    )


def rx_load_eigs(pair: CorrelationPair, sigma2_s: float) -> np.ndarray:
    """Nonzero eigenvalues of r_rx / sigma2_s, descending.

    Zero eigenvalues contribute nothing to any metric here and are dropped
    at the package rank threshold.
    """
    if sigma2_s <= 0.0:
        raise DomainError("sigma2_s must be positive")
    eigs, _ = hermitian_eig(pair.r_rx)
    eigs = _clip_psd_eigs(eigs, "rx_load_eigs")
    if eigs.size == 0 or eigs[0] == 0.0:
        return np.empty(0)
    keep = eigs > RANK_RTOL * eigs[0]
    return eigs[keep] / sigma2_s


class _Kernel:
    """Shared eigen-structure for one operating point (Phi, pair, noise, frames).

    Solves the fixed point once per receive eigenvalue and caches the pieces
    every closed-form metric and gradient needs:

      t_eigs, v   eigenpairs of T = r_tx^(1/2) Phi r_tx^(1/2)
      w           r_tx^(1/2) v  (maps diagonal calculus back to Phi space)
      r_diag      diag(v^H r_tx v), for traces against r_tx
      lam         nonzero receive loads rho_j
      delta, alpha, m (= 1/(1 + alpha_j t_eigs)) per receive load
    """

    def __init__(
        self,
        phi: np.ndarray,
        pair: CorrelationPair,
        sigma2_s: float,
        n_frames: float,
        tol: float = FIXED_POINT_TOL,
    ):
        if n_frames <= 0:
            raise DomainError("n_frames must be positive")
        self.sigma2_s = float(sigma2_s)
        self.n_frames = float(n_frames)
        root = psd_sqrt(pair.r_tx)
        t = hermitian_part(root @ require_hermitian(phi) @ root)
        eigs, vecs = hermitian_eig(t)
        self.t_eigs = _clip_psd_eigs(eigs, "metric kernel")
        self.v = vecs
        self.w = root @ vecs
        r_tilde = vecs.conj().T @ pair.r_tx @ vecs
        self.r_tilde = hermitian_part(r_tilde)
        self.r_diag = np.real(np.diag(r_tilde))
        self.lam = rx_load_eigs(pair, sigma2_s)
        self.delta = np.empty(self.lam.size)
        self.alpha = np.empty(self.lam.size)
        self.m = np.empty((self.lam.size, self.t_eigs.size))
        for j, rho in enumerate(self.lam):
            delta, _, _ = _fixed_point_eigs(self.t_eigs, float(rho), self.n_frames, tol)
            alpha = float(rho) / (1.0 + float(rho) * delta)
            self.delta[j] = delta
            self.alpha[j] = alpha
            self.m[j] = 1.0 / (1.0 + alpha * self.t_eigs)

    # ---- scalar metrics -------------------------------------------------

    def smi(self) -> float:
        total = 0.0
        for j, rho in enumerate(self.lam):
            ld = float(np.sum(np.log1p(self.alpha[j] * self.t_eigs)))
            x = rho * self.delta[j]
            total += ld + self.n_frames * (math.log1p(x) - x / (1.0 + x))
        return total

    def smi_upper(self) -> float:
        return float(
            sum(
                np.sum(np.log1p(rho * self.t_eigs))
                for rho in self.lam
            )
        )

    def elmmse(self) -> float:
        total = 0.0
        for j, rho in enumerate(self.lam):
            total += self.sigma2_s * rho * float(np.sum(self.r_diag * self.m[j]))
        return total

    def elmmse_lower(self) -> float:
        total = 0.0
        for rho in self.lam:
            total += self.sigma2_s * rho * float(
                np.sum(self.r_diag / (1.0 + rho * self.t_eigs))
            )
        return total

    def smi_ns_derivative(self) -> float:
        total = 0.0
        for j, rho in enumerate(self.lam):
            x = rho * self.delta[j]
            total += math.log1p(x) - x / (1.0 + x)
        return total

    def _ddelta_dns(self, j: int) -> float:
        # Implicit differentiation of the fixed point in the frame count.
        tm = self.t_eigs * self.m[j]
        denom = self.n_frames - self.alpha[j] ** 2 * float(np.sum(tm * tm))
        return -self.delta[j] / denom

    def elmmse_ns_derivative(self) -> float:
        total = 0.0
        for j, rho in enumerate(self.lam):
            trace = float(np.sum(self.r_diag * self.m[j] ** 2 * self.t_eigs))
            total += (
                self.sigma2_s
                * rho
                * self.alpha[j] ** 2
                * trace
                * self._ddelta_dns(j)
            )
        return total

    # ---- gradients in Phi ----------------------------------------------

    def _w_diag_wh(self, diag: np.ndarray) -> np.ndarray:
        return hermitian_part((self.w * diag) @ self.w.conj().T)

    def grad_smi(self) -> np.ndarray:
        n = self.w.shape[0]
        g = np.zeros((n, n), dtype=complex)
        for j in range(self.lam.size):
            g += self.alpha[j] * self._w_diag_wh(self.m[j])
        return hermitian_part(g)

    def grad_smi_upper(self) -> np.ndarray:
        n = self.w.shape[0]
        g = np.zeros((n, n), dtype=complex)
        for rho in self.lam:
            g += rho * self._w_diag_wh(1.0 / (1.0 + rho * self.t_eigs))
        return hermitian_part(g)

    def grad_delta(self, j: int) -> np.ndarray:
        tm = self.t_eigs * self.m[j]
        denom = self.n_frames - self.alpha[j] ** 2 * float(np.sum(tm * tm))
        if denom <= 0.0:
            raise NumericalError(
                "degenerate operating point: the fixed-point sensitivity "
                f"denominator is {denom:.3e}"
            )
        return self._w_diag_wh(self.m[j] ** 2) / denom

    def grad_elmmse(self) -> np.ndarray:
        n = self.w.shape[0]
        g = np.zeros((n, n), dtype=complex)
        for j, rho in enumerate(self.lam):
            c = self.sigma2_s * rho
            trace = float(np.sum(self.r_diag * self.m[j] ** 2 * self.t_eigs))
            g += c * self.alpha[j] ** 2 * trace * self.grad_delta(j)
            inner = (self.m[j][:, None] * self.r_tilde) * self.m[j][None, :]
            g -= c * self.alpha[j] * hermitian_part(
                self.w @ inner @ self.w.conj().T
            )
        return hermitian_part(g)


def smi_asymptotic(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
    tol: float = FIXED_POINT_TOL,
) -> float:
    """Large-frame sensing mutual information, in nats per interval."""
    return _Kernel(phi, pair, sigma2_s, n_frames, tol).smi()


def smi_upper_bound(phi: np.ndarray, pair: CorrelationPair, sigma2_s: float) -> float:
    """Deterministic-probe bound log det(I + (r_rx/sigma2_s) (x) T(Phi)).

    Attained exactly when the probing frames are orthonormal rows.
    """
    kern = _Kernel(phi, pair, sigma2_s, n_frames=max(phi.shape[0], 1))
    return kern.smi_upper()


def smi_lower_bound(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
) -> float:
    """Random-probe guarantee: a (1 - r/n_frames) fraction of the upper bound.

    r is the effective number of illuminated directions,
    min(rank(r_tx), rank(Phi)).  Requires n_frames >= n_tx.
    """
    phi = require_hermitian(phi)
    if n_frames < phi.shape[0]:
        raise DomainError(
            f"the lower bound needs n_frames ({n_frames}) >= n_tx ({phi.shape[0]})"
        )
    r = min(numerical_rank(pair.r_tx), numerical_rank(phi))
    factor = (float(n_frames) - r) / float(n_frames)
    return factor * smi_upper_bound(phi, pair, sigma2_s)


def elmmse_asymptotic(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
    tol: float = FIXED_POINT_TOL,
) -> float:
    """Large-frame ergodic linear-MMSE trace for the stacked target channel."""
    return _Kernel(phi, pair, sigma2_s, n_frames, tol).elmmse()


def elmmse_lower_bound(
    phi: np.ndarray, pair: CorrelationPair, sigma2_s: float
) -> float:
    """Jensen bound: the LMMSE trace with the probe Gram replaced by its mean."""
    kern = _Kernel(phi, pair, sigma2_s, n_frames=max(phi.shape[0], 1))
    return kern.elmmse_lower()


def smi_ns_derivative(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
) -> float:
    """Derivative of the large-frame SMI in the (continuous) frame count.

    Nonnegative: extra probing frames never reduce sensing information.
    """
    return _Kernel(phi, pair, sigma2_s, n_frames).smi_ns_derivative()


def elmmse_ns_derivative(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
) -> float:
    """Derivative of the large-frame ELMMSE in the frame count (<= 0)."""
    return _Kernel(phi, pair, sigma2_s, n_frames).elmmse_ns_derivative()


def support_logdet(pair: CorrelationPair) -> tuple[float, int]:
    """log det of R = r_rx (x) r_tx restricted to its nonzero eigenvalues.

    Returns (logdet, support dimension).  Eigenvalues of the Kronecker
    product are the pairwise products of the factor eigenvalues, so the
    support is resolved without assembling R.
    """
    e_rx, _ = hermitian_eig(pair.r_rx)
    e_tx, _ = hermitian_eig(pair.r_tx)
    prods = np.outer(_clip_psd_eigs(e_rx, "support_logdet"),
                     _clip_psd_eigs(e_tx, "support_logdet")).ravel()
    if prods.size == 0 or prods.max() == 0.0:
        return 0.0, 0
    keep = prods > RANK_RTOL * prods.max()
    return float(np.sum(np.log(prods[keep]))), int(np.sum(keep))


class EbcrbResult(NamedTuple):
    """Bayesian bound pair plus the prior support dimension it used."""

    logdet: float
    trace: float
    support_dim: int


def ebcrb(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
) -> EbcrbResult:
    """Large-frame ergodic Bayesian bound pair.

    The log-volume form equals the prior log det minus the sensing mutual
    information (evaluated on the prior's nonzero-eigenvalue support when the
    prior is rank deficient); the trace form coincides with the ELMMSE.
    """
    kern = _Kernel(phi, pair, sigma2_s, n_frames)
    prior_logdet, support = support_logdet(pair)
    return EbcrbResult(prior_logdet - kern.smi(), kern.elmmse(), support)


def sensing_dof(
    phi: np.ndarray,
    pair: CorrelationPair,
    n_frames: float,
    sigma_ladder: tuple[float, ...] | list[float] | np.ndarray,
) -> tuple[float, float]:
    """Low-noise information dimension n_frames * SMI / SMI_upper.

    Evaluates the ratio along a strictly decreasing ladder of noise powers
    and returns (value at the deepest rung, a two-point Richardson
    extrapolation in 1/log(1/sigma2) toward zero noise).
    """
    ladder = [float(s) for s in sigma_ladder]
    if len(ladder) == 0:
        raise DomainError("sigma_ladder must be nonempty")
    if any(s <= 0.0 for s in ladder):
        raise DomainError("sigma_ladder entries must be positive")
    if not all(b < a for a, b in zip(ladder, ladder[1:])):
        raise DomainError("sigma_ladder must be strictly decreasing")
    ratios = []
    for s2 in ladder:
        kern = _Kernel(phi, pair, s2, n_frames)
        upper = kern.smi_upper()
        if upper == 0.0:
            ratios.append(float(n_frames))
        else:
            ratios.append(float(n_frames) * kern.smi() / upper)
    if len(ratios) == 1:
        return ratios[-1], ratios[-1]
    la, lb = math.log(1.0 / ladder[-2]), math.log(1.0 / ladder[-1])
    if la <= 0.0 or lb <= 0.0 or la == lb:
        return ratios[-1], ratios[-1]
    xa, xb = 1.0 / la, 1.0 / lb
    extrapolated = ratios[-1] + (ratios[-1] - ratios[-2]) * xb / (xa - xb)
    return ratios[-1], extrapolated


def asymptotic_report(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
    sigma_ladder: tuple[float, ...] | None = None,
) -> MetricReport:
    """All closed-form metrics for one operating point in a single report."""
    kern = _Kernel(phi, pair, sigma2_s, n_frames)
    prior_logdet, support = support_logdet(pair)
    smi = kern.smi()
    dof = (
        sensing_dof(phi, pair, n_frames, sigma_ladder)
        if sigma_ladder is not None
        else None
    )
    return MetricReport(
        smi=smi,
        smi_upper=kern.smi_upper(),
        smi_lower=smi_lower_bound(phi, pair, sigma2_s, n_frames),
        elmmse=kern.elmmse(),
        elmmse_lower=kern.elmmse_lower(),
        ebcrb_logdet=prior_logdet - smi,
        ebcrb_trace=kern.elmmse(),
        dof_interval=dof,
        method="asymptotic",
        support_dim=support,
    )
