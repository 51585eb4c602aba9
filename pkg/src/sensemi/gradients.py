"""Closed-form matrix gradients and the finite-difference harness.

All gradients follow the convention d f = tr(G dPhi) for Hermitian
perturbations, which makes G itself Hermitian.  A process-wide scale factor
kappa in {1, 2} is calibrated once on the linear probe f(Phi) = tr(A Phi)
and then required to explain every later finite-difference check; mixing
conventions across metrics raises instead of silently passing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .asymptotic import _Kernel, _fixed_point_eigs
from .errors import ConventionError, DomainError, NumericalError
from .linalg import hermitian_eig, hermitian_part, psd_sqrt, require_hermitian
from .scene import CorrelationPair

_FD_STEP_REL = 1e-5
_CAL_SEED = 0x5EED


@dataclass(frozen=True)
class GradientReport:
    """Claimed gradient at a point plus its finite-difference verdict."""

    grad: np.ndarray
    kappa: int
    fd_relative_error: float


def grad_smi(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
) -> np.ndarray:
    """Gradient of the large-frame SMI in Phi; Hermitian PSD."""
    return _Kernel(phi, pair, sigma2_s, n_frames).grad_smi()


def grad_smi_upper(
    phi: np.ndarray, pair: CorrelationPair, sigma2_s: float
) -> np.ndarray:
    """Gradient of the deterministic-probe SMI bound in Phi; Hermitian PSD."""
    kern = _Kernel(phi, pair, sigma2_s, n_frames=max(phi.shape[0], 1))
    return kern.grad_smi_upper()


def grad_elmmse(
    phi: np.ndarray,
    pair: CorrelationPair,
    sigma2_s: float,
    n_frames: float,
) -> np.ndarray:
    """Gradient of the large-frame ELMMSE in Phi (descent direction for error)."""
    return _Kernel(phi, pair, sigma2_s, n_frames).grad_elmmse()


def grad_delta(
    phi: np.ndarray,
    r_tx: np.ndarray,
    rho: float,
    n_frames: float,
) -> np.ndarray:
    """Gradient of the fixed-point solution delta(rho) in Phi.

    Hermitian PSD with a strictly positive sensitivity denominator
    n_frames - alpha^2 tr((T M)^2); a nonpositive denominator marks a
    degenerate operating point and raises.
    """
    if rho < 0.0:
        raise DomainError("rho must be nonnegative")
    if n_frames <= 0:
        raise DomainError("n_frames must be positive")
    root = psd_sqrt(r_tx)
    t = hermitian_part(root @ require_hermitian(phi) @ root)
    eigs, vecs = hermitian_eig(t)
    eigs = np.clip(eigs, 0.0, None)
    delta, _, _ = _fixed_point_eigs(eigs, float(rho), float(n_frames))
    alpha = float(rho) / (1.0 + float(rho) * delta)
    m = 1.0 / (1.0 + alpha * eigs)
    tm = eigs * m
    denom = float(n_frames) - alpha**2 * float(np.sum(tm * tm))
    if denom <= 0.0:
        raise NumericalError(
            f"degenerate instance: fixed-point sensitivity denominator {denom:.3e}"
        )
    w = root @ vecs
    return hermitian_part((w * m**2) @ w.conj().T) / denom


_calibrated_kappa: int | None = None


def wirtinger_scale() -> int:
    """Process-wide derivative convention factor, calibrated once.

    Differences f(Phi) = tr(A Phi) along Hermitian directions and picks the
    kappa in {1, 2} with d f = kappa * tr(A E).  Cached for the process
    lifetime so every later check shares one convention.
    """
    global _calibrated_kappa
    if _calibrated_kappa is not None:
        return _calibrated_kappa
    rng = np.random.default_rng(_CAL_SEED)
    n = 4
    a = hermitian_part(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    phi = np.eye(n, dtype=complex)

    def metric(p: np.ndarray) -> float:
        return float(np.trace(a @ p).real)

    best_kappa, best_err = None, np.inf
    for _ in range(4):
        e = hermitian_part(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        e /= np.linalg.norm(e)
        t = 1e-6
        fd = (metric(phi + t * e) - metric(phi - t * e)) / (2.0 * t)
        pred = float(np.trace(a @ e).real)
        for kappa in (1, 2):
            err = abs(fd - kappa * pred) / max(abs(fd), abs(pred), 1e-30)
            if err < best_err:
                best_kappa, best_err = kappa, err
    if best_kappa is None or best_err > 1e-6:
        raise ConventionError(
            f"no derivative convention in {{1, 2}} explains the linear probe "
            f"(best relative error {best_err:.3e})"
        )
    _calibrated_kappa = best_kappa
    return _calibrated_kappa


def fd_check(
    metric: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    phi: np.ndarray,
    directions: int = 5,
    rng: np.random.Generator | None = None,
    step_rel: float = _FD_STEP_REL,
    tol: float = 1e-6,
) -> GradientReport:
    """Central-difference audit of a claimed gradient at one point.

    Per random Hermitian unit direction E, compares
    (f(Phi + tE) - f(Phi - tE)) / 2t against kappa * tr(G E) with the
    process-calibrated kappa.  Raises ConventionError if no kappa in {1, 2}
    fits within `tol`, or if one fits but disagrees with the calibration.
    """
    if directions < 1:
        raise DomainError("directions must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    phi = require_hermitian(phi)
    g = grad(phi) if callable(grad) else np.asarray(grad, dtype=complex)
    g = require_hermitian(g)
    n = phi.shape[0]
    t = step_rel * max(1.0, float(np.linalg.norm(phi)))
    f0 = abs(float(metric(phi)))
    errs = {1: 0.0, 2: 0.0}
    for _ in range(directions):
        e = hermitian_part(
            rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        )
        e /= np.linalg.norm(e)
        fd = (float(metric(phi + t * e)) - float(metric(phi - t * e))) / (2.0 * t)
        pred = float(np.trace(g @ e).real)
        denom = max(abs(fd), abs(pred), 1e-9 * (1.0 + f0))
        for kappa in (1, 2):
            errs[kappa] = max(errs[kappa], abs(fd - kappa * pred) / denom)
    kappa_cal = wirtinger_scale()
    if errs[kappa_cal] <= tol:
        return GradientReport(grad=g, kappa=kappa_cal, fd_relative_error=errs[kappa_cal])
    other = 3 - kappa_cal
    if errs[other] <= tol:
        raise ConventionError(
            f"gradient fits kappa={other} but the process calibration fixed "
            f"kappa={kappa_cal}; conventions must not vary across metrics"
        )
    raise ConventionError(
        "no derivative convention in {1, 2} fits: relative errors "
        f"kappa=1: {errs[1]:.3e}, kappa=2: {errs[2]:.3e} (tol {tol:.1e})"
    )
