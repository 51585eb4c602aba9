"""Precoder design: projected gradient ascent and an ADMM rate-constrained
variant.

The feasible set A = {Phi Hermitian PSD, tr(Phi) <= power} appears in two
roles.  `project_feasible` is the cheap clip-and-scale map used inside the
gradient iteration; `trace_capped_projection` is the exact nearest point in
Frobenius norm (the set is unitarily invariant, so the projection reduces to
shrinking eigenvalues against a water level) and anchors the rate-constrained
projection.

`optimize_sensing` maximizes the large-frame sensing mutual information (or
its deterministic-probe upper bound) by projected gradient with Armijo
backtracking, or with a caller-fixed step.  `optimize_isac` splits the rate
constraint off via ADMM: a fixed-step inner gradient loop handles the
smooth subproblem, the splitting variable is the exact nearest feasible
point meeting the downlink rate floor, and scaled dual ascent ties them
together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotic import _Kernel
from .errors import ConvergenceError, DomainError, InfeasibleError, StallError
from .linalg import PSD_RTOL, hermitian_eig, hermitian_part, psd_clip, require_hermitian
from .scene import CommChannel, CorrelationPair, SceneConfig, build_correlations, comm_mi


@dataclass(frozen=True)
class GpSettings:
    """Projected-gradient controls.

    With fixed_step unset, each iteration backtracks from armijo_init by
    armijo_shrink until the Armijo decrease test with slope armijo_slope
    passes; fixed_step takes every step at that length without a test.
    """

    max_iters: int = 40
    grad_tol: float = 1e-10
    armijo_init: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    fixed_step: float | None = None


@dataclass(frozen=True)
class AdmmSettings:
    """ADMM controls for the rate-constrained design."""

    penalty: float = 1e4
    inner_step: float = 1.5e-4
    rate_floor: float = 0.0
    max_outer: int = 200
    primal_tol: float = 1e-4
    inner_iters: int = 10


@dataclass
class OptTrajectory:
    """Recorded optimizer run: (iteration, objective, residual) triples.

    The objective column is the loss being minimized (negative information
    for the sensing designs); the residual column is the gradient-mapping
    norm for projected gradient and the relative primal residual for ADMM.
    """

    iterates: list[tuple[int, float, float]] = field(default_factory=list)
    final_phi: np.ndarray | None = None


def project_feasible(phi: np.ndarray, power: float) -> np.ndarray:
    """Clip to PSD, then scale down to the power budget if the trace exceeds it."""
    if power <= 0.0:
        raise DomainError("power must be positive")
    clipped = psd_clip(phi)
    tr = float(np.trace(clipped).real)
    if tr > power:
        clipped = clipped * (power / tr)
    return clipped


def trace_capped_projection(phi: np.ndarray, power: float) -> np.ndarray:
    """Exact Frobenius-nearest point in {PSD, tr <= power}.

    Both constraints are spectral, so the projection keeps the eigenvectors
    and projects the eigenvalues onto the capped nonnegative simplex:
    eig -> max(eig - theta, 0) with the smallest theta >= 0 meeting the cap.
    """
    if power <= 0.0:
        raise DomainError("power must be positive")
    eigs, vecs = hermitian_eig(phi)
    pos = np.clip(eigs, 0.0, None)
    if pos.sum() <= power:
        shrunk = pos
    else:
        # water level on the sorted (descending) eigenvalues
        descending = np.sort(eigs)[::-1]
        cumulative = np.cumsum(descending)
        k = np.arange(1, eigs.size + 1)
        theta_candidates = (cumulative - power) / k
        valid = descending - theta_candidates > 0
        kk = int(np.max(np.nonzero(valid)[0])) + 1
        theta = (cumulative[kk - 1] - power) / kk
        shrunk = np.clip(eigs - theta, 0.0, None)
    return hermitian_part((vecs * shrunk) @ vecs.conj().T)


def _require_feasible(phi: np.ndarray, power: float) -> np.ndarray:
    phi = require_hermitian(phi)
    eigs, _ = hermitian_eig(phi)
    top = max(float(eigs[0]), 0.0) if eigs.size else 0.0
    if eigs.size and float(eigs[-1]) < -PSD_RTOL * max(top, 1.0):
        raise DomainError("init must be PSD")
    if float(np.trace(phi).real) > power * (1.0 + 1e-9):
        raise DomainError("init exceeds the power budget")
    return phi


def optimize_sensing(
    scene: SceneConfig,
    settings: GpSettings | None = None,
    init: np.ndarray | None = None,
    *,
    pair: CorrelationPair | None = None,
    objective: str = "asymptotic",
) -> OptTrajectory:
    """Maximize sensing information over the power-capped PSD cone.

    `objective` selects the large-frame SMI ("asymptotic") or its
    deterministic-probe upper bound ("upper_bound") as the figure of merit.
    Returns the full trajectory; with Armijo backtracking the recorded loss
    is nonincreasing, and a 50-step backtrack failure raises StallError with
    the trajectory attached.
    """
    settings = settings if settings is not None else GpSettings()
    pair = pair if pair is not None else build_correlations(scene)
    power = scene.power_budget
    if objective not in ("asymptotic", "upper_bound"):
        raise DomainError(f"unknown objective {objective!r}")

    def loss_and_grad(p: np.ndarray) -> tuple[float, np.ndarray]:
        kern = _Kernel(p, pair, scene.sigma2_s, scene.n_frames)
        if objective == "asymptotic":
            return -kern.smi(), -kern.grad_smi()
        return -kern.smi_upper(), -kern.grad_smi_upper()

    def loss_only(p: np.ndarray) -> float:
        kern = _Kernel(p, pair, scene.sigma2_s, scene.n_frames)
        return -kern.smi() if objective == "asymptotic" else -kern.smi_upper()

    phi = (
        _require_feasible(init, power)
        if init is not None
        else (power / scene.n_tx) * np.eye(scene.n_tx, dtype=complex)
    )
    trajectory = OptTrajectory()
    it = 0
    for it in range(settings.max_iters):
        loss, grad = loss_and_grad(phi)
        gmap = float(np.linalg.norm(phi - project_feasible(phi - grad, power)))
        trajectory.iterates.append((it, loss, gmap))
        if gmap < settings.grad_tol:
            break
        if settings.fixed_step is not None:
            phi = project_feasible(phi - settings.fixed_step * grad, power)
            continue
        step = settings.armijo_init
        accepted = None
        slope_rate = 0.0
        for _ in range(50):
            cand = project_feasible(phi - step * grad, power)
            move = cand - phi
            slope = float(np.trace(grad.conj().T @ move).real)
            slope_rate = slope / step
            if loss_only(cand) <= loss + settings.armijo_slope * slope + 1e-12 * (
                1.0 + abs(loss)
            ):
                accepted = cand
                break
            step *= settings.armijo_shrink
        if accepted is None:
            # The projection map rescales radially at the power cap, so its
            # limiting direction can point uphill even away from a true KKT
            # point.  A nonnegative limiting slope means the map has no
            # descent to offer: that is this method's stationarity, not a
            # line-search failure.
            if slope_rate >= -settings.grad_tol:
                break
            trajectory.final_phi = phi
            raise StallError(
                "line search exhausted 50 backtracks without sufficient decrease",
                trajectory=trajectory,
            )
        if np.array_equal(accepted, phi):
            break
        phi = accepted
    trajectory.final_phi = phi
    return trajectory


# ---------------------------------------------------------------------------
# rate-constrained nearest point


@dataclass(frozen=True)
class RateProjectionReport:
    """Solution and optimality certificates of the rate-constrained projection."""

    omega: np.ndarray
    mu: float
    rate: float
    stationarity: float
    comp_slack: float


def _comm_capacity(channel: CommChannel, power: float, sigma2_c: float) -> float:
    """Downlink capacity under the power cap (water-filling on H's modes)."""
    s = np.linalg.svd(np.asarray(channel.h, dtype=complex), compute_uv=False)
    gains = s**2 / sigma2_c
    gains = gains[gains > 0]
    if gains.size == 0:
        return 0.0
    inv = np.sort(1.0 / gains)
    # raise the water level mode by mode
    for k in range(inv.size, 0, -1):
        level = (power + inv[:k].sum()) / k
        if level > inv[k - 1]:
            p = np.clip(level - inv[:k], 0.0, None)
            return float(np.sum(np.log1p(p / inv[:k])))
    return 0.0


def _grad_comm_mi(
    channel: CommChannel, omega: np.ndarray, sigma2_c: float
) -> np.ndarray:
    h = np.asarray(channel.h, dtype=complex)
    m = np.eye(h.shape[0], dtype=complex) + hermitian_part(h @ omega @ h.conj().T) / sigma2_c
    return hermitian_part(h.conj().T @ np.linalg.solve(m, h)) / sigma2_c


def _penalized_nearest(
    target: np.ndarray,
    channel: CommChannel,
    power: float,
    mu: float,
    sigma2_c: float,
    warm: np.ndarray | None,
    tol: float,
    max_iters: int = 5000,
) -> np.ndarray:
    """argmin over {PSD, tr<=power} of 0.5||X - target||^2 - mu * rate(X).

    Accelerated projected gradient (momentum with function-value restart)
    with a backtracked curvature estimate; the unit quadratic makes the
    objective strongly convex, so acceleration handles large mu without the
    iteration count blowing up with the channel's conditioning.
    """

    def value(x: np.ndarray) -> float:
        return 0.5 * float(np.linalg.norm(x - target) ** 2) - mu * comm_mi(
            channel, x, sigma2_c
        )

    def grad(x: np.ndarray) -> np.ndarray:
        return (x - target) - mu * _grad_comm_mi(channel, x, sigma2_c)

    x = warm.copy() if warm is not None else trace_capped_projection(target, power)
    y = x
    momentum = 1.0
    lips = 1.0
    val_x = value(x)
    residual = np.inf
    for _ in range(max_iters):
        g = grad(y)
        val_y = value(y)
        for _ in range(80):
            cand = trace_capped_projection(y - g / lips, power)
            move = cand - y
            quad = float(np.linalg.norm(move) ** 2)
            lin = float(np.trace(g.conj().T @ move).real)
            if value(cand) <= val_y + lin + 0.5 * lips * quad + 1e-15 * (
                1 + abs(val_y)
            ):
                break
            lips *= 2.0
        residual = lips * float(np.linalg.norm(cand - y))
        val_cand = value(cand)
        noise = 1e-15 * (1.0 + abs(val_x))
        if val_cand > val_x + noise:
            if momentum == 1.0:
                # a plain gradient step cannot improve: numerical floor
                break
            # momentum overshot a strongly convex bowl; restart from x
            y = x
            momentum = 1.0
            continue
        momentum_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
        y = cand + ((momentum - 1.0) / momentum_new) * (cand - x)
        x, val_x, momentum = cand, val_cand, momentum_new
        if residual <= tol:
            break
    # certify stationarity at x itself, not the extrapolated point
    gx = grad(x)
    fix = trace_capped_projection(x - gx / lips, power)
    residual = lips * float(np.linalg.norm(fix - x))
    if residual <= 10.0 * tol:
        return x
    raise ConvergenceError(
        f"rate-penalized projection stalled above tol={tol:.1e}",
        residual=residual,
    )


def rate_projection_report(
    target: np.ndarray,
    channel: CommChannel,
    power: float,
    rate_floor: float,
    sigma2_c: float,
    *,
    warm_mu: float | None = None,
    warm_omega: np.ndarray | None = None,
    slack_tol: float = 1e-9,
    inner_tol: float = 1e-9,
) -> RateProjectionReport:
    """Nearest feasible point with certificates; see project_rate_constrained."""
    target = require_hermitian(target)
    if rate_floor < 0.0:
        raise DomainError("rate_floor must be nonnegative")
    scale = max(1.0, float(np.linalg.norm(target)))
    tol = inner_tol * scale
    base = trace_capped_projection(target, power)
    base_rate = comm_mi(channel, base, sigma2_c)
    if rate_floor == 0.0 or base_rate >= rate_floor - slack_tol:
        stat = _stationarity(base, target, channel, 0.0, power, sigma2_c)
        return RateProjectionReport(
            omega=base, mu=0.0, rate=base_rate, stationarity=stat, comp_slack=0.0
        )
    capacity = _comm_capacity(channel, power, sigma2_c)
    if capacity < rate_floor - 1e-9:
        raise InfeasibleError(
            f"rate floor {rate_floor:.6g} nats exceeds the downlink capacity "
            f"{capacity:.6g} nats under the power budget"
        )
    # bracket the multiplier
    lo = 0.0
    hi = warm_mu if warm_mu and warm_mu > 0 else 1.0
    omega = warm_omega if warm_omega is not None else base
    for _ in range(80):
        omega = _penalized_nearest(target, channel, power, hi, sigma2_c, omega, tol)
        if comm_mi(channel, omega, sigma2_c) >= rate_floor:
            break
        lo = hi
        hi *= 2.0
    else:
        raise ConvergenceError("rate-constraint multiplier bracket did not close")
    best = (hi, omega, comm_mi(channel, omega, sigma2_c))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        omega = _penalized_nearest(target, channel, power, mid, sigma2_c, omega, tol)
        rate = comm_mi(channel, omega, sigma2_c)
        if rate >= rate_floor:
            hi = mid
            best = (mid, omega, rate)
            if rate - rate_floor <= slack_tol:
                break
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    mu, omega, rate = best
    stat = _stationarity(omega, target, channel, mu, power, sigma2_c)
    return RateProjectionReport(
        omega=omega,
        mu=mu,
        rate=rate,
        stationarity=stat,
        comp_slack=abs(mu * (rate - rate_floor)),
    )


def _stationarity(
    omega: np.ndarray,
    target: np.ndarray,
    channel: CommChannel,
    mu: float,
    power: float,
    sigma2_c: float,
) -> float:
    grad = (omega - target) - mu * _grad_comm_mi(channel, omega, sigma2_c)
    return float(np.linalg.norm(omega - trace_capped_projection(omega - grad, power)))


def project_rate_constrained(
    target: np.ndarray,
    channel: CommChannel,
    power: float,
    rate_floor: float,
    sigma2_c: float,
) -> np.ndarray:
    """Frobenius-nearest Hermitian PSD matrix under the power cap whose
    downlink mutual information meets `rate_floor` (nats).

    Solved by bisection on the rate multiplier; each fixed-multiplier
    subproblem is strongly convex and handled by projected gradient with the
    exact spectral projection.  Raises InfeasibleError when the floor
    exceeds downlink capacity at this power.
    """
    return rate_projection_report(target, channel, power, rate_floor, sigma2_c).omega


def optimize_isac(
    scene: SceneConfig,
    channel: CommChannel,
    settings: AdmmSettings | None = None,
    init: np.ndarray | None = None,
    *,
    pair: CorrelationPair | None = None,
) -> OptTrajectory:
    """Rate-constrained sensing design by ADMM splitting.

    Alternates a fixed-step inner gradient loop on the penalized sensing
    objective, the exact rate-constrained projection for the splitting
    variable, and a scaled dual update; stops when the relative primal
    residual AND the relative dual residual (movement of the splitting
    variable between outer rounds) both drop below settings.primal_tol.
    The primal residual alone is blind to progress: whenever the rate
    constraint is inactive the projection returns the iterate unchanged and
    the residual is identically zero.  The returned final point is
    the splitting variable, so it is feasible for both the power and rate
    constraints.  Raises InfeasibleError when the floor is unreachable at
    the uniform precoder.
    """
    settings = settings if settings is not None else AdmmSettings()
    pair = pair if pair is not None else build_correlations(scene)
    power = scene.power_budget
    uniform = (power / scene.n_tx) * np.eye(scene.n_tx, dtype=complex)
    if settings.rate_floor > 0.0:
        reachable = comm_mi(channel, uniform, scene.sigma2_c)
        if reachable < settings.rate_floor - 1e-9:
            raise InfeasibleError(
                f"rate floor {settings.rate_floor:.6g} nats exceeds the uniform-"
                f"precoder rate {reachable:.6g} nats; no reference feasible point"
            )
    phi = _require_feasible(init, power) if init is not None else uniform.copy()
    dual = np.zeros_like(phi)
    report = rate_projection_report(
        phi, channel, power, settings.rate_floor, scene.sigma2_c
    )
    omega = report.omega
    warm_mu = report.mu
    trajectory = OptTrajectory()
    for outer in range(settings.max_outer):
        for _ in range(settings.inner_iters):
            kern = _Kernel(phi, pair, scene.sigma2_s, scene.n_frames)
            grad = -kern.grad_smi() + settings.penalty * (phi - omega + dual)
            phi = project_feasible(phi - settings.inner_step * grad, power)
        report = rate_projection_report(
            phi + dual,
            channel,
            power,
            settings.rate_floor,
            scene.sigma2_c,
            warm_mu=warm_mu,
            warm_omega=omega,
        )
        omega_prev = omega
        omega = report.omega
        warm_mu = report.mu
        dual = dual + phi - omega
        scale = max(float(np.linalg.norm(phi)), 1e-30)
        primal = float(np.linalg.norm(phi - omega)) / scale
        settled = float(np.linalg.norm(omega - omega_prev)) / scale
        loss = -_Kernel(phi, pair, scene.sigma2_s, scene.n_frames).smi()
        trajectory.iterates.append((outer, loss, primal))
        if primal < settings.primal_tol and settled < settings.primal_tol:
            break
    trajectory.final_phi = omega
    return trajectory
