"""Experiment configuration: key = value text files -> ExperimentSpec.

The format is deliberately small: one `key = value` pair per line, `#`
starts a comment, values are numbers, names, or comma-separated lists.
Every parse failure is a ConfigError naming the key, the violated
constraint, and the line it came from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .optimize import AdmmSettings, GpSettings
from .scene import STREAM_ANGLES, SceneConfig, stream_rng

COMMANDS = (
    "metrics",
    "validate",
    "sweep-ns",
    "sweep-k",
    "sweep-power",
    "dof",
    "optimize-sensing",
    "optimize-isac",
    "tradeoff",
)

# commands whose grid key is mandatory, with the meaning of a grid entry
_GRID_COMMANDS = {
    "validate": "n_frames value",
    "sweep-ns": "n_frames value",
    "sweep-k": "target count",
    "sweep-power": "power in dBm",
    "tradeoff": "rate floor",
}

_KNOWN_KEYS = {
    "command",
    "n_tx",
    "n_rx",
    "n_frames",
    "n_targets",
    "power_dbm",
    "sigma2_s_dbm",
    "sigma2_c_dbm",
    "seed",
    "n_comm",
    "antenna_spacing",
    "target_gains",
    "angles_tx_deg",
    "angles_rx_deg",
    "angle_range_deg",
    "mc_trials",
    "grid",
    "sigma_ladder_dbm",
    "format",
    "output",
    "comm_snr_db",
    "rate_floor",
    "rate_unit",
    "gp_max_iters",
    "gp_grad_tol",
    "gp_fixed_step",
    "admm_penalty",
    "admm_inner_step",
    "admm_max_outer",
    "admm_primal_tol",
    "admm_inner_iters",
}


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved experiment description.

    `rate_floor` and tradeoff grid entries are stored in nats regardless of
    the configured rate_unit.  `resolved` holds every effective key/value
    (defaults filled in, angles as drawn) for the run manifest.
    """

    scene: SceneConfig
    command: str
    grid: tuple[float, ...] | None
    sigma_ladder: tuple[float, ...] | None
    mc_trials: int
    output_path: str
    format: str
    comm_snr_db: float
    rate_floor: float
    rate_unit: str
    angle_range: tuple[float, float] | None
    gp: GpSettings
    admm: AdmmSettings
    resolved: dict


class _Raw:
    """Key/value table with line anchors."""

    def __init__(self, text: str):
        self.values: dict[str, str] = {}
        self.lines: dict[str, int] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ConfigError(f"line {lineno}: missing key before '='")
            if key in self.values:
                raise ConfigError(
                    f"line {lineno}: duplicate key {key!r} "
                    f"(first set on line {self.lines[key]})"
                )
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if not value:
                raise ConfigError(f"line {lineno}: key {key!r} has no value")
            self.values[key] = value
            self.lines[key] = lineno

    def where(self, key: str) -> str:
        return f"line {self.lines[key]}: {key}" if key in self.lines else key

    def fail(self, key: str, constraint: str):
        raise ConfigError(f"{self.where(key)} {constraint}")

    def _get(self, key: str, conv, typename: str, default):
        if key not in self.values:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return conv(self.values[key])
        except (ValueError, TypeError):
            self.fail(key, f"= {self.values[key]!r} is not a valid {typename}")

    def integer(self, key: str, default=None):
        return self._get(key, int, "integer", default)

    def real(self, key: str, default=None):
        return self._get(key, _finite_float, "number", default)

    def word(self, key: str, default=None):
        return self._get(key, str, "string", default)

    def real_list(self, key: str, default=None):
        conv = lambda s: tuple(_finite_float(p) for p in s.split(","))
        return self._get(key, conv, "comma-separated number list", default)


_REQUIRED = object()


def _finite_float(s: str) -> float:
    x = float(s)
    if not math.isfinite(x):
        raise ValueError(s)
    return x


def draw_angles(
    seed: int, lo: float, hi: float, count: int
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Deterministic uniform angle draws (radians) on the angle stream.

    The stream is keyed by the target count, so a scene with K targets gets
    the same angles whether it is a standalone run or one point of a target-
    count sweep.
    """
    rng = stream_rng(seed, STREAM_ANGLES, count)
    tx = tuple(float(a) for a in rng.uniform(lo, hi, size=count))
    rx = tuple(float(a) for a in rng.uniform(lo, hi, size=count))
    return tx, rx


def parse_config(
    text: str,
    *,
    seed: int | None = None,
    mc_trials: int | None = None,
    output: str | None = None,
    fmt: str | None = None,
) -> ExperimentSpec:
    """Parse a key = value config document into an ExperimentSpec.

    The keyword arguments are command-line overrides applied before the
    scene is built, so a seed override also re-draws range-configured
    angles.  Unknown keys, duplicates, malformed numbers, and violated
    constraints all raise ConfigError with the offending line number.
    """
    raw = _Raw(text)

    command = raw.word("command", _REQUIRED)
    if command not in COMMANDS:
        raw.fail("command", f"= {command!r} is not one of {', '.join(COMMANDS)}")

    n_tx = raw.integer("n_tx", _REQUIRED)
    n_rx = raw.integer("n_rx", _REQUIRED)
    n_frames = raw.integer("n_frames", _REQUIRED)
    n_targets = raw.integer("n_targets", _REQUIRED)
    for key, val in (("n_tx", n_tx), ("n_rx", n_rx), ("n_frames", n_frames)):
        if val < 1:
            raw.fail(key, f"= {val} must be a positive integer")
    if n_targets < 0:
        raw.fail("n_targets", f"= {n_targets} must be nonnegative")
    if n_frames < n_tx:
        raw.fail(
            "n_frames",
            f"= {n_frames} violates N_S >= N_T: need at least n_tx = {n_tx} "
            "frames per processing interval",
        )

    power_dbm = raw.real("power_dbm", _REQUIRED)
    sigma2_s_dbm = raw.real("sigma2_s_dbm", _REQUIRED)
    sigma2_c_dbm = raw.real("sigma2_c_dbm", sigma2_s_dbm)
    eff_seed = seed if seed is not None else raw.integer("seed", 0)
    if eff_seed < 0:
        raw.fail("seed", "must be nonnegative")
    n_comm = raw.integer("n_comm", 4)
    if n_comm < 1:
        raw.fail("n_comm", "must be a positive integer")
    spacing = raw.real("antenna_spacing", 0.5)
    if spacing <= 0:
        raw.fail("antenna_spacing", "must be positive")

    gains = raw.real_list("target_gains", tuple([1.0] * n_targets))
    if len(gains) != n_targets:
        raw.fail(
            "target_gains",
            f"lists {len(gains)} values but n_targets = {n_targets}",
        )
    if any(g <= 0 for g in gains):
        raw.fail("target_gains", "entries must be positive")

    angle_range_deg, angle_range, angles_tx, angles_rx = _resolve_angles(
        raw, n_targets, eff_seed
    )
    if command == "sweep-k" and angle_range is None:
        raw.fail(
            "angles_tx_deg",
            "explicit angle lists cannot follow a target-count sweep; "
            "use angle_range_deg",
        )

    trials = mc_trials if mc_trials is not None else raw.integer("mc_trials", 5000)
    if trials < 2:
        raw.fail("mc_trials", "must be at least 2")

    out_format = fmt if fmt is not None else raw.word("format", "csv")
    if out_format not in ("csv", "json"):
        raw.fail("format", f"= {out_format!r} must be csv or json")
    output_path = output if output is not None else raw.word("output", "results.csv")

    rate_unit = raw.word("rate_unit", "nats")
    if rate_unit not in ("nats", "bits"):
        raw.fail("rate_unit", f"= {rate_unit!r} must be nats or bits")
    unit_scale = math.log(2.0) if rate_unit == "bits" else 1.0
    rate_floor = raw.real("rate_floor", 0.0)
    if rate_floor < 0:
        raw.fail("rate_floor", "must be nonnegative")
    rate_floor *= unit_scale

    grid = raw.real_list("grid", None)
    if command in _GRID_COMMANDS:
        if grid is None:
            raise ConfigError(
                f"command {command!r} requires the grid key "
                f"(each entry: one {_GRID_COMMANDS[command]})"
            )
        if len(grid) == 0:
            raw.fail("grid", "must be nonempty")
        if command in ("validate", "sweep-ns"):
            bad = [g for g in grid if g != int(g) or int(g) < n_tx]
            if bad:
                raw.fail(
                    "grid",
                    f"entries must be integers >= n_tx = {n_tx} "
                    f"(frame counts); got {bad[0]!r}",
                )
        if command == "sweep-k":
            bad = [g for g in grid if g != int(g) or int(g) < 1]
            if bad:
                raw.fail("grid", f"entries must be positive integer target counts; got {bad[0]!r}")
        if command == "tradeoff":
            if any(g < 0 for g in grid):
                raw.fail("grid", "rate floors must be nonnegative")
            grid = tuple(g * unit_scale for g in grid)

    ladder = raw.real_list("sigma_ladder_dbm", None)
    sigma_ladder = None
    if command == "dof":
        if ladder is None:
            raise ConfigError(
                "command 'dof' requires the sigma_ladder_dbm key "
                "(decreasing noise powers in dBm)"
            )
        if len(ladder) < 2:
            raw.fail("sigma_ladder_dbm", "needs at least two rungs")
        if not all(b < a for a, b in zip(ladder, ladder[1:])):
            raw.fail("sigma_ladder_dbm", "must be strictly decreasing")
        sigma_ladder = tuple(dbm_to_watts(x) for x in ladder)

    comm_snr_db = raw.real("comm_snr_db", 10.0)

    gp = GpSettings(
        max_iters=raw.integer("gp_max_iters", GpSettings.max_iters),
        grad_tol=raw.real("gp_grad_tol", GpSettings.grad_tol),
        fixed_step=raw.real("gp_fixed_step", None),
    )
    if gp.max_iters < 1:
        raw.fail("gp_max_iters", "must be a positive integer")
    admm = AdmmSettings(
        penalty=raw.real("admm_penalty", AdmmSettings.penalty),
        inner_step=raw.real("admm_inner_step", AdmmSettings.inner_step),
        rate_floor=rate_floor,
        max_outer=raw.integer("admm_max_outer", AdmmSettings.max_outer),
        primal_tol=raw.real("admm_primal_tol", AdmmSettings.primal_tol),
        inner_iters=raw.integer("admm_inner_iters", AdmmSettings.inner_iters),
    )
    for key, val in (
        ("admm_penalty", admm.penalty),
        ("admm_inner_step", admm.inner_step),
        ("admm_primal_tol", admm.primal_tol),
    ):
        if val <= 0:
            raw.fail(key, "must be positive")
    if admm.max_outer < 1:
        raw.fail("admm_max_outer", "must be a positive integer")
    if admm.inner_iters < 1:
        raw.fail("admm_inner_iters", "must be a positive integer")

    scene = SceneConfig(
        n_tx=n_tx,
        n_rx=n_rx,
        n_frames=n_frames,
        n_targets=n_targets,
        sigma2_s=dbm_to_watts(sigma2_s_dbm),
        power_budget=dbm_to_watts(power_dbm),
        target_angles_tx=angles_tx,
        target_angles_rx=angles_rx,
        target_gains=gains,
        n_comm=n_comm,
        sigma2_c=dbm_to_watts(sigma2_c_dbm),
        antenna_spacing=spacing,
        seed=eff_seed,
    )

    resolved = {
        "command": command,
        "n_tx": n_tx,
        "n_rx": n_rx,
        "n_frames": n_frames,
        "n_targets": n_targets,
        "power_dbm": power_dbm,
        "sigma2_s_dbm": sigma2_s_dbm,
        "sigma2_c_dbm": sigma2_c_dbm,
        "seed": eff_seed,
        "n_comm": n_comm,
        "antenna_spacing": spacing,
        "target_gains": list(gains),
        "angles_tx_deg": [math.degrees(a) for a in angles_tx],
        "angles_rx_deg": [math.degrees(a) for a in angles_rx],
        "angle_range_deg": list(angle_range_deg) if angle_range_deg else None,
        "mc_trials": trials,
        "grid": list(grid) if grid is not None else None,
        "sigma_ladder_dbm": list(ladder) if ladder is not None else None,
        "format": out_format,
        "output": output_path,
        "comm_snr_db": comm_snr_db,
        "rate_floor_nats": rate_floor,
        "rate_unit": rate_unit,
        "gp_max_iters": gp.max_iters,
        "gp_grad_tol": gp.grad_tol,
        "gp_fixed_step": gp.fixed_step,
        "admm_penalty": admm.penalty,
        "admm_inner_step": admm.inner_step,
        "admm_max_outer": admm.max_outer,
        "admm_primal_tol": admm.primal_tol,
        "admm_inner_iters": admm.inner_iters,
    }

    return ExperimentSpec(
        scene=scene,
        command=command,
        grid=tuple(grid) if grid is not None else None,
        sigma_ladder=sigma_ladder,
        mc_trials=trials,
        output_path=output_path,
        format=out_format,
        comm_snr_db=comm_snr_db,
        rate_floor=rate_floor,
        rate_unit=rate_unit,
        angle_range=angle_range,
        gp=gp,
        admm=admm,
        resolved=resolved,
    )


def _resolve_angles(raw: _Raw, n_targets: int, seed: int):
    """Explicit angle lists, or uniform draws from a configured range."""
    tx_deg = raw.real_list("angles_tx_deg", None)
    rx_deg = raw.real_list("angles_rx_deg", None)
    rng_deg = raw.real_list("angle_range_deg", None)
    if rng_deg is not None and (tx_deg is not None or rx_deg is not None):
        raw.fail("angle_range_deg", "cannot be combined with explicit angle lists")
    if (tx_deg is None) != (rx_deg is None):
        key = "angles_tx_deg" if tx_deg is not None else "angles_rx_deg"
        raw.fail(key, "needs its counterpart list (both sides or neither)")
    if tx_deg is not None:
        for key, vals in (("angles_tx_deg", tx_deg), ("angles_rx_deg", rx_deg)):
            if len(vals) != n_targets:
                raw.fail(
                    key, f"lists {len(vals)} values but n_targets = {n_targets}"
                )
        return (
            None,
            None,
            tuple(math.radians(a) for a in tx_deg),
            tuple(math.radians(a) for a in rx_deg),
        )
    if rng_deg is None:
        rng_deg = (30.0, 60.0)
    if len(rng_deg) != 2 or not rng_deg[0] < rng_deg[1]:
        raw.fail("angle_range_deg", "must be two increasing values lo,hi")
    lo, hi = math.radians(rng_deg[0]), math.radians(rng_deg[1])
    tx, rx = draw_angles(seed, lo, hi, n_targets)
    return (rng_deg[0], rng_deg[1]), (lo, hi), tx, rx
