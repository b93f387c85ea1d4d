"""Fixed-step co-simulation of the tank network, its event triggers and the LoRaWAN link."""

from __future__ import annotations

import heapq
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .airtime import ConfigurationError, RadioConfig, TimingProfile
from .link import EndDeviceState, SimulationError, try_transmit
from .plant import (
    VALVE_MAX_DEG,
    VALVE_STEP_DEG,
    Disturbance,
    Mode,
    PlantConfig,
    TriggerConfig,
    controller_update,
    evaluate_mode_switch,
)
from .trace import RecordKind, TraceRecord

# Excursions below this (percent of band width) print as 0.00 and count as inside the band.
BAND_TOLERANCE_PCT = 0.005


@dataclass(frozen=True)
class ScenarioConfig:
    # None selects an ideal link: no airtime, no receive delay, no duty cycle
    radio: RadioConfig | None = field(default_factory=RadioConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    disturbance: Disturbance | None = None
    horizon_s: float = 600.0
    dt_ms: int = 1
    sample_every_ms: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.dt_ms <= 0:
            raise ConfigurationError("dt_ms must be > 0")
        if self.trigger.h_ms % self.dt_ms:
            raise ConfigurationError("dt_ms must divide trigger.h_ms")
        total_ms = self.horizon_s * 1000
        if total_ms <= 0 or total_ms != int(total_ms) or int(total_ms) % self.dt_ms:
            raise ConfigurationError("horizon_s * 1000 must be a positive multiple of dt_ms")
        if self.sample_every_ms <= 0 or self.sample_every_ms % self.dt_ms:
            raise ConfigurationError("sample_every_ms must be a positive multiple of dt_ms")
        if self.disturbance is not None:
            d = self.disturbance
            if d.tank_index >= len(self.plant.setpoint):
                raise ConfigurationError("disturbance tank_index out of range")
            # on/off edges are applied at step boundaries only
            for name, value in (("start_s", d.start_s), ("duration_s", d.duration_s)):
                steps = value * 1000 / self.dt_ms
                if value < 0 or abs(steps - round(steps)) > 1e-9:
                    raise ConfigurationError(f"disturbance {name} must be a non-negative multiple of dt_ms")

    @property
    def timing(self) -> TimingProfile:
        if self.radio is None:
            return TimingProfile.ideal()
        return TimingProfile.from_radio(self.radio)


@dataclass
class RunMetrics:
    max_deviation_pct: tuple[float, ...]
    events_triggered: int = 0
    events_delivered: int = 0
    events_dropped_busy: int = 0
    events_dropped_blackout: int = 0
    mode_switch_times: list[float] = field(default_factory=list)
    settle_time_s: float | None = None

    @property
    def events_lost(self) -> int:
        return self.events_dropped_busy + self.events_dropped_blackout


@dataclass
class SimResult:
    metrics: RunMetrics
    trace: list[TraceRecord]
    # levels at every grid instant, shape (steps + 1, n); only when requested
    trajectory: np.ndarray | None = None


def excursion_pct(level: float, safe_band: tuple[float, float]) -> float:
    lo, hi = safe_band
    if level < lo:
        return (lo - level) / (hi - lo) * 100.0
    if level > hi:
        return (level - hi) / (hi - lo) * 100.0
    return 0.0


def deviation_pct(trajectory, safe_band=(0.03, 0.06)) -> np.ndarray:
    """Worst excursion outside ``safe_band`` per tank, in percent of the band width.

    ``trajectory`` is a (samples, tanks) array of levels, or a list of
    ``Sample`` trace records carrying an ``xi`` entry.
    """
    if isinstance(trajectory, list) and trajectory and isinstance(trajectory[0], TraceRecord):
        trajectory = [r.data["xi"] for r in trajectory if r.kind is RecordKind.SAMPLE]
    levels = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if levels.size == 0:
        raise ValueError("trajectory is empty")
    lo, hi = safe_band
    excess = np.maximum(lo - levels, 0.0) + np.maximum(levels - hi, 0.0)
    return excess.max(axis=0) / (hi - lo) * 100.0


def run(cfg: ScenarioConfig, keep_trajectory: bool = False) -> SimResult:
    profile = cfg.timing
    plant = cfg.plant
    trig = cfg.trigger
    n = len(plant.setpoint)
    setpoint = np.asarray(plant.setpoint, dtype=float)
    modes = {Mode.WEAK: plant.weak, Mode.POWERFUL: plant.powerful}
    b_rows = {m: modes[m].B.tolist() for m in modes}
    outflow = {m: modes[m].outflow.tolist() for m in modes}
    n_channels = cfg.radio.n_channels if cfg.radio is not None else 1

    dt_us = cfg.dt_ms * 1000
    dt_s = dt_us / 1e6
    h_us = trig.h_ms * 1000
    sample_us = cfg.sample_every_ms * 1000
    n_steps = round(cfg.horizon_s * 1000) // cfg.dt_ms
    lo, hi = trig.safe_band
    width = hi - lo
    eta, h_low = trig.eta, trig.h_low
    switch_on_plant = trig.mode_switch_source == "plant"
    if np.any(plant.weak.A) or np.any(plant.powerful.A):
        raise ConfigurationError("the simulation loop requires A = 0 in both modes")
    k_p = plant.powerful.K.tolist()
    alpha_p = plant.powerful.valve_bias.tolist()
    ref_list = setpoint.tolist()

    dist = cfg.disturbance
    if dist is not None:
        dist_on = round(dist.start_s * 1e6)
        dist_off = dist_on + round(dist.duration_s * 1e6)
        dist_tank, dist_rate = dist.tank_index, dist.rate
    w = [0.0] * n

    xi = [float(x) for x in plant.initial_levels]
    mode = plant.initial_mode
    held = [0.0] * n
    # the controller is commissioned with the initial levels: no event at t = 0
    xhat = np.asarray(xi, dtype=float)
    reference = list(xi)
    devices = [EndDeviceState(j, n_channels) for j in range(n)]
    pending: list = []
    seq = itertools.count()
    trace: list[TraceRecord] = []
    metrics = RunMetrics(max_deviation_pct=(0.0,) * n)
    max_exc = [0.0] * n
    last_out_us = None
    traj = np.empty((n_steps + 1, n)) if keep_trajectory else None

    def rates():
        b = b_rows[mode]
        q = outflow[mode]
        return [
            sum(b[j][i] * held[i] for i in range(n)) - q[j] + w[j] for j in range(n)
        ]

    rate = rates()

    def handle(ev):
        nonlocal mode, rate
        t_ev, _, kind, j, value = ev
        if kind == "up":
            xhat[j] = value
            trace.append(TraceRecord(t_ev, RecordKind.UPLINK_DONE, j, {"xi": value}))
            if not switch_on_plant:
                new_mode = evaluate_mode_switch(mode, xhat, trig, plant.powerful, setpoint)
                if new_mode is not mode:
                    switch_mode(t_ev, new_mode, j)
            cmd = float(controller_update(xhat, modes[mode], setpoint)[j])
            heapq.heappush(pending, (t_ev + profile.rtt_us - profile.toa_us, next(seq), "down", j, cmd))
        else:
            held[j] = value
            rate = rates()
            trace.append(TraceRecord(t_ev, RecordKind.DOWNLINK_DONE, j, {"valve_deg": value}))

    def switch_mode(t_ev, new_mode, source):
        nonlocal mode, rate
        mode = new_mode
        rate = rates()
        metrics.mode_switch_times.append(t_ev / 1e6)
        trace.append(TraceRecord(t_ev, RecordKind.MODE_SWITCH, source, {"mode": mode.value}))

    def plant_wants_weak():
        total = 0.0
        for i in range(n):
            u = alpha_p[i] + sum(k_p[i][c] * (ref_list[c] - xi[c]) for c in range(n))
            u = 0.0 if u < 0.0 else (VALVE_MAX_DEG if u > VALVE_MAX_DEG else u)
            total += math.ceil(u / VALVE_STEP_DEG - 0.5) * VALVE_STEP_DEG
        return total < VALVE_MAX_DEG

    def check_finite(t_us):
        if not all(math.isfinite(x) for x in xi):
            raise SimulationError(f"plant state blew up at t={t_us / 1e6:.3f} s", t_us=t_us, state=list(xi))

    for k in range(n_steps + 1):
        t = k * dt_us
        while pending and pending[0][0] <= t:
            handle(heapq.heappop(pending))

        if t % h_us == 0:
            if switch_on_plant:
                if mode is Mode.WEAK:
                    if any(x <= h_low for x in xi):
                        switch_mode(t, Mode.POWERFUL, -1)
                elif plant_wants_weak():
                    switch_mode(t, Mode.WEAK, -1)
            for j in range(n):
                x = xi[j]
                ref = reference[j]
                if not (ref != ref or abs(x - ref) > eta):
                    continue
                metrics.events_triggered += 1
                trace.append(TraceRecord(t, RecordKind.TRIGGER, j, {"xi": x}))
                out = try_transmit(devices[j], t, profile)
                if out.delivered:
                    reference[j] = x
                    metrics.events_delivered += 1
                    trace.append(
                        TraceRecord(
                            t,
                            RecordKind.UPLINK_START,
                            j,
                            {
                                "channel": out.channel_id,
                                "toa_us": profile.toa_us,
                                "uplink_done_us": out.uplink_done,
                                "downlink_done_us": out.downlink_done,
                            },
                        )
                    )
                    heapq.heappush(pending, (out.uplink_done, next(seq), "up", j, x))
                elif out.kind.value == "DroppedBusy":
                    metrics.events_dropped_busy += 1
                    trace.append(TraceRecord(t, RecordKind.DROP_BUSY, j))
                else:
                    metrics.events_dropped_blackout += 1
                    trace.append(TraceRecord(t, RecordKind.DROP_BLACKOUT, j))

        out_of_band = False
        for j in range(n):
            x = xi[j]
            if x < lo:
                e = (lo - x) / width * 100.0
            elif x > hi:
                e = (x - hi) / width * 100.0
            else:
                continue
            if e > max_exc[j]:
                max_exc[j] = e
            if e >= BAND_TOLERANCE_PCT:
                out_of_band = True
        if out_of_band:
            last_out_us = t
        if traj is not None:
            traj[k] = xi
        if t % sample_us == 0:
            check_finite(t)
            trace.append(TraceRecord(t, RecordKind.SAMPLE, -1, {"xi": list(xi), "mode": mode.value}))
        if k == n_steps:
            break

        if dist is not None and (t == dist_on or t == dist_off):
            on = t == dist_on
            w[dist_tank] = dist_rate if on else 0.0
            rate = rates()
            trace.append(
                TraceRecord(t, RecordKind.DISTURBANCE_ON if on else RecordKind.DISTURBANCE_OFF, dist_tank)
            )

        # exact hold integration, split at link events inside the step
        cursor = t
        t_next = t + dt_us
        while pending and pending[0][0] < t_next:
            ev = heapq.heappop(pending)
            span = (ev[0] - cursor) / 1e6
            if span:
                for j in range(n):
                    xi[j] += rate[j] * span
            cursor = ev[0]
            handle(ev)
        span = dt_s if cursor == t else (t_next - cursor) / 1e6
        for j in range(n):
            xi[j] += rate[j] * span

    check_finite(n_steps * dt_us)
    metrics.max_deviation_pct = tuple(max_exc)
    if last_out_us is None:
        metrics.settle_time_s = 0.0
    elif last_out_us == n_steps * dt_us:
        metrics.settle_time_s = None
    else:
        metrics.settle_time_s = (last_out_us + dt_us) / 1e6
    return SimResult(metrics, trace, traj)


# sweep axes in row order; values override the base scenario
GRID_AXES = ("sf", "payload", "channels", "duty", "duration")


def grid_cells(grid: dict) -> list[dict]:
    unknown = set(grid) - set(GRID_AXES)
    if unknown:
        raise ConfigurationError(f"unknown grid axes: {sorted(unknown)}")
    axes = [a for a in GRID_AXES if a in grid]
    if not axes or any(len(grid[a]) == 0 for a in axes):
        return []
    return [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]


def apply_cell(base: ScenarioConfig, cell: dict) -> ScenarioConfig:
    radio = base.radio if base.radio is not None else RadioConfig()
    radio_changes = {}
    if "sf" in cell:
        radio_changes["spreading_factor"] = int(cell["sf"])
    if "payload" in cell:
        radio_changes["payload_bytes"] = int(cell["payload"])
    if "channels" in cell:
        radio_changes["n_channels"] = int(cell["channels"])
    if "duty" in cell:
        radio_changes["duty_cycle"] = float(cell["duty"])
    cfg = base
    if radio_changes:
        cfg = replace(cfg, radio=replace(radio, **radio_changes))
    if "duration" in cell:
        dist = base.disturbance if base.disturbance is not None else Disturbance()
        cfg = replace(cfg, disturbance=replace(dist, duration_s=float(cell["duration"])))
    return cfg


@dataclass
class SweepRow:
    cell: dict
    config: ScenarioConfig
    metrics: RunMetrics | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_cell(cfg: ScenarioConfig) -> tuple[RunMetrics | None, str | None]:
    try:
        return run(cfg).metrics, None
    except (SimulationError, ConfigurationError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def sweep(base: ScenarioConfig, grid: dict, workers: int = 1) -> list[SweepRow]:
    """Run every grid cell from a fresh state; rows follow the grid's lexicographic order."""
    rows = []
    for cell in grid_cells(grid):
        try:
            rows.append(SweepRow(cell, apply_cell(base, cell)))
        except (ConfigurationError, ValueError) as exc:
            rows.append(SweepRow(cell, base, error=f"{type(exc).__name__}: {exc}"))
    todo = [r for r in rows if r.ok]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, [r.config for r in todo]))
    else:
        results = [_run_cell(r.config) for r in todo]
    for row, (metrics, error) in zip(todo, results):
        row.metrics, row.error = metrics, error
    return rows
