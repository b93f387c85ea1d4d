"""Class-A end-device and per-device channel model.

Timestamps here are integer microseconds. A device that has sent an uplink
is committed until its downlink has arrived (one RTT); after every
transmission the used channel is closed for the duty-cycle blackout.
Every triggered event ends in exactly one :class:`LinkOutcome`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .airtime import TimingProfile
from .trace import RecordKind, TraceRecord

NEVER = -math.inf


class SimulationError(RuntimeError):
    """Internal consistency failure of the simulation (time regression, blow-up)."""

    def __init__(self, message: str, t_us: int | None = None, state=None):
        super().__init__(message)
        self.t_us = t_us
        self.state = state


class OutcomeKind(str, enum.Enum):
    DELIVERED = "Delivered"
    DROPPED_BUSY = "DroppedBusy"
    DROPPED_BLACKOUT = "DroppedBlackout"


@dataclass(frozen=True)
class LinkOutcome:
    kind: OutcomeKind
    uplink_done: int | None = None
    downlink_done: int | None = None
    channel_id: int | None = None

    @property
    def delivered(self) -> bool:
        return self.kind is OutcomeKind.DELIVERED


@dataclass
class ChannelState:
    channel_id: int
    blocked_until: float = NEVER


@dataclass
class EndDeviceState:
    device_id: int
    n_channels: int = 3
    # None while idle, otherwise the end of the RTT window
    awaiting_until: int | None = None
    channels: list[ChannelState] = field(default_factory=list)
    uplinks_sent: int = 0
    downlinks_received: int = 0
    events_dropped_busy: int = 0
    events_dropped_blackout: int = 0
    last_update: int | None = None

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not self.channels:
            self.channels = [ChannelState(i) for i in range(self.n_channels)]

    @property
    def idle(self) -> bool:
        return self.awaiting_until is None

    def free_channel(self, now: int) -> ChannelState | None:
        """Lowest-index channel whose blackout has expired, if any."""
        for ch in self.channels:
            if ch.blocked_until <= now:
                return ch
        return None


def advance(dev: EndDeviceState, now: int) -> EndDeviceState:
    """Move the device clock to ``now``, closing an expired downlink window."""
    if dev.last_update is not None and now < dev.last_update:
        raise SimulationError(
            f"device {dev.device_id}: time went backwards "
            f"({now} us < {dev.last_update} us)",
            t_us=now,
        )
    dev.last_update = now
    if dev.awaiting_until is not None and now >= dev.awaiting_until:
        dev.awaiting_until = None
        dev.downlinks_received += 1
    return dev


def try_transmit(dev: EndDeviceState, now: int, profile: TimingProfile) -> LinkOutcome:
    advance(dev, now)
    if not dev.idle:
        dev.events_dropped_busy += 1
        return LinkOutcome(OutcomeKind.DROPPED_BUSY)
    ch = dev.free_channel(now)
    if ch is None:
        dev.events_dropped_blackout += 1
        return LinkOutcome(OutcomeKind.DROPPED_BLACKOUT)
    ch.blocked_until = now + profile.toa_us + profile.bp_single_us
    downlink_done = now + profile.rtt_us
    dev.uplinks_sent += 1
    if profile.rtt_us > 0:
        dev.awaiting_until = downlink_done
    else:
        # zero-delay link: the exchange completes within the same instant
        dev.downlinks_received += 1
    return LinkOutcome(
        OutcomeKind.DELIVERED,
        uplink_done=now + profile.toa_us,
        downlink_done=downlink_done,
        channel_id=ch.channel_id,
    )


def duty_cycle_utilization(
    trace: list[TraceRecord], channel_id: int, window: tuple[int, int], device_id: int | None = None
) -> float:
    """Fraction of ``window`` (us) during which ``channel_id`` carried an uplink."""
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("window must have positive length")
    busy = 0
    for rec in trace:
        if rec.kind is not RecordKind.UPLINK_START or rec.data.get("channel") != channel_id:
            continue
        if device_id is not None and rec.device_id != device_id:
            continue
        start, end = rec.t_us, rec.t_us + rec.data["toa_us"]
        busy += max(0, min(end, t1) - max(start, t0))
    return busy / (t1 - t0)


def replay_events(
    event_times: list[int], profile: TimingProfile, n_channels: int, device_id: int = 0
) -> tuple[list[LinkOutcome], list[TraceRecord], EndDeviceState]:
    """Feed a scripted, time-ordered event stream through one fresh device."""
    dev = EndDeviceState(device_id, n_channels)
    outcomes, trace = [], []
    for t in event_times:
        out = try_transmit(dev, t, profile)
        outcomes.append(out)
        if out.delivered:
            trace.append(
                TraceRecord(t, RecordKind.UPLINK_START, device_id, {"channel": out.channel_id, "toa_us": profile.toa_us})
            )
        elif out.kind is OutcomeKind.DROPPED_BUSY:
            trace.append(TraceRecord(t, RecordKind.DROP_BUSY, device_id))
        else:
            trace.append(TraceRecord(t, RecordKind.DROP_BLACKOUT, device_id))
    return outcomes, trace, dev
