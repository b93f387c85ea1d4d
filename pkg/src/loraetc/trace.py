"""Trace records emitted by the link model and the simulation loop."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class RecordKind(str, enum.Enum):
    SAMPLE = "Sample"
    TRIGGER = "Trigger"
    UPLINK_START = "UplinkStart"
    UPLINK_DONE = "UplinkDone"
    DOWNLINK_DONE = "DownlinkDone"
    DROP_BUSY = "DropBusy"
    DROP_BLACKOUT = "DropBlackout"
    MODE_SWITCH = "ModeSwitch"
    DISTURBANCE_ON = "DisturbanceOn"
    DISTURBANCE_OFF = "DisturbanceOff"


@dataclass(frozen=True)
class TraceRecord:
    t_us: int
    kind: RecordKind
    device_id: int = -1
    data: dict = field(default_factory=dict)

    @property
    def t_ms(self) -> float:
        return self.t_us / 1000.0

    def to_row(self) -> str:
        """One CSV line: time, kind, device, then ``key=value`` pairs separated by ``;``."""
        payload = ";".join(f"{k}={_fmt(v)}" for k, v in self.data.items())
        return f"{self.t_us / 1000:.3f},{self.kind.value},{self.device_id},{payload}"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "|".join(_fmt(v) for v in value)
    return str(value)
