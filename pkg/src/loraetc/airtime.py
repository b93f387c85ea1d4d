"""LoRa time-on-air, round trip time and duty-cycle blackout periods.

All durations are carried as integer microseconds internally; the public
``compute_*`` helpers take and return milliseconds as floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

RECEIVE_DELAY_US = 1_000_000
HEADER_BYTES = 13
MAX_FRAME_BYTES = 255


class ConfigurationError(ValueError):
    """Raised for radio or scenario parameters outside their valid range."""


def _duty_fraction(duty_cycle: float) -> Fraction:
    # 0.01 must behave as exactly 1/100 so blackout arithmetic stays exact
    return Fraction(duty_cycle).limit_denominator(10**9)


@dataclass(frozen=True)
class RadioConfig:
    spreading_factor: int = 7
    bandwidth_hz: int = 125_000
    code_rate_num: int = 1
    payload_bytes: int = 10
    header_bytes: int = HEADER_BYTES
    n_channels: int = 3
    duty_cycle: float = 0.01
    preamble_symbols: int = 8
    crc_enabled: bool = True
    explicit_header: bool = True
    low_dr_optimize: bool | None = None

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ConfigurationError(
                f"spreading_factor must be in 7..12, got {self.spreading_factor}"
            )
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth_hz must be positive")
        if not 1 <= self.code_rate_num <= 4:
            raise ConfigurationError("code_rate_num must be in 1..4 (rate 4/5..4/8)")
        if self.payload_bytes < 0 or self.header_bytes < 0:
            raise ConfigurationError("payload_bytes and header_bytes must be >= 0")
        if self.frame_bytes > MAX_FRAME_BYTES:
            raise ConfigurationError(
                f"payload + header = {self.frame_bytes} B exceeds {MAX_FRAME_BYTES} B"
            )
        if self.n_channels < 1:
            raise ConfigurationError("n_channels must be >= 1")
        if not 0 < self.duty_cycle <= 1:
            raise ConfigurationError("duty_cycle must be in (0, 1]")
        if self.preamble_symbols < 0:
            raise ConfigurationError("preamble_symbols must be >= 0")

    @property
    def frame_bytes(self) -> int:
        return self.payload_bytes + self.header_bytes

    @property
    def ldro(self) -> bool:
        """Low data rate optimisation flag, defaulting to on for SF11/12 at 125 kHz."""
        if self.low_dr_optimize is not None:
            return self.low_dr_optimize
        return self.spreading_factor >= 11 and self.bandwidth_hz <= 125_000


def symbol_time_us(cfg: RadioConfig) -> Fraction:
    return Fraction(2**cfg.spreading_factor * 1_000_000, cfg.bandwidth_hz)


def payload_symbols(cfg: RadioConfig) -> int:
    sf = cfg.spreading_factor
    de = 1 if cfg.ldro else 0
    ih = 0 if cfg.explicit_header else 1
    crc = 1 if cfg.crc_enabled else 0
    numerator = 8 * cfg.frame_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    denominator = 4 * (sf - 2 * de)
    # integer ceil of numerator / denominator
    blocks = -(-numerator // denominator)
    return 8 + max(blocks * (cfg.code_rate_num + 4), 0)


def time_on_air_us(cfg: RadioConfig) -> int:
    t_sym = symbol_time_us(cfg)
    preamble = (cfg.preamble_symbols + Fraction(17, 4)) * t_sym
    return round(preamble + payload_symbols(cfg) * t_sym)


def rtt_us(toa_us: int) -> int:
    if toa_us < 0:
        raise ValueError("time on air must be >= 0")
    return 2 * toa_us + RECEIVE_DELAY_US


def blackout_us(toa_us: int, duty_cycle: float) -> int:
    """Per-channel off time after a transmission; rounded up so the device never overshoots its duty cycle."""
    if not 0 < duty_cycle <= 1:
        raise ValueError("duty_cycle must be in (0, 1]")
    dc = _duty_fraction(duty_cycle)
    return math.ceil(Fraction(toa_us) / dc - toa_us)


def blackout_n_us(bp_us: int, rtt: int, n_channels: int) -> int:
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    return max(0, bp_us - (n_channels - 1) * rtt)


def compute_time_on_air(cfg: RadioConfig) -> float:
    """Time on air of one frame in milliseconds."""
    return time_on_air_us(cfg) / 1000.0


def compute_rtt(toa: float) -> float:
    """Round trip time (ms): uplink, receive delay, equally long downlink."""
    if toa < 0:
        raise ValueError("time on air must be >= 0")
    return 2.0 * toa + RECEIVE_DELAY_US / 1000.0


def compute_blackout(toa: float, duty_cycle: float) -> float:
    if not 0 < duty_cycle <= 1:
        raise ValueError("duty_cycle must be in (0, 1]")
    if toa < 0:
        raise ValueError("time on air must be >= 0")
    dc = _duty_fraction(duty_cycle)
    return float(Fraction(toa) / dc - Fraction(toa))


def compute_blackout_n(bp: float, rtt: float, n_channels: int) -> float:
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    return max(0.0, bp - (n_channels - 1) * rtt)


@dataclass(frozen=True)
class TimingProfile:
    """Link timing of one radio configuration, in integer microseconds."""

    toa_us: int
    rtt_us: int
    bp_single_us: int
    bp_n_us: int

    @classmethod
    def from_radio(cls, cfg: RadioConfig) -> TimingProfile:
        toa = time_on_air_us(cfg)
        rtt = rtt_us(toa)
        bp = blackout_us(toa, cfg.duty_cycle)
        return cls(toa, rtt, bp, blackout_n_us(bp, rtt, cfg.n_channels))

    @classmethod
    def ideal(cls) -> TimingProfile:
        """Zero-delay, unconstrained link."""
        return cls(0, 0, 0, 0)

    @property
    def time_on_air(self) -> float:
        return self.toa_us / 1000.0

    @property
    def rtt(self) -> float:
        return self.rtt_us / 1000.0

    @property
    def bp_single(self) -> float:
        return self.bp_single_us / 1000.0

    @property
    def bp_n(self) -> float:
        return self.bp_n_us / 1000.0
