import math

import pytest
from hypothesis import given, strategies as st

from loraetc.airtime import (
    ConfigurationError,
    RadioConfig,
    TimingProfile,
    compute_blackout,
    compute_blackout_n,
    compute_rtt,
    compute_time_on_air,
)


def oracle_toa_ms(sf, payload, header=13, bw=125_000.0, cr=1, crc=True, implicit=False, de=None, preamble=8):
    """Symbol-by-symbol hand calculation in floating point seconds."""
    if de is None:
        de = sf >= 11
    t_sym = (2.0**sf) / bw
    bits = 8 * (payload + header) - 4 * sf + 28 + (16 if crc else 0) - (20 if implicit else 0)
    bits_per_block = 4 * (sf - 2 * (1 if de else 0))
    n_blocks = max(math.ceil(bits / bits_per_block), 0)
    n_payload = 8 + n_blocks * (cr + 4)
    return ((preamble + 4.25) + n_payload) * t_sym * 1000.0


# values frozen from the oracle above
@pytest.mark.parametrize(
    "sf, payload, expected",
    [
        (7, 10, 61.696),
        (7, 20, 71.936),
        (7, 30, 87.296),
        (12, 50, 2793.472),
    ],
)
def test_time_on_air_examples(sf, payload, expected):
    cfg = RadioConfig(spreading_factor=sf, payload_bytes=payload)
    assert compute_time_on_air(cfg) == pytest.approx(expected, abs=1e-9)
    assert oracle_toa_ms(sf, payload) == pytest.approx(expected, abs=1e-9)


def test_sf7_symbol_count_by_hand():
    # 23 B frame: 200 bits over 28-bit blocks -> 8 blocks * 5 + 8 = 48 symbols
    cfg = RadioConfig(spreading_factor=7, payload_bytes=10)
    assert compute_time_on_air(cfg) == pytest.approx(12.544 + 48 * 1.024)
    # 33 B frame: 280 bits -> 10 blocks -> 58 symbols
    cfg = RadioConfig(spreading_factor=7, payload_bytes=20)
    assert compute_time_on_air(cfg) == pytest.approx(12.544 + 58 * 1.024)


def test_empty_payload_is_shorter():
    short = compute_time_on_air(RadioConfig(spreading_factor=7, payload_bytes=0))
    assert short < compute_time_on_air(RadioConfig(spreading_factor=7, payload_bytes=10))


@pytest.mark.parametrize("sf", range(7, 13))
@pytest.mark.parametrize("payload", [0, 1, 7, 10, 20, 33, 50, 100, 242])
@pytest.mark.parametrize("de", [None, False])
def test_matches_oracle_on_grid(sf, payload, de):
    cfg = RadioConfig(spreading_factor=sf, payload_bytes=payload, low_dr_optimize=de)
    assert compute_time_on_air(cfg) == pytest.approx(oracle_toa_ms(sf, payload, de=de), rel=1e-12)


def test_low_dr_optimize_defaults():
    assert RadioConfig(spreading_factor=11).ldro
    assert RadioConfig(spreading_factor=12).ldro
    assert not RadioConfig(spreading_factor=10).ldro
    assert not RadioConfig(spreading_factor=12, bandwidth_hz=250_000).ldro
    assert not RadioConfig(spreading_factor=12, low_dr_optimize=False).ldro


def test_toa_monotone_over_grid():
    for sf in range(7, 13):
        toas = [compute_time_on_air(RadioConfig(spreading_factor=sf, payload_bytes=p)) for p in range(51)]
        assert all(a <= b for a, b in zip(toas, toas[1:]))
    for p in range(51):
        toas = [compute_time_on_air(RadioConfig(spreading_factor=sf, payload_bytes=p)) for sf in range(7, 13)]
        assert all(a <= b for a, b in zip(toas, toas[1:]))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(spreading_factor=6),
        dict(spreading_factor=13),
        dict(bandwidth_hz=0),
        dict(duty_cycle=0),
        dict(duty_cycle=1.5),
        dict(payload_bytes=243),
        dict(n_channels=0),
        dict(code_rate_num=0),
    ],
)
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        RadioConfig(**kwargs)


@pytest.mark.parametrize(
    "toa, expected",
    [(61.696, 1123.392), (2793.472, 6586.944), (0.0, 1000.0)],
)
def test_rtt(toa, expected):
    assert compute_rtt(toa) == pytest.approx(expected)


def test_rtt_rejects_negative():
    with pytest.raises(ValueError):
        compute_rtt(-1.0)


def test_blackout_examples():
    assert compute_blackout(61.696, 0.01) == pytest.approx(6107.904)
    assert compute_blackout(61.696, 1.0) == 0.0
    assert compute_blackout(500.0, 0.01) == pytest.approx(49500.0)
    with pytest.raises(ValueError):
        compute_blackout(61.696, 0.0)


def test_blackout_n_examples():
    assert compute_blackout_n(6107.904, 1123.392, 3) == pytest.approx(3861.12)
    assert compute_blackout_n(6107.904, 1123.392, 1) == 6107.904
    bp = compute_blackout(71.936, 0.01)
    assert bp == pytest.approx(7121.664)
    assert compute_blackout_n(bp, compute_rtt(71.936), 8) == 0.0


@given(
    sf=st.integers(7, 12),
    payload=st.integers(0, 242),
    duty=st.sampled_from([0.001, 0.01, 0.1, 0.5, 1.0]),
    n=st.integers(1, 16),
)
def test_profile_invariants(sf, payload, duty, n):
    cfg = RadioConfig(spreading_factor=sf, payload_bytes=payload, duty_cycle=duty, n_channels=n)
    p = TimingProfile.from_radio(cfg)
    assert p.rtt_us - 1_000_000 == 2 * p.toa_us
    assert compute_rtt(compute_time_on_air(cfg)) - 1000.0 == pytest.approx(2 * compute_time_on_air(cfg))
    assert 0 <= p.bp_n_us <= p.bp_single_us
    assert p.time_on_air == compute_time_on_air(cfg)


@given(bp=st.floats(0, 1e6), rtt=st.floats(1000, 1e4), n=st.integers(1, 20))
def test_blackout_n_nonincreasing_in_channels(bp, rtt, n):
    assert compute_blackout_n(bp, rtt, n + 1) <= compute_blackout_n(bp, rtt, n)
    assert compute_blackout_n(bp, rtt, 1) == bp


def test_integer_profile_matches_float_helpers():
    cfg = RadioConfig(spreading_factor=7, payload_bytes=10)
    p = TimingProfile.from_radio(cfg)
    assert (p.toa_us, p.rtt_us, p.bp_single_us, p.bp_n_us) == (61696, 1123392, 6107904, 3861120)
