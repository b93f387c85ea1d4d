"""Command-line front end.

    loraetc airtime --sf 7 --payload 10
    loraetc run scenarios/lora_grid.yaml [--trace trace.csv]
    loraetc sweep scenarios/lora_grid.yaml --grid "sf=7..12;payload=10,20,30,40,50" --out grid.csv

Exit codes: 0 success, 1 simulation error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .airtime import ConfigurationError, RadioConfig, TimingProfile
from .link import SimulationError
from .scenario import load_scenario
from .sim import GRID_AXES, RunMetrics, ScenarioConfig, run, sweep

EXIT_OK, EXIT_SIM, EXIT_USAGE = 0, 1, 2

AIRTIME_COLUMNS = ("sf", "payload_bytes", "n_channels", "duty_cycle", "toa_ms", "rtt_ms", "bp_ms", "bp_n_ms")
OUTPUT_COLUMNS = (
    "sf",
    "payload_bytes",
    "n_channels",
    "duty_cycle",
    "disturbance_duration_s",
    "toa_ms",
    "rtt_ms",
    "bp_ms",
    "bp_n_ms",
    "max_dev_pct_tank1",
    "max_dev_pct_tank2",
    "max_dev_pct_tank3",
    "events_triggered",
    "delivered",
    "dropped_busy",
    "dropped_blackout",
    "settle_time_s",
    "status",
)
CELL_COLUMNS = dict(
    sf="sf", payload="payload_bytes", channels="n_channels", duty="duty_cycle", duration="disturbance_duration_s"
)


def _ms(us: int) -> str:
    return f"{us / 1000:.3f}"


def _num(value) -> str:
    # shortest exact form, no exponent for the ranges used here
    return "" if value is None else f"{value:g}"


def timing_fields(radio: RadioConfig | None) -> dict:
    timing = TimingProfile.ideal() if radio is None else TimingProfile.from_radio(radio)
    fields = dict(sf="", payload_bytes="", n_channels="", duty_cycle="")
    if radio is not None:
        fields = dict(
            sf=str(radio.spreading_factor),
            payload_bytes=str(radio.payload_bytes),
            n_channels=str(radio.n_channels),
            duty_cycle=_num(radio.duty_cycle),
        )
    fields.update(
        toa_ms=_ms(timing.toa_us),
        rtt_ms=_ms(timing.rtt_us),
        bp_ms=_ms(timing.bp_single_us),
        bp_n_ms=_ms(timing.bp_n_us),
    )
    return fields


def output_row(cfg: ScenarioConfig, metrics: RunMetrics | None, status: str = "ok") -> dict:
    row = timing_fields(cfg.radio)
    row["disturbance_duration_s"] = "" if cfg.disturbance is None else _num(cfg.disturbance.duration_s)
    for j in range(3):
        row[f"max_dev_pct_tank{j + 1}"] = ""
    for key in ("events_triggered", "delivered", "dropped_busy", "dropped_blackout", "settle_time_s"):
        row[key] = ""
    if metrics is not None:
        for j, dev in enumerate(metrics.max_deviation_pct[:3]):
            row[f"max_dev_pct_tank{j + 1}"] = f"{dev:.2f}"
        row.update(
            events_triggered=str(metrics.events_triggered),
            delivered=str(metrics.events_delivered),
            dropped_busy=str(metrics.events_dropped_busy),
            dropped_blackout=str(metrics.events_dropped_blackout),
            settle_time_s="" if metrics.settle_time_s is None else f"{metrics.settle_time_s:.3f}",
        )
    row["status"] = status
    return row


def format_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    lines += [",".join(row[c] for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def _number(token: str):
    try:
        return int(token)
    except ValueError:
        return float(token)


def parse_grid(text: str) -> dict:
    """``"sf=7..12;payload=10,20"`` -> ``{"sf": [7, ..., 12], "payload": [10, 20]}``."""
    grid = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        axis, sep, values = part.partition("=")
        axis = axis.strip()
        if not sep or axis not in GRID_AXES:
            raise ConfigurationError(f"grid: unknown axis '{axis}' (expected one of {', '.join(GRID_AXES)})")
        if axis in grid:
            raise ConfigurationError(f"grid: axis '{axis}' given twice")
        items = []
        try:
            for token in filter(None, (v.strip() for v in values.split(","))):
                if ".." in token:
                    lo, hi = (int(x) for x in token.split(".."))
                    items.extend(range(lo, hi + 1))
                else:
                    items.append(_number(token))
        except ValueError:
            raise ConfigurationError(f"grid: bad value list for '{axis}': {values!r}") from None
        grid[axis] = items
    return grid


def write_trace(path: str, trace) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_ms,kind,device,data\n")
        for rec in trace:
            fh.write(rec.to_row() + "\n")


def cmd_airtime(args) -> int:
    radio = RadioConfig(
        spreading_factor=args.sf,
        payload_bytes=args.payload,
        bandwidth_hz=args.bw,
        code_rate_num=args.cr,
        duty_cycle=args.duty,
        n_channels=args.channels,
    )
    sys.stdout.write(format_csv(AIRTIME_COLUMNS, [timing_fields(radio)]))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    result = run(cfg)
    if args.trace:
        write_trace(args.trace, result.trace)
    sys.stdout.write(format_csv(OUTPUT_COLUMNS, [output_row(cfg, result.metrics)]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_scenario(args.scenario)
    grid = parse_grid(args.grid)
    rows = sweep(cfg, grid, workers=args.workers)
    out = []
    for r in rows:
        row = output_row(r.config, r.metrics, "ok" if r.ok else "error")
        if not r.ok:
            # the cell may not have produced a valid config; report what was asked for
            row.update({CELL_COLUMNS[axis]: _num(value) for axis, value in r.cell.items()})
        out.append(row)
    text = format_csv(OUTPUT_COLUMNS, out)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = [r for r in rows if not r.ok]
    for r in failed:
        print(f"cell {r.cell}: {r.error}", file=sys.stderr)
    return EXIT_SIM if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loraetc", description="LoRaWAN event-triggered tank control co-simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("airtime", help="print ToA, RTT and blackout periods for one radio setting")
    p.add_argument("--sf", type=int, required=True)
    p.add_argument("--payload", type=int, required=True, help="application payload in bytes")
    p.add_argument("--bw", type=int, default=125_000, help="bandwidth in Hz")
    p.add_argument("--cr", type=int, default=1, help="code rate 4/(4+cr), cr in 1..4")
    p.add_argument("--duty", type=float, default=0.01)
    p.add_argument("--channels", type=int, default=3)
    p.set_defaults(func=cmd_airtime)

    p = sub.add_parser("run", help="simulate one scenario file")
    p.add_argument("scenario")
    p.add_argument("--trace", metavar="PATH", help="write the full event trace as CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulate a grid of variations of one scenario")
    p.add_argument("scenario")
    p.add_argument("--grid", default="", help='e.g. "sf=7..12;payload=10,20,30,40,50;duration=1,5,10"')
    p.add_argument("--out", metavar="PATH", help="CSV destination (default: stdout)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        where = "" if exc.t_us is None else f" at t = {exc.t_us / 1e6:.3f} s"
        print(f"simulation error{where}: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
