"""Command-line front end: INI configs in, CSV artifacts out."""

from __future__ import annotations

import argparse
import configparser
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .detect import BpsConfig
from .harness import (RECEIVERS, SweepCfg, asymptotic_check, format_ser_csv,
                      run_sweep, scatter_dump)
from .physparams import FiberParams, derive
from .ssfm import SsfmCfg
from .waveform import PULSE_KINDS


class ConfigError(Exception):
    """Invalid, unknown, or missing configuration input."""


_REQUIRED = object()


def _parse_float(raw: str) -> float:
    return float(raw)


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"{raw!r} is not an integer")
        return int(value)


def _parse_str(raw: str) -> str:
    return raw.strip()


def _choice(*options: str):
    def parse(raw: str) -> str:
        value = raw.strip()
        if value not in options:
            raise ValueError(f"{value!r} is not one of {options}")
        return value
    return parse


def _parse_grid(raw: str) -> tuple[float, ...]:
    """Either 'start:stop:step' (inclusive) or a comma-separated list."""
    text = raw.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("grid ranges look like start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError("need stop >= start and step > 0")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + k * step) for k in range(count))
    return tuple(float(p) for p in text.split(","))


def _parse_receivers(raw: str) -> tuple[str, ...]:
    text = raw.strip()
    if text == "all":
        return RECEIVERS
    names = tuple(part.strip() for part in text.split(","))
    for name in names:
        if name not in RECEIVERS:
            raise ValueError(f"{name!r} is not one of {RECEIVERS} (or 'all')")
    return names


SCHEMA: dict[str, dict[str, tuple]] = {
    "fiber": {
        "span_length": (_parse_float, _REQUIRED),
        "attenuation_db": (_parse_float, _REQUIRED),
        "gamma": (_parse_float, _REQUIRED),
        "n_span": (_parse_int, 1),
        "symbol_rate": (_parse_float, _REQUIRED),
        "photon_energy": (_parse_float, _REQUIRED),
        "noise_figure_db": (_parse_float, _REQUIRED),
        "beta2": (_parse_float, 0.0),
        "channel_spacing": (_parse_float, 0.0),
    },
    "sweep": {
        "power_grid_dbm": (_parse_grid, _REQUIRED),
        "receivers": (_parse_receivers, RECEIVERS),
        "channel_kind": (_choice("memoryless", "ssfm"), "memoryless"),
        "constellation": (_choice("qam16"), "qam16"),
        "prior_peak": (_parse_float, None),
        "pulse_kind": (_choice(*PULSE_KINDS), "truncated_gaussian"),
        "fwhm": (_parse_float, 0.5),
        "samples_per_symbol": (_parse_int, 100),
        "min_errors": (_parse_int, 100),
        "max_symbols": (_parse_int, 10_000_000),
        "batch_symbols": (_parse_int, 8192),
        "seed": (_parse_int, 0),
        "eta_override": (_parse_float, None),
    },
    "ssfm": {
        "step_km": (_parse_float, 0.1),
        "n_symbols_per_block": (_parse_int, 128),
        "guard_symbols": (_parse_int, 16),
        "samples_per_symbol": (_parse_int, 64),
    },
    "bps": {
        "window": (_parse_int, 15),
    },
    "scatter": {
        "power_dbm": (_parse_float, _REQUIRED),
        "demod": (_choice("mfs", "mxm"), _REQUIRED),
        "n_symbols": (_parse_int, 10_000),
        "pulse_kind": (_choice(*PULSE_KINDS), "truncated_gaussian"),
        "fwhm": (_parse_float, 0.5),
        "samples_per_symbol": (_parse_int, 100),
        "eta_override": (_parse_float, None),
        "seed": (_parse_int, 0),
    },
    "asymptotic": {
        "power_dbm": (_parse_float, 30.0),
        "n_symbols": (_parse_int, 100_000),
        "prior_peak": (_parse_float, None),
        "samples_per_symbol": (_parse_int, 100),
        "seed": (_parse_int, 0),
    },
    "output": {
        "path": (_parse_str, None),
    },
}

_COMMAND_SECTIONS = {
    "derive-params": ("fiber",),
    "ser-sweep": ("fiber", "sweep", "ssfm", "bps", "output"),
    "scatter": ("fiber", "scatter", "output"),
    "asymptotic-check": ("fiber", "asymptotic", "output"),
}

#: Sections a command reads that may be absent (every key has a default).
_OPTIONAL_SECTIONS = ("ssfm", "bps", "output")


def _read_config(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}")
    if parser.defaults():
        raise ConfigError("the DEFAULT section is not supported")
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section '{section}'")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{section}.{key}'")
    return parser


def _effective(parser: configparser.ConfigParser, command: str) -> dict:
    sections = {}
    for section in _COMMAND_SECTIONS[command]:
        if not parser.has_section(section) and section not in _OPTIONAL_SECTIONS:
            raise ConfigError(f"missing config section '[{section}]'")
        values = {}
        for key, (parse, default) in SCHEMA[section].items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[key] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(f"invalid value for '{section}.{key}': {exc}")
            elif default is _REQUIRED:
                raise ConfigError(f"missing required key '{section}.{key}'")
            else:
                values[key] = default
        sections[section] = values
    return sections


def _config_hash(command: str, sections: dict) -> str:
    lines = [f"command={command}"]
    for section in sorted(sections):
        for key in sorted(sections[section]):
            lines.append(f"{section}.{key}={sections[section][key]!r}")
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:12]


def _fiber(sections: dict) -> FiberParams:
    try:
        return FiberParams(**sections["fiber"])
    except ValueError as exc:
        raise ConfigError(f"invalid fiber parameters: {exc}")


def _out_path(args, sections: dict) -> str:
    if args.out:
        return args.out
    path = sections.get("output", {}).get("path")
    if not path:
        raise ConfigError("no output path: pass --out or set 'output.path'")
    return path


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _comment(config_hash: str) -> str:
    return f"# config_hash={config_hash} version={__version__}"


def _cmd_derive_params(args) -> int:
    parser = _read_config(args.config)
    sections = _effective(parser, "derive-params")
    drv = derive(_fiber(sections))
    print(f"eta = {drv.eta:.6g} 1/W")
    print(f"noise_psd = {drv.noise_psd:.6g} W/Hz")
    print(f"eff_length = {drv.eff_length:.6g} km")
    print(f"gain = {drv.gain_linear:.6g} (linear)")
    print(f"alpha = {drv.alpha_np:.6g} Np/km")
    return 0


def _cmd_ser_sweep(args) -> int:
    parser = _read_config(args.config)
    sections = _effective(parser, "ser-sweep")
    if args.seed is not None:
        sections["sweep"]["seed"] = args.seed
    config_hash = _config_hash("ser-sweep", sections)
    fiber = _fiber(sections)
    sweep = dict(sections["sweep"])
    try:
        bps = BpsConfig(window=sections["bps"]["window"])
        ssfm = None
        if sweep["channel_kind"] == "ssfm":
            ssfm = SsfmCfg(fiber=fiber, **sections["ssfm"])
        cfg = SweepCfg(fiber=fiber, bps=bps, ssfm=ssfm, **sweep)
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = _out_path(args, sections)
    records = run_sweep(cfg, config_hash=config_hash, threads=args.threads)
    _write(out, format_ser_csv(records, config_hash=config_hash,
                               version=__version__))
    print(f"wrote {len(records)} records to {out} (config_hash={config_hash})")
    return 0


def _cmd_scatter(args) -> int:
    parser = _read_config(args.config)
    sections = _effective(parser, "scatter")
    if args.seed is not None:
        sections["scatter"]["seed"] = args.seed
    config_hash = _config_hash("scatter", sections)
    fiber = _fiber(sections)
    opts = sections["scatter"]
    try:
        tx, out_vals = scatter_dump(
            fiber, opts["power_dbm"], opts["demod"], opts["n_symbols"],
            pulse_kind=opts["pulse_kind"], fwhm=opts["fwhm"],
            samples_per_symbol=opts["samples_per_symbol"],
            eta_override=opts["eta_override"], seed=opts["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = _out_path(args, sections)
    lines = [_comment(config_hash), "tx_re,tx_im,out_re,out_im"]
    for t, o in zip(tx, out_vals):
        lines.append(f"{float(t.real)!r},{float(t.imag)!r},"
                     f"{float(o.real)!r},{float(o.imag)!r}")
    _write(out, "\n".join(lines) + "\n")
    print(f"wrote {tx.size} rows to {out} (config_hash={config_hash})")
    return 0


def _cmd_asymptotic_check(args) -> int:
    parser = _read_config(args.config)
    sections = _effective(parser, "asymptotic-check")
    if args.seed is not None:
        sections["asymptotic"]["seed"] = args.seed
    config_hash = _config_hash("asymptotic-check", sections)
    fiber = _fiber(sections)
    opts = sections["asymptotic"]
    try:
        rows = asymptotic_check(
            fiber, power_dbm=opts["power_dbm"], n_symbols=opts["n_symbols"],
            prior_peak=opts["prior_peak"],
            samples_per_symbol=opts["samples_per_symbol"], seed=opts["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc))
    for row in rows:
        print(f"{row.receiver}: ser={row.ser:.6g} +/- {row.stderr:.2g} "
              f"(limit {row.limit:g}, n={row.symbols})")
    out = args.out or sections.get("output", {}).get("path")
    if out:
        lines = [_comment(config_hash), "receiver,ser,stderr,limit,symbols"]
        for row in rows:
            lines.append(f"{row.receiver},{row.ser!r},{row.stderr!r},"
                         f"{row.limit!r},{row.symbols}")
        _write(out, "\n".join(lines) + "\n")
        print(f"wrote {len(rows)} rows to {out} (config_hash={config_hash})")
    return 0


_DISPATCH = {
    "derive-params": _cmd_derive_params,
    "ser-sweep": _cmd_ser_sweep,
    "scatter": _cmd_scatter,
    "asymptotic-check": _cmd_asymptotic_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wdmrx",
        description="Simulate receivers for a two-user nonlinear WDM channel.")
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("derive-params", "print constants derived from the fiber section"),
            ("ser-sweep", "run a Monte Carlo SER power sweep to CSV"),
            ("scatter", "dump demodulator outputs with sent symbols to CSV"),
            ("asymptotic-check", "measure large-power limits of the receivers")]:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="INI config file")
        sub.add_argument("--out", help="output CSV path")
        sub.add_argument("--seed", type=int, help="override the configured seed")
        if name == "ser-sweep":
            sub.add_argument("--threads", type=int, default=1,
                             help="worker processes across power points")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
