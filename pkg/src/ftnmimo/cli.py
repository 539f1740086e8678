"""Command-line driver producing CSV tables.

Every command accepts ``--config FILE`` with ``key = value`` lines; flags on
the command line override file values. Exit status is 0 on success, 2 for
configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .capacity import (Scheme, SnrConvention, fs_capacity, scheme_rate,
                       scheme_spectrum)
from .channel import (FlatMimoChannel, TappedDelayChannel, channel_spectrum,
                      eigenmodes_flat, read_channel_csv, sample_flat, sample_fs,
                      write_channel_csv)
from .gram import szego_gap
from .iapr import (CcdfCurve, IaprConfig, gaussian_ccdf_closed, gaussian_ccdf_exact,
                   gaussian_ccdf_rx, outage_threshold, qpsk_ccdf, simulate_ccdf)
from .numerics import NumericalError, RandomSource
from .pulse import FoldedSpectrum, RrcPulse

COMMANDS = ("capacity-sweep", "capacity-fs", "ccdf", "ccdf-sim", "outage", "szego-check")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


def _words(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(x for x in str(text).replace(" ", "").split(",") if x)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    beta: float = 0.5
    T: float = 0.01
    K: int = 2
    L: int = 2
    J: int = 20
    delay_range: float = 2.0
    delta: tuple = (0.5, 2 / 3, 0.8, 1.0)
    snr_mode: str = "tx"
    snr_db: tuple = (20.0,)
    sigma0_2: float = 1.0
    schemes: tuple = ("OsOf", "SsOf", "OsSf", "SsSf")
    realizations: int = 1000
    seed: int = 0
    symbol_set: str = "gaussian"
    symbols: int = 1000
    oversample: int = 8
    window: float = 30.0
    gamma_min_db: float = -10.0
    gamma_max_db: float = 10.0
    gamma_step_db: float = 0.25
    gaussian_model: str = "closed"
    p_out: float = 0.01
    method: str = "analytic"
    grid_size: int = 2048
    n_list: tuple = (64, 128, 256, 512)
    fixed_channel: str = ""
    jobs: int = 1
    channel_dir: str = ""
    output: str = "-"


_PARSERS = {
    "beta": float, "T": float, "K": int, "L": int, "J": int, "delay_range": float,
    "delta": _floats, "snr_mode": str, "snr_db": _floats, "sigma0_2": float,
    "schemes": _words, "realizations": int, "seed": int, "symbol_set": str,
    "symbols": int, "oversample": int, "window": float, "gamma_min_db": float,
    "gamma_max_db": float, "gamma_step_db": float, "gaussian_model": str,
    "p_out": float, "method": str, "grid_size": int, "n_list": _ints,
    "fixed_channel": str, "jobs": int, "channel_dir": str, "output": str,
}

_HELP = {
    "beta": "roll-off factor in [0, 1]",
    "T": "Nyquist symbol period in seconds",
    "K": "transmit antennas",
    "L": "receive antennas",
    "J": "taps of the frequency-selective channel",
    "delay_range": "tap delays drawn on [0, delay_range*T)",
    "delta": "comma-separated acceleration factors in (0, 1]",
    "snr_mode": "tx (fixed transmit power) or rx (fixed symbol energy)",
    "snr_db": "comma-separated SNR values in dB",
    "sigma0_2": "noise power spectral density",
    "schemes": "comma-separated subset of OsOf,SsOf,OsSf,SsSf",
    "realizations": "channel or waveform realizations",
    "seed": "master seed",
    "symbol_set": "gaussian or qpsk",
    "symbols": "symbols per simulated waveform",
    "oversample": "samples per symbol interval (>= 4)",
    "window": "pulse truncation half-width in units of T",
    "gamma_min_db": "threshold grid start, dB relative to the delta=1 antenna power",
    "gamma_max_db": "threshold grid end, dB relative to the delta=1 antenna power",
    "gamma_step_db": "threshold grid step in dB",
    "gaussian_model": "closed or exact (time-averaged) Gaussian CCDF",
    "p_out": "outage probability in (0, 1]",
    "method": "analytic or monte-carlo (outage)",
    "grid_size": "frequency grid points for FS capacity (>= 256)",
    "n_list": "block lengths for szego-check",
    "fixed_channel": "'identity' or a channel CSV used for every realization",
    "jobs": "worker processes",
    "channel_dir": "directory receiving one channel CSV per realization",
    "output": "CSV path, '-' for stdout",
}


def _fail(key: str, value, constraint: str):
    raise ConfigError(f"{key} = {value!r}: {constraint}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every field against the preconditions of the modules it feeds."""
    if cfg.command not in COMMANDS:
        _fail("command", cfg.command, f"must be one of {', '.join(COMMANDS)}")
    if not 0 <= cfg.beta <= 1:
        _fail("beta", cfg.beta, "must lie in [0, 1]")
    if not cfg.T > 0:
        _fail("T", cfg.T, "must be > 0")
    for key in ("K", "L", "J", "realizations", "jobs", "symbols"):
        if getattr(cfg, key) < 1:
            _fail(key, getattr(cfg, key), "must be >= 1")
    if not cfg.delay_range > 0:
        _fail("delay_range", cfg.delay_range, "must be > 0")
    if not cfg.delta or any(not 0 < d <= 1 for d in cfg.delta):
        _fail("delta", cfg.delta, "every value must lie in (0, 1]")
    if cfg.snr_mode not in ("tx", "rx"):
        _fail("snr_mode", cfg.snr_mode, "must be tx or rx")
    if not cfg.snr_db or any(not math.isfinite(s) for s in cfg.snr_db):
        _fail("snr_db", cfg.snr_db, "must be finite dB values")
    if not cfg.sigma0_2 > 0:
        _fail("sigma0_2", cfg.sigma0_2, "must be > 0")
    bad = [s for s in cfg.schemes if s not in Scheme.__members__]
    if bad or not cfg.schemes:
        _fail("schemes", cfg.schemes, "must be a non-empty subset of OsOf,SsOf,OsSf,SsSf")
    if not 0 <= cfg.seed < 2**64:
        _fail("seed", cfg.seed, "must be a 64-bit non-negative integer")
    if cfg.symbol_set not in ("gaussian", "qpsk"):
        _fail("symbol_set", cfg.symbol_set, "must be gaussian or qpsk")
    if cfg.oversample < 4:
        _fail("oversample", cfg.oversample, "must be >= 4")
    if not cfg.window > 0:
        _fail("window", cfg.window, "must be > 0")
    if not cfg.gamma_step_db > 0:
        _fail("gamma_step_db", cfg.gamma_step_db, "must be > 0")
    if not cfg.gamma_max_db >= cfg.gamma_min_db:
        _fail("gamma_max_db", cfg.gamma_max_db, "must be >= gamma_min_db")
    if cfg.gaussian_model not in ("closed", "exact"):
        _fail("gaussian_model", cfg.gaussian_model, "must be closed or exact")
    if not 0 < cfg.p_out <= 1:
        _fail("p_out", cfg.p_out, "must lie in (0, 1]")
    if cfg.method not in ("analytic", "monte-carlo"):
        _fail("method", cfg.method, "must be analytic or monte-carlo")
    if cfg.grid_size < 256:
        _fail("grid_size", cfg.grid_size, "must be >= 256")
    if not cfg.n_list or any(n < 1 or n > 2048 for n in cfg.n_list):
        _fail("n_list", cfg.n_list, "values must lie in [1, 2048]")
    if cfg.fixed_channel and cfg.fixed_channel != "identity":
        if not Path(cfg.fixed_channel).is_file():
            _fail("fixed_channel", cfg.fixed_channel, "must be 'identity' or an existing CSV")
    if cfg.channel_dir and not Path(cfg.channel_dir).is_dir():
        _fail("channel_dir", cfg.channel_dir, "must be an existing directory")
    if cfg.command in ("ccdf", "ccdf-sim", "outage"):
        pulse = RrcPulse(cfg.beta, cfg.T)
        for d in cfg.delta:
            try:
                IaprConfig(pulse, d, cfg.symbol_set, 1.0, cfg.symbols, cfg.oversample,
                           cfg.window)
            except ValueError as exc:
                _fail("symbols", cfg.symbols, str(exc))
    return cfg


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config file {path}: {exc.strerror}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftnmimo",
                                     description="MIMO FTN capacity and IAPR tables (CSV).")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="key = value file; flags take precedence")
        for key, help_text in _HELP.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, help=help_text)
    return parser


def parse_config(argv, config_file=None) -> ExperimentConfig:
    """Merge defaults, the config file and flags, then validate."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    values = {}
    path = ns.pop("config", None) or config_file
    if path:
        values.update(read_config_file(path))
    values.update(ns)
    kwargs = {}
    for key, raw in values.items():
        try:
            kwargs[key] = _PARSERS[key](raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} = {raw!r}: cannot parse") from None
    return validate(ExperimentConfig(command=command, **kwargs))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.12g" % x
    return str(x)


def _fixed(cfg: ExperimentConfig):
    if not cfg.fixed_channel:
        return None
    if cfg.fixed_channel == "identity":
        return TappedDelayChannel(np.zeros(1), np.eye(cfg.L, cfg.K)[None])
    return read_channel_csv(cfg.fixed_channel)


def _save_channel(cfg: ExperimentConfig, ch, r: int) -> None:
    if cfg.channel_dir:
        write_channel_csv(ch, Path(cfg.channel_dir) / f"channel_seed{cfg.seed}_r{r}.csv")


def _snr(cfg: ExperimentConfig, snr_db: float) -> SnrConvention:
    return SnrConvention.from_db(cfg.snr_mode, snr_db, cfg.sigma0_2)


def _sweep_cell(cfg: ExperimentConfig, delta: float, snr_db: float) -> list[tuple]:
    pulse = RrcPulse(cfg.beta, cfg.T)
    fs = FoldedSpectrum(pulse, delta)
    P = _snr(cfg, snr_db).power(delta)
    fixed = _fixed(cfg)
    rows = []
    for r in range(cfg.realizations):
        if fixed is not None:
            H = FlatMimoChannel(fixed.gains[0])
        else:
            H = sample_flat(cfg.K, cfg.L, RandomSource(cfg.seed, r))
            _save_channel(cfg, H, r)
        tau = eigenmodes_flat(H)
        for name in cfg.schemes:
            sol = scheme_spectrum(name, P, H.K, delta, cfg.beta, cfg.T, tau, fs, cfg.sigma0_2)
            c = scheme_rate(sol, tau, cfg.sigma0_2).bits_per_s_hz
            rows.append((delta, snr_db, name, r, c))
    return rows


def _fs_cell(cfg: ExperimentConfig, delta: float, snr_db: float) -> list[tuple]:
    fs = FoldedSpectrum(RrcPulse(cfg.beta, cfg.T), delta)
    P = _snr(cfg, snr_db).power(delta)
    fixed = _fixed(cfg)
    rows = []
    for r in range(cfg.realizations):
        ch = fixed if fixed is not None else sample_fs(
            cfg.K, cfg.L, cfg.J, cfg.delay_range * cfg.T, RandomSource(cfg.seed, r))
        if fixed is None:
            _save_channel(cfg, ch, r)
        c = fs_capacity(channel_spectrum(ch, delta, cfg.T), fs, P, cfg.sigma0_2,
                        cfg.grid_size).bits_per_s_hz
        rows.append((delta, snr_db, "FS", r, c))
    return rows


def _run_cells(cfg: ExperimentConfig, fn) -> list[tuple]:
    cells = [(d, s) for d in cfg.delta for s in cfg.snr_db]
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(fn, [cfg] * len(cells), *zip(*cells)))
    else:
        parts = [fn(cfg, d, s) for d, s in cells]
    return [row for part in parts for row in part]


def _capacity_table(cfg: ExperimentConfig, rows: list[tuple]):
    header = ["delta", "beta", "snr_db", "snr_mode", "scheme", "realization", "seed",
              "capacity_bps_hz", "mean_ratio"]
    means = {}
    for d, s, name, _, c in rows:
        means.setdefault((d, s, name), []).append(c)
    means = {k: math.fsum(v) / len(v) for k, v in means.items()}
    out = []
    for d, s, name, r, c in sorted(rows, key=lambda x: (x[0], x[1], x[2], x[3])):
        out.append([d, cfg.beta, s, cfg.snr_mode, name, r, cfg.seed, c, ""])
    for (d, s, name), m in sorted(means.items()):
        ref = means.get((1.0, s, "SsSf"))
        ratio = m / ref if ref else ""
        out.append([d, cfg.beta, s, cfg.snr_mode, name, "mean", cfg.seed, m, ratio])
    out.sort(key=lambda row: (row[0], row[2], row[4], row[5] == "mean",
                              row[5] if row[5] != "mean" else 0))
    return header, out


def run_capacity_sweep(cfg: ExperimentConfig):
    return _capacity_table(cfg, _run_cells(cfg, _sweep_cell))


def run_capacity_fs(cfg: ExperimentConfig):
    header, rows = _capacity_table(replace(cfg, schemes=("FS",)), _run_cells(cfg, _fs_cell))
    return header, rows


def _gamma_grid(cfg: ExperimentConfig, snr_db: float) -> tuple[np.ndarray, float]:
    """Absolute thresholds in watts and the reference antenna power at delta = 1."""
    n = int(math.floor((cfg.gamma_max_db - cfg.gamma_min_db) / cfg.gamma_step_db + 1e-9)) + 1
    rel_db = cfg.gamma_min_db + cfg.gamma_step_db * np.arange(n)
    p_ref = _snr(cfg, snr_db).power(1.0) / cfg.K
    return p_ref * 10.0 ** (rel_db / 10.0), p_ref


def _iapr_cfg(cfg: ExperimentConfig, delta: float, snr_db: float) -> IaprConfig:
    P_k = _snr(cfg, snr_db).power(delta) / cfg.K
    return IaprConfig(RrcPulse(cfg.beta, cfg.T), delta, cfg.symbol_set, P_k, cfg.symbols,
                      cfg.oversample, cfg.window)


def _analytic_curve(cfg: ExperimentConfig, ic: IaprConfig, gamma: np.ndarray) -> np.ndarray:
    if ic.symbol_set == "qpsk":
        return np.asarray(qpsk_ccdf(gamma, ic))
    if cfg.gaussian_model == "exact":
        return np.asarray(gaussian_ccdf_exact(gamma, ic))
    if cfg.snr_mode == "rx":
        return np.asarray(gaussian_ccdf_rx(gamma, ic.symbol_energy, ic.delta, cfg.beta, cfg.T))
    return np.asarray(gaussian_ccdf_closed(gamma, ic.P_k, ic.delta, cfg.beta, cfg.T))


def _curve(cfg: ExperimentConfig, delta: float, snr_db: float, kind: str) -> CcdfCurve:
    gamma, _ = _gamma_grid(cfg, snr_db)
    ic = _iapr_cfg(cfg, delta, snr_db)
    if kind == "analytic":
        return CcdfCurve(gamma, _analytic_curve(cfg, ic, gamma), "analytic", ic.P_k)
    return simulate_ccdf(ic, gamma, RandomSource(cfg.seed), cfg.realizations)


def _ccdf_rows(cfg: ExperimentConfig, kind: str):
    header = ["gamma_db", "gamma_over_P", "ccdf", "kind", "delta", "symbol_set", "snr_mode"]
    rows = []
    for d in sorted(cfg.delta):
        for s in cfg.snr_db:
            c = _curve(cfg, d, s, kind)
            for g, v in zip(c.gamma, c.values):
                rows.append([10 * math.log10(g), g / c.P_k, v, c.kind, d, cfg.symbol_set,
                             cfg.snr_mode])
    return header, rows


def run_ccdf(cfg: ExperimentConfig):
    return _ccdf_rows(cfg, "analytic")


def run_ccdf_sim(cfg: ExperimentConfig):
    return _ccdf_rows(cfg, "monte-carlo")


def run_outage(cfg: ExperimentConfig):
    """Outage thresholds.

    Gaussian analytic thresholds are solved by bisection. QPSK analytic
    curves are sampled on the threshold grid and interpolated, since each
    evaluation of the QPSK integral is expensive.
    """
    header = ["delta", "gamma_db", "p_out", "gamma_over_p_db"]
    rows = []
    for d in sorted(cfg.delta):
        for s in cfg.snr_db:
            ic = _iapr_cfg(cfg, d, s)
            if cfg.method == "analytic" and cfg.symbol_set == "gaussian":
                def f(g, ic=ic):
                    return float(_analytic_curve(cfg, ic, np.asarray(g)))
                g = outage_threshold(f, cfg.p_out, gamma_hi=ic.P_k)
            else:
                kind = "analytic" if cfg.method == "analytic" else "monte-carlo"
                g = outage_threshold(_curve(cfg, d, s, kind), cfg.p_out)
            if g <= 0:
                rows.append([d, -math.inf, cfg.p_out, -math.inf])
            else:
                rows.append([d, 10 * math.log10(g), cfg.p_out, 10 * math.log10(g / ic.P_k)])
    return header, rows


def run_szego_check(cfg: ExperimentConfig):
    header = ["delta", "N", "finite_rate", "limit_rate", "rel_gap"]
    pulse = RrcPulse(cfg.beta, cfg.T)
    fixed = _fixed(cfg)
    H = (FlatMimoChannel(fixed.gains[0]) if fixed is not None
         else sample_flat(cfg.K, cfg.L, RandomSource(cfg.seed, 0)))
    rows = []
    for d in sorted(cfg.delta):
        for s in cfg.snr_db:
            P = _snr(cfg, s).power(d)
            for r in szego_gap(H, pulse, d, P, cfg.sigma0_2, cfg.n_list):
                rows.append([d, r.N, r.finite_rate, r.limit_rate, r.rel_gap])
    return header, rows


RUNNERS = {
    "capacity-sweep": run_capacity_sweep,
    "capacity-fs": run_capacity_fs,
    "ccdf": run_ccdf,
    "ccdf-sim": run_ccdf_sim,
    "outage": run_outage,
    "szego-check": run_szego_check,
}


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _emit(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
        return
    target = Path(output)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=target.name, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"ftnmimo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:          # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        header, rows = RUNNERS[cfg.command](cfg)
        _emit(render_csv(header, rows), cfg.output)
    except (NumericalError, FloatingPointError) as exc:
        print(f"ftnmimo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
