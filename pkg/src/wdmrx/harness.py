"""Monte Carlo SER engine: power sweeps, receiver wiring, error counting."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import complex_noise, nonlinear_bandwidth_ratio
from .demod import (SsBasis, build_ss_basis, build_ss_model, mfs_block,
                    mxm_from_stats, ss_project_block)
from .detect import (BpsConfig, bps_recover, build_map_mfs_model, map_mfs_block,
                     map_ss_scores, md_block, ts_block, ts_thresholds)
from .physparams import FiberParams, dbm_to_watts, derive
from .ssfm import SsfmCfg, mux, propagate, demux_and_cdc
from .waveform import (Constellation, amplitude_rings, build_interference_set,
                       make_pulse, modulate, qam16)

RECEIVERS = ("mfs-md", "mfs-pr", "mfs-map", "ss-map", "mxm-md", "mxm-ts", "awgn-ref")

#: Receivers whose decision statistics are built from the memoryless channel
#: model; on the split-step channel they run mismatched (still allowed).
MODEL_BASED = ("mfs-map", "ss-map", "mxm-md", "mxm-ts")

CHANNEL_KINDS = ("memoryless", "ssfm")

#: Stream-id prefixes keeping the three entry points on disjoint Philox keys.
_PURPOSE_SWEEP, _PURPOSE_ASYMPTOTIC, _PURPOSE_SCATTER = 0, 1, 2


@dataclass(frozen=True)
class SweepCfg:
    """Everything a power sweep needs besides the output path."""

    fiber: FiberParams
    power_grid_dbm: tuple[float, ...]
    receivers: tuple[str, ...] = RECEIVERS
    channel_kind: str = "memoryless"
    constellation: str = "qam16"
    prior_peak: float | None = None
    pulse_kind: str = "truncated_gaussian"
    fwhm: float = 0.5
    samples_per_symbol: int = 100
    min_errors: int = 100
    max_symbols: int = 10_000_000
    batch_symbols: int = 8192
    seed: int = 0
    eta_override: float | None = None
    bps: BpsConfig = field(default_factory=BpsConfig)
    ssfm: SsfmCfg | None = None

    def __post_init__(self) -> None:
        grid = tuple(float(p) for p in self.power_grid_dbm)
        object.__setattr__(self, "power_grid_dbm", grid)
        if not grid or not all(np.isfinite(grid)):
            raise ValueError("power grid must be non-empty and finite")
        unknown = [r for r in self.receivers if r not in RECEIVERS]
        if unknown or not self.receivers:
            raise ValueError(f"unknown receivers {unknown}; pick from {RECEIVERS}")
        if self.channel_kind not in CHANNEL_KINDS:
            raise ValueError(f"channel_kind must be one of {CHANNEL_KINDS}")
        if self.constellation != "qam16":
            raise ValueError("only the qam16 constellation is implemented")
        if self.prior_peak is not None and not 0.0 < self.prior_peak < 1.0:
            raise ValueError("prior_peak must lie in (0, 1)")
        if self.min_errors < 1:
            raise ValueError("min_errors must be at least 1")
        if not 1 <= self.batch_symbols <= self.max_symbols:
            raise ValueError("need 1 <= batch_symbols <= max_symbols")
        if self.channel_kind == "ssfm":
            if self.ssfm is None:
                raise ValueError("channel_kind 'ssfm' requires an SsfmCfg")
            if self.ssfm.samples_per_symbol != self.samples_per_symbol:
                raise ValueError("receiver and split-step grids must agree: "
                                 f"{self.samples_per_symbol} != {self.ssfm.samples_per_symbol}")
            if self.fiber.channel_spacing <= 0:
                raise ValueError("channel_kind 'ssfm' requires a positive channel_spacing")


@dataclass(frozen=True)
class SerRecord:
    power_dbm: float
    receiver: str
    symbols: int
    errors: int
    ser: float
    stderr: float
    censored: bool
    seed: int
    config_hash: str


@dataclass(frozen=True)
class AsymptoticRow:
    """Measured SER of one receiver against its large-power limit."""

    receiver: str
    ser: float
    stderr: float
    limit: float
    symbols: int


def _priors(prior_peak: float | None) -> np.ndarray | None:
    if prior_peak is None:
        return None
    rest = (1.0 - prior_peak) / 15.0
    priors = np.full(16, rest)
    priors[0] = prior_peak
    return priors


def _stream(seed: int, purpose: int, point: int, batch: int) -> np.random.Generator:
    sid = (purpose << 56) | ((point & 0xFFFF) << 40) | (batch & 0xFFFFFFFFFF)
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, sid], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class _PointModels:
    constellation: Constellation
    basis: SsBasis
    eta: float
    map_model: object
    ss_model: object
    thresholds: object
    cond_own: np.ndarray


def _build_models(cfg: SweepCfg, power_dbm: float, pulse) -> _PointModels:
    es = dbm_to_watts(power_dbm) * cfg.fiber.symbol_period
    const = qam16(es, _priors(cfg.prior_peak))
    iset = build_interference_set(const, const)
    drv = derive(cfg.fiber)
    eta = drv.eta if cfg.eta_override is None else cfg.eta_override
    basis = build_ss_basis(pulse, iset, eta)
    map_model = build_map_mfs_model(const, iset, basis.integrals, drv.noise_psd)
    ss_model = build_ss_model(const, basis, drv.noise_psd)
    radii, ring_priors, _ = amplitude_rings(const)
    thresholds = ts_thresholds(radii, ring_priors, drv.noise_psd)
    return _PointModels(constellation=const, basis=basis, eta=eta,
                        map_model=map_model, ss_model=ss_model,
                        thresholds=thresholds,
                        cond_own=iset.cond_prob[:, iset.own_class_index])


def _decide(receiver: str, models: _PointModels, pulse, bps: BpsConfig,
            rx: np.ndarray, rx_linear: np.ndarray | None,
            cache: dict) -> np.ndarray | None:
    """Symbol decisions of one receiver on a batch, sharing demodulator work."""
    const = models.constellation
    if receiver == "awgn-ref":
        return md_block(mfs_block(rx_linear, pulse), const)
    if receiver.startswith("mfs"):
        if "v" not in cache:
            cache["v"] = mfs_block(rx, pulse)
        v = cache["v"]
        if receiver == "mfs-md":
            return md_block(v, const)
        if receiver == "mfs-map":
            return map_mfs_block(v, models.map_model)
        if v.size < bps.window:
            return None
        return md_block(bps_recover(v, bps, const), const)
    if "u" not in cache:
        cache["u"] = ss_project_block(rx, models.basis)
    u = cache["u"]
    if receiver == "ss-map":
        scores = map_ss_scores(u, models.ss_model.whitened, const.priors,
                               models.cond_own)
        return np.argmax(scores, axis=1)
    if "w" not in cache:
        cache["w"] = mxm_from_stats(u, models.basis)[0]
    w = cache["w"]
    if receiver == "mxm-md":
        return md_block(w, const)
    return ts_block(w, models.thresholds, const)


def _memoryless_batch(models: _PointModels, pulse, noise_psd: float,
                      rng: np.random.Generator, n: int, want_linear: bool):
    const = models.constellation
    cum = np.cumsum(const.priors)
    i1 = np.searchsorted(cum, rng.random(n))
    i2 = np.searchsorted(cum, rng.random(n))
    x1 = const.points[i1]
    s = np.abs(x1) ** 2 + 2.0 * np.abs(const.points[i2]) ** 2
    g = pulse.amplitude_samples
    base = x1[:, None] * g[None, :]
    noise = complex_noise(rng, (n, g.size), noise_psd / pulse.dt)
    rx = base * np.exp(1j * models.eta * s[:, None] * g[None, :] ** 2) + noise
    rx_linear = base + noise if want_linear else None
    return i1, rx, rx_linear


def _ssfm_batch(models: _PointModels, pulse, scfg: SsfmCfg, noise_psd: float,
                rng: np.random.Generator):
    const = models.constellation
    cum = np.cumsum(const.priors)
    n_block = scfg.n_symbols_per_block
    i1 = np.searchsorted(cum, rng.random(n_block))
    i2 = np.searchsorted(cum, rng.random(n_block))
    frame = mux(modulate(const.points[i1], pulse),
                modulate(const.points[i2], pulse),
                scfg.fiber.channel_spacing)
    out = propagate(frame, scfg, noise_psd, rng)
    ch1, _ = demux_and_cdc(out, scfg.fiber.beta2,
                           scfg.fiber.span_length * scfg.fiber.n_span)
    guard = scfg.guard_symbols
    sps = scfg.samples_per_symbol
    payload = ch1.samples[guard * sps:(n_block - guard) * sps]
    return i1[guard:n_block - guard], payload.reshape(scfg.payload_symbols, sps)


def _warn_if_mismatched(cfg: SweepCfg) -> None:
    if cfg.channel_kind != "ssfm":
        return
    mismatched = [r for r in cfg.receivers if r in MODEL_BASED]
    if mismatched:
        warnings.warn("mismatched receivers on the split-step channel: "
                      + ", ".join(mismatched)
                      + " use decision statistics of the memoryless model",
                      RuntimeWarning)


def _warn_if_underresolved(cfg: SweepCfg, pulse) -> None:
    if cfg.channel_kind != "memoryless":
        return
    drv = derive(cfg.fiber)
    eta = drv.eta if cfg.eta_override is None else cfg.eta_override
    top = max(cfg.power_grid_dbm)
    s_max = 5.4 * dbm_to_watts(top) * cfg.fiber.symbol_period
    ratio = nonlinear_bandwidth_ratio(eta, s_max, pulse)
    if ratio > 0.4:
        warnings.warn(
            f"nonlinear phase bandwidth reaches {ratio:.2f} of Nyquist at "
            f"{top:g} dBm; raise samples_per_symbol for a trustworthy result",
            RuntimeWarning)


def _run_point(cfg: SweepCfg, p_idx: int, config_hash: str) -> list[SerRecord]:
    power = cfg.power_grid_dbm[p_idx]
    pulse = make_pulse(cfg.pulse_kind, cfg.samples_per_symbol,
                       cfg.fiber.symbol_period, fwhm=cfg.fwhm)
    models = _build_models(cfg, power, pulse)
    noise_psd = derive(cfg.fiber).noise_psd
    want_linear = "awgn-ref" in cfg.receivers

    errors = {r: 0 for r in cfg.receivers}
    symbols = {r: 0 for r in cfg.receivers}
    active = set(cfg.receivers)
    done = 0
    batch_idx = 0
    while active and done < cfg.max_symbols:
        rng = _stream(cfg.seed, _PURPOSE_SWEEP, p_idx, batch_idx)
        if cfg.channel_kind == "memoryless":
            n = min(cfg.batch_symbols, cfg.max_symbols - done)
            tx, rx, rx_linear = _memoryless_batch(models, pulse, noise_psd,
                                                  rng, n, want_linear)
            tx_linear = tx
        else:
            tx, rx = _ssfm_batch(models, pulse, cfg.ssfm, noise_psd, rng)
            tx_linear = rx_linear = None
            if "awgn-ref" in active:
                tx_linear, _, rx_linear = _memoryless_batch(
                    models, pulse, noise_psd, rng, tx.size, True)
        cache: dict = {}
        for receiver in list(active):
            decided = _decide(receiver, models, pulse, cfg.bps, rx,
                              rx_linear, cache)
            if decided is None:
                continue
            truth = tx_linear if receiver == "awgn-ref" else tx
            errors[receiver] += int(np.sum(decided != truth))
            symbols[receiver] += decided.size
            if errors[receiver] >= cfg.min_errors:
                active.discard(receiver)
        done += tx.size
        batch_idx += 1

    records = []
    for receiver in cfg.receivers:
        n, k = symbols[receiver], errors[receiver]
        ser = k / n if n else 0.0
        stderr = float(np.sqrt(ser * (1.0 - ser) / n)) if n else 0.0
        censored = receiver in active and k < 10
        records.append(SerRecord(power_dbm=power, receiver=receiver, symbols=n,
                                 errors=k, ser=ser, stderr=stderr,
                                 censored=censored, seed=cfg.seed,
                                 config_hash=config_hash))
    return records


def run_sweep(cfg: SweepCfg, *, config_hash: str = "",
              threads: int = 1) -> list[SerRecord]:
    """Measure SER per (power, receiver) until min_errors or max_symbols.

    Every batch derives its own counter-based random stream from
    (seed, power index, batch index), so results do not depend on how many
    worker processes share the grid.
    """
    pulse = make_pulse(cfg.pulse_kind, cfg.samples_per_symbol,
                       cfg.fiber.symbol_period, fwhm=cfg.fwhm)
    _warn_if_mismatched(cfg)
    _warn_if_underresolved(cfg, pulse)
    indices = range(len(cfg.power_grid_dbm))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_point, [cfg] * len(cfg.power_grid_dbm),
                                   indices, [config_hash] * len(cfg.power_grid_dbm)))
    else:
        chunks = [_run_point(cfg, i, config_hash) for i in indices]
    return [record for chunk in chunks for record in chunk]


def asymptotic_check(fiber: FiberParams, power_dbm: float = 30.0,
                     n_symbols: int = 100_000, *, prior_peak: float | None = None,
                     samples_per_symbol: int = 100, batch_symbols: int = 8192,
                     seed: int = 0) -> list[AsymptoticRow]:
    """Measure the triangular-pulse large-power behaviour on the memoryless
    channel: the mixture-MAP error floor 1 - max prior, and the vanishing
    error of the interference-matched correlator receivers.
    """
    cfg = SweepCfg(fiber=fiber, power_grid_dbm=(power_dbm,),
                   receivers=("mfs-map", "mxm-md", "mxm-ts"),
                   pulse_kind="triangular", prior_peak=prior_peak,
                   samples_per_symbol=samples_per_symbol, seed=seed)
    pulse = make_pulse("triangular", samples_per_symbol, fiber.symbol_period)
    _warn_if_underresolved(cfg, pulse)
    models = _build_models(cfg, power_dbm, pulse)
    noise_psd = derive(fiber).noise_psd
    errors = dict.fromkeys(cfg.receivers, 0)
    done = 0
    batch_idx = 0
    while done < n_symbols:
        n = min(batch_symbols, n_symbols - done)
        rng = _stream(seed, _PURPOSE_ASYMPTOTIC, 0, batch_idx)
        tx, rx, _ = _memoryless_batch(models, pulse, noise_psd, rng, n, False)
        cache: dict = {}
        for receiver in cfg.receivers:
            decided = _decide(receiver, models, pulse, cfg.bps, rx, None, cache)
            errors[receiver] += int(np.sum(decided != tx))
        done += n
        batch_idx += 1
    limits = {"mfs-map": 1.0 - float(np.max(models.constellation.priors)),
              "mxm-md": 0.0, "mxm-ts": 0.0}
    rows = []
    for receiver in cfg.receivers:
        ser = errors[receiver] / done
        rows.append(AsymptoticRow(receiver=receiver, ser=ser,
                                  stderr=float(np.sqrt(ser * (1 - ser) / done)),
                                  limit=limits[receiver], symbols=done))
    return rows


def scatter_dump(fiber: FiberParams, power_dbm: float, demod: str,
                 n_symbols: int, *, pulse_kind: str = "truncated_gaussian",
                 fwhm: float = 0.5, samples_per_symbol: int = 100,
                 eta_override: float | None = None,
                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Demodulator outputs paired with their transmitted symbols.

    Returns (tx, out): the sent channel-1 symbols and, per symbol, the
    matched-filter output ('mfs') or the de-rotated maximum-matching
    estimate ('mxm').
    """
    if demod not in ("mfs", "mxm"):
        raise ValueError("demod must be 'mfs' or 'mxm'")
    if n_symbols < 0:
        raise ValueError("n_symbols must be non-negative")
    cfg = SweepCfg(fiber=fiber, power_grid_dbm=(power_dbm,),
                   receivers=("mfs-md",), pulse_kind=pulse_kind, fwhm=fwhm,
                   samples_per_symbol=samples_per_symbol, seed=seed,
                   eta_override=eta_override)
    pulse = make_pulse(pulse_kind, samples_per_symbol, fiber.symbol_period,
                       fwhm=fwhm)
    models = _build_models(cfg, power_dbm, pulse)
    noise_psd = derive(fiber).noise_psd
    tx_parts, out_parts = [], []
    done = 0
    batch_idx = 0
    while done < n_symbols:
        n = min(cfg.batch_symbols, n_symbols - done)
        rng = _stream(seed, _PURPOSE_SCATTER, 0, batch_idx)
        tx, rx, _ = _memoryless_batch(models, pulse, noise_psd, rng, n, False)
        if demod == "mfs":
            out = mfs_block(rx, pulse)
        else:
            out = mxm_from_stats(ss_project_block(rx, models.basis),
                                 models.basis)[0]
        tx_parts.append(models.constellation.points[tx])
        out_parts.append(out)
        done += n
        batch_idx += 1
    if not tx_parts:
        return np.empty(0, dtype=complex), np.empty(0, dtype=complex)
    return np.concatenate(tx_parts), np.concatenate(out_parts)


def format_ser_csv(records: list[SerRecord], *, config_hash: str,
                   version: str) -> str:
    """Render sweep records as the stable CSV artifact (comment line first)."""
    lines = [f"# config_hash={config_hash} version={version}",
             "power_dbm,receiver,symbols,errors,ser,stderr,censored,seed,config_hash"]
    for r in records:
        lines.append(f"{r.power_dbm!r},{r.receiver},{r.symbols},{r.errors},"
                     f"{r.ser!r},{r.stderr!r},{int(r.censored)},{r.seed},"
                     f"{r.config_hash}")
    return "\n".join(lines) + "\n"
