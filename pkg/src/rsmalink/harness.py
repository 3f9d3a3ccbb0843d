"""Seeded Monte Carlo experiment runner and report emission.

One trial = one fading block: draw a channel, build the precoder from
the transmitter's estimate, send the configured training prefix plus a
data payload through it, train the learned receiver on the prefix, and
detect the payload with every selected receiver.  Trials are independent
work units seeded as (seed, snr index, trial index), so serial and
parallel execution produce identical reports.
"""

from __future__ import annotations

import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .channel import SystemConfig, draw_channel, synthesize_received
from .errors import ConfigError, ContractError, EqualizerSingularityError
from .modem import CONSTELLATION_NAMES, constellation_from_name
from .nn import default_train_spec
from .precoding import STRATEGIES, build_precoder
from .receivers import (
    RECEIVER_NAMES,
    map_detect,
    mbdl_build,
    mbdl_detect,
    mbdl_train,
    sic_detect,
)
from .training import PATTERNS, LabeledTrainingSet, block_size, generate_training_indices, \
    interpolate_at_receiver, overhead

CSV_HEADER = ("receiver", "snr_db", "stream", "ser", "trials", "overhead_pct", "seed")

OVERHEAD_HEADER = ("pattern", "snr_db", "training_symbols", "data_symbols",
                   "overhead_pct", "seed")


@dataclass
class Scenario:
    """Fully resolved experiment description."""

    nt: int
    k: int
    snr_db: tuple[float, ...]
    alpha: float = 0.6
    noise_power: float | tuple[float, ...] = 1.0
    sigma_k: float | tuple[float, ...] = 1.0
    common_mod: str = "qpsk"
    private_mods: str | tuple[str, ...] = "qpsk"
    precoder_strategy: str = "svd_rzf"
    common_fraction: float = 0.5
    receivers: tuple[str, ...] = ("map", "sic_perfect", "sic_imperfect", "mbdl")
    pattern: str = "minimal"
    blocks: int = 20
    jitter_replicas: int = 3
    trials: int = 10
    data_symbols: int = 256
    learning_rate: float = 0.01
    seed: int = 0
    workers: int = 1
    perfect_csi: bool = False
    independent_csir_error: bool = True

    def __post_init__(self):
        if self.nt < 1:
            raise ConfigError(f"nt: must be >= 1, got {self.nt}")
        if self.k < 1:
            raise ConfigError(f"k: must be >= 1, got {self.k}")
        self.snr_db = tuple(float(v) for v in np.atleast_1d(self.snr_db))
        if not self.snr_db:
            raise ConfigError("snr_db: the sweep must not be empty")
        if not np.isscalar(self.noise_power):
            self.noise_power = tuple(float(v) for v in self.noise_power)
        if np.any(np.asarray(self.noise_power) < 0):
            raise ConfigError("noise_power: entries must be >= 0")
        if not np.isscalar(self.sigma_k):
            self.sigma_k = tuple(float(v) for v in self.sigma_k)
        if np.any(np.asarray(self.sigma_k) <= 0):
            raise ConfigError("sigma_k: entries must be > 0")
        if isinstance(self.private_mods, str):
            self.private_mods = (self.private_mods,) * self.k
        else:
            self.private_mods = tuple(self.private_mods)
        if len(self.private_mods) != self.k:
            raise ConfigError(
                f"modulation.private: expected {self.k} entries, got {len(self.private_mods)}")
        for name in (self.common_mod,) + self.private_mods:
            if name not in CONSTELLATION_NAMES:
                raise ConfigError(f"modulation: unknown constellation {name!r}")
        if self.precoder_strategy not in STRATEGIES:
            raise ConfigError(f"precoder.strategy: unknown {self.precoder_strategy!r}")
        if not 0.0 <= self.common_fraction <= 1.0:
            raise ConfigError(
                f"precoder.common_fraction: must lie in [0, 1], got {self.common_fraction}")
        self.receivers = tuple(self.receivers)
        for r in self.receivers:
            if r not in RECEIVER_NAMES:
                raise ConfigError(f"receivers: unknown receiver {r!r}")
        if not self.receivers:
            raise ConfigError("receivers: select at least one receiver")
        if self.pattern not in PATTERNS:
            raise ConfigError(f"training.pattern: unknown {self.pattern!r}")
        if self.blocks < 1:
            raise ConfigError(f"training.blocks: must be >= 1, got {self.blocks}")
        if self.jitter_replicas < 0:
            raise ConfigError(f"training.jitter_replicas: must be >= 0, got {self.jitter_replicas}")
        if self.trials < 1:
            raise ConfigError(f"trials: must be >= 1, got {self.trials}")
        if self.data_symbols < 1:
            raise ConfigError(f"data_symbols: must be >= 1, got {self.data_symbols}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        self.seed = int(self.seed)

    def constellations(self):
        return [constellation_from_name(self.common_mod)] + \
            [constellation_from_name(m) for m in self.private_mods]

    def training_symbols(self) -> int:
        return self.blocks * block_size(self.pattern, self.constellations())

    def mean_noise(self) -> float:
        return float(np.mean(self.noise_power))

    def to_config_dict(self) -> dict:
        """Config-schema echo; parsing it back yields an equal Scenario."""
        noise = self.noise_power if np.isscalar(self.noise_power) else list(self.noise_power)
        sigma = self.sigma_k if np.isscalar(self.sigma_k) else list(self.sigma_k)
        return {
            "nt": self.nt,
            "k": self.k,
            "snr_db": list(self.snr_db),
            "alpha": self.alpha,
            "noise_power": noise,
            "sigma_k": sigma,
            "modulation": {"common": self.common_mod, "private": list(self.private_mods)},
            "precoder": {"strategy": self.precoder_strategy,
                         "common_fraction": self.common_fraction},
            "training": {"pattern": self.pattern, "blocks": self.blocks,
                         "jitter_replicas": self.jitter_replicas},
            "receivers": list(self.receivers),
            "trials": self.trials,
            "data_symbols": self.data_symbols,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "workers": self.workers,
            "perfect_csi": self.perfect_csi,
            "independent_csir_error": self.independent_csir_error,
        }


_TOP_LEVEL_TYPES = {
    "nt": int, "k": int, "snr_db": list, "alpha": (int, float),
    "noise_power": (int, float, list), "sigma_k": (int, float, list),
    "modulation": dict, "precoder": dict, "training": dict,
    "receivers": list, "trials": int, "data_symbols": int,
    "learning_rate": (int, float), "seed": int, "workers": int,
    "perfect_csi": bool, "independent_csir_error": bool,
}

_NESTED_TYPES = {
    "modulation": {"common": str, "private": (str, list)},
    "precoder": {"strategy": str, "common_fraction": (int, float)},
    "training": {"pattern": str, "blocks": int, "jitter_replicas": int},
}


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise ConfigError(f"{key}: duplicate key in configuration")
        seen[key] = value
    return seen


def _check_types(payload: dict) -> None:
    for key, value in payload.items():
        if key not in _TOP_LEVEL_TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        expected = _TOP_LEVEL_TYPES[key]
        if not isinstance(value, expected) or isinstance(value, bool) != (expected is bool):
            raise ConfigError(f"{key}: expected {expected}, got {type(value).__name__}")
        if key in _NESTED_TYPES:
            for sub, sub_value in value.items():
                if sub not in _NESTED_TYPES[key]:
                    raise ConfigError(f"{key}.{sub}: unknown configuration key")
                if not isinstance(sub_value, _NESTED_TYPES[key][sub]):
                    raise ConfigError(
                        f"{key}.{sub}: expected {_NESTED_TYPES[key][sub]}, "
                        f"got {type(sub_value).__name__}")


def parse_config(text: str) -> Scenario:
    """Parse and validate a JSON scenario document.

    Required keys: nt, k, snr_db.  Everything else falls back to the
    standard simulation defaults (alpha 0.6, unit channel and noise
    power, learning rate 0.01, minimal pattern with 20 blocks, 256 data
    symbols).  Every diagnostic names the offending key.

    Raises:
        ConfigError: unknown key, duplicate key, type mismatch, or
            constraint violation.
    """
    try:
        payload = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("configuration must be a JSON object")
    _check_types(payload)
    for required in ("nt", "k", "snr_db"):
        if required not in payload:
            raise ConfigError(f"{required}: required key is missing")

    kwargs = {}
    for key in ("nt", "k", "snr_db", "alpha", "noise_power", "seed", "trials",
                "data_symbols", "learning_rate", "workers", "perfect_csi",
                "independent_csir_error", "receivers"):
        if key in payload:
            kwargs[key] = payload[key]
    if "sigma_k" in payload:
        kwargs["sigma_k"] = payload["sigma_k"]
    if "modulation" in payload:
        mod = payload["modulation"]
        if "common" in mod:
            kwargs["common_mod"] = mod["common"]
        if "private" in mod:
            kwargs["private_mods"] = mod["private"]
    if "precoder" in payload:
        pre = payload["precoder"]
        if "strategy" in pre:
            kwargs["precoder_strategy"] = pre["strategy"]
        if "common_fraction" in pre:
            kwargs["common_fraction"] = pre["common_fraction"]
    if "training" in payload:
        tr = payload["training"]
        if "pattern" in tr:
            kwargs["pattern"] = tr["pattern"]
        if "blocks" in tr:
            kwargs["blocks"] = tr["blocks"]
        if "jitter_replicas" in tr:
            kwargs["jitter_replicas"] = tr["jitter_replicas"]

    if isinstance(kwargs.get("receivers"), list):
        kwargs["receivers"] = tuple(kwargs["receivers"])
    if isinstance(kwargs.get("snr_db"), list):
        kwargs["snr_db"] = tuple(kwargs["snr_db"])
    if isinstance(kwargs.get("private_mods"), list):
        kwargs["private_mods"] = tuple(kwargs["private_mods"])
    return Scenario(**kwargs)


@dataclass(eq=False)
class SerRow:
    receiver: str
    snr_db: float
    stream: str
    ser: float
    trials: int
    overhead_pct: float
    seed: int
    errors: int = 0
    symbols: int = 0

    @property
    def binomial_se(self) -> float:
        if self.symbols == 0:
            return 0.0
        return float(np.sqrt(self.ser * (1.0 - self.ser) / self.symbols))


@dataclass(eq=False)
class SerReport:
    scenario: Scenario
    rows: list[SerRow]
    training_symbols: int
    skipped: dict

    csv_header = CSV_HEADER

    def csv_records(self):
        for row in self.rows:
            yield {"receiver": row.receiver, "snr_db": row.snr_db, "stream": row.stream,
                   "ser": row.ser, "trials": row.trials,
                   "overhead_pct": row.overhead_pct, "seed": row.seed}

    def lookup(self, receiver: str, snr_db: float, stream: str) -> SerRow:
        for row in self.rows:
            if (row.receiver, row.stream) == (receiver, stream) and row.snr_db == snr_db:
                return row
        raise KeyError((receiver, snr_db, stream))

    def manifest(self) -> dict:
        return _manifest_common(self.scenario, {
            "training_symbols": self.training_symbols,
            "skipped_trials": self.skipped,
            "self_check": [
                {"receiver": r.receiver, "snr_db": r.snr_db, "stream": r.stream,
                 "errors": r.errors, "symbols": r.symbols,
                 "binomial_se": _sig6(r.binomial_se)}
                for r in self.rows],
        })


@dataclass(eq=False)
class OverheadRow:
    pattern: str
    snr_db: float
    training_symbols: float
    data_symbols: int
    overhead_pct: float
    seed: int


@dataclass(eq=False)
class OverheadReport:
    scenario: Scenario
    rows: list[OverheadRow]

    csv_header = OVERHEAD_HEADER

    def csv_records(self):
        for row in self.rows:
            yield {"pattern": row.pattern, "snr_db": row.snr_db,
                   "training_symbols": row.training_symbols,
                   "data_symbols": row.data_symbols,
                   "overhead_pct": row.overhead_pct, "seed": row.seed}

    def manifest(self) -> dict:
        return _manifest_common(self.scenario, {})


@dataclass(eq=False)
class BlockOutcome:
    """Decode-success record of one fading block.

    ``bits_received`` holds, per user, the number of data bits credited
    in the block (zero when the block failed to decode); ``block_symbols``
    is the modulated block length.
    """

    bits_received: Sequence[float]
    block_symbols: int


def compute_throughput(outcomes: Iterable[BlockOutcome]) -> float:
    """Sum of credited bits over the sum of block lengths (bits/s/Hz)."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ContractError("no block outcomes to score")
    bits = 0.0
    symbols = 0
    for o in outcomes:
        if o.block_symbols < 0 or np.any(np.asarray(o.bits_received) < 0):
            raise ContractError("block outcomes must be non-negative")
        bits += float(np.sum(o.bits_received))
        symbols += o.block_symbols
    if symbols == 0:
        raise ContractError("total block length is zero")
    return bits / symbols


def _trial_rng(sc: Scenario, snr_idx: int, trial: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((sc.seed, snr_idx, trial, role)))


def _trial_seed(sc: Scenario, snr_idx: int, trial: int, role: int) -> int:
    return int(np.random.SeedSequence((sc.seed, snr_idx, trial, role)).generate_state(1)[0])


def _pt_for_snr(sc: Scenario, snr_db: float) -> float:
    # the sweep scales the power budget against the mean noise power;
    # noiseless runs fall back to a unit reference
    reference = sc.mean_noise() or 1.0
    return 10.0 ** (snr_db / 10.0) * reference


def run_trial(sc: Scenario, snr_idx: int, trial: int) -> dict:
    """One fading block at one sweep point; returns per-receiver error counts.

    The result maps receiver name -> ("skipped" | list over users of
    (common_errors, private_errors)).
    """
    snr_db = sc.snr_db[snr_idx]
    pt = _pt_for_snr(sc, snr_db)
    consts = sc.constellations()
    top_order = max(c.order for c in consts[1:])

    cfg = SystemConfig(nt=sc.nt, k=sc.k, pt=pt, noise_power=sc.noise_power,
                       sigma_sq=sc.sigma_k, alpha=sc.alpha,
                       common_mod=sc.common_mod, private_mods=sc.private_mods,
                       rng_seed=sc.seed)
    rng = _trial_rng(sc, snr_idx, trial, 0)
    realization = draw_channel(cfg, rng,
                               sigma_e_sq=0.0 if sc.perfect_csi else None,
                               independent_rx_estimate=sc.independent_csir_error)
    precoder = build_precoder(realization.hhat, pt, sc.common_fraction,
                              sc.precoder_strategy, sc.mean_noise())

    train_idx = generate_training_indices(sc.pattern, consts, sc.blocks, rng)
    t_count = train_idx.shape[1]
    data_idx = np.stack([rng.integers(0, c.order, size=sc.data_symbols) for c in consts])
    all_idx = np.concatenate([train_idx, data_idx], axis=1)
    symbols = np.stack([c.symbols[all_idx[i]] for i, c in enumerate(consts)])
    y = synthesize_received(realization.h, precoder, symbols, sc.noise_power, rng)

    result = {}
    for name in sc.receivers:
        per_user = []
        try:
            for user in range(sc.k):
                y_data = y[user, t_count:]
                true_c = data_idx[0]
                true_p = data_idx[user + 1]
                if name == "map":
                    res = map_detect(y_data, realization.h[:, user], precoder, user,
                                     consts[0], consts[user + 1])
                elif name == "sic_perfect":
                    res = sic_detect(y_data, realization.h[:, user], precoder, user,
                                     consts[0], consts[user + 1])
                elif name == "sic_imperfect":
                    res = sic_detect(y_data, realization.hhat_rx[:, user], precoder, user,
                                     consts[0], consts[user + 1])
                else:
                    res = _detect_mbdl(sc, snr_idx, trial, user, consts, top_order,
                                       y[user, :t_count], train_idx, y_data)
                per_user.append((int(np.sum(res.common_index != true_c)),
                                 int(np.sum(res.private_index != true_p))))
        except EqualizerSingularityError:
            result[name] = "skipped"
            continue
        result[name] = per_user
    return result


def _detect_mbdl(sc, snr_idx, trial, user, consts, top_order, y_train, train_idx, y_data):
    samples = LabeledTrainingSet(y=y_train, common_index=train_idx[0],
                                 private_index=train_idx[user + 1],
                                 common_const=consts[0], private_const=consts[user + 1])
    if sc.pattern == "interpolating":
        samples = interpolate_at_receiver(
            samples, jitter_replicas=sc.jitter_replicas,
            rng=_trial_rng(sc, snr_idx, trial, 400 + user))
    receiver = mbdl_build(consts[0], consts[user + 1], user=user,
                          rng=_trial_rng(sc, snr_idx, trial, 100 + user))
    common_spec = default_train_spec(consts[0].bits_per_symbol, samples.count, top_order,
                                     learning_rate=sc.learning_rate,
                                     rng_seed=_trial_seed(sc, snr_idx, trial, 200 + user))
    private_spec = default_train_spec(consts[user + 1].bits_per_symbol, samples.count,
                                      top_order, learning_rate=sc.learning_rate,
                                      rng_seed=_trial_seed(sc, snr_idx, trial, 300 + user))
    mbdl_train(receiver, samples, common_spec, private_spec)
    return mbdl_detect(receiver, y_data)


def _run_trial_task(args):
    sc_dict, snr_idx, trial = args
    sc = Scenario(**sc_dict)
    return run_trial(sc, snr_idx, trial)


def _scenario_kwargs(sc: Scenario) -> dict:
    return {f.name: getattr(sc, f.name) for f in fields(Scenario)}


def run_ser_experiment(sc: Scenario) -> SerReport:
    """Sweep SNR points over seeded trials and tally symbol error rates.

    Equalizer singularities skip the affected receiver's trial and are
    counted in the report.  The output is reproducible from (config,
    seed) and independent of the worker count.
    """
    tasks = [(snr_idx, trial) for snr_idx in range(len(sc.snr_db))
             for trial in range(sc.trials)]
    if sc.workers > 1:
        payload = _scenario_kwargs(sc)
        with ProcessPoolExecutor(max_workers=sc.workers) as pool:
            outcomes = list(pool.map(_run_trial_task,
                                     [(payload, s, t) for s, t in tasks],
                                     chunksize=max(1, len(tasks) // (4 * sc.workers))))
    else:
        outcomes = [run_trial(sc, s, t) for s, t in tasks]

    t_count = sc.training_symbols()
    overhead_pct = overhead(t_count, t_count + sc.data_symbols)

    rows = []
    skipped: dict[str, dict[str, int]] = {}
    for snr_idx, snr_db in enumerate(sc.snr_db):
        trial_results = [outcomes[snr_idx * sc.trials + t] for t in range(sc.trials)]
        for name in sc.receivers:
            picked = [r[name] for r in trial_results]
            kept = [p for p in picked if p != "skipped"]
            n_skipped = len(picked) - len(kept)
            if n_skipped:
                skipped.setdefault(name, {})[f"{snr_db:g}"] = n_skipped
            n_symbols = len(kept) * sc.data_symbols
            for user in range(sc.k):
                c_err = sum(p[user][0] for p in kept)
                p_err = sum(p[user][1] for p in kept)
                for stream, err in ((f"common_u{user + 1}", c_err),
                                    (f"private_u{user + 1}", p_err)):
                    ser = err / n_symbols if n_symbols else float("nan")
                    rows.append(SerRow(receiver=name, snr_db=snr_db, stream=stream,
                                       ser=ser, trials=len(kept),
                                       overhead_pct=overhead_pct, seed=sc.seed,
                                       errors=err, symbols=n_symbols))
    return SerReport(scenario=sc, rows=rows, training_symbols=t_count, skipped=skipped)


def run_overhead_experiment(sc: Scenario) -> OverheadReport:
    """Average training-symbol count and overhead per sweep point.

    Without adaptive modulation the per-trial training size is fixed by
    the configured pattern and constellations, so the average is exact.
    """
    rows = []
    t_count = float(sc.training_symbols())
    for snr_db in sc.snr_db:
        pct = overhead(int(t_count), int(t_count) + sc.data_symbols)
        rows.append(OverheadRow(pattern=sc.pattern, snr_db=snr_db,
                                training_symbols=t_count,
                                data_symbols=sc.data_symbols,
                                overhead_pct=pct, seed=sc.seed))
    return OverheadReport(scenario=sc, rows=rows)


def _sig6(value):
    """Round a float to 6 significant digits for serialization."""
    if isinstance(value, float):
        return float(f"{value:.6g}")
    return value


def _manifest_common(sc: Scenario, extra: dict) -> dict:
    manifest = {
        "config": sc.to_config_dict(),
        "seed": sc.seed,
        "versions": {
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
            "rsmalink": __version__,
        },
    }
    manifest.update(extra)
    return manifest


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def emit_report(report, out_path: str, fmt: str = "csv") -> list[str]:
    """Write a report as CSV plus a JSON manifest, or as one JSON file.

    Returns the written paths.  Output is byte-stable for identical
    (config, seed) runs: no timestamps, sorted manifest keys, numeric
    fields at 6 significant digits.

    Raises:
        ConfigError: for an unknown format.
        OSError: surfaced with the offending path in the message.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format: unknown {fmt!r}, expected csv or json")
    out_path = str(out_path)
    written = []
    try:
        if fmt == "csv":
            with open(out_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(report.csv_header)
                for record in report.csv_records():
                    writer.writerow([_format_cell(record[col]) for col in report.csv_header])
            written.append(out_path)
            manifest_path = out_path + ".manifest.json"
            with open(manifest_path, "w", encoding="utf-8") as fh:
                json.dump(report.manifest(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(manifest_path)
        else:
            payload = {
                "manifest": report.manifest(),
                "rows": [{k: _sig6(v) for k, v in record.items()}
                         for record in report.csv_records()],
            }
            with open(out_path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            written.append(out_path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out_path!r}: {exc}") from exc
    return written
