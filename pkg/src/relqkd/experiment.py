"""Multi-series runs, parameter sweeps and their JSON/CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relqkd.adversary import make_strategy
from relqkd.config import ExperimentConfig, numeric_keys
from relqkd.core_math import KeyRateInputs, SignalAlphabet, binary_entropy, holevo_bound, secret_key_rate, state_overlap
from relqkd.errors import ConfigError
from relqkd.protocol import SeriesReport, run_series

__all__ = [
    "SERIES_CSV_VERSION",
    "SWEEP_CSV_VERSION",
    "run_one",
    "run_experiment",
    "Summary",
    "summarize",
    "series_csv",
    "reports_json",
    "parse_range",
    "sweep",
    "sweep_csv",
]

SERIES_CSV_VERSION = "# relqkd series-csv v1"
SWEEP_CSV_VERSION = "# relqkd sweep-csv v1"
SERIES_COLUMNS = ["n_pulses", "clicks", "qber", "eta", "holevo", "key_rate", "secret_bits", "timing_ok", "seed"]
SWEEP_COLUMNS = [
    "value",
    "n_series",
    "mean_clicks",
    "qber",
    "qber_sigma",
    "mean_eta",
    "discarded",
    "holevo",
    "key_rate",
    "secret_bits",
    "info_per_click",
]


def run_one(job: tuple[ExperimentConfig, int]) -> SeriesReport:
    exp, index = job
    strategy = make_strategy(exp.attack_name, exp.attack_params)
    return run_series(exp.series_config(index), strategy)


def _map(jobs: list, workers: int) -> list[SeriesReport]:
    if workers <= 1 or len(jobs) <= 1:
        return [run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map() keeps submission order, so output does not depend on scheduling
        return list(pool.map(run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_experiment(exp: ExperimentConfig, workers: int | None = None) -> list[SeriesReport]:
    w = exp.data["output"]["workers"] if workers is None else workers
    return _map([(exp, i) for i in range(exp.n_series)], w)


@dataclass(frozen=True)
class Summary:
    n_series: int
    mean_clicks: float
    qber: float  # pooled over all clicks
    qber_sigma: float
    mean_eta: float
    discarded: int
    holevo: float
    key_rate: float
    secret_bits: int
    info_per_click: float

    def digest(self) -> str:
        return (
            f"series={self.n_series} mean_raw_bits={self.mean_clicks:.3f} "
            f"qber={100 * self.qber:.2f}% key_rate={self.key_rate:.4f} "
            f"secret_bits={self.secret_bits} discarded={self.discarded}"
        )


def summarize(reports: Sequence[SeriesReport]) -> Summary:
    clicks = sum(r.clicks for r in reports)
    errors = sum(sum(a != b for a, b in zip(r.sifted_alice_bits, r.sifted_bob_bits)) for r in reports)
    q = errors / clicks if clicks else 0.0
    sigma = math.sqrt(q * (1 - q) / clicks) if clicks else 0.0
    eta = float(np.mean([r.eta_timing for r in reports]))
    holevo = reports[0].holevo
    rate = secret_key_rate(KeyRateInputs(min(eta, 1.0), min(q, 0.5), holevo))
    known = sum(r.attack.bits_identified_sifted for r in reports if r.attack is not None)
    return Summary(
        n_series=len(reports),
        mean_clicks=clicks / len(reports),
        qber=q,
        qber_sigma=sigma,
        mean_eta=eta,
        discarded=sum(not r.timing_ok for r in reports),
        holevo=holevo,
        key_rate=rate,
        secret_bits=sum(r.secret_bits_estimate for r in reports),
        info_per_click=known / clicks if clicks else 0.0,
    )


def _seed_label(r: SeriesReport) -> str:
    s = r.seeds
    return f"{s.alice}/{s.bob}/{s.timing}/{s.noise}" if s is not None else ""


def series_csv(reports: Sequence[SeriesReport]) -> str:
    buf = io.StringIO()
    buf.write(SERIES_CSV_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for r in reports:
        w.writerow([
            r.n_pulses, r.clicks, repr(r.qber), repr(r.eta_timing), repr(r.holevo),
            repr(r.key_rate), r.secret_bits_estimate, int(r.timing_ok), _seed_label(r),
        ])
    return buf.getvalue()


def reports_json(reports: Sequence[SeriesReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1)


def write_outputs(reports: Sequence[SeriesReport], out_dir: str | Path, formats: Sequence[str]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "reports.json"
        p.write_text(reports_json(reports))
        written.append(p)
    if "csv" in formats:
        p = out / "series.csv"
        p.write_text(series_csv(reports))
        written.append(p)
    return written


def parse_range(text: str) -> list[float]:
    """``"a,b,c"`` lists values; ``"start:stop:num"`` is linear, append ``:log`` for geometric."""
    text = text.strip()
    if not text:
        raise ConfigError("empty range")
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
            raise ConfigError(f"bad range {text!r}; use start:stop:num[:log]")
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"bad range {text!r}") from None
        if num < 1:
            raise ConfigError("empty range")
        if len(parts) == 4:
            if start <= 0 or stop <= 0:
                raise ConfigError("log range needs positive bounds")
            return np.geomspace(start, stop, num).tolist()
        return np.linspace(start, stop, num).tolist()
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad range {text!r}") from None
    if not values:
        raise ConfigError("empty range")
    return values


def sweep(exp: ExperimentConfig, parameter: str, values: Sequence[float], workers: int | None = None) -> list[tuple[float, Summary]]:
    """Run the experiment at each value; rows come back in ``values`` order."""
    if parameter not in numeric_keys(exp.data):
        raise ConfigError(f"unknown sweep key {parameter!r}; valid keys: {', '.join(numeric_keys(exp.data))}")
    if not values:
        raise ConfigError("empty range")
    configs = [exp.with_value(parameter, v) for v in values]
    jobs = [(c, i) for c in configs for i in range(c.n_series)]
    w = exp.data["output"]["workers"] if workers is None else workers
    reports = _map(jobs, w)
    rows, pos = [], 0
    for v, c in zip(values, configs):
        rows.append((v, summarize(reports[pos : pos + c.n_series])))
        pos += c.n_series
    return rows


def sweep_csv(parameter: str, rows: Sequence[tuple[float, Summary]]) -> str:
    buf = io.StringIO()
    buf.write(f"{SWEEP_CSV_VERSION} parameter={parameter}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for v, s in rows:
        w.writerow([
            repr(float(v)), s.n_series, repr(s.mean_clicks), repr(s.qber), repr(s.qber_sigma),
            repr(s.mean_eta), s.discarded, repr(s.holevo), repr(s.key_rate), s.secret_bits,
            repr(s.info_per_click),
        ])
    return buf.getvalue()


def keyrate_row(mu: float, phi_deg: float, p_e: float, eta: float) -> dict[str, float]:
    a = SignalAlphabet.from_degrees(mu, phi_deg)
    c = holevo_bound(a)
    return {
        "mu": mu,
        "phi_deg": phi_deg,
        "p_e": p_e,
        "eta": eta,
        "epsilon": state_overlap(a),
        "holevo": c,
        "h_pe": binary_entropy(p_e),
        "R": secret_key_rate(KeyRateInputs(eta, p_e, c)),
    }
