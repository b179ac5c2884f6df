"""Monte Carlo harness: break-frequency tables and coverage of the robust
standard errors."""

from __future__ import annotations

import csv
import io
import json
import logging
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import CountCPError, SingularCovarianceError
from .models import MeanFamily
from .qmle import OptimizerOptions, fit_segment, information_matrices
from .segment import (DetectionConfig, PenaltySpec, build_ml_matrix, penalty_value,
                      segment_from_matrix, unpenalized_curve)
from .simulate import Emission, ScenarioConfig, simulate_piecewise

logger = logging.getLogger(__name__)

WORKERS_ENV = "COUNTCP_WORKERS"


@dataclass
class FrequencyReport:
    """Outcome of R replications for one scenario and one penalty.

    ``k_hats[r]`` is None when replication r failed (e.g. slope calibration
    refused); failed runs are excluded from every frequency.
    """

    scenario: str
    n: int
    penalty: str
    replications: int
    k_star: int
    tau_star: list[float]
    k_hats: list[int | None] = field(default_factory=list)
    breaks: list[list[int]] = field(default_factory=list)
    kappas: list[float | None] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(k is None for k in self.k_hats)

    @property
    def completed(self) -> int:
        return self.replications - self.failures

    def _count(self, pred) -> int:
        return sum(1 for k in self.k_hats if k is not None and pred(k))

    def _frac(self, count: int) -> Fraction:
        return Fraction(count, self.completed) if self.completed else Fraction(0)

    @property
    def freq_equal(self) -> Fraction:
        return self._frac(self._count(lambda k: k == self.k_star))

    @property
    def freq_under(self) -> Fraction:
        return self._frac(self._count(lambda k: k < self.k_star))

    @property
    def freq_over(self) -> Fraction:
        return self._frac(self._count(lambda k: k > self.k_star))

    def _taus(self) -> np.ndarray:
        rows = [np.asarray(b, dtype=float) / self.n for k, b in zip(self.k_hats, self.breaks)
                if k == self.k_star]
        return np.array(rows).reshape(len(rows), self.k_star - 1)

    @property
    def tau_mean(self) -> list[float]:
        taus = self._taus()
        return taus.mean(axis=0).tolist() if len(taus) else [float("nan")] * (self.k_star - 1)

    @property
    def tau_sd(self) -> list[float]:
        taus = self._taus()
        if len(taus) < 2:
            return [float("nan")] * (self.k_star - 1)
        return taus.std(axis=0, ddof=1).tolist()

    @property
    def mean_tau_error(self) -> float:
        taus = self._taus()
        if self.k_star == 1 or not len(taus):
            return float("nan")
        return float(np.linalg.norm(taus - np.asarray(self.tau_star), axis=1).mean())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FrequencyReport":
        return cls(**data)

    def summary_row(self) -> dict:
        row = {
            "scenario": self.scenario,
            "n": self.n,
            "penalty": self.penalty,
            "replications": self.replications,
            "failures": self.failures,
            "freq_equal": float(self.freq_equal),
            "freq_under": float(self.freq_under),
            "freq_over": float(self.freq_over),
        }
        for j, (m, s) in enumerate(zip(self.tau_mean, self.tau_sd), start=1):
            row[f"tau{j}_mean"] = m
            row[f"tau{j}_sd"] = s
        row["mean_tau_error"] = self.mean_tau_error
        return row


def reports_to_csv(reports: Sequence[FrequencyReport]) -> str:
    rows = [r.summary_row() for r in reports]
    header: list[str] = []
    for row in rows:
        header += [k for k in row if k not in header]
    header.remove("mean_tau_error")
    header.append("mean_tau_error")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def reports_to_json(reports: Sequence[FrequencyReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[FrequencyReport]:
    return [FrequencyReport.from_dict(d) for d in json.loads(text)]


def _one_replication(scenario: ScenarioConfig, r: int, penalties: Sequence[PenaltySpec],
                     cfg: DetectionConfig):
    y = simulate_piecewise(scenario, replication=r)
    family = scenario.family
    k_max, _ = cfg.resolve(y.size, family.dim)
    ml = build_ml_matrix(y, family, cfg)
    qlik = unpenalized_curve(ml, k_max)
    out = []
    for pen in penalties:
        try:
            if pen.variant == "slope":
                kappa = penalty_value(pen, y.size, qlik, cfg.slope_window)
            else:
                kappa = penalty_value(pen, y.size)
            k_hat, breaks, _ = segment_from_matrix(ml, kappa, k_max)
            out.append((k_hat, breaks.tolist(), kappa))
        except CountCPError as exc:
            logger.info("replication %d, penalty %s failed: %s", r, pen.name, exc)
            out.append((None, [], None))
    return out


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def run_replications(scenario: ScenarioConfig, R: int, penalties: Sequence[PenaltySpec],
                     cfg: DetectionConfig | None = None, workers: int | None = None,
                     progress: Callable[[int, int], None] | None = None) -> list[FrequencyReport]:
    """Simulate R series from ``scenario`` (stream ``(scenario.seed, r)`` for
    replication r), detect with every penalty on a shared likelihood matrix,
    and tabulate one report per penalty."""
    if R < 1:
        raise ValueError("R must be at least 1")
    cfg = cfg or DetectionConfig()
    penalties = list(penalties)
    workers = _workers(workers)
    if workers == 1:
        results = []
        for r in range(R):
            results.append(_one_replication(scenario, r, penalties, cfg))
            if progress:
                progress(r + 1, R)
    else:
        # fork is unsafe once the OpenMP runtime is initialized
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_one_replication, scenario, r, penalties, cfg) for r in range(R)]
            results = []
            for r, fut in enumerate(futures):
                results.append(fut.result())
                if progress:
                    progress(r + 1, R)
    reports = []
    for p, pen in enumerate(penalties):
        rep = FrequencyReport(scenario.name, scenario.n, pen.name, R, scenario.k_star,
                              list(scenario.tau_star))
        for res in results:
            k_hat, breaks, kappa = res[p]
            rep.k_hats.append(k_hat)
            rep.breaks.append(breaks)
            rep.kappas.append(kappa)
        reports.append(rep)
    return reports


def stderr_progress(done: int, total: int) -> None:
    print(f"\rreplication {done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)


@dataclass
class CoverageReport:
    """Empirical coverage of theta* by theta_hat +/- z * se, per coordinate."""

    sandwich: np.ndarray
    naive: np.ndarray
    used: int
    replications: int


def normality_check(family: MeanFamily, theta_star, n: int, R: int,
                    emission: Emission | None = None, seed: int = 0,
                    level: float = 0.95) -> CoverageReport:
    """Fit a single known segment R times and count how often the Wald
    interval built from the sandwich (and from J^-1 alone) covers theta*."""
    from scipy.stats import norm

    emission = emission or Emission("poisson")
    theta_star = np.asarray(theta_star, dtype=float)
    z = norm.ppf(0.5 + level / 2)
    scen = ScenarioConfig(family, emission, n, (), (tuple(theta_star),), seed=seed, name="coverage")
    hits_s = np.zeros(family.dim)
    hits_n = np.zeros(family.dim)
    used = 0
    opts = OptimizerOptions()
    from .models import mean_gradient_path, truncated_mean_path
    from .qmle import covariance_from_matrices

    for r in range(R):
        y = simulate_piecewise(scen, replication=r)
        fit = fit_segment(y, (1, n), family, opts)
        lam = truncated_mean_path(family, fit.theta_hat, y)
        grad = mean_gradient_path(family, fit.theta_hat, y)
        j_hat, i_hat = information_matrices(y.astype(float), lam, grad)
        try:
            cov = covariance_from_matrices(j_hat, i_hat, n)
        except SingularCovarianceError:
            continue
        naive_se = np.sqrt(np.diag(np.linalg.inv(j_hat)) / n)
        err = np.abs(fit.theta_hat - theta_star)
        hits_s += err <= z * cov.std_errors
        hits_n += err <= z * naive_se
        used += 1
    denom = max(used, 1)
    return CoverageReport(hits_s / denom, hits_n / denom, used, R)
