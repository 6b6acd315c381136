"""Proper scoring rules for daily-profile ensembles, plus the evaluation loop.

All three scores compare an ensemble of generated profiles against one
observed profile; lower is better. The energy score uses the split-halves
estimator (pairing member i with member N/2 + i), so the ensemble size must
be even; the all-pairs U-statistic is kept alongside purely as a
cross-check. The variogram score is written as the literal double loop over
half-hour pairs with scalar accumulation so its value is reproducible
against an independent implementation bit for bit.
"""

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_ENSEMBLE = 200
DEFAULT_VARIOGRAM_P = 0.5

REPORT_HEADER = ["day", "generator", "rmse", "energy", "variogram_p05"]


class ScoringError(ValueError):
    pass


def _check(ensemble, y):
    ensemble = np.asarray(ensemble, dtype=float)
    y = np.asarray(y, dtype=float)
    if ensemble.ndim != 2 or y.ndim != 1 or ensemble.shape[1] != y.shape[0]:
        raise ScoringError("ensemble must be (n, H) against an (H,) observation")
    if not (np.isfinite(ensemble).all() and np.isfinite(y).all()):
        raise ScoringError("non-finite scoring inputs")
    return ensemble, y


def rmse(ensemble, y):
    """Euclidean distance between the ensemble mean and the observation."""
    ensemble, y = _check(ensemble, y)
    return float(np.linalg.norm(ensemble.mean(axis=0) - y))


def energy_score(ensemble, y):
    """Split-halves energy score.

    (2/N) sum_{i<=N/2} ||e_i - y|| - (1/N) sum_{i<=N/2} ||e_i - e_{N/2+i}||
    """
    ensemble, y = _check(ensemble, y)
    n = ensemble.shape[0]
    if n < 2 or n % 2:
        raise ScoringError(f"ensemble size {n} must be even (and at least 2)")
    half = n // 2
    first, second = ensemble[:half], ensemble[half:]
    term1 = 2.0 / n * np.linalg.norm(first - y, axis=1).sum()
    term2 = 1.0 / n * np.linalg.norm(first - second, axis=1).sum()
    return float(term1 - term2)


def energy_score_allpairs(ensemble, y):
    """All-pairs U-statistic estimator; cross-check only, not the pipeline score."""
    ensemble, y = _check(ensemble, y)
    n = ensemble.shape[0]
    if n < 2:
        raise ScoringError("need at least two ensemble members")
    term1 = np.linalg.norm(ensemble - y, axis=1).mean()
    diffs = ensemble[:, None, :] - ensemble[None, :, :]
    total = np.sqrt((diffs**2).sum(axis=2)).sum()
    return float(term1 - total / (2.0 * n * (n - 1)))


def variogram_score(ensemble, y, p=DEFAULT_VARIOGRAM_P):
    """Variogram score of order p over all ordered half-hour pairs.

    sum over (h, h') of (|y_h - y_h'|^p - E|e_h - e_h'|^p)^2, the
    expectation taken over ensemble members. Accumulation is a plain
    scalar loop in row-major order.
    """
    ensemble, y = _check(ensemble, y)
    if p <= 0:
        raise ScoringError(f"variogram order p={p!r} must be positive")
    n_h = y.shape[0]
    total = 0.0
    for i in range(n_h):
        for j in range(n_h):
            observed = abs(y[i] - y[j]) ** p
            expected = np.mean(np.abs(ensemble[:, i] - ensemble[:, j]) ** p)
            total += (observed - expected) ** 2
    return float(total)


@dataclass
class ScoreRow:
    day: int
    generator: str
    rmse: float
    energy: float
    variogram: float


@dataclass
class ScoreReport:
    rows: list
    n_samples: int
    variogram_p: float
    seed: int

    def generator_names(self):
        seen = []
        for row in self.rows:
            if row.generator not in seen:
                seen.append(row.generator)
        return seen

    def scores(self, generator, which):
        return np.array([getattr(r, which) for r in self.rows if r.generator == generator])

    def summary(self):
        """Per-generator mean and quartiles of each score."""
        out = {}
        for name in self.generator_names():
            out[name] = {}
            for which in ("rmse", "energy", "variogram"):
                values = self.scores(name, which)
                qs = np.quantile(values, (0.0, 0.25, 0.5, 0.75, 1.0))
                out[name][which] = {
                    "mean": float(values.mean()),
                    "min": float(qs[0]),
                    "q25": float(qs[1]),
                    "median": float(qs[2]),
                    "q75": float(qs[3]),
                    "max": float(qs[4]),
                }
        return out


def evaluate_generators(observations, generators, day_labels=None,
                        n_samples=DEFAULT_ENSEMBLE, variogram_p=DEFAULT_VARIOGRAM_P,
                        seed=0):
    """Score every generator on every observation day.

    generators maps a name to a callable (day_position, n_samples, seed) ->
    (n_samples, H) ensemble. Each day gets one derived seed shared by all
    generators, so identical generators produce identical rows.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2:
        raise ScoringError("observations must be (n_days, H)")
    if not generators:
        raise ScoringError("no generators to evaluate")
    if day_labels is None:
        day_labels = list(range(observations.shape[0]))

    rows = []
    for pos, label in enumerate(day_labels):
        day_seed = int(np.random.SeedSequence((seed, pos)).generate_state(1)[0])
        for name, make in generators.items():
            ensemble = make(pos, n_samples, day_seed)
            rows.append(
                ScoreRow(
                    day=int(label),
                    generator=name,
                    rmse=rmse(ensemble, observations[pos]),
                    energy=energy_score(ensemble, observations[pos]),
                    variogram=variogram_score(ensemble, observations[pos], variogram_p),
                )
            )
    return ScoreReport(rows=rows, n_samples=n_samples, variogram_p=variogram_p, seed=seed)


def write_report_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for row in report.rows:
            writer.writerow(
                [row.day, row.generator, repr(row.rmse), repr(row.energy), repr(row.variogram)]
            )


def read_report_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != REPORT_HEADER:
            raise ScoringError("unexpected report CSV header")
        for day, generator, r, e, v in reader:
            rows.append(ScoreRow(int(day), generator, float(r), float(e), float(v)))
    return ScoreReport(rows=rows, n_samples=0, variogram_p=DEFAULT_VARIOGRAM_P, seed=0)


def write_summary_csv(report, path):
    """Per-generator quartile summary, one row per (generator, score)."""
    summary = report.summary()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generator", "score", "mean", "min", "q25", "median", "q75", "max"])
        for name, scores in summary.items():
            for which, stats in scores.items():
                writer.writerow(
                    [name, which]
                    + [repr(stats[k]) for k in ("mean", "min", "q25", "median", "q75", "max")]
                )
