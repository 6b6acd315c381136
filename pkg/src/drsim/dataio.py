"""Ingestion and feature construction for half-hourly consumption data.

Consumption CSVs carry one row per (household, half-hour) with columns
household_id,timestamp,kwh,tariff,group; temperature CSVs carry hourly
timestamp,temp_c rows. Half-hour h in 1..48 covers [(h-1)/2, h/2) hours of
the day. Tariffs are LOW/NORMAL/HIGH for time-of-use households and FLAT for
standard ones; FLAT maps to NORMAL internally so every series lives on the
same three-level code.
"""

import csv
import datetime
import warnings
from dataclasses import dataclass, field

import numpy as np

HALF_HOURS = 48
LOW, NORMAL, HIGH = 0, 1, 2
TARIFF_NAMES = ("LOW", "NORMAL", "HIGH")
TARIFF_CODES = {"LOW": LOW, "NORMAL": NORMAL, "HIGH": HIGH, "FLAT": NORMAL}
GROUPS = ("TOU", "STD")

CONSUMPTION_HEADER = ["household_id", "timestamp", "kwh", "tariff", "group"]
TEMPERATURE_HEADER = ["timestamp", "temp_c"]

COVERAGE_THRESHOLD = 0.95
DEFAULT_SMOOTHING = 0.998


class DataParseError(ValueError):
    """Malformed file content (bad header, field count, number format)."""


class DataValidationError(ValueError):
    """Well-formed but invalid content (negative load, unknown tariff)."""


class UnrecoverableDataError(ValueError):
    """Gap repair cannot proceed (household fully missing)."""


class ConfigError(ValueError):
    """Out-of-range configuration value."""


@dataclass
class HouseholdData:
    household_id: str
    group: str
    kwh: np.ndarray        # (T, 48), NaN where unobserved
    tariff: np.ndarray     # (T, 48) int8, -1 where unobserved
    observed: np.ndarray   # (T, 48) bool


@dataclass
class ConsumptionData:
    households: list
    dates: list                      # T datetime.date, consecutive
    coverage: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)   # ids with coverage < threshold

    @property
    def n_days(self):
        return len(self.dates)


@dataclass
class TemperatureSeries:
    timestamps: list     # datetime.datetime, hourly, strictly increasing
    temp_c: np.ndarray


def _parse_timestamp(text, line_no):
    try:
        ts = datetime.datetime.fromisoformat(text)
    except ValueError:
        raise DataParseError(f"line {line_no}: bad timestamp {text!r}") from None
    if ts.second or ts.microsecond or ts.tzinfo is not None:
        raise DataValidationError(f"line {line_no}: timestamp {text!r} not on the half-hour grid")
    return ts


def read_consumption_csv(path):
    """Parse and validate a consumption CSV into aligned (T, 48) grids.

    Households with less than 95% slot coverage over the file's date range
    are listed in .flagged (they stay in the record set; callers decide).
    Raises DataParseError / DataValidationError with the offending line.
    """
    per_household = {}
    groups = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataParseError("line 1: empty file") from None
        if header != CONSUMPTION_HEADER:
            raise DataParseError(
                f"line 1: expected header {','.join(CONSUMPTION_HEADER)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataParseError(f"line {line_no}: expected 5 fields, got {len(row)}")
            hid, ts_text, kwh_text, tariff, group = row
            ts = _parse_timestamp(ts_text, line_no)
            if ts.minute not in (0, 30):
                raise DataValidationError(
                    f"line {line_no}: timestamp {ts_text!r} not on the half-hour grid"
                )
            try:
                kwh = float(kwh_text)
            except ValueError:
                raise DataParseError(f"line {line_no}: bad kwh value {kwh_text!r}") from None
            if not np.isfinite(kwh):
                raise DataValidationError(f"line {line_no}: non-finite kwh")
            if kwh < 0:
                raise DataValidationError(f"line {line_no}: negative kwh {kwh!r}")
            if tariff not in TARIFF_CODES:
                raise DataValidationError(
                    f"line {line_no}: unknown tariff {tariff!r} "
                    f"(expected one of {', '.join(sorted(set(TARIFF_CODES)))})"
                )
            if group not in GROUPS:
                raise DataValidationError(f"line {line_no}: unknown group {group!r}")
            if hid in groups and groups[hid] != group:
                raise DataValidationError(
                    f"line {line_no}: household {hid} changes group {groups[hid]} -> {group}"
                )
            if hid not in per_household:
                per_household[hid] = {}
                groups[hid] = group
                order.append(hid)
            slot = (ts.date(), ts.hour * 2 + ts.minute // 30)
            if slot in per_household[hid]:
                raise DataValidationError(
                    f"line {line_no}: duplicate reading for {hid} at {ts_text}"
                )
            per_household[hid][slot] = (kwh, TARIFF_CODES[tariff])

    if not per_household:
        raise DataValidationError("no data rows")

    all_dates = [d for rows in per_household.values() for d, _ in rows]
    first, last = min(all_dates), max(all_dates)
    n_days = (last - first).days + 1
    dates = [first + datetime.timedelta(days=i) for i in range(n_days)]
    day_index = {d: i for i, d in enumerate(dates)}

    households = []
    coverage = {}
    flagged = []
    for hid in order:
        kwh = np.full((n_days, HALF_HOURS), np.nan)
        tar = np.full((n_days, HALF_HOURS), -1, dtype=np.int8)
        for (d, h), (value, code) in per_household[hid].items():
            kwh[day_index[d], h] = value
            tar[day_index[d], h] = code
        observed = ~np.isnan(kwh)
        cov = observed.sum() / observed.size
        coverage[hid] = cov
        if cov < COVERAGE_THRESHOLD:
            flagged.append(hid)
        households.append(HouseholdData(hid, groups[hid], kwh, tar, observed))

    if flagged:
        warnings.warn(f"{len(flagged)} household(s) below {COVERAGE_THRESHOLD:.0%} coverage")
    return ConsumptionData(households, dates, coverage, flagged)


def read_temperature_csv(path):
    """Parse an hourly timestamp,temp_c CSV; timestamps strictly increasing."""
    timestamps = []
    temps = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataParseError("line 1: empty file") from None
        if header != TEMPERATURE_HEADER:
            raise DataParseError(f"line 1: expected header {','.join(TEMPERATURE_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataParseError(f"line {line_no}: expected 2 fields, got {len(row)}")
            ts = _parse_timestamp(row[0], line_no)
            if ts.minute != 0:
                raise DataValidationError(f"line {line_no}: temperature not on the hour")
            try:
                value = float(row[1])
            except ValueError:
                raise DataParseError(f"line {line_no}: bad temp_c value {row[1]!r}") from None
            if not np.isfinite(value):
                raise DataValidationError(f"line {line_no}: non-finite temperature")
            if timestamps and ts <= timestamps[-1]:
                raise DataValidationError(f"line {line_no}: timestamps not increasing")
            timestamps.append(ts)
            temps.append(value)
    if not timestamps:
        raise DataValidationError("no temperature rows")
    return TemperatureSeries(timestamps, np.asarray(temps))


def temperature_grid(series, dates):
    """Interpolate hourly readings onto the (T, 48) half-hour grid.

    Each half-hour takes the linearly interpolated value at its start
    instant; instants outside the reading range clamp to the ends.
    """
    base = datetime.datetime.combine(dates[0], datetime.time())
    src = np.array([(ts - base).total_seconds() for ts in series.timestamps])
    n_days = len(dates)
    starts = np.arange(n_days * HALF_HOURS) * 1800.0
    grid = np.interp(starts, src, series.temp_c)
    return grid.reshape(n_days, HALF_HOURS)


def _missing_runs(observed_flat):
    idx = np.flatnonzero(~observed_flat)
    if idx.size == 0:
        return []
    return np.split(idx, np.where(np.diff(idx) != 1)[0] + 1)


def _nearest_observed_day(observed_col, t):
    """Nearest day index with an observation in this half-hour column, ties earlier."""
    days = np.flatnonzero(observed_col)
    if days.size == 0:
        return None
    return int(days[np.argmin(np.abs(days - t))])


def repair_household(kwh, observed):
    """Fill unobserved slots of one household's (T, 48) grid.

    Gaps shorter than a day interpolate linearly along the flattened series.
    Day-long or edge gaps interpolate the same half-hour across the nearest
    observed days (copying when only one side exists). A household with no
    observations at all cannot be repaired.
    """
    n_days, _ = kwh.shape
    if not observed.any():
        raise UnrecoverableDataError("household has no observations")
    out = kwh.copy()
    flat = out.ravel()
    obs = observed.ravel()
    n = flat.size
    day_cells = []
    for run in _missing_runs(obs):
        left = run[0] - 1
        right = run[-1] + 1
        if left >= 0 and right < n and len(run) < HALF_HOURS:
            flat[run] = np.interp(run, [left, right], [flat[left], flat[right]])
        else:
            day_cells.extend(run.tolist())
    leftovers = []
    for cell in day_cells:
        t, h = divmod(cell, HALF_HOURS)
        col = observed[:, h]
        days = np.flatnonzero(col)
        if days.size == 0:
            leftovers.append(cell)
            continue
        prev = days[days < t]
        nxt = days[days > t]
        if prev.size and nxt.size:
            p, q = prev[-1], nxt[0]
            flat[cell] = np.interp(t, [p, q], [out[p, h], out[q, h]])
        else:
            flat[cell] = out[_nearest_observed_day(col, t), h]
    if leftovers:
        # half-hour never observed on any day: fall back to interpolation
        # along the flattened series between the nearest observed slots
        anchors = np.flatnonzero(obs)
        flat[leftovers] = np.interp(leftovers, anchors, flat[anchors])
    return out


def repair_tariffs(tariff, observed):
    """Fill unobserved tariff codes from the nearest observed day at the
    same half-hour (ties to the earlier day); NORMAL if never observed."""
    out = tariff.copy()
    missing = np.argwhere(~observed)
    for t, h in missing:
        src = _nearest_observed_day(observed[:, h], t)
        out[t, h] = NORMAL if src is None else tariff[src, h]
    return out


def repair_gaps(data):
    """Repair every household in a ConsumptionData; idempotent."""
    households = []
    for hh in data.households:
        kwh = repair_household(hh.kwh, hh.observed)
        tar = repair_tariffs(hh.tariff, hh.observed)
        households.append(HouseholdData(hh.household_id, hh.group, kwh, tar, hh.observed))
    return ConsumptionData(households, data.dates, dict(data.coverage), list(data.flagged))


@dataclass
class SmoothedTemperature:
    grid: np.ndarray    # (T, 48) exponentially smoothed
    daily: np.ndarray   # (T,) daily means of the smoothed grid


def smooth_temperature(tau, a=DEFAULT_SMOOTHING):
    """Exponential smoothing along the flattened half-hour series.

    bar[0] = tau[0]; bar[k] = (1 - a) * tau[k] + a * bar[k-1].
    """
    if not 0.0 <= a < 1.0:
        raise ConfigError(f"smoothing constant a={a!r} outside [0, 1)")
    tau = np.asarray(tau, dtype=float)
    flat = tau.ravel()
    bar = np.empty_like(flat)
    bar[0] = flat[0]
    for k in range(1, flat.size):
        bar[k] = (1.0 - a) * flat[k] + a * bar[k - 1]
    grid = bar.reshape(tau.shape)
    return SmoothedTemperature(grid, grid.mean(axis=1))


@dataclass
class Calendar:
    w: np.ndarray       # (T,) 1 on working days (Mon-Fri), 0 otherwise
    kappa: np.ndarray   # (T,) linear day-of-range position in [0, 1]


def build_calendar(dates):
    w = np.array([1.0 if d.weekday() < 5 else 0.0 for d in dates])
    n = len(dates)
    kappa = np.zeros(1) if n == 1 else np.arange(n) / (n - 1)
    return Calendar(w, kappa)


@dataclass
class TemperaturePca:
    mean: np.ndarray          # (49,)
    components: np.ndarray    # (3, 49), sign-fixed
    explained: np.ndarray     # (3,) variance ratios, non-increasing
    score_min: np.ndarray     # (3,) training score bounds
    score_max: np.ndarray

    def transform(self, rows):
        """Project onto the components and rescale by the training bounds."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        scores = (rows - self.mean) @ self.components.T
        return (scores - self.score_min) / (self.score_max - self.score_min)


def fit_temperature_pca(rows):
    """PCA of daily temperature trajectories (48 half-hours + smoothed daily).

    Keeps the first three components; each component's largest-magnitude
    loading is made positive so the decomposition is reproducible.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 4:
        raise DataValidationError("need at least 4 training days for the temperature PCA")
    if not np.isfinite(rows).all():
        raise DataValidationError("non-finite temperature trajectory")
    mean = rows.mean(axis=0)
    centered = rows - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = s[0] * max(rows.shape) * np.finfo(float).eps if s.size else 0.0
    rank = int((s > tol).sum())
    if rank < 3:
        raise DataValidationError(f"temperature matrix rank {rank} < 3")
    components = vt[:3].copy()
    for comp in components:
        if comp[np.argmax(np.abs(comp))] < 0:
            comp *= -1.0
    explained = s[:3] ** 2 / (s**2).sum()
    scores = centered @ components.T
    return TemperaturePca(
        mean=mean,
        components=components,
        explained=explained,
        score_min=scores.min(axis=0),
        score_max=scores.max(axis=0),
    )


@dataclass
class DayPartition:
    train: np.ndarray   # sorted day indices
    test: np.ndarray
    fraction: float
    seed: int


def partition_days(n_days, fraction, seed):
    """Seeded random split into floor(fraction * n_days) training days."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"train fraction {fraction!r} outside (0, 1)")
    n_train = int(fraction * n_days)
    if n_train < 1 or n_train >= n_days:
        raise ConfigError(f"fraction {fraction!r} leaves an empty split for {n_days} days")
    perm = np.random.default_rng(seed).permutation(n_days)
    return DayPartition(
        train=np.sort(perm[:n_train]),
        test=np.sort(perm[n_train:]),
        fraction=float(fraction),
        seed=int(seed),
    )


def build_conditional_vector(pca_scores, kappa, w, tariffs):
    """Day-level conditional: 3 scaled PCA scores, kappa, w, then the
    Low and High indicator blocks over the 48 half-hours (length 101)."""
    pca_scores = np.asarray(pca_scores, dtype=float)
    tariffs = np.asarray(tariffs)
    if pca_scores.shape != (3,):
        raise ValueError("expected 3 PCA scores")
    if tariffs.shape != (HALF_HOURS,):
        raise ValueError(f"expected {HALF_HOURS} tariff codes")
    return np.concatenate(
        [
            pca_scores,
            [float(kappa), float(w)],
            (tariffs == LOW).astype(float),
            (tariffs == HIGH).astype(float),
        ]
    )


def build_gam_features(tau, tau_bar_daily, calendar, t, h):
    """Per-(day, half-hour) regressors (tau_t^h, taubar_t, w_t, kappa_t); h is 1-based."""
    if not 1 <= h <= HALF_HOURS:
        raise IndexError(f"half-hour {h} outside 1..{HALF_HOURS}")
    return np.array(
        [tau[t, h - 1], tau_bar_daily[t], calendar.w[t], calendar.kappa[t]]
    )


@dataclass
class PreparedDataset:
    """Repaired grids plus every derived feature the models consume."""

    household_ids: list
    groups: list
    kwh: np.ndarray            # (n, T, 48)
    tariff: np.ndarray         # (n, T, 48) int8
    dates: list
    tau: np.ndarray            # (T, 48)
    tau_bar: np.ndarray        # (T, 48)
    tau_bar_daily: np.ndarray  # (T,)
    calendar: Calendar
    pca: TemperaturePca
    pca_scores: np.ndarray     # (T, 3) scaled scores for all days
    partition: DayPartition
    flagged: list
    smoothing_a: float

    @property
    def n_days(self):
        return len(self.dates)

    def conditional_matrix(self, tariffs):
        """Stack day conditionals for a (T, 48) tariff schedule."""
        return np.stack(
            [
                build_conditional_vector(
                    self.pca_scores[t], self.calendar.kappa[t], self.calendar.w[t], tariffs[t]
                )
                for t in range(self.n_days)
            ]
        )


def prepare_dataset(consumption, temperature, smoothing_a=DEFAULT_SMOOTHING,
                    train_fraction=0.75, seed=0):
    """Repair, smooth, featurize and partition an ingested dataset.

    Households flagged for low coverage are dropped here (their ids stay in
    .flagged). The temperature PCA is fit on training days only.
    """
    kept = [hh for hh in consumption.households if hh.household_id not in consumption.flagged]
    if not kept:
        raise UnrecoverableDataError("no household passes the coverage threshold")
    repaired = repair_gaps(
        ConsumptionData(kept, consumption.dates, dict(consumption.coverage), [])
    )
    tau = temperature_grid(temperature, consumption.dates)
    smoothed = smooth_temperature(tau, smoothing_a)
    calendar = build_calendar(consumption.dates)
    partition = partition_days(len(consumption.dates), train_fraction, seed)
    trajectories = np.column_stack([tau, smoothed.daily])
    pca = fit_temperature_pca(trajectories[partition.train])
    return PreparedDataset(
        household_ids=[hh.household_id for hh in repaired.households],
        groups=[hh.group for hh in repaired.households],
        kwh=np.stack([hh.kwh for hh in repaired.households]),
        tariff=np.stack([hh.tariff for hh in repaired.households]),
        dates=list(consumption.dates),
        tau=tau,
        tau_bar=smoothed.grid,
        tau_bar_daily=smoothed.daily,
        calendar=calendar,
        pca=pca,
        pca_scores=pca.transform(trajectories),
        partition=partition,
        flagged=list(consumption.flagged),
        smoothing_a=float(smoothing_a),
    )


def save_prepared(dataset, path):
    np.savez_compressed(
        path,
        household_ids=np.array(dataset.household_ids),
        groups=np.array(dataset.groups),
        kwh=dataset.kwh,
        tariff=dataset.tariff,
        dates=np.array([d.isoformat() for d in dataset.dates]),
        tau=dataset.tau,
        tau_bar=dataset.tau_bar,
        tau_bar_daily=dataset.tau_bar_daily,
        w=dataset.calendar.w,
        kappa=dataset.calendar.kappa,
        pca_mean=dataset.pca.mean,
        pca_components=dataset.pca.components,
        pca_explained=dataset.pca.explained,
        pca_score_min=dataset.pca.score_min,
        pca_score_max=dataset.pca.score_max,
        pca_scores=dataset.pca_scores,
        train=dataset.partition.train,
        test=dataset.partition.test,
        fraction=np.array(dataset.partition.fraction),
        seed=np.array(dataset.partition.seed),
        flagged=np.array(dataset.flagged, dtype=str),
        smoothing_a=np.array(dataset.smoothing_a),
    )


def load_prepared(path):
    with np.load(path, allow_pickle=False) as z:
        pca = TemperaturePca(
            mean=z["pca_mean"],
            components=z["pca_components"],
            explained=z["pca_explained"],
            score_min=z["pca_score_min"],
            score_max=z["pca_score_max"],
        )
        return PreparedDataset(
            household_ids=[str(s) for s in z["household_ids"]],
            groups=[str(s) for s in z["groups"]],
            kwh=z["kwh"],
            tariff=z["tariff"],
            dates=[datetime.date.fromisoformat(str(s)) for s in z["dates"]],
            tau=z["tau"],
            tau_bar=z["tau_bar"],
            tau_bar_daily=z["tau_bar_daily"],
            calendar=Calendar(z["w"], z["kappa"]),
            pca=pca,
            pca_scores=z["pca_scores"],
            partition=DayPartition(
                train=z["train"],
                test=z["test"],
                fraction=float(z["fraction"]),
                seed=int(z["seed"]),
            ),
            flagged=[str(s) for s in z["flagged"]],
            smoothing_a=float(z["smoothing_a"]),
        )
