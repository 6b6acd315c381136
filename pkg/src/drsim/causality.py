"""Tariff response estimation via a Gaussian location-scale model.

For one household and one half-hour slot, consumption across days is modeled
as Normal with mean = centered temperature spline + per-tariff offset and a
per-tariff standard deviation. Fitting is two-stage: penalized least squares
for the mean (GCV-chosen smoothing), then half-normal moment matching on the
absolute residuals for the scales. Averaging the fitted mean over all days at
a counterfactual tariff gives the household's response profile mu_i^h(p),
the quantity the clustering stage consumes.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import HALF_HOURS, LOW, NORMAL, HIGH, TARIFF_NAMES
from .splines import CenteredSplineBlock, CubicSplineBasis, penalized_lstsq

SCALE_FLOOR = 1e-6
HALF_NORMAL_FACTOR = np.sqrt(np.pi / 2.0)


class FitError(ValueError):
    pass


@dataclass
class LocationScaleModel:
    """Fitted mean/scale model for one (entity, half-hour) series."""

    spline: CenteredSplineBlock
    spline_coef: np.ndarray
    tariff_coef: np.ndarray     # (3,) xi per tariff code, NaN if unavailable
    scale: np.ndarray           # (3,) sigma per tariff code, NaN if unavailable
    lam: float
    n_obs: int

    def available(self, code):
        return bool(np.isfinite(self.tariff_coef[code]))

    def predict_mean(self, tau, code):
        """mu(tau, p) for the given tariff; code must be available."""
        if not self.available(code):
            raise FitError(f"tariff {TARIFF_NAMES[code]} unavailable for this series")
        return self.spline.design(tau) @ self.spline_coef + self.tariff_coef[code]

    def predict_scale(self, code):
        if not self.available(code):
            raise FitError(f"tariff {TARIFF_NAMES[code]} unavailable for this series")
        return float(self.scale[code])


def fit_location_scale(y, tau, tariff, lam_grid=None, basis=None):
    """Fit one half-hour series of (consumption, temperature, tariff) triples.

    The design is the column-centered cubic spline in temperature plus one
    indicator column per tariff actually observed; there is no global
    intercept, so the tariff offsets absorb the level. Tariffs never observed
    are marked unavailable (NaN coefficients).
    """
    y = np.asarray(y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    tariff = np.asarray(tariff)
    if not (y.shape == tau.shape == tariff.shape) or y.ndim != 1:
        raise FitError("inputs must be equal-length 1-d arrays")
    if basis is None:
        basis = CubicSplineBasis.from_quantiles(tau)
    if y.size < basis.dim + 3:
        raise FitError(f"need at least {basis.dim + 3} observations, got {y.size}")

    observed = [code for code in (LOW, NORMAL, HIGH) if np.any(tariff == code)]
    spline, design = CenteredSplineBlock.fit(basis, tau)
    blocks = [design]
    penalties = [spline.penalty()]
    for code in observed:
        blocks.append((tariff == code).astype(float)[:, None])
        penalties.append(None)

    fit = penalized_lstsq(blocks, penalties, y, lam_grid=lam_grid)

    tariff_coef = np.full(3, np.nan)
    for i, code in enumerate(observed):
        tariff_coef[code] = fit.block_coef(1 + i)[0]

    x = np.hstack(blocks)
    resid = y - x @ fit.coef
    scale = np.full(3, np.nan)
    for code in observed:
        mask = tariff == code
        scale[code] = max(
            float(np.mean(np.abs(resid[mask]))) * HALF_NORMAL_FACTOR, SCALE_FLOOR
        )

    return LocationScaleModel(
        spline=spline,
        spline_coef=fit.block_coef(0),
        tariff_coef=tariff_coef,
        scale=scale,
        lam=fit.lam,
        n_obs=y.size,
    )


def fit_entity(kwh, tau, tariff, lam_grid=None):
    """Fit all 48 half-hour models for one entity's (T, 48) grids.

    The spline basis depends only on the half-hour's temperature series, so
    it is built once per column and shared.
    """
    kwh = np.asarray(kwh, dtype=float)
    models = []
    for h in range(HALF_HOURS):
        basis = CubicSplineBasis.from_quantiles(tau[:, h])
        models.append(
            fit_location_scale(kwh[:, h], tau[:, h], tariff[:, h],
                               lam_grid=lam_grid, basis=basis)
        )
    return models


@dataclass
class TariffResponseProfile:
    """Counterfactual mean/scale per (tariff, half-hour) for one entity."""

    entity: str
    mu: np.ndarray      # (3, 48)
    sigma: np.ndarray   # (3, 48)


def tariff_profile(entity, models, tau):
    """Average the fitted mean over all days at each counterfactual tariff.

    mu^h(p) = (1/T) sum_t mu_hat(tau_t^h, p). Tariffs unavailable in a
    half-hour's series substitute the Normal-tariff values; Normal itself
    must be available everywhere.
    """
    if len(models) != HALF_HOURS:
        raise FitError(f"expected {HALF_HOURS} half-hour models")
    mu = np.empty((3, HALF_HOURS))
    sigma = np.empty((3, HALF_HOURS))
    for h, model in enumerate(models):
        if not model.available(NORMAL):
            raise FitError(f"Normal tariff never observed in half-hour {h + 1}")
        for code in (LOW, NORMAL, HIGH):
            eff = code if model.available(code) else NORMAL
            mu[code, h] = float(np.mean(model.predict_mean(tau[:, h], eff)))
            sigma[code, h] = model.predict_scale(eff)
    return TariffResponseProfile(entity, mu, sigma)


def export_profiles_csv(profiles, path):
    """Write profiles as entity,tariff,h,mu,sigma rows (h is 1-based)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "tariff", "h", "mu", "sigma"])
        for prof in profiles:
            for code in (LOW, NORMAL, HIGH):
                for h in range(HALF_HOURS):
                    writer.writerow(
                        [
                            prof.entity,
                            TARIFF_NAMES[code],
                            h + 1,
                            repr(float(prof.mu[code, h])),
                            repr(float(prof.sigma[code, h])),
                        ]
                    )


def read_profiles_csv(path):
    """Inverse of export_profiles_csv."""
    per_entity = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["entity", "tariff", "h", "mu", "sigma"]:
            raise FitError("unexpected profile CSV header")
        for row in reader:
            entity, tariff, h, mu, sigma = row
            code = TARIFF_NAMES.index(tariff)
            slot = per_entity.setdefault(
                entity, (np.full((3, HALF_HOURS), np.nan), np.full((3, HALF_HOURS), np.nan))
            )
            slot[0][code, int(h) - 1] = float(mu)
            slot[1][code, int(h) - 1] = float(sigma)
    return [
        TariffResponseProfile(entity, mu, sigma)
        for entity, (mu, sigma) in per_entity.items()
    ]
