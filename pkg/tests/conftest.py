"""Shared fixtures: one small synthetic population reused across test modules."""

import datetime

import numpy as np
import pytest

from drsim import dataio, synthdata


def two_archetypes():
    """A saver and a non-responder, cheap enough for per-test fits."""
    return [
        synthdata.ArchetypeSpec(
            name="saver",
            base_shape=synthdata.smooth_shape(0.5, [(16, 4.0, 0.4), (40, 5.0, 0.3)]),
            temp_coeff=-0.006,
            workday_offset=0.05,
            delta_low=0.5,
            delta_high=-0.3,
            rebound=0.3,
            side_width=2,
            noise_std=(0.05, 0.05, 0.05),
        ),
        synthdata.ArchetypeSpec(
            name="flat",
            base_shape=synthdata.smooth_shape(0.45, [(26, 9.0, 0.1)]),
            temp_coeff=-0.002,
            workday_offset=0.0,
            delta_low=0.0,
            delta_high=0.0,
            rebound=0.0,
            side_width=0,
            noise_std=(0.05, 0.05, 0.05),
        ),
    ]


@pytest.fixture(scope="session")
def small_population():
    return synthdata.generate_population(
        two_archetypes(),
        counts=[4, 4],
        n_days=90,
        seed=4242,
        start_date=datetime.date(2024, 1, 1),
        std_count=2,
    )


@pytest.fixture(scope="session")
def small_csv_dir(small_population, tmp_path_factory):
    root = tmp_path_factory.mktemp("csv")
    synthdata.write_consumption_csv(small_population, root / "consumption.csv")
    synthdata.write_temperature_csv(small_population.weather, root / "temperature.csv")
    synthdata.write_ground_truth_csv(small_population, root / "ground_truth.csv")
    return root


@pytest.fixture(scope="session")
def prepared_small(small_csv_dir):
    consumption = dataio.read_consumption_csv(small_csv_dir / "consumption.csv")
    temperature = dataio.read_temperature_csv(small_csv_dir / "temperature.csv")
    return dataio.prepare_dataset(consumption, temperature, train_fraction=0.75, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
