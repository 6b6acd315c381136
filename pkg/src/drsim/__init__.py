"""Demand-response simulation toolkit.

Cluster households by how they respond to time-of-use tariffs, then train
and score two generators of daily consumption profiles: a conditional
variational autoencoder and a semi-parametric additive model.
"""

from . import (
    causality,
    clustering,
    dataio,
    gamgen,
    metrics,
    neuralgen,
    pipeline,
    splines,
    synthdata,
)

__all__ = [
    "causality",
    "clustering",
    "dataio",
    "gamgen",
    "metrics",
    "neuralgen",
    "pipeline",
    "splines",
    "synthdata",
]

__version__ = "0.1.0"
