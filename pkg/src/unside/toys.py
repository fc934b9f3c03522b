"""Small fixed datasets used by the demos, scripts and acceptance tests."""

from __future__ import annotations

import numpy as np

from .graphs import GraphDatasetSpec, GraphInstance, generate_dataset
from .models import AtomDataset

TOY_ATOMS = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [0, 1, 2]])


def toy_atom_dataset() -> AtomDataset:
    """L=3, K=3, four equiprobable atoms."""
    return AtomDataset({"x": TOY_ATOMS}, np.full(4, 0.25), {"x": 3})


def toy_property_graphs(n: int = 6, per_p: int = 30, seed: int = 0) -> list[GraphInstance]:
    """Erdos-Renyi graphs over a sweep of densities, so edge counts vary widely."""
    rng = np.random.default_rng(seed)
    graphs = []
    for p in np.round(np.linspace(0.1, 0.9, 9), 2):
        graphs += generate_dataset(GraphDatasetSpec("erdos-renyi", n, per_p, seed, p=float(p)), rng)
    return graphs
