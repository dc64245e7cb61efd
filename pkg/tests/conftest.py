from __future__ import annotations

import numpy as np
import pytest

from evigrid.belief import Frame, MassFunction


def random_mass(frame: Frame, rng: np.random.Generator,
                ensure_omega: bool = True) -> MassFunction:
    """Random normalized mass function over a random set of focal subsets.

    With ensure_omega the full frame always carries some mass, which keeps
    Dempster combination away from total conflict.
    """
    n_focal = int(rng.integers(1, 6))
    subsets = rng.integers(1, frame.size, size=n_focal)
    table = np.zeros(frame.size)
    weights = rng.dirichlet(np.ones(n_focal + (1 if ensure_omega else 0)))
    for mask, w in zip(subsets, weights):
        table[mask] += w
    if ensure_omega:
        table[frame.omega] += weights[-1]
    return MassFunction(frame, table)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
