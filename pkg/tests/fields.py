"""Shared smooth test data."""

import numpy as np

from rotlab.spectral import ScalarField, VectorField


def smooth_velocity(grid, scale=0.15):
    """Generic sub-critical velocity with a divergent part."""
    return VectorField.from_function(
        grid,
        lambda X, Y: (scale * (np.sin(Y) + 0.5 * np.cos(X + Y)), scale * (np.cos(X) - 0.3 * np.sin(2 * Y))),
    )


def smooth_height(grid, amp=0.2):
    return ScalarField.from_function(grid, lambda X, Y: amp * np.cos(X) * np.sin(Y))
