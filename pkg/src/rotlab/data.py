"""
Named initial-data presets and snapshot-file loading.

Every preset returns height-like ``h``, velocity ``u`` and entropy ``S``
(zero unless stated), with ``A`` the ``amplitude`` argument:

``zero``
    ``h = 0``, ``u = 0``.
``shear``
    ``u = A (sin y, 0)``, ``h = 0``; default ``A = 1``.
``rigid``
    ``u = A (-sin y, sin x)``, ``h = 0``; default ``A = 1``.  Near the origin
    this is the rigid rotation ``A (-y, x)``.
``storm``
    Gaussian-like vortex from the streamfunction
    ``psi = -A exp(k (cos x + cos y - 2))``, ``u = (-psi_y, psi_x)``, ``k = 2``,
    ``h = 0``; default ``A = 0.5``.  The core at the origin has
    ``omega0 = d_y u1 - d_x u2 < 0``.
``steepen``
    ``u = A (sin x, 0)``, ``h = 0``; default ``A = 0.5``.  Steepens into a
    shock without rotation.
``random-bandlimited``
    Seeded random Fourier modes with ``max(|k1|, |k2|) <= 4`` in ``h``, ``u``
    and ``S``.  The velocity is scaled down by factors of ``0.8`` until both
    threshold margins at ``tau`` are at least ``0.5``; ``h`` is scaled until
    ``min(1 + sigma h) >= 0.5``.  ``amplitude`` (default ``0.3``) is the
    starting velocity sup-norm.

A path ending in ``.bin`` loads a snapshot whose components are
``h, u1, u2[, S]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rotlab.errors import ConfigError
from rotlab.spectral import ScalarField, TorusGrid, VectorField, load_snapshot

PRESETS = ("zero", "shear", "rigid", "storm", "steepen", "random-bandlimited")

DEFAULT_AMPLITUDE = {
    "zero": 0.0,
    "shear": 1.0,
    "rigid": 1.0,
    "storm": 0.5,
    "steepen": 0.5,
    "random-bandlimited": 0.3,
}

STORM_WIDTH = 2.0
RANDOM_BAND = 4


@dataclass(frozen=True, eq=False)
class InitialData:
    h: ScalarField
    u: VectorField
    S: ScalarField
    descriptor: dict

    @property
    def grid(self) -> TorusGrid:
        return self.h.grid


def _zeros(grid):
    return ScalarField(grid, np.zeros((grid.n, grid.n)))


def _random_bandlimited(grid, rng, amplitude):
    n = grid.n
    k = grid.k
    band = (np.abs(k)[:, None] <= RANDOM_BAND) & (np.abs(k)[None, :] <= RANDOM_BAND)
    band[0, 0] = False
    out = []
    for _ in range(4):
        c = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * band
        c /= 1.0 + grid.k2
        f = np.fft.ifft2(c).real
        f -= f.mean()
        out.append(f / np.max(np.abs(f)))
    h, ux, uy, S = out
    scale = amplitude / max(np.max(np.hypot(ux, uy)), 1e-300)
    return h, ux * scale, uy * scale, S


def make_data(name: str, n: int = 64, amplitude: float | None = None, seed: int = 0,
              tau: float = 0.1, sigma: float = 1.0) -> InitialData:
    """Build preset ``name`` on an ``n x n`` grid, or load a ``.bin`` snapshot."""
    from rotlab.pressureless import threshold_analyze

    grid = TorusGrid(int(n))
    if name not in PRESETS:
        path = Path(name)
        if path.suffix == ".bin" and path.exists():
            return load_data(path)
        raise ConfigError("data", f"unknown preset or snapshot {name!r}; presets are {', '.join(PRESETS)}")
    A = DEFAULT_AMPLITUDE[name] if amplitude is None else float(amplitude)
    X, Y = grid.mesh
    zero = np.zeros_like(X)
    h = zero
    S = zero
    if name == "zero":
        ux, uy = zero, zero
    elif name == "shear":
        ux, uy = A * np.sin(Y), zero
    elif name == "rigid":
        ux, uy = -A * np.sin(Y), A * np.sin(X)
    elif name == "storm":
        e = np.exp(STORM_WIDTH * (np.cos(X) + np.cos(Y) - 2.0))
        # psi = -A e; u = (-psi_y, psi_x)
        ux = -A * STORM_WIDTH * np.sin(Y) * e
        uy = A * STORM_WIDTH * np.sin(X) * e
    elif name == "steepen":
        ux, uy = A * np.sin(X), zero
    else:
        rng = np.random.default_rng(seed)
        h, ux, uy, S = _random_bandlimited(grid, rng, A)
        for _ in range(200):
            rep = threshold_analyze(VectorField.from_array(grid, np.stack([ux, uy])), tau)
            if rep.margin >= 0.5 and rep.flow_margin >= 0.5:
                break
            ux, uy = 0.8 * ux, 0.8 * uy
        h = h * min(1.0, 0.5 / (sigma * max(float(np.max(-h)), 1e-300)))
        S = 0.1 * S
    u = VectorField.from_array(grid, np.stack([ux, uy]))
    desc = {"name": name, "n": grid.n, "amplitude": A}
    if name == "random-bandlimited":
        desc.update(seed=int(seed), tau=float(tau), sigma=float(sigma),
                    velocity_sup=float(np.max(np.hypot(ux, uy))))
    return InitialData(ScalarField(grid, h), u, ScalarField(grid, S), desc)


def load_data(path) -> InitialData:
    grid, comps = load_snapshot(path)
    if comps.shape[0] not in (3, 4):
        raise ConfigError("data", f"snapshot {path} holds {comps.shape[0]} components, expected 3 or 4")
    S = comps[3] if comps.shape[0] == 4 else np.zeros((grid.n, grid.n))
    return InitialData(
        ScalarField(grid, comps[0]),
        VectorField.from_array(grid, comps[1:3]),
        ScalarField(grid, S),
        {"name": str(path), "n": grid.n},
    )
