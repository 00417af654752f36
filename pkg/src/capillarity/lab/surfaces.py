"""Reproducible families of test surfaces on a reference mesh."""

from __future__ import annotations

import numpy as np

from ..spheremesh import SurfaceMap

KINDS = ("perturbed", "ellipsoid", "bumpy")


def perturbed_sphere(mesh, rng, amplitude=0.02):
    x = np.asarray(mesh.vertices)
    return SurfaceMap(x + amplitude * rng.normal(size=x.shape), mesh)


def ellipsoid(mesh, rng, spread=0.6):
    x = np.asarray(mesh.vertices)
    axes = np.exp(rng.uniform(-spread, spread, size=3))
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return SurfaceMap((x * axes) @ q.T + rng.normal(size=3), mesh)


def bumpy_sphere(mesh, rng, amplitude=0.25, modes=4):
    """Radial graph ``1 + sum_k c_k cos(w_k . x + phi_k)`` over the unit sphere."""
    x = np.asarray(mesh.vertices)
    w = rng.normal(scale=3.0, size=(modes, 3))
    phase = rng.uniform(0, 2 * np.pi, size=modes)
    c = rng.uniform(-1, 1, size=modes) * amplitude / modes
    r = 1.0 + np.cos(x @ w.T + phase) @ c
    return SurfaceMap(x * r[:, None], mesh)


def random_surface(mesh, rng, kind=None):
    kind = kind or KINDS[rng.integers(len(KINDS))]
    return {"perturbed": perturbed_sphere, "ellipsoid": ellipsoid, "bumpy": bumpy_sphere}[kind](mesh, rng)


def random_surfaces(mesh, n, seed=0):
    """``n`` surfaces cycling through the three kinds."""
    rng = np.random.default_rng(seed)
    return [random_surface(mesh, rng, KINDS[i % len(KINDS)]) for i in range(n)]


def random_direction(mesh, rng, noise=0.05):
    """Per-vertex displacement field: affine part, a few plane waves and noise.

    Entries are O(1) so that finite differences with small steps are not
    dominated by rounding of the functional values.
    """
    x = np.asarray(mesh.vertices)
    a = rng.normal(size=(3, 3))
    w = rng.normal(scale=2.0, size=(4, 3))
    c = rng.normal(size=(4, 3))
    phase = rng.uniform(0, 2 * np.pi, size=4)
    return x @ a.T + np.cos(x @ w.T + phase) @ c + noise * rng.normal(size=x.shape)
