"""Shared helpers: independent oracles and small configurations."""

import math

import numpy as np
import pytest

from flexlift.config import resolve
from flexlift.rod import RodSpec, equilibrium_energy, solve_equilibrium


def gram_schmidt_plane(r):
    """Plane frame built without the library: normal from a cross product,
    in-plane axis from Gram-Schmidt against world z."""
    z = np.array([0.0, 0.0, 1.0])
    n = np.cross(r, z)
    y = n / np.linalg.norm(n)
    # x: the unit vector of span{r, z} orthogonal to z, sign fixed by right-handedness
    x = np.array([r[0], r[1], 0.0])
    x = x / np.linalg.norm(x)
    if np.linalg.det(np.column_stack([x, y, z])) < 0:
        x = -x
    return x, y, z


def fd_reactions(spec, p1, p2, h=1e-5):
    """Central differences of the constrained minimum energy: ``-dE*/dp_i``.

    Every perturbed solve is warm-started from the unperturbed equilibrium
    so all evaluations stay on the same branch.
    """
    base = solve_equilibrium(spec, p1, p2)
    out = []
    for which in (0, 1):
        g = np.zeros(3)
        for k in range(3):
            d = np.zeros(3)
            d[k] = h
            if which == 0:
                ep = equilibrium_energy(spec, p1 + d, p2, base)
                em = equilibrium_energy(spec, p1 - d, p2, base)
            else:
                ep = equilibrium_energy(spec, p1, p2 + d, base)
                em = equilibrium_energy(spec, p1, p2 - d, base)
            g[k] = (ep - em) / (2.0 * h)
        out.append(-g)
    return base, out[0], out[1]


def random_rod_case(rng):
    """A random nonuniform strip and a feasible pair of endpoints."""
    n = int(rng.integers(8, 17))
    length = float(rng.uniform(0.8, 1.5))
    r0 = length * float(rng.uniform(0.75, 0.95))
    kb = rng.uniform(0.02, 0.08, n - 1) / (length / n)
    ms = rng.uniform(0.0, 0.06, n) / n
    profile = rng.uniform(0.5, 1.5, n - 1)
    spec = RodSpec(length, r0, kb, ms, profile, damping=0.0)
    dist = length * float(rng.uniform(0.35, 0.85))
    elev = float(rng.uniform(-0.6, 0.6))
    yaw = float(rng.uniform(-math.pi, math.pi))
    p1 = rng.uniform(-1.0, 1.0, 3)
    r = dist * np.array([math.cos(elev) * math.cos(yaw), math.cos(elev) * math.sin(yaw), math.sin(elev)])
    return spec, p1, p1 + r


def uniform_spec(n=12, length=1.2, r0=1.0, kb=0.5, seg_mass=0.004, damping=0.0):
    return RodSpec(length, r0, np.full(n - 1, kb), np.full(n, seg_mass), damping=damping)


def static_config(**over):
    """Static references: no translation, constant distance, no height swing."""
    raw = {
        "scenario": {"name": "custom", "params": {"duration": 10.0, "distance_amp": 0.0, "height_amp": 0.0,
                                                  "speed": 0.0, "distance_mean": 0.7}},
        "noise_sigma": 0.0, "trials": 1,
    }
    from flexlift.config import deep_merge
    return resolve(deep_merge(raw, over))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
