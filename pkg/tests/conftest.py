import numpy as np
import pytest

from thermistor_opt import BoundaryControl, ControlBox, ModelParams, builtin_conductivity


def make_params(conductivity="constant(2)", lam=1.0, horizon=1.0, n_elements=50, time_step=0.01,
                box=(0.1, 1.0), u0=0.0):
    return ModelParams(
        lam=lam,
        horizon=horizon,
        conductivity=builtin_conductivity(conductivity),
        box=ControlBox(*box),
        initial_temperature=u0,
        n_elements=n_elements,
        time_step=time_step,
    )


def uniform(p, value):
    return BoundaryControl.uniform(value, p.n_levels)


def smooth_direction(rng, n_levels, n_modes=4):
    """Random cosine series on each boundary, scaled to sup norm 1."""
    s = np.linspace(0.0, 1.0, n_levels)
    sides = []
    for _ in range(2):
        c = rng.standard_normal(n_modes)
        g = sum(ck * np.cos(k * np.pi * s) for k, ck in enumerate(c))
        sides.append(g / np.max(np.abs(g)))
    return BoundaryControl.trajectory(*sides)


@pytest.fixture
def constant_case():
    """f = 2, lambda = 1, u0 = 0 on the oracle grid N = 50, tau = 0.01, T = 1."""
    return make_params()


@pytest.fixture
def catalog_case():
    """shifted_sine, lambda = 1, box (0.1, 1), N = 50, tau = 0.01, T = 2."""
    return make_params("shifted_sine", horizon=2.0)
