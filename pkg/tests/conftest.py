import numpy as np
import pytest

from robust_scatter.elliptical import EllipticalModel, GeneratingFunction

# every supported family with representative parameters
FAMILY_CASES = [
    ("kotz", dict(N=1.2, r=0.7, s=1.5)),
    ("gaussian", {}),
    ("pearson2", dict(m=4.0)),
    ("pearson7", dict(N=12.0, s=3.0)),
    ("t", dict(nu=3.0)),
    ("cauchy", {}),
    ("genhyp", dict(lam=2.0, chi=1.0, psi=2.0)),
    ("vg", dict(lam=1.5, psi=2.0)),
    ("laplace", {}),
    ("mvhyp", dict(chi=0.5, psi=2.0)),
    ("hum", dict(chi=0.5, psi=2.0)),
    ("nig", dict(chi=1.0, psi=2.0)),
]


def make_gen(family, p=5, **overrides):
    params = dict(next(prm for fam, prm in FAMILY_CASES if fam == family))
    params.update(overrides)
    return GeneratingFunction(family, p, **params)


@pytest.fixture(scope="session")
def gauss5():
    return GeneratingFunction("gaussian", p=5)


@pytest.fixture(scope="session")
def gauss5_model(gauss5):
    return EllipticalModel(gauss5)


@pytest.fixture(scope="session")
def gauss5_data(gauss5_model):
    return gauss5_model.sample(500, seed=20240501)


def random_spd(rng, p, scale=1.0):
    a = rng.normal(size=(p, p))
    m = a @ a.T + p * np.eye(p)
    return scale * m
