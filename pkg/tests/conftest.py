import copy
import json
import pathlib

import numpy as np
import pytest

from ldlgen import TMatrix, load_model
from ldlgen.generator import build_generator

ROOT = pathlib.Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"

# document matching models/tm_nr.json, deep-copied by fixtures for mutation
_BASE_DOC = {
    "system": {
        "hamiltonian": [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
        "coupling": [[0.0, 0.0], [0.1, 0.0], [0.1, 0.0], [0.0, 0.0]],
        "bohr_tolerance": 1e-9,
    },
    "bath": {
        "beta": 0.5,
        "grid": {"min": -1.5, "max": 4.5, "points": 481},
        "rho0": {"kind": "bump", "a": 0.0, "b": 1.0, "amplitude": 1.0},
        "rho1": {"kind": "bump", "a": 2.0, "b": 3.0, "amplitude": 1.0},
    },
    "truncation": {"neumann_max_order": 64, "neumann_tolerance": 1e-12},
}


def base_model_doc():
    return copy.deepcopy(_BASE_DOC)


def write_model(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="session")
def rwa_spec():
    return load_model(MODELS / "tm_rwa.json")


@pytest.fixture(scope="session")
def nr_spec():
    return load_model(MODELS / "tm_nr.json")


@pytest.fixture(scope="session")
def rwa_tm(rwa_spec):
    return TMatrix(rwa_spec)


@pytest.fixture(scope="session")
def nr_tm(nr_spec):
    return TMatrix(nr_spec)


@pytest.fixture(scope="session")
def rwa_gen(rwa_tm):
    return build_generator(rwa_tm)


@pytest.fixture(scope="session")
def nr_gen(nr_tm):
    return build_generator(nr_tm)


def random_density(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real
