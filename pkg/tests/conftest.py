from dataclasses import replace

import numpy as np
import pytest

from blockomp.experiments import EnsembleSpec, calibrate_epsilon, gen_matrix
from blockomp.rip import theorem1_threshold

# Desk instance: 20 x 20 orthonormal basis, 10 blocks of length 2, K = 2.
CERTIFIED_SPEC = EnsembleSpec(L=20, N=20, d=2, K=2, seed=7, matrix_model="orthonormal_perturbed")


@pytest.fixture(scope="session")
def certified():
    """(matrix, layout, K, certificate) with delta at order K+1 just below the recovery threshold."""
    spec = CERTIFIED_SPEC
    eps, cert = calibrate_epsilon(spec, spec.K + 1, theorem1_threshold(spec.K))
    d = gen_matrix(replace(spec, epsilon=eps))
    return d, spec.layout, spec.K, cert


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
