import os

import pytest
from hypothesis import HealthCheck, settings

from tapknock.dataset import Study
from tapknock.synth import StudySpec, generate_study

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# small enough to generate in a few seconds, large enough for every protocol
TINY = StudySpec(n_users=4, separability=0.9, taps_per_terminal=2, knocks_per_kind=3,
                 seed=11, fidelity=1.0, attack_group=3)


@pytest.fixture(scope="session")
def tiny_spec():
    return TINY


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    generate_study(TINY, root)
    return root


@pytest.fixture(scope="session")
def tiny_study(tiny_dir):
    return Study.load(tiny_dir)
