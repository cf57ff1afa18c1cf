import numpy as np
import pytest

import semitb as st
from semitb.scan import Numerics, build_pipeline

REF_LADDER = (0.25, 0.2, 0.16, 0.125, 0.1)


@pytest.fixture(scope="session")
def ref_spec():
    return st.make_potential("sin2", v0=8.0, a=1.0)


@pytest.fixture(scope="session")
def ref_agmon(ref_spec):
    return st.tunneling_action(ref_spec)


@pytest.fixture(scope="session")
def bundle_factory(ref_spec, ref_agmon):
    """Session-cached pipeline bundles at the reference configuration."""
    cache = {}

    def get(hbar):
        if hbar not in cache:
            cache[hbar] = build_pipeline(ref_spec, hbar, Numerics(),
                                         sigma=1.0, agmon=ref_agmon)
        return cache[hbar]

    return get


@pytest.fixture(scope="session")
def ladder_states():
    """Single-site branch states at the reference eta values."""
    prob = st.DnlsProblem(eta=-50.0, sigma=1.0, n_sites=41)
    path = [-50.0, -30.0, -20.0, -12.0, -8.0, -5.0, -3.0, -2.0]
    cont = st.solve_anticontinuum(prob, 0, path)
    assert not cont.turning_point
    return {s.eta: s for s in cont.states}
