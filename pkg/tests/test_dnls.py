import numpy as np
import pytest

import semitb as st
from semitb.dnls import (
    brute_force_states,
    linear_ground_state,
    newton_solve,
    operator_l1_norm,
    quotient,
)
from semitb.errors import NonConvergenceError, SolverError, TailFitError


def test_residual_decoupled_delta():
    prob = st.DnlsProblem(eta=-5.0, sigma=1.0, n_sites=11)
    f = np.zeros(11)
    f[5] = 1.0
    r = st.dnls_residual(f, -prob.eta, prob)
    assert abs(r[5]) < 1e-15            # E = -eta kills the seeded site
    assert abs(r[4] + 1.0) < 1e-15 and abs(r[6] + 1.0) < 1e-15
    assert np.abs(r[[0, 1, 2, 3, 7, 8, 9, 10]]).max() < 1e-15


def test_residual_plane_wave_linear_spectrum():
    n = 16
    prob = st.DnlsProblem(eta=0.0001 * 0, sigma=1.0, n_sites=n, boundary="periodic")
    prob = st.DnlsProblem(eta=0.0, sigma=1.0, n_sites=n, boundary="periodic")
    j = np.arange(n)
    for m in (1, 3, 5):
        k = 2 * np.pi * m / n
        f = np.exp(1j * k * j) / np.sqrt(n)
        assert np.abs(st.dnls_residual(f, 2 * np.cos(k), prob)).max() < 1e-14
        # the same eigenvalue written as -2cos belongs to the staggered wave
        fs = np.exp(1j * (k + np.pi) * j) / np.sqrt(n)
        assert np.abs(st.dnls_residual(fs, -2 * np.cos(k), prob)).max() < 1e-14


def test_rayleigh_orthogonality():
    rng = np.random.default_rng(2)
    prob = st.DnlsProblem(eta=-1.3, sigma=1.0, n_sites=17)
    f = rng.standard_normal(17)
    f /= np.linalg.norm(f)
    t = np.zeros(17)
    t[:-1] += f[1:]
    t[1:] += f[:-1]
    e = float(f @ t - prob.eta * np.sum(np.abs(f) ** 4))
    assert abs(f @ st.dnls_residual(f, e, prob)) < 1e-12


def test_linearization_spectrum_linear_case():
    n = 16
    prob = st.DnlsProblem(eta=0.0, sigma=1.0, n_sites=n, boundary="periodic")
    e = 0.7
    lp = st.linearization_lplus(np.zeros(n), e, prob)
    expect = np.sort(e - 2 * np.cos(2 * np.pi * np.arange(n) / n))
    assert np.abs(np.sort(np.linalg.eigvalsh(lp)) - expect).max() < 1e-12


def test_linearization_anticontinuum_diagonal():
    prob = st.DnlsProblem(eta=-7.0, sigma=1.0, n_sites=11)
    f = np.zeros(11)
    f[5] = 1.0
    e = 7.0
    lp = st.linearization_lplus(f, e, prob)
    assert abs(lp[5, 5] - (e + 3 * prob.eta)) < 1e-14
    off = [lp[i, i] for i in range(11) if i != 5]
    assert np.abs(np.array(off) - e).max() < 1e-14


def test_linearization_matches_finite_differences():
    rng = np.random.default_rng(11)
    prob = st.DnlsProblem(eta=-3.0, sigma=1.0, n_sites=15)
    f = rng.standard_normal(15)
    f /= np.linalg.norm(f)
    lp = st.linearization_lplus(f, 2.1, prob)
    for _ in range(20):
        v = rng.standard_normal(15)
        v /= np.linalg.norm(v)
        eps = 1e-6
        fd = (st.dnls_residual(f + eps * v, 2.1, prob)
              - st.dnls_residual(f - eps * v, 2.1, prob)) / (2 * eps)
        ref = lp @ v
        assert np.linalg.norm(fd - ref) / np.linalg.norm(ref) < 1e-6


def test_anticontinuum_energy_and_localization(ladder_states):
    s = ladder_states[-50.0]
    assert abs(s.e + s.eta) <= 10 / abs(s.eta)
    assert s.participation < 1.01
    assert s.residual_norm <= 1e-10
    assert abs(np.linalg.norm(s.f) - 1.0) <= 1e-12


def test_anticontinuum_inverse_bound(ladder_states):
    s = ladder_states[-50.0]
    prob = st.DnlsProblem(eta=-50.0, sigma=1.0, n_sites=41)
    lp = st.linearization_lplus(s.f, s.e, prob)
    assert operator_l1_norm(np.linalg.inv(lp)) <= 2.0


def test_translated_seed_gives_translated_branch():
    prob = st.DnlsProblem(eta=-50.0, sigma=1.0, n_sites=41)
    s0 = st.solve_anticontinuum(prob, 0, [-50.0]).at_eta(-50.0)
    s3 = st.solve_anticontinuum(prob, 3, [-50.0]).at_eta(-50.0)
    assert np.abs(np.roll(s0.f, 3) - s3.f).max() < 1e-10


def test_continuation_path_validation():
    prob = st.DnlsProblem(eta=-50.0, sigma=1.0, n_sites=21)
    with pytest.raises(ValueError):
        st.solve_anticontinuum(prob, 0, [-20.0, -8.0])     # starts too low
    with pytest.raises(ValueError):
        st.solve_anticontinuum(prob, 0, [-50.0, -8.0, -20.0])  # |eta| grows
    with pytest.raises(ValueError):
        st.solve_anticontinuum(prob, 30, [-50.0])          # seed off lattice


def test_decay_rate_values(ladder_states):
    tau50 = st.decay_rate(ladder_states[-50.0].f)
    assert abs(tau50 - np.log(50)) / np.log(50) < 0.2
    etas = sorted(ladder_states, key=abs, reverse=True)
    taus = [st.decay_rate(ladder_states[e].f) for e in etas if abs(e) >= 2]
    assert all(b < a for a, b in zip(taus, taus[1:]))


def test_decay_rate_error_paths():
    with pytest.raises(TailFitError):
        st.decay_rate(linear_ground_state(41).f)   # delocalized
    f = np.zeros(41)
    f[20] = 1.0
    with pytest.raises(TailFitError):
        st.decay_rate(f)                           # no usable tail sites


def test_sign_flipped_solution_also_solves(ladder_states):
    s = ladder_states[-8.0]
    prob = st.DnlsProblem(eta=-8.0, sigma=1.0, n_sites=41)
    r = st.dnls_residual(-s.f, s.e, prob)
    assert np.linalg.norm(r) <= 1e-10


def test_brute_force_oracle_matches_continuation():
    prob = st.DnlsProblem(eta=-8.0, sigma=1.0, n_sites=7)
    target = st.solve_anticontinuum(
        st.DnlsProblem(eta=-50.0, sigma=1.0, n_sites=7), 0,
        [-50.0, -8.0]).at_eta(-8.0)
    best = np.inf
    for cand in brute_force_states(prob, n_starts=200, seed=3):
        for sgn in (1.0, -1.0):
            best = min(best, float(np.abs(sgn * cand.f - target.f).max()))
    assert best <= 1e-8


def test_no_normalized_solution_below_band_bottom():
    rng = np.random.default_rng(0)
    for eta in (1e-6, -1e-6):
        prob = st.DnlsProblem(eta=eta, sigma=1.0, n_sites=21)
        for _ in range(50):
            f0 = rng.standard_normal(21)
            f0 /= np.linalg.norm(f0)
            e0 = rng.uniform(-4.0, 4.0)
            try:
                s = newton_solve(prob, f0, e0)
            except (SolverError, NonConvergenceError):
                continue
            assert s.e >= -2.0 - 1e-3


def test_weinstein_below_critical_power():
    res = st.weinstein_threshold(1.0, 41)
    assert res.exists_for_all and res.threshold == 0.0


def test_weinstein_threshold_stable():
    r41 = st.weinstein_threshold(2.0, 41)
    r83 = st.weinstein_threshold(2.0, 83)
    assert not r41.exists_for_all
    assert 4.5 <= r41.threshold <= 4.7
    assert abs(r41.threshold - r83.threshold) / r41.threshold < 0.01


def test_weinstein_quotient_scale_invariant():
    rng = np.random.default_rng(5)
    f = rng.standard_normal(31)
    q = quotient(f, 2.0)
    assert abs(quotient(3.0 * f, 2.0) - q) / q < 1e-12


def test_problem_validation():
    with pytest.raises(ValueError):
        st.DnlsProblem(eta=-1.0, sigma=0.0)
    with pytest.raises(ValueError):
        st.DnlsProblem(eta=-1.0, sigma=1.0, n_sites=2)
    with pytest.raises(ValueError):
        st.DnlsProblem(eta=-1.0, sigma=1.0, boundary="absorbing")
