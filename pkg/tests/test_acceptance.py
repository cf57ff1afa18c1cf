"""Acceptance criteria at the reference configuration.

One test per criterion; each prints its pass/fail line.  Criterion 3 (gap
log-log slope within 1 +- 0.1 over the shipped hbar ladder) is known to
sit at ~0.81 because of the second-order semiclassical correction to the
gap at desk scale; it is asserted as stated and expected to fail until
the ladder reaches much smaller hbar.
"""

import pytest

from semitb import acceptance


@pytest.fixture(scope="session")
def ctx(bundle_factory):
    context = acceptance.Context()
    for hb in acceptance.REFERENCE_LADDER:
        context._bundles[hb] = bundle_factory(hb)
    yield context
    context.cleanup()


CHECKS = {name: fn for name, fn in acceptance.CRITERIA}


def _run(ctx, num):
    result = CHECKS[num](ctx)
    print(f"[criterion {num}] {'PASS' if result.passed else 'FAIL'} "
          f"{result.name}: {result.detail}")
    assert result.passed, result.detail


def test_criterion_01_free_particle_bands(ctx):
    _run(ctx, "1")


def test_criterion_02_harmonic_law(ctx):
    _run(ctx, "2")


def test_criterion_03_gap_scaling(ctx):
    _run(ctx, "3")


def test_criterion_04_tunneling_rates(ctx):
    _run(ctx, "4")


def test_criterion_05_hopping_cross_oracle(ctx):
    _run(ctx, "5")


def test_criterion_06_dnls_solver(ctx):
    _run(ctx, "6")


def test_criterion_07_anticontinuum(ctx):
    _run(ctx, "7")


def test_criterion_08_perp_smallness(ctx):
    _run(ctx, "8")


def test_criterion_09_reconstruction_closeness(ctx):
    _run(ctx, "9")


def test_criterion_10_localization_transition(ctx):
    _run(ctx, "10")


def test_criterion_11_determinism(ctx):
    _run(ctx, "11")
