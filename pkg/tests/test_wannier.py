import dataclasses

import numpy as np
import pytest
import scipy.linalg

import semitb as st
from semitb.errors import BasisError, GaugeError
from semitb.operators import l2_norm
from semitb.wannier import fix_gauge


def test_gauge_produces_real_positive_wannier(bundle_factory):
    wb = bundle_factory(0.2).wb
    # realness is enforced inside wannier_function; the sign convention is
    # positive at the well peak
    assert wb.w[np.argmax(np.abs(wb.w))] > 0
    assert abs(l2_norm(wb.dx, wb.w) - 1.0) < 1e-10


def test_gauge_idempotent(ref_spec):
    bd = st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.2))
    bd1 = fix_gauge(bd)
    bd2 = fix_gauge(bd1)
    assert np.abs(bd2.coeffs[0] - bd1.coeffs[0]).max() < 1e-12


def test_gauge_seed_phase_changes_nothing_but_sign(ref_spec):
    bd = st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.2))
    wb_a = st.build_orthonormal_basis(fix_gauge(bd), ref_spec, 32, 64)
    wb_b = st.build_orthonormal_basis(fix_gauge(bd, seed_phase=0.7), ref_spec, 32, 64)
    sign = np.sign(np.sum(wb_a.w * wb_b.w))
    assert np.abs(wb_a.u - sign * wb_b.u).max() < 1e-10
    assert np.abs(wb_a.overlaps - wb_b.overlaps).max() < 1e-10
    tb_a = st.extract_params(wb_a, ref_spec, 0.2, sigma=1.0)
    tb_b = st.extract_params(wb_b, ref_spec, 0.2, sigma=1.0)
    assert abs(tb_a.beta - tb_b.beta) < 1e-10
    assert abs(tb_a.c0 - tb_b.c0) < 1e-10


def test_gauge_rejects_degenerate_band():
    spec = st.free_potential(1.0)
    bd = st.solve_bands(spec, st.FloquetConfig(hbar=0.3, n_pw=41, n_kappa=16,
                                               n_bands=3))
    with pytest.raises(GaugeError):
        fix_gauge(bd)


def test_orthonormality_and_translation_covariance(bundle_factory):
    wb = bundle_factory(0.2).wb
    gram = wb.dx * (wb.u @ wb.u.T)
    assert np.abs(gram - np.eye(wb.cells)).max() < 1e-8
    u0 = wb.orbital(0)
    for j in (-5, -1, 2, 7):
        assert np.abs(wb.orbital(j)
                      - np.roll(u0, j * wb.points_per_cell)).max() < 1e-8


def test_dense_lowdin_cross_check(ref_spec):
    # odd cell count, symbol-truncated coefficients vs dense inverse sqrt
    bd = fix_gauge(st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.25, n_kappa=62)))
    wb = st.build_orthonormal_basis(bd, ref_spec, 31, 64)
    v = np.stack([np.roll(wb.v0, s * wb.points_per_cell) for s in wb.sites])
    gram = wb.dx * (v @ v.T)
    vals, vecs = np.linalg.eigh(gram)
    binv = vecs @ np.diag(vals**-0.5) @ vecs.T
    u_dense = binv @ v
    assert np.abs(u_dense - wb.u).max() < 1e-10


def test_first_band_leakage(bundle_factory, ref_spec):
    bun = bundle_factory(0.16)
    u0 = bun.wb.orbital(0)
    leak = l2_norm(bun.wb.dx, u0 - bun.dom.project_band1(u0))
    assert leak < 1e-6


def test_wannier_function_requires_gauge(ref_spec):
    bd = st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.2))
    with pytest.raises(GaugeError):
        st.wannier_function(bd, np.linspace(-4, 4, 512, endpoint=False))


def test_wannier_close_to_oscillator_ground_state(bundle_factory, ref_spec):
    dists = []
    for hb in (0.2, 0.1):
        wb = bundle_factory(hb).wb
        width = np.sqrt(ref_spec.curvature / 2) / (2 * hb)
        g = np.exp(-width * wb.x**2)
        g /= np.sqrt(wb.dx * np.sum(g**2))
        dists.append(l2_norm(wb.dx, wb.w - g))
    assert dists[0] < 0.08 and dists[1] < 0.04
    assert dists[1] < dists[0]


def test_wannier_tail_follows_action_rate(bundle_factory, ref_agmon, ref_spec):
    # fitted rate approaches -1 from above as hbar decreases; +-25% at the
    # smallest hbar (the WKB amplitude factor biases the desk-scale fit)
    slopes = []
    for hb in (0.2, 0.16, 0.1):
        wb = bundle_factory(hb).wb
        d = st.tunneling_action(ref_spec, grid=wb.x).d
        aw = np.abs(wb.w)
        mask = (aw >= 1e-10) & (aw <= 1e-3)
        slopes.append(np.polyfit(d[mask] / hb, np.log(aw[mask]), 1)[0])
    assert all(abs(b + 1) < abs(a + 1) for a, b in zip(slopes, slopes[1:]))
    assert -1.25 < slopes[-1] < -0.75


def test_overlap_slope_recovers_action(bundle_factory, ref_agmon):
    hbars = (0.25, 0.2, 0.16, 0.125, 0.1)
    a1 = [abs(bundle_factory(h).wb.overlaps[1]) for h in hbars]
    slope = -np.polyfit([1 / h for h in hbars], np.log(a1), 1)[0]
    assert 0.9 <= slope / ref_agmon.s0 <= 1.1


def test_lowdin_leading_order(bundle_factory):
    for hb in (0.2, 0.1):
        wb = bundle_factory(hb).wb
        a1 = wb.overlaps[1]
        assert abs(wb.lowdin[1] + 0.5 * a1) < 0.01 * abs(a1)


def test_first_band_completeness(bundle_factory):
    bun = bundle_factory(0.16)
    wb, bd = bun.wb, bun.bd
    for i in (4, 20, 50):
        phi = st.bloch_on_grid(bd, 1, bd.kappa[i], wb.x)
        coeffs = wb.dx * (wb.u @ phi)
        total = float(np.sum(np.abs(coeffs) ** 2))
        ref = l2_norm(wb.dx, phi) ** 2
        assert abs(total - ref) / ref < 1e-6


def test_diagnostics_scalings(bundle_factory, ref_agmon):
    d2 = st.basis_diagnostics(bundle_factory(0.2).wb)
    d1 = st.basis_diagnostics(bundle_factory(0.1).wb)
    r = (d2.sup_sum * np.sqrt(0.2)) / (d1.sup_sum * np.sqrt(0.1))
    assert 0.5 <= r <= 2.0
    for d in (d2, d1):
        assert d.pair_l1[2] <= 10 * d.pair_l1[1] ** 2
    hbars = (0.25, 0.2, 0.16, 0.125, 0.1)
    vals = [st.basis_diagnostics(bundle_factory(h).wb).pair_l1[1] for h in hbars]
    slope = -np.polyfit([1 / h for h in hbars], np.log(vals), 1)[0]
    assert 0.85 <= slope / ref_agmon.s0 <= 1.15


def test_incommensurate_domain_rejected(ref_spec):
    bd = fix_gauge(st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.2)))
    with pytest.raises(BasisError):
        st.build_orthonormal_basis(bd, ref_spec, 24, 64)


def test_small_domain_warns(ref_spec):
    bd = fix_gauge(st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.25, n_kappa=16)))
    with pytest.warns(UserWarning, match="interior"):
        st.build_orthonormal_basis(bd, ref_spec, 8, 64, lowdin_band=3)


def test_basis_bundle_roundtrip(tmp_path, bundle_factory):
    from semitb.wannier import load_basis, save_basis

    wb = bundle_factory(0.2).wb
    path = tmp_path / "basis.npz"
    save_basis(wb, path)
    back = load_basis(path)
    assert np.array_equal(back.u, wb.u)
    assert np.array_equal(back.overlaps, wb.overlaps)
    assert back.cells == wb.cells and back.lowdin_band == wb.lowdin_band


def test_basis_bundle_version_mismatch(tmp_path, bundle_factory):
    from semitb.wannier import load_basis

    wb = bundle_factory(0.2).wb
    path = tmp_path / "basis.npz"
    np.savez(path, version=np.int64(99), a=wb.a, hbar=wb.hbar,
             cells=np.int64(wb.cells), points_per_cell=np.int64(64),
             x=wb.x, dx=wb.dx, sites=wb.sites, w=wb.w, v0=wb.v0, u=wb.u,
             overlaps=wb.overlaps, lowdin=wb.lowdin, lowdin_band=np.int64(6),
             decay_rate=wb.decay_rate)
    with pytest.raises(BasisError):
        load_basis(path)


def test_even_and_odd_cell_counts(ref_spec):
    bd = fix_gauge(st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.25, n_kappa=64)))
    wb_even = st.build_orthonormal_basis(bd, ref_spec, 32, 32)
    assert wb_even.sites[0] == -15 and wb_even.sites[-1] == 16
    bd_odd = fix_gauge(st.solve_bands(ref_spec, st.FloquetConfig(hbar=0.25, n_kappa=62)))
    wb_odd = st.build_orthonormal_basis(bd_odd, ref_spec, 31, 32)
    assert wb_odd.sites[0] == -15 and wb_odd.sites[-1] == 15
