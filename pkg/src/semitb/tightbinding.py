"""Lattice parameters of H in the localized basis.

The restriction of H to the first band in the orthonormal localized basis
is a banded Toeplitz matrix lambda1*I - beta*T + D, with T the
nearest-neighbor stencil and D the residual beyond-nearest-neighbor
couplings.  beta is computed from the real-space matrix element and
cross-checked against the first Fourier coefficient of the band function,
which is an independent route through the eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bloch import BandData
from .errors import BasisError
from .potential import PotentialSpec
from .wannier import WannierBasis

HALF_BANDWIDTH = 4


@dataclass(frozen=True)
class TBParams:
    """Extracted lattice parameters at one hbar.

    h_band[ell + 4] = <u_0, H u_ell> for ell in -4..4.  dtilde_norm is the
    row sum of the couplings beyond nearest neighbors (the l1-induced
    operator norm of the residual), and dtilde_ratio its ratio to beta.
    gamma and eta are the nonlinearity strength and the effective
    dimensionless combination eta = c0*gamma/beta.
    """

    hbar: float
    sigma: float
    lambda1: float
    beta: float
    c0: float
    gamma: float
    eta: float
    h_band: np.ndarray
    dtilde_norm: float
    dtilde_ratio: float


def apply_hamiltonian(wb: WannierBasis, spec: PotentialSpec, hbar: float,
                      phi: np.ndarray) -> np.ndarray:
    """Spectral application of H on the basis grid."""
    n = wb.n_grid
    k = 2 * np.pi * np.rint(np.fft.fftfreq(n) * n) / (wb.a * wb.cells)
    out = np.fft.ifft(hbar**2 * k**2 * np.fft.fft(phi))
    if np.isrealobj(phi):
        out = out.real
    return out + np.asarray(spec.v(wb.x), dtype=float) * phi


def h_matrix_elements(wb: WannierBasis, spec: PotentialSpec, hbar: float,
                      band1_edges: tuple[float, float] | None = None):
    """Banded matrix elements <u_0, H u_ell>, |ell| <= 4.

    Returns (h_band, lambda1, beta) with lambda1 the diagonal element and
    beta = -<u_0, H u_1>.  Checks the symmetry of the band, the sign of
    beta under the positive-well gauge, and optionally that lambda1 lies
    inside the first band.
    """
    u0 = wb.orbital(0)
    hu0 = apply_hamiltonian(wb, spec, hbar, u0)
    ells = np.arange(-HALF_BANDWIDTH, HALF_BANDWIDTH + 1)
    h_band = np.empty(ells.size)
    for i, ell in enumerate(ells):
        h_band[i] = wb.dx * np.sum(wb.orbital(int(ell)) * hu0)

    asym = np.abs(h_band - h_band[::-1]).max()
    if asym > 1e-10 * max(1.0, np.abs(h_band).max()):
        raise BasisError(f"H matrix elements not symmetric: asymmetry {asym:.2e}")

    lambda1 = float(h_band[HALF_BANDWIDTH])
    beta = -float(h_band[HALF_BANDWIDTH + 1])
    if beta <= 0:
        raise BasisError(
            f"hopping beta = {beta:.3e} <= 0; sign convention violated upstream"
        )
    if band1_edges is not None:
        lo, hi = band1_edges
        if not (lo - 1e-8 <= lambda1 <= hi + 1e-8):
            raise BasisError(
                f"lambda1 = {lambda1:.8g} outside first band [{lo:.8g}, {hi:.8g}]: "
                "basis leaks out of the band subspace"
            )
    return h_band, lambda1, beta


def interaction_constant(wb: WannierBasis, sigma: float, site: int = 0) -> float:
    """c0 = integral of |u_site|^(2*sigma + 2)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    u = wb.orbital(site)
    return float(wb.dx * np.sum(np.abs(u) ** (2 * sigma + 2)))


def effective_nonlinearity(c0: float, gamma: float, beta: float) -> float:
    """eta = c0*gamma/beta."""
    if beta <= 0:
        raise BasisError(f"beta = {beta:.3e} <= 0")
    return c0 * gamma / beta


def gamma_for_eta(c0: float, eta: float, beta: float) -> float:
    """Inverse map gamma(eta) = eta*beta/c0 used by the multiscale sweep."""
    if beta <= 0:
        raise BasisError(f"beta = {beta:.3e} <= 0")
    return eta * beta / c0


def residual_coupling_norm(h_band: np.ndarray, beta: float):
    """Row sum of |<u_0, H u_ell>| over |ell| >= 2, and its ratio to beta."""
    c = HALF_BANDWIDTH
    tail = np.abs(h_band[:c - 1]).sum() + np.abs(h_band[c + 2:]).sum()
    return float(tail), float(tail / beta)


def band_hopping(bd: BandData) -> float:
    """Independent hopping estimate -mean(E_1(kappa) cos(kappa a))."""
    return -float(np.mean(bd.energies[0] * np.cos(bd.kappa * bd.a)))


def band_average(bd: BandData) -> float:
    """Zone average of the first band function."""
    return float(np.mean(bd.energies[0]))


def extract_params(wb: WannierBasis, spec: PotentialSpec, hbar: float,
                   sigma: float, bd: BandData | None = None,
                   gamma: float = 0.0) -> TBParams:
    """Assemble TBParams from a built basis."""
    edges = bd.band_edges(1) if bd is not None else None
    h_band, lambda1, beta = h_matrix_elements(wb, spec, hbar, edges)
    c0 = interaction_constant(wb, sigma)
    dnorm, dratio = residual_coupling_norm(h_band, beta)
    eta = effective_nonlinearity(c0, gamma, beta)
    return TBParams(hbar=hbar, sigma=sigma, lambda1=lambda1, beta=beta,
                    c0=c0, gamma=gamma, eta=eta, h_band=h_band,
                    dtilde_norm=dnorm, dtilde_ratio=dratio)


def with_eta(tbp: TBParams, eta: float) -> TBParams:
    """Same parameters at a different effective nonlinearity."""
    gamma = gamma_for_eta(tbp.c0, eta, tbp.beta)
    return replace(tbp, gamma=gamma, eta=eta)
