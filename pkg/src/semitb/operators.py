"""Spectral Hamiltonian on a periodic multi-cell domain.

The domain covers `cells` lattice periods with a uniform grid and periodic
boundary; plane-wave modes whose indices agree modulo `cells` are coupled
by the periodic potential, so the Hamiltonian splits into `cells`
independent blocks, one per domain quasimomentum.  Diagonalizing the
blocks yields the complete eigenbasis of the discrete operator, which
makes the first-band projector and the resolvent on its complement exact
and cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bloch import potential_fourier
from .potential import PotentialSpec


def domain_grid(a: float, cells: int, points_per_cell: int):
    """Uniform grid over `cells` periods centered on the well at x = 0.

    Returns (x, dx, sites); sites are the integer cell indices, running
    from -((cells-1)//2) upward so an even cell count extends one extra
    site to the right.
    """
    jmin = -((cells - 1) // 2)
    dx = a / points_per_cell
    n = cells * points_per_cell
    x = (jmin - 0.5) * a + dx * np.arange(n)
    sites = jmin + np.arange(cells)
    return x, dx, sites


def l2_norm(dx: float, f: np.ndarray) -> float:
    return float(np.sqrt(dx * np.sum(np.abs(f) ** 2)))


def inner(dx: float, f: np.ndarray, g: np.ndarray):
    """L2 inner product on the grid, conjugate-linear in the first slot."""
    return dx * np.sum(np.conj(f) * g)


class PeriodicDomain:
    """Discrete -hbar^2 d2/dx2 + V on the periodic multi-cell grid."""

    def __init__(self, spec: PotentialSpec, hbar: float, cells: int,
                 points_per_cell: int = 64):
        self.spec = spec
        self.hbar = float(hbar)
        self.cells = int(cells)
        self.points_per_cell = int(points_per_cell)
        self.x, self.dx, self.sites = domain_grid(spec.a, cells, points_per_cell)
        self.n = self.x.size
        self.vx = np.asarray(spec.v(self.x), dtype=float)
        self.length = spec.a * cells
        g = np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)
        self.g = g
        self.k = 2 * np.pi * g / self.length
        self._kinetic = self.hbar**2 * self.k**2
        self._build_blocks()
        self._dense = None

    def _build_blocks(self):
        m = self.cells
        ppc = self.points_per_cell
        vhat = potential_fourier(self.spec, ppc - 1)
        kmax = ppc - 1
        self.block_index = np.empty((m, ppc), dtype=int)
        self.block_evals = np.empty((m, ppc))
        self.block_evecs = np.empty((m, ppc, ppc), dtype=complex)
        kap = np.empty(m)
        # the fft frame measures phases from x[0], so a cell harmonic s picks
        # up exp(2 pi i s x[0] / a) relative to the cell Fourier coefficients
        srange = np.arange(-(ppc - 1), ppc)
        phase = np.exp(2j * np.pi * srange * (self.x[0] / self.spec.a))
        vhat = vhat * phase
        for r in range(m):
            sel = np.flatnonzero(self.g % m == r)
            gb = self.g[sel]
            order = np.argsort(gb)
            sel = sel[order]
            gb = gb[order]
            cell_offset = (gb - gb[0]) // m  # consecutive integers 0..ppc-1
            h = vhat[(cell_offset[:, None] - cell_offset[None, :]) + kmax].copy()
            h[np.arange(ppc), np.arange(ppc)] += self._kinetic[sel]
            w, u = np.linalg.eigh(h)
            self.block_index[r] = sel
            self.block_evals[r] = w
            self.block_evecs[r] = u
            r_signed = r if r <= m // 2 else r - m
            if r == m // 2 and m % 2 == 0:
                r_signed = -m // 2
            kap[r] = 2 * np.pi * r_signed / self.length
        self.domain_kappa = kap

    # -- operator applications ------------------------------------------------

    def apply_h(self, phi: np.ndarray) -> np.ndarray:
        """H phi with the Laplacian applied by Fourier multiplication."""
        out = np.fft.ifft(self._kinetic * np.fft.fft(phi))
        if np.isrealobj(phi):
            out = out.real
        return out + self.vx * phi

    def gradient(self, phi: np.ndarray) -> np.ndarray:
        out = np.fft.ifft(1j * self.k * np.fft.fft(phi))
        return out.real if np.isrealobj(phi) else out

    def h1_norm(self, phi: np.ndarray) -> float:
        return float(np.sqrt(l2_norm(self.dx, phi) ** 2 +
                             l2_norm(self.dx, self.gradient(phi)) ** 2))

    def project_band1(self, phi: np.ndarray) -> np.ndarray:
        """Spectral projector onto the lowest band of the domain operator."""
        f = np.fft.fft(phi)
        out = np.zeros_like(f)
        for r in range(self.cells):
            sel = self.block_index[r]
            vec = self.block_evecs[r][:, 0]
            out[sel] = vec * (np.conj(vec) @ f[sel])
        res = np.fft.ifft(out)
        return res.real if np.isrealobj(phi) else res

    def resolvent_perp(self, phi: np.ndarray, z: float) -> np.ndarray:
        """(H - z)^{-1} restricted to the complement of the first band."""
        f = np.fft.fft(phi)
        out = np.zeros_like(f, dtype=complex)
        for r in range(self.cells):
            sel = self.block_index[r]
            evecs = self.block_evecs[r]
            coef = np.conj(evecs.T) @ f[sel]
            coef[0] = 0.0
            coef[1:] = coef[1:] / (self.block_evals[r][1:] - z)
            out[sel] = evecs @ coef
        res = np.fft.ifft(out)
        return res.real if np.isrealobj(phi) else res

    # -- spectral data ---------------------------------------------------------

    def band_energies(self, n: int) -> np.ndarray:
        """E_n on the domain quasimomenta (1-based band index)."""
        return self.block_evals[:, n - 1]

    def band_edges(self, n: int) -> tuple[float, float]:
        e = self.band_energies(n)
        return float(e.min()), float(e.max())

    def band_gap(self, n: int) -> float:
        return self.band_edges(n + 1)[0] - self.band_edges(n)[1]

    def perp_distance(self, z: float) -> float:
        """Distance from z to the spectrum excluding the first band."""
        return float(np.abs(self.block_evals[:, 1:] - z).min())

    def dense_h(self) -> np.ndarray:
        """Dense real-symmetric matrix of the operator (cached)."""
        if self._dense is None:
            col = np.fft.ifft(self._kinetic).real
            mat = scipy.linalg.circulant(col) + np.diag(self.vx)
            self._dense = 0.5 * (mat + mat.T)
        return self._dense
