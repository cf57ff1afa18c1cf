"""Floquet eigenproblem in a plane-wave basis.

For each quasimomentum kappa in the Brillouin zone [-b/2, b/2), b = 2*pi/a,
the operator -hbar^2 d^2/dx^2 + V(x) acting on functions with boundary
condition phi(x + a) = exp(i*kappa*a) phi(x) is represented on the modes
exp(i*(kappa + 2*pi*m/a)*x) and diagonalized exactly (dense Hermitian).
Band widths are exponentially small in 1/hbar, so the spectrally accurate
plane-wave discretization is required; finite differences would bury them
in O(h^2) error.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import Error
from .potential import PotentialSpec

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class FloquetConfig:
    """Discretization of the Floquet eigenproblem.

    n_pw plane-wave modes (odd, symmetric around zero), n_kappa points on
    the Brillouin zone (even, so kappa = 0 and kappa = -b/2 are on the
    grid), n_bands bands kept.
    """

    hbar: float
    n_pw: int = 129
    n_kappa: int = 64
    n_bands: int = 5

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if self.n_pw % 2 != 1:
            raise ValueError("n_pw must be odd (symmetric mode set)")
        if self.n_pw < 2 * self.n_bands + 9:
            raise ValueError("n_pw must be >= 2*n_bands + 9")
        if self.n_kappa % 2 != 0 or self.n_kappa < 8:
            raise ValueError("n_kappa must be even and >= 8")


@dataclass(frozen=True)
class BandData:
    """Band functions and Bloch eigenvectors on a kappa grid.

    coeffs[n, i, :] are the plane-wave coefficients of band n at
    kappa[i], scaled so each Bloch function has unit L2 norm over one
    cell.  energies[n, i] = E_n(kappa_i), sorted ascending in n.
    """

    a: float
    hbar: float
    kappa: np.ndarray
    modes: np.ndarray
    energies: np.ndarray
    coeffs: np.ndarray
    gauge_fixed: bool = False

    @property
    def b(self) -> float:
        return 2 * np.pi / self.a

    @property
    def n_bands(self) -> int:
        return self.energies.shape[0]

    @property
    def n_kappa(self) -> int:
        return self.kappa.size

    def band_edges(self, n: int) -> tuple[float, float]:
        """(alpha_n, beta_n) = (min, max) of band n, 1-based."""
        e = self.energies[n - 1]
        return float(e.min()), float(e.max())


def potential_fourier(spec: PotentialSpec, kmax: int, n_samples: int = 4096) -> np.ndarray:
    """Cell Fourier coefficients vhat[k] for |k| <= kmax, Hermitian by construction.

    Returns an array of length 2*kmax + 1 indexed by k + kmax.
    """
    n = n_samples
    x = spec.a * np.arange(n) / n
    vx = np.asarray(spec.v(x), dtype=float)
    f = np.fft.fft(vx) / n
    out = np.zeros(2 * kmax + 1, dtype=complex)
    out[kmax] = f[0].real
    for k in range(1, kmax + 1):
        out[kmax + k] = f[-k % n]  # coefficient of exp(+i 2 pi k x / a)
        out[kmax - k] = np.conj(out[kmax + k])
    return out


def solve_bands(spec: PotentialSpec, cfg: FloquetConfig, jobs: int = 1) -> BandData:
    """Diagonalize the Floquet matrix at every kappa on the zone grid.

    The matrix is hbar^2 (kappa + 2 pi m / a)^2 on the diagonal plus the
    Toeplitz potential block vhat[m - n]; it is Hermitian by construction
    and this is asserted.  Eigenvalues come out ascending from eigh.  The
    kappa points are independent eigenproblems and run on a thread pool
    when jobs > 1.

    Warns if the top kept band reaches a quarter of the plane-wave cutoff
    energy, which signals basis truncation.
    """
    a, hbar = spec.a, cfg.hbar
    b = 2 * np.pi / a
    modes = np.arange(cfg.n_pw) - cfg.n_pw // 2
    kappa = -b / 2 + b * np.arange(cfg.n_kappa) / cfg.n_kappa

    vhat = potential_fourier(spec, cfg.n_pw - 1)
    kmax = cfg.n_pw - 1
    diff = modes[:, None] - modes[None, :]
    vblock = vhat[diff + kmax]
    assert np.array_equal(vblock, vblock.conj().T), "Floquet matrix not Hermitian"

    nb = cfg.n_bands
    energies = np.empty((nb, cfg.n_kappa))
    coeffs = np.empty((nb, cfg.n_kappa, cfg.n_pw), dtype=complex)

    def _solve_one(i):
        h = vblock.copy()
        h[np.arange(cfg.n_pw), np.arange(cfg.n_pw)] += (
            hbar**2 * (kappa[i] + b * modes) ** 2)
        try:
            w, u = np.linalg.eigh(h)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise Error(f"eigensolver failed at kappa={kappa[i]:.6g}") from exc
        energies[:, i] = w[:nb]
        coeffs[:, i, :] = (u[:, :nb] / np.sqrt(a)).T

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_solve_one, range(cfg.n_kappa)))
    else:
        for i in range(cfg.n_kappa):
            _solve_one(i)

    cutoff = hbar**2 * (np.pi * cfg.n_pw / a) ** 2 / 4
    if energies[nb - 1].max() > cutoff:
        warnings.warn(
            f"top kept band reaches {energies[nb - 1].max():.3g}, above the "
            f"plane-wave safety cutoff {cutoff:.3g}; increase n_pw",
            stacklevel=2,
        )

    return BandData(a=a, hbar=hbar, kappa=kappa, modes=modes,
                    energies=energies, coeffs=coeffs)


def band_metrics(bd: BandData, n: int) -> dict:
    """Width and gap above band n (1-based): beta_n - alpha_n, alpha_{n+1} - beta_n."""
    if not 1 <= n <= bd.n_bands - 1:
        raise ValueError(f"band index {n} out of range 1..{bd.n_bands - 1}")
    alpha_n, beta_n = bd.band_edges(n)
    alpha_next, _ = bd.band_edges(n + 1)
    return {"width": beta_n - alpha_n, "gap_above": alpha_next - beta_n}


def fold_to_zone(kappa: float, b: float) -> float:
    """Map kappa into the fundamental zone [-b/2, b/2)."""
    return (kappa + b / 2) % b - b / 2


def bloch_on_grid(bd: BandData, n: int, kappa: float, x: np.ndarray) -> np.ndarray:
    """Evaluate the Bloch function of band n (1-based) at a solved kappa.

    kappa outside the zone is folded by periodicity.  Raises ValueError
    if the folded kappa is not one of the solved grid points.
    """
    k = fold_to_zone(kappa, bd.b)
    idx = int(np.argmin(np.abs(bd.kappa - k)))
    if abs(bd.kappa[idx] - k) > 1e-9 * bd.b:
        raise ValueError(f"kappa={kappa:.6g} is not on the solved grid")
    x = np.asarray(x, dtype=float)
    freqs = bd.kappa[idx] + bd.b * bd.modes
    return np.exp(1j * np.outer(x, freqs)) @ bd.coeffs[n - 1, idx]


def band_csv(bd: BandData) -> str:
    """Band data as CSV text with columns (n, kappa, E)."""
    buf = io.StringIO()
    buf.write("n,kappa,E\n")
    for n in range(bd.n_bands):
        for i in range(bd.n_kappa):
            buf.write(f"{n + 1},{bd.kappa[i]!r},{bd.energies[n, i]!r}\n")
    return buf.getvalue()


def save_band_data(bd: BandData, path) -> None:
    """Persist a BandData bundle (versioned npz)."""
    np.savez(
        path,
        version=np.int64(BUNDLE_VERSION),
        a=bd.a,
        hbar=bd.hbar,
        kappa=bd.kappa,
        modes=bd.modes,
        energies=bd.energies,
        coeffs=bd.coeffs,
        gauge_fixed=np.int64(1 if bd.gauge_fixed else 0),
    )


def load_band_data(path) -> BandData:
    """Load a BandData bundle saved by save_band_data.

    Raises Error on version mismatch so stale caches are never reused.
    """
    with np.load(path) as z:
        if int(z["version"]) != BUNDLE_VERSION:
            raise Error(f"band bundle version {int(z['version'])} != {BUNDLE_VERSION}")
        return BandData(
            a=float(z["a"]),
            hbar=float(z["hbar"]),
            kappa=z["kappa"],
            modes=z["modes"],
            energies=z["energies"],
            coeffs=z["coeffs"],
            gauge_fixed=bool(int(z["gauge_fixed"])),
        )


def with_gauge_flag(bd: BandData, coeffs: np.ndarray) -> BandData:
    """Internal helper: new BandData with replaced coefficients, gauge marked fixed."""
    return replace(bd, coeffs=coeffs, gauge_fixed=True)
