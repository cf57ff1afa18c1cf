"""Stationary discrete NLS on a truncated lattice.

Solves E F_k - (F_{k+1} + F_{k-1}) + eta |F_k|^{2 sigma} F_k = 0 with the
unit-norm constraint by a bordered Newton iteration in (F, E), continued
from the decoupled large-|eta| limit where the solution is a single-site
delta.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergenceError, SolverError, TailFitError

RESIDUAL_TOL = 1e-10
NORM_TOL = 1e-12


@dataclass(frozen=True)
class DnlsProblem:
    eta: float
    sigma: float = 1.0
    n_sites: int = 41
    boundary: str = "zero"

    def __post_init__(self):
        # production runs use >= 11 sites; small lattices stay available for
        # brute-force cross checks
        if self.n_sites < 3:
            raise ValueError("n_sites must be >= 3")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.boundary not in ("zero", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def site_indices(self) -> np.ndarray:
        """Integer site labels centered on zero."""
        return np.arange(self.n_sites) - self.n_sites // 2


@dataclass(frozen=True)
class DnlsState:
    """An accepted solution: real F with unit norm and tiny residual."""

    eta: float
    sigma: float
    boundary: str
    f: np.ndarray
    e: float
    residual_norm: float

    @property
    def participation(self) -> float:
        """1 / sum F^4, the effective number of occupied sites."""
        return float(1.0 / np.sum(self.f**4))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.f))


def neighbor_sum(f: np.ndarray, boundary: str) -> np.ndarray:
    out = np.zeros_like(f)
    out[:-1] += f[1:]
    out[1:] += f[:-1]
    if boundary == "periodic":
        out[0] += f[-1]
        out[-1] += f[0]
    return out


def _power(f: np.ndarray, two_sigma: float) -> np.ndarray:
    if two_sigma >= 1.0 or two_sigma == 0.0:
        return np.abs(f) ** two_sigma
    # sub-C1 powers: floor the base so the Jacobian stays finite at f = 0
    return (f * np.conj(f) + 1e-300).real ** (two_sigma / 2)


def dnls_residual(f: np.ndarray, e: float, prob: DnlsProblem) -> np.ndarray:
    """Componentwise E F - (T F) + eta |F|^{2 sigma} F."""
    return e * f - neighbor_sum(f, prob.boundary) + prob.eta * _power(f, 2 * prob.sigma) * f


def linearization_lplus(f: np.ndarray, e: float, prob: DnlsProblem) -> np.ndarray:
    """Real linearization at F: tridiagonal with corner terms if periodic."""
    n = f.size
    mat = np.zeros((n, n))
    diag = e + prob.eta * (2 * prob.sigma + 1) * _power(f, 2 * prob.sigma)
    mat[np.arange(n), np.arange(n)] = diag
    idx = np.arange(n - 1)
    mat[idx, idx + 1] -= 1.0
    mat[idx + 1, idx] -= 1.0
    if prob.boundary == "periodic":
        mat[0, -1] -= 1.0
        mat[-1, 0] -= 1.0
    return mat


def newton_solve(prob: DnlsProblem, f0: np.ndarray, e0: float,
                 tol: float = 1e-13, max_iter: int = 60) -> DnlsState:
    """Bordered Newton in (F, E) with the norm constraint; damped steps."""
    f = np.asarray(f0, dtype=float).copy()
    e = float(e0)
    n = f.size
    history = []
    for _ in range(max_iter):
        r = dnls_residual(f, e, prob)
        g = 0.5 * (f @ f - 1.0)
        res = float(np.sqrt(r @ r + g * g))
        history.append(res)
        if res < tol:
            break
        jac = np.zeros((n + 1, n + 1))
        jac[:n, :n] = linearization_lplus(f, e, prob)
        jac[:n, n] = f
        jac[n, :n] = f
        try:
            step = np.linalg.solve(jac, -np.concatenate([r, [g]]))
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular bordered Jacobian") from exc
        scale = 1.0
        for _ in range(40):
            f_new = f + scale * step[:n]
            e_new = e + scale * step[n]
            r_new = dnls_residual(f_new, e_new, prob)
            g_new = 0.5 * (f_new @ f_new - 1.0)
            if np.sqrt(r_new @ r_new + g_new * g_new) < res or scale < 1e-8:
                break
            scale *= 0.5
        f, e = f + scale * step[:n], e + scale * step[n]
    r = dnls_residual(f, e, prob)
    rnorm = float(np.linalg.norm(r))
    if rnorm > RESIDUAL_TOL or abs(np.linalg.norm(f) - 1.0) > NORM_TOL:
        raise NonConvergenceError(
            f"Newton stalled at residual {rnorm:.3e}", history=history
        )
    return DnlsState(eta=prob.eta, sigma=prob.sigma, boundary=prob.boundary,
                     f=f, e=e, residual_norm=rnorm)


@dataclass(frozen=True)
class ContinuationResult:
    states: tuple
    turning_point: bool

    def at_eta(self, eta: float) -> DnlsState:
        for s in self.states:
            if abs(s.eta - eta) <= 1e-12 * max(1.0, abs(eta)):
                return s
        raise KeyError(f"no state at eta={eta}")


def solve_anticontinuum(prob: DnlsProblem, seed_site: int = 0,
                        eta_path=None) -> ContinuationResult:
    """Continue the single-site branch from the decoupled limit.

    The path must start at |eta| >= 50 where F = delta is a good seed;
    intermediate steps are inserted by halving whenever Newton fails.  On
    a persistent failure the result carries the path so far and a
    turning-point flag.
    """
    if eta_path is None:
        eta_path = [prob.eta]
    eta_path = [float(v) for v in eta_path]
    if abs(eta_path[0]) < 50:
        raise ValueError("continuation path must start at |eta| >= 50")
    if any(abs(b) > abs(a) + 1e-12 for a, b in zip(eta_path, eta_path[1:])):
        raise ValueError("continuation path must have decreasing |eta|")
    if abs(seed_site) > prob.n_sites // 2:
        raise ValueError("seed site outside the lattice")

    n = prob.n_sites
    f = np.zeros(n)
    f[seed_site + n // 2] = 1.0
    e = -eta_path[0]

    states = []
    turning = False
    current = eta_path[0]
    for target in eta_path:
        try:
            state, f, e = _continue_to(prob, f, e, current, target)
        except SolverError:
            turning = True
            break
        states.append(state)
        current = target
    return ContinuationResult(states=tuple(states), turning_point=turning)


def _continue_to(prob: DnlsProblem, f, e, start, target, max_depth=40):
    """March eta from start to target, halving the step on failure."""
    eta = start
    state = None
    step = target - start
    depth = 0
    for _ in range(10000):
        nxt = target if abs(step) >= abs(target - eta) else eta + step
        try:
            state = newton_solve(dataclasses.replace(prob, eta=nxt), f, e)
            f, e, eta = state.f, state.e, nxt
        except (NonConvergenceError, SolverError):
            depth += 1
            step *= 0.5
            if depth > max_depth or abs(step) < 1e-9 * max(1.0, abs(target)):
                raise SolverError(
                    f"continuation stalled between eta={eta} and {target}"
                )
        if state is not None and eta == target:
            return state, f, e
    raise SolverError(f"continuation exceeded its step budget near eta={eta}")


def decay_rate(f: np.ndarray, lo: float = 1e-12, hi: float = 1e-2) -> float:
    """Least-squares tail rate of log|F_j| against distance from the peak.

    Requires a localized profile (participation < N/4) and at least four
    sites with |F| inside [lo, hi].
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    part = 1.0 / np.sum(f**4) * (f @ f) ** 2
    if part >= n / 4:
        raise TailFitError(f"profile delocalized: participation {part:.1f} >= N/4")
    peak = int(np.argmax(np.abs(f)))
    dist = np.abs(np.arange(n) - peak)
    mag = np.abs(f)
    mask = (mag >= lo) & (mag <= hi)
    if mask.sum() < 4:
        raise TailFitError(f"only {int(mask.sum())} usable tail sites (< 4)")
    slope = np.polyfit(dist[mask], np.log(mag[mask]), 1)[0]
    return -float(slope)


def operator_l1_norm(mat: np.ndarray) -> float:
    """Induced l1 -> l1 norm: maximum absolute column sum."""
    return float(np.abs(mat).sum(axis=0).max())


@dataclass(frozen=True)
class WeinsteinResult:
    threshold: float
    exists_for_all: bool


def weinstein_threshold(sigma: float, n_sites: int, n_seeds: int = 8,
                        seed: int = 7, max_iter: int = 20000) -> WeinsteinResult:
    """Excitation threshold (sigma + 1) * inf of the discrete interpolation quotient.

    For sigma < 2 (one dimension) the constrained minimizer exists at
    every negative eta and the threshold is reported as zero.  Otherwise
    the quotient

        (sum F^2)^sigma * <(-Delta) F, F> / sum |F|^{2 sigma + 2}

    is minimized by projected gradient descent from several random seeds.
    """
    if sigma < 2:
        return WeinsteinResult(threshold=0.0, exists_for_all=True)

    rng = np.random.default_rng(seed)
    best = np.inf
    converged = False
    for _ in range(n_seeds):
        f = rng.standard_normal(n_sites)
        f /= np.linalg.norm(f)
        q, ok = _minimize_quotient(f, sigma, max_iter)
        converged = converged or ok
        best = min(best, q)
    if not converged:
        raise SolverError(f"quotient minimization did not converge; best {best:.6g}")
    return WeinsteinResult(threshold=float((sigma + 1) * best), exists_for_all=False)


def quotient(f: np.ndarray, sigma: float) -> float:
    """Scale-invariant interpolation quotient on the truncated lattice."""
    f = np.asarray(f, dtype=float)
    a = f @ f
    d = np.diff(f, prepend=0.0, append=0.0)
    b = np.sum(d * d)
    c = np.sum(np.abs(f) ** (2 * sigma + 2))
    return float(a**sigma * b / c)


def _minimize_quotient(f, sigma, max_iter):
    lr = 0.1
    q = quotient(f, sigma)
    ok = False
    for _ in range(max_iter):
        a = f @ f
        d = np.diff(f, prepend=0.0, append=0.0)
        b = np.sum(d * d)
        c = np.sum(np.abs(f) ** (2 * sigma + 2))
        grad_b = np.empty_like(f)
        grad_b[:] = 4 * f
        grad_b[:-1] -= 2 * f[1:]
        grad_b[1:] -= 2 * f[:-1]
        grad_c = (2 * sigma + 2) * np.abs(f) ** (2 * sigma) * f
        g = q * (2 * sigma * f / a + grad_b / b - grad_c / c)
        g -= (g @ f) / a * f
        gn = np.linalg.norm(g)
        if gn < 1e-12 * max(q, 1.0):
            ok = True
            break
        f_new = f - lr * g
        f_new /= np.linalg.norm(f_new)
        q_new = quotient(f_new, sigma)
        if q_new < q:
            f, q = f_new, q_new
            lr *= 1.1
        else:
            lr *= 0.5
            if lr < 1e-14:
                ok = True
                break
    return q, ok


def brute_force_states(prob: DnlsProblem, n_starts: int = 200,
                       seed: int = 0) -> list[DnlsState]:
    """Newton from random unit seeds; returns every converged state."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_starts):
        f0 = rng.standard_normal(prob.n_sites)
        f0 /= np.linalg.norm(f0)
        e0 = float(rng.uniform(-3, 3) - prob.eta)
        try:
            out.append(newton_solve(prob, f0, e0))
        except (NonConvergenceError, SolverError):
            continue
    return out


def linear_ground_state(n_sites: int, boundary: str = "zero") -> DnlsState:
    """The eta = 0 reference: top eigenvector of the neighbor-sum stencil.

    This is the state the focusing branch connects to as eta -> 0-, with
    all positive amplitudes and participation proportional to N.
    """
    t = np.zeros((n_sites, n_sites))
    idx = np.arange(n_sites - 1)
    t[idx, idx + 1] = 1.0
    t[idx + 1, idx] = 1.0
    if boundary == "periodic":
        t[0, -1] += 1.0
        t[-1, 0] += 1.0
    w, v = np.linalg.eigh(t)
    f = v[:, -1]
    if f[np.argmax(np.abs(f))] < 0:
        f = -f
    return DnlsState(eta=0.0, sigma=1.0, boundary=boundary, f=f,
                     e=float(w[-1]), residual_norm=0.0)
