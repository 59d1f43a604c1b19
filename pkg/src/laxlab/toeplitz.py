"""Finite block Toeplitz sections of the symbol G = exp(t L0) on the unit circle.

The Toeplitz operator of G acts on vector polynomials in ``lam``. It fails to
be invertible exactly at the singular times of the Lax flow, so the smallest
singular value of a finite section is used as a detector over the complex
``t`` plane.

Since ``det G = 1``, the pointwise smallest singular value of ``G(lam)`` is
``1/||G(lam)||``, which shrinks exponentially as ``|t|`` grows; the
section's sigma_min follows it from above. Candidate detection therefore
uses the ratio ``rho = sigma_min / min_j sigma_min(G(lam_j))``, which stays
near one away from singular times and collapses at them.

Finite sections here are rectangular: columns carry powers ``0..N`` of the
input, rows carry powers ``0..2N`` of the output. The square section
``[G_{i-j}]_{i,j=0..N}`` is also exposed (:meth:`ToeplitzTruncation.square`)
but it has extra exact zeros of its own at ``-t`` for every singular time
``t``, which the taller section does not share.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, ndimage, optimize
from scipy.sparse import linalg as sparse_linalg

from .errors import AliasRisk, NoConvergence, NotSingular
from .laxcore import build_L0
from .singlattice import W, LatticePoint

__all__ = [
    "expm_batch",
    "SymbolSamples",
    "ToeplitzTruncation",
    "ScanResult",
    "default_grid_size",
    "symbol_exp_tL0",
    "assemble_truncation",
    "sigma_min",
    "sigma_min_at",
    "rho_at",
    "symbol_floor",
    "scan",
    "refine_singularity",
    "kernel_vector",
    "winding_number",
]

ALIAS_TOL = 1e-10
THRESHOLD = 1e-3

# Pade(13) numerator coefficients and the 1-norm bound below which it is
# accurate to unit roundoff without further scaling
_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm_batch(A):
    """Matrix exponential of a stack of square matrices.

    Scaling and squaring around a degree-13 Pade approximant, with the
    scaling exponent chosen per matrix from its 1-norm.
    """
    A = np.asarray(A, dtype=complex)
    shape = A.shape
    n = shape[-1]
    A = A.reshape((-1, n, n)).copy()
    norms = np.abs(A).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norms / _THETA13))
    s = np.where(np.isfinite(s) & (s > 0), s, 0).astype(int)
    A /= (2.0 ** s)[:, None, None]
    b = _B13
    ident = np.eye(n, dtype=complex)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    X = np.linalg.solve(V - U, V + U)
    for i in range(int(s.max(initial=0))):
        mask = s > i
        X[mask] = X[mask] @ X[mask]
    X[norms == 0] = ident  # exp(0) = I exactly, not up to the Pade solve's rounding
    return X.reshape(shape)


def default_grid_size(N):
    """Smallest power of two, at least 64, holding eight samples per retained power."""
    return max(64, 1 << max(0, math.ceil(math.log2(8 * max(N, 1)))))


@dataclass
class SymbolSamples:
    """Values of G on ``grid_size`` equispaced points of the unit circle."""

    t: complex
    grid_size: int
    values: np.ndarray
    config: object = None

    @property
    def lam(self):
        return np.exp(2j * np.pi * np.arange(self.grid_size) / self.grid_size)

    def resample(self, grid_size):
        if grid_size == self.grid_size:
            return self
        if self.config is None:
            raise ValueError("resampling needs the originating config")
        return symbol_exp_tL0(self.config, self.t, grid_size)


@dataclass
class ToeplitzTruncation:
    """Rectangular block Toeplitz section ``[G_{i-j}]``, ``i = 0..2N``, ``j = 0..N``.

    ``blocks[k + 2N]`` holds the Fourier coefficient of ``lam^k`` for
    ``|k| <= 2N``; ``tail`` is the relative Frobenius mass of the coefficients
    beyond that range.
    """

    N: int
    blocks: np.ndarray
    matrix: np.ndarray
    tail: float

    def block(self, k):
        return self.blocks[k + 2 * self.N]

    def square(self):
        """The square section with ``i, j = 0..N``."""
        n = self.blocks.shape[-1]
        return self.matrix[: n * (self.N + 1)]


def _check_grid(grid_size):
    if grid_size < 64 or grid_size & (grid_size - 1):
        raise ValueError("grid_size must be a power of two >= 64")


def _symbols(config, ts, grid_size):
    """G(lam_j) for every t in ``ts``; shape ``(len(ts), grid_size, n, n)``."""
    lam = np.exp(2j * np.pi * np.arange(grid_size) / grid_size)
    L = build_L0(config)(lam)
    ts = np.asarray(ts, dtype=complex).reshape(-1)
    return expm_batch(ts[:, None, None, None] * L[None])


def symbol_exp_tL0(config, t, grid_size=128):
    _check_grid(grid_size)
    return SymbolSamples(complex(t), grid_size, _symbols(config, [t], grid_size)[0], config)


def _coefficients(values):
    """Fourier coefficients along the sample axis (index k mod grid_size)."""
    return np.fft.fft(values, axis=-3) / values.shape[-3]


def _tail_mass(coef, N):
    M = coef.shape[-3]
    k = np.fft.fftfreq(M, 1.0 / M)
    energy = np.sum(np.abs(coef) ** 2, axis=(-1, -2))
    total = np.sum(energy, axis=-1)
    tail = np.sum(energy[..., np.abs(k) > 2 * N], axis=-1)
    return np.sqrt(tail / total)


def _sections(coef, N):
    """Tall block Toeplitz matrices from Fourier coefficients (batched)."""
    n = coef.shape[-1]
    i = np.arange(2 * N + 1)[:, None]
    j = np.arange(N + 1)[None, :]
    blocks = coef[..., (i - j) % coef.shape[-3], :, :]  # (..., 2N+1, N+1, n, n)
    blocks = np.moveaxis(blocks, -2, -3)  # (..., 2N+1, n, N+1, n)
    lead = blocks.shape[:-4]
    return blocks.reshape(lead + ((2 * N + 1) * n, (N + 1) * n))


def assemble_truncation(samples, N):
    M = samples.grid_size
    if 4 * N >= M:
        raise AliasRisk(f"grid of {M} samples cannot resolve |k| <= 2N = {2 * N}")
    coef = _coefficients(samples.values)
    tail = float(_tail_mass(coef, N))
    if tail > ALIAS_TOL:
        raise AliasRisk(f"Fourier tail beyond |k| = {2 * N} is {tail:.3g} at t = {samples.t}")
    ks = np.arange(-2 * N, 2 * N + 1)
    return ToeplitzTruncation(N, coef[ks % M], _sections(coef, N), tail)


def _sigma_iterative(T, tol=1e-12):
    """Smallest singular pair via QR and Lanczos on ``(R^H R)^-1``.

    The singular values of a section cluster near the bottom of the symbol's
    range, which stalls plain inverse iteration; Lanczos copes with the
    cluster. The Gram residual ``||T^H T v - sigma^2 v||`` is checked against
    ``tol`` relative to ``max(1, max|R_ij|)^2``; it stays meaningful when sigma
    itself is at rounding level.
    """
    R = linalg.qr(T, mode="r")[0][: T.shape[1]]
    n = R.shape[1]

    def apply_inverse(v):
        return linalg.solve_triangular(R, linalg.solve_triangular(R, v, trans="C"))

    op = sparse_linalg.LinearOperator((n, n), matvec=apply_inverse, dtype=complex)
    v0 = np.random.default_rng(0).standard_normal(n) + 0j
    vals, vecs = sparse_linalg.eigsh(op, k=1, which="LA", ncv=min(n, 48), tol=0.0, v0=v0, maxiter=10 * n)
    v = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    Tv = T @ v
    sig = float(np.linalg.norm(Tv))
    resid = float(np.linalg.norm(T.conj().T @ Tv - sig * sig * v))
    scale = max(1.0, float(np.abs(R).max())) ** 2
    if resid > tol * scale:
        raise NoConvergence(f"smallest singular pair Gram residual {resid:.3g} above {tol * scale:.3g}")
    return sig


def sigma_min(T):
    M = T.matrix if isinstance(T, ToeplitzTruncation) else np.asarray(T)
    N = T.N if isinstance(T, ToeplitzTruncation) else M.shape[1] // 2 - 1
    if N <= 64:
        return float(linalg.svdvals(M)[-1])
    return _sigma_iterative(M)


def sigma_min_at(config, t, N, grid_size=None):
    """sigma_min of the section at a single ``t`` (no alias check)."""
    grid_size = grid_size or default_grid_size(N)
    coef = _coefficients(_symbols(config, [t], grid_size)[0])
    return sigma_min(ToeplitzTruncation(N, None, _sections(coef, N), 0.0))


def symbol_floor(values):
    """``min_j sigma_min(G(lam_j))`` over the sample axis of 2x2 samples.

    Uses ``s_min^2 = (F - sqrt(F^2 - 4|det|^2)) / 2`` with ``F`` the squared
    Frobenius norm, written as ``2|det|^2 / (F + sqrt(...))`` for stability.
    """
    F = np.sum(np.abs(values) ** 2, axis=(-1, -2))
    det = np.abs(values[..., 0, 0] * values[..., 1, 1] - values[..., 0, 1] * values[..., 1, 0])
    smin2 = 2 * det ** 2 / (F + np.sqrt(np.maximum(F * F - 4 * det ** 2, 0)))
    return np.sqrt(smin2).min(axis=-1)


def rho_at(config, t, N, grid_size=None):
    """Pair ``(rho, sigma_min)`` at a single ``t``."""
    grid_size = grid_size or default_grid_size(N)
    values = _symbols(config, [t], grid_size)[0]
    coef = _coefficients(values)
    sig = float(linalg.svdvals(_sections(coef, N))[-1])
    return sig / float(symbol_floor(values)), sig


def _row_sigmas(config, ts, N, grid_size):
    values = _symbols(config, ts, grid_size)
    coef = _coefficients(values)
    tails = _tail_mass(coef, N)
    sig = np.linalg.svd(_sections(coef, N), compute_uv=False)[:, -1]
    return sig, sig / symbol_floor(values), tails


def _threads():
    try:
        return max(1, int(os.environ.get("LAXLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class ScanResult:
    re: np.ndarray
    im: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    candidates: list
    N: int
    threshold: float
    window: object
    max_tail: float
    lipschitz: float
    minima: list = field(default_factory=list)

    @property
    def t(self):
        return self.re[None, :] + 1j * self.im[:, None]


def _polish(config, t0, N, grid_size, step, xatol, maxiter=400):
    """Nelder-Mead on rho; returns ``(t, rho, sigma_min, converged)``."""
    f = lambda p: rho_at(config, complex(p[0], p[1]), N, grid_size)[0]
    x0 = np.array([t0.real, t0.imag])
    simplex = np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])
    res = optimize.minimize(
        f, x0, method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": xatol, "fatol": np.inf, "maxiter": maxiter},
    )
    t = complex(res.x[0], res.x[1])
    rho, sig = rho_at(config, t, N, grid_size)
    return t, rho, sig, bool(res.success)


def scan(config, window=W, resolution=64, N=32, threshold=THRESHOLD, grid_size=None):
    """sigma_min over a ``resolution x resolution`` grid covering ``window``.

    Every local minimum of ``rho`` on the grid is polished by Nelder-Mead on
    a section of order ``min(N, 16)`` and re-evaluated at ``N``; the points that stay inside the window with
    ``rho < threshold`` become candidates.
    """
    if resolution < 16:
        raise ValueError("resolution must be at least 16 per axis")
    grid_size = grid_size or default_grid_size(N)
    _check_grid(grid_size)
    if 4 * N >= grid_size:
        raise AliasRisk(f"grid of {grid_size} samples cannot resolve |k| <= {2 * N}")
    re = np.linspace(window.re_min, window.re_max, resolution)
    im = np.linspace(window.im_min, window.im_max, resolution)
    rows = [re + 1j * y for y in im]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda ts: _row_sigmas(config, ts, N, grid_size), rows))
    sigma = np.array([r[0] for r in results])
    rho = np.array([r[1] for r in results])
    max_tail = float(max(r[2].max() for r in results))
    if max_tail > ALIAS_TOL:
        raise AliasRisk(f"Fourier tail {max_tail:.3g} exceeds {ALIAS_TOL:g} inside the window")
    h = min(re[1] - re[0], im[1] - im[0])
    jumps = max(np.abs(np.diff(sigma, axis=0)).max(), np.abs(np.diff(sigma, axis=1)).max())
    lipschitz = float(jumps / h)

    is_min = rho == ndimage.minimum_filter(rho, size=3, mode="nearest")
    minima = [complex(re[j], im[i]) for i, j in zip(*np.nonzero(is_min))]
    candidates = []
    # locate on a cheap section with a loose cut (far from the origin the
    # order-16 section may not resolve the dip yet), then decide at order N
    Np = min(N, 16)
    for t0 in minima:
        t, r = _polish(config, t0, Np, default_grid_size(Np), step=0.5 * h, xatol=1e-5)[:2]
        if r >= 100 * threshold:
            continue
        if Np != N:
            t, r, s, _ = _polish(config, t, N, grid_size, step=1e-3, xatol=1e-10)
        else:
            s = rho_at(config, t, N, grid_size)[1]
        if r < threshold and window.contains(t, pad=1e-9) and all(
            abs(t - c.t) > 1e-6 for c in candidates
        ):
            candidates.append(LatticePoint(t, 0, 0, "toeplitz", s))
    candidates.sort(key=lambda p: (p.t.real, p.t.imag))
    return ScanResult(re, im, sigma, rho, candidates, N, threshold, window, max_tail, lipschitz, minima)


def refine_singularity(config, t_guess, N_schedule=(16, 32, 64), move_tol=1e-6,
                       step=0.05, threshold=THRESHOLD):
    """Locate a zero of sigma_min(t) near ``t_guess`` by Nelder-Mead on rho.

    The search is repeated for each ``N`` in ``N_schedule``, starting from the
    previous minimizer, until two successive minimizers differ by less than
    ``move_tol``. A one-element schedule is accepted when its search
    converges. Raises :class:`NoConvergence` when the schedule is exhausted
    or the final rho does not drop below ``threshold``.
    """
    t = complex(t_guess)
    prev = None
    history = []
    for level, N in enumerate(N_schedule):
        grid_size = default_grid_size(N)
        t, r, s, ok = _polish(config, t, N, grid_size, step if level == 0 else 1e-4, xatol=1e-10)
        history.append((N, t, r))
        if prev is not None and abs(t - prev) < move_tol:
            break
        prev = t
    else:
        if len(N_schedule) != 1 or not ok:
            raise NoConvergence(f"minimizer still moving after N = {N_schedule[-1]}: {history}")
    if r >= threshold:
        raise NoConvergence(f"rho = {r:.3g} at t = {t} is above {threshold:g}")
    return LatticePoint(t, 0, 0, "toeplitz", s)


def kernel_vector(T, samples, threshold=THRESHOLD):
    """Approximate kernel element of the Toeplitz operator.

    The right singular vector of the smallest singular value is read as the
    coefficients ``phi_0..phi_N`` of ``Phi+(lam) = sum_j phi_j lam^j``
    (unit l2 norm). ``rh_residual`` is the largest pointwise norm on the
    circle of the non-negative-power part of ``G Phi+``.
    """
    _, s, vh = linalg.svd(T.matrix, full_matrices=False)
    if s[-1] >= threshold:
        raise NotSingular(f"sigma_min = {s[-1]:.3g} is not below {threshold:g}")
    n = T.blocks.shape[-1]
    phi = vh[-1].conj().reshape(T.N + 1, n)
    M = max(samples.grid_size, 1 << math.ceil(math.log2(8 * (T.N + 1))))
    samples = samples.resample(M)
    padded = np.zeros((M, n), dtype=complex)
    padded[: T.N + 1] = phi
    Phi = np.fft.ifft(padded, axis=0) * M  # Phi+(lam_j)
    GPhi = np.einsum("jab,jb->ja", samples.values, Phi)
    coef = np.fft.fft(GPhi, axis=0) / M
    k = np.fft.fftfreq(M, 1.0 / M)
    coef[k < 0] = 0
    plus = np.fft.ifft(coef, axis=0) * M
    resid = float(np.max(np.linalg.norm(plus, axis=1)) / np.linalg.norm(phi))
    return {"phi_plus": phi, "rh_residual": resid, "sigma_min": float(s[-1])}


def winding_number(samples):
    """Winding number of det G around the origin along the sample circle."""
    d = np.linalg.det(samples.values)
    ang = np.angle(np.append(d, d[0]))
    return int(round(np.sum(np.angle(np.exp(1j * np.diff(ang)))) / (2 * np.pi)))
