"""Small dense linear-algebra helpers and reproducible randomness.

Every random draw in the package goes through :func:`make_rng`, which wraps
numpy's Philox generator.  Philox is counter based, so a 64-bit seed plus a
tuple of integer keys (cell index, trial index, ...) fully determines the
stream.  Keys are mixed into the seed with :class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-12


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``seed`` with integer ``keys`` into a new 64-bit seed."""
    # SeedSequence drops trailing zero words, so the key count is mixed in to
    # keep (seed, k) and (seed, k, 0) apart
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, len(keys), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Philox-backed generator; identical ``(seed, *keys)`` give identical streams."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *keys)))


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted in descending order."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float).ravel())[::-1]
        if ev.size == 0:
            raise ValueError("empty spectrum")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def kappa(self) -> float:
        if self.lambda_min <= 0:
            return np.inf
        return self.lambda_max / self.lambda_min

    def __len__(self):
        return self.eigenvalues.size


def as_eigenvalues(spectrum) -> np.ndarray:
    """Accept a :class:`Spectrum`, a scalar or an array of eigenvalues."""
    if isinstance(spectrum, Spectrum):
        return spectrum.eigenvalues
    return np.atleast_1d(np.asarray(spectrum, dtype=float))


def log_uniform_spectrum(p: int, kappa: float) -> np.ndarray:
    """``p`` values spaced log-uniformly from ``kappa`` down to 1."""
    if kappa < 1:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    if p == 1:
        return np.ones(1)
    return np.asarray(kappa, dtype=float) ** np.linspace(1.0, 0.0, p)


def random_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    if p < 1:
        raise ValueError("dimension must be positive")
    g = rng.standard_normal((p, p))
    q, r = np.linalg.qr(g)
    # sign fix makes the distribution Haar and the result unique given g
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def is_symmetric(m: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.T), initial=0.0) <= tol)


def sym_eigenvalues(m) -> Spectrum:
    """Eigenvalues of a symmetric matrix (LAPACK ``syevd`` via numpy)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"expected a nonempty square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if not is_symmetric(m, SYMMETRY_TOL * scale):
        raise ValueError("matrix is not symmetric")
    return Spectrum(np.linalg.eigvalsh(m))


def eig2x2(m):
    """Eigenvalues of 2x2 matrices from the characteristic polynomial.

    ``m`` has shape ``(..., 2, 2)``.  Returns complex arrays ``(s1, s2)`` with
    ``|s1| >= |s2|``; plain complex scalars for a single matrix.
    """
    m = np.asarray(m)
    if m.shape[-2:] != (2, 2):
        raise ValueError(f"expected trailing shape (2, 2), got {m.shape}")
    a, b = m[..., 0, 0], m[..., 0, 1]
    c, d = m[..., 1, 0], m[..., 1, 1]
    half_tr = (a + d) / 2
    det = a * d - b * c
    root = np.sqrt(np.asarray(half_tr * half_tr - det, dtype=complex))
    s1 = half_tr + root
    s2 = half_tr - root
    swap = np.abs(s2) > np.abs(s1)
    s1, s2 = np.where(swap, s2, s1), np.where(swap, s1, s2)
    if s1.ndim == 0:
        return complex(s1), complex(s2)
    return s1, s2


def spectral_radius_2x2(m):
    """max |eigenvalue| of one or many 2x2 matrices."""
    s1, _ = eig2x2(m)
    return np.abs(s1) if np.ndim(s1) else abs(s1)
