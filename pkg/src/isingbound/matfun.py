"""Scalar and matrix special functions used by the solvers.

Spectral functions are applied through the symmetric eigendecomposition;
their directional derivatives use the divided-difference (Daleckii-Krein)
kernel, with the derivative substituted on near-degenerate eigenvalue
pairs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.special

__all__ = [
    "wright_omega",
    "spectral_apply",
    "spectral_gradient",
    "entropy_integrand",
    "entropy_integrand_derivative",
]


def wright_omega(z):
    """The positive root w of ``w + log(w) = z`` for real z.

    Accepts scalars or arrays; relative accuracy is at machine level over
    the whole real line (evaluated through a dedicated routine rather than
    ``lambertw(exp(z))``, which overflows for large z).
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("wright_omega requires finite input")
    w = scipy.special.wrightomega(z)
    out = np.real(w)
    return float(out) if out.ndim == 0 else out


def entropy_integrand(t):
    """``t*log(t) - t + 1`` with the 0*log(0) = 0 convention; >= 0 on t >= 0."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t) - t
    pos = t > 0
    out[pos] += t[pos] * np.log(t[pos])
    return out


def entropy_integrand_derivative(t):
    """Derivative log(t) of the entropy integrand."""
    return np.log(t)


def _eigh_sym(a: np.ndarray):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-8 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    return np.linalg.eigh((a + a.T) / 2.0)


def spectral_apply(h: Callable[[np.ndarray], np.ndarray], a: np.ndarray) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its spectrum."""
    lam, u = _eigh_sym(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        hv = np.asarray(h(lam), dtype=float)
    if not np.all(np.isfinite(hv)):
        raise ValueError("scalar function undefined on part of the spectrum")
    out = (u * hv) @ u.T
    return (out + out.T) / 2.0


def spectral_gradient(h: Callable, h_prime: Callable, a: np.ndarray,
                      b: np.ndarray, degenerate_rtol: float = 1e-10) -> np.ndarray:
    """Gradient of ``A -> tr(B h(A))`` at a symmetric A.

    Built from the divided-difference kernel of h on the eigenvalues of A;
    pairs closer than ``degenerate_rtol * max(1, |lambda_i|)`` fall back to
    ``h'`` at their midpoint.  B is symmetrized (only its symmetric part
    contributes to the trace against a symmetric h(A)).
    """
    lam, u = _eigh_sym(a)
    b = np.asarray(b, dtype=float)
    if b.shape != a.shape:
        raise ValueError("B must match the shape of A")
    b = (b + b.T) / 2.0
    hv = np.asarray(h(lam), dtype=float)
    diff = lam[:, None] - lam[None, :]
    close = np.abs(diff) <= degenerate_rtol * np.maximum(1.0, np.abs(lam))[:, None]
    kernel = np.empty_like(diff)
    safe = ~close
    kernel[safe] = (hv[:, None] - hv[None, :])[safe] / diff[safe]
    mid = (lam[:, None] + lam[None, :]) / 2.0
    kernel[close] = np.asarray(h_prime(mid[close]), dtype=float)
    if not np.all(np.isfinite(kernel)):
        raise ValueError("divided differences undefined on the spectrum")
    c = u.T @ b @ u
    out = u @ (kernel * c) @ u.T
    return (out + out.T) / 2.0
