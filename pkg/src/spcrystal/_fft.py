"""Grid transforms in the asymmetric convention f(x) = sum_k c(k) exp(-i k.x).

With grid nodes at fractional positions j/n, the coefficients are
``ifftn(samples)`` and the samples are ``fftn(coeffs)``. Everything goes
through :mod:`scipy.fft` so the worker count can be capped globally with
``scipy.fft.set_workers``.
"""

import numpy as np
import scipy.fft as sfft


def to_coeffs(samples):
    return sfft.ifftn(samples)


def to_samples(coeffs):
    return sfft.fftn(coeffs)


def centered_indices(n):
    """Integer mode indices of an axis of length n, in FFT storage order."""
    return np.rint(np.fft.fftfreq(n) * n).astype(int)


def _slots(small, big):
    return [np.mod(centered_indices(n), N) for n, N in zip(small, big)]


def pad(coeffs, big):
    """Embed coefficients of a small grid into a larger grid (zero fill)."""
    out = np.zeros(tuple(big), dtype=complex)
    out[np.ix_(*_slots(coeffs.shape, big))] = coeffs
    return out


def truncate(coeffs, small):
    """Galerkin projection of big-grid coefficients onto the modes of ``small``."""
    return coeffs[np.ix_(*_slots(small, coeffs.shape))].copy()
