"""Crystal lattice, its dual, the periodic cell and plane-wave grids.

Positions inside the cell are kept in fractional coordinates; a Cartesian
point is ``frac @ lattice.vectors``. Dual vectors are stored as rows of
``2*pi*inv(A).T`` so that ``B @ A.T == 2*pi*I``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _fft
from .errors import DegenerateLattice, InvalidInput

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Lattice:
    """Three periods a1, a2, a3 stored as the rows of ``vectors``."""

    vectors: np.ndarray
    volume: float = field(init=False)

    def __post_init__(self):
        A = np.array(self.vectors, dtype=float)
        if A.shape != (3, 3):
            raise InvalidInput(f"lattice needs a 3x3 period matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidInput("lattice vectors must be finite")
        det = np.linalg.det(A)
        scale = np.prod(np.linalg.norm(A, axis=1))
        if scale == 0.0 or abs(det) < DEGENERACY_TOL * scale:
            raise DegenerateLattice(
                f"period vectors are linearly dependent (|det|={abs(det):.3e})"
            )
        A.setflags(write=False)
        object.__setattr__(self, "vectors", A)
        object.__setattr__(self, "volume", float(abs(det)))

    @classmethod
    def cubic(cls, L=1.0):
        return cls(L * np.eye(3))

    @cached_property
    def dual(self):
        return dual_basis(self)

    @property
    def a1(self):
        return self.vectors[0]

    @property
    def a2(self):
        return self.vectors[1]

    @property
    def a3(self):
        return self.vectors[2]

    @property
    def scale(self):
        """Characteristic length |T^3|^(1/3)."""
        return self.volume ** (1.0 / 3.0)

    def to_cartesian(self, frac):
        return np.asarray(frac, dtype=float) @ self.vectors

    def to_fractional(self, x):
        # x = f A  =>  f = x A^{-1}
        return np.linalg.solve(self.vectors.T, np.asarray(x, dtype=float).T).T


@dataclass(frozen=True, eq=False)
class DualLattice:
    """Reciprocal periods b1, b2, b3 (rows of ``vectors``)."""

    vectors: np.ndarray
    lattice: Lattice

    @property
    def b1(self):
        return self.vectors[0]

    @property
    def b2(self):
        return self.vectors[1]

    @property
    def b3(self):
        return self.vectors[2]


def dual_basis(lat: Lattice) -> DualLattice:
    B = 2.0 * np.pi * np.linalg.inv(lat.vectors).T
    B.setflags(write=False)
    return DualLattice(B, lat)


@dataclass(frozen=True, eq=False)
class KGrid:
    """A box of dual-lattice vectors ``k = m1 b1 + m2 b2 + m3 b3``.

    ``dims`` gives the number of modes per axis; the integer index along an
    axis of length n runs over ``ceil(-n/2) .. ceil(n/2) - 1``. Two orders are
    exposed:

    * ``kvecs`` / ``indices``: flat lists in *centered* order, i.e. C order
      over the ascending centered ranges (the order used for dumps);
    * ``k`` / ``m`` / ``k2``: arrays of shape ``dims + (3,)`` in FFT storage
      order, matching the coefficient arrays produced by :mod:`numpy.fft`.

    The same grid doubles as the real-space sampling grid with nodes at
    fractional positions ``(i1/n1, i2/n2, i3/n3)``.
    """

    dual: DualLattice
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 2:
            raise InvalidInput(f"grid dims must be three integers >= 2, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def lattice(self):
        return self.dual.lattice

    @property
    def size(self):
        return int(np.prod(self.dims))

    @cached_property
    def m(self):
        axes = [_fft.centered_indices(n) for n in self.dims]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @cached_property
    def k(self):
        return self.m @ self.dual.vectors

    @cached_property
    def k2(self):
        return np.einsum("...i,...i->...", self.k, self.k)

    @cached_property
    def inv_k2(self):
        """1/k^2 with the zero mode set to 0 (the mean-zero gauge)."""
        out = np.zeros(self.dims)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def indices(self):
        axes = [np.arange(-(n // 2), n - n // 2) for n in self.dims]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    @cached_property
    def kvecs(self):
        return self.indices @ self.dual.vectors

    @cached_property
    def zero_index(self):
        return int(np.flatnonzero(~self.indices.any(axis=1))[0])

    @cached_property
    def nodes(self):
        """Fractional coordinates of the real-space nodes, shape dims + (3,)."""
        axes = [np.arange(n) / n for n in self.dims]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @property
    def cell_volume(self):
        return self.lattice.volume / self.size

    @cached_property
    def doubled(self):
        """The density grid: twice as many modes per axis, alias-free for |psi|^2."""
        return KGrid(self.dual, tuple(2 * n for n in self.dims))


def make_kgrid(dual: DualLattice, dims) -> KGrid:
    return KGrid(dual, tuple(dims))


def _snap_unit(f, tol=1e-12):
    f = f - np.floor(f)
    f[np.abs(f - 1.0) < tol] = 0.0
    f[np.abs(f) < tol] = 0.0
    return f


def wrap_fractional(frac):
    """Reduce fractional coordinates into [0, 1)."""
    return _snap_unit(np.array(frac, dtype=float))


def wrap_to_cell(lat: Lattice, x):
    """Fractional coordinates in [0,1)^3 of the Cartesian point ``x`` on the torus."""
    return wrap_fractional(lat.to_fractional(x))


def minimum_image(lat: Lattice, dfrac):
    """Shortest Cartesian representative of fractional displacement(s) ``dfrac``.

    Works for arbitrarily skewed bases: after centring, any shorter image
    ``r + n A`` needs ``|n_i| <= 2 |r| |b_i| / (2 pi)``, and that box is searched.
    """
    d = np.atleast_2d(np.asarray(dfrac, dtype=float))
    d = d - np.rint(d)
    r = d @ lat.vectors
    bnorm = np.linalg.norm(2.0 * np.pi * np.linalg.inv(lat.vectors).T, axis=1)
    rmax = np.linalg.norm(r, axis=1).max(initial=0.0)
    reach = np.ceil(2.0 * rmax * bnorm / (2.0 * np.pi)).astype(int)
    shifts = np.stack(
        np.meshgrid(*[np.arange(-n, n + 1) for n in reach], indexing="ij"), axis=-1
    ).reshape(-1, 3)
    cand = r[:, None, :] + (shifts @ lat.vectors)[None, :, :]
    best = np.argmin(np.einsum("pij,pij->pi", cand, cand), axis=1)
    out = cand[np.arange(len(r)), best]
    return out.reshape(np.shape(dfrac)) if np.ndim(dfrac) > 1 else out[0]


def torus_distance(lat: Lattice, x, y):
    """Distance on T^3 between Cartesian points ``x`` and ``y``."""
    dfrac = lat.to_fractional(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return float(np.linalg.norm(minimum_image(lat, dfrac)))


def min_pair_distance(lat: Lattice, frac_positions):
    """d(x) = min over pairs j != k of the torus distance; inf for a single ion."""
    f = np.asarray(frac_positions, dtype=float)
    n = len(f)
    if n < 2:
        return np.inf
    j, k = np.triu_indices(n, 1)
    r = minimum_image(lat, f[j] - f[k])
    return float(np.linalg.norm(np.atleast_2d(r), axis=1).min())
