"""Angular-momentum operators and multi-spin Hilbert-space tools.

Operators are dimensionless (J/hbar) and expressed in the Jz eigenbasis
ordered m = +j ... -j.  Multi-spin operators live in the tensor-product
space whose site ordering is fixed by a `HilbertLayout`; site 0 is the
muon by convention everywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_SPIN = 4.5  # larger spins are out of scope


def _check_half_integer(j: float) -> int:
    twoj = round(2 * j)
    if abs(2 * j - twoj) > 1e-12 or twoj < 0:
        raise ValueError(f"spin must be a non-negative half-integer, got {j}")
    if j > MAX_SPIN:
        raise ValueError(f"spin {j} exceeds supported maximum {MAX_SPIN}")
    return int(twoj)


@dataclass(frozen=True)
class SpinOperators:
    """The (jx, jy, jz) matrix triple for a single spin j."""

    j: float
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray

    @property
    def dim(self) -> int:
        return self.jz.shape[0]

    def vector(self) -> np.ndarray:
        """Stack (jx, jy, jz) into a (3, d, d) array."""
        return np.stack([self.jx, self.jy, self.jz])

    def along(self, axis: Sequence[float]) -> np.ndarray:
        """J . n for a 3-vector n (not necessarily normalized)."""
        n = np.asarray(axis, dtype=float)
        return n[0] * self.jx + n[1] * self.jy + n[2] * self.jz


def angular_momentum(j: float) -> SpinOperators:
    """Matrix representations of Jx, Jy, Jz for spin j.

    Basis ordering is m = +j ... -j, so jz = diag(j, j-1, ..., -j).
    """
    twoj = _check_half_integer(j)
    d = twoj + 1
    m = j - np.arange(d)
    jz = np.diag(m).astype(complex)
    # <m+1|J+|m> = sqrt(j(j+1) - m(m+1)); with descending m the raising
    # operator populates the superdiagonal.
    raise_elems = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jplus = np.zeros((d, d), dtype=complex)
    jplus[np.arange(d - 1), np.arange(1, d)] = raise_elems
    jminus = jplus.conj().T
    jx = (jplus + jminus) / 2
    jy = (jplus - jminus) / 2j
    return SpinOperators(j=j, jx=jx, jy=jy, jz=jz)


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered subsystem dimensions of a tensor-product space."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValueError(f"invalid subsystem dimensions {self.dims}")

    @classmethod
    def from_spins(cls, spins: Iterable[float]) -> "HilbertLayout":
        return cls(tuple(_check_half_integer(j) + 1 for j in spins))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def spin(self, site: int) -> float:
        return (self.dims[site] - 1) / 2.0

    def dim_without(self, *sites: int) -> int:
        return int(np.prod([d for k, d in enumerate(self.dims) if k not in sites], initial=1))


def embed(op: np.ndarray, site: int, layout: HilbertLayout) -> np.ndarray:
    """I x ... x op x ... x I with `op` acting on `site`."""
    op = np.asarray(op)
    if not (0 <= site < layout.n_sites):
        raise ValueError(f"site {site} out of range for {layout.n_sites} sites")
    d = layout.dims[site]
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match site dimension {d}")
    before = int(np.prod(layout.dims[:site], initial=1))
    after = int(np.prod(layout.dims[site + 1:], initial=1))
    out = np.kron(np.kron(np.eye(before, dtype=op.dtype), op), np.eye(after, dtype=op.dtype))
    return out


def embed_two_site(op: np.ndarray, site_i: int, site_j: int, layout: HilbertLayout) -> np.ndarray:
    """Embed a two-site operator given on the (site_i x site_j) product space.

    `op` must be (d_i*d_j, d_i*d_j) with site_i as the slower index.  This is
    much cheaper than summing single-site embeddings term by term.
    """
    if site_i == site_j:
        raise ValueError("sites must be distinct")
    dims = layout.dims
    di, dj = dims[site_i], dims[site_j]
    op = np.asarray(op)
    if op.shape != (di * dj, di * dj):
        raise ValueError(f"operator shape {op.shape} does not match sites ({di}x{dj})")
    rest = [d for k, d in enumerate(dims) if k not in (site_i, site_j)]
    drest = int(np.prod(rest, initial=1))
    full = np.kron(op, np.eye(drest, dtype=op.dtype))
    # Current axis order is (i, j, rest...) for both row and column indices;
    # permute back to the layout order.
    order = [site_i, site_j] + [k for k in range(len(dims)) if k not in (site_i, site_j)]
    inv = np.argsort(order)
    shape = [di, dj] + rest
    full = full.reshape(shape + shape)
    perm = list(inv) + [len(dims) + int(p) for p in inv]
    return np.ascontiguousarray(full.transpose(perm).reshape(layout.size, layout.size))


def embed_factors(ops: Mapping[int, np.ndarray], layout: HilbertLayout) -> np.ndarray:
    """Kronecker chain with per-site overrides (identity elsewhere)."""
    out = np.array([[1.0 + 0.0j]])
    for site, d in enumerate(layout.dims):
        factor = ops.get(site)
        if factor is None:
            factor = np.eye(d, dtype=complex)
        elif np.shape(factor) != (d, d):
            raise ValueError(f"operator at site {site} has shape {np.shape(factor)}, expected ({d},{d})")
        out = np.kron(out, factor)
    return out


@lru_cache(maxsize=64)
def site_spin_operators(dims: tuple[int, ...]) -> tuple[SpinOperators, ...]:
    """SpinOperators for every site of a layout (cached)."""
    return tuple(angular_momentum((d - 1) / 2.0) for d in dims)


def partial_trace(rho: np.ndarray, keep: Sequence[int], layout: HilbertLayout) -> np.ndarray:
    """Trace out every site not in `keep`, preserving the order of `keep`."""
    keep = list(keep)
    dims = layout.dims
    n = len(dims)
    rho = np.asarray(rho).reshape(dims + dims)
    # einsum indices: row axes 0..n-1, column axes n..2n-1; traced sites share a label.
    row = list(range(n))
    col = [i + n if i in keep else i for i in range(n)]
    out_axes = [i for i in keep] + [i + n for i in keep]
    traced = np.einsum(rho, row + col, out_axes)
    dkeep = int(np.prod([dims[i] for i in keep], initial=1))
    return traced.reshape(dkeep, dkeep)


def purity(rho: np.ndarray) -> float:
    """Tr[rho^2], real part."""
    return float(np.einsum("ij,ji->", rho, rho).real)


def is_hermitian(a: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol * max(1.0, float(np.max(np.abs(a)))))
