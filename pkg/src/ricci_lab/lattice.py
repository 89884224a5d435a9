"""Deck lattices of flat tori: reduction, closest-vector search, enumeration."""

from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np

from .errors import EnumerationBudgetExceeded, InvalidInput


def lll_reduce(basis: np.ndarray, delta: float = 0.75) -> np.ndarray:
    """Textbook LLL on the rows of ``basis`` (small dimensions only)."""
    b = np.array(basis, dtype=float)
    n = b.shape[0]

    def gram_schmidt(b):
        bstar = np.zeros_like(b)
        mu = np.zeros((n, n))
        for i in range(n):
            bstar[i] = b[i]
            for j in range(i):
                mu[i, j] = b[i] @ bstar[j] / (bstar[j] @ bstar[j])
                bstar[i] -= mu[i, j] * bstar[j]
        return bstar, mu

    bstar, mu = gram_schmidt(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                b[k] -= q * b[j]
                bstar, mu = gram_schmidt(b)
        if bstar[k] @ bstar[k] >= (delta - mu[k, k - 1] ** 2) * (bstar[k - 1] @ bstar[k - 1]):
            k += 1
        else:
            b[[k, k - 1]] = b[[k - 1, k]]
            bstar, mu = gram_schmidt(b)
            k = max(k - 1, 1)
    return b


class DeckLattice:
    """Lattice spanned by the rows of ``basis``.

    Homotopy classes of loops on the flat torus R^n / L correspond to integer
    coefficient vectors ``k``; the class is represented by ``k @ basis``.
    """

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise InvalidInput(f"lattice basis must be square, got shape {basis.shape}")
        if abs(np.linalg.det(basis)) < 1e-12:
            raise InvalidInput("lattice basis is not of full rank")
        self.basis = basis
        self.basis.setflags(write=False)

    def __repr__(self):
        return f"DeckLattice({self.basis.tolist()})"

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @cached_property
    def gram(self) -> np.ndarray:
        return self.basis @ self.basis.T

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    @cached_property
    def reduced_basis(self) -> np.ndarray:
        return lll_reduce(self.basis)

    @cached_property
    def voronoi_relevant(self) -> np.ndarray:
        """Voronoi-relevant vectors, found among small combinations of the reduced basis.

        ``v`` is relevant iff +-v are the only shortest vectors of the coset v + 2L.
        """
        rb = self.reduced_basis
        n = self.dim
        coeffs = np.array([k for k in itertools.product(range(-2, 3), repeat=n) if any(k)])
        vecs = coeffs @ rb
        norms = np.einsum("ij,ij->i", vecs, vecs)
        parity = [tuple(np.mod(k, 2)) for k in coeffs]
        best: dict[tuple, float] = {}
        for par, nrm in zip(parity, norms):
            best[par] = min(best.get(par, np.inf), nrm)
        relevant = []
        for par in best:
            members = [i for i, p in enumerate(parity) if p == par and norms[i] <= best[par] * (1 + 1e-9)]
            if len(members) == 2:
                relevant.extend(vecs[i] for i in members)
        return np.array(relevant)

    def reduce(self, d: np.ndarray) -> np.ndarray:
        """Shortest representative of ``d`` modulo the lattice (closest-vector residual)."""
        d = np.asarray(d, dtype=float)
        r = d - np.round(d @ self.inverse) @ self.basis
        vr = self.voronoi_relevant
        flat = r.reshape(-1, self.dim)
        for _ in range(64):
            cand = flat[:, None, :] - vr[None, :, :]
            cn = np.einsum("...i,...i->...", cand, cand)
            cur = np.einsum("...i,...i->...", flat, flat)
            j = np.argmin(cn, axis=1)
            better = cn[np.arange(len(flat)), j] < cur - 1e-15 * np.maximum(cur, 1.0)
            if not better.any():
                break
            flat = flat.copy()
            flat[better] -= vr[j[better]]
        return flat.reshape(r.shape)

    def norm_of(self, k) -> float:
        return float(np.linalg.norm(np.asarray(k, dtype=float) @ self.basis))

    def coefficient_bounds(self, center: np.ndarray, radius: float) -> list[range]:
        """Integer ranges containing every k with |center + k @ basis| <= radius."""
        c = np.asarray(center, dtype=float) @ self.inverse
        col = np.linalg.norm(self.inverse, axis=0)
        ranges = []
        for ci, w in zip(c, col):
            lo = int(np.floor(-ci - radius * w - 1e-9))
            hi = int(np.ceil(-ci + radius * w + 1e-9))
            ranges.append(range(lo, hi + 1))
        return ranges

    def translates_within(self, center, radius: float, budget: int = 2_000_000):
        """All (k, center + k @ basis) with norm <= radius, sorted by norm then k."""
        ranges = self.coefficient_bounds(center, radius)
        size = int(np.prod([len(r) for r in ranges]))
        if size > budget:
            raise EnumerationBudgetExceeded(f"{size} candidate coefficient vectors exceed budget {budget}")
        ks = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, self.dim)
        vecs = np.asarray(center, dtype=float) + ks @ self.basis
        norms = np.linalg.norm(vecs, axis=1)
        keep = norms <= radius * (1 + 1e-12) + 1e-12
        ks, vecs, norms = ks[keep], vecs[keep], norms[keep]
        order = np.lexsort(tuple(ks[:, i] for i in reversed(range(self.dim))) + (np.round(norms, 12),))
        return ks[order], vecs[order], norms[order]
