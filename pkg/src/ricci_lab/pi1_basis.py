"""Short generating sets of flat-torus fundamental groups (deck lattices)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EnumerationBudgetExceeded
from .lattice import DeckLattice

ENUMERATION_BUDGET = 2_000_000


class IntegerSublattice:
    """Subgroup of Z^n spanned by integer vectors, kept in row echelon (Hermite) form.

    Arithmetic is on Python integers, so membership is exact.
    """

    def __init__(self, n: int):
        self.n = n
        self.rows: list[list[int]] = []  # echelon rows, strictly increasing pivot columns

    @staticmethod
    def _pivot(row):
        return next((i for i, x in enumerate(row) if x), None)

    def _reduce(self, v: list[int]) -> list[int]:
        v = list(v)
        for row in self.rows:
            c = self._pivot(row)
            q = v[c] // row[c]
            if q:
                v = [a - q * b for a, b in zip(v, row)]
        return v

    def contains(self, v) -> bool:
        v = [int(x) for x in v]
        for row in self.rows:
            c = self._pivot(row)
            if v[c] % row[c]:
                return False
            q = v[c] // row[c]
            v = [a - q * b for a, b in zip(v, row)]
        return not any(v)

    def add(self, v) -> None:
        rows = self.rows + [[int(x) for x in v]]
        self.rows = self._hermite(rows, self.n)

    @staticmethod
    def _hermite(rows: list[list[int]], n: int) -> list[list[int]]:
        rows = [r for r in rows if any(r)]
        out: list[list[int]] = []
        col = 0
        while rows and col < n:
            with_col = [r for r in rows if r[col]]
            rest = [r for r in rows if not r[col]]
            if not with_col:
                col += 1
                continue
            # Euclid on column `col` until one row keeps a nonzero entry
            while len(with_col) > 1:
                with_col.sort(key=lambda r: abs(r[col]))
                piv = with_col[0]
                nxt = []
                for r in with_col[1:]:
                    q = r[col] // piv[col]
                    r = [a - q * b for a, b in zip(r, piv)]
                    (nxt if r[col] else rest).append(r)
                with_col = [piv] + nxt
                rest = [r for r in rest if any(r)]
            piv = with_col[0]
            if piv[col] < 0:
                piv = [-a for a in piv]
            out.append(piv)
            rows = rest
            col += 1
        # reduce entries above pivots so the form is canonical
        for i in range(len(out)):
            c = IntegerSublattice._pivot(out[i])
            for j in range(i):
                q = out[j][c] // out[i][c]
                if q:
                    out[j] = [a - q * b for a, b in zip(out[j], out[i])]
        return out

    @property
    def rank(self) -> int:
        return len(self.rows)

    @property
    def index(self) -> int | None:
        """[Z^n : sublattice] when of full rank, else None."""
        if self.rank < self.n:
            return None
        return abs(math.prod(r[self._pivot(r)] for r in self.rows))

    def is_everything(self) -> bool:
        return self.index == 1


def loop_length(L: DeckLattice, v) -> float:
    """Length of the shortest closed geodesic in the free homotopy class v."""
    return L.norm_of(v)


@dataclass
class ShortBasis:
    lattice: DeckLattice | None
    coefficients: list[tuple[int, ...]] = field(default_factory=list)
    vectors: list[np.ndarray] = field(default_factory=list)
    lengths: list[float] = field(default_factory=list)
    generates: bool = False
    stopped_by_cap: bool = False

    def rows(self) -> list[dict]:
        out = []
        for k, (c, length) in enumerate(zip(self.coefficients, self.lengths)):
            row = {"index": k + 1}
            row.update({f"k{i}": int(x) for i, x in enumerate(c)})
            row["length"] = length
            out.append(row)
        return out


def _canonical(k: np.ndarray) -> bool:
    nz = np.flatnonzero(k)
    return len(nz) > 0 and k[nz[0]] > 0


def short_basis(L: DeckLattice, length_cap: float | None = None, budget: int = ENUMERATION_BUDGET) -> ShortBasis:
    """Greedy short generating set: repeatedly take the shortest lattice vector outside the
    subgroup generated so far (ties broken lexicographically on integer coordinates).

    Stops once the chosen vectors generate the lattice, or before a vector of
    length >= ``length_cap`` would be chosen.
    """
    n = L.dim
    sub = IntegerSublattice(n)
    out = ShortBasis(L)
    radius = 2 * float(np.min(np.linalg.norm(L.basis, axis=1)))
    ks = norms = None
    enumerated = -1.0
    while not sub.is_everything():
        if enumerated < radius:
            ks, _, norms = L.translates_within(np.zeros(n), radius, budget=budget)
            canon = np.array([_canonical(k) for k in ks], dtype=bool)
            ks, norms = ks[canon], norms[canon]
            enumerated = radius
        pick = next((i for i, k in enumerate(ks) if not sub.contains(k)), None)
        if pick is None:
            radius *= 2
            continue
        if length_cap is not None and norms[pick] >= length_cap:
            out.stopped_by_cap = True
            break
        k = ks[pick]
        sub.add(k)
        out.coefficients.append(tuple(int(x) for x in k))
        out.vectors.append(k @ L.basis)
        out.lengths.append(float(norms[pick]))
    out.generates = sub.is_everything()
    return out


@dataclass
class BasisReport:
    passed: bool
    checks: dict
    first_violation: str | None = None
    witnesses: tuple = ()


def verify_basis_properties(b, r1: float | None = None, rtol: float = 1e-9) -> BasisReport:
    """Check nondecreasing lengths, |a_i - a_j| >= max(|a_i|, |a_j|), and |a_i| < 2 r1 if r1 is given."""
    vectors = [np.asarray(v, float) for v in (b.vectors if isinstance(b, ShortBasis) else b)]
    lengths = [float(np.linalg.norm(v)) for v in vectors]
    checks = {"sorted": True, "separated": True, "bounded": True}
    for i in range(len(vectors) - 1):
        if lengths[i + 1] < lengths[i] * (1 - rtol):
            checks["sorted"] = False
            return BasisReport(False, checks, "sorted", (i, i + 1, lengths[i], lengths[i + 1]))
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            gap = float(np.linalg.norm(vectors[i] - vectors[j]))
            need = max(lengths[i], lengths[j])
            if gap < need * (1 - rtol):
                checks["separated"] = False
                return BasisReport(False, checks, "separated", (i, j, gap, need))
    if r1 is not None:
        for i, length in enumerate(lengths):
            if not length < 2 * r1:
                checks["bounded"] = False
                return BasisReport(False, checks, "bounded", (i, length, 2 * r1))
    return BasisReport(True, checks)


__all__ = [
    "EnumerationBudgetExceeded",
    "IntegerSublattice",
    "ShortBasis",
    "BasisReport",
    "loop_length",
    "short_basis",
    "verify_basis_properties",
]
