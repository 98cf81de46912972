"""Finite compositional task spaces.

A task lives on a finite data space ``{0, .., data_space_size-1}`` carved into
cells indexed by two factors ``(a, b)``.  Each cell holds an ordered support of
``k`` elements; a distinguished base cell carries a distribution over its
support, and every other cell is tied to the base by a weight-preserving
bijection (the cell map).  Splits partition the cell grid into a support set S
and an unknown set U; error functionals are plain expectations of nonnegative
functions under cell distributions, cell mixtures, or samples.

Probabilities constructed from counts are exact ``fractions.Fraction`` values;
anything built from floats stays float.  Operations preserve exactness, which
downstream consumers (the no-free-lunch harness in particular) rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import ValidationError, ZeroMassCell
from .seeding import derive_rng

Number = Union[Fraction, float]
Cell = tuple[int, int]

#: absolute tolerance for float-mode validity checks; all quantities here are
#: O(1) sums of at most a few thousand terms
FLOAT_TOL = 1e-12


def _coerce_weight(x) -> Number:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return x
    raise ValidationError(f"weight must be Fraction, int or float, got {type(x).__name__}")


def all_exact(weights: Iterable[Number]) -> bool:
    return all(isinstance(w, Fraction) for w in weights)


@dataclass(frozen=True)
class FiniteDistribution:
    """Probability vector over an implicit index set ``0..n-1``.

    Weights are nonnegative and sum to one: exactly when every weight is a
    Fraction, within ``FLOAT_TOL`` otherwise.
    """

    weights: tuple[Number, ...]

    def __post_init__(self):
        ws = tuple(_coerce_weight(w) for w in self.weights)
        object.__setattr__(self, "weights", ws)
        if not ws:
            raise ValidationError("distribution needs at least one weight")
        for w in ws:
            if w < 0:
                raise ValidationError(f"negative weight {w}")
        total = sum(ws)
        if all_exact(ws):
            if total != 1:
                raise ValidationError(f"weights sum to {total}, expected exactly 1")
        elif abs(float(total) - 1.0) > FLOAT_TOL:
            raise ValidationError(f"weights sum to {float(total)}, expected 1 +/- {FLOAT_TOL}")

    @classmethod
    def uniform(cls, n: int) -> "FiniteDistribution":
        if n < 1:
            raise ValidationError("uniform distribution needs n >= 1")
        return cls(tuple(Fraction(1, n) for _ in range(n)))

    @classmethod
    def point_mass(cls, index: int, n: int) -> "FiniteDistribution":
        if not 0 <= index < n:
            raise ValidationError(f"point mass index {index} out of range for size {n}")
        return cls(tuple(Fraction(1) if i == index else Fraction(0) for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def exact(self) -> bool:
        return all_exact(self.weights)

    def as_floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights], dtype=float)

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, w in enumerate(self.weights) if w > 0)


@dataclass(frozen=True)
class Split:
    """Partition of the cell grid into support cells S and unknown cells U."""

    support: frozenset[Cell]
    unknown: frozenset[Cell]

    def __post_init__(self):
        if not self.support:
            raise ValidationError("support set must be nonempty")
        if self.support & self.unknown:
            raise ValidationError("support and unknown sets overlap")

    @property
    def support_sorted(self) -> tuple[Cell, ...]:
        return tuple(sorted(self.support))

    @property
    def unknown_sorted(self) -> tuple[Cell, ...]:
        return tuple(sorted(self.unknown))


def make_split(factor_sizes: tuple[int, int], base_cell: Cell,
               support_cells: Iterable[Cell]) -> Split:
    """Build a split over the full grid, requiring the base cell in S."""
    na, nb = factor_sizes
    grid = {(a, b) for a in range(na) for b in range(nb)}
    support = frozenset(tuple(c) for c in support_cells)
    if not support <= grid:
        raise ValidationError(f"support cells {sorted(support - grid)} outside the grid")
    if base_cell not in support:
        raise ValidationError(f"base cell {base_cell} must lie in the support set")
    return Split(support=support, unknown=frozenset(grid - support))


@dataclass(frozen=True, eq=False)
class CompositionalFamily:
    """Cell-indexed distributions tied together by transport bijections.

    ``cell_maps[c][i] = j`` sends base support position ``i`` to position ``j``
    of cell ``c``'s support; the induced cell distribution is the pushforward
    of the base distribution under that map.  ``cell_weights`` stores each
    cell's own position-indexed weights (defaulting to the base weights), and
    validity requires the pushforward to reproduce them elementwise.

    ``element_values`` optionally attaches an integer coordinate to each
    support element; generators with additive or multiplicative structure use
    it, and the factorization detector reads it when present.
    """

    data_space_size: int
    factor_sizes: tuple[int, int]
    base_cell: Cell
    base_support: tuple[int, ...]
    base_weights: FiniteDistribution
    cell_supports: Mapping[Cell, tuple[int, ...]]
    cell_maps: Mapping[Cell, tuple[int, ...]]
    cell_weights: Mapping[Cell, tuple[Number, ...]] = None  # type: ignore[assignment]
    element_values: Mapping[int, int] | None = None
    rule: object | None = field(default=None, compare=False)

    def __post_init__(self):
        na, nb = self.factor_sizes
        if na < 1 or nb < 1:
            raise ValidationError("factor sizes must be positive")
        if self.data_space_size < 1:
            raise ValidationError("data space must be nonempty")
        a0, b0 = self.base_cell
        if not (0 <= a0 < na and 0 <= b0 < nb):
            raise ValidationError(f"base cell {self.base_cell} out of range")
        k = len(self.base_support)
        if k == 0:
            raise ValidationError("base support must be nonempty")
        if self.base_weights.size != k:
            raise ValidationError("base weights do not match base support size")
        grid = [(a, b) for a in range(na) for b in range(nb)]
        supports = dict(self.cell_supports)
        maps = dict(self.cell_maps)
        if sorted(supports) != grid or sorted(maps) != grid:
            raise ValidationError("cell_supports and cell_maps must cover the full grid")
        for c in grid:
            sup = tuple(supports[c])
            if len(sup) != len(set(sup)):
                raise ValidationError(f"cell {c} support repeats an element")
            for e in sup:
                if not 0 <= e < self.data_space_size:
                    raise ValidationError(f"cell {c} support element {e} outside data space")
            m = tuple(maps[c])
            if sorted(m) != list(range(len(sup))):
                raise ValidationError(f"cell {c} map is not a bijection onto its support")
            supports[c] = sup
            maps[c] = m
        if tuple(supports[self.base_cell]) != tuple(self.base_support):
            raise ValidationError("base cell support must equal base_support")
        weights = dict(self.cell_weights) if self.cell_weights else {}
        filled: dict[Cell, tuple[Number, ...]] = {}
        for c in grid:
            if c in weights:
                vec = tuple(_coerce_weight(w) for w in weights[c])
                if len(vec) != len(supports[c]):
                    raise ValidationError(f"cell {c} weight vector has wrong length")
            else:
                vec = self.base_weights.weights if len(supports[c]) == self.k else None
                if vec is None:
                    raise ValidationError(f"cell {c} needs an explicit weight vector")
            filled[c] = vec
        object.__setattr__(self, "cell_supports", supports)
        object.__setattr__(self, "cell_maps", maps)
        object.__setattr__(self, "cell_weights", filled)
        if self.element_values is not None:
            object.__setattr__(self, "element_values", dict(self.element_values))

    @property
    def k(self) -> int:
        return len(self.base_support)

    def cells(self) -> Iterator[Cell]:
        na, nb = self.factor_sizes
        for a in range(na):
            for b in range(nb):
                yield (a, b)

    def cell_rank(self, cell: Cell) -> int:
        a, b = cell
        return a * self.factor_sizes[1] + b

    @property
    def exact(self) -> bool:
        return self.base_weights.exact and all(
            all_exact(v) for v in self.cell_weights.values()
        )

    def full_split(self) -> Split:
        return make_split(self.factor_sizes, self.base_cell, list(self.cells()))

    def split(self, support_cells: Iterable[Cell]) -> Split:
        return make_split(self.factor_sizes, self.base_cell, support_cells)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(f"- {v}" for v in self.violations)


@dataclass(frozen=True)
class Dataset:
    """IID draws from a support mixture; each sample is (element, cell)."""

    samples: tuple[tuple[int, Cell], ...]

    def __post_init__(self):
        if not self.samples:
            raise ValidationError("dataset must contain at least one sample")
        object.__setattr__(
            self, "samples", tuple((int(e), (int(c[0]), int(c[1]))) for e, c in self.samples)
        )

    @property
    def n(self) -> int:
        return len(self.samples)

    @classmethod
    def make(cls, family: CompositionalFamily,
             samples: Sequence[tuple[int, Cell]]) -> "Dataset":
        ds = cls(tuple(samples))
        for e, c in ds.samples:
            if c not in family.cell_supports:
                raise ValidationError(f"sample cell {c} not in the family grid")
            if e not in family.cell_supports[c]:
                raise ValidationError(f"sample element {e} not in the support of cell {c}")
        return ds


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate_family(family: CompositionalFamily) -> ValidationReport:
    """Check the transport-family invariants, reporting violations.

    Violations are report entries rather than exceptions: disjointness of cell
    supports, equal support cardinalities, identity map at the base cell, and
    measure preservation of each cell map against the cell's stored weights.
    """
    violations: list[str] = []
    seen: dict[int, Cell] = {}
    for c in family.cells():
        for e in family.cell_supports[c]:
            if e in seen and seen[e] != c:
                violations.append(
                    f"support overlap at element {e} (cells {seen[e]} and {c})"
                )
            else:
                seen[e] = c
    k = family.k
    for c in family.cells():
        if len(family.cell_supports[c]) != k:
            violations.append(
                f"cardinality mismatch at cell {c}: "
                f"{len(family.cell_supports[c])} != base {k}"
            )
    base_map = family.cell_maps[family.base_cell]
    if tuple(base_map) != tuple(range(len(base_map))):
        violations.append(f"base cell map is not the identity: {base_map}")
    w = family.base_weights.weights
    for c in family.cells():
        m = family.cell_maps[c]
        v = family.cell_weights[c]
        if len(v) != len(m):
            continue  # cardinality violation already recorded
        for i, wi in enumerate(w):
            if i >= len(m):
                break
            vi = v[m[i]]
            bad = (wi != vi) if (isinstance(wi, Fraction) and isinstance(vi, Fraction)) \
                else abs(float(wi) - float(vi)) > FLOAT_TOL
            if bad:
                violations.append(
                    f"measure not preserved at cell {c}: base position {i} has "
                    f"weight {wi} but its image carries {vi}"
                )
                break
    return ValidationReport(tuple(violations))


def cell_distribution(family: CompositionalFamily, cell: Cell) -> FiniteDistribution:
    """Pushforward of the base distribution into ``cell``, over the data space."""
    if cell not in family.cell_supports:
        raise ValidationError(f"cell {cell} out of range for factors {family.factor_sizes}")
    zero: Number = Fraction(0) if family.base_weights.exact else 0.0
    dense: list[Number] = [zero] * family.data_space_size
    sup = family.cell_supports[cell]
    m = family.cell_maps[cell]
    for i, w in enumerate(family.base_weights.weights):
        dense[sup[m[i]]] = w
    return FiniteDistribution(tuple(dense))


def subdistribution(joint: FiniteDistribution,
                    cell_of: Mapping[int, Cell],
                    cell: Cell) -> FiniteDistribution:
    """Conditional of ``joint`` on the elements assigned to ``cell``."""
    mass = sum((w for i, w in enumerate(joint.weights) if cell_of.get(i) == cell),
               start=Fraction(0))
    if mass == 0:
        raise ZeroMassCell(f"cell {cell} carries zero mass under the joint distribution")
    out: list[Number] = []
    for i, w in enumerate(joint.weights):
        if cell_of.get(i) == cell:
            out.append(w / mass)
        else:
            out.append(Fraction(0) if isinstance(w, Fraction) else 0.0)
    return FiniteDistribution(tuple(out))


def _check_function(f: Sequence[Number], size: int) -> None:
    if len(f) != size:
        raise ValidationError(f"function table has length {len(f)}, data space is {size}")
    for v in f:
        if v < 0:
            raise ValidationError("function values must be nonnegative")


def err_dist(p: FiniteDistribution, f: Sequence[Number]) -> Number:
    """Expected value of ``f`` under ``p``: sum_z p(z) f(z)."""
    _check_function(f, p.size)
    return sum((w * v for w, v in zip(p.weights, f) if w != 0), start=Fraction(0))


def err_mixture(family: CompositionalFamily, cells: Iterable[Cell],
                f: Sequence[Number]) -> Number:
    """Unweighted average of per-cell errors over ``cells``."""
    cs = sorted(set(tuple(c) for c in cells))
    if not cs:
        raise ValidationError("err_mixture needs a nonempty cell set")
    total = sum((err_dist(cell_distribution(family, c), f) for c in cs), start=Fraction(0))
    return total * Fraction(1, len(cs))


def err_dataset(dataset: Dataset, f: Sequence[Number]) -> Number:
    """Sample mean of ``f`` over the dataset's elements."""
    total = sum((f[e] for e, _ in dataset.samples), start=Fraction(0))
    return total * Fraction(1, dataset.n)


def sample_dataset(family: CompositionalFamily, split: Split,
                   cell_weights: Mapping[Cell, Number] | None,
                   n: int, seed: int) -> Dataset:
    """Draw ``n`` IID samples: pick a support cell, then an element of it.

    ``cell_weights`` defaults to the uniform mixture over S; explicit weights
    must cover exactly S and sum to one.  Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValidationError("need n >= 1 samples")
    cells = split.support_sorted
    if cell_weights is None:
        probs = [Fraction(1, len(cells))] * len(cells)
    else:
        if set(cell_weights) != set(cells):
            raise ValidationError("cell weights must cover exactly the support cells")
        probs = [_coerce_weight(cell_weights[c]) for c in cells]
        total = sum(probs)
        exact = all_exact(probs)
        if (exact and total != 1) or (not exact and abs(float(total) - 1.0) > FLOAT_TOL):
            raise ValidationError(f"cell weights sum to {float(total)}, expected 1")
    rng = derive_rng(seed, "sample-dataset")
    cell_p = np.array([float(p) for p in probs])
    cell_p = cell_p / cell_p.sum()
    elem_p = {}
    for c in cells:
        m = family.cell_maps[c]
        sup = family.cell_supports[c]
        pf = np.zeros(len(sup))
        for i, w in enumerate(family.base_weights.weights):
            pf[m[i]] = float(w)
        elem_p[c] = pf / pf.sum()
    picks = rng.choice(len(cells), size=n, p=cell_p)
    samples = []
    for ci in picks:
        c = cells[ci]
        j = rng.choice(len(family.cell_supports[c]), p=elem_p[c])
        samples.append((family.cell_supports[c][j], c))
    return Dataset.make(family, samples)


def epsilon(family: CompositionalFamily, functions: Sequence[Sequence[Number]]) -> Number:
    """Realizability gap: max over cells of the best achievable cell error."""
    if not functions:
        raise ValidationError("function space must be nonempty")
    worst: Number = Fraction(0)
    for c in family.cells():
        p = cell_distribution(family, c)
        best = min(err_dist(p, f) for f in functions)
        if best > worst:
            worst = best
    return worst
