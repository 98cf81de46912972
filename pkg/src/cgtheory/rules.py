"""Composition rules on a fixed skeleton.

A skeleton pins the factor grid, the base distribution over ``k`` within-cell
slots, and each cell's slot weights.  A composition rule assigns every cell a
weight-preserving slot bijection (identity at the base cell); the rule space
of a skeleton is the exhaustive enumeration of such assignments.

Realized families live on a placement data space: cell ``c`` owns a ``k x k``
block of elements ``(c, i, j)`` read as "base atom i placed at slot j", and a
rule's family occupies the ``k`` elements matching its map.  Distinct rule
restrictions therefore induce distinct support distributions, which the
no-free-lunch harness and the mutual-information grouping both require.

The factorization detector asks whether one slot bijection per factor move
(uniform across the other factor, and uniform in attached element values when
the task carries them) reproduces every pairwise transport; tasks where a
factor's transport necessarily depends on the other factor's value fail it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .domain import (
    Cell,
    CompositionalFamily,
    FiniteDistribution,
    Number,
    all_exact,
)
from .errors import (
    CollisionError,
    ExplosionGuard,
    SkeletonMismatch,
    ValidationError,
)

DEFAULT_CAP = 5000


@dataclass(frozen=True)
class Skeleton:
    """Shared structure of a rule space: grid, base weights, cell slot weights."""

    factor_sizes: tuple[int, int]
    base_cell: Cell
    base_weights: FiniteDistribution
    cell_weight_vectors: tuple[tuple[Number, ...], ...] | None = None

    def __post_init__(self):
        na, nb = self.factor_sizes
        if na < 1 or nb < 1:
            raise ValidationError("factor sizes must be positive")
        a0, b0 = self.base_cell
        if not (0 <= a0 < na and 0 <= b0 < nb):
            raise ValidationError(f"base cell {self.base_cell} out of range")
        if self.cell_weight_vectors is not None:
            vecs = tuple(tuple(v) for v in self.cell_weight_vectors)
            if len(vecs) != na * nb:
                raise ValidationError("need one weight vector per cell")
            for v in vecs:
                if len(v) != self.k:
                    raise ValidationError("cell weight vectors must have length k")
            if vecs[self.cell_rank(self.base_cell)] != self.base_weights.weights:
                raise ValidationError("base cell weights must equal the base distribution")
            object.__setattr__(self, "cell_weight_vectors", vecs)

    @property
    def k(self) -> int:
        return self.base_weights.size

    def cells(self) -> Iterator[Cell]:
        na, nb = self.factor_sizes
        for a in range(na):
            for b in range(nb):
                yield (a, b)

    def cell_rank(self, cell: Cell) -> int:
        return cell[0] * self.factor_sizes[1] + cell[1]

    def cell_weights(self, cell: Cell) -> tuple[Number, ...]:
        if self.cell_weight_vectors is None:
            return self.base_weights.weights
        return self.cell_weight_vectors[self.cell_rank(cell)]

    @property
    def data_space_size(self) -> int:
        na, nb = self.factor_sizes
        return na * nb * self.k * self.k

    def element_id(self, cell: Cell, atom: int, slot: int) -> int:
        """Placement element: base atom ``atom`` sitting at slot ``slot`` of ``cell``."""
        return self.cell_rank(cell) * self.k * self.k + atom * self.k + slot

    def admissible_maps(self, cell: Cell) -> tuple[tuple[int, ...], ...]:
        """All slot bijections sending each base weight onto an equal cell weight."""
        w = self.base_weights.weights
        v = self.cell_weights(cell)
        by_value_src: dict[Number, list[int]] = {}
        by_value_dst: dict[Number, list[int]] = {}
        for i, x in enumerate(w):
            by_value_src.setdefault(x, []).append(i)
        for j, x in enumerate(v):
            by_value_dst.setdefault(x, []).append(j)
        if {x: len(p) for x, p in by_value_src.items()} != \
           {x: len(p) for x, p in by_value_dst.items()}:
            raise ValidationError(
                f"cell {cell} weights are not a rearrangement of the base weights"
            )
        groups = sorted(by_value_src, key=lambda x: (float(x), str(x)))
        maps: list[tuple[int, ...]] = []
        choices = [list(itertools.permutations(by_value_dst[g])) for g in groups]
        for combo in itertools.product(*choices):
            m = [0] * self.k
            for g, perm in zip(groups, combo):
                for i, j in zip(by_value_src[g], perm):
                    m[i] = j
            maps.append(tuple(m))
        return tuple(sorted(maps))

    def admissible_count(self, cell: Cell) -> int:
        w = self.base_weights.weights
        counts: dict[Number, int] = {}
        for x in w:
            counts[x] = counts.get(x, 0) + 1
        v = self.cell_weights(cell)
        vcounts: dict[Number, int] = {}
        for x in v:
            vcounts[x] = vcounts.get(x, 0) + 1
        if counts != vcounts:
            raise ValidationError(
                f"cell {cell} weights are not a rearrangement of the base weights"
            )
        n = 1
        for c in counts.values():
            n *= math.factorial(c)
        return n

    def realize(self, rule: "CompositionRule") -> CompositionalFamily:
        """Family generated by ``rule`` on the placement data space."""
        if rule.skeleton != self:
            raise SkeletonMismatch("rule was enumerated for a different skeleton")
        k = self.k
        supports: dict[Cell, tuple[int, ...]] = {}
        weights: dict[Cell, tuple[Number, ...]] = {}
        w = self.base_weights.weights
        for c in self.cells():
            m = rule.map_for(c)
            inv = invert(m)
            supports[c] = tuple(self.element_id(c, inv[j], j) for j in range(k))
            weights[c] = tuple(w[inv[j]] for j in range(k))
        base_support = supports[self.base_cell]
        return CompositionalFamily(
            data_space_size=self.data_space_size,
            factor_sizes=self.factor_sizes,
            base_cell=self.base_cell,
            base_support=base_support,
            base_weights=self.base_weights,
            cell_supports=supports,
            cell_maps={c: rule.map_for(c) for c in self.cells()},
            cell_weights=weights,
            rule=rule,
        )


def invert(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, j in enumerate(perm):
        inv[j] = i
    return tuple(inv)


def compose(outer: Sequence[int], inner: Sequence[int]) -> tuple[int, ...]:
    """Position map applying ``inner`` first: p -> outer[inner[p]]."""
    return tuple(outer[inner[p]] for p in range(len(inner)))


@dataclass(frozen=True)
class CompositionRule:
    """One weight-preserving slot bijection per cell, identity at the base."""

    skeleton: Skeleton
    maps: tuple[tuple[int, ...], ...]  # indexed by cell rank

    def __post_init__(self):
        cells = list(self.skeleton.cells())
        if len(self.maps) != len(cells):
            raise ValidationError("need one map per cell")
        maps = tuple(tuple(m) for m in self.maps)
        k = self.skeleton.k
        ident = tuple(range(k))
        w = self.skeleton.base_weights.weights
        for c, m in zip(cells, maps):
            if sorted(m) != list(range(k)):
                raise ValidationError(f"map for cell {c} is not a bijection")
            v = self.skeleton.cell_weights(c)
            for i in range(k):
                if w[i] != v[m[i]]:
                    raise ValidationError(
                        f"map for cell {c} does not preserve the base weights"
                    )
        if maps[self.skeleton.cell_rank(self.skeleton.base_cell)] != ident:
            raise ValidationError("base cell map must be the identity")
        object.__setattr__(self, "maps", maps)

    def map_for(self, cell: Cell) -> tuple[int, ...]:
        return self.maps[self.skeleton.cell_rank(cell)]


@dataclass(frozen=True, eq=False)
class RuleSpace:
    """Exhaustively enumerated rules sharing one skeleton."""

    skeleton: Skeleton
    rules: tuple[CompositionRule, ...]
    _families: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(set(r.maps for r in self.rules)) != len(self.rules):
            raise ValidationError("rules must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.rules)

    def family(self, index: int) -> CompositionalFamily:
        if index not in self._families:
            self._families[index] = self.skeleton.realize(self.rules[index])
        return self._families[index]

    def index_of(self, rule: CompositionRule) -> int:
        for i, r in enumerate(self.rules):
            if r.maps == rule.maps and r.skeleton == rule.skeleton:
                return i
        raise ValidationError("rule not found in this space")


def enumerate_rules(skeleton: Skeleton, cap: int = DEFAULT_CAP) -> RuleSpace:
    """All weight-preserving rule assignments on ``skeleton``.

    The count is the product over non-base cells of the number of admissible
    bijections; it is computed combinatorially first and guarded by ``cap``
    before anything is materialized.
    """
    cells = list(skeleton.cells())
    count = 1
    for c in cells:
        if c == skeleton.base_cell:
            continue
        count *= skeleton.admissible_count(c)
    if count > cap:
        raise ExplosionGuard(
            f"rule space would hold {count} rules, cap is {cap}", count=count, cap=cap
        )
    ident = tuple(range(skeleton.k))
    per_cell: list[tuple[tuple[int, ...], ...]] = []
    for c in cells:
        per_cell.append((ident,) if c == skeleton.base_cell else skeleton.admissible_maps(c))
    rules = tuple(
        CompositionRule(skeleton=skeleton, maps=combo)
        for combo in itertools.product(*per_cell)
    )
    return RuleSpace(skeleton=skeleton, rules=rules)


def pairwise_map(rule: CompositionRule, from_cell: Cell, to_cell: Cell) -> tuple[int, ...]:
    """Slot transport from one cell to another: ``map(to) o map(from)^-1``."""
    m1 = rule.map_for(from_cell)
    m2 = rule.map_for(to_cell)
    return compose(m2, invert(m1))


def rules_equal(t1: CompositionRule, t2: CompositionRule,
                restricted_to: Sequence[Cell]) -> bool:
    if t1.skeleton != t2.skeleton:
        raise SkeletonMismatch("rules live on different skeletons")
    return all(t1.map_for(c) == t2.map_for(c) for c in restricted_to)


# ---------------------------------------------------------------------------
# transports on realized families, and the factorization detector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransportMap:
    """Slot bijection plus, when element values exist, per-slot value shifts.

    ``perm[p] = q`` carries the source's slot ``p`` onto the target's slot
    ``q``; ``shifts[p]`` is the change in element value along that move.
    """

    perm: tuple[int, ...]
    shifts: tuple[int, ...] | None = None

    def inverse(self) -> "TransportMap":
        inv = invert(self.perm)
        if self.shifts is None:
            return TransportMap(inv)
        return TransportMap(inv, tuple(-self.shifts[inv[q]] for q in range(len(inv))))

    def after(self, first: "TransportMap") -> "TransportMap":
        """Composite applying ``first`` and then this map."""
        perm = compose(self.perm, first.perm)
        if self.shifts is None and first.shifts is None:
            return TransportMap(perm)
        if self.shifts is None or first.shifts is None:
            raise ValidationError("cannot compose transports with and without value shifts")
        shifts = tuple(first.shifts[p] + self.shifts[first.perm[p]]
                       for p in range(len(perm)))
        return TransportMap(perm, shifts)


@dataclass(frozen=True)
class FactorMaps:
    """Per-factor transports: ``a_maps[(a1, a2)]`` and ``b_maps[(b1, b2)]``."""

    a_maps: Mapping[tuple[int, int], TransportMap]
    b_maps: Mapping[tuple[int, int], TransportMap]

    def __post_init__(self):
        object.__setattr__(self, "a_maps", dict(self.a_maps))
        object.__setattr__(self, "b_maps", dict(self.b_maps))


@dataclass(frozen=True)
class IrmVerdict:
    is_irm: bool
    witness: FactorMaps | None = None
    counterexample: tuple[int, int, int, int] | None = None

    def __str__(self) -> str:
        if self.is_irm:
            return "IRM"
        a1, b1, a2, b2 = self.counterexample
        return f"GenerativeEffect at ({a1},{b1}) -> ({a2},{b2})"


def transport(family: CompositionalFamily, from_cell: Cell, to_cell: Cell) -> TransportMap:
    """Pairwise transport between two cells of a realized family."""
    m1 = family.cell_maps[from_cell]
    m2 = family.cell_maps[to_cell]
    perm = compose(m2, invert(m1))
    if family.element_values is None:
        return TransportMap(perm)
    src = family.cell_supports[from_cell]
    dst = family.cell_supports[to_cell]
    vals = family.element_values
    try:
        shifts = tuple(vals[dst[perm[p]]] - vals[src[p]] for p in range(len(perm)))
    except KeyError as e:
        raise ValidationError(f"element {e} has no attached value") from e
    return TransportMap(perm, shifts)


def transport_element(family: CompositionalFamily, from_cell: Cell,
                      to_cell: Cell, element: int) -> int:
    sup = family.cell_supports[from_cell]
    if element not in sup:
        raise ValidationError(f"element {element} is not in the support of {from_cell}")
    p = sup.index(element)
    t = transport(family, from_cell, to_cell)
    return family.cell_supports[to_cell][t.perm[p]]


def is_irm(family: CompositionalFamily) -> IrmVerdict:
    """Decide whether the family's rule factorizes into per-factor moves.

    The candidate factor maps are read off the base row and base column; the
    rule factorizes iff every same-row transport matches the column candidate
    and every same-column transport matches the row candidate (the remaining
    mixed transports then agree in both composition orders automatically,
    since pairwise transports compose along paths).  The candidate read-off is
    exact whenever any factorization exists, so a failed check is a proof of
    generative effect and the failing cell pair is returned.
    """
    na, nb = family.factor_sizes
    a0, b0 = family.base_cell
    alpha = {a: transport(family, (a0, b0), (a, b0)) for a in range(na)}
    beta = {b: transport(family, (a0, b0), (a0, b)) for b in range(nb)}
    for a1 in range(na):
        for a2 in range(na):
            want = alpha[a2].after(alpha[a1].inverse())
            for b in range(nb):
                if transport(family, (a1, b), (a2, b)) != want:
                    return IrmVerdict(False, counterexample=(a1, b, a2, b))
    for b1 in range(nb):
        for b2 in range(nb):
            want = beta[b2].after(beta[b1].inverse())
            for a in range(na):
                if transport(family, (a, b1), (a, b2)) != want:
                    return IrmVerdict(False, counterexample=(a, b1, a, b2))
    witness = FactorMaps(
        a_maps={(a1, a2): alpha[a2].after(alpha[a1].inverse())
                for a1 in range(na) for a2 in range(na)},
        b_maps={(b1, b2): beta[b2].after(beta[b1].inverse())
                for b1 in range(nb) for b2 in range(nb)},
    )
    return IrmVerdict(True, witness=witness)


# ---------------------------------------------------------------------------
# canonical task generators
# ---------------------------------------------------------------------------

_MUL_STRIDE = 101  # > max product spread within a factor row, keeps ids disjoint


def multiplication_task() -> CompositionalFamily:
    """10x10 product task: factors 1..10, each cell a point mass at ``a*b``.

    Products collide across cells (2*6 = 3*4), which valid tasks forbid, so
    elements are row-tagged: ``id = 101*(a-1) + (a*b - 1)``.  The tag leaves
    the product coordinate intact, so transports still shift values by
    ``a*(b2-b1)`` along a row and the factorization detector sees exactly the
    product arithmetic.
    """
    na = nb = 10
    supports: dict[Cell, tuple[int, ...]] = {}
    values: dict[int, int] = {}
    for a in range(na):
        for b in range(nb):
            prod = (a + 1) * (b + 1)
            eid = _MUL_STRIDE * a + (prod - 1)
            supports[(a, b)] = (eid,)
            values[eid] = prod
    one = FiniteDistribution((Fraction(1),))
    return CompositionalFamily(
        data_space_size=_MUL_STRIDE * (na - 1) + 100,
        factor_sizes=(na, nb),
        base_cell=(0, 0),
        base_support=supports[(0, 0)],
        base_weights=one,
        cell_supports=supports,
        cell_maps={c: (0,) for c in supports},
        cell_weights={c: (Fraction(1),) for c in supports},
        element_values=values,
    )


def _as_table(table, name: str, r: int) -> list[list[int]]:
    rows: list[list[int]] = []
    for entry in table:
        if isinstance(entry, (int,)):
            rows.append([int(entry)] * r)
        else:
            row = [int(x) for x in entry]
            if len(row) != r:
                raise ValidationError(
                    f"{name} entries must be scalars or length-{r} noise rows"
                )
            rows.append(row)
    if not rows:
        raise ValidationError(f"{name} must be nonempty")
    return rows


def additive_task(phi1_table: Sequence, phi2_table: Sequence,
                  zeta_weights: Sequence[Number] | None = None) -> CompositionalFamily:
    """Task generated by ``z = phi1(a, zeta) + phi2(b, zeta)``.

    ``phi1_table`` is indexed by the first factor only and ``phi2_table`` by
    the second only (the signature is the constraint); entries are either
    scalars or per-noise-slot rows.  All generated sums must be distinct
    nonnegative integers, otherwise supports would overlap and a
    ``CollisionError`` is raised.  The element id is the sum itself, so factor
    moves act as uniform value shifts and the factorization detector returns a
    translation witness.
    """
    weights = tuple(zeta_weights) if zeta_weights is not None else (Fraction(1),)
    dist = FiniteDistribution(weights)
    r = dist.size
    phi1 = _as_table(phi1_table, "phi1_table", r)
    phi2 = _as_table(phi2_table, "phi2_table", r)
    na, nb = len(phi1), len(phi2)
    supports: dict[Cell, tuple[int, ...]] = {}
    values: dict[int, int] = {}
    seen: dict[int, tuple[Cell, int]] = {}
    for a in range(na):
        for b in range(nb):
            sup = []
            for z in range(r):
                val = phi1[a][z] + phi2[b][z]
                if val < 0:
                    raise ValidationError("generated values must be nonnegative")
                if val in seen:
                    raise CollisionError(
                        f"value {val} generated by both {seen[val]} and {((a, b), z)}"
                    )
                seen[val] = ((a, b), z)
                sup.append(val)
                values[val] = val
            supports[(a, b)] = tuple(sup)
    size = max(values) + 1
    ident = tuple(range(r))
    return CompositionalFamily(
        data_space_size=size,
        factor_sizes=(na, nb),
        base_cell=(0, 0),
        base_support=supports[(0, 0)],
        base_weights=dist,
        cell_supports=supports,
        cell_maps={c: ident for c in supports},
        cell_weights={c: dist.weights for c in supports},
        element_values=values,
    )
