"""The 18-vector contextuality set and the (2,9,4) Bell functional built on it.

Two parties each choose one of 9 projective measurements with 4 outcomes.
The measurements come from a fixed set of 18 rank-one projectors in dimension
4, arranged into 9 orthogonal bases so that every projector appears in
exactly two bases.  The set admits no {0,1} assignment with exactly one 1 per
basis (``ks_coloring_count`` returns 0), which is what makes the derived Bell
expression algebraically violable.

The Bell functional is an indicator sum: a term for every pair of outcomes
whose projectors are *distinct and orthogonal*.  Two readings of "connected
in the orthogonality hypergraph" exist: connecting outcomes whose vectors are
orthogonal gives 504 terms (63 orthogonal vector pairs, each vector sitting
in 2 bases, counted in both orders: 63 * 2 * 4 = 504); connecting only
outcomes that share a printed basis gives 432.  This package implements the
504-term reading, which is the one consistent with a classical minimum of 4;
the 432 count is exposed in the docs and tests for reference.

Indexing convention used across the whole package: settings are 1..9 in
printed basis order, outcomes 1..4 in printed slot order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

# The 18 vectors, unnormalized, exactly as printed (1-indexed externally).
KS_VECTORS = (
    (1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 1), (0, 0, 1, -1),
    (1, -1, 0, 0), (1, 1, -1, -1), (1, 1, 1, 1), (1, -1, 1, -1),
    (1, 0, -1, 0), (0, 1, 0, -1), (1, 0, 1, 0), (1, 1, -1, 1),
    (-1, 1, 1, 1), (1, 1, 1, -1), (1, 0, 0, 1), (0, 1, -1, 0),
    (0, 1, 1, 0), (0, 0, 0, 1),
)

# The 9 bases as ordered 4-tuples of vector indices (1-indexed).
KS_BASES = (
    (1, 2, 3, 4), (4, 5, 6, 7), (7, 8, 9, 10),
    (10, 11, 12, 13), (13, 14, 15, 16), (16, 17, 18, 1),
    (2, 9, 11, 18), (3, 5, 12, 14), (6, 8, 15, 17),
)

# Tomography target: outcome pair (1,3) for setting pair (1,2).  The two
# projectors involved are not orthogonal, so the pair is outside the Bell
# indicator set and its ideal-box probability is 1/16 rather than 0.
TARGET_OUTCOMES = (1, 3)
TARGET_SETTINGS = (1, 2)


@dataclass(frozen=True)
class KSModel:
    """A vector set with its basis structure.

    vectors: integer coordinate tuples, 1-indexed externally.
    bases: ordered tuples of vector indices, settings 1-indexed.
    incidence: vector index -> tuple of (basis, slot) memberships, 1-indexed.
    """

    vectors: tuple[tuple[int, ...], ...]
    bases: tuple[tuple[int, ...], ...]
    incidence: dict[int, tuple[tuple[int, int], ...]]

    def vector(self, i: int) -> tuple[int, ...]:
        return self.vectors[i - 1]

    def vector_at(self, setting: int, outcome: int) -> int:
        """Vector index sitting at slot `outcome` of basis `setting`."""
        return self.bases[setting - 1][outcome - 1]

    def inner(self, i: int, j: int) -> int:
        return sum(a * b for a, b in zip(self.vectors[i - 1], self.vectors[j - 1]))

    def orthogonal(self, i: int, j: int) -> bool:
        return self.inner(i, j) == 0

    def norm_sq(self, i: int) -> int:
        return self.inner(i, i)

    def orthogonality_edges(self) -> set[tuple[int, int]]:
        """Unordered orthogonal pairs (i < j)."""
        n = len(self.vectors)
        return {(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)
                if self.orthogonal(i, j)}

    def to_json(self) -> str:
        return json.dumps(
            {"vectors": [list(v) for v in self.vectors],
             "bases": [list(b) for b in self.bases]},
            sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class BellFunctional:
    """Sparse indicator functional over outcome/setting pairs.

    sb: set of ((x1,x2),(u1,u2)) tuples carrying indicator value 1.
    d_target: the single (outcomes, settings) pair counted by the
        tomographic test; never a member of sb.
    """

    sb: frozenset[tuple[tuple[int, int], tuple[int, int]]]
    d_target: tuple[tuple[int, int], tuple[int, int]]
    num_settings: int = 81
    num_outcomes_per_setting: int = 16

    def settings_per_party(self) -> int:
        return round(self.num_settings ** 0.5)

    def outcomes_per_party(self) -> int:
        return round(self.num_outcomes_per_setting ** 0.5)

    def indicator(self, x: tuple[int, int], u: tuple[int, int]) -> int:
        return 1 if (x, u) in self.sb else 0

    def indicator_array(self) -> np.ndarray:
        """Dense indicator, shape (9,9,4,4) indexed [u1-1,u2-1,x1-1,x2-1]."""
        s, o = self.settings_per_party(), self.outcomes_per_party()
        arr = np.zeros((s, s, o, o), dtype=np.int16)
        for (x1, x2), (u1, u2) in self.sb:
            arr[u1 - 1, u2 - 1, x1 - 1, x2 - 1] = 1
        return arr

    def to_json(self) -> str:
        return json.dumps(
            {"sb": sorted([x1, x2, u1, u2] for (x1, x2), (u1, u2) in self.sb),
             "d_target": list(self.d_target[0]) + list(self.d_target[1]),
             "num_settings": self.num_settings,
             "num_outcomes_per_setting": self.num_outcomes_per_setting},
            sort_keys=True, separators=(",", ":"))


def build_ks_model(vectors: Iterable[tuple[int, ...]] = KS_VECTORS,
                   bases: Iterable[tuple[int, ...]] = KS_BASES) -> KSModel:
    """Construct a model from vectors and basis index tuples.

    Deterministic and pure; the default arguments give the fixed 18-vector,
    9-basis set.  Toy models for tests pass smaller sets.
    """
    vecs = tuple(tuple(v) for v in vectors)
    bs = tuple(tuple(b) for b in bases)
    incidence: dict[int, list[tuple[int, int]]] = {i: [] for i in range(1, len(vecs) + 1)}
    for bi, b in enumerate(bs, start=1):
        for slot, v in enumerate(b, start=1):
            incidence[v].append((bi, slot))
    return KSModel(vectors=vecs, bases=bs,
                   incidence={k: tuple(v) for k, v in incidence.items()})


def check_model(model: KSModel) -> None:
    """Assert the structural invariants of the fixed 18-vector set.

    A failure means the baked-in constants are corrupted; this is a defect,
    not a recoverable runtime condition.
    """
    assert len(model.vectors) == 18 and len(model.bases) == 9
    assert all(len(b) == 4 for b in model.bases)
    assert all(len(model.incidence[i]) == 2 for i in model.incidence), \
        "every vector must appear in exactly 2 bases"
    for b in model.bases:
        for i in range(4):
            for j in range(i + 1, 4):
                assert model.orthogonal(b[i], b[j]), f"basis {b} not orthogonal"
    edges = model.orthogonality_edges()
    assert len(edges) == 63
    deg = {i: 0 for i in range(1, 19)}
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    assert all(d == 7 for d in deg.values()), "orthogonality graph must be 7-regular"


def build_bell_functional(model: KSModel,
                          d_target: tuple[tuple[int, int], tuple[int, int]] | None = None
                          ) -> BellFunctional:
    """Indicator set over all setting pairs: distinct orthogonal vector pairs.

    ((x1,x2),(u1,u2)) is a member exactly when the vector at slot x1 of
    basis u1 differs from the vector at slot x2 of basis u2 and the two are
    orthogonal.  For the fixed model this yields 504 members.
    """
    ns = len(model.bases)
    no = len(model.bases[0])
    sb = set()
    for u1 in range(1, ns + 1):
        for u2 in range(1, ns + 1):
            for x1 in range(1, no + 1):
                for x2 in range(1, no + 1):
                    a = model.vector_at(u1, x1)
                    b = model.vector_at(u2, x2)
                    if a != b and model.orthogonal(a, b):
                        sb.add(((x1, x2), (u1, u2)))
    if d_target is None:
        d_target = (TARGET_OUTCOMES, TARGET_SETTINGS)
    return BellFunctional(sb=frozenset(sb), d_target=d_target,
                          num_settings=ns * ns,
                          num_outcomes_per_setting=no * no)


def evaluate_deterministic(f: BellFunctional,
                           alice: tuple[int, ...],
                           bob: tuple[int, ...]) -> int:
    """Value of the functional on a deterministic strategy pair.

    alice[u-1] / bob[u-1] give each party's outcome (1-indexed) for setting u.
    """
    s = f.settings_per_party()
    return sum(f.indicator((alice[u1 - 1], bob[u2 - 1]), (u1, u2))
               for u1 in range(1, s + 1) for u2 in range(1, s + 1))


def classical_minimum(f: BellFunctional, chunk: int = 1 << 13
                      ) -> tuple[int, tuple[tuple[int, ...], tuple[int, ...]]]:
    """Exact minimum over local deterministic strategies, with a witness.

    Enumerates all outcome assignments for the first party (4^9 of them, in
    lexicographic order with setting 1 most significant) and computes the
    second party's best response setting by setting; this is exhaustive
    because the functional splits across the second party's settings once
    the first party's assignment is fixed.  Ties are broken to the
    lexicographically smallest witness.
    """
    s = f.settings_per_party()
    o = f.outcomes_per_party()
    C = f.indicator_array()                      # (s, s, o, o) as [u1,u2,x1,x2]
    # Rearranged so that gathering on Alice's outcome is a flat index:
    # CC[u1*o + x1, u2, x2]
    CC = np.transpose(C, (0, 2, 1, 3)).reshape(s * o, s, o).astype(np.int32)
    n_assign = o ** s
    pow_ms = o ** np.arange(s - 1, -1, -1)       # alice[0] most significant
    best_val = None
    best_alice_idx = None
    for start in range(0, n_assign, chunk):
        idx = np.arange(start, min(start + chunk, n_assign))
        A = (idx[:, None] // pow_ms[None, :]) % o          # (m, s) outcomes 0-based
        flat = np.arange(s)[None, :] * o + A               # (m, s)
        per_u2 = CC[flat].sum(axis=1)                      # (m, s, o): cost per (u2, x2)
        cost = per_u2.min(axis=2).sum(axis=1)              # (m,)
        loc = int(cost.argmin())
        if best_val is None or cost[loc] < best_val:
            best_val = int(cost[loc])
            best_alice_idx = start + loc
    alice = tuple(int(best_alice_idx // (o ** (s - 1 - i))) % o + 1 for i in range(s))
    # Bob best response for the winning assignment, smallest outcome on ties.
    per_u2 = np.array([[sum(C[u1, u2, alice[u1] - 1, x2] for u1 in range(s))
                        for x2 in range(o)] for u2 in range(s)])
    bob = tuple(int(per_u2[u2].argmin()) + 1 for u2 in range(s))
    return best_val, (alice, bob)


def ks_coloring_count(model: KSModel) -> int:
    """Count {0,1} assignments with exactly one 1 per basis and no two
    orthogonal vectors both set.

    Exhaustive scan over all 2^n subsets of the vector set (n <= 24 guarded);
    for the fixed 18-vector model the count is 0.
    """
    n = len(model.vectors)
    if n > 24:
        raise ValueError(f"exhaustive scan limited to 24 vectors, got {n}")
    basis_masks = [sum(1 << (v - 1) for v in b) for b in model.bases]
    orth_mask = [0] * (n + 1)
    for i in range(1, n + 1):
        m = 0
        for j in range(1, n + 1):
            if i != j and model.orthogonal(i, j):
                m |= 1 << (j - 1)
        orth_mask[i] = m
    count = 0
    for mask in range(1 << n):
        ok = True
        for bm in basis_masks:
            if (mask & bm).bit_count() != 1:
                ok = False
                break
        if not ok:
            continue
        m2 = mask
        clash = False
        while m2:
            v = (m2 & -m2).bit_length()
            if orth_mask[v] & mask:
                clash = True
                break
            m2 &= m2 - 1
        if not clash:
            count += 1
    return count
