"""Compile weighted routing instances into penalized binary quadratic models.

Decision variable x_ij = 1 means a worker travels arc (i, j). Two encodings
are supported:

* ``full``: one variable per directed arc over all nodes {0..n}, giving
  (n+1)*n variables. The model is

      sum_ij w_ij x_ij
      + A * sum over patients (1 - out_degree_i)^2
      + A * sum over patients (1 - in_degree_i)^2
      + A * (k - depot_out_degree)^2 + A * (k - depot_in_degree)^2

  so each patient is entered and left exactly once and exactly k routes
  leave and re-enter the depot.

* ``patients``: one variable per directed patient-to-patient arc, n*(n-1)
  variables. Routes are open chains; the depot arcs are implied (the first
  patient of a chain is reached from the depot, the last returns to it) and
  their pure-distance cost enters as linear terms. Quadratic penalties keep
  every in/out degree at most one and fix the selected arc count to n - k,
  which forces exactly k chains in the absence of patient-only cycles.

Route capacity and depot-disconnected cycles are intentionally not part of
the quadratic model; the brute-force checker enforces them at decode time.

The penalty weight A must exceed the largest arc cost so that any penalty
dominates any achievable travel saving. AUTO picks 10 * max(w) (with a
floor of 1.0 for all-zero cost matrices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .problem import WeightMatrix

#: assignments with more variables than this are never enumerated implicitly
MAX_ENUMERATION_VARS = 24

ENCODING_FULL = "full"
ENCODING_PATIENTS = "patients"


class PenaltyError(ValueError):
    """Penalty weight fails its dominance condition A > max(w)."""


@dataclass(frozen=True)
class VariableMap:
    """Deterministic arc ordering shared by models, states and decoders."""

    arcs: tuple[tuple[int, int], ...]
    n_nodes: int
    encoding: str
    index: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(tuple(a) for a in self.arcs))
        object.__setattr__(self, "index", {arc: p for p, arc in enumerate(self.arcs)})

    @property
    def n_vars(self) -> int:
        return len(self.arcs)

    def arcs_from_bits(self, bits: Sequence[int]) -> list[tuple[int, int]]:
        return [self.arcs[p] for p, b in enumerate(bits) if b]


def make_variable_map(n_patients: int, encoding: str = ENCODING_FULL) -> VariableMap:
    """Row-major arc ordering over {0..n} (full) or {1..n} (patients)."""
    lo = 0 if encoding == ENCODING_FULL else 1
    if encoding not in (ENCODING_FULL, ENCODING_PATIENTS):
        raise ValueError(f"unknown encoding {encoding!r}")
    arcs = tuple(
        (i, j)
        for i in range(lo, n_patients + 1)
        for j in range(lo, n_patients + 1)
        if i != j
    )
    return VariableMap(arcs=arcs, n_nodes=n_patients + 1, encoding=encoding)


def _as_bits(assignment, n_vars: int) -> np.ndarray:
    if isinstance(assignment, str):
        bits = np.array([int(c) for c in assignment], dtype=np.int8)
    else:
        bits = np.asarray(assignment, dtype=np.int8)
    if bits.shape != (n_vars,):
        raise ValueError(f"assignment length {bits.size} != variable count {n_vars}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("assignment must be binary")
    return bits


def _as_spins(assignment, n_vars: int) -> np.ndarray:
    if isinstance(assignment, str):
        spins = np.array([{"+": 1, "-": -1}.get(c, None) or int(c) for c in assignment])
    else:
        spins = np.asarray(assignment, dtype=np.int64)
    spins = spins.astype(np.int64)
    if spins.shape != (n_vars,):
        raise ValueError(f"assignment length {spins.size} != variable count {n_vars}")
    if np.any((spins != 1) & (spins != -1)):
        raise ValueError("spin assignment must be +1/-1")
    return spins


@dataclass
class QuadraticModel:
    """Binary quadratic objective: offset + linear.x + sum quad[p,q] x_p x_q."""

    linear: np.ndarray
    quadratic: dict[tuple[int, int], float]
    offset: float
    penalty_A: float = 0.0

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        for p, q in self.quadratic:
            if not p < q:
                raise ValueError(f"quadratic key ({p}, {q}) is not upper-triangular")

    @property
    def n_vars(self) -> int:
        return int(self.linear.size)

    def energy(self, assignment) -> float:
        bits = _as_bits(assignment, self.n_vars)
        value = self.offset + float(self.linear @ bits)
        for (p, q), coef in sorted(self.quadratic.items()):
            value += coef * bits[p] * bits[q]
        return value

    def dump(self) -> str:
        """Stable textual listing of all terms, one per line."""
        lines = [f"offset {self.offset!r}"]
        for p in range(self.n_vars):
            if self.linear[p] != 0.0:
                lines.append(f"linear {p} {self.linear[p]!r}")
        for (p, q), coef in sorted(self.quadratic.items()):
            if coef != 0.0:
                lines.append(f"quadratic {p} {q} {coef!r}")
        return "\n".join(lines) + "\n"


@dataclass
class IsingModel:
    """Spin form: offset + h.z + sum J[p,q] z_p z_q with z in {+1, -1}."""

    h: np.ndarray
    J: dict[tuple[int, int], float]
    offset: float

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        for p, q in self.J:
            if not p < q:
                raise ValueError(f"coupling key ({p}, {q}) is not upper-triangular")

    @property
    def n_vars(self) -> int:
        return int(self.h.size)

    def energy(self, assignment) -> float:
        spins = _as_spins(assignment, self.n_vars)
        value = self.offset + float(self.h @ spins)
        for (p, q), coef in sorted(self.J.items()):
            value += coef * spins[p] * spins[q]
        return value


def parse_model_dump(text: str) -> QuadraticModel:
    """Inverse of :meth:`QuadraticModel.dump` (used by tooling and tests)."""
    offset = 0.0
    linear: dict[int, float] = {}
    quadratic: dict[tuple[int, int], float] = {}
    max_index = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "offset" and len(parts) == 2:
                offset = float(parts[1])
            elif parts[0] == "linear" and len(parts) == 3:
                p = int(parts[1])
                linear[p] = float(parts[2])
                max_index = max(max_index, p)
            elif parts[0] == "quadratic" and len(parts) == 4:
                p, q = int(parts[1]), int(parts[2])
                quadratic[(p, q)] = float(parts[3])
                max_index = max(max_index, p, q)
            else:
                raise ValueError("unrecognized record")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"model dump line {lineno}: {raw!r}: {exc}") from exc
    vec = np.zeros(max_index + 1)
    for p, coef in linear.items():
        vec[p] = coef
    return QuadraticModel(linear=vec, quadratic=quadratic, offset=offset)


def compile_qubo(
    weight: WeightMatrix,
    n_workers: int,
    penalty_A: float | None = None,
    encoding: str = ENCODING_FULL,
) -> tuple[QuadraticModel, VariableMap]:
    """Expand objective plus squared degree penalties over the arc variables.

    ``penalty_A=None`` selects AUTO (10 * max arc cost). An explicit penalty
    at or below the maximum arc cost is rejected: it could no longer
    dominate the travel savings of a constraint violation.
    """
    n = weight.n_nodes - 1
    if n < 1:
        raise ValueError("need at least one patient")
    if n_workers < 1:
        raise ValueError("need at least one worker")

    w = weight.w
    max_w = weight.max_weight()
    if penalty_A is None:
        penalty_A = max(10.0 * max_w, 1.0)
    elif penalty_A <= max_w:
        raise PenaltyError(
            f"penalty A={penalty_A} must exceed the maximum arc cost max(w)={max_w}"
        )
    A = float(penalty_A)
    k = n_workers

    var_map = make_variable_map(n, encoding)
    linear = np.zeros(var_map.n_vars)
    quadratic: dict[tuple[int, int], float] = {}
    offset = 0.0

    def add_quad(p: int, q: int, coef: float) -> None:
        key = (p, q) if p < q else (q, p)
        quadratic[key] = quadratic.get(key, 0.0) + coef

    def add_counting_penalty(indices: list[int], target: int, scale: float) -> None:
        # scale * (target - sum x)^2, expanded with x^2 == x
        nonlocal offset
        offset += scale * target * target
        for p in indices:
            linear[p] += scale * (1 - 2 * target)
        for a in range(len(indices)):
            for b in range(a + 1, len(indices)):
                add_quad(indices[a], indices[b], 2.0 * scale)

    if encoding == ENCODING_FULL:
        for (i, j), p in var_map.index.items():
            linear[p] += w[i, j]
        for i in range(1, n + 1):
            out_i = [var_map.index[(i, j)] for j in range(0, n + 1) if j != i]
            in_i = [var_map.index[(j, i)] for j in range(0, n + 1) if j != i]
            add_counting_penalty(out_i, 1, A)
            add_counting_penalty(in_i, 1, A)
        depot_out = [var_map.index[(0, i)] for i in range(1, n + 1)]
        depot_in = [var_map.index[(i, 0)] for i in range(1, n + 1)]
        add_counting_penalty(depot_out, k, A)
        add_counting_penalty(depot_in, k, A)
    else:
        # Chains: arc (i, j) removes j's depot-approach cost and i's
        # depot-return cost from the implied depot round trips.
        for i in range(1, n + 1):
            offset += w[0, i] + w[i, 0]
        for (i, j), p in var_map.index.items():
            linear[p] += w[i, j] - w[0, j] - w[i, 0]
        for i in range(1, n + 1):
            out_i = [var_map.index[(i, j)] for j in range(1, n + 1) if j != i]
            in_i = [var_map.index[(j, i)] for j in range(1, n + 1) if j != i]
            # at-most-one degree: only the pairwise part of the square
            for a in range(len(out_i)):
                for b in range(a + 1, len(out_i)):
                    add_quad(out_i[a], out_i[b], 2.0 * A)
            for a in range(len(in_i)):
                for b in range(a + 1, len(in_i)):
                    add_quad(in_i[a], in_i[b], 2.0 * A)
        if n - k >= 0:
            add_counting_penalty(list(range(var_map.n_vars)), n - k, A)
        else:
            # more workers than patients: no arc count can realize k chains
            add_counting_penalty(list(range(var_map.n_vars)), 0, A)

    model = QuadraticModel(linear=linear, quadratic=quadratic, offset=offset, penalty_A=A)
    return model, var_map


def qubo_to_ising(model: QuadraticModel) -> IsingModel:
    """Substitute x = (1 - z) / 2; z = +1 corresponds to x = 0."""
    n = model.n_vars
    h = np.zeros(n)
    J: dict[tuple[int, int], float] = {}
    offset = model.offset
    for p in range(n):
        c = model.linear[p]
        if c != 0.0:
            offset += c / 2.0
            h[p] -= c / 2.0
    for (p, q), c in sorted(model.quadratic.items()):
        if c == 0.0:
            continue
        offset += c / 4.0
        h[p] -= c / 4.0
        h[q] -= c / 4.0
        J[(p, q)] = J.get((p, q), 0.0) + c / 4.0
    return IsingModel(h=h, J=J, offset=offset)


def energy(model, assignment) -> float:
    """Exact objective value of a bitstring (QUBO) or spin string (Ising)."""
    if isinstance(model, QuadraticModel):
        return model.energy(assignment)
    if isinstance(model, IsingModel):
        return model.energy(assignment)
    raise TypeError(f"unsupported model type {type(model).__name__}")


@lru_cache(maxsize=8)
def _bit_table(n_vars: int) -> np.ndarray:
    """(2^n, n) matrix of bits; column p is bit p of the row index."""
    if n_vars > MAX_ENUMERATION_VARS:
        raise ValueError(f"{n_vars} variables exceed the enumeration cap {MAX_ENUMERATION_VARS}")
    idx = np.arange(1 << n_vars, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_vars)) & 1).astype(np.int8)


def qubo_energies(model: QuadraticModel) -> np.ndarray:
    """Energies of all 2^n assignments; index i encodes bit p as (i >> p) & 1."""
    bits = _bit_table(model.n_vars)
    energies = np.full(bits.shape[0], model.offset, dtype=float)
    for p in range(model.n_vars):
        if model.linear[p] != 0.0:
            energies += model.linear[p] * bits[:, p]
    for (p, q), coef in sorted(model.quadratic.items()):
        if coef != 0.0:
            energies += coef * (bits[:, p] * bits[:, q])
    return energies


def ising_energies(ising: IsingModel) -> np.ndarray:
    """Energies of all 2^n spin assignments under z_p = 1 - 2 * bit_p."""
    bits = _bit_table(ising.n_vars)
    z = 1.0 - 2.0 * bits
    energies = np.full(bits.shape[0], ising.offset, dtype=float)
    for p in range(ising.n_vars):
        if ising.h[p] != 0.0:
            energies += ising.h[p] * z[:, p]
    for (p, q), coef in sorted(ising.J.items()):
        if coef != 0.0:
            energies += coef * (z[:, p] * z[:, q])
    return energies


def index_to_bitstring(index: int, n_vars: int) -> str:
    """Bitstring with character p equal to variable/qubit p of the index."""
    return "".join(str((index >> p) & 1) for p in range(n_vars))


def bitstring_to_index(bits: str) -> int:
    return sum(1 << p for p, c in enumerate(bits) if c == "1")
