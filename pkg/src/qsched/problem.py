"""Scheduling instances and the time-window-weighted travel cost matrix.

An instance is one day of home visits: a central depot (node 0), patients
1..n each with a single visit slot, a symmetric travel-distance matrix over
all nodes, and a crew of identical workers. The cost of chaining visit j
directly after visit i blends travel distance with a quadratic penalty on
the gap between the two slot start times:

    w[i, j] = d[i, j] + epsilon * (tau_i - tau_j)**2 / (d_max - d_min)

where tau_i is patient i's slot start (minutes from midnight) and
d_max / d_min are the extremal patient-to-patient distances. Arcs touching
the depot carry pure distance; the depot has no visit slot. When all
patient-pair distances coincide (including the single-patient case) the
time term is defined as zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MINUTES_PER_DAY = 1440


class InstanceError(ValueError):
    """Instance data that cannot be used (bad matrix, bad slots, bad file)."""


@dataclass(frozen=True)
class PatientVisit:
    """One patient's visit slot for one day, times in minutes from midnight."""

    patient_id: int | str
    slot_start: int
    slot_end: int
    day: str = ""

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "slot_start": self.slot_start,
            "slot_end": self.slot_end,
            "day": self.day,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PatientVisit":
        return cls(
            patient_id=data["patient_id"],
            slot_start=int(data["slot_start"]),
            slot_end=int(data["slot_end"]),
            day=data.get("day", ""),
        )


def _id_key(patient_id) -> tuple:
    # Sort integer ids numerically, everything else lexically.
    if isinstance(patient_id, bool):
        return (1, str(patient_id))
    if isinstance(patient_id, int):
        return (0, patient_id)
    return (1, str(patient_id))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A single-day routing-and-scheduling instance.

    ``distances`` is an (n+1) x (n+1) matrix over nodes {0..n}; node 0 is the
    depot and node i >= 1 is ``patients[i-1]``. Immutable after construction
    and safe to share across threads.
    """

    patients: tuple[PatientVisit, ...]
    n_workers: int
    capacity: int
    distances: np.ndarray
    epsilon: float
    day: str = ""

    def __post_init__(self):
        object.__setattr__(self, "patients", tuple(self.patients))
        d = np.asarray(self.distances, dtype=float).copy()
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)

    @property
    def n(self) -> int:
        """Number of patients."""
        return len(self.patients)

    @property
    def n_nodes(self) -> int:
        return self.n + 1

    def slot_starts(self) -> np.ndarray:
        """Slot starts for nodes 1..n, aligned with the distance matrix."""
        return np.array([p.slot_start for p in self.patients], dtype=float)

    def patient_ids(self) -> tuple:
        return tuple(p.patient_id for p in self.patients)

    def canonical_key(self) -> tuple:
        """Hashable canonical form; equal keys mean identical statements."""
        c = canonicalize(self)
        return (
            tuple((p.patient_id, p.slot_start, p.slot_end) for p in c.patients),
            c.n_workers,
            c.capacity,
            float(c.epsilon),
            c.day,
            tuple(np.round(c.distances, 12).ravel().tolist()),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.patients == other.patients
            and self.n_workers == other.n_workers
            and self.capacity == other.capacity
            and self.epsilon == other.epsilon
            and self.day == other.day
            and np.array_equal(self.distances, other.distances)
        )

    def to_dict(self) -> dict:
        return {
            "day": self.day,
            "n_workers": self.n_workers,
            "capacity": self.capacity,
            "epsilon": self.epsilon,
            "patients": [p.to_dict() for p in self.patients],
            "distances": [list(row) for row in self.distances.tolist()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        day = data.get("day", "")
        patients = []
        for entry in data.get("patients", []):
            visit = PatientVisit.from_dict(entry)
            if not visit.day:
                visit = replace(visit, day=day)
            patients.append(visit)
        if "distances" in data:
            distances = np.asarray(data["distances"], dtype=float)
        elif "coordinates" in data:
            distances = euclidean_distances(data["coordinates"])
        else:
            raise InstanceError("instance needs 'distances' or 'coordinates'")
        return cls(
            patients=tuple(patients),
            n_workers=int(data["n_workers"]),
            capacity=int(data["capacity"]),
            distances=distances,
            epsilon=float(data["epsilon"]),
            day=day,
        )


@dataclass(frozen=True)
class WeightMatrix:
    """Time-window-weighted cost matrix over nodes {0..n}.

    ``w`` holds the blended arc costs, ``t_window`` the squared slot gaps
    (tau_i - tau_j)**2 for patient pairs (zero on depot arcs), and
    d_max / d_min the extremal patient-pair distances used as normalizer.
    """

    w: np.ndarray
    d_max: float
    d_min: float
    t_window: np.ndarray

    def __post_init__(self):
        for name in ("w", "t_window"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.w.shape[0]

    def max_weight(self) -> float:
        """Largest off-diagonal arc cost (used by the penalty bound)."""
        mask = ~np.eye(self.n_nodes, dtype=bool)
        return float(self.w[mask].max()) if self.n_nodes > 1 else 0.0


def euclidean_distances(coordinates: Sequence[Sequence[float]]) -> np.ndarray:
    """Full symmetric distance matrix from planar coordinates (depot first)."""
    pts = np.asarray(coordinates, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InstanceError("coordinates must be a list of [x, y] pairs")
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def validate_instance(instance: ProblemInstance) -> list[str]:
    """Collect invariant violations; an empty list means the instance is sound.

    Violations are data, not failures: each message names the offending
    field and the rule it breaks.
    """
    violations: list[str] = []
    if instance.n_workers < 1:
        violations.append("n_workers: must be at least 1")
    if instance.capacity < 1:
        violations.append("capacity: must be at least 1")
    if instance.epsilon < 0:
        violations.append("epsilon: must be non-negative")

    d = instance.distances
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        violations.append("distances: must be a square matrix")
    else:
        if d.shape[0] != instance.n_nodes:
            violations.append(
                f"distances: shape {d.shape[0]}x{d.shape[1]} does not match "
                f"{instance.n_nodes} nodes (depot + {instance.n} patients)"
            )
        if not np.array_equal(d, d.T):
            violations.append("distances: distance symmetry violated")
        if np.any(np.diag(d) != 0):
            violations.append("distances: diagonal must be zero")
        if np.any(d < 0):
            violations.append("distances: entries must be non-negative")

    seen: set[tuple] = set()
    for i, p in enumerate(instance.patients):
        if p.slot_end <= p.slot_start:
            violations.append(f"patients[{i}].slot_end: slot ordering (end must be after start)")
        if not (0 <= p.slot_start < MINUTES_PER_DAY):
            violations.append(f"patients[{i}].slot_start: outside [0, {MINUTES_PER_DAY})")
        key = (p.patient_id, p.day or instance.day)
        if key in seen:
            violations.append(f"patients[{i}]: duplicate slot for patient {p.patient_id} on one day")
        seen.add(key)
        if p.day and instance.day and p.day != instance.day:
            violations.append(f"patients[{i}].day: {p.day!r} does not match instance day {instance.day!r}")
    return violations


def build_weight_matrix(instance: ProblemInstance) -> WeightMatrix:
    """Blend travel distance with the squared slot-gap term into arc costs.

    Depot rows and columns keep pure distance. With fewer than two patients,
    or when all patient-pair distances coincide, the time term is zero.
    Rejects negative epsilon and malformed distance matrices.
    """
    violations = validate_instance(instance)
    if violations:
        raise InstanceError("; ".join(violations))

    n = instance.n
    d = instance.distances
    t_window = np.zeros_like(d)
    if n >= 1:
        tau = instance.slot_starts()
        gaps = tau[:, None] - tau[None, :]
        t_window[1:, 1:] = gaps**2

    if n >= 2:
        pair = d[1:, 1:][~np.eye(n, dtype=bool)]
        d_max, d_min = float(pair.max()), float(pair.min())
    else:
        d_max = d_min = 0.0

    w = d.copy()
    denom = d_max - d_min
    if denom > 0 and instance.epsilon > 0:
        w[1:, 1:] = w[1:, 1:] + instance.epsilon * t_window[1:, 1:] / denom
        np.fill_diagonal(w, 0.0)
    return WeightMatrix(w=w, d_max=d_max, d_min=d_min, t_window=t_window)


def canonicalize(instance: ProblemInstance) -> ProblemInstance:
    """Sort patients by id and re-index the distance matrix accordingly."""
    order = sorted(range(instance.n), key=lambda i: _id_key(instance.patients[i].patient_id))
    if order == list(range(instance.n)):
        return instance
    nodes = [0] + [i + 1 for i in order]
    d = instance.distances[np.ix_(nodes, nodes)]
    return ProblemInstance(
        patients=tuple(instance.patients[i] for i in order),
        n_workers=instance.n_workers,
        capacity=instance.capacity,
        distances=d,
        epsilon=instance.epsilon,
        day=instance.day,
    )


def load_instance(path: str | Path) -> ProblemInstance:
    """Load an instance document and refuse it when invariants fail."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceError(f"cannot read instance file {path}: {exc}") from exc
    instance = ProblemInstance.from_dict(data)
    violations = validate_instance(instance)
    if violations:
        raise InstanceError(f"{path}: " + "; ".join(violations))
    return instance


def save_instance(instance: ProblemInstance, path: str | Path) -> None:
    """Write the instance as JSON; floats keep full round-trip precision."""
    Path(path).write_text(json.dumps(instance.to_dict(), indent=2, sort_keys=True) + "\n")
