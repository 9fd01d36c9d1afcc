"""Append-only case base with similarity retrieval.

Cases (problem descriptor, solution config, result metrics) live in a
newline-delimited JSON journal; the in-memory view is rebuilt on load.
Retrieval ranks by Euclidean distance over per-dimension z-scored
descriptors so no single dimension dominates by unit choice.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CaseBaseError, ContractViolation

CASE_SCHEMA_VERSION = 1

DEFAULT_DESCRIPTOR_NAMES = (
    "building_density_per_km2",
    "road_density_km_per_km2",
    "building_inund_ratio_pct",
    "road_inund_ratio_pct",
    "terrain_tag",
)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    descriptor: tuple[float, ...]
    solution: Mapping[str, object] = field(default_factory=dict)
    result: Mapping[str, object] = field(default_factory=dict)
    created_at: str = field(default_factory=_utc_now)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": CASE_SCHEMA_VERSION,
            "case_id": self.case_id,
            "descriptor": list(self.descriptor),
            "solution": dict(self.solution),
            "result": dict(self.result),
            "created_at": self.created_at,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "CaseRecord":
        return cls(
            case_id=raw["case_id"],
            descriptor=tuple(float(v) for v in raw["descriptor"]),
            solution=raw.get("solution", {}),
            result=raw.get("result", {}),
            created_at=raw.get("created_at", _utc_now()),
        )


class CaseBase:
    """Journal-backed store of solved cases. Single writer, many readers."""

    def __init__(self, path: str | Path, descriptor_size: int | None = None):
        self.path = Path(path)
        self.descriptor_size = descriptor_size
        self.records: list[CaseRecord] = []
        self._ids: set[str] = set()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        for lineno, line in enumerate(
                self.path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CaseBaseError(
                    f"{self.path}:{lineno}: corrupt journal line: {exc}") from exc
            record = CaseRecord.from_json_dict(raw)
            self._check_dims(record)
            if record.case_id in self._ids:
                raise CaseBaseError(
                    f"{self.path}:{lineno}: duplicate case_id {record.case_id!r}")
            self.records.append(record)
            self._ids.add(record.case_id)

    def _check_dims(self, record: CaseRecord) -> None:
        if self.descriptor_size is None:
            self.descriptor_size = len(record.descriptor)
        elif len(record.descriptor) != self.descriptor_size:
            raise CaseBaseError(
                f"case {record.case_id!r} has {len(record.descriptor)} descriptor "
                f"dimensions, schema expects {self.descriptor_size}")

    def __len__(self) -> int:
        return len(self.records)

    def retain(self, record: CaseRecord) -> None:
        """Append a case; the journal line is durable before returning."""
        if record.case_id in self._ids:
            raise ContractViolation(f"case_id {record.case_id!r} already retained")
        self._check_dims(record)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record.to_json_dict(), sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.records.append(record)
        self._ids.add(record.case_id)

    def retrieve_similar(self, probe_descriptor: Sequence[float],
                         k: int) -> list[CaseRecord]:
        """k nearest cases by z-scored Euclidean distance, ties by case_id.

        Dimensions with zero spread across the base are ignored (their
        z-score is defined as 0 for base and probe alike).
        """
        if k < 1:
            raise ContractViolation(f"k must be >= 1, got {k}")
        if not self.records:
            return []
        probe = np.asarray(probe_descriptor, dtype=np.float64)
        if probe.shape != (self.descriptor_size,):
            raise ContractViolation(
                f"probe has {probe.size} dimensions, schema expects {self.descriptor_size}")
        matrix = np.asarray([r.descriptor for r in self.records], dtype=np.float64)
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        scale = np.where(std > 0, std, np.inf)  # zero-spread dims contribute 0
        z_base = (matrix - mean) / scale
        z_probe = (probe - mean) / scale
        distances = np.linalg.norm(z_base - z_probe, axis=1)
        order = sorted(range(len(self.records)),
                       key=lambda i: (distances[i], self.records[i].case_id))
        return [self.records[i] for i in order[:k]]
