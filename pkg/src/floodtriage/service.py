"""Label-triage HTTP service: metric-sorted tiles, verdicts, manifest export.

Verdicts append to an NDJSON journal (one line per verdict, durable before
the response); the current verdict per tile is the last journal entry for
it, and replaying the journal reproduces the manifest byte-identically.
"""

from __future__ import annotations

import io
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .analysis import ErrorType
from .masks import FLOOD_CHANNELS, flood_overlay_rgba, read_mask, sidecar_path
from .metrics import SCORE_METRICS, ScoreRecord

MANIFEST_SCHEMA_VERSION = 1
VERDICT_SCHEMA_VERSION = 1

VALID_STATUSES = ("ok", "mislabeled", "ambiguous")
VALID_ERROR_TYPES = tuple(e.value for e in ErrorType)

SORTABLE = ("tile_id",) + SCORE_METRICS


@dataclass(frozen=True)
class Verdict:
    tile_id: str
    status: str
    error_type: str | None
    note: str
    annotator: str
    timestamp: str
    seq: int

    def to_json_dict(self) -> dict:
        return {
            "schema_version": VERDICT_SCHEMA_VERSION,
            "seq": self.seq,
            "tile_id": self.tile_id,
            "status": self.status,
            "error_type": self.error_type,
            "note": self.note,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }


class VerdictRequest(BaseModel):
    status: Literal["ok", "mislabeled", "ambiguous"]
    error_type: Optional[Literal[
        "target_omission", "spatial_confusion",
        "missing_information", "inherent_inaccuracy"]] = None
    note: str = ""
    annotator: str


class TriageStore:
    """All serve-time state: scores, flags, tags, verdict journal."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.dataset_id = self._read_dataset_id()
        self.scores = self._read_scores()
        self.tile_ids = sorted(self.scores)
        self.flagged = self._read_flagged()
        self.tags = self._read_tags()
        self.splits = self._read_splits()
        self.journal_path = self.data_dir / "triage" / "verdicts.ndjson"
        self.history: dict[str, list[Verdict]] = {}
        self._seq = 0
        self._write_lock = threading.Lock()
        self._replay_journal()

    # -- loading ---------------------------------------------------------

    def _read_dataset_id(self) -> str:
        meta = self.data_dir / "dataset.json"
        if meta.exists():
            return json.loads(meta.read_text(encoding="utf-8")).get(
                "dataset_id", self.data_dir.name)
        return self.data_dir.name

    def _read_scores(self) -> dict[str, ScoreRecord]:
        scores_dir = self.data_dir / "scores"
        records: dict[str, ScoreRecord] = {}
        if scores_dir.is_dir():
            for path in sorted(scores_dir.glob("*.json")):
                record = ScoreRecord.from_json_dict(
                    json.loads(path.read_text(encoding="utf-8")))
                records[record.tile_id] = record
        return records

    def _read_flagged(self) -> set[str]:
        path = self.data_dir / "analysis" / "badcases.json"
        if not path.exists():
            return set()
        return set(json.loads(path.read_text(encoding="utf-8")).get("combined", []))

    def _read_tags(self) -> dict[str, list[str]]:
        path = self.data_dir / "analysis" / "tags.json"
        if not path.exists():
            return {}
        return {k: list(v) for k, v in
                json.loads(path.read_text(encoding="utf-8")).items()}

    def _read_splits(self) -> dict[str, str]:
        path = self.data_dir / "splits.json"
        if not path.exists():
            return {}
        raw = json.loads(path.read_text(encoding="utf-8"))
        splits = {}
        for name in ("train", "val"):
            for tid in raw.get(name, []):
                splits[tid] = name
        return splits

    def _replay_journal(self) -> None:
        if not self.journal_path.exists():
            return
        for line in self.journal_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            verdict = Verdict(
                tile_id=raw["tile_id"], status=raw["status"],
                error_type=raw.get("error_type"), note=raw.get("note", ""),
                annotator=raw.get("annotator", ""), timestamp=raw["timestamp"],
                seq=raw["seq"])
            self.history.setdefault(verdict.tile_id, []).append(verdict)
            self._seq = max(self._seq, verdict.seq)

    # -- verdicts ---------------------------------------------------------

    def current_verdict(self, tile_id: str) -> Verdict | None:
        entries = self.history.get(tile_id)
        return entries[-1] if entries else None

    def record_verdict(self, tile_id: str, request: VerdictRequest) -> Verdict:
        with self._write_lock:
            self._seq += 1
            verdict = Verdict(
                tile_id=tile_id, status=request.status,
                error_type=request.error_type, note=request.note,
                annotator=request.annotator,
                timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
                seq=self._seq)
            self.journal_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.journal_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(verdict.to_json_dict(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.history.setdefault(tile_id, []).append(verdict)
        return verdict

    # -- views ------------------------------------------------------------

    def tile_summary(self, tile_id: str) -> dict:
        record = self.scores[tile_id]
        worst_name, worst_value = None, None
        for metric in SCORE_METRICS:
            value = record.value(metric)
            if value is not None and (worst_value is None or value < worst_value):
                worst_name, worst_value = metric, value
        verdict = self.current_verdict(tile_id)
        return {
            "tile_id": tile_id,
            "scores": {m: record.value(m) for m in SCORE_METRICS},
            "worst_metric": {"name": worst_name, "value": worst_value},
            "flagged": tile_id in self.flagged,
            "verdict": verdict.to_json_dict() if verdict else None,
        }

    def manifest(self) -> dict:
        included, excluded = [], []
        for tile_id in self.tile_ids:
            split = self.splits.get(tile_id)
            verdict = self.current_verdict(tile_id)
            if verdict is not None and verdict.status == "mislabeled":
                excluded.append({"tile_id": tile_id, "split": split,
                                 "reason": "mislabeled",
                                 "error_type": verdict.error_type})
            else:
                included.append({"tile_id": tile_id, "split": split})
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "dataset_id": self.dataset_id,
            "included": included,
            "excluded": excluded,
            "counts": {
                "total": len(self.tile_ids),
                "included": len(included),
                "excluded": len(excluded),
            },
        }


def manifest_to_json_bytes(manifest: dict) -> bytes:
    """Canonical manifest serialization (stable bytes for identical state)."""
    return (json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n").encode()


def _asset_url(root: Path, relative: str) -> str | None:
    return f"/assets/{relative}" if (root / relative).exists() else None


def create_app(data_dir: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    store = TriageStore(data_dir)
    app = FastAPI(title="floodtriage", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.get("/api/meta")
    def meta() -> dict:
        return {
            "dataset_id": store.dataset_id,
            "total_tiles": len(store.tile_ids),
            "metrics": list(SCORE_METRICS),
            "statuses": list(VALID_STATUSES),
            "error_types": list(VALID_ERROR_TYPES),
        }

    @app.get("/api/tiles")
    def list_tiles(sort: str = "tile_id", order: str = "asc",
                   flagged: bool | None = None,
                   page: int = Query(default=1, ge=1),
                   page_size: int = Query(default=50, ge=1, le=500)) -> dict:
        if sort not in SORTABLE:
            raise HTTPException(
                status_code=400,
                detail={"error": f"unknown sort metric {sort!r}",
                        "valid_metrics": list(SORTABLE)})
        if order not in ("asc", "desc"):
            raise HTTPException(status_code=400,
                                detail={"error": f"order must be asc|desc, got {order!r}"})
        tile_ids = [t for t in store.tile_ids
                    if flagged is None or (t in store.flagged) == flagged]
        if sort != "tile_id":
            sign = 1.0 if order == "asc" else -1.0

            def key(tid: str):
                value = store.scores[tid].value(sort)
                return (value is None, sign * value if value is not None else 0.0, tid)
            tile_ids.sort(key=key)
        elif order == "desc":
            tile_ids.reverse()

        start = (page - 1) * page_size
        selected = tile_ids[start:start + page_size]
        return {
            "tiles": [store.tile_summary(t) for t in selected],
            "total": len(tile_ids),
            "page": page,
            "page_size": page_size,
            "sort": sort,
            "order": order,
        }

    @app.get("/api/tiles/{tile_id}")
    def tile_detail(tile_id: str) -> dict:
        if tile_id not in store.scores:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        detail = store.tile_summary(tile_id)
        reference = sidecar_path(store.data_dir / "masks" / "reference", tile_id)
        prediction = sidecar_path(store.data_dir / "masks" / "prediction", tile_id)
        detail.update({
            "pre_image_url": _asset_url(store.data_dir, f"images/{tile_id}.pre.png"),
            "post_image_url": _asset_url(store.data_dir, f"images/{tile_id}.post.png"),
            "reference_overlay_url":
                f"/api/tiles/{tile_id}/overlay/reference.png" if reference.exists() else None,
            "prediction_overlay_url":
                f"/api/tiles/{tile_id}/overlay/prediction.png" if prediction.exists() else None,
            "heuristic_tags": store.tags.get(tile_id, []),
            "verdict_history": [v.to_json_dict()
                                for v in store.history.get(tile_id, [])],
        })
        return detail

    @app.get("/api/tiles/{tile_id}/overlay/{kind}.png")
    def overlay(tile_id: str, kind: str, channels: str | None = None) -> Response:
        """Colorized flood-mask overlay; ``channels`` limits to a subset so
        the UI can stack per-channel layers."""
        if tile_id not in store.scores:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        if kind not in ("reference", "prediction"):
            raise HTTPException(status_code=404, detail=f"unknown overlay kind {kind!r}")
        mask_path = sidecar_path(store.data_dir / "masks" / kind, tile_id)
        if not mask_path.exists():
            raise HTTPException(status_code=404,
                                detail=f"no {kind} mask for tile {tile_id!r}")
        wanted = None
        if channels is not None:
            wanted = tuple(c for c in channels.split(",") if c)
            unknown = set(wanted) - set(FLOOD_CHANNELS)
            if unknown:
                raise HTTPException(
                    status_code=400,
                    detail={"error": f"unknown channels {sorted(unknown)}",
                            "valid_channels": list(FLOOD_CHANNELS)})
        rgba = flood_overlay_rgba(read_mask(mask_path), channels=wanted)
        buf = io.BytesIO()
        Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/tiles/{tile_id}/verdict")
    def post_verdict(tile_id: str, request: VerdictRequest) -> dict:
        if tile_id not in store.scores:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        if request.status == "mislabeled" and request.error_type is None:
            raise HTTPException(
                status_code=422,
                detail="a mislabeled verdict requires an error_type")
        verdict = store.record_verdict(tile_id, request)
        return verdict.to_json_dict()

    @app.get("/api/export/manifest")
    def export_manifest() -> Response:
        return Response(content=manifest_to_json_bytes(store.manifest()),
                        media_type="application/json")

    assets = store.data_dir
    if assets.is_dir():
        app.mount("/assets", StaticFiles(directory=assets), name="assets")
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
