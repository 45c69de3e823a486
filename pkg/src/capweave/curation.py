"""Benchmark curation: import initial captions, review them, export references.

State lives in an append-only JSONL event log plus a periodic snapshot;
replaying the log reconstructs every item exactly. Mutations serialize
through a single writer and apply optimistic version checks, so two
reviewers racing on the same item get exactly one accepted write and one
conflict. Imports pre-flag each caption with the anomaly detector; humans
settle everything else (sensitive content is only ever a reviewer-chosen
rejection reason).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .stats import AnomalyVerdict, detect_anomaly

STATUSES = ("pending", "approved", "edited", "rejected")
REJECTION_REASONS = ("looping", "truncated", "sensitive", "other")
DECISIONS = ("approve", "edit", "reject")
EXPORT_STATUSES = frozenset({"approved", "edited"})

EVENTS_FILE = "events.jsonl"
SNAPSHOT_FILE = "snapshot.json"
SNAPSHOT_EVERY = 200


class CurationError(ValueError):
    pass


class ImportError_(CurationError):
    """Named with a trailing underscore to avoid shadowing the builtin."""


class ValidationError(CurationError):
    pass


class NotFoundError(CurationError):
    pass


class ConflictError(CurationError):
    def __init__(self, message: str, current: "CurationItem"):
        super().__init__(message)
        self.current = current


@dataclass
class CurationItem:
    id: str
    video_id: str
    duration_s: float
    frame_refs: list[str]
    frame_timestamps: list[float]
    initial_caption: str
    pre_flag: AnomalyVerdict
    status: str = "pending"
    rejection_reason: str | None = None
    final_caption: str | None = None
    reviewer: str | None = None
    version: int = 0
    lock: dict | None = None  # {"reviewer": str, "expires_at": float}

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "video_id": self.video_id,
            "duration_s": self.duration_s,
            "frame_refs": list(self.frame_refs),
            "frame_timestamps": list(self.frame_timestamps),
            "initial_caption": self.initial_caption,
            "pre_flag": self.pre_flag.to_dict(),
            "status": self.status,
            "rejection_reason": self.rejection_reason,
            "final_caption": self.final_caption,
            "reviewer": self.reviewer,
            "version": self.version,
            "lock": dict(self.lock) if self.lock else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurationItem":
        flag = d["pre_flag"]
        return cls(
            id=d["id"],
            video_id=d["video_id"],
            duration_s=float(d["duration_s"]),
            frame_refs=list(d["frame_refs"]),
            frame_timestamps=[float(t) for t in d["frame_timestamps"]],
            initial_caption=d["initial_caption"],
            pre_flag=AnomalyVerdict(
                kind=flag["kind"],
                evidence=flag.get("evidence", ""),
                repeat_count=flag.get("repeat_count"),
            ),
            status=d["status"],
            rejection_reason=d.get("rejection_reason"),
            final_caption=d.get("final_caption"),
            reviewer=d.get("reviewer"),
            version=int(d["version"]),
            lock=d.get("lock"),
        )


@dataclass
class ReviewEvent:
    item_id: str
    actor: str
    action: str  # import | lock | review
    payload: dict
    timestamp: float
    resulting_version: int

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "actor": self.actor,
            "action": self.action,
            "payload": self.payload,
            "timestamp": self.timestamp,
            "resulting_version": self.resulting_version,
        }


def read_event_log(events_path: Path) -> Iterable[ReviewEvent]:
    if not Path(events_path).exists():
        return
    with Path(events_path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                yield ReviewEvent(
                    item_id=d["item_id"],
                    actor=d["actor"],
                    action=d["action"],
                    payload=d["payload"],
                    timestamp=d["timestamp"],
                    resulting_version=d["resulting_version"],
                )


def _apply_event(items: dict[str, CurationItem], event: ReviewEvent) -> None:
    """Pure state transition shared by the live path and log replay."""
    if event.action == "import":
        items[event.item_id] = CurationItem.from_dict(event.payload["item"])
        return
    item = items[event.item_id]
    if event.action == "lock":
        item.lock = {
            "reviewer": event.payload["reviewer"],
            "expires_at": event.payload["expires_at"],
        }
        return
    if event.action == "review":
        decision = event.payload["decision"]
        item.status = {"approve": "approved", "edit": "edited", "reject": "rejected"}[decision]
        item.reviewer = event.actor
        item.rejection_reason = event.payload.get("reason")
        if decision == "approve":
            item.final_caption = item.initial_caption
        elif decision == "edit":
            item.final_caption = event.payload["edited_caption"]
        else:
            item.final_caption = None
        item.version = event.resulting_version
        item.lock = None
        return
    raise CurationError(f"unknown event action {event.action!r}")


class CurationStore:
    """Single-node store: one mutation writer, lock-free snapshot reads."""

    def __init__(
        self,
        data_dir: Path,
        clock: Callable[[], float] = time.time,
        snapshot_every: int = SNAPSHOT_EVERY,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.snapshot_every = snapshot_every
        self._mutex = threading.RLock()
        self._items: dict[str, CurationItem] = {}
        self._event_count = 0
        self._load()

    # -- persistence ---------------------------------------------------------

    @property
    def events_path(self) -> Path:
        return self.data_dir / EVENTS_FILE

    @property
    def snapshot_path(self) -> Path:
        return self.data_dir / SNAPSHOT_FILE

    def _load(self) -> None:
        applied = 0
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            self._items = {
                d["id"]: CurationItem.from_dict(d) for d in snap["items"]
            }
            applied = int(snap["event_count"])
        for i, event in enumerate(self.read_events()):
            if i >= applied:
                _apply_event(self._items, event)
            self._event_count = i + 1

    def read_events(self) -> Iterable[ReviewEvent]:
        return read_event_log(self.events_path)

    def _append(self, events: list[ReviewEvent]) -> None:
        """Durably append, then apply; callers hold the mutex."""
        with self.events_path.open("a", encoding="utf-8") as fh:
            for e in events:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        for e in events:
            _apply_event(self._items, e)
        self._event_count += len(events)
        if self.snapshot_every and self._event_count % self.snapshot_every == 0:
            self._write_snapshot()

    def _write_snapshot(self) -> None:
        payload = json.dumps(
            {
                "event_count": self._event_count,
                "items": [i.to_dict() for i in self._items.values()],
            },
            sort_keys=True,
        )
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, self.snapshot_path)

    @staticmethod
    def replay(data_dir: Path) -> dict[str, CurationItem]:
        """Rebuild state from the event log alone (ignores any snapshot)."""
        items: dict[str, CurationItem] = {}
        for event in read_event_log(Path(data_dir) / EVENTS_FILE):
            _apply_event(items, event)
        return items

    # -- reads ----------------------------------------------------------------

    def get(self, item_id: str) -> CurationItem:
        with self._mutex:
            if item_id not in self._items:
                raise NotFoundError(f"no item {item_id!r}")
            return CurationItem.from_dict(self._items[item_id].to_dict())

    def list_items(
        self, status: str | None = None, offset: int = 0, limit: int = 50
    ) -> tuple[list[CurationItem], int]:
        with self._mutex:
            rows = [
                i for i in self._items.values() if status is None or i.status == status
            ]
            total = len(rows)
            page = [CurationItem.from_dict(i.to_dict()) for i in rows[offset: offset + limit]]
            return page, total

    def summary(self) -> dict:
        with self._mutex:
            by_status = {s: 0 for s in STATUSES}
            pre_flags = {"clean": 0, "looping": 0, "truncated": 0}
            for i in self._items.values():
                by_status[i.status] += 1
                pre_flags[i.pre_flag.kind] += 1
            return {"total": len(self._items), "by_status": by_status, "pre_flags": pre_flags}

    # -- operations -----------------------------------------------------------

    def import_items(self, manifest: Path | list[dict], frame_store: Path) -> int:
        """Validate every row, then land them atomically as pending items.

        Rows: {video_id, duration_s, initial_caption, frames} where frames
        entries are paths relative to frame_store or {path, timestamp_s}
        objects; absent timestamps default to uniform spacing over the
        duration.
        """
        rows = self._read_manifest(manifest)
        frame_store = Path(frame_store)
        problems: list[str] = []
        seen: set[str] = set()
        staged: list[CurationItem] = []
        with self._mutex:
            for n, row in enumerate(rows):
                vid = str(row.get("video_id", "")).strip()
                if not vid:
                    problems.append(f"row {n}: missing video_id")
                    continue
                if vid in seen or vid in self._items:
                    problems.append(f"row {n}: duplicate video_id {vid!r}")
                    continue
                seen.add(vid)
                refs, stamps, missing = self._resolve_frames(row, frame_store)
                if missing:
                    problems.append(f"row {n} ({vid}): missing frames {missing}")
                    continue
                caption = str(row.get("initial_caption", ""))
                staged.append(
                    CurationItem(
                        id=vid,
                        video_id=vid,
                        duration_s=float(row["duration_s"]),
                        frame_refs=refs,
                        frame_timestamps=stamps,
                        initial_caption=caption,
                        pre_flag=detect_anomaly(caption),
                    )
                )
            if problems:
                raise ImportError_(
                    "import rejected, nothing written: " + "; ".join(problems)
                )
            now = self.clock()
            events = [
                ReviewEvent(
                    item_id=item.id,
                    actor="importer",
                    action="import",
                    payload={"item": item.to_dict()},
                    timestamp=now,
                    resulting_version=0,
                )
                for item in staged
            ]
            self._append(events)
            return len(staged)

    @staticmethod
    def _read_manifest(manifest: Path | list[dict]) -> list[dict]:
        if isinstance(manifest, (str, Path)):
            rows = []
            for line in Path(manifest).read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rows.append(json.loads(line))
            return rows
        return list(manifest)

    @staticmethod
    def _resolve_frames(
        row: dict, frame_store: Path
    ) -> tuple[list[str], list[float], list[str]]:
        refs: list[str] = []
        stamps: list[float] = []
        missing: list[str] = []
        frames = row.get("frames", [])
        duration = float(row.get("duration_s", 0))
        for k, entry in enumerate(frames):
            if isinstance(entry, dict):
                rel, ts = str(entry["path"]), entry.get("timestamp_s")
            else:
                rel, ts = str(entry), None
            if ts is None:
                ts = duration * k / len(frames) if frames else 0.0
            path = frame_store / rel
            if not path.exists():
                missing.append(rel)
            refs.append(str(path))
            stamps.append(float(ts))
        return refs, stamps, missing

    def next_item(self, reviewer: str, lock_ttl_s: float = 300.0) -> CurationItem | None:
        """Oldest pending item without a live lock; places a soft lock."""
        with self._mutex:
            now = self.clock()
            for item in self._items.values():
                if item.status != "pending":
                    continue
                if item.lock and item.lock["expires_at"] > now:
                    continue
                event = ReviewEvent(
                    item_id=item.id,
                    actor=reviewer,
                    action="lock",
                    payload={"reviewer": reviewer, "expires_at": now + lock_ttl_s},
                    timestamp=now,
                    resulting_version=item.version,
                )
                self._append([event])
                return self.get(item.id)
            return None

    def submit_review(
        self,
        item_id: str,
        decision: str,
        edited_caption: str | None = None,
        reason: str | None = None,
        expected_version: int = 0,
        actor: str = "",
    ) -> CurationItem:
        """Apply a review decision iff expected_version matches the stored one."""
        if decision not in DECISIONS:
            raise ValidationError(f"unknown decision {decision!r}")
        if not actor:
            raise ValidationError("actor is required")
        with self._mutex:
            if item_id not in self._items:
                raise NotFoundError(f"no item {item_id!r}")
            item = self._items[item_id]
            self._validate_payload(item, decision, edited_caption, reason)
            if item.version != expected_version:
                raise ConflictError(
                    f"version mismatch: expected {expected_version}, stored {item.version}",
                    current=self.get(item_id),
                )
            event = ReviewEvent(
                item_id=item_id,
                actor=actor,
                action="review",
                payload={
                    "decision": decision,
                    "edited_caption": edited_caption,
                    "reason": reason,
                },
                timestamp=self.clock(),
                resulting_version=item.version + 1,
            )
            self._append([event])
            return self.get(item_id)

    @staticmethod
    def _validate_payload(
        item: CurationItem, decision: str, edited_caption: str | None, reason: str | None
    ) -> None:
        if decision == "reject":
            if reason not in REJECTION_REASONS:
                raise ValidationError(
                    f"reject needs a reason from {REJECTION_REASONS}, got {reason!r}"
                )
        elif reason is not None:
            raise ValidationError(f"{decision} must not carry a rejection reason")
        if decision == "edit":
            if not edited_caption or not edited_caption.strip():
                raise ValidationError("edit needs a nonempty edited_caption")
            if edited_caption == item.initial_caption:
                raise ValidationError("edited caption is identical to the initial caption")
        elif edited_caption is not None:
            raise ValidationError(f"{decision} must not carry an edited_caption")

    def export_bench(self, statuses: frozenset[str] | set[str] = EXPORT_STATUSES) -> str:
        """JSONL of human-confirmed references, sorted by video_id, byte-stable."""
        bad = set(statuses) - set(STATUSES)
        if bad:
            raise ValidationError(f"unknown statuses {sorted(bad)}")
        with self._mutex:
            rows = [
                {
                    "video_id": i.video_id,
                    "duration_s": i.duration_s,
                    "reference_caption": i.final_caption,
                }
                for i in self._items.values()
                if i.status in statuses and i.final_caption is not None
            ]
        rows.sort(key=lambda r: r["video_id"])
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
