"""Event log ingestion: parsing, tamper checks, deduplication, recoding and sessionizing.

Input records follow the PyCharm plugin export format, for example::

    {"session": "c51973e3-...", "timestamp_begin": "2020-09-18T09:00:06.054Z",
     "username": "87788", "categoryName": "NavBarToolbar", "commandName": "Run",
     ..., "hash": "0000a3a2cf78485419f15d7913789b16"}

Every field other than ``hash`` is kept on the event as an ordered attribute.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("session", "timestamp_begin", "username", "categoryName", "commandName")
LISTING_FIELDS = (
    "session", "timestamp_begin", "username", "graduation", "projectname", "filename",
    "extension", "categoryName", "commandName", "platform", "platform_branch",
    "platform_version", "java", "os", "os_arch", "country", "city", "hash",
)

IDE_ACTIVITIES = ("Editing", "Navigating", "Debugging", "Refactoring", "Executing", "Spurious")
SUBMISSION_ACTIVITIES = (
    "Accepted_Answer", "Wrong_Answer", "Compile_Time_Error",
    "Invalid_Submission", "Runtime_Error", "Time_Limit_Exceeded",
)
ACTIVITY_LABELS = IDE_ACTIVITIES + SUBMISSION_ACTIVITIES

LEVEL_FIELDS = {"command": "commandName", "category": "categoryName"}

# A record made of this single key carries provenance (tool, seed, config digest) and is skipped on load.
META_KEY = "_meta"


class ParseError(ValueError):
    """Malformed JSON input. ``offset`` is the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class LogValidationError(ValueError):
    pass


@dataclass(frozen=True)
class RecordError:
    index: int
    message: str


@dataclass(frozen=True)
class Event:
    activity_name: str
    case_id: str
    timestamp: datetime
    attributes: tuple[tuple[str, str], ...]
    hash: str | None = None
    seq: int = field(default=0, compare=False)

    def get(self, name: str, default: str | None = None) -> str | None:
        for key, value in self.attributes:
            if key == name:
                return value
        return default

    @property
    def command(self) -> str | None:
        return self.get("commandName")

    @property
    def category(self) -> str | None:
        return self.get("categoryName")


@dataclass(frozen=True)
class Session:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"session {self.case_id!r} has no events")

    def __len__(self) -> int:
        return len(self.events)

    def tokens(self, level: str = "activity") -> tuple[str, ...]:
        return tuple(event_token(e, level) for e in self.events)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    level: str = "activity"

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be distinct")

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sequence[str]], level: str = "activity") -> "Vocabulary":
        return cls(tuple(sorted({t for s in sentences for t in s})), level)

    def index(self, token: str) -> int:
        return self.tokens.index(token)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.tokens

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)


@dataclass(frozen=True)
class Corpus:
    """Token sentences, one per session, plus the vocabulary they span."""

    sentences: tuple[tuple[str, ...], ...]
    vocabulary: Vocabulary
    case_ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[tuple[str, ...]]:
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class EventLog:
    sessions: tuple[Session, ...]
    case_key: str = "username"
    errors: tuple[RecordError, ...] = ()

    def events(self) -> list[Event]:
        """All events in original input order."""
        return sorted((e for s in self.sessions for e in s.events), key=lambda e: e.seq)

    def __len__(self) -> int:
        return sum(len(s) for s in self.sessions)

    @property
    def case_ids(self) -> tuple[str, ...]:
        return tuple(s.case_id for s in self.sessions)

    def session(self, case_id: str) -> Session:
        for s in self.sessions:
            if s.case_id == case_id:
                return s
        raise KeyError(case_id)

    def vocabulary(self, level: str = "activity") -> Vocabulary:
        return Vocabulary.from_sentences((s.tokens(level) for s in self.sessions), level)


@dataclass(frozen=True)
class TamperReport:
    verdicts: tuple[tuple[int, str], ...]

    @property
    def counts(self) -> dict[str, int]:
        out = {"ok": 0, "hash-mismatch": 0, "hash-missing": 0}
        for _, verdict in self.verdicts:
            out[verdict] += 1
        return out

    @property
    def tampered(self) -> int:
        return self.counts["hash-mismatch"]


# -- parsing -----------------------------------------------------------------


def parse_timestamp(value: str) -> datetime:
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=(ts.microsecond // 1000) * 1000)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def _as_text(value) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, separators=(",", ":"), sort_keys=True)


def _is_meta(record) -> bool:
    return isinstance(record, dict) and set(record) == {META_KEY}


def _load_records(data: bytes | str) -> list:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, len(text[: exc.pos].encode("utf-8"))) from None
        if not isinstance(records, list):
            raise ParseError("expected a JSON array", 0)
        return [r for r in records if not _is_meta(r)]
    records = []
    offset = 0
    for line in text.splitlines(keepends=True):
        if line.strip():
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, offset + len(line[: exc.pos].encode("utf-8"))) from None
        offset += len(line.encode("utf-8"))
    return [r for r in records if not _is_meta(r)]


def _record_to_event(record, seq: int, case_key: str) -> Event:
    if not isinstance(record, dict):
        raise LogValidationError("record is not a JSON object")
    missing = [f for f in REQUIRED_FIELDS if record.get(f) in (None, "")]
    if case_key not in REQUIRED_FIELDS and record.get(case_key) in (None, ""):
        missing.append(case_key)
    if missing:
        raise LogValidationError(f"missing required field(s): {', '.join(missing)}")
    try:
        ts = parse_timestamp(str(record["timestamp_begin"]))
    except ValueError:
        raise LogValidationError(f"bad timestamp_begin {record['timestamp_begin']!r}") from None
    attributes = tuple((k, _as_text(v)) for k, v in record.items() if k != "hash")
    digest = record.get("hash")
    return Event(
        activity_name=_as_text(record["commandName"]),
        case_id=_as_text(record[case_key]),
        timestamp=ts,
        attributes=attributes,
        hash=None if digest in (None, "") else str(digest),
        seq=seq,
    )


def _group(events: Iterable[Event], case_key: str) -> tuple[Session, ...]:
    buckets: dict[str, list[Event]] = defaultdict(list)
    for e in events:
        buckets[e.case_id].append(e)
    return tuple(
        Session(cid, tuple(sorted(evs, key=lambda e: (e.timestamp, e.seq))))
        for cid, evs in sorted(buckets.items())
    )


def parse_events(data: bytes | str, case_key: str = "username") -> EventLog:
    """Parse a JSON array or JSON-lines stream of event records.

    Records missing a required field are skipped and reported in
    ``EventLog.errors``; if every record is bad a ``LogValidationError``
    is raised.
    """
    records = _load_records(data)
    events, errors = [], []
    for i, record in enumerate(records):
        try:
            events.append(_record_to_event(record, i, case_key))
        except LogValidationError as exc:
            errors.append(RecordError(i, str(exc)))
    if records and not events:
        raise LogValidationError(f"all {len(records)} records are invalid; first: {errors[0].message}")
    return EventLog(_group(events, case_key), case_key, tuple(errors))


def read_log(path: str | Path, case_key: str = "username") -> EventLog:
    return parse_events(Path(path).read_bytes(), case_key)


def merge_logs(logs: Sequence[EventLog]) -> EventLog:
    """Concatenate logs in the given order; events are renumbered so input order is preserved."""
    if not logs:
        raise ValueError("nothing to merge")
    case_key = logs[0].case_key
    if any(log.case_key != case_key for log in logs):
        raise ValueError("logs were grouped by different case keys")
    events, errors, offset = [], [], 0
    for log in logs:
        own = log.events()
        events += [replace(e, seq=offset + i) for i, e in enumerate(own)]
        errors += [replace(err, index=offset + err.index) for err in log.errors]
        offset += len(own) + len(log.errors)
    return EventLog(_group(events, case_key), case_key, tuple(errors))


# -- tamper detection ----------------------------------------------------------


def canonical_bytes(fields: Iterable[tuple[str, str]]) -> bytes:
    """``key=value`` pairs of all non-hash fields, sorted by key, joined by ``|``."""
    parts = sorted((k, v) for k, v in fields if k != "hash")
    return "|".join(f"{k}={v}" for k, v in parts).encode("utf-8")


def record_digest(record: dict, secret: bytes = b"") -> str:
    fields = ((k, _as_text(v)) for k, v in record.items())
    return hashlib.md5(secret + canonical_bytes(fields)).hexdigest()


def event_digest(event: Event, secret: bytes = b"") -> str:
    return hashlib.md5(secret + canonical_bytes(event.attributes)).hexdigest()


def verify_hashes(log: EventLog, secret: bytes = b"") -> TamperReport:
    verdicts = []
    for e in log.events():
        if e.hash is None:
            verdict = "hash-missing"
        elif e.hash.lower() == event_digest(e, secret):
            verdict = "ok"
        else:
            verdict = "hash-mismatch"
        verdicts.append((e.seq, verdict))
    return TamperReport(tuple(verdicts))


# -- cleaning --------------------------------------------------------------------


def dedupe(log: EventLog) -> EventLog:
    """Keep the first event (in input order) for each (username, timestamp) key."""
    seen = set()
    kept = []
    for e in log.events():
        key = (e.get("username", e.case_id), e.timestamp)
        if key in seen:
            continue
        seen.add(key)
        kept.append(e)
    return replace(log, sessions=_group(kept, log.case_key))


@dataclass(frozen=True)
class ActivityRule:
    pattern_field: str
    pattern: str
    activity: str

    def matches(self, event: Event) -> bool:
        value = event.get(self.pattern_field)
        return value is not None and re.search(self.pattern, value) is not None


@dataclass(frozen=True)
class ActivityMap:
    """Ordered regex rules mapping command/category names to activity labels.

    Rules are tried in order and the first match wins; unmatched events get
    ``default``.  Patterns use ``re.search`` semantics.
    """

    rules: tuple[ActivityRule, ...]
    default: str = "Spurious"

    def __post_init__(self):
        if not self.rules:
            raise ValueError("activity map needs at least one rule")
        for label in [r.activity for r in self.rules] + [self.default]:
            if label not in ACTIVITY_LABELS:
                raise ValueError(f"unknown activity label {label!r}")
        for r in self.rules:
            re.compile(r.pattern)

    def classify(self, event: Event) -> str:
        for rule in self.rules:
            if rule.matches(event):
                return rule.activity
        return self.default

    @classmethod
    def from_csv(cls, path: str | Path) -> "ActivityMap":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple(ActivityRule(r["pattern_field"], r["pattern"], r["activity"]) for r in rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pattern_field", "pattern", "activity"])
        for r in self.rules:
            w.writerow([r.pattern_field, r.pattern, r.activity])
        return buf.getvalue()


_DEFAULT_RULES = [("commandName", f"^{label}$", label) for label in SUBMISSION_ACTIVITIES] + [
    ("commandName", r"(?i)debug|breakpoint|step ?(over|into|out)|resume|evaluate", "Debugging"),
    ("commandName", r"(?i)refactor|rename|extract|inline|move|change ?signature|optimi[sz]e ?imports|reformat",
     "Refactoring"),
    ("commandName", r"(?i)^run|rerun|execute|^stop|test|console", "Executing"),
    ("commandName", r"(?i)go ?to|navigat|find|search|^back$|^forward$|select ?in|recent|structure|"
                    r"scroll|switch|tab|project ?view|^open|^close", "Navigating"),
    ("commandName", r"(?i)edit|typ|paste|copy|cut|delete|backspace|undo|redo|save|comment|complet|"
                    r"indent|duplicate|enter|insert|format", "Editing"),
    ("categoryName", r"(?i)debug", "Debugging"),
    ("categoryName", r"(?i)refactor", "Refactoring"),
    ("categoryName", r"(?i)run|execut", "Executing"),
    ("categoryName", r"(?i)editor|edit", "Editing"),
    ("categoryName", r"(?i)nav|search|find|project|window|tool", "Navigating"),
]

DEFAULT_ACTIVITY_MAP = ActivityMap(tuple(ActivityRule(*r) for r in _DEFAULT_RULES))


def recode_activities(log: EventLog, activity_map: ActivityMap = DEFAULT_ACTIVITY_MAP) -> EventLog:
    sessions = tuple(
        Session(s.case_id, tuple(replace(e, activity_name=activity_map.classify(e)) for e in s.events))
        for s in log.sessions
    )
    return replace(log, sessions=sessions)


def sessionize(log: EventLog, case_key: str = "username") -> list[Session]:
    """Regroup the log's events into one session per value of ``case_key``.

    Events are ordered by timestamp with input order breaking ties.
    """
    events = log.events()
    keyed = []
    for e in events:
        value = e.get(case_key)
        if value is None:
            raise LogValidationError(
                f"event #{e.seq} ({e.command} at {format_timestamp(e.timestamp)}) has no {case_key!r} attribute"
            )
        keyed.append(replace(e, case_id=value))
    return list(_group(keyed, case_key))


def event_token(event: Event, level: str) -> str:
    if level == "activity":
        return event.activity_name
    try:
        name = LEVEL_FIELDS[level]
    except KeyError:
        raise ValueError(f"unknown level {level!r}; expected command, category or activity") from None
    value = event.get(name)
    if value is None:
        raise LogValidationError(f"event #{event.seq} has no {name!r} attribute")
    return value


def to_sentences(sessions: Sequence[Session], level: str = "activity") -> Corpus:
    sentences = tuple(s.tokens(level) for s in sessions)
    return Corpus(sentences, Vocabulary.from_sentences(sentences, level), tuple(s.case_id for s in sessions))


# -- canonical output ------------------------------------------------------------------

CSV_COLUMNS = ("case_id", "timestamp", "activity", "command", "category")


def event_to_json(event: Event) -> dict:
    out = {
        "case_id": event.case_id,
        "timestamp": format_timestamp(event.timestamp),
        "activity": event.activity_name,
        "attributes": dict(event.attributes),
    }
    if event.hash is not None:
        out["hash"] = event.hash
    return out


def dumps_jsonl(log: EventLog) -> str:
    """Canonical JSON-lines: one event object per line, sessions sorted by case id."""
    lines = [
        json.dumps(event_to_json(e), ensure_ascii=False, separators=(",", ":"))
        for s in log.sessions
        for e in s.events
    ]
    return "".join(line + "\n" for line in lines)


def dumps_csv(log: EventLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in log.sessions:
        for e in s.events:
            w.writerow([e.case_id, format_timestamp(e.timestamp), e.activity_name, e.command or "", e.category or ""])
    return buf.getvalue()


def loads_jsonl(text: str, case_key: str | None = None) -> EventLog:
    """Read a canonical log written by ``dumps_jsonl``.

    With ``case_key`` set, events are regrouped by that attribute.
    """
    events = []
    objects = (json.loads(line) for line in text.splitlines() if line.strip())
    for i, obj in enumerate(o for o in objects if not _is_meta(o)):
        attrs = tuple((k, _as_text(v)) for k, v in obj.get("attributes", {}).items())
        events.append(Event(obj["activity"], obj["case_id"], parse_timestamp(obj["timestamp"]),
                            attrs, obj.get("hash"), seq=i))
    log = EventLog(_group(events, "case_id"), case_key or "case_id")
    if case_key is not None:
        log = replace(log, sessions=tuple(sessionize(log, case_key)))
    return log
