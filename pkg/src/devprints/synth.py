"""Seeded synthetic data: PyCharm/Mooshak-style event logs, Markov sessions, planted topics.

Everything here is driven by ``numpy.random.default_rng(seed)`` and produces
byte-identical output for a given seed.
"""

from __future__ import annotations

import csv
import io
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources

import numpy as np

from .eventlog import (
    LISTING_FIELDS,
    SUBMISSION_ACTIVITIES,
    Corpus,
    Vocabulary,
    format_timestamp,
    record_digest,
)
from .topics import DocTermMatrix

# (categoryName, commandName) pairs per activity; each classifies as its key under the default map.
COMMANDS: dict[str, tuple[tuple[str, str], ...]] = {
    "Editing": (
        ("EditorActions", "EditorBackSpace"), ("EditorActions", "EditorEnter"), ("EditorActions", "$Paste"),
        ("EditorActions", "$Copy"), ("EditorActions", "$Undo"), ("EditorActions", "SaveAll"),
        ("EditorActions", "CommentByLineComment"), ("EditorActions", "EditorDuplicate"),
    ),
    "Navigating": (
        ("Navigation", "GotoDeclaration"), ("Navigation", "FindInPath"), ("Navigation", "Back"),
        ("Navigation", "RecentFiles"), ("Navigation", "NextTab"), ("Navigation", "FileStructurePopup"),
    ),
    "Executing": (
        ("RunConfigurations", "RunClass"), ("RunConfigurations", "Rerun"), ("RunConfigurations", "Stop"),
        ("NavBarToolbar", "Run"),
    ),
    "Debugging": (
        ("Debugger", "Debug"), ("Debugger", "StepOver"), ("Debugger", "StepInto"),
        ("Debugger", "ToggleLineBreakpoint"), ("Debugger", "Resume"),
    ),
    "Refactoring": (
        ("RefactoringMenu", "RenameElement"), ("RefactoringMenu", "ExtractMethod"),
        ("RefactoringMenu", "Inline"), ("RefactoringMenu", "OptimizeImports"),
    ),
}
IDE_STATES = tuple(COMMANDS)
COURSES = ("Informatics", "Computer Science", "Data Science")
SYSTEMS = (("Linux", "amd64"), ("Windows 10", "amd64"), ("Mac OS X", "x86_64"))
CITIES = (("Portugal", "Braga"), ("Portugal", "Porto"), ("Portugal", "Lisbon"))
EPOCH = datetime(2019, 10, 7, 9, 0, tzinfo=timezone.utc)


@dataclass(frozen=True)
class Profile:
    """A behaviour profile: a Markov chain over IDE activities plus the commands used for each."""

    name: str
    density: float
    states: tuple[str, ...]
    start: tuple[float, ...]
    transitions: tuple[tuple[float, ...], ...]
    commands: tuple[tuple[tuple[str, str], ...], ...]

    def __post_init__(self):
        if len(self.transitions) != len(self.states) or len(self.start) != len(self.states):
            raise ValueError("profile shapes do not match its states")
        for row in (self.start, *self.transitions):
            if len(row) != len(self.states) or abs(sum(row) - 1.0) > 1e-9 or min(row) < 0:
                raise ValueError(f"profile {self.name}: rows must be probability vectors")


@dataclass(frozen=True)
class SyntheticSpec:
    participants: int = 37
    profiles: int = 19
    sessions: tuple[int, int] = (3, 6)
    session_length: int = 30
    submit_probability: float = 0.7
    planted_gap: bool = True
    top: int = 5
    bottom: int = 5
    seed: int = 0
    secret: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if self.participants < 0 or self.profiles < 1:
            raise ValueError("participants must be >= 0 and profiles >= 1")
        if not 1 <= self.sessions[0] <= self.sessions[1]:
            raise ValueError("sessions must be an increasing (min, max) pair with min >= 1")
        if self.session_length < 2:
            raise ValueError("session_length must be at least 2")


@dataclass(frozen=True)
class Participant:
    username: str
    graduation: str
    profile: str
    score: float


@dataclass(frozen=True)
class SyntheticLog:
    records: tuple[dict, ...]
    participants: tuple[Participant, ...]
    profiles: tuple[Profile, ...]

    def jsonl(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in self.records)

    def participants_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["username", "graduation", "profile", "score"])
        for p in self.participants:
            w.writerow([p.username, p.graduation, p.profile, f"{p.score:.1f}"])
        return buf.getvalue()


def make_profiles(n: int, rng: np.random.Generator) -> list[Profile]:
    """Profiles ordered from sparsest (few states, near-deterministic) to densest."""
    out = []
    densities = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
    for i, density in enumerate(densities):
        n_states = 3 + int(round(2 * density))
        states = tuple(IDE_STATES[j] for j in sorted(rng.permutation(len(IDE_STATES))[:n_states]))
        fanout = max(1, int(round(1 + density * (n_states - 1))))
        rows = []
        for s in range(n_states):
            # the first successor is the next state in a cycle so the chain is irreducible
            succ = [(s + 1) % n_states]
            others = [j for j in rng.permutation(n_states) if j != succ[0]]
            succ += others[: fanout - 1]
            weights = rng.dirichlet(np.full(len(succ), 2.0))
            row = np.zeros(n_states)
            row[succ] = weights
            rows.append(tuple(float(x) for x in row / row.sum()))
        start = np.zeros(n_states)
        start[int(rng.integers(n_states))] = 1.0
        if density > 0.5:
            start = 0.5 * start + 0.5 / n_states
        commands = []
        for s in states:
            pool = COMMANDS[s]
            size = 1 + int(rng.integers(len(pool)))
            commands.append(tuple(pool[j] for j in sorted(rng.permutation(len(pool))[:size])))
        out.append(Profile(f"P{i + 1:02d}", float(density), states, tuple(start.tolist()),
                           tuple(rows), tuple(commands)))
    return out


def _assign_profiles(spec: SyntheticSpec, scores: np.ndarray, rng: np.random.Generator) -> list[int]:
    n, m = spec.participants, spec.profiles
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    cycle = list(rng.permutation(m))
    assigned = [0] * n
    top = min(spec.top, n // 2)
    bottom = min(spec.bottom, n - top)
    for rank, i in enumerate(order):
        if spec.planted_gap and rank < top:
            assigned[i] = m - 1 - rank % min(top, m)  # densest profiles
        elif spec.planted_gap and rank >= n - bottom:
            assigned[i] = (n - 1 - rank) % min(bottom, m)  # sparsest profiles
        else:
            assigned[i] = int(cycle.pop(0)) if cycle else int(rng.integers(m))
    return assigned


def _uuid(rng: np.random.Generator) -> str:
    return str(uuid.UUID(bytes=rng.bytes(16), version=4))


def generate_log(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticLog:
    rng = np.random.default_rng(spec.seed)
    profiles = make_profiles(spec.profiles, rng)
    scores = np.round(rng.uniform(0, 100, spec.participants), 1)
    assigned = _assign_profiles(spec, scores, rng)
    participants = []
    records = []
    for i in range(spec.participants):
        username = f"{20000 + 137 * (i + 1)}"
        grad = COURSES[int(rng.integers(len(COURSES)))]
        profile = profiles[assigned[i]]
        participants.append(Participant(username, grad, profile.name, float(scores[i])))
        system, arch = SYSTEMS[int(rng.integers(len(SYSTEMS)))]
        country, city = CITIES[int(rng.integers(len(CITIES)))]
        base = {
            "username": username, "graduation": grad, "extension": "py", "platform": "PyCharm",
            "platform_branch": "PC-193", "platform_version": "2019.3.1", "java": "11.0.5",
            "os": system, "os_arch": arch, "country": country, "city": city,
        }
        n_sessions = int(rng.integers(spec.sessions[0], spec.sessions[1] + 1))
        for s in range(n_sessions):
            session_id = _uuid(rng)
            project = f"exercise-{s + 1}"
            t = EPOCH + timedelta(days=s, hours=int(rng.integers(0, 8)), minutes=i)
            length = max(2, int(rng.poisson(spec.session_length)))
            state = int(rng.choice(len(profile.states), p=profile.start))
            steps = []
            for _ in range(length):
                pool = profile.commands[state]
                steps.append(pool[int(rng.integers(len(pool)))])
                state = int(rng.choice(len(profile.states), p=profile.transitions[state]))
            if rng.random() < spec.submit_probability:
                if rng.random() < scores[i] / 100:
                    outcome = "Accepted_Answer"
                else:
                    outcome = SUBMISSION_ACTIVITIES[1 + int(rng.integers(len(SUBMISSION_ACTIVITIES) - 1))]
                steps.append(("Mooshak", outcome))
            for category, command in steps:
                t += timedelta(milliseconds=1 + int(rng.exponential(4000)))
                record = {
                    "session": session_id, "timestamp_begin": format_timestamp(t),
                    **base, "projectname": project, "filename": "main.py",
                    "categoryName": category, "commandName": command,
                }
                record = {k: record[k] for k in LISTING_FIELDS if k in record}
                record["hash"] = record_digest(record, spec.secret)
                records.append(record)
    return SyntheticLog(tuple(records), tuple(participants), tuple(profiles))


def markov_corpus(n_sessions: int = 200, length: int = 60, stay: float = 0.8, seed: int = 0,
                  states: tuple[str, str] = ("Editing", "Executing")) -> Corpus:
    """Sessions from a symmetric two-state Markov chain that stays put with probability ``stay``."""
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sessions):
        s = int(rng.integers(2))
        flips = rng.random(length) >= stay
        seq = []
        for f in flips:
            seq.append(states[s])
            s ^= int(f)
        sentences.append(tuple(seq))
    sentences = tuple(sentences)
    return Corpus(sentences, Vocabulary.from_sentences(sentences))


def english_text() -> str:
    return resources.files("devprints").joinpath("data/english_sample.txt").read_text(encoding="utf-8")


def planted_topics(seed: int = 0, n_docs: int = 60, k: int = 3, terms_per_topic: int = 10,
                   length: int = 200, purity: float = 0.9) -> tuple[DocTermMatrix, np.ndarray]:
    """Documents drawn from ``k`` disjoint uniform topics; returns the matrix and each doc's dominant topic."""
    rng = np.random.default_rng(seed)
    v = k * terms_per_topic
    phi = np.zeros((k, v))
    for j in range(k):
        phi[j, j * terms_per_topic:(j + 1) * terms_per_topic] = 1.0 / terms_per_topic
    dominant = np.arange(n_docs) % k
    theta = np.full((n_docs, k), (1 - purity) / (k - 1))
    theta[np.arange(n_docs), dominant] = purity
    counts = np.array([rng.multinomial(length, row @ phi) for row in theta], dtype=np.int64)
    terms = tuple(f"t{j // terms_per_topic}_{j % terms_per_topic}" for j in range(v))
    dtm = DocTermMatrix(counts, terms, tuple(f"d{i:03d}" for i in range(n_docs)), 1)
    return dtm, dominant
