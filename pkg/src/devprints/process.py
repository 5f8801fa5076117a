"""Directly-follows discovery, Petri-net conversion and token-replay quality metrics.

Net construction (one labeled transition per activity ``a``)::

    source -> (tau start a) -> [in a] -> (a) -> [out a] -> (tau a>b) -> [in b] -> (b) -> [out b] -> (tau end b) -> sink

Every activity owns an input and an output place; every DFG edge ``a>b`` is a
silent transition moving the token from ``out a`` to ``in b``.  The result is
a state machine whose language is exactly the DFG's set of start-to-end paths.
"""

from __future__ import annotations

import json
import logging
import random
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .eventlog import EventLog, Session

logger = logging.getLogger(__name__)

END = "⊣end"  # pseudo-activity: the trace may stop here
MAX_SILENT_HOPS = 10

Trace = Sequence[str]


def _as_traces(log) -> list[tuple[str, ...]]:
    out = []
    for t in log:
        out.append(t.tokens("activity") if isinstance(t, Session) else tuple(t))
    return out


# -- directly-follows graph -------------------------------------------------------------


@dataclass(frozen=True)
class Dfg:
    activities: dict[str, int]
    edges: dict[tuple[str, str], int]
    starts: dict[str, int]
    ends: dict[str, int]

    def successors(self, a: str) -> list[str]:
        return sorted(b for (x, b) in self.edges if x == a)

    def to_csv(self) -> str:
        lines = ["source,target,frequency"]
        lines += [f"{a},{b},{n}" for (a, b), n in sorted(self.edges.items())]
        return "\n".join(lines) + "\n"


def discover_dfg(log: Iterable[Session | Trace]) -> Dfg:
    traces = [t for t in _as_traces(log) if t]
    if not traces:
        raise ValueError("cannot discover a DFG from an empty log")
    acts, edges, starts, ends = Counter(), Counter(), Counter(), Counter()
    for t in traces:
        acts.update(t)
        edges.update(zip(t, t[1:]))
        starts[t[0]] += 1
        ends[t[-1]] += 1
    return Dfg(dict(sorted(acts.items())), dict(sorted(edges.items())),
               dict(sorted(starts.items())), dict(sorted(ends.items())))


def filter_dfg(dfg: Dfg, min_edge_frequency: int = 1) -> Dfg:
    """Drop edges seen fewer than ``min_edge_frequency`` times (1 keeps everything)."""
    edges = {e: n for e, n in dfg.edges.items() if n >= min_edge_frequency}
    return Dfg(dfg.activities, edges, dfg.starts, dfg.ends)


# -- Petri nets ------------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    name: str
    label: str | None = None  # None marks a silent transition

    @property
    def silent(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class PetriNet:
    places: tuple[str, ...]
    transitions: tuple[Transition, ...]
    arcs: tuple[tuple[str, str], ...]
    initial: str = "source"
    final: str = "sink"
    _pre: dict = field(default_factory=dict, compare=False, repr=False)
    _post: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        places = set(self.places)
        names = {t.name for t in self.transitions}
        if len(places) != len(self.places) or len(names) != len(self.transitions):
            raise ValueError("duplicate place or transition name")
        if places & names:
            raise ValueError("places and transitions must have distinct names")
        if self.initial not in places or self.final not in places:
            raise ValueError("initial and final markings must name places")
        for src, dst in self.arcs:
            if not ((src in places and dst in names) or (src in names and dst in places)):
                raise ValueError(f"arc {src}->{dst} does not connect a place and a transition")
        for t in self.transitions:
            self._pre[t.name] = tuple(sorted(p for p, x in self.arcs if x == t.name))
            self._post[t.name] = tuple(sorted(p for x, p in self.arcs if x == t.name))

    def pre(self, t: Transition) -> tuple[str, ...]:
        return self._pre[t.name]

    def post(self, t: Transition) -> tuple[str, ...]:
        return self._post[t.name]

    @property
    def visible(self) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if not t.silent)

    @property
    def silent(self) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.silent)

    def by_label(self, label: str) -> Transition | None:
        for t in self.transitions:
            if t.label == label:
                return t
        return None

    def degrees(self) -> dict[str, int]:
        deg = Counter({n: 0 for n in self.places})
        deg.update({t.name: 0 for t in self.transitions})
        for src, dst in self.arcs:
            deg[src] += 1
            deg[dst] += 1
        return dict(deg)

    def is_bipartite(self) -> bool:
        places = set(self.places)
        return all((s in places) != (d in places) for s, d in self.arcs)

    def to_dot(self, name: str = "net") -> str:
        lines = [f'digraph "{name}" {{', "  rankdir=LR;"]
        for p in self.places:
            shape = "doublecircle" if p in (self.initial, self.final) else "circle"
            lines.append(f'  "{p}" [shape={shape}, label=""];')
        for t in self.transitions:
            if t.silent:
                lines.append(f'  "{t.name}" [shape=box, style=filled, fillcolor=black, label="", width=0.15];')
            else:
                lines.append(f'  "{t.name}" [shape=box, label="{t.label}"];')
        lines += [f'  "{s}" -> "{d}";' for s, d in self.arcs]
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        """``{"places": [...], "transitions": [{"name", "label"}], "arcs": [[src, dst]],
        "initial_marking": {place: 1}, "final_marking": {place: 1}}``"""
        return {
            "places": list(self.places),
            "transitions": [{"name": t.name, "label": t.label} for t in self.transitions],
            "arcs": [list(a) for a in self.arcs],
            "initial_marking": {self.initial: 1},
            "final_marking": {self.final: 1},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PetriNet":
        (initial,) = obj["initial_marking"]
        (final,) = obj["final_marking"]
        return cls(
            tuple(obj["places"]),
            tuple(Transition(t["name"], t["label"]) for t in obj["transitions"]),
            tuple(tuple(a) for a in obj["arcs"]),
            initial, final,
        )


def _reaches_end(dfg: Dfg) -> set[str]:
    ok = set(dfg.ends)
    frontier = deque(ok)
    preds: dict[str, list[str]] = {}
    for a, b in dfg.edges:
        preds.setdefault(b, []).append(a)
    while frontier:
        b = frontier.popleft()
        for a in preds.get(b, ()):
            if a not in ok:
                ok.add(a)
                frontier.append(a)
    return ok


def dfg_to_petri(dfg: Dfg) -> PetriNet:
    if not dfg.activities:
        raise ValueError("empty DFG")
    dead = sorted(set(dfg.activities) - _reaches_end(dfg))
    if dead:
        logger.warning("activities with no path to an end activity: %s", ", ".join(dead))
    places = ["source", "sink"]
    transitions, arcs = [], []
    for a in dfg.activities:
        places += [f"in:{a}", f"out:{a}"]
        transitions.append(Transition(f"t:{a}", a))
        arcs += [(f"in:{a}", f"t:{a}"), (f"t:{a}", f"out:{a}")]
    for a in dfg.starts:
        name = f"tau:start:{a}"
        transitions.append(Transition(name))
        arcs += [("source", name), (name, f"in:{a}")]
    for a, b in dfg.edges:
        name = f"tau:{a}>{b}"
        transitions.append(Transition(name))
        arcs += [(f"out:{a}", name), (name, f"in:{b}")]
    for b in dfg.ends:
        name = f"tau:end:{b}"
        transitions.append(Transition(name))
        arcs += [(f"out:{b}", name), (name, "sink")]
    return PetriNet(tuple(places), tuple(transitions), tuple(arcs))


# -- token replay ----------------------------------------------------------------------------

Marking = tuple[tuple[str, int], ...]


def _freeze(m: Counter) -> Marking:
    return tuple(sorted((p, n) for p, n in m.items() if n > 0))


def _enabled(net: PetriNet, t: Transition, m: Counter) -> bool:
    return all(m[p] >= 1 for p in net.pre(t))


def _fire(net: PetriNet, t: Transition, m: Counter) -> Counter:
    out = Counter(m)
    for p in net.pre(t):
        out[p] -= 1
    for p in net.post(t):
        out[p] += 1
    return +out


def _silent_path(net: PetriNet, m: Counter, goal) -> list[Transition] | None:
    """Shortest sequence of silent firings (at most MAX_SILENT_HOPS) reaching a marking where goal(m) holds."""
    if goal(m):
        return []
    silent = sorted(net.silent, key=lambda t: t.name)
    seen = {_freeze(m)}
    queue = deque([(m, [])])
    while queue:
        cur, path = queue.popleft()
        if len(path) >= MAX_SILENT_HOPS:
            continue
        for t in silent:
            if not _enabled(net, t, cur):
                continue
            nxt = _fire(net, t, cur)
            key = _freeze(nxt)
            if key in seen:
                continue
            if goal(nxt):
                return path + [t]
            seen.add(key)
            queue.append((nxt, path + [t]))
    return None


def _silent_closure(net: PetriNet, m: Counter) -> list[Counter]:
    """Markings reachable from m through silent transitions only."""
    silent = sorted(net.silent, key=lambda t: t.name)
    seen = {_freeze(m)}
    out = [m]
    queue = deque([(m, 0)])
    while queue:
        cur, depth = queue.popleft()
        if depth >= MAX_SILENT_HOPS:
            continue
        for t in silent:
            if _enabled(net, t, cur):
                nxt = _fire(net, t, cur)
                key = _freeze(nxt)
                if key not in seen:
                    seen.add(key)
                    out.append(nxt)
                    queue.append((nxt, depth + 1))
    return out


@dataclass
class TraceReplay:
    produced: int = 0
    consumed: int = 0
    missing: int = 0
    remaining: int = 0
    fired: Counter = field(default_factory=Counter)
    marking: Counter = field(default_factory=Counter)

    @property
    def fitness(self) -> float:
        c = 1 - self.missing / self.consumed if self.consumed else 1.0
        p = 1 - self.remaining / self.produced if self.produced else 1.0
        return 0.5 * c + 0.5 * p


class _Replayer:
    def __init__(self, net: PetriNet):
        self.net = net
        self.labels = {t.label: t for t in net.visible}

    def _run(self, step: TraceReplay, t: Transition, m: Counter) -> Counter:
        for p in self.net.pre(t):
            if m[p] < 1:
                step.missing += 1
                m[p] += 1
        step.consumed += len(self.net.pre(t))
        step.produced += len(self.net.post(t))
        return _fire(self.net, t, m)

    def prefix(self, trace: Trace) -> TraceReplay:
        step = TraceReplay(produced=1)
        m = Counter({self.net.initial: 1})
        for label in trace:
            t = self.labels.get(label)
            if t is None:
                # foreign activity: one token demanded that no place can supply
                step.missing += 1
                step.consumed += 1
                continue
            if not _enabled(self.net, t, m):
                for s in _silent_path(self.net, m, lambda x, t=t: _enabled(self.net, t, x)) or []:
                    m = self._run(step, s, m)
            m = self._run(step, t, m)
            step.fired[t.name] += 1
        step.marking = m
        return step

    def trace(self, trace: Trace) -> TraceReplay:
        step = self.prefix(trace)
        m = step.marking
        final = self.net.final
        for s in _silent_path(self.net, m, lambda x: x[final] >= 1) or []:
            m = self._run(step, s, m)
        if m[final] >= 1:
            m = +(m - Counter({final: 1}))
        else:
            step.missing += 1
        step.consumed += 1
        step.remaining = sum(n for n in m.values() if n > 0)
        step.marking = m
        return step


def replay(net: PetriNet, log) -> list[TraceReplay]:
    r = _Replayer(net)
    return [r.trace(t) for t in _as_traces(log)]


def replay_fitness(net: PetriNet, log) -> float:
    """Mean over traces of 0.5 (1 - missing/consumed) + 0.5 (1 - remaining/produced)."""
    results = replay(net, log)
    if not results:
        raise ValueError("empty log")
    return sum(r.fitness for r in results) / len(results)


def precision_escaping(net: PetriNet, log) -> float:
    """Escaping-edges precision over fitting prefix states.

    For each distinct prefix, the activities the model enables (after silent
    moves, plus the option to stop) are compared with the continuations seen
    in the log; the escaping share is averaged with prefix frequency weights.
    """
    traces = _as_traces(log)
    follow: dict[tuple[str, ...], Counter] = {}
    for t in traces:
        for i in range(len(t) + 1):
            follow.setdefault(tuple(t[:i]), Counter())[t[i] if i < len(t) else END] += 1
    replayer = _Replayer(net)
    total_weight = 0.0
    total_deficit = 0.0
    for prefix in sorted(follow):
        seen = follow[prefix]
        step = replayer.prefix(prefix)
        if step.missing:
            continue
        enabled = set()
        for m in _silent_closure(net, step.marking):
            enabled.update(t.label for t in net.visible if _enabled(net, t, m))
            if m[net.final] >= 1:
                enabled.add(END)
        if not enabled:
            continue
        weight = sum(seen.values())
        total_weight += weight
        total_deficit += weight * len(enabled - set(seen)) / len(enabled)
    if total_weight == 0:
        return 1.0
    return 1.0 - total_deficit / total_weight


def generalization_from_counts(executions: Iterable[int]) -> float:
    """1 - mean over transitions of 1/sqrt(executions); unexecuted transitions count 1."""
    execs = list(executions)
    if not execs:
        raise ValueError("no transitions")
    penalty = sum(1.0 if n <= 0 else n ** -0.5 for n in execs)
    return 1.0 - penalty / len(execs)


def generalization(net: PetriNet, log, results: list[TraceReplay] | None = None) -> float:
    results = results if results is not None else replay(net, log)
    fired = Counter()
    for r in results:
        fired.update(r.fired)
    return generalization_from_counts(fired[t.name] for t in net.visible)


def simplicity(net: PetriNet) -> float:
    """Inverse arc degree: 1 / (1 + max(0, mean node degree - 2))."""
    nodes = len(net.places) + len(net.transitions)
    if nodes == 0:
        raise ValueError("empty net")
    mean_degree = 2 * len(net.arcs) / nodes
    return 1.0 / (1.0 + max(0.0, mean_degree - 2.0))


@dataclass(frozen=True)
class QualityMetrics:
    fitness: float
    precision: float
    generalization: float
    simplicity: float
    interactions: int = 0
    duration: float = 0.0

    def __post_init__(self):
        for name in ("fitness", "precision", "generalization"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not 0.0 < self.simplicity <= 1.0:
            raise ValueError(f"simplicity={self.simplicity} outside (0, 1]")

    @property
    def average(self) -> float:
        return (self.fitness + self.precision + self.generalization + self.simplicity) / 4


def quality(net: PetriNet, log, interactions: int = 0, started: float | None = None) -> QualityMetrics:
    """Assemble a quality row.  ``started`` is a ``time.perf_counter()`` reading
    taken before discovery so the duration covers discovery as well."""
    t0 = time.perf_counter() if started is None else started
    results = replay(net, log)
    fit = sum(r.fitness for r in results) / len(results)
    metrics = dict(
        fitness=min(max(fit, 0.0), 1.0),
        precision=min(max(precision_escaping(net, log), 0.0), 1.0),
        generalization=generalization(net, log, results),
        simplicity=simplicity(net),
    )
    return QualityMetrics(**metrics, interactions=interactions, duration=time.perf_counter() - t0)


def evaluate(log, interactions: int = 0, min_edge_frequency: int = 1) -> tuple[PetriNet, QualityMetrics]:
    """Discover a DFG net for the log and score it; duration covers both steps."""
    t0 = time.perf_counter()
    traces = _as_traces(log)
    net = dfg_to_petri(filter_dfg(discover_dfg(traces), min_edge_frequency))
    return net, quality(net, traces, interactions, started=t0)


def interactions_count(log: EventLog, case: str) -> int:
    """IDE commands plus judge submissions recorded for one case."""
    for s in log.sessions:
        if s.case_id == case:
            return len(s.events)
    raise KeyError(f"unknown case {case!r}")


def playout(net: PetriNet, rng: random.Random, max_steps: int = 200, max_tries: int = 100) -> tuple[str, ...]:
    """Random walk from the initial to the final marking; returns the visible labels."""
    for _ in range(max_tries):
        m = Counter({net.initial: 1})
        labels = []
        for _ in range(max_steps):
            if _freeze(m) == ((net.final, 1),):
                return tuple(labels)
            options = [t for t in net.transitions if _enabled(net, t, m)]
            if not options:
                break
            t = rng.choice(options)
            m = _fire(net, t, m)
            if not t.silent:
                labels.append(t.label)
    raise RuntimeError("no playout reached the final marking")


def dumps_net(net: PetriNet) -> str:
    return json.dumps(net.to_json(), indent=2)
