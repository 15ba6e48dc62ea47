"""Structural governance on room graphs under a paired-and-cached policy.

A scripted policy stands in for a cached language model: it maps
``(room, available directions)`` to a direction, the mapping is memoized
write-once, and both agents in a paired trial consume the same cache.  The
baseline agent executes the cached choice verbatim.  The landmarks agent adds
two mechanisms: within a phase it refuses to re-traverse an exit already taken
this phase while an untried alternative exists (edge deduplication, falling
back in lexicographic label order), and every ``phase_k`` steps the in-phase
traversal memory clears (phase-boundary reset).  Behavioral differences in a
paired trial are therefore attributable to execution structure alone.
"""

from __future__ import annotations

import hashlib
import json
import statistics
from dataclasses import dataclass, field

from .errors import InvalidInputError
from .seeding import derive_rng


@dataclass(frozen=True)
class RoomGraph:
    exits: dict[tuple[str, str], str]
    start: str

    def __post_init__(self):
        rooms = set()
        for (room, _direction), dest in self.exits.items():
            rooms.add(room)
            rooms.add(dest)
        if self.start not in rooms:
            raise InvalidInputError("start room has no exits or entrances")
        no_exit = {r for r in rooms if not any(k[0] == r for k in self.exits)}
        if no_exit:
            raise InvalidInputError(f"rooms without exits: {sorted(no_exit)}")
        if not self._connected(rooms):
            raise InvalidInputError("graph must be connected")
        object.__setattr__(self, "_rooms", frozenset(rooms))

    def _connected(self, rooms) -> bool:
        neighbors: dict[str, set[str]] = {r: set() for r in rooms}
        for (room, _d), dest in self.exits.items():
            neighbors[room].add(dest)
            neighbors[dest].add(room)
        seen = {self.start}
        frontier = [self.start]
        while frontier:
            here = frontier.pop()
            for nxt in neighbors[here]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen == rooms

    @property
    def rooms(self) -> frozenset:
        return self._rooms

    def available(self, room: str) -> tuple[str, ...]:
        return tuple(sorted(d for (r, d) in self.exits if r == room))

    def to_json(self) -> str:
        payload = {
            "start": self.start,
            "exits": [
                {"room": room, "direction": direction, "to": dest}
                for (room, direction), dest in sorted(self.exits.items())
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "RoomGraph":
        payload = json.loads(text)
        exits = {(e["room"], e["direction"]): e["to"] for e in payload["exits"]}
        return RoomGraph(exits=exits, start=payload["start"])


class CachedPolicy:
    """Write-once cache from (room, available directions) to a chosen direction.

    Miss behavior is a deterministic scripted rule: "first" picks the first
    listed direction; "seeded" picks by a stable hash of (seed, key), so the
    choice is reproducible and independent of query order.
    """

    def __init__(self, rule: str = "first", seed: int = 0):
        if rule not in ("first", "seeded"):
            raise InvalidInputError("rule must be 'first' or 'seeded'")
        self.rule = rule
        self.seed = seed
        self.table: dict[tuple[str, tuple[str, ...]], str] = {}
        self.lookup_log: list[tuple[tuple[str, tuple[str, ...]], str]] = []

    def _scripted(self, room: str, directions: tuple[str, ...]) -> str:
        if self.rule == "first":
            return directions[0]
        digest = hashlib.blake2b(
            f"{self.seed}|{room}|{'|'.join(directions)}".encode(), digest_size=8
        ).digest()
        return directions[int.from_bytes(digest, "big") % len(directions)]

    def choose(self, room: str, directions: tuple[str, ...]) -> str:
        if not directions:
            raise InvalidInputError("no directions available")
        key = (room, tuple(directions))
        if key not in self.table:
            self.table[key] = self._scripted(room, directions)
        choice = self.table[key]
        self.lookup_log.append((key, choice))
        return choice


@dataclass(frozen=True)
class GovernanceMetrics:
    distinct_rooms: int
    distinct_edges: int
    backtracks: int
    steps: int

    def __post_init__(self):
        if self.distinct_rooms > self.steps + 1 or self.backtracks > self.steps:
            raise InvalidInputError("metrics inconsistent with step count")


@dataclass(frozen=True)
class WalkResult:
    metrics: GovernanceMetrics
    rooms_over_time: tuple[int, ...]
    trace: tuple[str, ...]
    executed_edges: tuple[tuple[str, str], ...]


def _walk(
    graph: RoomGraph,
    policy: CachedPolicy,
    steps: int,
    phase_k: int | None,
    dedup: bool,
) -> WalkResult:
    if steps < 1:
        raise InvalidInputError("steps must be >= 1")
    room = graph.start
    trace = [room]
    rooms_over_time = [1]
    seen_rooms = {room}
    seen_edges: set[tuple[str, str]] = set()
    phase_edges: set[tuple[str, str]] = set()
    executed = []
    backtracks = 0
    for t in range(1, steps + 1):
        directions = graph.available(room)
        choice = policy.choose(room, directions)
        if dedup and (room, choice) in phase_edges:
            untried = [d for d in directions if (room, d) not in phase_edges]
            if untried:
                choice = untried[0]
        dest = graph.exits[(room, choice)]
        seen_edges.add((room, choice))
        phase_edges.add((room, choice))
        executed.append((room, choice))
        trace.append(dest)
        # immediate return: back to the room of two steps ago after leaving it
        if len(trace) >= 3 and dest == trace[-3] and dest != trace[-2]:
            backtracks += 1
        seen_rooms.add(dest)
        rooms_over_time.append(len(seen_rooms))
        room = dest
        if phase_k is not None and t % phase_k == 0:
            phase_edges.clear()
    metrics = GovernanceMetrics(
        distinct_rooms=len(seen_rooms),
        distinct_edges=len(seen_edges),
        backtracks=backtracks,
        steps=steps,
    )
    return WalkResult(metrics, tuple(rooms_over_time), tuple(trace), tuple(executed))


def run_baseline(graph: RoomGraph, policy: CachedPolicy, steps: int) -> WalkResult:
    """Execute the cached policy verbatim each step."""
    return _walk(graph, policy, steps, phase_k=None, dedup=False)


def run_landmarks(
    graph: RoomGraph,
    policy: CachedPolicy,
    steps: int,
    phase_k: int | None,
    dedup: bool = True,
) -> WalkResult:
    """Cached policy plus in-phase edge deduplication and phase resets."""
    if phase_k is not None and phase_k < 1:
        raise InvalidInputError("phase_k must be >= 1 when set")
    return _walk(graph, policy, steps, phase_k=phase_k, dedup=dedup)


@dataclass(frozen=True)
class PairedRow:
    seed: int
    baseline: GovernanceMetrics
    landmarks: GovernanceMetrics


@dataclass(frozen=True)
class PairedSummary:
    rows: tuple[PairedRow, ...]
    means: dict
    stds: dict
    cache_consistent: bool


METRIC_NAMES = ("distinct_rooms", "distinct_edges", "backtracks")


def paired_trial(
    graph_or_factory,
    steps: int,
    phase_k: int | None,
    seeds,
    policy_rule: str = "seeded",
    dedup: bool = True,
) -> PairedSummary:
    """Run both agents per seed on a shared cache; aggregate mean and std.

    ``graph_or_factory`` is a fixed RoomGraph or a callable seed -> RoomGraph.
    The cache-sharing certificate checks that every (room, action set) key
    resolved to a single direction across both agents' lookups.
    """
    seeds = list(seeds)
    if not seeds:
        raise InvalidInputError("need at least one seed")
    rows = []
    consistent = True
    for seed in seeds:
        graph = graph_or_factory(seed) if callable(graph_or_factory) else graph_or_factory
        policy = CachedPolicy(rule=policy_rule, seed=seed)
        base = run_baseline(graph, policy, steps)
        land = run_landmarks(graph, policy, steps, phase_k=phase_k, dedup=dedup)
        by_key: dict = {}
        for key, value in policy.lookup_log:
            if by_key.setdefault(key, value) != value:
                consistent = False
        rows.append(PairedRow(seed, base.metrics, land.metrics))
    means, stds = {}, {}
    for condition, pick in (("baseline", lambda r: r.baseline), ("landmarks", lambda r: r.landmarks)):
        for name in METRIC_NAMES:
            values = [getattr(pick(row), name) for row in rows]
            means[(condition, name)] = statistics.fmean(values)
            stds[(condition, name)] = statistics.stdev(values) if len(values) > 1 else 0.0
    return PairedSummary(tuple(rows), means, stds, consistent)


# ---------------------------------------------------------------------------
# Fixtures and generators
# ---------------------------------------------------------------------------

def oscillator_graph(extra_corridor: int = 0) -> RoomGraph:
    """Two mutually pointing rooms; optionally a third exit into a corridor.

    With ``extra_corridor = 0`` the first-listed choices trap any verbatim
    walk in an A-B oscillation.  With n > 0, room B gains a second exit
    feeding an n-room corridor that loops back to A, so deduplication can
    escape the oscillation.
    """
    exits = {("roomA", "a"): "roomB", ("roomB", "a"): "roomA"}
    if extra_corridor:
        chain = [f"hall{i:02d}" for i in range(extra_corridor)]
        exits[("roomB", "b")] = chain[0]
        for i, name in enumerate(chain):
            nxt = chain[i + 1] if i + 1 < len(chain) else "roomA"
            exits[(name, "a")] = nxt
    return RoomGraph(exits=exits, start="roomA")


def planted_cycle_graph(n_rooms: int, extra_edges: int, seed: int) -> RoomGraph:
    """Random connected graph whose first-choice walk hits a planted 2-cycle.

    Rooms are chained into a random spanning path (guaranteeing connectivity),
    extra edges are sprinkled uniformly, and one room pair is wired so that
    both rooms' lexicographically-first exits point at each other.
    """
    if n_rooms < 4:
        raise InvalidInputError("need at least 4 rooms")
    rng = derive_rng(seed, "planted-graph", n_rooms, extra_edges)
    rooms = [f"r{i:02d}" for i in range(n_rooms)]
    order = list(rng.permutation(n_rooms))
    exits: dict[tuple[str, str], str] = {}
    labels = "bcdefgh"
    for i in range(n_rooms - 1):
        a, b = rooms[order[i]], rooms[order[i + 1]]
        exits[(a, labels[int(rng.integers(0, 3))])] = b
        exits[(b, labels[int(rng.integers(3, 6))])] = a
    for _ in range(extra_edges):
        a, b = (rooms[int(i)] for i in rng.integers(0, n_rooms, size=2))
        label = labels[int(rng.integers(0, len(labels)))]
        if a != b and (a, label) not in exits:
            exits[(a, label)] = b
    pair = [rooms[order[0]], rooms[order[1]]]
    exits[(pair[0], "a")] = pair[1]
    exits[(pair[1], "a")] = pair[0]
    return RoomGraph(exits=exits, start=rooms[order[0]])
