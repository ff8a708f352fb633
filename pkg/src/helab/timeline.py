"""Event timelines.

Every component in the lab reports what it did by appending events to a
timeline.  Analysis code never inspects component internals; it reads the
timeline.  Serialization is line-delimited JSON with sorted keys so that two
identical runs produce byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterator


@dataclass(frozen=True)
class Event:
    t: int  # milliseconds on the clock that recorded the event
    kind: str  # dotted name, e.g. "connect.launch"
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "kind": self.kind, "data": self.data},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Event":
        raw = json.loads(line)
        return cls(t=int(raw["t"]), kind=str(raw["kind"]), data=dict(raw.get("data", {})))


class EventTimeline:
    """Append-only sequence of events, ordered by when they were recorded."""

    def __init__(self, events: list[Event] | None = None) -> None:
        self.events: list[Event] = list(events or [])

    def record(self, t: int, kind: str, **data: Any) -> Event:
        ev = Event(t=t, kind=kind, data=data)
        self.events.append(ev)
        return ev

    def extend(self, events: list[Event]) -> None:
        self.events.extend(events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, idx: int) -> Event:
        return self.events[idx]

    def filter(self, *kinds: str, **match: Any) -> list[Event]:
        """Events whose kind is one of *kinds (all if empty) and whose data
        matches every keyword given."""
        out = []
        for ev in self.events:
            if kinds and ev.kind not in kinds:
                continue
            if all(ev.data.get(k) == v for k, v in match.items()):
                out.append(ev)
        return out

    def first(self, *kinds: str, **match: Any) -> Event | None:
        hits = self.filter(*kinds, **match)
        return hits[0] if hits else None

    def to_json_lines(self) -> str:
        return "".join(ev.to_json() + "\n" for ev in self.events)

    @classmethod
    def from_json_lines(cls, text: str) -> "EventTimeline":
        events = [Event.from_json(line) for line in text.splitlines() if line.strip()]
        return cls(events)
