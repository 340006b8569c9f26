"""Time windows during which a pathway is gated or has a singular mode lesioned."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

PATHWAY_NAMES = "abcdefgh"


def pathway_index(p) -> int:
    if isinstance(p, str):
        if len(p) != 1 or p.lower() not in PATHWAY_NAMES:
            raise ValueError(f"unknown pathway {p!r}")
        return PATHWAY_NAMES.index(p.lower())
    if int(p) < 0:
        raise ValueError(f"pathway index must be nonnegative, got {p}")
    return int(p)


@dataclass(frozen=True)
class Window:
    """Epochs ``start <= e < end`` during which ``pathway`` is deprived.

    ``kind`` is ``"gating"`` (no parameter updates) or ``"lesion"`` (``mode``
    is projected out after every step). ``end=None`` never expires.
    """

    start: int
    end: int | None
    pathway: int
    kind: str = "gating"
    mode: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "pathway", pathway_index(self.pathway))
        if self.start < 0 or (self.end is not None and self.end < self.start):
            raise ValueError(f"bad window bounds [{self.start}, {self.end})")
        if self.kind not in ("gating", "lesion"):
            raise ValueError(f"unknown deficit kind {self.kind!r}")
        if self.kind == "lesion" and (self.mode is None or self.mode < 0):
            raise ValueError("lesion windows need a nonnegative mode index")

    @property
    def stop(self) -> float:
        return math.inf if self.end is None else self.end

    def active(self, epoch: int) -> bool:
        return self.start <= epoch < self.stop


@dataclass(frozen=True)
class DeficitSchedule:
    windows: tuple[Window, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        groups: dict[tuple, list[Window]] = {}
        for w in self.windows:
            key = (w.pathway, w.kind, w.mode if w.kind == "lesion" else None)
            groups.setdefault(key, []).append(w)
        for key, ws in groups.items():
            ws = sorted(ws, key=lambda w: w.start)
            for prev, nxt in zip(ws, ws[1:]):
                if nxt.start < prev.stop:
                    raise ValueError(f"overlapping deficit windows for {key}")

    @classmethod
    def gate(cls, pathway, start: int, end: int | None) -> "DeficitSchedule":
        return cls((Window(start, end, pathway_index(pathway), "gating"),))

    def __add__(self, other: "DeficitSchedule") -> "DeficitSchedule":
        return DeficitSchedule(self.windows + other.windows)

    def gated(self, pathway, epoch: int) -> bool:
        p = pathway_index(pathway)
        return any(w.kind == "gating" and w.pathway == p and w.active(epoch)
                   for w in self.windows)

    def lesioned_modes(self, pathway, epoch: int) -> list[int]:
        p = pathway_index(pathway)
        return sorted({w.mode for w in self.windows
                       if w.kind == "lesion" and w.pathway == p and w.active(epoch)})

    def to_json(self) -> list[dict]:
        return [{"start": w.start, "end": w.end, "pathway": PATHWAY_NAMES[w.pathway],
                 "kind": w.kind, "mode": w.mode} for w in self.windows]

    @classmethod
    def from_json(cls, items) -> "DeficitSchedule":
        return cls(tuple(Window(int(d["start"]), None if d.get("end") is None else int(d["end"]),
                                d["pathway"], d.get("kind", "gating"), d.get("mode"))
                         for d in items))


NO_DEFICIT = DeficitSchedule()
