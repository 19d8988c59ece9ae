"""Per-item execution traces and their line-delimited JSON export.

A trace file is JSON Lines. The first line is ``{"type": "meta", ...}`` with the
algorithm name and its parameters, followed by one ``{"type": "step", ...}``
line per allocation step and one ``{"type": "item", ...}`` line per item.

Step fields (stable): ``item, stage, segment, buyer, fraction, primal_delta,
dual_delta, level``. ``stage`` is ``"1"``/``"2"``/``"3"`` for the bounded
allocation algorithm and ``"argmax"``/``"prediction"``/``"fictitious"`` for the
Ad-Auctions algorithm. For the bounded algorithm ``dual_delta`` is the buyer's
``B_i * dy_i`` only; the item dual ``z_j`` is final-state dependent and lives in
the item line. For Ad-Auctions the argmax step carries ``B_i * dy_i + z_j``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable


@dataclass
class StepRecord:
    item: int
    stage: str
    buyer: int
    fraction: float
    primal_delta: float
    dual_delta: float
    segment: int = 0
    level: int = -1


@dataclass
class Trace:
    algorithm: str
    params: dict[str, Any] = field(default_factory=dict)
    steps: list[StepRecord] = field(default_factory=list)
    items: list[dict[str, Any]] = field(default_factory=list)

    def steps_for(self, item: int) -> list[StepRecord]:
        return [s for s in self.steps if s.item == item]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "meta", "algorithm": self.algorithm, **self.params})]
        lines += [json.dumps({"type": "step", **asdict(s)}) for s in self.steps]
        lines += [json.dumps({"type": "item", **it}) for it in self.items]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str | Iterable[str]) -> "Trace":
        lines = text.splitlines() if isinstance(text, str) else list(text)
        trace: Trace | None = None
        for n, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            typ = rec.pop("type", None)
            if typ == "meta":
                algo = rec.pop("algorithm")
                trace = cls(algo, rec)
            elif trace is None:
                raise ValueError(f"line {n}: trace must start with a meta record")
            elif typ == "step":
                trace.steps.append(StepRecord(**rec))
            elif typ == "item":
                trace.items.append(rec)
            else:
                raise ValueError(f"line {n}: unknown record type {typ!r}")
        if trace is None:
            raise ValueError("empty trace")
        return trace

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        return cls.from_jsonl(Path(path).read_text())
