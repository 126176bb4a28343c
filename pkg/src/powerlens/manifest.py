"""Campaign manifest: what ran when, for joining against meter logs offline."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .core import Utilization
from .errors import ParseError

MANIFEST_FORMAT = "powerlens-campaign v1"


@dataclass(frozen=True)
class CellLog:
    """One executed calibration cell, timed on the device clock."""

    freq_khz: int
    factor: int
    t_start: float
    t_end: float
    utilization: Utilization
    tag: str = ""
    energy_j: float | None = None

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> dict:
        d = {
            "freq_khz": self.freq_khz,
            "factor": self.factor,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "util": self.utilization.value,
            "per_core": list(self.utilization.per_core) if self.utilization.per_core else None,
            "tag": self.tag,
        }
        if self.energy_j is not None:
            d["energy_j"] = self.energy_j
        return d

    @classmethod
    def from_dict(cls, d) -> "CellLog":
        per_core = d.get("per_core")
        util = Utilization.from_per_core(per_core) if per_core else Utilization(float(d["util"]))
        return cls(int(d["freq_khz"]), int(d["factor"]), float(d["t_start"]), float(d["t_end"]),
                   util, d.get("tag", ""), d.get("energy_j"))


@dataclass
class CampaignManifest:
    """Cells in execution order.

    ``clock_offset_s`` is added to device timestamps to obtain meter-log time;
    the operator measures it when starting the meter.
    """

    cells: list[CellLog] = field(default_factory=list)
    clock_offset_s: float = 0.0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": MANIFEST_FORMAT,
                "clock_offset_s": self.clock_offset_s,
                "config": self.config,
                "cells": [c.to_dict() for c in self.cells],
            },
            indent=1,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text, path=None) -> "CampaignManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest is not JSON: {exc.msg}", exc.lineno, path) from None
        if raw.get("format") != MANIFEST_FORMAT:
            raise ParseError(f"unsupported manifest format {raw.get('format')!r}", None, path)
        try:
            cells = [CellLog.from_dict(c) for c in raw["cells"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad manifest cell: {exc}", None, path) from None
        return cls(cells, float(raw.get("clock_offset_s", 0.0)), raw.get("config", {}))

    @classmethod
    def load(cls, path) -> "CampaignManifest":
        with open(path) as fh:
            return cls.from_json(fh.read(), str(path))
