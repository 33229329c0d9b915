"""Upper/lower bound gap tables.

Each column of a table is one potential-bound setting.  Rows pair the energy
heuristic (a certified feasible point, hence an upper bound on the minimum
cost) with the MICP relaxation (a lower bound), optionally a reference value,
and the resulting gap.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

DASH = "\u2014"
GAP_TOL = 1e-6


@dataclass
class GapEntry:
    """One column of a gap table.  ``None`` marks a failed or skipped method."""

    label: str
    heuristic: float | None = None
    lower: float | None = None
    reference: float | None = None
    heuristic_status: str = "certified"
    lower_status: str = "optimal"
    notes: list = field(default_factory=list)

    @property
    def gap(self) -> float | None:
        if self.heuristic is None or self.lower is None:
            return None
        return self.heuristic - self.lower

    @property
    def gap_percent(self) -> float | None:
        g = self.gap
        if g is None:
            return None
        scale = abs(self.lower)
        if scale == 0:
            return 0.0 if abs(g) <= GAP_TOL else None
        return 100.0 * g / scale

    @property
    def status(self) -> str:
        if self.heuristic is None:
            return f"energy heuristic {self.heuristic_status}"
        if self.lower is None:
            return f"MIQP {self.lower_status}"
        g = self.gap
        if abs(g) <= GAP_TOL * (1.0 + abs(self.lower)) and self.lower_status == "optimal":
            return "certified optimal"
        if g < -GAP_TOL * (1.0 + abs(self.lower)):
            return "bound ordering violated"
        if self.lower_status != "optimal":
            return f"gap open (MIQP {self.lower_status})"
        return "gap open"


def _fmt(v, percent=False):
    if v is None:
        return DASH
    if percent:
        return f"{v:.2f}%"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.6g}"


@dataclass
class GapTable:
    entries: list
    title: str = ""
    methods: tuple = ("energy", "micp")

    def rows(self) -> list[list[str]]:
        out = [["Pressure bounds"] + [e.label for e in self.entries]]
        if "energy" in self.methods:
            out.append(["Energy heuristic"] + [_fmt(e.heuristic) for e in self.entries])
        if any(e.reference is not None for e in self.entries):
            out.append(["Reference"] + [_fmt(e.reference) for e in self.entries])
        if "micp" in self.methods:
            out.append(["MIQP lower bound"] + [_fmt(e.lower) for e in self.entries])
        if "energy" in self.methods and "micp" in self.methods:
            out.append(["Gap"] + [_fmt(e.gap) for e in self.entries])
            out.append(["Gap %"] + [_fmt(e.gap_percent, percent=True) for e in self.entries])
            out.append(["Status"] + [e.status for e in self.entries])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.rows())
        return buf.getvalue()

    def to_text(self) -> str:
        rows = self.rows()
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines = []
        if self.title:
            lines.append(self.title)
        sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
        lines.append(sep)
        for k, r in enumerate(rows):
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("| " + " | ".join(cells) + " |")
            if k == 0:
                lines.append(sep)
        lines.append(sep)
        notes = [f"{e.label}: {n}" for e in self.entries for n in e.notes]
        lines.extend(notes)
        return "\n".join(lines) + "\n"


def report_gap_table(entries: Sequence[GapEntry], methods=("energy", "micp"), title: str = "") -> GapTable:
    """Assemble a gap table; render with :meth:`GapTable.to_text` or :meth:`GapTable.to_csv`."""
    methods = tuple(methods)
    unknown = set(methods) - {"energy", "micp"}
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    return GapTable(list(entries), title, methods)


def entry_from_results(label: str, energy=None, micp=None, energy_error: str | None = None,
                       micp_error: str | None = None, reference: float | None = None) -> GapEntry:
    """Build a table entry from solver outputs (``ThroughputSolution`` / ``MicpResult``)."""
    e = GapEntry(label, reference=reference)
    if energy is not None and energy.feasible:
        e.heuristic = float(energy.objective)
        e.heuristic_status = energy.status
    else:
        e.heuristic_status = "infeasible"
        e.notes.append(energy_error or "energy heuristic found no certified point")
    if micp is not None and micp.lower_bound is not None:
        e.lower = float(micp.lower_bound)
        e.lower_status = micp.status
        if micp.status == "infeasible":
            e.lower = None
            e.notes.append("MIQP relaxation infeasible")
    else:
        e.lower_status = "failed"
        if micp_error:
            e.notes.append(micp_error)
    return e
