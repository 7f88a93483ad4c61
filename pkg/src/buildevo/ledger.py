"""Run artifacts: one writer for every file a run produces."""

from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

GENERATIONS = "generations.jsonl"
ARCHIVE = "archive.json"
REFLECTIONS = "reflections.jsonl"
PIFL = "pifl.jsonl"
BEST = "best.dsl"
CONFIG = "config.json"
BASELINES = "baselines.json"
REPORT = "report.md"
TRAJECTORY = "trajectory.csv"
MEMORY = "memory.json"


def _num(v):
    return float(v) if v is not None and math.isfinite(v) else None


def dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False, separators=(", ", ": "))


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def make_run_id(config: dict, now: datetime | None = None) -> str:
    now = now or datetime.now(timezone.utc)
    return f"{now:%Y%m%dT%H%M%SZ}-{config_hash(config)[:4]}"


def candidate_record(member, generation: int) -> dict:
    p, r = member.program, member.result
    return {
        "id": p.id,
        "generation": generation,
        "operator": p.lineage.operator,
        "parent_ids": list(p.lineage.parent_ids),
        "source": p.source,
        "J": _num(r.J),
        "rmse": _num(r.rmse),
        "mae": _num(r.mae),
        "mape": _num(r.mape),
        "windows_failed": r.windows_failed,
        "fallback": p.lineage.fallback,
    }


class RunLedger:
    """Collects the run in memory and, when ``out_dir`` is set, mirrors it to disk.

    Line-oriented files are appended as the run progresses; the config snapshot is
    written once at construction.
    """

    def __init__(self, out_dir, config, run_id: str | None = None, extra: dict | None = None):
        self.config = config
        snapshot = config.to_dict()
        self.run_id = run_id or make_run_id(snapshot)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.records: list[dict] = []
        self.reflections: list[dict] = []
        self.pifl: list[dict] = []
        self.best_j_by_generation: list[float] = []
        self.archive: list[dict] = []
        self.best = None
        self.best_report = None
        self.memory = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for name in (GENERATIONS, REFLECTIONS, PIFL):
                (self.out_dir / name).write_text("")
            (self.out_dir / CONFIG).write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
            run = {"run_id": self.run_id, **(extra or {})}
            (self.out_dir / "run.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def _append(self, name: str, rows) -> None:
        if self.out_dir is None or not rows:
            return
        with open(self.out_dir / name, "a", encoding="utf-8") as fh:
            for row in rows:
                fh.write(dumps(row) + "\n")

    def record_generation(self, generation: int, members, archive, best) -> None:
        rows = [candidate_record(m, generation) for m in members]
        self.records.extend(rows)
        self._append(GENERATIONS, rows)
        self.best_j_by_generation.append(archive.min_j)
        self.archive = archive.to_list()
        self.best = best
        if self.out_dir is not None:
            (self.out_dir / ARCHIVE).write_text(json.dumps(self.archive, indent=2, allow_nan=False) + "\n")

    def record_reflection(self, generation: int, kind: str, text: str, pair_ids=None) -> None:
        row = {"generation": generation, "kind": kind, "text": text}
        if pair_ids is not None:
            row["pair_ids"] = list(pair_ids)
        self.reflections.append(row)
        self._append(REFLECTIONS, [row])

    def record_pifl(self, generation: int, report) -> None:
        row = {"generation": generation, **report.to_dict()}
        row["J"] = _num(row["J"])
        self.pifl.append(row)
        self._append(PIFL, [row])

    def finish(self, best, archive, memory, best_report=None) -> None:
        self.best = best
        self.best_report = best_report
        self.memory = memory
        self.archive = archive.to_list()
        if self.out_dir is None:
            return
        (self.out_dir / BEST).write_text(best.program.source + "\n")
        (self.out_dir / MEMORY).write_text(json.dumps(
            {"long_term": memory.long_term, "generation_updated": memory.generation_updated}, indent=2) + "\n")
        if best_report is not None:
            (self.out_dir / "pifl.json").write_text(best_report.to_json() + "\n")

    def write_baselines(self, table: dict) -> None:
        if self.out_dir is not None:
            (self.out_dir / BASELINES).write_text(json.dumps(table, indent=2, allow_nan=False) + "\n")
