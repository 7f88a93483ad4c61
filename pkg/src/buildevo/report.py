"""Markdown report (plus a CSV trajectory) rendered from a run directory."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from buildevo.evaluation import format_triple
from buildevo.ledger import ARCHIVE, BASELINES, BEST, CONFIG, GENERATIONS, PIFL, REPORT, TRAJECTORY


class MalformedLedger(ValueError):
    pass


def _read_json(path: Path):
    if not path.exists():
        raise MalformedLedger(f"missing {path.name} in {path.parent}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedLedger(f"{path.name}: {exc}") from exc


def _read_jsonl(path: Path, required: bool = True) -> list[dict]:
    if not path.exists():
        if required:
            raise MalformedLedger(f"missing {path.name} in {path.parent}")
        return []
    rows = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedLedger(f"{path.name} line {n}: {exc}") from exc
    return rows


def _j(v) -> str:
    return "inf" if v is None else f"{v:.4f}"


def trajectory(records: list[dict]) -> list[dict]:
    """Best-so-far J after each generation; the carried elite is implicit in the running minimum."""
    by_gen: dict[int, list[dict]] = {}
    for r in records:
        if "generation" not in r or "id" not in r:
            raise MalformedLedger("generation record without id/generation")
        by_gen.setdefault(int(r["generation"]), []).append(r)
    rows, best, best_id = [], math.inf, ""
    for g in sorted(by_gen):
        gen_best = math.inf
        for r in by_gen[g]:
            j = r.get("J")
            j = math.inf if j is None else float(j)
            gen_best = min(gen_best, j)
            if j < best:
                best, best_id = j, r["id"]
        rows.append({
            "generation": g,
            "best_J": best,
            "best_id": best_id,
            "offspring_best_J": gen_best,
            "candidates": len(by_gen[g]),
            "fallbacks": sum(bool(r.get("fallback")) for r in by_gen[g]),
        })
    return rows


def _trajectory_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "best_J", "best_id", "offspring_best_J", "candidates", "fallbacks"])
    for r in rows:
        w.writerow([r["generation"], repr(r["best_J"]), r["best_id"], repr(r["offspring_best_J"]), r["candidates"], r["fallbacks"]])
    return buf.getvalue()


def render_report(run_dir) -> str:
    run_dir = Path(run_dir)
    config = _read_json(run_dir / CONFIG)
    archive = _read_json(run_dir / ARCHIVE)
    records = _read_jsonl(run_dir / GENERATIONS)
    if not records:
        raise MalformedLedger(f"{GENERATIONS} is empty")
    if not isinstance(archive, list):
        raise MalformedLedger(f"{ARCHIVE} must hold a list")
    pifl = _read_jsonl(run_dir / PIFL, required=False)
    baselines = _read_json(run_dir / BASELINES) if (run_dir / BASELINES).exists() else None
    rows = trajectory(records)
    initial = rows[0]
    evolved = [r for r in rows if r["generation"] > 0]

    out = ["# Evolution run report", ""]
    out.append(f"Population {config.get('n')}, generations {config.get('generations')}, objective {config.get('objective')}, seed {config.get('rng_seed')}.")
    out.append("")
    out += ["## Best-J trajectory", "", f"Initial population best J: {_j(_fin(initial['best_J']))} ({initial['best_id']})", ""]
    out += ["| generation | best J | best id | offspring best J | fallbacks |", "|---|---|---|---|---|"]
    for r in evolved:
        out.append(f"| {r['generation']} | {_j(_fin(r['best_J']))} | {r['best_id']} | {_j(_fin(r['offspring_best_J']))} | {r['fallbacks']} |")
    if not evolved:
        out.append("| (no evolved generations) | | | | |")
    out.append("")

    best_src = (run_dir / BEST).read_text().rstrip("\n") if (run_dir / BEST).exists() else None
    if best_src is None:
        last = rows[-1]["best_id"]
        best_src = next((r["source"] for r in records if r["id"] == last), "")
    out += ["## Best heuristic", "", "```", best_src, "```", ""]

    out += ["## Segment analysis of the best heuristic", ""]
    best_id = rows[-1]["best_id"]
    rep = next((p for p in reversed(pifl) if p.get("heuristic_id") == best_id), pifl[-1] if pifl else None)
    if rep is None:
        out += ["No segment analysis recorded.", ""]
    else:
        out += [f"Heuristic {rep['heuristic_id']}, J {_j(rep.get('J'))}", ""]
        out += ["| segment | delta J if removed | share of abs output | note |", "|---|---|---|---|"]
        segs = sorted(rep["segments"], key=lambda s: (-(s["ablation_delta_J"] if s["ablation_delta_J"] is not None else math.inf), s["name"]))
        for s in segs:
            d = s["ablation_delta_J"]
            note = "helps" if d is None or d > 0 else "removal candidate"
            out.append(f"| {s['name']} | {_j(d)} | {s['abs_share']:.4f} | {note} |")
        out.append("")

    out += ["## Baseline comparison", ""]
    if baselines is None:
        out += ["No baseline table recorded.", ""]
    else:
        out += [f"Split: {baselines.get('split', 'test')}, windows {baselines.get('windows', 'n/a')}", ""]
        out += ["| method | MAPE / RMSE / MAE |", "|---|---|"]
        for name, m in baselines.get("methods", {}).items():
            vals = [math.nan if m.get(k) is None else m[k] for k in ("mape", "rmse", "mae")]
            out.append(f"| {name} | {format_triple(*vals)} |")
        out.append("")
    return "\n".join(out)


def _fin(v: float):
    return v if math.isfinite(v) else None


def write_report(run_dir) -> Path:
    run_dir = Path(run_dir)
    text = render_report(run_dir)
    (run_dir / REPORT).write_text(text)
    (run_dir / TRAJECTORY).write_text(_trajectory_csv(trajectory(_read_jsonl(run_dir / GENERATIONS))))
    return run_dir / REPORT
