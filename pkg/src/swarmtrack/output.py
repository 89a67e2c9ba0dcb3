"""Result files: raw and summary CSVs, an SVG plot and run metadata."""

from __future__ import annotations

import csv
import io
import json
import platform
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from swarmtrack.config import ScenarioConfig
from swarmtrack.metrics import Summary, summarize
from swarmtrack.simulation import TrialResult

RAW_HEADER = ["trial", "epoch", "ospa", "phi", "policy"]
SUMMARY_HEADER = ["policy", "epoch", "mean", "ci_low", "ci_high"]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


class OutputError(OSError):
    pass


def _fmt(x: float) -> str:
    # repr round-trips exactly, which keeps files byte-stable across runs
    return repr(float(x))


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def raw_csv(results: dict[str, list[TrialResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(RAW_HEADER)
    for policy, trials in results.items():
        for tr in trials:
            for k, (o, phi) in enumerate(zip(tr.ospa, tr.phi)):
                w.writerow([tr.trial, k, _fmt(o), _fmt(phi), policy])
    return buf.getvalue()


def summaries(results: dict[str, list[TrialResult]]) -> dict[str, Summary]:
    """Per-policy summary; policies with a single trial are left out."""
    return {
        p: summarize(np.array([tr.ospa for tr in trials]))
        for p, trials in results.items()
        if len(trials) >= 2
    }


def summary_csv(stats: dict[str, Summary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(SUMMARY_HEADER)
    for policy, s in stats.items():
        for k in range(len(s.mean)):
            w.writerow([policy, k, _fmt(s.mean[k]), _fmt(s.ci_low[k]), _fmt(s.ci_high[k])])
    return buf.getvalue()


def summary_svg(curves: dict[str, tuple[np.ndarray, np.ndarray | None, np.ndarray | None]], c: float) -> str:
    """Mean OSPA per epoch, one polyline per policy, CI bands where available."""
    width, height = 640, 400
    left, right, top, bottom = 60, 170, 20, 50
    pw, ph = width - left - right, height - top - bottom
    n_epochs = max((len(m) for m, _, _ in curves.values()), default=1)
    ymax = c

    def sx(k):
        return left + pw * (k / max(n_epochs - 1, 1))

    def sy(v):
        return top + ph * (1.0 - min(max(v, 0.0), ymax) / ymax)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for frac in np.linspace(0, 1, 5):
        v = ymax * frac
        parts.append(
            f'<text x="{left - 6}" y="{sy(v) + 4:.1f}" font-size="11" text-anchor="end">{v:g}</text>'
        )
    for k in range(0, n_epochs, max(1, n_epochs // 8)):
        parts.append(
            f'<text x="{sx(k):.1f}" y="{top + ph + 16}" font-size="11" text-anchor="middle">{k}</text>'
        )
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="12" text-anchor="middle">epoch</text>')
    parts.append(
        f'<text x="16" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">OSPA (m)</text>'
    )
    for j, (policy, (mean, lo, hi)) in enumerate(curves.items()):
        color = PALETTE[j % len(PALETTE)]
        if lo is not None and hi is not None:
            upper = [f"{sx(k):.2f},{sy(v):.2f}" for k, v in enumerate(hi)]
            lower = [f"{sx(k):.2f},{sy(v):.2f}" for k, v in reversed(list(enumerate(lo)))]
            parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{sx(k):.2f},{sy(v):.2f}" for k, v in enumerate(mean))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 + 18 * j
        parts.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 38}" y="{ly + 4}" font-size="11">{escape(policy)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def evaluation_report(config: ScenarioConfig, results: dict[str, list[TrialResult]]) -> dict:
    """Objective-evaluation accounting per policy.

    ``per_agent_budget`` is the DE cost of one agent's search, P·(G+1); the
    sequential and greedy policies spend exactly n times that per decision.
    """
    de = config.planning.de
    n = len(config.agents)
    out = {}
    for policy, trials in results.items():
        per_decision = sorted({int(e) for tr in trials for e in tr.evaluations})
        entry = {
            "per_decision": per_decision[0] if len(per_decision) == 1 else per_decision,
            "total": int(sum(int(tr.evaluations.sum()) for tr in trials)),
        }
        if policy in ("rollout_sequential", "greedy"):
            entry["per_agent_budget"] = de.population * (de.generations + 1)
            entry["search_dimension"] = 2
            entry["searches_per_decision"] = n
        elif policy == "rollout_joint":
            entry["per_agent_budget"] = None
            entry["search_dimension"] = 2 * n
            entry["searches_per_decision"] = 1
        else:
            entry["search_dimension"] = 0
            entry["searches_per_decision"] = 0
        out[policy] = entry
    return out


def run_meta(config: ScenarioConfig, results: dict[str, list[TrialResult]], extra: dict | None = None) -> dict:
    return {
        "config": config.model_dump(mode="json"),
        "policies": list(results),
        "seeds": {p: [tr.seed for tr in trials] for p, trials in results.items()},
        "epochs": max((len(tr.ospa) for trials in results.values() for tr in trials), default=0),
        "evaluations": evaluation_report(config, results),
        "diagnostics": {p: [tr.diagnostics for tr in trials] for p, trials in results.items()},
        "wall_time_s": {p: [round(tr.wall_time, 3) for tr in trials] for p, trials in results.items()},
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
        **(extra or {}),
    }


def emit_results(
    results: dict[str, list[TrialResult]],
    out_dir: str | Path,
    config: ScenarioConfig,
    extra_meta: dict | None = None,
) -> dict[str, Path]:
    """Write every output file into ``out_dir`` and return their paths.

    ``ospa_summary.csv`` needs at least two trials per policy; with a single
    trial only the raw curve, the plot (without a band) and metadata are
    written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc

    paths = {"raw": out / "ospa_raw.csv", "svg": out / "summary.svg", "meta": out / "run_meta.json"}
    _write_text(paths["raw"], raw_csv(results))
    stats = summaries(results)
    if stats:
        paths["summary"] = out / "ospa_summary.csv"
        _write_text(paths["summary"], summary_csv(stats))

    curves = {}
    for policy, trials in results.items():
        if policy in stats:
            s = stats[policy]
            curves[policy] = (s.mean, s.ci_low, s.ci_high)
        elif trials:
            curves[policy] = (np.asarray(trials[0].ospa), None, None)
    _write_text(paths["svg"], summary_svg(curves, config.ospa.c))
    _write_text(paths["meta"], json.dumps(run_meta(config, results, extra_meta), indent=2) + "\n")
    return paths
