"""Per-condition accuracy and the comparison tables."""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .variants import BIMODAL, VARIANTS

log = logging.getLogger(__name__)

# validity patterns are (audio, visible, thermal)
CONDITIONS = {
    "no_missing": (True, True, True),
    "miss_visible": (True, False, True),
    "miss_thermal": (True, True, False),
    "miss_audio": (False, True, True),
}
COLUMN_TITLES = {
    "no_missing": "No-Missing",
    "miss_visible": "Miss. Visible",
    "miss_thermal": "Miss. Thermal",
    "miss_audio": "Miss. Audio",
}
BIMODAL_TITLES = {"Prop": "Proposed (Trimodal)", "AV": "Audio-Visible", "AT": "Audio-Thermal", "VT": "Visible-Thermal"}
SCHEDULE_NOTE = "Baselines reuse the Prop training schedule (optimizer, epochs, batch size)."


@dataclass
class ConditionReport:
    variant: str
    accuracy: dict[str, float | None]
    counts: dict[str, int]
    seeds: tuple[int, ...] = ()
    label: str | None = None
    avg: float = field(init=False)

    def __post_init__(self):
        cells = [v for v in self.accuracy.values() if v is not None]
        self.avg = float(np.mean(cells)) if cells else float("nan")
        self.seeds = tuple(self.seeds)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConditionReport":
        d = json.loads(text)
        d.pop("avg", None)
        return cls(**d)


def evaluate_predictions(
    predictions: np.ndarray,
    labels: np.ndarray,
    validity: np.ndarray,
    variant: str = "",
    seeds: tuple[int, ...] = (),
    label: str | None = None,
) -> ConditionReport:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    validity = np.asarray(validity, dtype=bool)
    accuracy: dict[str, float | None] = {}
    counts: dict[str, int] = {}
    for cond, pattern in CONDITIONS.items():
        sel = (validity == np.array(pattern)).all(axis=1)
        counts[cond] = int(sel.sum())
        if not sel.any():
            log.warning("%s: no test samples for condition %s; excluded from avg", variant, cond)
            accuracy[cond] = None
        else:
            accuracy[cond] = float((predictions[sel] == labels[sel]).mean())
    other = len(labels) - sum(counts.values())
    if other:
        log.warning("%s: %d samples match no evaluated condition", variant, other)
    return ConditionReport(variant, accuracy, counts, seeds, label)


def evaluate_conditions(pipeline, arrays, seed: int | None = None) -> ConditionReport:
    preds = pipeline.predict(arrays)
    seeds = () if seed is None else (seed,)
    return evaluate_predictions(preds, arrays.labels, arrays.validity, pipeline.variant.name, seeds,
                                pipeline.variant.label)


def aggregate_reports(reports: list[ConditionReport]) -> list[ConditionReport]:
    """Median of each cell across seeds, one report per variant."""
    grouped: dict[str, list[ConditionReport]] = {}
    for r in reports:
        grouped.setdefault(r.variant, []).append(r)
    out = []
    for name, group in grouped.items():
        if len(group) == 1:
            out.append(group[0])
            continue
        acc = {}
        for cond in CONDITIONS:
            vals = [r.accuracy.get(cond) for r in group if r.accuracy.get(cond) is not None]
            acc[cond] = statistics.median(vals) if vals else None
        counts = {cond: group[0].counts.get(cond, 0) for cond in CONDITIONS}
        seeds = tuple(sorted(s for r in group for s in r.seeds))
        out.append(ConditionReport(name, acc, counts, seeds, group[0].label))
    return _ordered(out)


def _ordered(reports: list[ConditionReport]) -> list[ConditionReport]:
    rank = {name: i for i, name in enumerate(VARIANTS)}
    return sorted(reports, key=lambda r: (rank.get(r.variant, len(rank)), r.variant))


def _pct(v: float | None) -> str:
    return "n/a" if v is None or v != v else f"{100 * v:.2f}"


def _render(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), sep, *(line(r) for r in rows)])


def render_tables(reports: list[ConditionReport]) -> str:
    reports = _ordered(reports)
    header = ["Algorithm", *COLUMN_TITLES.values(), "Avg"]
    rows = [[r.label or r.variant, *(_pct(r.accuracy.get(c)) for c in CONDITIONS), _pct(r.avg)] for r in reports]
    parts = ["Table 1. Recognition accuracy (%) per missing-modality condition", "", _render(header, rows)]

    by_name = {r.variant: r for r in reports}
    if any(name in by_name for name in BIMODAL):
        cols = list(BIMODAL_TITLES)
        parts += ["", "Table 2. Accuracy (%) of sensor fusion configurations", "",
                  _render([BIMODAL_TITLES[c] for c in cols],
                          [[_pct(by_name[c].avg) if c in by_name else "n/a" for c in cols]])]
    seeds = sorted({len(r.seeds) for r in reports})
    parts += ["", f"Seeds per variant: {', '.join(map(str, seeds))} (median across seeds).", SCHEDULE_NOTE]
    return "\n".join(parts) + "\n"


def render_rows(reports: list[ConditionReport]) -> str:
    header = ["variant", *CONDITIONS, "avg", *(f"n_{c}" for c in CONDITIONS), "seeds"]
    lines = ["\t".join(header)]
    for r in _ordered(reports):
        cells = [r.variant]
        cells += ["" if r.accuracy.get(c) is None else repr(r.accuracy[c]) for c in CONDITIONS]
        cells.append(repr(r.avg))
        cells += [str(r.counts.get(c, 0)) for c in CONDITIONS]
        cells.append(",".join(map(str, r.seeds)))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def emit_report(reports: list[ConditionReport], out_dir: str | Path, stem: str = "report") -> Path:
    """Write ``<stem>.txt`` (tables) and ``<stem>.tsv`` (rows); returns the text path."""
    if not reports:
        raise ValueError("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / f"{stem}.txt"
    text_path.write_text(render_tables(reports))
    (out_dir / f"{stem}.tsv").write_text(render_rows(reports))
    return text_path
