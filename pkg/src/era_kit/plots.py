"""Figure rendering for run records.

Renders learning curves from JSON-lines run records to PNG files.  Kept
separate from the comparison/summary path, which stays data-only; the report
command writes these figures next to the delimited output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .records import read_run_record

# Metrics worth a panel when present, with their display labels.
_PANEL_METRICS = [
    ("return", "eval return"),
    ("entropy", "policy entropy"),
    ("gaussian_entropy", "policy entropy"),
    ("h_resp_mean", "mean response entropy"),
    ("reward_mean", "mean reward"),
    ("test_accuracy", "test accuracy"),
    ("mean_predictive_entropy", "mean predictive entropy"),
    ("critic_loss", "critic loss"),
    ("train_loss", "train loss"),
]


def _steps_and_series(rows: list[dict], key: str):
    pairs = [(r.get("step", r.get("epoch", i)), r[key])
             for i, r in enumerate(rows) if key in r]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def render_run_figures(record_paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """One figure per metric panel, overlaying every record; returns the
    paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded = [(Path(p), *read_run_record(p)) for p in record_paths]
    written = []
    seen_labels = set()
    for key, label in _PANEL_METRICS:
        if label in seen_labels:
            continue
        any_data = False
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for path, header, rows in loaded:
            xs, ys = _steps_and_series(rows, key)
            if not xs:
                continue
            any_data = True
            name = header.get("kind", path.stem)
            seed = header.get("seed")
            ax.plot(xs, ys, label=f"{name} seed {seed}" if seed is not None else name)
        if not any_data:
            plt.close(fig)
            continue
        seen_labels.add(label)
        ax.set_xlabel("step")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        target = out_dir / f"{key}.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    return written
