"""Command-line entry point: verification suites, training runs, record
comparison, and figure reports.

Config files are YAML key/value maps (optionally nested under an `era`
section); every flag overrides its config key.  The ERA_KIT_THREADS
environment variable caps the seed fan-out.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import yaml

from .classifier import ClassifierConfig, train_classifier
from .era_continuous import EraContinuousConfig
from .era_discrete import EraDiscreteConfig
from .era_llm import EraLlmConfig
from .grpo_toy import GrpoToyConfig, train_grpo_toy
from .records import compare_records, summarize_records, write_csv, write_run_record
from .sac import SacConfig, default_era_config, train_sac
from .verify import SUITES, run_suite

TRAIN_KINDS = ("sac", "sac-era", "classifier", "grpo-toy", "grpo-era-toy")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise click.UsageError(f"config file {path} must be a key/value map")
    return data


def _merged(config: dict, flags: dict) -> dict:
    """Config values overridden by any flag the user actually passed."""
    out = dict(config)
    for key, value in flags.items():
        if value is not None:
            out[key] = value
    return out


def _require(merged: dict, field: str):
    if field not in merged or merged[field] is None:
        raise click.UsageError(f"missing config field: {field}")
    return merged[field]


def _thread_cap(n_seeds: int) -> int:
    cap = os.environ.get("ERA_KIT_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_seeds, limit))


def _parse_seeds(text) -> list[int]:
    if isinstance(text, list):
        return [int(s) for s in text]
    try:
        return [int(s) for s in str(text).split(",") if s.strip() != ""]
    except ValueError:
        raise click.UsageError(f"bad seed list: {text!r}")


@click.group()
def main():
    """Entropy-floor activations: verification, desk-scale training, reports."""


@main.command()
@click.option("--suite", type=click.Choice(SUITES + ("all",)), default="all",
              help="Which property suite to run.")
@click.option("--seed", type=int, default=0)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Write the JSON-lines report here as well as stdout.")
def verify(suite, seed, out_dir):
    """Run the entropy-bound property suites and report pass/fail per property."""
    rows = run_suite(suite, seed=seed)
    for r in rows:
        extra = f"  ({r['note']})" if "note" in r else ""
        click.echo(f"{r['suite']}/{r['property']}: {r['status']} "
                   f"(measured {r['measured']:.6g}){extra}")
    if out_dir is not None:
        path = Path(out_dir) / f"verify_{suite}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for r in rows:
                f.write(json.dumps(r, sort_keys=True) + "\n")
        click.echo(f"report: {path}")
    failures = sum(r["status"] != "pass" for r in rows)
    if failures:
        raise SystemExit(1)


def _build_era_continuous(merged: dict, act_dim: int) -> EraContinuousConfig:
    return default_era_config(
        act_dim,
        sigma_min=float(merged.get("sigma_min", 1e-3)),
        sigma_max=float(merged.get("sigma_max", 1.0)),
        target_entropy=(float(merged["h0"]) if merged.get("h0") is not None else None),
    )


def _run_sac(kind: str, merged: dict, seed: int) -> dict:
    from .envs import ENV_SPECS

    env = merged.get("env", "pointmass")
    if env not in ENV_SPECS:
        raise click.UsageError(f"unknown env {env!r}")
    steps = int(merged.get("steps", 20_000))
    era = _build_era_continuous(merged, ENV_SPECS[env]["act_dim"]) if kind == "sac-era" else None
    cfg = SacConfig(era=era,
                    sigma_min=float(merged.get("sigma_min", 1e-3)),
                    sigma_max=float(merged.get("sigma_max", 1.0)))
    out = train_sac(env, cfg, seed, steps)
    out.pop("agent", None)
    return out


def _run_classifier(merged: dict, seed: int) -> dict:
    epochs = int(merged.get("steps", 8))
    era = None
    if merged.get("h0") is not None:
        era = EraDiscreteConfig(target_entropy=float(merged["h0"]), classes=10,
                                tau=float(merged.get("tau", 4.0)))
    out = train_classifier(ClassifierConfig(epochs=epochs, era=era), seed)
    return out


def _run_grpo(kind: str, merged: dict, seed: int) -> dict:
    steps = int(merged.get("steps", 500))
    era = None
    if kind == "grpo-era-toy":
        era = EraLlmConfig(
            omega_low=float(_require(merged, "omega_low")),
            omega_high=float(merged.get("omega_high", float("inf"))),
            k=float(merged.get("k", 2.0)),
        )
    out = train_grpo_toy(GrpoToyConfig(era=era), seed, steps)
    out.pop("final_weights", None)
    return out


@main.command()
@click.argument("kind", type=click.Choice(TRAIN_KINDS))
@click.option("--env", default=None, help="Environment for the sac kinds.")
@click.option("--steps", type=int, default=None,
              help="Env steps (sac), optimizer steps (grpo), or epochs (classifier).")
@click.option("--seeds", default=None, help="Comma-separated seed list.")
@click.option("--omega-low", type=float, default=None)
@click.option("--omega-high", type=float, default=None)
@click.option("--k", type=float, default=None)
@click.option("--h0", type=float, default=None)
@click.option("--sigma-min", type=float, default=None)
@click.option("--sigma-max", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--out-dir", type=click.Path(), default="runs")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config; flags override its keys.")
def train(kind, env, steps, seeds, omega_low, omega_high, k, h0,
          sigma_min, sigma_max, tau, out_dir, config_path):
    """Run seeded training sessions; writes run records and a summary CSV."""
    merged = _merged(_load_config(config_path), {
        "env": env, "steps": steps, "seeds": seeds, "omega_low": omega_low,
        "omega_high": omega_high, "k": k, "h0": h0, "sigma_min": sigma_min,
        "sigma_max": sigma_max, "tau": tau,
    })
    seed_list = _parse_seeds(merged.get("seeds", "0"))

    def one(seed: int) -> dict:
        if kind in ("sac", "sac-era"):
            return _run_sac(kind, merged, seed)
        if kind == "classifier":
            return _run_classifier(merged, seed)
        return _run_grpo(kind, merged, seed)

    workers = _thread_cap(len(seed_list))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seed_list))
    else:
        results = [one(s) for s in seed_list]

    out_dir = Path(out_dir)
    record_paths = []
    for seed, result in zip(seed_list, results):
        rows = result.pop("rows")
        header = {"kind": kind, **{k2: v for k2, v in result.items()
                                   if isinstance(v, (str, int, float, bool, list))}}
        path = write_run_record(out_dir / f"{kind}_seed{seed}.jsonl", header, rows)
        record_paths.append(path)
        click.echo(f"record: {path}")
    summary = write_csv(out_dir / f"{kind}_summary.csv", summarize_records(record_paths))
    click.echo(f"summary: {summary}")


@main.command()
@click.argument("records", nargs=-1, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default="runs")
def compare(records, out_dir):
    """Aligned per-step metric deltas between two or more run records."""
    if len(records) < 2:
        raise click.UsageError("need at least two run records to compare")
    try:
        rows = compare_records(list(records))
    except ValueError as exc:
        raise click.ClickException(str(exc))
    path = write_csv(Path(out_dir) / "compare.csv", rows)
    click.echo(f"comparison: {path}")


@main.command()
@click.argument("records", nargs=-1, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default="reports")
def report(records, out_dir):
    """Render learning-curve figures plus a summary CSV from run records."""
    from .plots import render_run_figures

    if not records:
        raise click.UsageError("need at least one run record")
    out_dir = Path(out_dir)
    try:
        summary = write_csv(out_dir / "summary.csv", summarize_records(list(records)))
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"summary: {summary}")
    for fig in render_run_figures(list(records), out_dir):
        click.echo(f"figure: {fig}")


if __name__ == "__main__":
    main()
