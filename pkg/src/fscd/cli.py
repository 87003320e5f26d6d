"""Command-line pipeline.

Five subcommands wire the library end to end: `clean` turns a raw tick
file into duration files, `simulate` draws synthetic sessions from a
preset, `fit` runs the posterior sampler on duration files, `gir` runs
the prior-invariance harness, and `summarize` turns a draw store into
tables and curve files.

Settings are layered: preset defaults, then an optional JSON config
file, then command-line flags, the later layers winning.  Every
command writes a manifest recording the effective configuration next
to its outputs, so any artifact can be reproduced from its directory
alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from fscd import __version__
from fscd.data import (
    CleanConfig,
    aggregate_gw,
    aggregate_same_second,
    clean,
    descriptive_stats,
    format_stats,
    read_durations,
    read_ticks,
    to_durations,
    write_durations,
)
from fscd.density import BernsteinWeights, ClusterLaw
from fscd.diagnostics import (
    classification_summary,
    curve_export,
    format_summary,
    summarize,
    write_curves,
)
from fscd.gir import GirConfig, run_gir
from fscd.mcmc import DrawStore, SamplerConfig, adapt_and_run
from fscd.model import DurationData, ModelParams, simulate
from fscd.priors import load_preset
from fscd.splines import SplineBasis


@dataclass
class RunManifest:
    """Reproducibility record dropped into every output directory."""

    command: str
    config: dict
    config_path: str | None
    preset: str | None
    seed: int | None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    created: str = ""

    def write(self, outdir: Path) -> Path:
        self.created = datetime.now(timezone.utc).isoformat(timespec="seconds")
        path = outdir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _resolve_config(path: str | None) -> tuple[dict, str | None]:
    """Load the JSON config layer; bare names look in $FSCD_CONFIG_DIR."""
    if path is None:
        return {}, None
    p = Path(path)
    if not p.exists() and os.sep not in path:
        base = os.environ.get("FSCD_CONFIG_DIR")
        if base:
            p = Path(base) / path
    if not p.exists():
        raise FileNotFoundError(f"config file {path!r} not found")
    return json.loads(p.read_text()), str(p)


def _layer(defaults: dict, cfg: dict, cli: dict) -> dict:
    """defaults < config file < explicit command-line flags."""
    out = dict(defaults)
    for k in out:
        if k in cfg and cfg[k] is not None:
            out[k] = cfg[k]
        if k in cli and cli[k] is not None:
            out[k] = cli[k]
    return out


def _center_params(hyper, discrete: bool, regular_only: bool = False) -> ModelParams:
    """Deterministic parameter values at the prior centers."""
    kw = dict(
        phi=float(np.exp(hyper.theta_mean[0])),
        sigma=float(np.exp(hyper.theta_mean[1])),
        delta=np.full(hyper.L, hyper.delta_loc),
        tau=hyper.tau_mean,
        beta=BernsteinWeights(hyper.bernstein_mean),
    )
    if not regular_only:
        kw["xi00"] = float(hyper.xi0_beta[0] / hyper.xi0_beta.sum())
        kw["xi11"] = float(hyper.xi1_beta[0] / hyper.xi1_beta.sum())
        if discrete:
            kw["cluster"] = ClusterLaw.discrete(
                float(hyper.zeta_beta[0] / hyper.zeta_beta.sum())
            )
        else:
            kw["cluster"] = ClusterLaw.continuous(
                float(hyper.lambda1_gamma[0] / hyper.lambda1_gamma[1]),
                float(hyper.lambda2_gamma[0] / hyper.lambda2_gamma[1]),
                float(hyper.pi_beta[0] / hyper.pi_beta.sum()),
            )
    return ModelParams(**kw)


def _read_duration_input(path: str) -> DurationData:
    """A duration file, or a directory of per-day duration files."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("day_*.csv"))
        if not files:
            raise FileNotFoundError(f"no day_*.csv files under {path}")
        parts = [read_durations(f) for f in files]
        times = [t for part in parts for t in part.times]
        return DurationData(times, discrete=all(part.discrete for part in parts))
    return read_durations(p)


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---- clean ----------------------------------------------------------


def cmd_clean(args) -> int:
    cfg, cfg_path = _resolve_config(args.config)
    eff = _layer(
        {"aggregate": "none", "delimiter": ",", "columns": None, "clean": {}},
        cfg,
        {"aggregate": args.aggregate},
    )
    clean_cfg = CleanConfig(**eff["clean"])
    out = _outdir(args.output)
    ticks = read_ticks(args.input, delimiter=eff["delimiter"], columns=eff["columns"])
    kept = clean(ticks, clean_cfg)
    if eff["aggregate"] == "gw":
        data = aggregate_gw(kept)
    else:
        data = to_durations(kept)
        if eff["aggregate"] == "same-second":
            data = aggregate_same_second(data)
    write_durations(data, out / "durations.csv")
    (out / "stats.txt").write_text(format_stats(descriptive_stats(data)) + "\n")
    eff["clean"] = asdict(clean_cfg)
    RunManifest(
        command="clean",
        config=eff,
        config_path=cfg_path,
        preset=None,
        seed=None,
        inputs=[args.input],
        outputs=["durations.csv", "stats.txt"],
    ).write(out)
    return 0


# ---- simulate -------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg, cfg_path = _resolve_config(args.config)
    eff = _layer(
        {"preset": "tsx", "days": 1, "seed": 0, "discrete": False, "J": None},
        cfg,
        {
            "preset": args.preset,
            "days": args.days,
            "seed": args.seed,
            "discrete": args.discrete or None,
            "J": args.J,
        },
    )
    preset = load_preset(eff["preset"], J=eff["J"])
    basis = SplineBasis(preset.t_open, preset.t_close, preset.hyper.M)
    params = _center_params(preset.hyper, eff["discrete"])
    rng = np.random.default_rng(eff["seed"])
    data, _ = simulate(params, eff["days"], basis, rng, discrete=eff["discrete"])
    out = _outdir(args.output)
    names = []
    for d in range(data.D):
        name = f"day_{d:02d}.csv"
        write_durations(
            DurationData([data.times[d]], discrete=data.discrete), out / name
        )
        names.append(name)
    write_durations(data, out / "durations.csv")
    (out / "stats.txt").write_text(format_stats(descriptive_stats(data)) + "\n")
    RunManifest(
        command="simulate",
        config=eff,
        config_path=cfg_path,
        preset=preset.name,
        seed=eff["seed"],
        outputs=names + ["durations.csv", "stats.txt"],
    ).write(out)
    return 0


# ---- fit ------------------------------------------------------------


def _fit_one(payload: dict) -> str:
    """One independent chain; a module-level function so worker
    processes can import it."""
    data = _read_duration_input(payload["input"])
    preset = load_preset(payload["preset"], J=payload["J"])
    basis = SplineBasis(preset.t_open, preset.t_close, preset.hyper.M)
    scfg = SamplerConfig(
        burn_in=payload["burnin"],
        retained=payload["sweeps"],
        seed=payload["seed"],
        thinning=payload["thin"],
        discrete=payload["discrete"],
        regular_only=payload["model"] == "regular",
    )
    store = adapt_and_run(data, preset.hyper, basis, scfg)
    store.save(payload["out"])
    return payload["out"]


def cmd_fit(args) -> int:
    cfg, cfg_path = _resolve_config(args.config)
    eff = _layer(
        {
            "preset": "tsx",
            "model": "all",
            "discrete": False,
            "J": None,
            "sweeps": 2000,
            "burnin": 1000,
            "thin": 1,
            "seed": 0,
            "chains": 1,
        },
        cfg,
        {
            "preset": args.preset,
            "model": args.model,
            "discrete": args.discrete or None,
            "J": args.J,
            "sweeps": args.sweeps,
            "burnin": args.burnin,
            "thin": args.thin,
            "seed": args.seed,
            "chains": args.chains,
        },
    )
    preset = load_preset(eff["preset"], J=eff["J"])
    if eff["model"] == "regular" and preset.hyper.xi0_beta is not None:
        warnings.warn(
            "regular-only fit: the preset's cluster and regime priors are ignored"
        )
    out = _outdir(args.output)
    base = {
        "input": args.input,
        "preset": eff["preset"],
        "J": eff["J"],
        "burnin": eff["burnin"],
        "sweeps": eff["sweeps"],
        "thin": eff["thin"],
        "discrete": eff["discrete"],
        "model": eff["model"],
    }
    k = int(eff["chains"])
    if k == 1:
        jobs = [{**base, "seed": eff["seed"], "out": str(out / "draws.npz")}]
        written = [_fit_one(jobs[0])]
    else:
        jobs = [
            {**base, "seed": eff["seed"] + i, "out": str(out / f"draws_chain{i:02d}.npz")}
            for i in range(k)
        ]
        workers = min(k, os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            written = list(pool.map(_fit_one, jobs))
    RunManifest(
        command="fit",
        config=eff,
        config_path=cfg_path,
        preset=preset.name,
        seed=eff["seed"],
        inputs=[args.input],
        outputs=[Path(w).name for w in written],
    ).write(out)
    return 0


# ---- gir ------------------------------------------------------------


def cmd_gir(args) -> int:
    cfg, cfg_path = _resolve_config(args.config)
    eff = _layer(
        {
            "preset": "gir",
            "variant": "continuous",
            "sweeps": 200_000,
            "seed": 0,
            "n_obs": 50,
        },
        cfg,
        {
            "preset": args.preset,
            "variant": args.variant,
            "sweeps": args.sweeps,
            "seed": args.seed,
            "n_obs": args.n_obs,
        },
    )
    out = _outdir(args.output)
    gcfg = GirConfig(
        sweeps=eff["sweeps"],
        preset=eff["preset"],
        discrete=eff["variant"] == "discrete",
        seed=eff["seed"],
        n_obs=eff["n_obs"],
        checkpoint_path=str(out / "gir.npz"),
    )
    progress = None
    if not args.quiet:
        progress = lambda done, total: print(
            f"\r{done}/{total} sweeps", end="", file=sys.stderr, flush=True
        )
    result = run_gir(gcfg, progress=progress)
    if progress is not None:
        print(file=sys.stderr)
    result.save(out / "gir.npz")
    (out / "report.txt").write_text(result.report().format() + "\n")
    RunManifest(
        command="gir",
        config=eff,
        config_path=cfg_path,
        preset=eff["preset"],
        seed=eff["seed"],
        outputs=["gir.npz", "report.txt"],
    ).write(out)
    return 0


# ---- summarize ------------------------------------------------------


def cmd_summarize(args) -> int:
    cfg, cfg_path = _resolve_config(args.config)
    eff = _layer(
        {"preset": None, "batch_len": None, "durations": None},
        cfg,
        {"preset": args.preset, "batch_len": args.batch_len, "durations": args.durations},
    )
    store = DrawStore.load(args.input)
    out = _outdir(args.output)
    rows = summarize(store, batch_len=eff["batch_len"])
    (out / "summary.txt").write_text(format_summary(rows) + "\n")
    written = ["summary.txt"]
    if eff["durations"] is not None and store.meta["variant"] == "all":
        data = _read_duration_input(eff["durations"])
        y = np.concatenate([np.diff(t) for t in data.times])
        cls = classification_summary(store.s_draws(), y)
        (out / "classification.txt").write_text(cls.count_table() + "\n")
        written.append("classification.txt")
    if eff["preset"] is not None:
        preset = load_preset(eff["preset"])
        basis = SplineBasis(preset.t_open, preset.t_close, preset.hyper.M)
        curves = curve_export(store, basis)
        for name in write_curves(curves, out / "curves"):
            written.append(f"curves/{name}")
    RunManifest(
        command="summarize",
        config=eff,
        config_path=cfg_path,
        preset=eff["preset"],
        seed=None,
        inputs=[args.input],
        outputs=written,
    ).write(out)
    return 0


# ---- parser ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fscd", description="transaction-duration model pipeline"
    )
    ap.add_argument("--version", action="version", version=f"fscd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="tick file to duration files")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--config")
    p.add_argument("--aggregate", choices=["none", "same-second", "gw"])
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("simulate", help="draw synthetic sessions from a preset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--days", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--discrete", action="store_true")
    p.add_argument("--J", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="posterior sampling on duration files")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--model", choices=["all", "regular"])
    p.add_argument("--discrete", action="store_true")
    p.add_argument("--J", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gir", help="prior-invariance correctness harness")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--variant", choices=["continuous", "discrete"])
    p.add_argument("--sweeps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-obs", type=int, dest="n_obs")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_gir)

    p = sub.add_parser("summarize", help="tables and curves from a draw store")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--durations")
    p.add_argument("--batch-len", type=int, dest="batch_len")
    p.set_defaults(func=cmd_summarize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        report = {"error": {"type": type(e).__name__, "message": str(e)}}
        print(json.dumps(report), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
