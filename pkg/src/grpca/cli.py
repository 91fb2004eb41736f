"""Command-line front end.

Subcommands:

* ``run``    -- execute a sweep from a JSON config, write rows/tables/plots
* ``tables`` -- re-aggregate an existing rows.csv into the three tables
* ``plot``   -- emit an SVG for one metric from an existing rows.csv
* ``gen``    -- export the config's synthetic bundles as CSV directories
* ``fit``    -- fit a single model on an exported bundle and score it
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .datagen import load_bundle, save_bundle, generate_bundle
from .errors import GrpcaError
from .graphs import density_to_params
from .metrics import alignment, laplacian_energy, r2_global, selectivity
from .models import GrpcaConfig, fit_grpca, fit_pca, fit_sparse_pca, reconstruct, save_model
from .numerics import RandomSource
from .precision import glasso_cv, oracle_precision
from .svgplot import emit_density_plot


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    overrides = {}
    if args.preset:
        overrides["preset"] = args.preset
    if args.out:
        overrides["output_dir"] = args.out
    if args.threads:
        overrides["threads"] = args.threads
    if overrides:
        raw = json.loads(Path(args.config).read_text())
        raw = {harness._JSON_ALIASES.get(k, k): v for k, v in raw.items()}
        raw.update(overrides)
        cfg = harness.build_config(**raw)
    result = harness.run_experiment(cfg)
    out = harness.write_outputs(result, cfg.output_dir)
    ok = len(result.ok_rows())
    print(f"wrote {len(result.rows)} rows ({len(result.rows) - ok} failed) to {out}")
    return 0


def _cmd_tables(args) -> int:
    rows = harness.load_rows_csv(Path(args.indir) / "rows.csv")
    for metric in harness.TABLE_METRICS:
        table = harness.group_stats(rows, metric)
        name = {"selectivity": "selectivity", "alignment": "alignment", "r2_global": "r2"}[metric]
        (Path(args.indir) / f"tables_{name}.csv").write_text(harness.render_table_csv(table))
        text = harness.render_table_text(table, metric)
        (Path(args.indir) / f"tables_{name}.txt").write_text(text)
        print(text)
    return 0


def _cmd_plot(args) -> int:
    rows = harness.load_rows_csv(Path(args.indir) / "rows.csv")
    svg = emit_density_plot(rows, args.metric)
    plots = Path(args.indir) / "plots"
    plots.mkdir(exist_ok=True)
    path = plots / f"{args.metric}.svg"
    path.write_text(svg)
    print(f"wrote {path}")
    return 0


def _cmd_gen(args) -> int:
    cfg = harness.load_config(args.config)
    out = Path(args.out or cfg.output_dir) / "bundles"
    for ti, topology in enumerate(cfg.topologies):
        for di, density in enumerate(cfg.density_grid):
            kind, achieved = density_to_params(
                topology, cfg.p, density, rewire_prob=cfg.ws_rewire_prob
            )
            for seed in cfg.seeds:
                bundle_seed = RandomSource(seed).child(ti, di).derived_seed()
                bundle = generate_bundle(
                    kind, cfg.generator_config(seed=bundle_seed), topology_label=topology
                )
                name = f"{topology}_d{achieved:.4f}_s{seed}"
                save_bundle(bundle, out / name)
                print(f"wrote {out / name}")
    return 0


def _cmd_fit(args) -> int:
    bundle = load_bundle(args.data)
    x = bundle.x
    rank = args.rank or bundle.config.r
    if args.method == "pca":
        model = fit_pca(x, rank)
    elif args.method == "sparse_pca":
        model = fit_sparse_pca(x, rank, args.alpha or 0.05 * x.shape[0])
    elif args.method == "grpca":
        if args.graph == "oracle":
            graph = oracle_precision(bundle.theta_true).support_graph
        elif args.graph == "learn":
            graph = glasso_cv(x).support_graph
        else:  # the bundle's exported edge list
            graph = bundle.graph
        cfg = GrpcaConfig(
            r=rank,
            alpha=args.alpha or 0.05 * x.shape[0],
            lam=args.lam if args.lam is not None else 1.0 * x.shape[0],
        )
        model = fit_grpca(x, graph, cfg)
    else:
        raise GrpcaError(f"unknown method {args.method!r}")

    out = Path(args.out or (Path(args.data) / f"model_{args.method}"))
    save_model(model, out)
    xhat = reconstruct(model, x)
    scores: dict = {"method": args.method, "rank": rank}
    if bundle.v_nu.shape[1]:
        r2t, r2n, delta = selectivity(x, xhat, bundle.v_star, bundle.v_nu)
        scores.update(r2_true=r2t, r2_nuis=r2n, selectivity=delta)
    align, _ = alignment(model.v, bundle.v_star)
    scores["alignment"] = align
    scores["r2_global"] = r2_global(x, xhat)
    scores["laplacian_energy"] = laplacian_energy(bundle.graph, model.v)
    (out / "scores.json").write_text(json.dumps(scores, indent=2, sort_keys=True))
    print(json.dumps(scores, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grpca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--preset", choices=sorted(harness.SCALE_PRESETS), default=None)
    p_run.set_defaults(func=_cmd_run)

    p_tab = sub.add_parser("tables", help="aggregate rows.csv into tables")
    p_tab.add_argument("--in", dest="indir", required=True)
    p_tab.set_defaults(func=_cmd_tables)

    p_plot = sub.add_parser("plot", help="emit a density-sweep SVG")
    p_plot.add_argument("--in", dest="indir", required=True)
    p_plot.add_argument("--metric", choices=harness.TABLE_METRICS, default="selectivity")
    p_plot.set_defaults(func=_cmd_plot)

    p_gen = sub.add_parser("gen", help="export synthetic bundles only")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(func=_cmd_gen)

    p_fit = sub.add_parser("fit", help="fit one model on an exported bundle")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--method", choices=["pca", "sparse_pca", "grpca"], required=True)
    p_fit.add_argument("--graph", choices=["edges", "oracle", "learn"], default="oracle")
    p_fit.add_argument("--rank", type=int, default=None)
    p_fit.add_argument("--alpha", type=float, default=None)
    p_fit.add_argument("--lambda", dest="lam", type=float, default=None)
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GrpcaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
