"""Command-line interface.

Subcommands: gen, train-cpn, train-flow, solve-var, eval, viz.  Every
config key is also a flag; values resolve as defaults < --config file <
explicit flags.  Exit codes: 0 success, 2 usage, 3 invalid input or
config, 4 runtime failure (divergence, solver failure).
"""

import argparse
import json
import os
import sys

import numpy as np
import torch

from .datagen import GenConfig, gen_dataset, load_dataset, save_dataset
from .errors import CheckpointError
from .manifest import (
    RunManifest,
    build_config,
    config_snapshot,
    dataset_content_hash,
    known_keys,
    parse_config_file,
    write_manifest,
)
from .core import colorize_flow, epe, error_rate, error_heatmap, read_flo, save_png, write_flo
from .predictor import (
    FlowPredictor,
    FlowTrainConfig,
    load_predictor,
    save_predictor,
    train_flow,
)
from .prior import BottleneckSearchConfig, bottleneck_search, load_prior, save_prior
from .variational import VariationalConfig, solve

USAGE_EXIT = 2
VALIDATION_EXIT = 3
RUNTIME_EXIT = 4


def _add_flags(parser, cls=None, extras=()):
    """One --flag per config key; all optional, so file values can fill in."""
    names = dict(extras)
    if cls is not None:
        names.update(known_keys(cls))
    for name in names:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)
    return names


def _resolve(args, names):
    """defaults < config file < explicit flags, all as strings."""
    flat = {}
    if getattr(args, "config", None):
        for k, v in parse_config_file(args.config).items():
            if k not in names:
                raise ValueError(f"unknown config key {k!r}")
            flat[k] = v
    for k in names:
        v = getattr(args, k, None)
        if v is not None:
            flat[k] = v
    return flat


def _req(flat, key):
    if key not in flat:
        raise ValueError(f"missing required setting {key!r} (flag --{key.replace('_', '-')})")
    return flat[key]


def _opt_path(flat, key):
    """Optional path setting; manifests snapshot absent ones as "none", so
    that sentinel must read back as absent for replay to work."""
    val = flat.get(key)
    if val is None or str(val).lower() == "none":
        return None
    return val


def _write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_gen(args, names):
    flat = _resolve(args, names)
    out = _req(flat, "out")
    n = int(_req(flat, "n"))
    seed = int(flat.get("seed", "0"))
    cfg = build_config(GenConfig, flat)
    samples = gen_dataset(cfg, n, seed)
    save_dataset(samples, out, config=cfg, seed=seed)
    ds_hash = dataset_content_hash(out)
    metrics = {
        "n": n,
        "mean_photo_err": float(np.mean([s.photo_err for s in samples])),
        "mean_occlusion": float(np.mean([s.occ.mean() for s in samples])),
    }
    manifest = RunManifest(
        command="gen",
        config=config_snapshot(cfg, out=out, n=n, seed=seed),
        seeds={"seed": seed},
        dataset_path=out,
        dataset_hash=ds_hash,
        artifacts={"dataset": out},
        metrics=metrics,
    )
    write_manifest(manifest, out)
    print(f"gen: wrote {n} samples to {out} (hash {ds_hash[:12]})")
    return 0


def cmd_train_cpn(args, names):
    flat = _resolve(args, names)
    data = _req(flat, "data")
    out = _req(flat, "out")
    cfg = build_config(BottleneckSearchConfig, flat)
    samples = load_dataset(data)
    os.makedirs(out, exist_ok=True)
    res = bottleneck_search(samples, cfg)
    ckpt = os.path.join(out, "prior.pt")
    save_prior(ckpt, res.model, extra={"trials": res.trials, "exhausted": res.exhausted})
    log_path = os.path.join(out, "search_log.jsonl")
    _write_jsonl(
        log_path,
        [
            {
                "code_channels": c,
                "e_star": e,
                "steps": r.steps,
                "converged": r.converged,
            }
            for (c, e), r in zip(res.trials, res.results)
        ],
    )
    metrics = {
        "code_channels": res.trials[-1][0],
        "e_star": res.trials[-1][1],
        "exhausted": res.exhausted,
        "trials": len(res.trials),
    }
    manifest = RunManifest(
        command="train-cpn",
        config=config_snapshot(cfg, data=data, out=out),
        seeds={"seed": cfg.train.seed},
        dataset_path=data,
        dataset_hash=dataset_content_hash(data),
        artifacts={"checkpoint": ckpt, "search_log": log_path},
        metrics=metrics,
    )
    write_manifest(manifest, out)
    for c, e in res.trials:
        print(f"train-cpn: code_channels={c} e_star={e:.4f}")
    print(f"train-cpn: kept code_channels={metrics['code_channels']} (exhausted={res.exhausted})")
    return 0


def cmd_train_flow(args, names):
    flat = _resolve(args, names)
    data = _req(flat, "data")
    out = _req(flat, "out")
    cfg = build_config(FlowTrainConfig, flat)
    levels = int(flat.get("levels", "4"))
    base_width = int(flat.get("base_width", "8"))
    samples = load_dataset(data)
    eval_path = _opt_path(flat, "eval_data")
    eval_samples = load_dataset(eval_path) if eval_path else None

    prior_model = None
    prior_path = _opt_path(flat, "prior")
    if cfg.alpha > 0:
        if not prior_path:
            raise ValueError("alpha > 0 requires --prior CHECKPOINT")
        prior_model, _ = load_prior(prior_path)
    elif prior_path:
        prior_model, _ = load_prior(prior_path)

    resume = None
    resume_path = _opt_path(flat, "resume")
    if resume_path:
        model, extra = load_predictor(resume_path)
        if "optimizer" not in extra:
            raise CheckpointError(f"{resume_path}: checkpoint has no training state to resume")
        resume = extra
    else:
        model = FlowPredictor(
            levels=levels,
            base_width=base_width,
            image_channels=samples[0].img1.shape[-1],
            seed=cfg.seed,
        )
    os.makedirs(out, exist_ok=True)
    res = train_flow(samples, prior_model, cfg, model, eval_samples=eval_samples, resume=resume)
    ckpt = os.path.join(out, "predictor.pt")
    save_predictor(ckpt, res.model, extra=res.resume_state)
    log_path = os.path.join(out, "train_log.jsonl")
    _write_jsonl(log_path, res.records)
    metrics = {"steps": res.steps}
    if res.final_eval_epe is not None:
        metrics["final_eval_epe"] = res.final_eval_epe
    manifest = RunManifest(
        command="train-flow",
        config=config_snapshot(
            cfg,
            data=data,
            out=out,
            levels=levels,
            base_width=base_width,
            prior=prior_path or "none",
            eval_data=eval_path or "none",
            resume=resume_path or "none",
        ),
        seeds={"seed": cfg.seed},
        dataset_path=data,
        dataset_hash=dataset_content_hash(data),
        artifacts={"checkpoint": ckpt, "train_log": log_path},
        metrics=metrics,
    )
    write_manifest(manifest, out)
    tail = f" final_eval_epe={res.final_eval_epe:.4f}" if res.final_eval_epe is not None else ""
    print(f"train-flow: {res.steps} steps{tail}")
    return 0


def cmd_solve_var(args, names):
    flat = _resolve(args, names)
    data = _req(flat, "data")
    out = _req(flat, "out")
    cfg = build_config(VariationalConfig, flat)
    limit = int(flat.get("n", "0"))
    samples = load_dataset(data)
    if limit:
        samples = samples[:limit]
    os.makedirs(out, exist_ok=True)
    rows = []
    epes = []
    for i, s in enumerate(samples):
        flow, traces = solve(s.img1, s.img2, cfg)
        stem = os.path.join(out, f"{i:06d}")
        write_flo(stem + "_flow.flo", flow)
        with open(stem + "_trace.txt", "w") as fh:
            for level, tr in enumerate(traces):
                for v in tr:
                    fh.write(f"{level} {v:.12g}\n")
        row = {"index": i}
        if s.flow is not None:
            row["epe"] = epe(flow, s.flow)
            row["error_rate"] = error_rate(flow, s.flow)
            epes.append(row["epe"])
        rows.append(row)
    _write_jsonl(os.path.join(out, "solve_log.jsonl"), rows)
    metrics = {"n": len(samples)}
    if epes:
        metrics["mean_epe"] = float(np.mean(epes))
    manifest = RunManifest(
        command="solve-var",
        config=config_snapshot(cfg, data=data, out=out, n=limit),
        dataset_path=data,
        dataset_hash=dataset_content_hash(data),
        artifacts={"flows": out, "log": os.path.join(out, "solve_log.jsonl")},
        metrics=metrics,
    )
    write_manifest(manifest, out)
    msg = f" mean_epe={metrics['mean_epe']:.4f}" if epes else ""
    print(f"solve-var: {len(samples)} pairs{msg}")
    return 0


def _estimated_flows(flat, samples):
    """Flows to evaluate: a directory of .flo files or a predictor checkpoint."""
    flows_dir = _opt_path(flat, "flows")
    ckpt_path = _opt_path(flat, "checkpoint")
    if flows_dir:
        flows = []
        for i in range(len(samples)):
            path = os.path.join(flows_dir, f"{i:06d}_flow.flo")
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing estimated flow {path}")
            flows.append(read_flo(path))
        return flows, {"flows": flows_dir}
    if ckpt_path:
        model, _ = load_predictor(ckpt_path)
        with torch.no_grad():
            return [
                model(s.img1.astype(np.float32), s.img2.astype(np.float32)).numpy()
                for s in samples
            ], {"checkpoint": ckpt_path}
    raise ValueError("eval needs --flows DIR or --checkpoint FILE")


def cmd_eval(args, names):
    flat = _resolve(args, names)
    data = _req(flat, "data")
    out = _req(flat, "out")
    samples = load_dataset(data)
    missing = [i for i, s in enumerate(samples) if s.flow is None]
    if missing:
        raise ValueError(f"dataset at {data} lacks ground-truth flow for samples {missing[:5]}")
    flows, source = _estimated_flows(flat, samples)
    rows = []
    for i, (s, f) in enumerate(zip(samples, flows)):
        rows.append({"index": i, "epe": epe(f, s.flow), "error_rate": error_rate(f, s.flow)})
    summary = {
        "mean_epe": float(np.mean([r["epe"] for r in rows])),
        "mean_error_rate": float(np.mean([r["error_rate"] for r in rows])),
        "n": len(rows),
    }
    os.makedirs(out, exist_ok=True)
    _write_jsonl(os.path.join(out, "eval_rows.jsonl"), rows)
    table = ["index    epe         error_rate"]
    for r in rows:
        table.append(f"{r['index']:06d}   {r['epe']:<10.6f}  {r['error_rate']:<10.6f}")
    table.append(
        f"mean     {summary['mean_epe']:<10.6f}  {summary['mean_error_rate']:<10.6f}"
    )
    text = "\n".join(table) + "\n"
    with open(os.path.join(out, "eval.txt"), "w") as fh:
        fh.write(text)
    manifest = RunManifest(
        command="eval",
        config=config_snapshot(
            data=data,
            out=out,
            flows=_opt_path(flat, "flows") or "none",
            checkpoint=_opt_path(flat, "checkpoint") or "none",
        ),
        dataset_path=data,
        dataset_hash=dataset_content_hash(data),
        artifacts={**source, "rows": os.path.join(out, "eval_rows.jsonl")},
        metrics=summary,
    )
    write_manifest(manifest, out)
    sys.stdout.write(text)
    return 0


def cmd_viz(args, names):
    flat = _resolve(args, names)
    data = _req(flat, "data")
    out = _req(flat, "out")
    index = int(flat.get("index", "0"))
    samples = load_dataset(data)
    if not 0 <= index < len(samples):
        raise ValueError(f"index {index} out of range for {len(samples)} samples")
    s = samples[index]
    est = None
    if _opt_path(flat, "flows") or _opt_path(flat, "checkpoint"):
        est = _estimated_flows(flat, samples[: index + 1])[0][index]

    tiles = [
        (np.clip(s.img1, 0, 1) * 255 + 0.5).astype(np.uint8),
        (np.clip(s.img2, 0, 1) * 255 + 0.5).astype(np.uint8),
    ]
    radius = None
    if s.flow is not None:
        radius = float(np.sqrt((s.flow**2).sum(-1)).max())
        tiles.append(colorize_flow(s.flow, max_radius=radius))
    if est is not None:
        tiles.append(colorize_flow(est, max_radius=radius))
        if s.flow is not None:
            tiles.append(error_heatmap(est, s.flow))
    h, w = tiles[0].shape[:2]
    gap = 4
    canvas = np.full((h, len(tiles) * (w + gap) - gap, 3), 255, dtype=np.uint8)
    for t, tile in enumerate(tiles):
        canvas[:, t * (w + gap) : t * (w + gap) + w] = tile
    save_png(out, canvas)
    manifest = RunManifest(
        command="viz",
        config=config_snapshot(
            data=data,
            out=out,
            index=index,
            flows=_opt_path(flat, "flows") or "none",
            checkpoint=_opt_path(flat, "checkpoint") or "none",
        ),
        dataset_path=data,
        dataset_hash=dataset_content_hash(data),
        artifacts={"panel": out},
        metrics={"tiles": len(tiles)},
    )
    write_manifest(manifest, out + ".manifest.json")
    print(f"viz: wrote {out} ({len(tiles)} tiles)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowlab",
        description="Synthetic optical-flow lab: data generation, learned prior, "
        "unsupervised predictor, variational baseline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "gen": (cmd_gen, GenConfig, ("out", "n", "seed")),
        "train-cpn": (cmd_train_cpn, BottleneckSearchConfig, ("data", "out")),
        "train-flow": (
            cmd_train_flow,
            FlowTrainConfig,
            ("data", "out", "prior", "eval_data", "resume", "levels", "base_width"),
        ),
        "solve-var": (cmd_solve_var, VariationalConfig, ("data", "out", "n")),
        "eval": (cmd_eval, None, ("data", "out", "flows", "checkpoint")),
        "viz": (cmd_viz, None, ("data", "out", "index", "flows", "checkpoint")),
    }
    for name, (func, cls, extras) in specs.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value file; flags override it")
        names = _add_flags(p, cls, {k: str for k in extras})
        p.set_defaults(func=func, names=names)
    return parser


def entrypoint(argv=None):
    torch.set_num_threads(1)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE_EXIT
    try:
        return args.func(args, args.names)
    except (ValueError, KeyError, FileNotFoundError, NotADirectoryError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return VALIDATION_EXIT
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return RUNTIME_EXIT


def main():
    sys.exit(entrypoint())
