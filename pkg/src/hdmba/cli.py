"""Command-line entry point: ``hdmba <command> ...``.

Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 numeric failure.
Options may also come from a flat ``key = value`` file given with
``--config``; explicit flags win over the file, the file wins over defaults.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import metrics
from .cube import HsiCube, read_cube, write_cube
from .haze import (STANDARD_ABUNDANCES, STANDARD_PAIRS_PER_SCENE, STANDARD_SCENES,
                   STANDARD_THICKNESS_LEVELS, Recipe, build_dataset, plan_dataset)
from .network import (ABLATION_ROWS, FULL_CHANNELS, HDMba, ModelConfig, dehaze,
                      parameter_count, parameter_report)
from .tensor import ShapeError
from .trainer import NonFiniteLossError, TrainConfig, load_pairs, train

log = logging.getLogger("hdmba")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------------------
# option plumbing

MODEL_DEFAULTS = {
    "channels": 64, "rdm": 4, "dml": 4, "window": 8, "d_state": 16, "expansion": 2,
    "dt_rank": None, "mlp_ratio": 2, "bidirectional": False, "tail_fusion": "add",
    "ablate": "", "mlp": True, "theta1": 1.0, "theta2": 0.1, "dtype": "float32", "model_seed": 0,
}
TRAIN_DEFAULTS = {
    "lr": 1e-4, "lr_min": 0.0, "iterations": 10_000, "batch": 4, "crop": 64, "crop_test": 128,
    "seed": 0, "checkpoint_every": 0, "clip_grad": None, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
}
_TYPES = {
    "channels": int, "rdm": int, "dml": int, "window": int, "d_state": int, "expansion": int,
    "dt_rank": int, "mlp_ratio": int, "theta1": float, "theta2": float, "model_seed": int,
    "lr": float, "lr_min": float, "iterations": int, "batch": int, "crop": int, "crop_test": int,
    "seed": int, "checkpoint_every": int, "clip_grad": float, "beta1": float, "beta2": float,
    "eps": float, "bands": int,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    out = {}
    for key, raw in parser["run"].items():
        key = key.replace("-", "_")
        if key in ("bidirectional", "mlp"):
            out[key] = _parse_bool(raw)
        elif key in _TYPES:
            try:
                out[key] = None if raw.strip().lower() == "none" else _TYPES[key](raw)
            except ValueError:
                raise UsageError(f"config {path}: bad value for {key}: {raw!r}") from None
        else:
            out[key] = raw.strip()
    return out


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_opts = read_config_file(args.config)
        unknown = set(file_opts) - set(defaults) - {"bands"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_opts)
    for key in list(defaults) + ["bands"]:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def write_resolved(path: Path, opts: dict) -> None:
    lines = [f"{k} = {v}" for k, v in sorted(opts.items())]
    path.write_text("\n".join(lines) + "\n")


def parse_ablation(text: str, mlp: bool) -> dict:
    flags = {"use_ssm": True, "use_dconv": True, "use_gate": True, "use_mlp": mlp}
    known = {"no-ssm": "use_ssm", "no-dconv": "use_dconv", "no-gate": "use_gate", "no-mlp": "use_mlp"}
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        if item not in known:
            raise UsageError(f"unknown ablation {item!r}; choose from {sorted(known)}")
        flags[known[item]] = False
    return flags


def model_config_from(opts: dict, bands: int) -> ModelConfig:
    try:
        return ModelConfig(
            bands=bands, channels=opts["channels"], rdm_count=opts["rdm"], dml_per_rdm=opts["dml"],
            window=opts["window"], d_state=opts["d_state"], expansion=opts["expansion"],
            dt_rank=opts["dt_rank"], mlp_ratio=opts["mlp_ratio"], bidirectional=bool(opts["bidirectional"]),
            tail_fusion=opts["tail_fusion"], theta1=opts["theta1"], theta2=opts["theta2"],
            dtype=opts["dtype"], seed=opts["model_seed"], **parse_ablation(opts["ablate"], opts["mlp"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def train_config_from(opts: dict) -> TrainConfig:
    try:
        return TrainConfig(
            lr0=opts["lr"], beta1=opts["beta1"], beta2=opts["beta2"], eps=opts["eps"],
            batch=opts["batch"], iterations=opts["iterations"], crop_train=opts["crop"],
            crop_test=opts["crop_test"], theta1=opts["theta1"], theta2=opts["theta2"],
            seed=opts["seed"], lr_min=opts["lr_min"], checkpoint_every=opts["checkpoint_every"],
            clip_grad_norm=opts["clip_grad"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--channels", type=int, help="feature width C (default 64)")
    g.add_argument("--rdm", type=int, help="number of residual blocks I (default 4)")
    g.add_argument("--dml", type=int, help="Mamba layers per block K (default 4)")
    g.add_argument("--window", type=int, help="window size M (default 8)")
    g.add_argument("--d-state", type=int, help="SSM state size N (default 16)")
    g.add_argument("--expansion", type=int, help="inner width factor (default 2)")
    g.add_argument("--dt-rank", type=int, help="rank of the step-size projection (default ceil(C_inner/16))")
    g.add_argument("--mlp-ratio", type=int, help="MLP hidden width factor (default 2)")
    g.add_argument("--bidirectional", action="store_true", default=None, help="also scan each window in reverse")
    g.add_argument("--tail-fusion", choices=("add", "concat"), help="how shallow features join the tail")
    g.add_argument("--ablate", help="comma list of no-ssm,no-dconv,no-gate,no-mlp")
    g.add_argument("--mlp", dest="mlp", action="store_true", default=None, help="keep the MLP (default)")
    g.add_argument("--no-mlp", dest="mlp", action="store_false", help="drop the MLP")
    g.add_argument("--theta1", type=float, help="MSE weight (default 1)")
    g.add_argument("--theta2", type=float, help="L1 weight (default 0.1)")
    g.add_argument("--dtype", choices=("float32", "float64"))
    g.add_argument("--model-seed", type=int, help="parameter init seed")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float, help="initial learning rate (default 1e-4)")
    g.add_argument("--lr-min", type=float, help="final cosine learning rate (default 0)")
    g.add_argument("--iterations", type=int, help="optimizer steps (default 10000)")
    g.add_argument("--batch", type=int, help="crops per step (default 4)")
    g.add_argument("--crop", type=int, help="training crop size (default 64)")
    g.add_argument("--crop-test", type=int, help="evaluation crop size (default 128)")
    g.add_argument("--seed", type=int, help="sampler seed")
    g.add_argument("--checkpoint-every", type=int, help="save every N steps (0: final only)")
    g.add_argument("--clip-grad", type=float, help="clip the global gradient norm")
    g.add_argument("--beta1", type=float)
    g.add_argument("--beta2", type=float)
    g.add_argument("--eps", type=float)


# ---------------------------------------------------------------------------------------
# commands


def _load_checkpoint(path) -> ckpt_io.Checkpoint:
    try:
        return ckpt_io.load(path)
    except ckpt_io.CheckpointError as exc:
        raise UsageError(str(exc)) from None


def cmd_synthesize(args) -> int:
    def fill(name, value):
        if getattr(args, name) is None:
            setattr(args, name, value)

    if args.standard_scale:
        # unset flags take the standard recipe: 100 scenes x 20 sampled cells of the 20 x 5 grid
        fill("scenes", STANDARD_SCENES)
        fill("pairs_per_scene", STANDARD_PAIRS_PER_SCENE)
    fill("scenes", 10)
    fill("thickness_levels", STANDARD_THICKNESS_LEVELS)
    fill("abundances", STANDARD_ABUNDANCES)
    values = None
    if args.abundance_values:
        try:
            values = tuple(float(v) for v in args.abundance_values.split(","))
        except ValueError:
            raise UsageError(f"bad --abundance-values {args.abundance_values!r}") from None
        if len(values) != args.abundances:
            raise UsageError(f"--abundances {args.abundances} but {len(values)} --abundance-values")
    elif args.abundances >= 1:
        values = tuple(float(v) for v in np.linspace(0.2, 1.0, args.abundances)) \
            if args.abundances > 1 else (1.0,)
    try:
        recipe = Recipe(n_scenes=args.scenes, thickness_levels=args.thickness_levels,
                        abundances=values or (), width=args.width or args.size,
                        height=args.height or args.size, bands=args.bands, seed=args.seed,
                        spectral_decay=args.spectral_decay, test_fraction=args.test_fraction,
                        pairs_per_scene=args.pairs_per_scene)
    except ValueError as exc:
        raise UsageError(f"invalid recipe: {exc}") from None
    entries = plan_dataset(recipe) if args.dry_run else build_dataset(args.out, recipe)
    n_test = sum(e["split"] == "test" for e in entries)
    manifest = None if args.dry_run else str(Path(args.out) / "manifest.json")
    print(json.dumps({"manifest": manifest, "pairs": len(entries),
                      "train": len(entries) - n_test, "test": n_test}))
    return EXIT_OK


def cmd_train(args) -> int:
    opts = resolve(args, {**MODEL_DEFAULTS, **TRAIN_DEFAULTS})
    if not args.data:
        raise UsageError("train needs --data MANIFEST")
    try:
        pairs = load_pairs(args.data, split="train")
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise OSError(f"cannot load dataset {args.data}: {exc}") from exc
    if not pairs:
        raise UsageError("dataset has no training pairs")
    bands = pairs[0].hazy.shape[2]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resume = _load_checkpoint(args.resume) if args.resume else None
    if resume is not None:
        mcfg = ModelConfig.from_dict(resume.model_config)
        tcfg = TrainConfig.from_dict(resume.train_config)
    else:
        mcfg = model_config_from(opts, bands)
        tcfg = train_config_from(opts)
    if mcfg.bands != bands:
        raise UsageError(f"model expects {mcfg.bands} bands, data has {bands}")
    write_resolved(out / "config.txt", {**opts, "bands": bands, "data": args.data})
    model = HDMba(mcfg)
    result = train(model, pairs, tcfg, run_dir=out, resume=resume, stop_at=args.stop_at)
    last = result.history[-1] if result.history else (None, None, float("nan"))
    print(json.dumps({"run_dir": str(out), "steps": result.state.t, "final_loss": last[2],
                      "params": parameter_count(model)}))
    return EXIT_OK


def _dehaze_tiled(model: HDMba, data: np.ndarray, tile: int) -> np.ndarray:
    if tile <= 0 or (data.shape[0] <= tile and data.shape[1] <= tile):
        return dehaze(model, data)
    m = model.config.window
    tile = max(m, tile - tile % m)
    out = np.empty(data.shape, dtype=model.dtype)
    for y in range(0, data.shape[0], tile):
        for x in range(0, data.shape[1], tile):
            out[y:y + tile, x:x + tile] = dehaze(model, data[y:y + tile, x:x + tile])
    return out


def cmd_init(args) -> int:
    opts = resolve(args, MODEL_DEFAULTS)
    if opts.get("bands") is None:
        raise UsageError("init needs --bands")
    model = HDMba(model_config_from(opts, opts["bands"]))
    ckpt_io.save(args.out, ckpt_io.from_model(model))
    print(json.dumps({"checkpoint": args.out, "params": parameter_count(model)}))
    return EXIT_OK


def cmd_dehaze(args) -> int:
    ck = _load_checkpoint(args.checkpoint)
    model = ckpt_io.to_model(ck)
    cube = read_cube(args.input)
    if cube.bands != model.config.bands:
        raise UsageError(f"cube has {cube.bands} bands, checkpoint expects {model.config.bands}")
    out = _dehaze_tiled(model, cube.data, args.tile)
    write_cube(args.output, HsiCube(out.astype(np.float32), cube.wavelengths_nm))
    print(json.dumps({"output": args.output, "shape": list(out.shape)}))
    return EXIT_OK


def _report_summary(reports: list[metrics.MetricReport]) -> dict:
    def avg(key):
        vals = [getattr(r, key) for r in reports]
        return None if any(math.isinf(v) for v in vals) else float(np.mean(vals))
    return {"pairs": len(reports), "ssim": avg("ssim"), "psnr": avg("psnr"),
            "identical": all(r.identical for r in reports), "uqi": avg("uqi"),
            "sam": avg("sam"), "ag": avg("ag")}


def cmd_evaluate(args) -> int:
    model = ckpt_io.to_model(_load_checkpoint(args.checkpoint)) if args.checkpoint else None
    jobs = []
    if args.pair:
        est, ref = read_cube(args.pair[0]), read_cube(args.pair[1])
        jobs.append(("pair", est, ref, False))
    elif args.manifest:
        root_entries = load_pairs(args.manifest, split=args.split if args.split != "all" else None)
        for p in root_entries:
            jobs.append((p.entry["hazy_path"], HsiCube(p.hazy, p.wavelengths_nm),
                         HsiCube(p.clean, p.wavelengths_nm), True))
    else:
        raise UsageError("evaluate needs --manifest or --pair")
    if not jobs:
        raise UsageError("nothing to evaluate")
    reports, per_pair = [], []
    for name, est, ref, needs_model in jobs:
        if est.data.shape != ref.data.shape:
            raise UsageError(f"{name}: shape mismatch {est.data.shape} vs {ref.data.shape}")
        data = est.data
        if model is not None and needs_model:
            if data.shape[2] != model.config.bands:
                raise UsageError(f"{name}: {data.shape[2]} bands, checkpoint expects {model.config.bands}")
            data = _dehaze_tiled(model, data, args.tile)
        try:
            rep = metrics.evaluate_pair(data, ref.data, ref.wavelengths_nm, args.peak)
        except metrics.MetricError as exc:
            raise UsageError(f"{name}: {exc}") from None
        reports.append(rep)
        per_pair.append({"name": name, **rep.to_json()})
    summary = _report_summary(reports)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_report_json(out / "report.json", {"summary": summary, "pairs": per_pair,
                                                     "config": metrics.metric_config(args.peak)})
    wl = reports[0].wavelengths_nm
    ssim_b = np.mean([r.ssim_band for r in reports], axis=0)
    psnr_b = np.mean([r.psnr_band for r in reports], axis=0)
    metrics.write_curve_csv(out / "bandwise.csv", list(zip(wl, map(float, ssim_b), map(float, psnr_b))))
    print(json.dumps(summary))
    return EXIT_OK


def cmd_params(args) -> int:
    if args.checkpoint:
        model = ckpt_io.to_model(_load_checkpoint(args.checkpoint))
    else:
        opts = resolve(args, MODEL_DEFAULTS)
        if args.full:
            opts.update(channels=opts["channels"] if args.channels else FULL_CHANNELS, rdm=4, dml=4)
            if args.window is None:
                opts["window"] = 8
        bands = opts.get("bands") or (305 if args.full else None)
        if bands is None:
            raise UsageError("params needs --checkpoint, --bands or --full")
        model = HDMba(model_config_from(opts, bands))
    report = parameter_report(model)
    total = parameter_count(model)
    for key, n in report.items():
        print(f"{key:<10} {n:>12,d}")
    print(f"{'total':<10} {total:>12,d}  ({total / 1e6:.2f} M)")
    if args.json:
        Path(args.json).write_text(json.dumps({"groups": report, "total": total,
                                               "config": model.config.to_dict()}, indent=1) + "\n")
    return EXIT_OK


def cmd_spectra(args) -> int:
    if not args.pixel:
        raise UsageError("spectra needs at least one --pixel X Y")
    rows = []
    for path in args.cubes:
        cube = read_cube(path)
        for x, y in args.pixel:
            try:
                spec = metrics.extract_spectrum(cube, x, y)
            except IndexError as exc:
                raise UsageError(f"{path}: {exc}") from None
            rows.extend((path, x, y, wl, v) for wl, v in spec)
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["cube", "x", "y", "wavelength_nm", "value"])
        for path, x, y, wl, v in rows:
            wr.writerow([path, x, y, repr(wl), repr(v)])
    print(json.dumps({"output": args.out, "rows": len(rows)}))
    return EXIT_OK


def cmd_bandcurve(args) -> int:
    hazy, clean = read_cube(args.hazy), read_cube(args.clean)
    if hazy.data.shape != clean.data.shape:
        raise UsageError(f"shape mismatch {hazy.data.shape} vs {clean.data.shape}")
    est = hazy.data
    if args.checkpoint:
        model = ckpt_io.to_model(_load_checkpoint(args.checkpoint))
        if est.shape[2] != model.config.bands:
            raise UsageError(f"cube has {est.shape[2]} bands, checkpoint expects {model.config.bands}")
        est = _dehaze_tiled(model, est, args.tile)
    try:
        rows = metrics.bandwise_curves(est, clean.data, clean.wavelengths_nm, args.peak)
    except metrics.MetricError as exc:
        raise UsageError(str(exc)) from None
    metrics.write_curve_csv(args.out, rows)
    print(json.dumps({"output": args.out, "bands": len(rows)}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Train each ablation row or window size briefly and tabulate params and loss."""
    opts = resolve(args, {**MODEL_DEFAULTS, **TRAIN_DEFAULTS})
    pairs = load_pairs(args.data, split="train")
    if not pairs:
        raise UsageError("dataset has no training pairs")
    bands = pairs[0].hazy.shape[2]
    if args.kind == "ablation":
        variants = [(name, dict(flags)) for name, flags in ABLATION_ROWS.items()]
    else:
        variants = [(f"window={m}", {"window": m}) for m in (2, 4, 8, 16)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    base = model_config_from(opts, bands)
    tcfg = train_config_from({**opts, "iterations": args.steps})
    for name, change in variants:
        cfg = base.replace(**change)
        model = HDMba(cfg)
        res = train(model, pairs, tcfg)
        rows.append({"variant": name, "params": parameter_count(model),
                     "first_loss": res.history[0][2], "final_loss": res.history[-1][2]})
        print(json.dumps(rows[-1]))
    with open(out / f"sweep_{args.kind}.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdmba", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="build a paired hazy/clean dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, help="default 10")
    p.add_argument("--thickness-levels", type=int, help="default 20")
    p.add_argument("--abundances", type=int, help="default 5")
    p.add_argument("--pairs-per-scene", type=int,
                   help="sample this many thickness/abundance cells per scene (default: all)")
    p.add_argument("--standard-scale", action="store_true",
                   help="100 scenes, 20 thickness levels, 5 abundances, 20 cells per scene")
    p.add_argument("--dry-run", action="store_true", help="print the pair counts without writing cubes")
    p.add_argument("--abundance-values", help="comma list, one per abundance")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--bands", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spectral-decay", type=float, default=1.5)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="train on a dataset manifest")
    p.add_argument("--data", help="manifest.json or its directory")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="flat key = value option file")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--stop-at", type=int, help="stop after this many total steps")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("init", help="write an untrained checkpoint")
    p.add_argument("--bands", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_model_flags(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("dehaze", help="run a checkpoint on one cube")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--tile", type=int, default=0, help="process in tiles of this size (0: whole cube)")
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("evaluate", help="paired metrics over a manifest split or one pair")
    p.add_argument("--manifest")
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--pair", nargs=2, metavar=("ESTIMATE", "REFERENCE"))
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--tile", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", help="parameter count per block")
    p.add_argument("--checkpoint")
    p.add_argument("--bands", type=int)
    p.add_argument("--full", action="store_true", help="I=4, K=4, M=8, 305 bands, calibrated C")
    p.add_argument("--config")
    p.add_argument("--json", help="also write the table as JSON")
    _add_model_flags(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("spectra", help="pixel spectra as CSV")
    p.add_argument("cubes", nargs="+")
    p.add_argument("--pixel", nargs=2, type=int, action="append", metavar=("X", "Y"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("bandcurve", help="per-band SSIM/PSNR as CSV")
    p.add_argument("--hazy", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--tile", type=int, default=0)
    p.set_defaults(func=cmd_bandcurve)

    p = sub.add_parser("sweep", help="ablation rows or window sizes, short training each")
    p.add_argument("--kind", choices=("ablation", "window"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--config")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ShapeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLossError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
