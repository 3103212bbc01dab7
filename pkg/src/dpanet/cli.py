"""Command line: synth-data, dp-score, train, infer, eval, gradcheck."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import data, imaging, metrics, plotting
from .checkpoint import CheckpointError, load_checkpoint, restore_model
from .config import config_from_dict, format_config, load_config, parse_overrides
from .depth_potentiality import DEFAULT_GAMMA, dataset_dp_report
from .network import DPANet

log = logging.getLogger("dpanet")

F_CONVENTION = (
    "# max_f: maximum over 256 thresholds of the F-measure (beta^2 = 0.3) of the "
    "dataset-mean precision and recall curves; empty-GT samples count toward mae only"
)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return f"{v:.6f}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------- synth-data


def cmd_synth(args) -> int:
    stems = data.synth_dataset(args.out, args.n, args.size, args.seed, args.corrupt_fraction)
    print(f"wrote {len(stems)} samples to {args.out}")
    return 0


# ---------------------------------------------------------------- dp-score


def _dp_pairs(args):
    if args.data:
        root = Path(data.resolve_root(args.data))
        depth_dir, gt_dir = root / "depth", root / "gt"
    else:
        if not (args.depth_dir and args.gt_dir):
            raise SystemExit("dp-score needs --data or both --depth-dir and --gt-dir")
        depth_dir, gt_dir = Path(args.depth_dir), Path(args.gt_dir)
    depths, gts = data.index_folder(depth_dir), data.index_folder(gt_dir)
    stems = sorted(depths)
    missing = [s for s in stems if s not in gts]
    if missing:
        raise data.DatasetError(f"no ground truth for {missing[:5]}")
    if not stems:
        raise data.DatasetError(f"no depth maps in {depth_dir}")
    for s in stems:
        depth = imaging.load_gray(depths[s])
        if args.invert_depth:
            depth = imaging.invert_depth(depth)
        gt = imaging.load_mask(gts[s])
        if depth.shape != gt.shape:
            depth = imaging.resize_bilinear(depth, *gt.shape)
        yield s, depth, gt


def cmd_dp_score(args) -> int:
    pairs = list(_dp_pairs(args))
    report = dataset_dp_report(((d, g) for _, d, g in pairs), args.gamma, [s for s, _, _ in pairs])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = f"# gamma={args.gamma} invert_depth={args.invert_depth} mean_g={report.mean_g:.6f}"
    data.write_label_csv(out, report.sample_ids, report.labels, header)
    if not args.no_plot:
        plotting.plot_dp_hist([lab.g for lab in report.labels], args.plot or out.with_suffix(".png"))
    print(f"mean g = {report.mean_g:.6f} over {len(report.labels)} samples")
    return 0


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    from .train import train

    overrides = parse_overrides(args.set or [])
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    cfg = load_config(args.config, overrides, args.preset)
    if not cfg.out_dir:
        cfg = cfg.replace(out_dir="runs/latest")
    train_set = data.load_dataset(data.DatasetSpec(data.resolve_root(args.data), "train", args.invert_depth))
    val_set = None
    if args.val:
        val_set = data.load_dataset(data.DatasetSpec(data.resolve_root(args.val), "val", args.invert_depth))
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config(cfg))

    def progress(row):
        if row["iter"] % args.print_every == 0:
            log.info("iter %d lr %.5f loss %.5f (dom %.5f aux %.5f reg %.5f)",
                     row["iter"], row["lr"], row["l_final"], row["l_dom"], row["l_aux"], row["l_reg"])

    result = train(cfg, train_set, val_set, resume=resume, on_iteration=progress)
    if result.log:
        plotting.plot_loss(result.log, out_dir / "loss.png")
    last = result.log[-1]["l_final"] if result.log else float("nan")
    print(f"trained {len(result.log)} iterations, final loss {last:.6f}; checkpoint {out_dir / 'final.npz'}")
    return 0


# ---------------------------------------------------------------- infer


def load_model(path) -> DPANet:
    ckpt = load_checkpoint(path)
    cfg = config_from_dict(ckpt.config)
    model = DPANet(cfg.model_config())
    restore_model(model, ckpt)
    return model.eval()


def _run_one(model: DPANet, rgb: np.ndarray, depth: np.ndarray):
    size = model.cfg.backbone.input_size
    sample = data.RgbdSample("x", rgb, depth, np.zeros(depth.shape, dtype=np.uint8))
    sample = data.resize_sample(sample, size)
    batch = data.collate([sample])
    with torch.no_grad():
        out = model(batch["rgb"], batch["depth"] if model.cfg.depth_branch else None, with_aux=False)
    sal = out.saliency[0, 0].double().numpy()
    h, w = depth.shape
    if (h, w) != sal.shape:
        sal = imaging.resize_bilinear(sal, h, w)
    return sal, float(out.g_hat[0]), out


def _read_pair(rgb_path, depth_path, invert: bool):
    rgb = imaging.load_rgb(rgb_path)
    depth = imaging.load_gray(depth_path)
    if invert:
        depth = imaging.invert_depth(depth)
    if depth.shape != rgb.shape[:2]:
        depth = imaging.resize_bilinear(depth, *rgb.shape[:2])
    return rgb, depth


def cmd_infer(args) -> int:
    model = load_model(args.ckpt)
    if args.data:
        root = Path(data.resolve_root(args.data))
        if not args.out_dir:
            raise SystemExit("batch inference needs --out-dir")
        rgbs, depths = data.index_folder(root / "rgb"), data.index_folder(root / "depth")
        stems = sorted(rgbs)
        missing = [s for s in stems if s not in depths]
        if missing:
            raise data.DatasetError(f"no depth map for {missing[:5]}")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        gates = []
        for s in stems:
            sal, g_hat, _ = _run_one(model, *_read_pair(rgbs[s], depths[s], args.invert_depth))
            imaging.save_png(out_dir / f"{s}.png", imaging.to_uint8(sal))
            gates.append((s, g_hat))
        with open(out_dir / "g_hat.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "g_hat"])
            w.writerows((s, f"{g:.6f}") for s, g in gates)
        print(f"wrote {len(stems)} maps to {out_dir}; mean g_hat = {np.mean([g for _, g in gates]):.4f}")
        return 0
    if not (args.rgb and args.depth and args.out):
        raise SystemExit("single-image inference needs --rgb, --depth and --out")
    sal, g_hat, out = _run_one(model, *_read_pair(args.rgb, args.depth, args.invert_depth))
    imaging.save_png(args.out, imaging.to_uint8(sal))
    if args.dump_intermediates:
        files = plotting.dump_intermediates(out.gma, args.dump_intermediates)
        print(f"wrote {len(files)} intermediate maps to {args.dump_intermediates}")
    print(f"g_hat = {g_hat:.6f}")
    return 0


# ---------------------------------------------------------------- eval


def _read_gates(pred_dir: Path) -> dict[str, float]:
    path = pred_dir / "g_hat.csv"
    if not path.is_file():
        return {}
    with open(path, newline="") as fh:
        return {r["sample_id"]: float(r["g_hat"]) for r in csv.DictReader(fh)}


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds, gts = data.index_folder(pred_dir), data.index_folder(gt_dir)
    stems = sorted(gts)
    missing = [s for s in stems if s not in preds]
    if missing:
        raise data.DatasetError(f"no prediction for {missing[:5]} in {pred_dir}")
    if not stems:
        raise data.DatasetError(f"no ground truth in {gt_dir}")
    gates = _read_gates(pred_dir)

    def items():
        for s in stems:
            gt = imaging.load_mask(gts[s])
            pred = imaging.load_gray(preds[s])
            if pred.shape != gt.shape:
                pred = imaging.resize_bilinear(pred, *gt.shape)
            yield s, pred, gt, gates.get(s)

    rep = metrics.evaluate_dataset(items())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(F_CONVENTION + "\n")
        w = csv.writer(fh)
        w.writerow(["sample_id", "max_f", "mae", "s_measure", "g_hat"])
        for sc in rep.samples:
            w.writerow([sc.sample_id, _fmt(sc.max_f), _fmt(sc.mae), _fmt(sc.s_measure), _fmt(sc.g_hat)])
        known = [sc.g_hat for sc in rep.samples if sc.g_hat is not None]
        w.writerow(["__dataset__", _fmt(rep.max_f), _fmt(rep.mae), _fmt(rep.s_measure),
                    _fmt(float(np.mean(known))) if known else ""])
    if args.curves_out:
        write_curves(args.curves_out, rep)
    if not args.no_plots:
        plots = Path(args.plots_dir) if args.plots_dir else out.parent
        name = args.label or pred_dir.name
        plotting.plot_pr_curves({name: (rep.precision, rep.recall)}, plots / f"{out.stem}_pr.png")
        plotting.plot_f_curves({name: rep.f_curve}, plots / f"{out.stem}_f.png")
    print(f"max_f = {rep.max_f:.4f}  mae = {rep.mae:.4f}  s_measure = {rep.s_measure:.4f}  "
          f"({len(rep.samples)} samples, {rep.n_excluded} with empty ground truth)")
    return 0


def write_curves(path, rep: metrics.EvalReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall", "f_measure"])
        for t in range(metrics.N_LEVELS):
            w.writerow([t, _fmt(float(rep.precision[t])), _fmt(float(rep.recall[t])), _fmt(float(rep.f_curve[t]))])


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    results = run_all(seed=args.seed, max_coords=args.coords, include_network=not args.no_network)
    ok = True
    for r in results:
        passed = r.passed(args.tol)
        ok &= passed
        extra = f"  unresolved={len(r.unresolved)} kinks={r.kinks}" if (r.unresolved or r.kinks) else ""
        print(f"{'PASS' if passed else 'FAIL'}  {r.name:28s} max rel err {r.max_rel_error:.2e}{extra}")
    print("all gradient checks passed" if ok else "gradient check FAILED")
    return 0 if ok else 1


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpanet", description=__doc__)
    p.add_argument("--log-level", default="INFO")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="write a synthetic rgb/depth/gt dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corrupt-fraction", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("dp-score", help="depth potentiality of every depth map against its ground truth")
    s.add_argument("--data", help=f"dataset root with depth/ and gt/ (relative to ${data.DATA_ROOT_ENV})")
    s.add_argument("--depth-dir")
    s.add_argument("--gt-dir")
    s.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    s.add_argument("--invert-depth", action="store_true", help="depth files store far = bright")
    s.add_argument("--out", required=True, help="per-sample CSV")
    s.add_argument("--plot", help="histogram path (default: next to --out)")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_dp_score)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--data", help=f"training root (default ${data.DATA_ROOT_ENV})")
    s.add_argument("--val")
    s.add_argument("--config", help="key = value file")
    s.add_argument("--preset", choices=("full", "toy"), default="full")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--invert-depth", action="store_true")
    s.add_argument("--print-every", type=int, default=20)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="saliency maps from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--rgb")
    s.add_argument("--depth")
    s.add_argument("--out", help="output PNG for single-image mode")
    s.add_argument("--data", help="batch mode: root with rgb/ and depth/")
    s.add_argument("--out-dir", help="batch mode output directory")
    s.add_argument("--invert-depth", action="store_true")
    s.add_argument("--dump-intermediates", metavar="DIR", help="write GMA feature slices as PNGs")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="score predicted maps against ground truth")
    s.add_argument("--pred-dir", required=True)
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--out", required=True, help="per-sample report CSV")
    s.add_argument("--curves-out", help="dataset PR / F curves CSV")
    s.add_argument("--plots-dir", help="where PR and F figures go (default: next to --out)")
    s.add_argument("--no-plots", action="store_true")
    s.add_argument("--label", help="legend label (default: prediction folder name)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--coords", type=int, default=24)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-network", action="store_true", help="skip the whole-network check")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (data.DatasetError, CheckpointError, imaging.ImageDecodeError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
