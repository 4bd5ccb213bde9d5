"""Command-line harness: superpixel inspection, training, prediction, CRF
refinement, evaluation, and a finite-difference gradient audit.

Exit codes: 0 on success; 2 config error, 3 I/O error, 4 checkpoint error,
5 data error, 6 numeric failure. The error category is printed to stderr as
``error:<category>: <message>``. DCL_THREADS overrides the worker count for
per-image work.
"""

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np
from PIL import Image

from . import metrics
from .config import load_config
from .crf import CrfParams, mean_field_infer
from .model import DeepContrastModel
from .superpixels import save_segmentation, segment_image
from .training import alternate_train, prepare_dataset

_CATEGORIES = {"config": 2, "io": 3, "checkpoint": 4, "data": 5, "numeric": 6}


def _fail(category, message):
    click.echo(f"error:{category}: {message}", err=True)
    sys.exit(_CATEGORIES[category])


def _workers():
    return max(1, int(os.environ.get("DCL_THREADS", "1")))


def load_image(path):
    """PNG/PPM/PGM image as float (H, W, 3) in [0, 1]."""
    try:
        img = Image.open(path).convert("RGB")
    except OSError as e:
        _fail("io", f"{path}: {e}")
    return np.asarray(img, dtype=np.float64) / 255.0


def load_gt(path, threshold=128):
    """8-bit grayscale ground truth, binarized at `threshold`."""
    try:
        img = Image.open(path).convert("L")
    except OSError as e:
        _fail("io", f"{path}: {e}")
    return (np.asarray(img) >= threshold).astype(np.float64)


def save_map(sal, path):
    """Saliency map in [0, 1] as 8-bit grayscale PNG."""
    arr = np.clip(np.round(sal * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def _load_run_config(config_path, seed=None):
    try:
        cfg = load_config(config_path)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        _fail("config", str(e))
    if seed is not None:
        cfg.seed = seed
        cfg.train.seed = seed
    return cfg


@click.group()
def main():
    """Two-stream deep contrast saliency pipeline."""


@main.command("superpixels")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("-k", default=200, help="target superpixel count")
@click.option("--out", required=True, type=click.Path(),
              help="output prefix (writes <out>.png, <out>.json, <out>_overlay.png)")
@click.option("--compactness", default=10.0)
@click.option("--iters", default=10)
def cmd_superpixels(image_path, k, out, compactness, iters):
    """Segment an image and write label map, sidecar, and boundary overlay."""
    img = load_image(image_path)
    try:
        seg = segment_image(img, k, iters, compactness)
    except ValueError as e:
        _fail("data", str(e))
    save_segmentation(seg, f"{out}.png", f"{out}.json")
    overlay = img.copy()
    lab = seg.labels
    edges = np.zeros(lab.shape, dtype=bool)
    edges[:-1] |= lab[:-1] != lab[1:]
    edges[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    overlay[edges] = [1.0, 0.0, 0.0]
    Image.fromarray((overlay * 255).astype(np.uint8)).save(f"{out}_overlay.png")
    click.echo(f"{seg.num_segments} segments -> {out}.png")


def _read_manifest(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        _fail("io", f"{path}: {e}")
    if "train" not in doc or not doc["train"]:
        _fail("data", f"{path}: manifest has no train split")
    for split, pairs in doc.items():
        for pair in pairs:
            for p in pair:
                if not os.path.exists(p):
                    _fail("io", f"manifest file missing: {p}")
    return doc


@main.command("train")
@click.argument("manifest_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
def cmd_train(manifest_path, config_path, out_dir, seed):
    """Train on the manifest's train split; write checkpoints and a loss log."""
    cfg = _load_run_config(config_path, seed)
    doc = _read_manifest(manifest_path)
    imgs = [load_image(p) for p, _ in doc["train"]]
    gts = [load_gt(g) for _, g in doc["train"]]
    for i, (img, gt) in enumerate(zip(imgs, gts)):
        if img.shape[:2] != gt.shape:
            _fail("data", f"train pair {i}: image {img.shape[:2]} vs gt {gt.shape}")
    os.makedirs(out_dir, exist_ok=True)
    model = DeepContrastModel(cfg)
    model.save(os.path.join(out_dir, "ckpt_init"))
    records = prepare_dataset(imgs, gts, cfg.superpixels.scales,
                              cfg.superpixels.max_iters,
                              cfg.superpixels.compactness)
    log_path = os.path.join(out_dir, "loss_log.txt")
    log_f = open(log_path, "w")

    def on_epoch(entry):
        alt, phase, loss = entry
        preds = [model.predict(r.image)["s"] for r in records]
        maxf = metrics.max_f_measure(preds, [r.gt for r in records])
        log_f.write(f"alternation={alt} phase={phase} "
                    f"loss={loss:.6f} train_maxF={maxf:.4f}\n")
        log_f.flush()
        if phase == "A":
            model.save(os.path.join(out_dir, f"ckpt_alt{alt}"))

    try:
        alternate_train(records, model.net, model.regressor, model.fusion,
                        cfg.train, cfg.pool_grid, on_epoch=on_epoch)
    except FloatingPointError as e:
        log_f.close()
        _fail("numeric", f"{e}; last good checkpoint retained in {out_dir}")
    model.save(os.path.join(out_dir, "ckpt_final"))
    log_f.close()
    click.echo(f"checkpoints and loss log written to {out_dir}")


@main.command("predict")
@click.argument("ckpt_dir", type=click.Path(exists=True))
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--crf", is_flag=True, help="also apply dense-CRF refinement")
@click.option("--crf-radius", type=int, default=None,
              help="truncate CRF kernels at this radius (approximate)")
@click.option("--debug", is_flag=True, help="also write the S1/S2 stream maps")
@click.option("--blobs", is_flag=True, help="also write float64 blobs")
def cmd_predict(ckpt_dir, images, out_dir, crf, crf_radius, debug, blobs):
    """Predict saliency maps for images using a trained checkpoint."""
    try:
        model = DeepContrastModel.load(ckpt_dir)
    except (OSError, ValueError, KeyError) as e:
        _fail("checkpoint", f"{ckpt_dir}: {e}")
    os.makedirs(out_dir, exist_ok=True)

    def run(path):
        img = load_image(path)
        out = model.predict(img, crf=crf, crf_radius=crf_radius)
        stem = os.path.splitext(os.path.basename(path))[0]
        save_map(out["s"], os.path.join(out_dir, f"{stem}.png"))
        if crf:
            save_map(out["s_crf"], os.path.join(out_dir, f"{stem}_crf.png"))
        if debug:
            save_map(out["s1"], os.path.join(out_dir, f"{stem}_s1.png"))
            save_map(out["s2"], os.path.join(out_dir, f"{stem}_s2.png"))
        if blobs:
            from . import blobio
            blobio.write_blob(os.path.join(out_dir, f"{stem}.bin"), out["s"])
        return stem

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        for stem in pool.map(run, images):
            click.echo(f"wrote {stem}")


@main.command("refine")
@click.argument("map_path", type=click.Path(exists=True))
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--w1", default=3.0)
@click.option("--w2", default=5.0)
@click.option("--sigma-alpha", default=3.0)
@click.option("--sigma-beta", default=50.0)
@click.option("--sigma-gamma", default=3.0)
@click.option("--iters", default=10)
@click.option("--radius", type=int, default=None,
              help="truncate kernels at this radius (approximate)")
def cmd_refine(map_path, image_path, out, w1, w2, sigma_alpha, sigma_beta,
               sigma_gamma, iters, radius):
    """Dense-CRF refinement of a saliency map against its image."""
    sal = np.asarray(Image.open(map_path).convert("L"), dtype=np.float64) / 255.0
    img = load_image(image_path)
    if sal.shape != img.shape[:2]:
        _fail("data", f"map {sal.shape} does not match image {img.shape[:2]}")
    params = CrfParams(w1, w2, sigma_alpha, sigma_beta, sigma_gamma, iters)
    try:
        refined = mean_field_infer(sal, img, params, radius=radius)
    except FloatingPointError as e:
        _fail("numeric", str(e))
    save_map(refined, out)
    click.echo(f"wrote {out}")


@main.command("evaluate")
@click.argument("maps_dir", type=click.Path(exists=True))
@click.argument("gts_dir", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(),
              help="output prefix (writes <out>_curve.csv and <out>_summary.csv)")
def cmd_evaluate(maps_dir, gts_dir, out):
    """Evaluate predicted maps against ground truths matched by filename."""
    names = sorted(os.listdir(maps_dir))
    pairs = []
    for name in names:
        gt_path = os.path.join(gts_dir, name)
        if not os.path.exists(gt_path):
            click.echo(f"warning: no ground truth for {name}, skipped", err=True)
            continue
        sal = np.asarray(Image.open(os.path.join(maps_dir, name)).convert("L"),
                         dtype=np.float64) / 255.0
        pairs.append((sal, load_gt(gt_path)))
    if not pairs:
        _fail("data", "no matched map/ground-truth pairs")
    report = metrics.evaluate_dataset([m for m, _ in pairs],
                                      [g for _, g in pairs])
    metrics.write_report_csv(report, f"{out}_curve.csv")
    with open(f"{out}_summary.csv", "w") as f:
        f.write("metric,value\n")
        f.write(f"maxF,{report.max_f:.6f}\n")
        f.write(f"adaptive_precision,{report.adaptive_precision:.6f}\n")
        f.write(f"adaptive_recall,{report.adaptive_recall:.6f}\n")
        f.write(f"adaptive_F,{report.adaptive_f:.6f}\n")
        f.write(f"MAE,{report.mae:.6f}\n")
    click.echo(f"maxF={report.max_f:.4f} MAE={report.mae:.4f} "
               f"({report.n_images} images, {report.n_excluded} excluded)")


@main.command("gradcheck")
@click.option("--seed", default=0)
def cmd_gradcheck(seed):
    """Finite-difference audit of every layer type and the toy network."""
    from .audit import run_gradient_audit
    ok = run_gradient_audit(seed=seed, echo=click.echo)
    if not ok:
        _fail("numeric", "gradient audit failed")


if __name__ == "__main__":
    main()
