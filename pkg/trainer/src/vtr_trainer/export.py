"""Fixture export: VTRW weights, per-sample VTRT traces, JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .formats import write_vtrt, write_vtrw
from .model import ModelConfig, ReferenceModel

TRACE_STAGES = ("ln1", "attn_scores", "msa_out", "res1", "ln2", "mlp_out", "out")


def model_config_fields(cfg: ModelConfig) -> dict:
    return {
        "image_h": cfg.image_h,
        "image_w": cfg.image_w,
        "channels": cfg.channels,
        "patch": cfg.patch,
        "shifts": cfg.shifts,
        "shift_px": cfg.shift_px,
        "dim": cfg.dim,
        "depth": cfg.depth,
        "heads": cfg.heads,
        "mlp_ratio": cfg.mlp_ratio,
        "num_classes": cfg.num_classes,
    }


def save_weights(model: ReferenceModel, path) -> None:
    tensors = [(n, t.detach().numpy()) for n, t in model.named_export_tensors()]
    write_vtrw(path, model_config_fields(model.cfg), tensors)


@torch.no_grad()
def trace_forward(model: ReferenceModel, image: np.ndarray) -> tuple[np.ndarray, dict]:
    """Logits and the full stage trace for one (H, W, C) image."""
    model.eval()
    trace: dict = {}
    logits = model(torch.from_numpy(image[None]), trace=trace)
    return logits[0].numpy(), {k: v.detach().numpy() for k, v in trace.items()}


def export_fixtures(
    model: ReferenceModel,
    images: list[np.ndarray],
    out_dir,
    tolerance_rel: float = 1e-4,
    traced_samples: int | None = None,
    extra: dict | None = None,
) -> Path:
    """Write weights, images, traces and the manifest under out_dir.

    Every sample gets an image file and an expected class; the first
    traced_samples (default: all) also get a full trace bundle.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    save_weights(model, out / "model.vtrw")
    if traced_samples is None:
        traced_samples = len(images)
    samples = []
    for i, img in enumerate(images):
        img = np.asarray(img, dtype=np.float32)
        write_vtrt(out / "images" / f"s{i}.vtrt", img)
        logits, trace = trace_forward(model, img)
        entry = {"image": f"images/s{i}.vtrt", "expected_class": int(np.argmax(logits))}
        if i < traced_samples:
            tdir = out / "traces" / f"s{i}"
            tdir.mkdir(parents=True, exist_ok=True)
            paths = {}
            for stage, arr in trace.items():
                write_vtrt(tdir / f"{stage}.vtrt", np.atleast_2d(arr))
                paths[stage] = f"traces/s{i}/{stage}.vtrt"
            entry["traces"] = paths
        samples.append(entry)
    manifest = {
        "version": 1,
        "weights": "model.vtrw",
        "tolerance_rel": tolerance_rel,
        "samples": samples,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out / "manifest.json"
