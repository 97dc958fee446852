"""Synthetic degradation corpus for desk-scale experiments.

Renders procedural face-like images (ellipse composites with fine texture),
applies one degradation family per domain at a per-image severity, and writes
images, part-label segmentation maps, and manifests. Pseudo-MOS is defined as
minus the severity, so the quality ordering is known by construction.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .data import ScoredImage, write_manifest
from .errors import ConfigurationError

# segmentation label values used by the renderer
SEG_BACKGROUND = 0
SEG_SKIN = 1
SEG_HAIR = 2
SEG_EYE = 3
SEG_NOSE = 4
SEG_MOUTH = 5


def _ellipse_box(cx: float, cy: float, rx: float, ry: float, size: int):
    return [
        ((cx - rx) * size, (cy - ry) * size),
        ((cx + rx) * size, (cy + ry) * size),
    ]


def render_face(rng: np.random.Generator, size: int = 256):
    """Draw one synthetic face; returns (image float HxWx3 in [0,1], labels HxW)."""
    img = Image.new("RGB", (size, size))
    seg = Image.new("L", (size, size), SEG_BACKGROUND)
    draw = ImageDraw.Draw(img)
    seg_draw = ImageDraw.Draw(seg)

    bg = tuple(int(v) for v in rng.uniform(40, 90, size=3))
    draw.rectangle([(0, 0), (size, size)], fill=bg)

    cx = 0.5 + rng.uniform(-0.03, 0.03)
    cy = 0.55 + rng.uniform(-0.03, 0.03)
    rx = 0.27 + rng.uniform(-0.03, 0.03)
    ry = 0.37 + rng.uniform(-0.03, 0.03)

    hair = tuple(int(v) for v in rng.uniform(20, 80, size=3))
    hair_box = _ellipse_box(cx, cy - 0.08, rx * 1.25, ry * 1.1, size)
    draw.ellipse(hair_box, fill=hair)
    seg_draw.ellipse(hair_box, fill=SEG_HAIR)

    skin = (
        int(200 + rng.uniform(-25, 25)),
        int(170 + rng.uniform(-25, 25)),
        int(145 + rng.uniform(-25, 25)),
    )
    face_box = _ellipse_box(cx, cy, rx, ry, size)
    draw.ellipse(face_box, fill=skin)
    seg_draw.ellipse(face_box, fill=SEG_SKIN)

    eye_dx = 0.11 + rng.uniform(-0.015, 0.015)
    eye_y = cy - 0.10 + rng.uniform(-0.01, 0.01)
    for side in (-1, 1):
        ex = cx + side * eye_dx
        white_box = _ellipse_box(ex, eye_y, 0.05, 0.03, size)
        draw.ellipse(white_box, fill=(235, 235, 235))
        seg_draw.ellipse(white_box, fill=SEG_EYE)
        iris = tuple(int(v) for v in rng.uniform(20, 110, size=3))
        iris_box = _ellipse_box(ex, eye_y, 0.02, 0.02, size)
        draw.ellipse(iris_box, fill=iris)
        brow_box = _ellipse_box(ex, eye_y - 0.055, 0.055, 0.012, size)
        draw.ellipse(brow_box, fill=hair)
        seg_draw.ellipse(brow_box, fill=SEG_HAIR)

    nose_shade = tuple(max(0, c - 40) for c in skin)
    nose_box = _ellipse_box(cx, cy + 0.03, 0.022, 0.075, size)
    draw.ellipse(nose_box, fill=nose_shade)
    seg_draw.ellipse(nose_box, fill=SEG_NOSE)

    mouth = (int(150 + rng.uniform(-30, 30)), 60, 70)
    mouth_box = _ellipse_box(cx, cy + 0.18, 0.085, 0.028, size)
    draw.ellipse(mouth_box, fill=mouth)
    seg_draw.ellipse(mouth_box, fill=SEG_MOUTH)

    arr = np.asarray(img, dtype=np.float64) / 255.0
    labels = np.asarray(seg, dtype=np.int64)

    # fine deterministic texture so blurring measurably removes energy
    yy, xx = np.mgrid[0:size, 0:size] / size
    fx = rng.uniform(18, 26)
    fy = rng.uniform(18, 26)
    phase_x, phase_y = rng.uniform(0, 2 * math.pi, size=2)
    ripple = 0.05 * np.sin(2 * math.pi * fx * xx + phase_x) * np.sin(
        2 * math.pi * fy * yy + phase_y
    )
    skin_mask = labels == SEG_SKIN
    arr[skin_mask] = arr[skin_mask] * (1 + ripple[skin_mask, None])

    n_freckles = int(rng.integers(20, 40))
    for _ in range(n_freckles):
        fy_px = int(rng.integers(0, size))
        fx_px = int(rng.integers(0, size))
        if labels[fy_px, fx_px] == SEG_SKIN:
            arr[fy_px : fy_px + 2, fx_px : fx_px + 2] *= 0.6
    return np.clip(arr, 0.0, 1.0), labels


def degrade_blur(img: np.ndarray, severity: float, rng: np.random.Generator):
    sigma = 3.0 * severity
    if sigma == 0:
        return img
    return ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))


def degrade_noise(img: np.ndarray, severity: float, rng: np.random.Generator):
    noise = rng.normal(0.0, 0.25 * severity, size=img.shape)
    return np.clip(img + noise, 0.0, 1.0)


def degrade_block(img: np.ndarray, severity: float, rng: np.random.Generator, block: int = 8):
    h, w, c = img.shape
    bh, bw = h // block, w // block
    blocked = img[: bh * block, : bw * block].reshape(bh, block, bw, block, c)
    blocked = blocked.mean(axis=(1, 3), keepdims=True)
    blocked = np.broadcast_to(blocked, (bh, block, bw, block, c)).reshape(
        bh * block, bw * block, c
    )
    out = img.copy()
    out[: bh * block, : bw * block] = (
        (1 - severity) * img[: bh * block, : bw * block] + severity * blocked
    )
    return out


def degrade_pixelate(img: np.ndarray, severity: float, rng: np.random.Generator):
    factor = 1 + int(round(severity * 7))
    if factor == 1:
        return img
    h, w, _ = img.shape
    small = img[::factor, ::factor]
    return np.repeat(np.repeat(small, factor, axis=0), factor, axis=1)[:h, :w]


DEGRADATIONS: dict[str, Callable] = {
    "blur": degrade_blur,
    "noise": degrade_noise,
    "block": degrade_block,
    "pixelate": degrade_pixelate,
}


def synth_corpus(
    out_dir: str | Path,
    n_per_domain: int = 300,
    degradations: Sequence[str] = ("blur", "noise", "block"),
    seed: int = 0,
    image_size: int = 256,
) -> dict[int, Path]:
    """Render scored domains to disk; returns domain_id -> manifest path.

    Severities are an evenly spaced grid over [0, 1] (so pseudo-MOS values
    are distinct and the severity-0 item carries the domain's maximum), and
    every randomized choice is keyed on (seed, domain, index) so regeneration
    is order-independent.
    """
    if not degradations:
        raise ConfigurationError("need at least one degradation domain")
    unknown = [d for d in degradations if d not in DEGRADATIONS]
    if unknown:
        raise ConfigurationError(
            f"unknown degradations: {', '.join(unknown)} "
            f"(available: {', '.join(sorted(DEGRADATIONS))})"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifests: dict[int, Path] = {}
    names: dict[int, str] = {}
    for domain_id, name in enumerate(degradations):
        degrade = DEGRADATIONS[name]
        domain_dir = out_dir / f"domain_{name}"
        domain_dir.mkdir(exist_ok=True)
        images: list[ScoredImage] = []
        severities = (
            np.linspace(0.0, 1.0, n_per_domain)
            if n_per_domain > 1
            else np.array([0.0])
        )
        for i in range(n_per_domain):
            rng = np.random.default_rng([seed, domain_id, i])
            face, labels = render_face(rng, image_size)
            severity = float(severities[i])
            degraded = degrade(face, severity, rng)

            img_rel = f"domain_{name}/img_{i:04d}.png"
            seg_rel = f"domain_{name}/img_{i:04d}_seg.png"
            Image.fromarray(
                (np.clip(degraded, 0, 1) * 255).round().astype(np.uint8)
            ).save(out_dir / img_rel)
            Image.fromarray(labels.astype(np.uint8), mode="L").save(out_dir / seg_rel)
            images.append(
                ScoredImage(
                    stable_id=i,
                    domain_id=domain_id,
                    image_path=img_rel,
                    seg_path=seg_rel,
                    pseudo_mos=-severity,
                )
            )
        manifest_path = out_dir / f"manifest_{name}.csv"
        write_manifest(images, manifest_path)
        manifests[domain_id] = manifest_path
        names[domain_id] = name

    (out_dir / "domains.json").write_text(
        json.dumps({str(k): v for k, v in names.items()}, indent=2, sort_keys=True)
    )
    return manifests
