"""Evaluation harness: rank/linear correlations with the five-parameter
logistic remapping, leave-one-domain-out report grids, pair-ranking accuracy,
and the average-spectrum domain diagnostic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
from scipy.optimize import least_squares

from .data import ScoredImage, resolve_image_path, resolve_seg_path
from .errors import ConfigurationError, DataError, PreconditionError
from .images import load_labels, load_rgb, to_grayscale
from .model import QualityNet, SegmentationMap, load_checkpoint

EXP_CLIP = 50.0  # |exponent| bound inside the logistic mapping


def _midranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); ties share the mean of their rank span."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    if denom == 0:
        return float("nan")
    return float((a * b).sum() / denom)


def srcc(pred: Sequence[float], target: Sequence[float]) -> float:
    """Spearman rank correlation with midrank tie handling.

    Returns NaN when either vector is constant (rank correlation undefined).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ConfigurationError("srcc expects two equal-length vectors")
    if len(pred) < 3:
        raise PreconditionError("srcc needs at least 3 points")
    return _pearson(_midranks(pred), _midranks(target))


@dataclass
class LogisticFit:
    """Fitted five-parameter monotone-plus-linear mapping."""

    beta: tuple[float, float, float, float, float]
    converged: bool
    residual: float

    def __call__(self, y: Sequence[float]) -> np.ndarray:
        return logistic_map(np.asarray(y, dtype=np.float64), self.beta)


def logistic_map(y: np.ndarray, beta: Sequence[float]) -> np.ndarray:
    b1, b2, b3, b4, b5 = beta
    exponent = np.clip(-b2 * (y - b3), -EXP_CLIP, EXP_CLIP)
    return b1 * (0.5 - np.exp(exponent)) + b4 * y + b5


def fit_logistic(pred: Sequence[float], target: Sequence[float]) -> LogisticFit:
    """Nonlinear least squares of the five-parameter mapping.

    Initialization: beta1 = range(target), beta2 = 1/std(pred),
    beta3 = mean(pred), beta4 = 0, beta5 = mean(target). Damped least squares
    runs up to 1000 iterations; on failure the fit falls back to ordinary
    linear regression with ``converged=False``.
    """
    y = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if y.shape != t.shape or y.ndim != 1:
        raise ConfigurationError("fit_logistic expects two equal-length vectors")
    if len(y) < 5:
        raise PreconditionError(
            "five-parameter fit needs at least 5 points to be identifiable"
        )
    std = float(y.std())
    beta0 = np.array(
        [
            float(t.max() - t.min()),
            1.0 / std if std > 0 else 1.0,
            float(y.mean()),
            0.0,
            float(t.mean()),
        ]
    )

    def residuals(beta):
        return logistic_map(y, beta) - t

    fit = None
    try:
        result = least_squares(
            residuals,
            beta0,
            method="lm",
            max_nfev=1000,
            ftol=1e-10,
            xtol=1e-10,
            gtol=1e-10,
        )
        mapped = logistic_map(y, result.x)
        if result.success and np.isfinite(mapped).all():
            fit = LogisticFit(
                beta=tuple(float(b) for b in result.x),
                converged=True,
                residual=float(np.sqrt(np.mean((mapped - t) ** 2))),
            )
    except Exception:
        fit = None
    if fit is None:
        slope, intercept = np.polyfit(y, t, 1) if std > 0 else (0.0, float(t.mean()))
        beta = (0.0, 1.0, 0.0, float(slope), float(intercept))
        mapped = logistic_map(y, beta)
        fit = LogisticFit(
            beta=beta,
            converged=False,
            residual=float(np.sqrt(np.mean((mapped - t) ** 2))),
        )
    return fit


def plcc(pred: Sequence[float], target: Sequence[float]) -> float:
    """Pearson correlation after the logistic remapping of the predictions.

    The rank correlation is computed on raw predictions elsewhere; the
    monotone mapping could not change it.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if len(pred) < 3:
        raise PreconditionError("plcc needs at least 3 points")
    fit = fit_logistic(pred, target)
    return _pearson(fit(pred), target)


def pair_ranking_accuracy(pred: Sequence[float], target: Sequence[float]) -> float:
    """Fraction of distinct-target pairs ordered the same way by pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    dp = pred[:, None] - pred[None, :]
    dt = target[:, None] - target[None, :]
    mask = np.triu(dt != 0, k=1)
    total = int(mask.sum())
    if total == 0:
        return float("nan")
    # prediction ties on ranked pairs count as misses
    agree = (np.sign(dp) == np.sign(dt)) & (dp != 0)
    return int(agree[mask].sum()) / total


@dataclass
class CellMetrics:
    srcc: float
    plcc: float
    pair_accuracy: float
    n: int
    fit_converged: bool
    missing: bool = False


@dataclass
class EvalReport:
    """Leave-one-domain-out grids: per-checkpoint rows over evaluation
    domains, plus pooled metrics over the concatenated test sets."""

    unseen: dict[int, CellMetrics]
    grid: dict[str, CellMetrics]  # key "ckpt:<d>|eval:<d>"
    domains: list[int]
    pooled: dict[int, CellMetrics] = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def cell(c: Optional[CellMetrics]) -> Optional[dict]:
            if c is None:
                return None
            return {
                "srcc": None if c.missing or c.srcc != c.srcc else round(c.srcc, 6),
                "plcc": None if c.missing or c.plcc != c.plcc else round(c.plcc, 6),
                "pair_accuracy": None
                if c.missing or c.pair_accuracy != c.pair_accuracy
                else round(c.pair_accuracy, 6),
                "n": c.n,
                "fit_converged": c.fit_converged,
                "missing": c.missing,
            }

        return {
            "domains": self.domains,
            "unseen": {str(k): cell(v) for k, v in self.unseen.items()},
            "grid": {k: cell(v) for k, v in self.grid.items()},
            "pooled": {str(k): cell(v) for k, v in self.pooled.items()},
            "config": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render_text(self) -> str:
        """Fixed-width tables: unseen-domain summary, then the full grid."""

        def fmt(value: float, missing: bool) -> str:
            if missing or value != value:
                return "   --  "
            return f"{value:7.4f}"

        lines = ["Unseen-domain performance (checkpoint held out of training):"]
        lines.append("domain |  SRCC   |  PLCC   | pair-acc")
        for d in self.domains:
            c = self.unseen.get(d)
            if c is None:
                lines.append(f"{d:6d} |   --    |   --    |   --")
            else:
                lines.append(
                    f"{d:6d} | {fmt(c.srcc, c.missing)} | {fmt(c.plcc, c.missing)} "
                    f"| {fmt(c.pair_accuracy, c.missing)}"
                )
        lines.append("")
        lines.append("Full grid (rows: held-out-domain checkpoints; cols: eval domain), SRCC:")
        header = "ckpt\\eval |" + "".join(f" {d:7d} |" for d in self.domains)
        lines.append(header)
        for row in self.domains:
            cells = []
            for col in self.domains:
                c = self.grid.get(grid_key(row, col))
                cells.append(fmt(c.srcc, c.missing) if c else "   --  ")
            lines.append(f"{row:9d} |" + "".join(f" {v} |" for v in cells))
        if self.pooled:
            lines.append("")
            lines.append("Pooled over all eval domains per checkpoint:")
            lines.append("ckpt   |  SRCC   |  PLCC   | pair-acc")
            for d in self.domains:
                c = self.pooled.get(d)
                if c is None:
                    lines.append(f"{d:6d} |   --    |   --    |   --")
                else:
                    lines.append(
                        f"{d:6d} | {fmt(c.srcc, c.missing)} | {fmt(c.plcc, c.missing)} "
                        f"| {fmt(c.pair_accuracy, c.missing)}"
                    )
        return "\n".join(lines) + "\n"


def grid_key(ckpt_domain: int, eval_domain: int) -> str:
    return f"ckpt:{ckpt_domain}|eval:{eval_domain}"


@torch.no_grad()
def predict_scores(
    model: QualityNet,
    images: Sequence[ScoredImage],
    manifest_path: str | Path,
    batch_size: int = 16,
) -> np.ndarray:
    """Eval-mode quality scores for manifest images, in input order."""
    model.eval()
    size = (model.config.input_size[0], model.config.input_size[1])
    scores: list[float] = []
    for start in range(0, len(images), batch_size):
        chunk = images[start : start + batch_size]
        rgb = torch.stack(
            [load_rgb(resolve_image_path(manifest_path, im), size) for im in chunk]
        )
        labels = []
        for im in chunk:
            seg_path = resolve_seg_path(manifest_path, im)
            if seg_path is None:
                labels.append(torch.zeros(size, dtype=torch.long))
            else:
                labels.append(load_labels(seg_path, size))
        seg = SegmentationMap(
            labels=torch.stack(labels), num_attributes=model.config.num_attributes
        )
        out = model(rgb, seg)
        scores.extend(out.score.tolist())
    return np.asarray(scores, dtype=np.float64)


def evaluate_cell(pred: np.ndarray, target: np.ndarray) -> CellMetrics:
    if len(pred) < 3:
        raise PreconditionError("evaluation needs at least 3 images")
    fit = fit_logistic(pred, target)
    return CellMetrics(
        srcc=srcc(pred, target),
        plcc=_pearson(fit(pred), np.asarray(target, dtype=np.float64)),
        pair_accuracy=pair_ranking_accuracy(pred, target),
        n=len(pred),
        fit_converged=fit.converged,
    )


def leave_one_out_eval(
    checkpoints: Mapping[int, Optional[str | Path]],
    test_sets: Mapping[int, Sequence[ScoredImage]],
    manifest_paths: Mapping[int, str | Path],
    targets: Optional[Mapping[int, Sequence[float]]] = None,
    config_echo: Optional[dict] = None,
) -> EvalReport:
    """Evaluate one checkpoint per held-out domain on every domain's test set.

    ``targets`` overrides the evaluation targets per domain (e.g. human MOS);
    by default the manifest pseudo-MOS values are used. Missing checkpoints
    produce gap markers instead of failing the whole report.
    """
    domains = sorted(test_sets)
    unseen: dict[int, CellMetrics] = {}
    grid: dict[str, CellMetrics] = {}
    pooled: dict[int, CellMetrics] = {}
    missing_cell = CellMetrics(
        srcc=float("nan"),
        plcc=float("nan"),
        pair_accuracy=float("nan"),
        n=0,
        fit_converged=False,
        missing=True,
    )
    for held_out in domains:
        ckpt_path = checkpoints.get(held_out)
        if ckpt_path is None or not Path(ckpt_path).is_file():
            for eval_domain in domains:
                grid[grid_key(held_out, eval_domain)] = missing_cell
            unseen[held_out] = missing_cell
            pooled[held_out] = missing_cell
            continue
        model, _ = load_checkpoint(ckpt_path)
        all_pred: list[np.ndarray] = []
        all_target: list[np.ndarray] = []
        for eval_domain in domains:
            images = list(test_sets[eval_domain])
            pred = predict_scores(model, images, manifest_paths[eval_domain])
            if targets is not None and eval_domain in targets:
                target = np.asarray(targets[eval_domain], dtype=np.float64)
            else:
                target = np.asarray([im.pseudo_mos for im in images])
            cell = evaluate_cell(pred, target)
            grid[grid_key(held_out, eval_domain)] = cell
            if eval_domain == held_out:
                unseen[held_out] = cell
            all_pred.append(pred)
            all_target.append(target)
        pooled[held_out] = evaluate_cell(
            np.concatenate(all_pred), np.concatenate(all_target)
        )
    return EvalReport(
        unseen=unseen,
        grid=grid,
        domains=domains,
        pooled=pooled,
        config_echo=config_echo or {},
    )


def permutation_null(
    target: Sequence[float],
    n_shuffles: int = 1000,
    seed: int = 0,
    quantile: float = 0.95,
) -> float:
    """Quantile of |SRCC| under random prediction order (the no-signal null)."""
    rng = np.random.default_rng(seed)
    target = np.asarray(target, dtype=np.float64)
    values = []
    shuffled = target.copy()
    for _ in range(n_shuffles):
        rng.shuffle(shuffled)
        values.append(abs(srcc(shuffled, target)))
    return float(np.quantile(np.asarray(values), quantile))


def average_spectrum(images: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of per-image normalized log-magnitude centered 2-D spectra."""
    if not images:
        raise PreconditionError("average_spectrum needs at least one image")
    shape = images[0].shape
    total = np.zeros(shape, dtype=np.float64)
    for img in images:
        if img.shape != shape:
            raise DataError(
                f"mixed image sizes: {img.shape} vs {shape}; spectra cannot be "
                "averaged"
            )
        spectrum = np.fft.fftshift(np.fft.fft2(np.asarray(img, dtype=np.float64)))
        log_mag = np.log1p(np.abs(spectrum))
        peak = log_mag.max()
        total += log_mag / peak if peak > 0 else log_mag
    return total / len(images)


def spectrum_from_files(paths: Sequence[str | Path]) -> np.ndarray:
    return average_spectrum([to_grayscale(p) for p in paths])


def render_spectrum(spectrum: np.ndarray, path: str | Path) -> None:
    """Write the spectrum as a figure (plus use save_spectrum for the matrix)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(spectrum, cmap="viridis")
    ax.set_title("average log-magnitude spectrum")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_spectrum(spectrum: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, spectrum)
