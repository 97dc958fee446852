"""Scored-image manifests and quality-discriminable pair construction.

Training data is built per domain: images are sorted by pseudo-MOS, split
into contiguous quality levels, and the best/worst images are paired against
mid-level partners with a binary relative-quality label. Manifests and pair
lists are plain comma-separated text files with a versioned magic header.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .config import PairPlan
from .errors import ConfigurationError, DataError, PreconditionError

MANIFEST_MAGIC = "# gfiqa-manifest v1"
PAIRS_MAGIC = "# gfiqa-pairs v1"
_MANIFEST_HEADER = "stable_id,domain,image_path,seg_path,pseudo_mos"
_PAIRS_HEADER = "anchor_id,partner_id,label,domain"


@dataclass(frozen=True)
class ScoredImage:
    """One training image with its automatically produced quality label."""

    stable_id: int
    domain_id: int
    image_path: str
    pseudo_mos: float
    seg_path: Optional[str] = None

    def __post_init__(self):
        if self.pseudo_mos != self.pseudo_mos or self.pseudo_mos in (
            float("inf"),
            float("-inf"),
        ):
            raise DataError(
                f"pseudo_mos of image {self.stable_id} (domain {self.domain_id}) "
                "is not finite"
            )


@dataclass(frozen=True)
class TrainPair:
    """Two same-domain images plus the relative-quality label.

    ``label`` is 1 iff the anchor's pseudo-MOS is the higher one; ties are
    never emitted by the builder.
    """

    anchor: ScoredImage
    partner: ScoredImage
    label: int
    domain_id: int

    def __post_init__(self):
        if self.anchor.domain_id != self.partner.domain_id:
            raise DataError("pair crosses domains")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label}")


def assign_quality_levels(
    images: Sequence[ScoredImage], n_levels: int = 3
) -> list[list[ScoredImage]]:
    """Sort by pseudo-MOS descending and split into contiguous levels.

    Ties are broken by stable_id so the partition is reproducible. When the
    count does not divide evenly the remainder goes to the earlier
    (higher-quality) levels.
    """
    if not images:
        raise PreconditionError("cannot assign quality levels to an empty list")
    if n_levels < 1:
        raise ConfigurationError("n_levels must be >= 1")
    if n_levels > len(images):
        raise ConfigurationError(
            f"{n_levels} levels requested for only {len(images)} images"
        )
    ordered = sorted(images, key=lambda im: (-im.pseudo_mos, im.stable_id))
    base, rem = divmod(len(ordered), n_levels)
    levels: list[list[ScoredImage]] = []
    start = 0
    for i in range(n_levels):
        size = base + (1 if i < rem else 0)
        levels.append(ordered[start : start + size])
        start += size
    return levels


def build_pairs(
    levels: Sequence[Sequence[ScoredImage]],
    plan: PairPlan,
    rng: Optional[random.Random] = None,
) -> list[TrainPair]:
    """Emit quality-discriminable pairs from a 3-level partition.

    Anchors are the ``top_k`` head of level 1 and the ``bottom_k`` tail of
    level 3; each anchor is paired with ``per_anchor`` distinct mid-level
    partners drawn uniformly without replacement. The anchor is always the
    first element of the pair.
    """
    if len(levels) != 3:
        raise ConfigurationError(
            f"pair building expects 3 quality levels, got {len(levels)}"
        )
    rng = rng if rng is not None else random.Random(plan.seed)
    top, middle, bottom = levels[0], list(levels[1]), levels[2]
    if plan.top_k > len(top):
        raise ConfigurationError(
            f"top_k={plan.top_k} exceeds level-1 size {len(top)}"
        )
    if plan.bottom_k > len(bottom):
        raise ConfigurationError(
            f"bottom_k={plan.bottom_k} exceeds level-3 size {len(bottom)}"
        )
    if plan.per_anchor > len(middle):
        raise ConfigurationError(
            f"per_anchor={plan.per_anchor} exceeds level-2 size {len(middle)}"
        )

    anchors = list(top[: plan.top_k]) + list(bottom[len(bottom) - plan.bottom_k :])
    pairs: list[TrainPair] = []
    for anchor in anchors:
        pool = [im for im in middle if im.pseudo_mos != anchor.pseudo_mos]
        if plan.per_anchor > len(pool):
            raise ConfigurationError(
                f"anchor {anchor.stable_id} ties with too many mid-level images; "
                f"only {len(pool)} tie-free partners available"
            )
        partners = rng.sample(pool, plan.per_anchor)
        for partner in partners:
            label = 1 if anchor.pseudo_mos > partner.pseudo_mos else 0
            pairs.append(
                TrainPair(
                    anchor=anchor,
                    partner=partner,
                    label=label,
                    domain_id=anchor.domain_id,
                )
            )
    return pairs


def write_manifest(images: Iterable[ScoredImage], path: str | Path) -> None:
    path = Path(path)
    lines = [MANIFEST_MAGIC, _MANIFEST_HEADER]
    for im in images:
        seg = im.seg_path or ""
        lines.append(
            f"{im.stable_id},{im.domain_id},{im.image_path},{seg},{im.pseudo_mos!r}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(
    path: str | Path, check_files: bool = True
) -> list[ScoredImage]:
    """Parse a manifest file, validating rows and referenced image files."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MANIFEST_MAGIC:
        raise DataError(f"{path} is not a gfiqa manifest (bad magic line)")
    if len(lines) < 2 or lines[1] != _MANIFEST_HEADER:
        raise DataError(f"{path} has an unexpected header row")
    images: list[ScoredImage] = []
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            stable_id = int(parts[0])
            domain_id = int(parts[1])
            pseudo_mos = float(parts[4])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        key = (domain_id, stable_id)
        if key in seen:
            raise DataError(
                f"{path}:{lineno}: duplicate stable_id {stable_id} in domain "
                f"{domain_id}"
            )
        seen.add(key)
        image_path, seg_path = parts[2], parts[3] or None
        if check_files:
            resolved = _resolve(path, image_path)
            if not resolved.is_file():
                raise DataError(f"{path}:{lineno}: image file missing: {resolved}")
            if seg_path is not None and not _resolve(path, seg_path).is_file():
                raise DataError(
                    f"{path}:{lineno}: segmentation file missing: "
                    f"{_resolve(path, seg_path)}"
                )
        images.append(
            ScoredImage(
                stable_id=stable_id,
                domain_id=domain_id,
                image_path=image_path,
                seg_path=seg_path,
                pseudo_mos=pseudo_mos,
            )
        )
    return images


def _resolve(manifest_path: Path, file_path: str) -> Path:
    p = Path(file_path)
    return p if p.is_absolute() else manifest_path.parent / p


def resolve_image_path(manifest_path: str | Path, image: ScoredImage) -> Path:
    """Image paths in manifests are relative to the manifest's directory."""
    return _resolve(Path(manifest_path), image.image_path)


def resolve_seg_path(manifest_path: str | Path, image: ScoredImage) -> Optional[Path]:
    if image.seg_path is None:
        return None
    return _resolve(Path(manifest_path), image.seg_path)


def seg_path_for(image_path: str | Path, suffix: str = "_seg") -> Path:
    """Conventional segmentation-map path: image basename plus a suffix.

    ``face_012.png`` -> ``face_012_seg.png``. Used when ingesting image
    directories that follow the convention instead of carrying explicit
    seg paths.
    """
    p = Path(image_path)
    return p.with_name(p.stem + suffix + p.suffix)


def attach_conventional_seg_paths(
    images: Iterable[ScoredImage],
    root: str | Path,
    suffix: str = "_seg",
) -> list[ScoredImage]:
    """Fill in missing seg paths where the conventional file exists on disk."""
    root = Path(root)
    out = []
    for im in images:
        if im.seg_path is None:
            candidate = seg_path_for(im.image_path, suffix)
            if (root / candidate).is_file():
                im = dataclasses.replace(im, seg_path=str(candidate))
        out.append(im)
    return out


def write_pairs(pairs: Iterable[TrainPair], path: str | Path) -> None:
    path = Path(path)
    lines = [PAIRS_MAGIC, _PAIRS_HEADER]
    for p in pairs:
        lines.append(
            f"{p.anchor.stable_id},{p.partner.stable_id},{p.label},{p.domain_id}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_pairs(
    path: str | Path, images: Mapping[tuple[int, int], ScoredImage]
) -> list[TrainPair]:
    """Read a pairs file, resolving ids through ``images``.

    ``images`` maps (domain_id, stable_id) to the manifest entry.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pairs file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != PAIRS_MAGIC:
        raise DataError(f"{path} is not a gfiqa pairs file (bad magic line)")
    if len(lines) < 2 or lines[1] != _PAIRS_HEADER:
        raise DataError(f"{path} has an unexpected header row")
    pairs: list[TrainPair] = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            anchor_id, partner_id, label, domain_id = (int(v) for v in parts)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        try:
            anchor = images[(domain_id, anchor_id)]
            partner = images[(domain_id, partner_id)]
        except KeyError as exc:
            raise DataError(
                f"{path}:{lineno}: id {exc.args[0]} not present in the manifest"
            ) from exc
        pairs.append(
            TrainPair(anchor=anchor, partner=partner, label=label, domain_id=domain_id)
        )
    return pairs


def images_by_key(images: Iterable[ScoredImage]) -> dict[tuple[int, int], ScoredImage]:
    out: dict[tuple[int, int], ScoredImage] = {}
    for im in images:
        key = (im.domain_id, im.stable_id)
        if key in out:
            raise DataError(
                f"duplicate stable_id {im.stable_id} in domain {im.domain_id}"
            )
        out[key] = im
    return out


def group_by_domain(images: Iterable[ScoredImage]) -> dict[int, list[ScoredImage]]:
    grouped: dict[int, list[ScoredImage]] = {}
    for im in images:
        grouped.setdefault(im.domain_id, []).append(im)
    return grouped
