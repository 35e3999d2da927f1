"""On-disk datasets: image files plus a manifest.

The manifest is a CSV file with header ``image,label,bbox,fixations``.
Paths are relative to the manifest's directory; ``bbox`` and ``fixations``
may be empty.  Box files hold ``top,left,height,width`` lines and fixation
files hold ``row,col`` integer lines.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import pnm
from .errors import DataError, FormatError
from .metrics import BoundingBox

MANIFEST_NAME = "manifest.csv"


@dataclass
class ManifestEntry:
    image: str
    label: int
    bbox: str | None = None
    fixations: str | None = None


@dataclass
class EvalItem:
    """One image ready for evaluation."""

    id: str
    image: np.ndarray
    label: int
    boxes: list | None = None
    fixations: np.ndarray | None = None


def read_manifest(path):
    root = os.path.dirname(os.path.abspath(path))
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise DataError(f"{path}: manifest needs 'image' and 'label' columns")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: bad label {row['label']!r}") from None

            def resolve(key):
                value = (row.get(key) or "").strip()
                return os.path.join(root, value) if value else None

            entries.append(ManifestEntry(resolve("image"), label, resolve("bbox"), resolve("fixations")))
    return entries


def write_manifest(path, entries):
    root = os.path.dirname(os.path.abspath(path))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "label", "bbox", "fixations"])
        for e in entries:
            rel = [os.path.relpath(p, root) if p else "" for p in (e.image, e.bbox, e.fixations)]
            writer.writerow([rel[0], e.label, rel[1], rel[2]])


def read_boxes(path):
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                boxes.append(BoundingBox(*(int(v) for v in line.split(","))))
            except (TypeError, ValueError):
                raise FormatError(f"{path}:{lineno}: expected 'top,left,height,width', got {line!r}") from None
    return boxes


def read_fixations(path):
    points = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                r, c = (int(v) for v in line.split(","))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: expected 'row,col', got {line!r}") from None
            points.append((r, c))
    if not points:
        raise FormatError(f"{path}: no fixations")
    return np.asarray(points, dtype=np.int64)


def load_items(entries, n_classes=None):
    """Load every manifest entry; all missing files are reported together."""
    missing = [p for e in entries for p in (e.image, e.bbox, e.fixations) if p and not os.path.exists(p)]
    if missing:
        raise DataError("missing files:\n  " + "\n  ".join(missing))
    items = []
    for e in entries:
        if n_classes is not None and not 0 <= e.label < n_classes:
            raise DataError(f"{e.image}: label {e.label} outside 0..{n_classes - 1}")
        items.append(EvalItem(
            id=os.path.basename(e.image),
            image=pnm.load_image(e.image),
            label=e.label,
            boxes=read_boxes(e.bbox) if e.bbox else None,
            fixations=read_fixations(e.fixations) if e.fixations else None,
        ))
    return items


def synthetic_gaze(dataset, seed, count=8):
    """Stand-in human fixations: points scattered around each blob centre.

    ``count`` points per image drawn from an isotropic normal with the blob's
    sigma, rounded and clipped to the image.
    """
    out = []
    for i in range(len(dataset)):
        rng = np.random.default_rng((seed, i))
        pts = rng.normal(dataset.centers[i], dataset.sigmas[i], size=(count, 2))
        out.append(np.clip(np.rint(pts), 0, dataset.size - 1).astype(np.int64))
    return out


def items_from_dataset(dataset, gaze=None):
    return [
        EvalItem(
            id=f"{i:05d}",
            image=dataset.images[i],
            label=int(dataset.labels[i]),
            boxes=[BoundingBox(*(int(v) for v in dataset.boxes[i]))],
            fixations=None if gaze is None else gaze[i],
        )
        for i in range(len(dataset))
    ]


def export_dataset(dataset, directory, gaze=None):
    """Write images, box files, optional fixation files and the manifest; return its path."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    ext = "ppm" if dataset.images.shape[1] == 3 else "pgm"
    for i in range(len(dataset)):
        stem = os.path.join(directory, f"{i:05d}")
        pnm.save_image(f"{stem}.{ext}", dataset.images[i])
        with open(f"{stem}.box", "w") as fh:
            fh.write(",".join(str(int(v)) for v in dataset.boxes[i]) + "\n")
        fix = None
        if gaze is not None:
            fix = f"{stem}.fix"
            with open(fix, "w") as fh:
                fh.writelines(f"{r},{c}\n" for r, c in gaze[i])
        entries.append(ManifestEntry(f"{stem}.{ext}", int(dataset.labels[i]), f"{stem}.box", fix))
    path = os.path.join(directory, MANIFEST_NAME)
    write_manifest(path, entries)
    return path
