"""Image decode/encode, normalization, and dataset ingestion.

Images travel through the package as float32 torch tensors, channels first
(3, H, W), RGB, with values in [-1, 1]. H equals W and is a power of two.
PNG is the only on-disk format so save/load round-trips stay within one
quantization step (1/255) per channel.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import DatasetError, DecodeError, ValidationError

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def validate_image(img: torch.Tensor) -> torch.Tensor:
    """Check the (3, H, W), H == W power-of-two, [-1, 1] contract."""
    if not isinstance(img, torch.Tensor):
        raise ValidationError(f"expected a torch.Tensor, got {type(img).__name__}")
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValidationError(f"expected shape (3, H, W), got {tuple(img.shape)}")
    if img.shape[1] != img.shape[2]:
        raise ValidationError(f"expected square image, got {tuple(img.shape)}")
    if not _is_power_of_two(img.shape[1]):
        raise ValidationError(f"side length {img.shape[1]} is not a power of two")
    if not torch.isfinite(img).all():
        raise ValidationError("image contains non-finite values")
    if img.min() < -1.0 or img.max() > 1.0:
        raise ValidationError("image values fall outside [-1, 1]")
    return img


def load_image(path: str | os.PathLike, resolution: int) -> torch.Tensor:
    """Decode an 8-bit RGB raster, resize bilinearly, map pixels to [-1, 1].

    Pixel value p becomes 2p/255 - 1.
    """
    if not _is_power_of_two(resolution):
        raise ValidationError(f"resolution {resolution} is not a power of two")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (resolution, resolution):
                im = im.resize((resolution, resolution), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"not a decodable image: {path}") from exc
    except OSError as exc:
        raise DecodeError(f"failed to decode image {path}: {exc}") from exc
    tensor = torch.from_numpy(arr).permute(2, 0, 1).contiguous()
    return tensor.mul_(2.0 / 255.0).sub_(1.0)


def decode_image_bytes(blob: bytes, resolution: int) -> torch.Tensor:
    """Decode raw image bytes with the same mapping as load_image."""
    if not blob:
        raise DecodeError("empty image payload")
    try:
        with Image.open(io.BytesIO(blob)) as im:
            im = im.convert("RGB")
            if im.size != (resolution, resolution):
                im = im.resize((resolution, resolution), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32)
    except UnidentifiedImageError as exc:
        raise DecodeError("payload is not a decodable image") from exc
    except OSError as exc:
        raise DecodeError(f"failed to decode image payload: {exc}") from exc
    tensor = torch.from_numpy(arr).permute(2, 0, 1).contiguous()
    return tensor.mul_(2.0 / 255.0).sub_(1.0)


def encode_png(img: torch.Tensor) -> bytes:
    """Render an image tensor to PNG bytes (inverse of the load mapping)."""
    validate_image(img)
    arr = img.detach().to(torch.float32).permute(1, 2, 0).numpy()
    quantized = np.rint((arr + 1.0) * (255.0 / 2.0)).clip(0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: torch.Tensor, path: str | os.PathLike) -> None:
    """Write an image tensor as an 8-bit PNG."""
    path = Path(path)
    try:
        path.write_bytes(encode_png(img))
    except OSError as exc:
        raise OSError(f"could not write PNG to {path}: {exc}") from exc


@dataclass
class DatasetItem:
    """One loaded image plus the provenance of its source file."""

    path: Path
    image: torch.Tensor
    sha256: str


@dataclass
class ImageDataset:
    """An ordered, shape-homogeneous collection of loaded images.

    Ordering is a pure function of (directory contents, seed): paths are
    sorted, then shuffled by a seeded RNG. Each item keeps its source path
    and the sha256 of the file bytes for the manifest.
    """

    items: list[DatasetItem]
    seed: int = 0

    def __post_init__(self):
        if not self.items:
            raise DatasetError("dataset is empty")
        shape = self.items[0].image.shape
        for i, item in enumerate(self.items):
            if item.image.shape != shape:
                raise ValidationError(
                    f"item {i} has shape {tuple(item.image.shape)}, expected {tuple(shape)}")

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, idx: int) -> torch.Tensor:
        return self.items[idx].image

    def __iter__(self):
        return (item.image for item in self.items)

    @property
    def resolution(self) -> int:
        return self.items[0].image.shape[-1]

    def stacked(self) -> torch.Tensor:
        return torch.stack([item.image for item in self.items], dim=0)

    def batches(self, batch_size: int, generator: torch.Generator):
        """Yield index-shuffled batches forever, reshuffling each epoch."""
        n = len(self.items)
        while True:
            order = torch.randperm(n, generator=generator)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                yield torch.stack([self.items[i].image for i in idx.tolist()])

    def write_manifest(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for item in self.items:
                row = {"path": str(item.path), "sha256": item.sha256}
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def ingest_dataset(directory: str | os.PathLike, resolution: int,
                   seed: int = 0) -> ImageDataset:
    """Load every image under ``directory`` into a deterministic dataset.

    Undecodable files are an error, not a skip; the raised DatasetError lists
    every offending path.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    paths = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES)
    if not paths:
        raise DatasetError(f"no images found in {directory}")
    rng = random.Random(seed)
    rng.shuffle(paths)

    items: list[DatasetItem] = []
    corrupt: list[Path] = []
    for path in paths:
        try:
            image = load_image(path, resolution)
        except DecodeError:
            corrupt.append(path)
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        items.append(DatasetItem(path=path, image=image, sha256=digest))
    if corrupt:
        raise DatasetError(
            f"{len(corrupt)} file(s) failed to decode: "
            + ", ".join(str(p) for p in corrupt),
            corrupt_paths=corrupt)
    return ImageDataset(items=items, seed=seed)
