"""Synthetic Voronoi datasets and paired ppm/pgm directory ingestion."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .imageio import read_pgm16, read_ppm, write_pgm16, write_ppm
from .labels import LabelMap

NOISE_SIGMA = 0.03
LABEL_SUFFIX = ".labels.pgm"


@dataclass
class SampleRecord:
    image: np.ndarray  # [H, W, 3] floats in [0, 1]
    labels: LabelMap
    identifier: str


def gen_synthetic(n, size, regions, rng, noise_sigma=NOISE_SIGMA):
    """n Voronoi-partitioned images: flat region colors plus Gaussian noise.

    Sites are distinct integer pixels, so every sample contains exactly
    ``regions`` classes. Deterministic for a given generator state.
    """
    if regions < 2:
        raise ConfigError(f"need at least 2 regions, got {regions}")
    if size < 2:
        raise ConfigError(f"size must be >= 2, got {size}")
    gen = np.random.default_rng(rng)
    yy, xx = np.mgrid[0:size, 0:size]
    samples = []
    for i in range(n):
        flat_sites = gen.choice(size * size, size=regions, replace=False)
        sy = flat_sites // size
        sx = flat_sites % size
        colors = gen.random((regions, 3))
        d2 = (yy[..., None] - sy) ** 2 + (xx[..., None] - sx) ** 2
        ids = d2.argmin(axis=-1).astype(np.int32)  # ties to the lower site id
        img = colors[ids]
        if noise_sigma > 0:
            img = img + gen.normal(0.0, noise_sigma, img.shape)
        img = np.clip(img, 0.0, 1.0)
        samples.append(
            SampleRecord(
                image=img,
                labels=LabelMap(ids, regions),
                identifier=f"synthetic_{i:05d}",
            )
        )
    return samples


def save_dataset(dirpath, dataset):
    """Write samples as NAME.ppm / NAME.labels.pgm pairs."""
    dirp = Path(dirpath)
    dirp.mkdir(parents=True, exist_ok=True)
    for sample in dataset:
        write_ppm(dirp / f"{sample.identifier}.ppm", sample.image)
        write_pgm16(dirp / f"{sample.identifier}{LABEL_SUFFIX}", sample.labels.ids)


def load_dataset(dirpath):
    """Read NAME.ppm / NAME.labels.pgm pairs in lexicographic NAME order."""
    dirp = Path(dirpath)
    if not dirp.is_dir():
        raise DataError(f"dataset directory {dirp} does not exist")
    images = {p.name[: -len(".ppm")]: p for p in dirp.glob("*.ppm")}
    label_files = {p.name[: -len(LABEL_SUFFIX)]: p for p in dirp.glob(f"*{LABEL_SUFFIX}")}
    for name in sorted(label_files):
        if name not in images:
            raise DataError(f"{label_files[name]}: no matching {name}.ppm")
    samples = []
    for name in sorted(images):
        if name not in label_files:
            raise DataError(f"{images[name]}: no matching {name}{LABEL_SUFFIX}")
        img = read_ppm(images[name]).astype(np.float64) / 255.0
        ids = read_pgm16(label_files[name]).astype(np.int32)
        if img.shape[:2] != ids.shape:
            raise DataError(
                f"{images[name]} is {img.shape[1]}x{img.shape[0]} but "
                f"{label_files[name]} is {ids.shape[1]}x{ids.shape[0]}"
            )
        samples.append(
            SampleRecord(
                image=img,
                labels=LabelMap(ids, int(ids.max()) + 1),
                identifier=name,
            )
        )
    return samples
