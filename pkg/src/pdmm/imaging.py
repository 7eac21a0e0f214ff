"""3D volumes, central cross-sections, resizing, augmentation, PGM export.

Volume files use the little-endian MVOL v1 layout:
bytes 0-3 magic "MVOL"; 4-5 u16 version=1; 6 u8 dtype=0 (f32); 7 u8
reserved=0; 8-19 three u32 dims X,Y,Z; payload X*Y*Z f32 with x varying
fastest (index(x,y,z) = x + X*(y + Y*z)).
"""
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MVOL_MAGIC = b"MVOL"
MVOL_VERSION = 1
MVOL_HEADER = struct.Struct("<4sHBBIII")


class VolumeFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Volume:
    """3D scalar grid; voxels stored as a (X, Y, Z) float32 array."""

    voxels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.voxels, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise VolumeFormatError("voxels must be a 3-D array with positive dims")
        if not np.isfinite(v).all():
            raise VolumeFormatError("non-finite voxel value")
        v = np.asfortranarray(v)  # x-fastest storage, matching the file layout
        v.setflags(write=False)
        object.__setattr__(self, "voxels", v)

    @property
    def dims(self):
        return self.voxels.shape


def volume_write(volume: Volume, path):
    x, y, z = volume.dims
    payload = volume.voxels.ravel(order="F").astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MVOL_HEADER.pack(MVOL_MAGIC, MVOL_VERSION, 0, 0, x, y, z))
        fh.write(payload)


def volume_read(path) -> Volume:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < MVOL_HEADER.size:
        raise VolumeFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, dtype, _reserved, x, y, z = MVOL_HEADER.unpack_from(raw)
    if magic != MVOL_MAGIC:
        raise VolumeFormatError(f"{path}: bad magic {magic!r}")
    if version != MVOL_VERSION:
        raise VolumeFormatError(f"{path}: unsupported version {version}")
    if dtype != 0:
        raise VolumeFormatError(f"{path}: unsupported dtype code {dtype}")
    expected = MVOL_HEADER.size + 4 * x * y * z
    if len(raw) != expected:
        raise VolumeFormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=MVOL_HEADER.size)
    return Volume(flat.reshape((x, y, z), order="F"))


class SliceTriplet(NamedTuple):
    sagittal: np.ndarray  # (Y, Z)
    coronal: np.ndarray  # (X, Z)
    transverse: np.ndarray  # (X, Y)


def center_slices(volume: Volume) -> SliceTriplet:
    """Central cross-sections at floor-midpoint indices along x, y, z."""
    x, y, z = volume.dims
    cx, cy, cz = x // 2, y // 2, z // 2
    v = volume.voxels.astype(np.float64)
    return SliceTriplet(v[cx, :, :].copy(), v[:, cy, :].copy(), v[:, :, cz].copy())


def _source_coords(n_in, n_out):
    if n_out == 1:
        return np.full(1, (n_in - 1) / 2.0)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Edge-aligned bilinear resize; exact pass-through when shapes match."""
    image = np.asarray(image, dtype=np.float64)
    in_h, in_w = image.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output extent must be positive")
    if (out_h, out_w) == (in_h, in_w):
        return image.copy()
    rs = _source_coords(in_h, out_h)
    cs = _source_coords(in_w, out_w)
    r0 = np.clip(np.floor(rs).astype(int), 0, in_h - 1)
    c0 = np.clip(np.floor(cs).astype(int), 0, in_w - 1)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = (rs - r0)[:, None]
    fc = (cs - c0)[None, :]
    top = image[np.ix_(r0, c0)] * (1 - fc) + image[np.ix_(r0, c1)] * fc
    bot = image[np.ix_(r1, c0)] * (1 - fc) + image[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def assemble_image_input(triplet: SliceTriplet, side: int) -> np.ndarray:
    """Resize each slice to side x side and stack (sagittal, coronal, transverse)."""
    if side < 8:
        raise ValueError("side must be >= 8")
    return np.stack([resize_bilinear(s, side, side) for s in triplet])


def rotate_channels(tensor: np.ndarray, theta_deg: float) -> np.ndarray:
    """Rotate all channels about the image center by theta_deg (clockwise for
    positive theta in row/col display orientation), bilinear sampling,
    out-of-bounds reads are 0."""
    c, h, w = tensor.shape
    if theta_deg == 0.0:
        return tensor.copy()
    theta = np.deg2rad(theta_deg)
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc_idx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dr = rr - cr
    dc = cc_idx - cc
    src_r = cr + dr * np.cos(theta) - dc * np.sin(theta)
    src_c = cc + dr * np.sin(theta) + dc * np.cos(theta)
    r0 = np.floor(src_r).astype(int)
    c0 = np.floor(src_c).astype(int)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros_like(tensor)
    for (roff, coff, weight) in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        ri = r0 + roff
        ci = c0 + coff
        valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        rs = np.clip(ri, 0, h - 1)
        cs = np.clip(ci, 0, w - 1)
        contrib = weight * valid
        for ch in range(c):
            out[ch] += tensor[ch][rs, cs] * contrib
    return out


def crop_resize_channels(tensor: np.ndarray, top: int, left: int, crop_side: int) -> np.ndarray:
    c, h, w = tensor.shape
    window = tensor[:, top : top + crop_side, left : left + crop_side]
    if crop_side == h == w:
        return window.copy()
    return np.stack([resize_bilinear(window[ch], h, w) for ch in range(c)])


def augment(tensor: np.ndarray, rng: np.random.Generator,
            max_rotate_deg: float, crop_fraction: float) -> np.ndarray:
    """Random rotation then random crop (resized back), same transform for
    all 3 channels. Identity when max_rotate_deg == 0 and crop_fraction == 1."""
    if not 0.0 < crop_fraction <= 1.0:
        raise ValueError("crop_fraction must be in (0, 1]")
    _, h, w = tensor.shape
    theta = float(rng.uniform(-max_rotate_deg, max_rotate_deg)) if max_rotate_deg > 0 else 0.0
    crop_side = int(np.ceil(crop_fraction * h))
    top = int(rng.integers(0, h - crop_side + 1))
    left = int(rng.integers(0, w - crop_side + 1))
    out = rotate_channels(tensor, theta)
    if crop_side < h:
        out = crop_resize_channels(out, top, left, crop_side)
    return out


def export_pgm(image: np.ndarray, path):
    """Binary PGM (P5), min-max scaled to [0, 255]; constant images map to 0."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    lo, hi = image.min(), image.max()
    if hi > lo:
        scaled = np.round((image - lo) * (255.0 / (hi - lo)))
    else:
        scaled = np.zeros_like(image)
    body = scaled.astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(body)
