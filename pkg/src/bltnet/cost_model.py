"""FLOPs accounting for two-stage background-skipping inference.

A detector is reduced to a single number, its cost per input pixel, under the
assumption that convolutional FLOPs grow linearly with pixel count. A FLOP
here is one multiply-add.

With ``A`` the per-pixel cost of the accurate detector, ``B`` the per-pixel
cost of the lite proposer, ``N`` the image pixels and ``M`` the pixels of the
downscaled crops::

    baseline = A * N
    two_stage = B * N + A * M
    baseline / two_stage = 1 / (B/A + M/N)
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

PROFILES_ENV = "BLTNET_PROFILES"
PROFILE_FIELDS = ("name", "gflops_at_ref", "ref_width", "ref_height", "role", "h")


class ProfileFormatError(ValueError):
    """Malformed detector-profile file; the message names the offending line."""


@dataclass(frozen=True)
class DetectorProfile:
    name: str
    gflops_at_ref: float
    ref_width_px: int
    ref_height_px: int
    role: Literal["stage1", "stage2"] = "stage2"
    required_crop_height_h: Optional[int] = None

    def __post_init__(self):
        if self.gflops_at_ref <= 0:
            raise ValueError(f"{self.name}: gflops_at_ref must be positive")
        if self.ref_width_px <= 0 or self.ref_height_px <= 0:
            raise ValueError(f"{self.name}: reference resolution must be positive")
        if self.role not in ("stage1", "stage2"):
            raise ValueError(f"{self.name}: role must be stage1 or stage2, got {self.role!r}")

    @property
    def flops_per_pixel(self) -> float:
        return self.gflops_at_ref * 1e9 / (self.ref_width_px * self.ref_height_px)


@dataclass(frozen=True)
class CostReport:
    baseline_flops: float
    bltnet_flops: float
    b_over_a: float
    m_over_n: float
    reduction_factor: float

    @property
    def baseline_gflops(self) -> float:
        return self.baseline_flops / 1e9

    @property
    def bltnet_gflops(self) -> float:
        return self.bltnet_flops / 1e9


def flops_baseline(stage2: DetectorProfile, n_pixels: float) -> float:
    """FLOPs of running the accurate detector on the whole image."""
    if n_pixels <= 0:
        raise ValueError("n_pixels must be positive")
    return stage2.flops_per_pixel * n_pixels


def flops_bltnet(stage1: DetectorProfile, stage2: DetectorProfile, n_pixels: float, m_pixels: float) -> float:
    """FLOPs of the proposer on the full image plus the detector on the crops."""
    if n_pixels <= 0:
        raise ValueError("n_pixels must be positive")
    if m_pixels < 0:
        raise ValueError("m_pixels must be non-negative")
    return stage1.flops_per_pixel * n_pixels + stage2.flops_per_pixel * m_pixels


def reduction_factor(
    stage1: DetectorProfile, stage2: DetectorProfile, n_pixels: float, m_pixels: float
) -> CostReport:
    """Full cost comparison for one image, or for dataset-average pixel counts."""
    base = flops_baseline(stage2, n_pixels)
    ours = flops_bltnet(stage1, stage2, n_pixels, m_pixels)
    b_over_a = stage1.flops_per_pixel / stage2.flops_per_pixel
    m_over_n = m_pixels / n_pixels
    return CostReport(base, ours, b_over_a, m_over_n, 1.0 / (b_over_a + m_over_n))


def parse_profiles(text: str, source: str = "<string>") -> dict[str, DetectorProfile]:
    """Parse the comma-separated profile format.

    Lines starting with ``#`` and blank lines are skipped. The first remaining
    line is the header and must list exactly :data:`PROFILE_FIELDS`.
    """
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            rows.append((lineno, line))
    if not rows:
        raise ProfileFormatError(f"{source}: no header line")
    header_line, header = rows[0]
    fields = tuple(f.strip() for f in next(csv.reader([header])))
    if fields != PROFILE_FIELDS:
        raise ProfileFormatError(
            f"{source}:{header_line}: header must be {','.join(PROFILE_FIELDS)}, got {','.join(fields)}"
        )
    profiles: dict[str, DetectorProfile] = {}
    for lineno, line in rows[1:]:
        values = [v.strip() for v in next(csv.reader(io.StringIO(line)))]
        if len(values) != len(PROFILE_FIELDS):
            raise ProfileFormatError(
                f"{source}:{lineno}: expected {len(PROFILE_FIELDS)} fields, got {len(values)}"
            )
        name, gflops, width, height, role, h = values
        try:
            profile = DetectorProfile(
                name=name,
                gflops_at_ref=float(gflops),
                ref_width_px=int(width),
                ref_height_px=int(height),
                role=role,
                required_crop_height_h=int(h) if h else None,
            )
        except ValueError as exc:
            raise ProfileFormatError(f"{source}:{lineno}: {exc}") from None
        if name in profiles:
            raise ProfileFormatError(f"{source}:{lineno}: duplicate profile {name!r}")
        profiles[name] = profile
    return profiles


def load_profiles(path: Union[str, Path, None] = None) -> dict[str, DetectorProfile]:
    """Load detector profiles.

    Resolution order: explicit ``path``, then the ``BLTNET_PROFILES``
    environment variable, then the file bundled with the package.
    """
    path = path or os.environ.get(PROFILES_ENV)
    if path:
        return parse_profiles(Path(path).read_text(), source=str(path))
    text = resources.files("bltnet").joinpath("data/profiles.csv").read_text()
    return parse_profiles(text, source="profiles.csv")


def get_profile(profiles: dict[str, DetectorProfile], name: str, role: Optional[str] = None) -> DetectorProfile:
    if name not in profiles:
        raise KeyError(f"unknown profile {name!r}; available: {', '.join(sorted(profiles))}")
    profile = profiles[name]
    if role is not None and profile.role != role:
        raise ValueError(f"profile {name!r} has role {profile.role}, expected {role}")
    return profile
