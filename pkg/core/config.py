"""
Runtime settings for cmvband.
Values come from CMVBAND_* environment variables or a local .env file.
"""

from functools import lru_cache
from pathlib import Path
from typing import List

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Tolerances, default grid sizes and output locations."""

    model_config = SettingsConfigDict(
        env_prefix="CMVBAND_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = Field("INFO", description="Root logging level")
    log_dir: Path = Field(Path("logs"), description="Directory for dated log files")
    output_dir: Path = Field(Path("output"), description="Default report directory")

    tolerance: float = Field(1e-12, gt=0, description="Unitarity / identity tolerance")
    eig_tolerance: float = Field(1e-10, gt=0, description="Eigenvalue backward-error tolerance")
    gauge_threshold: float = Field(1e-14, gt=0, description="Magnitude below which a component counts as zero")
    unitary_g_cutoff: float = Field(1e-9, gt=0, description="g >= 1 - cutoff is treated as g = 1")

    max_workers: int = Field(4, ge=1, description="Threads used for parallel sweeps")
    tile_size: int = Field(64, ge=1, description="Pseudospectrum tile edge")
    x_samples: int = Field(2048, ge=8, description="Default quasimomentum samples")
    words_per_length: int = Field(200, ge=1, description="Random words per period length in hulls")
    hull_lengths: List[int] = Field(default_factory=lambda: [2, 4, 8])
    grid_resolution: int = Field(512, ge=2, description="Pseudospectrum grid nodes per axis")
    grid_half_width: float = Field(1.2, gt=0, description="Pseudospectrum window half width")
    arc_samples: int = Field(4096, ge=16, description="Samples of sigma(V) arcs for product regions")

    svg_hashsalt: str = Field("cmvband", description="Fixed salt so SVG ids are reproducible")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the process-wide settings instance."""
    return Settings()
