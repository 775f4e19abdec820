"""Frequency-band layout and the electrode montage used throughout.

The ten sub-bands tile the 0.5-35 Hz analysis range without gaps or
overlap; each belongs to one of the four classic parent bands. Scalp
electrodes follow 10-20 naming and are grouped into scalp regions for the
feature-distribution reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParameterError

FULL_BAND = (0.5, 35.0)

PARENT_ORDER = ("delta", "theta", "alpha", "beta")


@dataclass(frozen=True)
class SubBand:
    name: str
    lo: float
    hi: float
    parent: str


@dataclass(frozen=True)
class BandPlan:
    """Ordered sub-band tiling of the analysis band.

    Invariants enforced at construction: sub-bands are contiguous and
    non-overlapping, they exactly tile ``full_band``, and every parent
    band's range is the union of its sub-bands.
    """

    sub_bands: tuple[SubBand, ...]
    full_band: tuple[float, float] = FULL_BAND

    def __post_init__(self):
        if not self.sub_bands:
            raise ParameterError("band plan needs at least one sub-band")
        lo, hi = self.full_band
        if not lo < hi:
            raise ParameterError("full band must be an increasing range")
        if abs(self.sub_bands[0].lo - lo) > 1e-12 or abs(self.sub_bands[-1].hi - hi) > 1e-12:
            raise ParameterError("sub-bands must tile the full band")
        for a, b in zip(self.sub_bands, self.sub_bands[1:]):
            if abs(a.hi - b.lo) > 1e-12:
                raise ParameterError(f"sub-bands {a.name} and {b.name} are not contiguous")
            if a.hi <= a.lo:
                raise ParameterError(f"sub-band {a.name} is empty")
        names = [b.name for b in self.sub_bands]
        if len(set(names)) != len(names):
            raise ParameterError("sub-band names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.sub_bands)

    def parent_ranges(self) -> dict[str, tuple[float, float]]:
        """Range of each parent band, the union of its contiguous sub-bands."""
        out: dict[str, tuple[float, float]] = {}
        for b in self.sub_bands:
            if b.parent in out:
                plo, phi = out[b.parent]
                if abs(phi - b.lo) > 1e-12:
                    raise ParameterError(f"parent band {b.parent} is not contiguous")
                out[b.parent] = (plo, b.hi)
            else:
                out[b.parent] = (b.lo, b.hi)
        return out


DEFAULT_BAND_PLAN = BandPlan(
    sub_bands=(
        SubBand("Delta1", 0.5, 2.0, "delta"),
        SubBand("Delta2", 2.0, 4.0, "delta"),
        SubBand("Theta1", 4.0, 6.0, "theta"),
        SubBand("Theta2", 6.0, 8.0, "theta"),
        SubBand("Alpha1", 8.0, 10.0, "alpha"),
        SubBand("Alpha2", 10.0, 12.0, "alpha"),
        SubBand("Alpha3", 12.0, 14.0, "alpha"),
        SubBand("Beta1", 14.0, 16.0, "beta"),
        SubBand("Beta2", 16.0, 25.0, "beta"),
        SubBand("Beta3", 25.0, 35.0, "beta"),
    )
)

# 21-channel recording montage: the 19 scalp sites grouped below plus the
# two auricular electrodes.
DEFAULT_CHANNELS = (
    "Fp1", "Fp2",
    "F7", "F3", "Fz", "F4", "F8",
    "A1", "T3", "C3", "Cz", "C4", "T4", "A2",
    "T5", "P3", "Pz", "P4", "T6",
    "O1", "O2",
)

DEFAULT_REGIONS = {
    "pre-frontal": ("Fp1", "Fp2"),
    "frontal": ("Fz", "F8", "F7", "F4", "F3"),
    "central": ("Cz", "C4", "C3"),
    "temporal": ("T6", "T5", "T4", "T3"),
    "parietal": ("Pz", "P4", "P3"),
    "occipital": ("O1", "O2"),
    "auricular": ("A1", "A2"),
}


@dataclass(frozen=True)
class RegionMap:
    """Partition of a montage into named scalp regions."""

    regions: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_REGIONS)
    )

    def __post_init__(self):
        seen: dict[str, str] = {}
        for region, electrodes in self.regions.items():
            for e in electrodes:
                if e in seen:
                    raise ParameterError(
                        f"electrode {e} appears in both {seen[e]} and {region}"
                    )
                seen[e] = region

    def validate_montage(self, channels) -> None:
        """Require the region lists to exactly partition ``channels``."""
        mapped = {e for els in self.regions.values() for e in els}
        missing = [c for c in channels if c not in mapped]
        extra = sorted(mapped - set(channels))
        if missing:
            raise ParameterError(f"channels not assigned to any region: {missing}")
        if extra:
            raise ParameterError(f"region electrodes absent from montage: {extra}")

    def region_of(self, channel: str) -> str | None:
        for region, electrodes in self.regions.items():
            if channel in electrodes:
                return region
        return None

    def electrode_counts(self) -> dict[str, int]:
        return {r: len(e) for r, e in self.regions.items()}


DEFAULT_REGION_MAP = RegionMap()
