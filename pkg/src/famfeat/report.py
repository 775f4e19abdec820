"""Summary tables and figures: feature-family and scalp-region distributions
of the selected features, per-run CCR tables and two-vs-three-class
comparisons. Figures are written as self-contained SVG bar charts with
nothing nondeterministic in the output.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

from .bands import DEFAULT_REGION_MAP, RegionMap
from .features import FAMILY_TOGGLES, feature_channels, feature_family

FAMILY_ORDER = FAMILY_TOGGLES


def family_tally(feature_names: list[str]) -> dict[str, int]:
    """How many of the given features fall into each family; sums to len(names)."""
    tally = {f: 0 for f in FAMILY_ORDER}
    for name in feature_names:
        tally[feature_family(name)] += 1
    return tally


def region_tally(
    feature_names: list[str], region_map: RegionMap = DEFAULT_REGION_MAP
) -> tuple[dict[str, int], int]:
    """Per-region counts over single-channel features.

    Channel-pair features span two electrodes and are excluded; the second
    return value is the number of such pair features, so the region counts
    sum to ``len(feature_names) - pair_count``.
    """
    tally = {r: 0 for r in region_map.regions}
    pairs = 0
    for name in feature_names:
        channels = feature_channels(name)
        if len(channels) != 1:
            pairs += 1
            continue
        region = region_map.region_of(channels[0])
        if region is None:
            region = "unassigned"
            tally.setdefault(region, 0)
        tally[region] += 1
    return tally, pairs


def normalized_region_tally(
    tally: dict[str, int], region_map: RegionMap = DEFAULT_REGION_MAP
) -> dict[str, float]:
    """Region counts divided by the number of electrodes in each region."""
    counts = region_map.electrode_counts()
    return {r: tally[r] / counts[r] for r in tally if r in counts}


def tally_csv(rows: list[tuple[str, object]], header: tuple[str, str]) -> str:
    lines = [",".join(header)]
    for key, value in rows:
        lines.append(f"{key},{value!r}" if isinstance(value, float) else f"{key},{value}")
    return "\n".join(lines) + "\n"


def mean_sd_table(groups: dict[str, list[float]]) -> str:
    """CSV with one column per group and mean / sd rows."""
    names = list(groups)
    lines = ["statistic," + ",".join(names)]
    means = []
    sds = []
    for name in names:
        vals = groups[name]
        m = sum(vals) / len(vals)
        var = sum((v - m) ** 2 for v in vals) / len(vals)
        means.append(m)
        sds.append(var**0.5)
    lines.append("mean_ccr," + ",".join(repr(float(m)) for m in means))
    lines.append("sd_ccr," + ",".join(repr(float(s)) for s in sds))
    return "\n".join(lines) + "\n"


def svg_bar_chart(
    title: str,
    labels: list[str],
    values: list[float],
    width: int = 640,
    height: int = 360,
) -> str:
    """Minimal deterministic SVG bar chart."""
    if not labels or len(labels) != len(values):
        raise ValueError("labels and values must be non-empty and parallel")
    margin = 50
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    vmax = max(max(values), 1e-12)
    n = len(values)
    slot = plot_w / n
    bar_w = slot * 0.7
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="12" y="{margin - 8}" font-family="sans-serif" '
        f'font-size="11">{vmax:.4g}</text>',
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        h = plot_h * (value / vmax)
        x = margin + i * slot + (slot - bar_w) / 2
        y = height - margin - h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
            f'fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{value:.4g}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{height - margin + 14:.2f}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="10">'
            f"{escape(str(label))}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
