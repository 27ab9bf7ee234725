"""Evaluation artifacts: Taylor statistics, score scatter data, scale and
RMSE tables, and simple deterministic SVG renderings.

SVG is the only graphics format: dependency-free, diffable, and testable
by parsing. Outputs are byte-for-byte deterministic given identical
inputs.
"""

import math
from dataclasses import dataclass

import numpy as np

from autocal import tables

_LAW_OF_COSINES_TOL = 1e-10


@dataclass(frozen=True)
class TaylorStats:
    """Second-order comparison of one model field against observations.

    ``sigma_ratio`` is the model-to-observation standard deviation ratio,
    ``correlation`` the (possibly area-weighted) pattern correlation, and
    ``normalized_crmse`` the square root of the centered mean-squared error
    over the observational variance. The three satisfy
    ncrmse^2 = 1 + ratio^2 - 2*ratio*corr.
    """

    field: str
    label: str
    sigma_ratio: float
    correlation: float
    normalized_crmse: float
    bias: float
    weighted: bool = True
    degenerate: bool = False

    def __post_init__(self):
        if self.degenerate:
            return
        if not -1.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.sigma_ratio < 0:
            raise ValueError("sigma_ratio must be nonnegative")
        lhs = self.normalized_crmse**2
        rhs = 1.0 + self.sigma_ratio**2 - 2.0 * self.sigma_ratio * self.correlation
        if abs(lhs - rhs) > _LAW_OF_COSINES_TOL:
            raise ValueError(f"law-of-cosines identity violated: {lhs!r} vs {rhs!r}")

    @property
    def polar(self):
        """(radius, angle) placement on the diagram."""
        return self.sigma_ratio, math.acos(np.clip(self.correlation, -1.0, 1.0))


def taylor_stats(model, obs, key, weighted=True, label="model"):
    """Compute Taylor statistics of one field between two stacked vectors."""
    spec = obs.schema.spec(key)
    a = model.field_values(key)
    b = obs.field_values(key)
    w = spec.weights if weighted else np.full(spec.size, 1.0 / spec.size)
    a_mean = float(w @ a)
    b_mean = float(w @ b)
    ca, cb = a - a_mean, b - b_mean
    var_a = float(w @ (ca * ca))
    var_b = float(w @ (cb * cb))
    if var_a <= 0.0 or var_b <= 0.0:
        return TaylorStats(
            field=spec.key, label=label, sigma_ratio=np.nan, correlation=np.nan,
            normalized_crmse=np.nan, bias=a_mean - b_mean, weighted=weighted,
            degenerate=True,
        )
    cov = float(w @ (ca * cb))
    corr = cov / math.sqrt(var_a * var_b)
    cmse = float(w @ ((ca - cb) ** 2))
    return TaylorStats(
        field=spec.key,
        label=label,
        sigma_ratio=math.sqrt(var_a) / math.sqrt(var_b),
        correlation=corr,
        normalized_crmse=math.sqrt(cmse / var_b),
        bias=a_mean - b_mean,
        weighted=weighted,
    )


def pc_scatter_data(model, ensemble):
    """True versus surrogate-predicted component scores over the ensemble.

    Returns one record per retained component with the paired scores and a
    per-component R-squared (1 minus residual over centered variance).
    """
    truth = model.basis.transform(ensemble.values)
    predicted = model.component_scores_matrix(ensemble.design.values)
    records = []
    for j in range(model.k):
        t = truth[:, j]
        p = predicted[:, j]
        denom = float(np.sum((t - t.mean()) ** 2))
        r2 = 1.0 - float(np.sum((t - p) ** 2)) / denom if denom > 0 else np.nan
        records.append({"pc": j + 1, "true": t, "predicted": p, "r2": r2})
    return records


def scale_table(s_sq_hat, schema):
    """Per-field scales arranged variable by season, reporting s and s^2."""
    s_sq = np.asarray(s_sq_hat, dtype=float)
    if s_sq.shape != (schema.n_fields,):
        raise ValueError(f"expected {schema.n_fields} scales, got {s_sq.shape}")
    variables = schema.variables
    seasons = schema.seasons
    s_grid = np.full((len(variables), len(seasons)), np.nan)
    for p, spec in enumerate(schema.fields):
        r = variables.index(spec.name)
        c = seasons.index(spec.season)
        s_grid[r, c] = s_sq[p]
    return {
        "variables": variables,
        "seasons": seasons,
        "s": np.sqrt(s_grid),
        "s_sq": s_grid,
    }


def write_scale_table_csv(path, table):
    seasons = table["seasons"]
    header = ["variable"] + [f"s:{s}" for s in seasons] + [f"s_sq:{s}" for s in seasons]
    rows = []
    for i, var in enumerate(table["variables"]):
        row = [var]
        row += [float(v) for v in table["s"][i]]
        row += [float(v) for v in table["s_sq"][i]]
        rows.append(row)
    tables.write_csv(path, header, rows)


def write_rmse_table_csv(path, table):
    header = ["variable"] + list(table["seasons"]) + ["Avg."]
    rows = []
    for i, var in enumerate(table["variables"]):
        rows.append([var] + [float(v) for v in table["cells"][i]] + [float(table["row_avg"][i])])
    rows.append(["Average"] + [float(v) for v in table["col_avg"]] + [float(table["overall"])])
    tables.write_csv(path, header, rows)


def write_taylor_csv(path, stats):
    header = ["field", "label", "sigma_ratio", "correlation", "normalized_crmse",
              "bias", "weighted", "degenerate"]
    rows = [
        [s.field, s.label, s.sigma_ratio, s.correlation, s.normalized_crmse,
         s.bias, s.weighted, s.degenerate]
        for s in stats
    ]
    tables.write_csv(path, header, rows)


def write_pc_scatter_csv(path, records):
    header = ["pc", "member", "true", "predicted", "r2"]
    rows = []
    for rec in records:
        for i, (t, p) in enumerate(zip(rec["true"], rec["predicted"])):
            rows.append([rec["pc"], i, float(t), float(p), float(rec["r2"])])
    tables.write_csv(path, header, rows)


def write_variance_curve_csv(path, basis):
    tables.write_csv(
        path,
        ["k", "cumulative_fraction"],
        [[k, float(f)] for k, f in basis.variance_curve()],
    )


# -- SVG rendering ----------------------------------------------------------


def _fmt(x):
    return f"{x:.2f}"


def _svg(width, height, body):
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
    )
    return head + body + "</svg>\n"


def _sequential_color(t):
    t = float(np.clip(t, 0.0, 1.0))
    start, end = (247, 251, 255), (8, 81, 156)
    rgb = tuple(int(round(s + t * (e - s))) for s, e in zip(start, end))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _diverging_color(t):
    t = float(np.clip(t, -1.0, 1.0))
    if t < 0:
        start, end = (255, 255, 255), (178, 24, 43)
        t = -t
    else:
        start, end = (255, 255, 255), (33, 102, 172)
    rgb = tuple(int(round(s + t * (e - s))) for s, e in zip(start, end))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def field_map_svg(stacked, key, diverging=False, vmin=None, vmax=None,
                  cell=12, title=None):
    """Heatmap of one gridded field; masked cells are left blank."""
    spec = stacked.schema.spec(key)
    if spec.grid.is_scalar:
        raise ValueError(f"field {spec.key!r} is scalar and cannot be mapped")
    grid_vals = stacked.to_grid(key)
    nrow, ncol = spec.grid.shape
    finite = grid_vals[np.isfinite(grid_vals)]
    if vmin is None:
        vmin = float(finite.min()) if finite.size else 0.0
    if vmax is None:
        vmax = float(finite.max()) if finite.size else 1.0
    span = vmax - vmin if vmax > vmin else 1.0
    margin = 20
    width = ncol * cell + 2 * margin
    height = nrow * cell + 2 * margin + (16 if title else 0)
    top = margin + (16 if title else 0)
    parts = []
    if title:
        parts.append(
            f'<text x="{margin}" y="{margin - 4}" font-size="12" '
            f'font-family="monospace">{title}</text>\n'
        )
    for r in range(nrow):
        for c in range(ncol):
            v = grid_vals[r, c]
            if not np.isfinite(v):
                continue
            if diverging:
                amp = max(abs(vmin), abs(vmax)) or 1.0
                color = _diverging_color(v / amp)
            else:
                color = _sequential_color((v - vmin) / span)
            x = margin + c * cell
            y = top + (nrow - 1 - r) * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{color}"/>\n'
            )
    return _svg(width, height, "".join(parts))


def r2_map_svg(r2_values, key, title=None):
    """R-squared heatmap on a fixed [0, 1] sequential scale."""
    return field_map_svg(r2_values, key, diverging=False, vmin=0.0, vmax=1.0,
                         title=title)


def taylor_diagram_svg(stats, background=None, size=480):
    """Half-disc Taylor diagram with CRMSE contours centered at (1, 0).

    ``stats`` points are drawn as labeled circles; ``background`` points
    (for example the full ensemble) render smaller and lighter.
    """
    if not stats:
        raise ValueError("no Taylor statistics to draw")
    drawable = [s for s in stats if not s.degenerate]
    radii = [s.sigma_ratio for s in drawable] + [
        s.sigma_ratio for s in (background or []) if not s.degenerate
    ]
    rmax = max(1.5, math.ceil(max(radii + [1.0]) * 1.1 / 0.5) * 0.5)
    margin = 40
    scale = (size - 2 * margin) / (2 * rmax)
    cx, cy = size / 2.0, size - margin

    def to_px(radius, angle):
        return cx + scale * radius * math.cos(angle), cy - scale * radius * math.sin(angle)

    parts = []
    r = 0.5
    while r <= rmax + 1e-9:
        px = scale * r
        parts.append(
            f'<path d="M {_fmt(cx - px)} {_fmt(cy)} A {_fmt(px)} {_fmt(px)} 0 0 1 '
            f'{_fmt(cx + px)} {_fmt(cy)}" fill="none" stroke="#bbbbbb" '
            f'stroke-width="{"1.5" if abs(r - 1.0) < 1e-9 else "0.5"}"/>\n'
        )
        r += 0.5
    parts.append(
        f'<line x1="{_fmt(cx - scale * rmax)}" y1="{_fmt(cy)}" '
        f'x2="{_fmt(cx + scale * rmax)}" y2="{_fmt(cy)}" stroke="#888888" '
        'stroke-width="1"/>\n'
    )
    ref_x, ref_y = to_px(1.0, 0.0)
    for contour in (0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<circle cx="{_fmt(ref_x)}" cy="{_fmt(ref_y)}" r="{_fmt(scale * contour)}" '
            'fill="none" stroke="#ddc9a3" stroke-width="0.7"/>\n'
        )
    parts.append(
        f'<circle cx="{_fmt(ref_x)}" cy="{_fmt(ref_y)}" r="4" fill="#000000"/>\n'
    )
    for s in (background or []):
        if s.degenerate:
            continue
        x, y = to_px(*s.polar)
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2" fill="#c8c8c8" '
            f'class="background"><title>{s.field}:{s.label}</title></circle>\n'
        )
    palette = ("#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")
    labels = []
    for s in drawable:
        if s.label not in labels:
            labels.append(s.label)
    for s in drawable:
        x, y = to_px(*s.polar)
        color = palette[labels.index(s.label) % len(palette)]
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" fill="{color}" '
            f'class="stat"><title>{s.field}:{s.label}</title></circle>\n'
        )
    return _svg(size, size, "".join(parts))


def pair_plot_svg(summaries, size_per_cell=130):
    """Matrix of marginal histograms (diagonal) and pair densities (upper)."""
    names = summaries["names"]
    d = len(names)
    margin = 30
    size = d * size_per_cell + 2 * margin
    parts = []

    def cell_origin(i, j):
        return margin + j * size_per_cell, margin + i * size_per_cell

    for i in range(d):
        ox, oy = cell_origin(i, i)
        hist = summaries["marginals"][i]["sampled_range"]
        counts = hist["counts"]
        peak = counts.max() if counts.max() > 0 else 1
        bw = size_per_cell / len(counts)
        for b, count in enumerate(counts):
            h = (size_per_cell - 10) * count / peak
            parts.append(
                f'<rect x="{_fmt(ox + b * bw)}" y="{_fmt(oy + size_per_cell - h)}" '
                f'width="{_fmt(bw)}" height="{_fmt(h)}" fill="#5588bb"/>\n'
            )
        parts.append(
            f'<text x="{_fmt(ox + 4)}" y="{_fmt(oy + 12)}" font-size="10" '
            f'font-family="monospace">{names[i]}</text>\n'
        )
    for (i, j), pair in summaries["pairs"].items():
        ox, oy = cell_origin(i, j)
        counts = pair["counts"]
        peak = counts.max() if counts.max() > 0 else 1
        nb = counts.shape[0]
        bw = size_per_cell / nb
        for a in range(nb):
            for b in range(nb):
                c = counts[a, b]
                if c == 0:
                    continue
                parts.append(
                    f'<rect x="{_fmt(ox + a * bw)}" '
                    f'y="{_fmt(oy + size_per_cell - (b + 1) * bw)}" '
                    f'width="{_fmt(bw)}" height="{_fmt(bw)}" '
                    f'fill="{_sequential_color(c / peak)}"/>\n'
                )
    return _svg(size, size, "".join(parts))
