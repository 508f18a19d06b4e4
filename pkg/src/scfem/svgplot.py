"""Hand-rolled SVG convergence plots (no plotting dependency, byte-stable
output for fixed input)."""

import math

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 20, 40

# curve name -> (colour, marker radius)
_SERIES = [
    ("bar_mu", "#1f77b4", 0),
    ("bar_tau", "#d62728", 0),
    ("bar_eta", "#2ca02c", 0),
    ("mu", "#1f77b4", 4),
    ("tau", "#d62728", 4),
    ("eta", "#2ca02c", 4),
]


def _fmt(x):
    return f"{x:.3f}"


def render_convergence(rows):
    """SVG text for convergence history rows (dicts with iteration and the
    indicator/estimate columns; estimate columns may be None off-checkpoint)."""
    if not rows:
        raise ValueError("empty history: nothing to plot")
    pts = {name: [] for name, _, _ in _SERIES}
    for r in rows:
        for name, _, _ in _SERIES:
            v = r.get(name)
            if v is not None and v > 0.0:
                pts[name].append((r["iteration"], v))
    values = [v for ps in pts.values() for _, v in ps]
    iters = [i for ps in pts.values() for i, _ in ps]
    if not values:
        raise ValueError("history contains no positive indicator values")
    lo = math.floor(math.log10(min(values)))
    hi = math.ceil(math.log10(max(values)))
    if hi == lo:
        hi += 1
    imax = max(max(iters), 1)

    def to_x(i):
        return MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * i / imax

    def to_y(v):
        t = (math.log10(v) - lo) / (hi - lo)
        return HEIGHT - MARGIN_B - (HEIGHT - MARGIN_T - MARGIN_B) * t

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    # axes and decade gridlines
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for d in range(lo, hi + 1):
        y = to_y(10.0 ** d)
        out.append(f'<line x1="{x0}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-size="11">1e{d}</text>')
    step = max(1, imax // 10)
    for i in range(0, imax + 1, step):
        x = to_x(i)
        out.append(f'<text x="{_fmt(x)}" y="{y0 + 16}" text-anchor="middle" '
                   f'font-size="11">{i}</text>')
    out.append(f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 6}" text-anchor="middle" '
               f'font-size="12">iteration</text>')

    for name, colour, radius in _SERIES:
        ps = pts[name]
        if not ps:
            continue
        coords = [(to_x(i), to_y(v)) for i, v in ps]
        if radius == 0 and len(coords) > 1:
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords)
            out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" '
                       f'stroke-width="1.5"/>')
        for x, y in coords:
            r = radius if radius else 2
            fill = colour if radius else "white"
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{fill}" '
                       f'stroke="{colour}"/>')
    # legend
    ly = MARGIN_T + 8
    for name, colour, radius in _SERIES:
        if not pts[name]:
            continue
        out.append(f'<circle cx="{x1 - 110}" cy="{ly - 4}" r="4" fill="{colour}" '
                   f'stroke="{colour}"/>')
        out.append(f'<text x="{x1 - 100}" y="{ly}" font-size="11">{name}</text>')
        ly += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"
