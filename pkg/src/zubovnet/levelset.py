"""Level curves {V = r} of a two-dimensional value function sampled on a grid."""

import csv
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .dynsys import Region
from .mlp import predict
from .parallel import pmap
from .zubov import compute_I, eval_V


@dataclass
class GridField:
    """``values[i, j]`` is V at (x1[i], x2[j])."""

    region: Region
    nx: int
    ny: int
    values: np.ndarray
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.region.dim != 2:
            raise ValueError("grid fields are two-dimensional")
        if self.values.shape != (self.nx, self.ny):
            raise ValueError(f"values must have shape {(self.nx, self.ny)}")

    @property
    def x1(self):
        return np.linspace(self.region.lower[0], self.region.upper[0], self.nx)

    @property
    def x2(self):
        return np.linspace(self.region.lower[1], self.region.upper[1], self.ny)

    def report(self):
        if not self.failures:
            return f"{self.nx}x{self.ny} grid, all nodes evaluated"
        lines = [f"{self.nx}x{self.ny} grid, {len(self.failures)} node(s) set to 1 after "
                 f"evaluator failure"]
        lines += [f"  ({x1:.6g}, {x2:.6g}): {msg}" for x1, x2, msg in self.failures[:20]]
        if len(self.failures) > 20:
            lines.append(f"  ... {len(self.failures) - 20} more")
        return "\n".join(lines)


class ZubovEvaluator:
    """x -> V(x) by trajectory integration; picklable for worker processes."""

    def __init__(self, sys, w, cfg):
        self.sys, self.w, self.cfg = sys, w, cfg

    def __call__(self, x):
        return eval_V(compute_I(self.sys, self.w, x, self.cfg), self.cfg.alpha)


class ModelEvaluator:
    """x -> V_NN(x) for a trained network, with a vectorized ``many``."""

    def __init__(self, params):
        self.params = params

    def __call__(self, x):
        return float(predict(self.params, np.asarray(x, float)[None, :])[0])

    def many(self, X):
        return predict(self.params, X)


def _eval_row(i, evaluator, x1, x2):
    row = np.empty(len(x2))
    failed = []
    for j, b in enumerate(x2):
        try:
            v = float(evaluator(np.array([x1[i], b])))
            if not math.isfinite(v):
                raise ValueError(f"non-finite value {v}")
            row[j] = v
        except Exception as exc:  # noqa: BLE001 -- any evaluator failure marks the node
            row[j] = 1.0
            failed.append((float(x1[i]), float(b), f"{type(exc).__name__}: {exc}"))
    return row, failed


def evaluate_grid(evaluator, region, nx=201, ny=201, workers=1):
    if nx < 2 or ny < 2:
        raise ValueError("need nx, ny >= 2")
    if region.dim != 2:
        raise ValueError("grid evaluation needs a two-dimensional region")
    x1 = np.linspace(region.lower[0], region.upper[0], nx)
    x2 = np.linspace(region.lower[1], region.upper[1], ny)
    if hasattr(evaluator, "many"):
        G1, G2 = np.meshgrid(x1, x2, indexing="ij")
        values = np.asarray(evaluator.many(np.column_stack([G1.ravel(), G2.ravel()])), float)
        return GridField(region, nx, ny, values.reshape(nx, ny))
    rows = pmap(partial(_eval_row, evaluator=evaluator, x1=x1, x2=x2), range(nx), workers)
    failures = [f for _, fs in rows for f in fs]
    return GridField(region, nx, ny, np.array([r for r, _ in rows]), failures)


@dataclass
class LevelCurve:
    level: float
    polylines: list
    closed: list

    def vertices(self):
        if not self.polylines:
            return np.zeros((0, 2))
        return np.concatenate(self.polylines)


# corner order: (i,j), (i+1,j), (i+1,j+1), (i,j+1); edges 0..3 = bottom, right, top, left
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))


def _edge_key(i, j, e):
    return (("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j))[e]


def _cell_segments(flags, center_above):
    """Pairs of crossed edges for one cell; ``flags`` marks corners with V >= r."""
    crossed = [e for e, (a, b) in enumerate(_EDGE_CORNERS) if flags[a] != flags[b]]
    if len(crossed) == 2:
        return [tuple(crossed)]
    if len(crossed) == 4:
        if center_above == flags[0]:
            # corners 0 and 2 are joined through the center; isolate 1 and 3
            return [(0, 1), (2, 3)]
        return [(3, 0), (1, 2)]
    return []


def extract_level(g, r):
    """Marching squares with saddles resolved by the mean of the four corners."""
    if not 0 < r < 1:
        raise ValueError("level must lie in (0, 1)")
    V = g.values
    x1, x2 = g.x1, g.x2
    above = V >= r
    points = {}

    def point(key):
        if key not in points:
            kind, i, j = key
            if kind == "h":
                va, vb = V[i, j], V[i + 1, j]
                t = (r - va) / (vb - va)
                points[key] = (x1[i] + t * (x1[i + 1] - x1[i]), x2[j])
            else:
                va, vb = V[i, j], V[i, j + 1]
                t = (r - va) / (vb - va)
                points[key] = (x1[i], x2[j] + t * (x2[j + 1] - x2[j]))
        return points[key]

    links = {}
    for i in range(g.nx - 1):
        for j in range(g.ny - 1):
            flags = (above[i, j], above[i + 1, j], above[i + 1, j + 1], above[i, j + 1])
            if all(flags) or not any(flags):
                continue
            center = 0.25 * (V[i, j] + V[i + 1, j] + V[i + 1, j + 1] + V[i, j + 1]) >= r
            for ea, eb in _cell_segments(flags, center):
                ka, kb = _edge_key(i, j, ea), _edge_key(i, j, eb)
                links.setdefault(ka, []).append(kb)
                links.setdefault(kb, []).append(ka)

    # every crossed edge touches at most two segments, so chains are simple walks;
    # open chains start at edges with a single neighbour (on the grid border)
    polylines, closed = [], []
    unvisited = set(links)
    for start in sorted(k for k, v in links.items() if len(v) == 1) + sorted(links):
        if start not in unvisited:
            continue
        chain = [start]
        unvisited.discard(start)
        prev, cur = None, start
        is_closed = False
        while True:
            nxt = [k for k in links[cur] if k != prev]
            if not nxt:
                break
            cur, prev = nxt[0], cur
            if cur == start:
                is_closed = True
                chain.append(start)
                break
            if cur not in unvisited:
                break
            chain.append(cur)
            unvisited.discard(cur)
        polylines.append(np.array([point(k) for k in chain]))
        closed.append(is_closed)
    return LevelCurve(float(r), polylines, closed)


def write_curves_csv(curves, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["level", "polyline_id", "x1", "x2"])
        for c in curves:
            for pid, poly in enumerate(c.polylines):
                for a, b in poly:
                    wr.writerow([repr(c.level), pid, repr(float(a)), repr(float(b))])


def read_curves_csv(path):
    """Inverse of ``write_curves_csv``; closedness is inferred from repeated endpoints."""
    groups = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            groups.setdefault(float(row[0]), {}).setdefault(int(row[1]), []).append(
                (float(row[2]), float(row[3])))
    out = []
    for level, polys in groups.items():
        lines = [np.array(polys[k]) for k in sorted(polys)]
        out.append(LevelCurve(level, lines,
                              [len(p) > 2 and np.array_equal(p[0], p[-1]) for p in lines]))
    return out


def point_in_polygon(pt, poly):
    """Even-odd rule; ``poly`` may repeat its first vertex at the end."""
    x, y = pt
    inside = False
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xc > x:
                inside = not inside
    return inside


def outer_polyline(curve):
    """The closed polyline enclosing the largest area, or None."""
    best, best_area = None, -1.0
    for poly, is_closed in zip(curve.polylines, curve.closed):
        if not is_closed:
            continue
        a = 0.5 * abs(np.dot(poly[:-1, 0], poly[1:, 1]) - np.dot(poly[1:, 0], poly[:-1, 1]))
        if a > best_area:
            best, best_area = poly, a
    return best


def axis_crossing(curve, positive=True):
    """Largest (or smallest) x1 where a segment of the curve crosses x2 = 0."""
    hits = []
    for poly in curve.polylines:
        a, b = poly[:-1], poly[1:]
        for (p1, q1), (p2, q2) in zip(a, b):
            if (q1 <= 0 < q2) or (q2 <= 0 < q1):
                hits.append(p1 + (0 - q1) * (p2 - p1) / (q2 - q1))
    if not hits:
        return math.nan
    return max(hits) if positive else min(hits)
