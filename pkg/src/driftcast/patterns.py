"""Shape similarity features: DTW distance of sub-windows to 13 pattern templates.

Each input window is cut into contiguous, non-overlapping sub-windows for
every size in the plan. A sub-window is min-max normalised, compared to every
template (sampled at the sub-window's length) by absolute-difference DTW, and
the closest template becomes a one-hot vector broadcast over the time steps
the sub-window covers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numba
import numpy as np

from .errors import EmptySequence, IndivisibleWindowSize, InvalidTemplate, LengthTooSmall, WindowTooShort

N_TEMPLATES = 13
DEFAULT_WINDOW_SIZES = (672, 336, 96, 48, 24, 12)


@dataclass(frozen=True)
class PatternTemplate:
    id: int
    name: str
    control_points: tuple

    def __post_init__(self):
        pts = self.control_points
        if len(pts) < 2:
            raise InvalidTemplate(f"template {self.id}: need at least two control points")
        pos = [p for p, _ in pts]
        if pos[0] != 0 or pos[-1] != 1 or any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidTemplate(f"template {self.id}: positions must increase strictly from 0 to 1")
        if any(not 0 <= v <= 1 for _, v in pts):
            raise InvalidTemplate(f"template {self.id}: values must lie in [0, 1]")


def load_templates(path=None) -> list:
    """Read the 13 templates from a JSON file (the bundled defaults when ``path`` is None)."""
    if path is None:
        raw = json.loads(resources.files("driftcast").joinpath("resources/templates.json").read_text())
    else:
        raw = json.loads(Path(path).read_text())
    templates = [
        PatternTemplate(int(o["id"]), str(o["name"]), tuple((float(p), float(v)) for p, v in o["points"]))
        for o in raw
    ]
    templates.sort(key=lambda t: t.id)
    if [t.id for t in templates] != list(range(1, N_TEMPLATES + 1)):
        raise InvalidTemplate(f"expected template ids 1..{N_TEMPLATES}, got {[t.id for t in templates]}")
    return templates


def sample_template(template: PatternTemplate, length: int) -> np.ndarray:
    """Piecewise-linear template evaluated at positions k / (length - 1)."""
    if length < 2:
        raise LengthTooSmall(f"template length must be >= 2, got {length}")
    pos = np.array([p for p, _ in template.control_points])
    val = np.array([v for _, v in template.control_points])
    return np.interp(np.linspace(0.0, 1.0, length), pos, val)


@lru_cache(maxsize=64)
def _template_bank(templates: tuple, length: int) -> np.ndarray:
    # normalised like the windows, so a template sampled off its extremes still matches itself
    return np.stack([normalize_window(sample_template(t, length)) for t in templates])


@numba.njit(cache=True, nogil=True)
def _dtw(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    prev[0] = abs(a[0] - b[0])
    for j in range(1, m):
        prev[j] = prev[j - 1] + abs(a[0] - b[j])
    for i in range(1, n):
        ai = a[i]
        cur[0] = prev[0] + abs(ai - b[0])
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = best + abs(ai - b[j])
        prev, cur = cur, prev
    return prev[m - 1]


@numba.njit(cache=True, nogil=True)
def _dtw_bank(window, bank):
    out = np.empty(bank.shape[0])
    for k in range(bank.shape[0]):
        out[k] = _dtw(window, bank[k])
    return out


def dtw_distance(a, b) -> float:
    """Minimum total |a_i - b_j| over monotone, continuous alignments covering both ends."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySequence("dtw_distance needs non-empty sequences")
    return float(_dtw(a, b))


def normalize_window(window) -> np.ndarray:
    w = np.asarray(window, dtype=np.float64)
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.full(w.shape, 0.5)
    return (w - lo) / (hi - lo)


def match_subwindow(window, templates):
    """Distances to each template and the one-hot of the closest (lowest id on ties).

    Both the window and the sampled templates are min-max normalised first, so
    only shape is compared; a constant window becomes all 0.5.
    """
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 1 or w.size < 2:
        raise WindowTooShort(f"sub-window needs at least 2 values, got shape {w.shape}")
    if len(templates) != N_TEMPLATES:
        raise InvalidTemplate(f"expected {N_TEMPLATES} templates, got {len(templates)}")
    bank = _template_bank(tuple(templates), w.size)
    distances = _dtw_bank(normalize_window(w), bank)
    onehot = np.zeros(N_TEMPLATES)
    onehot[int(np.argmin(distances))] = 1.0
    return distances, onehot


def build_similarity_features(values, window_sizes=DEFAULT_WINDOW_SIZES, templates=None) -> np.ndarray:
    """Stacked one-hot similarity channels, shape (13 * len(window_sizes), L).

    Blocks are ordered by ascending window size, then template id.
    """
    x = np.asarray(values, dtype=np.float64)
    templates = templates if templates is not None else default_templates()
    sizes = sorted(window_sizes)
    for s in sizes:
        if s < 2 or x.size % s:
            raise IndivisibleWindowSize(f"window size {s} does not divide input length {x.size}")
    out = np.zeros((N_TEMPLATES * len(sizes), x.size))
    for g, s in enumerate(sizes):
        for start in range(0, x.size, s):
            _, onehot = match_subwindow(x[start:start + s], templates)
            out[g * N_TEMPLATES:(g + 1) * N_TEMPLATES, start:start + s] = onehot[:, None]
    return out


@lru_cache(maxsize=1)
def _default_templates():
    return tuple(load_templates())


def default_templates() -> list:
    return list(_default_templates())
