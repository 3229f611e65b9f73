"""Convergence studies: refinement sequences, EOC tables, error splitting and output."""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import femcore, march, meshkit, oracle
from ._validation import DomainError, check_alpha

__all__ = [
    "CASES",
    "StudyConfig",
    "ErrorRecord",
    "CSV_HEADER",
    "build_case",
    "run_study",
    "eoc",
    "time_singularity_scan",
    "emit",
    "parse_csv",
    "load_config",
    "theorem_coverage",
]

CASES = ("spectral-smooth", "spectral-nonsmooth", "manufactured-kappa(t)", "graded-spatial", "zero")
CSV_HEADER = "case,alpha,delta_nominal,h,N,t,l2,eoc_l2,h1,eoc_h1,rho_l2,theta_l2"
THREADS_ENV = "FRACFEM_NUM_THREADS"


@dataclass
class StudyConfig:
    """One convergence study.

    ``h_levels`` are refinement depths: level ``k`` uses ``base_n * 2**k``
    cells per side. ``gamma=None`` selects the default grading
    ``(2 - alpha) / alpha``.
    """

    alpha: float
    case: str = "spectral-smooth"
    h_levels: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    base_n: int = 8
    N: int = 2048
    gamma: Optional[float] = None
    times: list = field(default_factory=lambda: [1.0])
    norms: list = field(default_factory=lambda: ["L2", "H1"])
    initializer: str = "P_h"
    dim: int = 1
    spatial_grading: float = 2.0
    guard: bool = True
    eoc_l2_min: float = 1.9
    eoc_h1_min: float = 0.95
    csv_path: Optional[str] = None
    svg_path: Optional[str] = None

    def __post_init__(self):
        self.alpha = check_alpha(self.alpha)
        if self.case not in CASES:
            raise DomainError(f"unknown case {self.case!r}; choose from {CASES}")
        if any(t <= 0 for t in self.times):
            raise DomainError("evaluation times must be strictly positive")
        if self.initializer not in ("P_h", "R_h"):
            raise DomainError("initializer must be 'P_h' or 'R_h'")
        self.h_levels = sorted(int(k) for k in self.h_levels)

    @property
    def grading(self):
        return march.default_grading(self.alpha) if self.gamma is None else float(self.gamma)

    @property
    def T(self):
        return max(self.times)


@dataclass
class ErrorRecord:
    case: str
    alpha: float
    delta_nominal: float
    h: float
    N: int
    t: float
    l2: float
    eoc_l2: Optional[float]
    h1: float
    eoc_h1: Optional[float]
    rho_l2: float
    theta_l2: float


def _manufactured(alpha, T):
    def kfun(x, t):
        return 1.0 + 0.5 * np.sin(2 * math.pi * x[:, 0]) * math.exp(-t)

    def kgrad(x, t):
        return (math.pi * np.cos(2 * math.pi * x[:, 0]) * math.exp(-t))[:, None]

    kappa = femcore.Coefficient(kfun, 0.5, 1.5, smoothness="C2", grad=kgrad)
    space = oracle.SpaceFactor(
        value=lambda x: x[:, 0] * (1.0 - x[:, 0]),
        grad=lambda x: 1.0 - 2.0 * x[:, :1],
        laplacian=lambda x: np.full(x.shape[0], -2.0),
    )
    return oracle.manufactured_problem(space, [(1.0, 0.0), (1.0, 2.0)], kappa, alpha, T=T,
                                       name="manufactured-kappa(t)")


def build_case(config):
    """``(problem, mesh_for_level, delta_nominal)`` for a study configuration."""
    alpha, T = config.alpha, config.T
    if config.case == "spectral-smooth":
        data = oracle.sine_data(config.dim)
        problem = oracle.spectral_problem(data, alpha, T)
        delta = 2.0
    elif config.case == "spectral-nonsmooth":
        if config.dim != 1:
            raise DomainError("the nonsmooth case is one-dimensional")
        data = oracle.indicator_data(0.0, 0.5)
        problem = oracle.spectral_problem(data, alpha, T)
        delta = data.delta_nominal
    elif config.case == "graded-spatial":
        problem = oracle.spectral_problem(oracle.sine_data(1), alpha, T)
        delta = 2.0
    elif config.case == "zero":
        zero = oracle.closure_data(lambda x: np.zeros(x.shape[0]),
                                   lambda x: np.zeros_like(x), name="zero")
        problem = march.ProblemSpec(
            alpha, femcore.Coefficient.constant(1.0), zero, T,
            exact=lambda t: (lambda x: np.zeros(len(x)), lambda x: np.zeros((len(x), config.dim))),
            name="zero",
        )
        delta = 2.0
    else:
        problem = _manufactured(alpha, T)
        delta = 2.0

    def mesh_for(level):
        n = config.base_n * 2**level
        if config.case == "graded-spatial":
            return meshkit.interval_mesh(0.0, 1.0, n, config.spatial_grading)
        if config.dim == 2:
            return meshkit.unit_square_tri_mesh(n)
        return meshkit.interval_mesh(0.0, 1.0, n)

    return problem, mesh_for, delta


def _thread_count():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_level(config, problem, mesh, delta):
    space = femcore.FeSpace(mesh)
    grid = march.TimeGrid(config.T, config.N, config.grading)
    traj = march.solve(problem, space, grid, config.times, initializer=config.initializer)
    mass = femcore.assemble_mass(space)
    records = []
    for t, uh in traj.snapshots:
        u, grad = problem.exact(t)
        l2, h1 = femcore.error_norms(space, uh, u, grad)
        ritz = femcore.ritz_project(space, problem.kappa, t, u, grad)
        rho_l2, _ = femcore.error_norms(space, ritz, u, grad)
        theta_l2, _ = femcore.fe_norms(space, uh.coeffs - ritz.coeffs, mass=mass)
        records.append(ErrorRecord(config.case, config.alpha, delta, mesh.h, config.N, t,
                                   l2, None, h1, None, rho_l2, theta_l2))
    return records, traj.inexact_times


def run_study(config, check_guard=None):
    """Solve on every level, compare with the reference and fill EOCs.

    The temporal refinement guard runs first on the coarsest level; a failure
    raises :class:`~fracfem.march.GuardError` and no records are produced.
    """
    if len(config.h_levels) < 1:
        raise DomainError("need at least one h level")
    problem, mesh_for, delta = build_case(config)
    check_guard = config.guard if check_guard is None else check_guard
    if check_guard:
        coarse = femcore.FeSpace(mesh_for(config.h_levels[0]))
        grid = march.TimeGrid(config.T, config.N, config.grading)
        report = march.temporal_refinement_guard(problem, coarse, grid,
                                                 initializer=config.initializer)
        if not report["passed"]:
            raise march.GuardError(
                f"temporal error not subdominant: doubling N changed the error by "
                f"{100 * report['relative_change']:.1f}%"
            )
    jobs = [mesh_for(k) for k in config.h_levels]
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        results = list(pool.map(lambda m: _run_level(config, problem, m, delta), jobs))
    records = [r for recs, _ in results for r in recs]
    return eoc(records)


def _rate(coarse, fine, h_coarse, h_fine):
    if coarse <= 0 or fine <= 0:
        return math.nan
    return math.log(coarse / fine) / math.log(h_coarse / h_fine)


def eoc(records):
    """Fill ``eoc_l2``/``eoc_h1`` within each ``(case, alpha, t)`` group ordered by h.

    Undefined rates (a zero error) are NaN; the coarsest level has None.
    """
    out = sorted(records, key=lambda r: (r.case, r.alpha, r.t, -r.h))
    prev = None
    for r in out:
        if prev is not None and (prev.case, prev.alpha, prev.t) == (r.case, r.alpha, r.t):
            r.eoc_l2 = _rate(prev.l2, r.l2, prev.h, r.h)
            r.eoc_h1 = _rate(prev.h1, r.h1, prev.h, r.h)
        else:
            r.eoc_l2 = r.eoc_h1 = None
        prev = r
    return out


def finest_pair(records, t=None):
    """Record of the finest level at time ``t`` (default: latest) for each case."""
    out = {}
    for r in records:
        if r.eoc_l2 is None:
            continue
        if t is not None and r.t != t:
            continue
        best = out.get(r.case)
        if best is None or (r.t, -r.h) > (best.t, -best.h):
            out[r.case] = r
    return out


def check_thresholds(records, l2_min=1.9, h1_min=0.95, norms=("L2", "H1")):
    """``(passed, messages)`` for the finest-pair EOCs of every case."""
    msgs = []
    ok = True
    finest = finest_pair(records)
    if not finest:
        return False, ["no EOC available (need at least two h levels)"]
    levels = {}
    for r in records:
        levels.setdefault((r.case, r.t), set()).add(r.h)
    if min(len(v) for v in levels.values()) < 3:
        return False, ["an EOC claim needs at least three h levels"]
    for case, r in sorted(finest.items()):
        for norm, value, bound in (("L2", r.eoc_l2, l2_min), ("H1", r.eoc_h1, h1_min)):
            if norm not in norms:
                continue
            good = value is not None and value >= bound
            ok &= good
            msgs.append(f"[{'PASS' if good else 'FAIL'}] {case} alpha={r.alpha:g} t={r.t:g} "
                        f"EOC_{norm}={value:.4f} (>= {bound})")
    return ok, msgs


def theorem_coverage(alpha, delta):
    """Which L2 result covers ``(alpha, delta)``: both, or only the sharper one."""
    lower = 3.0 - 2.0 / alpha
    if delta > lower:
        return "both"
    return f"improved-only (delta <= 3 - 2/alpha = {lower:.3f})"


def time_singularity_scan(config, h_level=None, times=None):
    """Least-squares slope of ``log(L2 error)`` against ``log(t)`` at fixed h.

    Each time is reached by its own march ending exactly at that time.
    """
    times = list(config.times if times is None else times)
    if len(times) < 4:
        raise DomainError("need at least 4 evaluation times")
    level = config.h_levels[-1] if h_level is None else h_level
    errors = []
    for t in times:
        cfg = StudyConfig(**{**asdict(config), "times": [t], "h_levels": [level]})
        problem, mesh_for, delta = build_case(cfg)
        recs, _ = _run_level(cfg, problem, mesh_for(level), delta)
        errors.append(recs[0].l2)
    slope = float(np.polyfit(np.log(times), np.log(errors), 1)[0])
    _, _, delta = build_case(config)
    expected = -config.alpha * (2.0 - delta) / 2.0
    return {
        "times": times,
        "errors": errors,
        "slope": slope,
        "expected": expected,
        "deviation": slope - expected,
    }


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return f"{value:.17g}"


def emit(records, fmt, path):
    """Write records as CSV or as an SVG log-log plot of error against h."""
    if not records:
        raise DomainError("nothing to emit")
    path = Path(path)
    if fmt == "csv":
        names = CSV_HEADER.split(",")
        with path.open("w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in records:
                fh.write(",".join(_fmt(getattr(r, n)) for n in names) + "\n")
    elif fmt == "svg":
        path.write_text(_svg(records))
    else:
        raise DomainError(f"unknown format {fmt!r}")
    return path


def parse_csv(path):
    types = {f.name: f.type for f in fields(ErrorRecord)}
    out = []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                if k == "case":
                    kw[k] = v
                elif k == "N":
                    kw[k] = int(v)
                elif v == "":
                    kw[k] = None
                else:
                    kw[k] = float(v)
            out.append(ErrorRecord(**kw))
    return out


def _svg(records, width=480, height=360, pad=50):
    last_t = {}
    for r in records:
        last_t[r.case] = max(last_t.get(r.case, r.t), r.t)
    series = {}
    for r in records:
        if r.t != last_t[r.case]:
            continue
        for norm, val in (("L2", r.l2), ("H1", r.h1)):
            if val > 0:
                series.setdefault((r.case, norm), []).append((r.h, val))
    if not series:
        series[("empty", "L2")] = [(1.0, 1.0)]
    hs = [h for pts in series.values() for h, _ in pts]
    es = [e for pts in series.values() for _, e in pts]
    lx0, lx1 = math.log10(min(hs)), math.log10(max(hs))
    ly0, ly1 = math.log10(min(es)), math.log10(max(es))
    lx1 = lx1 if lx1 > lx0 else lx0 + 1
    ly1 = ly1 if ly1 > ly0 else ly0 + 1

    def xy(h, e):
        x = pad + (math.log10(h) - lx0) / (lx1 - lx0) * (width - 2 * pad)
        y = height - pad - (math.log10(e) - ly0) / (ly1 - ly0) * (height - 2 * pad)
        return x, y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    for i, ((case, norm), pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        coords = " ".join("%.2f,%.2f" % xy(h, e) for h, e in pts)
        parts.append(
            f'<polyline fill="none" stroke="{colours[i % len(colours)]}" '
            f'points="{coords}"><title>{case} {norm} t={last_t[case]:g}</title></polyline>'
        )
    # reference slopes anchored at the largest h
    h_max = max(hs)
    e_anchor = max(es)
    for slope in (1, 2):
        h_min = min(hs)
        x0, y0 = xy(h_max, e_anchor)
        x1, y1 = xy(h_min, e_anchor * (h_min / h_max) ** slope)
        parts.append(
            f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
            f'stroke="gray" stroke-dasharray="4 3"><title>slope {slope}</title></line>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def load_config(path):
    """Read a JSON study configuration whose keys mirror :class:`StudyConfig`."""
    raw = json.loads(Path(path).read_text())
    known = {f.name for f in fields(StudyConfig)}
    unknown = set(raw) - known
    if unknown:
        raise DomainError(f"unknown config keys: {sorted(unknown)}")
    return StudyConfig(**raw)
