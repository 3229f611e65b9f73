"""Graded-in-time L1 stepping of the P1 Galerkin system with full memory."""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import femcore
from ._validation import DomainError, check_alpha, check_count, check_positive
from .fracops import _omega_diff
from .meshkit import write_mesh

__all__ = [
    "TimeGrid",
    "ProblemSpec",
    "Trajectory",
    "StepFailure",
    "GuardError",
    "graded_time_grid",
    "default_grading",
    "solve",
    "temporal_refinement_guard",
    "export_trajectory",
]


class StepFailure(RuntimeError):
    """A linear solve failed inside the march."""

    def __init__(self, step, cause):
        super().__init__(f"time step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class GuardError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Points ``t_n = T (n / N)**gamma``, ``n = 0..N``."""

    T: float
    N: int
    gamma: float = 1.0

    def __post_init__(self):
        check_positive(self.T, "T")
        check_count(self.N, "N", minimum=1)
        if not self.gamma >= 1.0:
            raise DomainError(f"gamma must be >= 1, got {self.gamma!r}")

    @property
    def points(self):
        t = self.T * (np.arange(self.N + 1) / self.N) ** self.gamma
        t[-1] = self.T
        return t

    def index_of(self, time):
        """Index of the grid point nearest ``time`` and whether it matches exactly."""
        pts = self.points
        i = int(np.argmin(np.abs(pts - time)))
        return i, bool(np.isclose(pts[i], time, rtol=1e-14, atol=0.0))


def graded_time_grid(T, N, gamma):
    return TimeGrid(float(T), N, float(gamma))


def default_grading(alpha):
    """Grading exponent ``(2 - alpha) / alpha``."""
    alpha = check_alpha(alpha)
    return (2.0 - alpha) / alpha


@dataclass(frozen=True)
class ProblemSpec:
    """Homogeneous Dirichlet time-fractional diffusion problem.

    ``u0`` is any callable of space points; if it exposes ``grad`` the Ritz
    initialiser becomes available. ``source`` is ``f(x, t)`` (zero when None).
    ``exact``, when known, maps a time to ``(u, grad_u)`` closures.
    """

    alpha: float
    kappa: femcore.Coefficient
    u0: Callable
    T: float = 1.0
    source: Optional[Callable] = None
    domain: str = "interval"
    exact: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha))
        check_positive(self.T, "T")


@dataclass
class Trajectory:
    """Snapshots ``(t_n, FeFunction)`` plus the full nodal history of the march."""

    space: femcore.FeSpace
    grid: TimeGrid
    snapshots: list
    history: np.ndarray = field(repr=False)
    inexact_times: list = field(default_factory=list)

    @property
    def steps_done(self):
        return self.history.shape[0] - 1

    def at(self, time):
        for t, u in self.snapshots:
            if t == time:
                return u
        i, _ = self.grid.index_of(time)
        if i > self.steps_done:
            raise KeyError(f"time {time} was not reached")
        return femcore.FeFunction(self.space, self.history[i])

    def final(self):
        return femcore.FeFunction(self.space, self.history[-1])


def _initial_state(problem, space, initializer, tol, mass):
    if initializer in ("P_h", "l2"):
        return femcore.l2_project(space, problem.u0, tol=tol, mass=mass).coeffs
    if initializer in ("R_h", "ritz"):
        grad = getattr(problem.u0, "grad", None)
        if grad is None:
            raise DomainError("Ritz initialisation needs initial data with a gradient")
        return femcore.ritz_project(space, problem.kappa, 0.0, problem.u0, grad, tol=tol).coeffs
    raise DomainError(f"unknown initializer {initializer!r}")


def solve(
    problem,
    space,
    grid,
    output_times=(),
    initializer="P_h",
    tol=femcore.DEFAULT_TOL,
    restart=None,
    stop_at=None,
):
    """March the L1-discretised Galerkin system over ``grid``.

    At each ``t_n`` solves ``(b_nn M + A(t_n)) U^n = M (b_nn U^{n-1} -
    sum_{j<n} b_nj (U^j - U^{j-1})) + F(t_n)``.

    Parameters
    ----------
    output_times : iterable of float
        Times to snapshot; the nearest grid point is used when a time is not
        on the grid, and such times are listed in ``Trajectory.inexact_times``.
    restart : Trajectory, optional
        Continue a march from its stored history (same space and grid).
    stop_at : int, optional
        Last step index to compute (defaults to ``grid.N``).
    """
    t = grid.points
    n_end = grid.N if stop_at is None else check_count(stop_at, "stop_at", minimum=0)
    if n_end > grid.N:
        raise DomainError("stop_at beyond the end of the grid")
    mass = femcore.assemble_mass(space)
    n_free = space.n_free

    history = np.zeros((n_end + 1, n_free))
    if restart is not None:
        if restart.grid != grid or restart.space is not space:
            raise DomainError("restart trajectory uses a different grid or space")
        start = restart.steps_done
        if start > n_end:
            raise DomainError("restart history already extends past stop_at")
        history[: start + 1] = restart.history
    else:
        start = 0
        history[0] = _initial_state(problem, space, initializer, tol, mass)

    increments = np.diff(history, axis=0)
    stiffness = None
    if not problem.kappa.time_dependent:
        stiffness = femcore.assemble_stiffness(space, problem.kappa, 0.0)
    alpha = problem.alpha
    dt = np.diff(t)
    for n in range(start + 1, n_end + 1):
        b = _omega_diff(2.0 - alpha, t[n] - t[1 : n + 1], dt[:n]) / dt[:n]
        b_nn = b[-1]
        memory = b[:-1] @ increments[: n - 1] if n > 1 else 0.0
        rhs = mass @ (b_nn * history[n - 1] - memory)
        if problem.source is not None:
            rhs = rhs + femcore.assemble_load(space, problem.source, t[n])
        A = stiffness if stiffness is not None else femcore.assemble_stiffness(
            space, problem.kappa, t[n]
        )
        system = (b_nn * mass + A).tocsr()
        try:
            history[n] = femcore.cg_solve(system, rhs, tol=tol, x0=history[n - 1])
        except femcore.ConvergenceError as exc:
            raise StepFailure(n, exc) from exc
        increments[n - 1] = history[n] - history[n - 1]

    snapshots = []
    inexact = []
    for time in output_times:
        i, exact = grid.index_of(time)
        if i > n_end:
            continue
        if not exact:
            inexact.append(float(time))
        snapshots.append((float(t[i]), femcore.FeFunction(space, history[i].copy())))
    return Trajectory(space, grid, snapshots, history, inexact)


def temporal_refinement_guard(
    problem, space, grid, threshold=0.1, initializer="P_h", tol=femcore.DEFAULT_TOL
):
    """Check that doubling N changes the L2 error at ``T`` by <= ``threshold`` of it.

    Returns a dict with both errors, the relative change and ``passed``.
    Requires ``problem.exact``.
    """
    if problem.exact is None:
        raise DomainError("temporal_refinement_guard needs the exact solution")
    u, grad = problem.exact(grid.T)
    errors = []
    for N in (grid.N, 2 * grid.N):
        g = TimeGrid(grid.T, N, grid.gamma)
        traj = solve(problem, space, g, initializer=initializer, tol=tol)
        errors.append(femcore.error_norms(space, traj.final(), u, grad)[0])
    change = abs(errors[1] - errors[0])
    scale = max(errors)
    rel = change / scale if scale > 0 else 0.0
    return {
        "N": grid.N,
        "error_N": errors[0],
        "error_2N": errors[1],
        "relative_change": rel,
        "passed": bool(scale <= tol or rel <= threshold),
    }


def export_trajectory(trajectory, directory, stem="trajectory"):
    """Write ``<stem>.csv`` (t, dof_index, value) and ``<stem>.mesh``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "dof_index", "value"])
        for time, u in trajectory.snapshots:
            for i, v in enumerate(u.coeffs):
                writer.writerow([f"{time:.17g}", i, f"{v:.17g}"])
    write_mesh(trajectory.space.mesh, directory / f"{stem}.mesh")
    return csv_path
