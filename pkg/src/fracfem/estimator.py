"""Scikit-learn style front end for the fractional diffusion solver."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import femcore, march
from ._validation import DomainError, check_alpha, check_count, check_points, check_positive
from .meshkit import Mesh


class FractionalDiffusionFEM(RegressorMixin, BaseEstimator):
    """P1 Galerkin / L1 solver for Caputo time-fractional diffusion.

    ``fit(mesh, u0)`` marches the problem to ``T``; ``predict(points, t)``
    evaluates the discrete solution at the grid time nearest ``t``.

    Parameters
    ----------
    alpha : float
        Caputo order in (0, 1).
    n_steps : int
        Number of time steps.
    grading : float or None
        Time-grid grading exponent; None uses ``(2 - alpha) / alpha``.
    T : float
        Final time.
    kappa : Coefficient or None
        Diffusivity; None means the constant 1.
    source : callable or None
        ``f(x, t)``.
    initializer : {"P_h", "R_h"}
    tol : float
        Relative residual tolerance of every linear solve.
    """

    def __init__(self, alpha=0.5, n_steps=256, grading=None, T=1.0, kappa=None,
                 source=None, initializer="P_h", tol=femcore.DEFAULT_TOL):
        self.alpha = alpha
        self.n_steps = n_steps
        self.grading = grading
        self.T = T
        self.kappa = kappa
        self.source = source
        self.initializer = initializer
        self.tol = tol

    def _validate_params(self):
        alpha = check_alpha(self.alpha)
        check_count(self.n_steps, "n_steps")
        check_positive(self.T, "T")
        gamma = march.default_grading(alpha) if self.grading is None else float(self.grading)
        if gamma < 1:
            raise DomainError("grading must be >= 1")
        if self.initializer not in ("P_h", "R_h"):
            raise DomainError("initializer must be 'P_h' or 'R_h'")
        return alpha, gamma

    def fit(self, X, y):
        """Solve on mesh ``X`` from initial data ``y`` (a callable of points)."""
        if not isinstance(X, Mesh):
            raise DomainError("X must be a Mesh")
        if not callable(y):
            raise DomainError("y must be callable initial data")
        alpha, gamma = self._validate_params()
        kappa = self.kappa if self.kappa is not None else femcore.Coefficient.constant(1.0)
        self.space_ = femcore.FeSpace(X)
        self.grid_ = march.TimeGrid(float(self.T), int(self.n_steps), gamma)
        problem = march.ProblemSpec(alpha, kappa, y, float(self.T), source=self.source)
        self.trajectory_ = march.solve(problem, self.space_, self.grid_,
                                       initializer=self.initializer, tol=self.tol)
        self.times_ = self.grid_.points
        return self

    def solution_at(self, t=None):
        check_is_fitted(self, "trajectory_")
        return self.trajectory_.at(self.T if t is None else t)

    def predict(self, X, t=None):
        """Discrete solution at points ``X`` (shape ``(n, dim)``) and time ``t``."""
        check_is_fitted(self, "trajectory_")
        pts = check_points(X, self.space_.dim)
        return self.solution_at(t)(pts)

    def score(self, X, y, sample_weight=None, t=None):
        """Coefficient of determination of ``predict(X, t)`` against ``y``."""
        from sklearn.metrics import r2_score

        return r2_score(np.asarray(y), self.predict(X, t), sample_weight=sample_weight)
