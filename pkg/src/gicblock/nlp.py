"""Small dense NLP layer over SciPy's SLSQP.

Variables live in named blocks with bounds and a scale; constraints are
registered as (value, jacobian) callables in physical units and row-scaled
at the start point. ``polish`` runs minimum-norm Newton steps on the
equality system with variables at their bounds held fixed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass
class NlpResult:
    x: np.ndarray
    fun: float
    success: bool
    status: int
    message: str
    eq_violation: float
    ineq_violation: float
    nit: int

    def feasible(self, tol):
        return self.eq_violation <= tol and self.ineq_violation <= tol


class Nlp:
    def __init__(self):
        self.n = 0
        self._lb, self._ub, self._x0, self._scale = [], [], [], []
        self.blocks = {}
        self._eqs, self._ineqs = [], []
        self._obj = None

    # -- model building -------------------------------------------------------

    def var(self, name, size, lb=-np.inf, ub=np.inf, x0=0.0, scale=1.0):
        idx = np.arange(self.n, self.n + size)
        self.n += size
        for arr, val in ((self._lb, lb), (self._ub, ub), (self._x0, x0), (self._scale, scale)):
            arr.extend(np.broadcast_to(np.asarray(val, dtype=float), (size,)).tolist())
        self.blocks[name] = idx
        return idx

    def eq(self, fun, jac):
        self._eqs.append((fun, jac))

    def ineq(self, fun, jac):
        """Register g(x) >= 0."""
        self._ineqs.append((fun, jac))

    def linear_eq(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        if A.shape[0]:
            self.eq(lambda x: A @ x - b, lambda x: A)

    def linear_ineq(self, A, b):
        """Register A x <= b."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        if A.shape[0]:
            self.ineq(lambda x: b - A @ x, lambda x: -A)

    def objective(self, fun, grad, scale=None):
        """``scale`` is a typical objective magnitude; defaults to the gradient norm at the start."""
        self._obj = (fun, grad)
        self._obj_scale = scale

    @property
    def lb(self):
        return np.array(self._lb)

    @property
    def ub(self):
        return np.array(self._ub)

    @property
    def x0(self):
        return np.clip(np.array(self._x0), self.lb, self.ub)

    # -- evaluation -------------------------------------------------------------

    def _values(self, items, x):
        if not items:
            return np.zeros(0)
        return np.concatenate([np.atleast_1d(f(x)) for f, _ in items])

    def _jacobian(self, items, x):
        if not items:
            return np.zeros((0, self.n))
        return np.vstack([np.atleast_2d(j(x)) for _, j in items])

    def eq_values(self, x):
        return self._values(self._eqs, x)

    def ineq_values(self, x):
        return self._values(self._ineqs, x)

    def violations(self, x):
        ce = self.eq_values(x)
        ci = self.ineq_values(x)
        bound = max(
            float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0))
        )
        eqv = float(np.max(np.abs(ce), initial=0.0))
        inv = max(float(np.max(-ci, initial=0.0)), bound)
        return eqv, inv

    # -- solve ---------------------------------------------------------------------

    def solve(self, x0=None, maxiter=400, ftol=1e-12):
        s = np.array(self._scale)
        xs = self.x0 if x0 is None else np.clip(np.asarray(x0, dtype=float), self.lb, self.ub)
        y0 = xs / s

        Je = self._jacobian(self._eqs, xs)
        Ji = self._jacobian(self._ineqs, xs)
        re = 1.0 / np.maximum(np.linalg.norm(Je * s, axis=1), 1e-8) if len(Je) else np.zeros(0)
        ri = 1.0 / np.maximum(np.linalg.norm(Ji * s, axis=1), 1e-8) if len(Ji) else np.zeros(0)
        fobj, gobj = self._obj or (lambda x: 0.0, lambda x: np.zeros(self.n))
        g0 = np.linalg.norm(gobj(xs) * s)
        ro = 1.0 / max(getattr(self, "_obj_scale", None) or g0, 1.0)

        cons = []
        if self._eqs:
            cons.append({
                "type": "eq",
                "fun": lambda y: self._values(self._eqs, y * s) * re,
                "jac": lambda y: self._jacobian(self._eqs, y * s) * s * re[:, None],
            })
        if self._ineqs:
            cons.append({
                "type": "ineq",
                "fun": lambda y: self._values(self._ineqs, y * s) * ri,
                "jac": lambda y: self._jacobian(self._ineqs, y * s) * s * ri[:, None],
            })
        lb, ub = self.lb / s, self.ub / s
        bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
        with warnings.catch_warnings():
            # SLSQP clips line-search steps to the bounds; harmless
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                lambda y: fobj(y * s) * ro,
                y0,
                jac=lambda y: gobj(y * s) * s * ro,
                method="SLSQP",
                bounds=bounds,
                constraints=cons,
                options={"maxiter": maxiter, "ftol": ftol},
            )
        x = np.clip(res.x * s, self.lb, self.ub)
        eqv, inv = self.violations(x)
        return NlpResult(x, float(fobj(x)), bool(res.success), int(res.status), str(res.message),
                         eqv, inv, int(res.nit))

    def polish(self, x, tol=1e-12, maxiter=20, bound_tol=1e-9):
        """Newton-project ``x`` onto the equality manifold, freezing variables at bounds."""
        x = np.array(x, dtype=float)
        free = (x - self.lb > bound_tol) & (self.ub - x > bound_tol)
        for _ in range(maxiter):
            ce = self._values(self._eqs, x)
            if not len(ce) or np.max(np.abs(ce)) <= tol:
                break
            Je = self._jacobian(self._eqs, x)
            dx, *_ = np.linalg.lstsq(Je[:, free], -ce, rcond=None)
            x[free] += dx
        return x
