"""Polar AC power flow and optimal power flow with GIC q_loss pseudo-loads.

Branch flows follow the standard pi-model: ``p_fr, q_fr`` leave the from
bus into the branch and ``p_to, q_to`` leave the to bus into the branch.
Bus balance: sum of flows leaving bus i equals generation minus served load,
minus shunt consumption ``g_s v^2`` plus shunt injection ``b_s v^2``, minus
the q_loss pseudo-loads. Load ``z_d = 1`` means served.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DivergenceError, InfeasibleError
from .nlp import Nlp

FEAS_TOL = 1e-6
CERT_TOL = 1e-8


def branch_flow(v_j, v_k, theta_j, theta_k, g, b, b_sh):
    """Return (p_fr, q_fr, p_to, q_to) for a pi-model branch."""
    d = np.subtract(theta_j, theta_k)
    c, s = np.cos(d), np.sin(d)
    vv = np.multiply(v_j, v_k)
    bb = np.add(b, 0.5 * np.asarray(b_sh))
    p_fr = g * v_j**2 - g * vv * c - b * vv * s
    q_fr = -bb * v_j**2 + b * vv * c - g * vv * s
    p_to = g * v_k**2 - g * vv * c + b * vv * s
    q_to = -bb * v_k**2 + b * vv * c + g * vv * s
    return p_fr, q_fr, p_to, q_to


@dataclass
class OpfOptions:
    mode: str = "opf"  # opf | pf
    objective: str = "gen-cost"  # gen-cost | shed-cost
    shed: str = "none"  # none | binary | continuous
    tol: float = 1e-10
    max_iter: int = 400
    pf_max_iter: int = 30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.mode not in ("opf", "pf"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.objective not in ("gen-cost", "shed-cost"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.shed not in ("none", "binary", "continuous"):
            raise ValueError(f"unknown shed mode {self.shed!r}")


@dataclass
class AcSolution:
    v: dict
    theta: dict
    p_g: dict
    q_g: dict
    p_fr: dict
    q_fr: dict
    p_to: dict
    q_to: dict
    z_d: dict
    qloss: dict  # bus -> realized pseudo-load (pu)
    objective: float
    max_residual: float
    status: str  # converged | limits-violated
    stats: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == "converged"

    def to_dict(self):
        return {
            "status": self.status,
            "objective": self.objective,
            "max_residual": self.max_residual,
            "busses": {b: {"v": self.v[b], "theta": self.theta[b], "qloss": self.qloss.get(b, 0.0)}
                       for b in self.v},
            "generators": {g: {"p": self.p_g[g], "q": self.q_g[g]} for g in self.p_g},
            "branches": {k: {"p_fr": self.p_fr[k], "q_fr": self.q_fr[k],
                             "p_to": self.p_to[k], "q_to": self.q_to[k]} for k in self.p_fr},
            "loads": {d: {"z": z} for d, z in self.z_d.items()},
            "stats": {k: v for k, v in self.stats.items() if isinstance(v, (int, float, str))},
        }

    def load_met(self, case):
        tot = sum(abs(d.p_d) for d in case.loads)
        if tot == 0:
            return 1.0
        return sum(abs(d.p_d) * self.z_d[d.id] for d in case.loads) / tot


class AcModel:
    """Index structures for one case; immutable after construction."""

    def __init__(self, case):
        self.case = case
        self.bus_ids = [b.id for b in case.busses]
        bi = {b: i for i, b in enumerate(self.bus_ids)}
        self.bus_index = bi
        self.n = len(self.bus_ids)
        self.slack = np.array([bi[b.id] for b in case.busses if b.is_slack], dtype=int)
        self.vmin = np.array([b.v_min for b in case.busses])
        self.vmax = np.array([b.v_max for b in case.busses])
        brs = [b for b in case.branches if b.status]
        self.branches = brs
        self.f = np.array([bi[b.from_bus] for b in brs], dtype=int)
        self.t = np.array([bi[b.to_bus] for b in brs], dtype=int)
        self.g = np.array([b.g for b in brs], dtype=float)
        self.b = np.array([b.b for b in brs], dtype=float)
        self.bsh = np.array([b.b_sh for b in brs], dtype=float)
        self.smax = np.array([b.s_max for b in brs], dtype=float)
        self.angmin = np.array([b.theta_min for b in brs], dtype=float)
        self.angmax = np.array([b.theta_max for b in brs], dtype=float)
        gens = [g for g in case.generators if g.status]
        self.gens = gens
        self.gbus = np.array([bi[g.bus] for g in gens], dtype=int)
        self.loads = list(case.loads)
        self.dbus = np.array([bi[d.bus] for d in self.loads], dtype=int)
        self.pd = np.array([d.p_d for d in self.loads], dtype=float)
        self.qd = np.array([d.q_d for d in self.loads], dtype=float)
        self.gs = np.zeros(self.n)
        self.bs = np.zeros(self.n)
        for s in case.shunts:
            if s.status:
                self.gs[bi[s.bus]] += s.g_s
                self.bs[bi[s.bus]] += s.b_s

    @property
    def ng(self):
        return len(self.gens)

    @property
    def nd(self):
        return len(self.loads)

    @cached_property
    def gen_matrix(self):
        m = np.zeros((self.n, self.ng))
        m[self.gbus, np.arange(self.ng)] = 1.0
        return m

    @cached_property
    def load_matrix(self):
        m = np.zeros((self.n, self.nd))
        m[self.dbus, np.arange(self.nd)] = 1.0
        return m

    def bus_vector(self, mapping):
        out = np.zeros(self.n)
        for k, val in (mapping or {}).items():
            out[self.bus_index[k]] += val
        return out

    def flows(self, v, th):
        return branch_flow(v[self.f], v[self.t], th[self.f], th[self.t], self.g, self.b, self.bsh)

    def flow_partials(self, v, th):
        """Per-branch partials of (p_fr, q_fr, p_to, q_to) w.r.t. (vf, vt, thf)."""
        vf, vt = v[self.f], v[self.t]
        d = th[self.f] - th[self.t]
        c, s = np.cos(d), np.sin(d)
        g, b = self.g, self.b
        bb = b + 0.5 * self.bsh
        vv = vf * vt
        return {
            "p_fr": (2 * g * vf - g * vt * c - b * vt * s, -g * vf * c - b * vf * s, g * vv * s - b * vv * c),
            "q_fr": (-2 * bb * vf + b * vt * c - g * vt * s, b * vf * c - g * vf * s, -b * vv * s - g * vv * c),
            "p_to": (-g * vt * c + b * vt * s, 2 * g * vt - g * vf * c + b * vf * s, g * vv * s + b * vv * c),
            "q_to": (b * vt * c + g * vt * s, -2 * bb * vt + b * vf * c + g * vf * s, -b * vv * s + g * vv * c),
        }

    def mismatch(self, v, th, pg, qg, z, qfix, qcoef):
        """(P, Q) residuals per bus: flows out - injections."""
        pf, qf, pt, qt = self.flows(v, th)
        P = np.zeros(self.n)
        Q = np.zeros(self.n)
        np.add.at(P, self.f, pf)
        np.add.at(P, self.t, pt)
        np.add.at(Q, self.f, qf)
        np.add.at(Q, self.t, qt)
        P += self.gs * v**2 + self.load_matrix @ (self.pd * z) - self.gen_matrix @ pg
        Q += -self.bs * v**2 + self.load_matrix @ (self.qd * z) - self.gen_matrix @ qg
        Q += qfix + qcoef * v
        return P, Q

    def mismatch_jac(self, v, th, z, qcoef):
        """Dense partials: dict of blocks d{P,Q}/d{th,v,pg,qg,z}."""
        n = self.n
        parts = self.flow_partials(v, th)
        out = {}
        for key, rows_from, rows_to in (("P", "p_fr", "p_to"), ("Q", "q_fr", "q_to")):
            Jth = np.zeros((n, n))
            Jv = np.zeros((n, n))
            for name, at in ((rows_from, self.f), (rows_to, self.t)):
                dvf, dvt, dthf = parts[name]
                np.add.at(Jv, (at, self.f), dvf)
                np.add.at(Jv, (at, self.t), dvt)
                np.add.at(Jth, (at, self.f), dthf)
                np.add.at(Jth, (at, self.t), -dthf)
            if key == "P":
                Jv[np.arange(n), np.arange(n)] += 2 * self.gs * v
                Jz = self.load_matrix * self.pd
            else:
                Jv[np.arange(n), np.arange(n)] += -2 * self.bs * v + qcoef
                Jz = self.load_matrix * self.qd
            out[key] = (Jth, Jv, Jz)
        return out


# ------------------------------------------------------------------ OPF (NLP)


def add_ac_block(nlp, model, qfix, qcoef, z_lb, z_ub, z0=None, q_extra=None, warm=None):
    """Register AC variables and constraints in ``nlp``.

    ``q_extra`` is an optional (var_idx, bus_idx) pair adding x[var_idx] to
    the reactive balance of bus_idx.
    """
    n, ng, nd = model.n, model.ng, model.nd
    thlb = np.full(n, -math.pi)
    thub = np.full(n, math.pi)
    thlb[model.slack] = 0.0
    thub[model.slack] = 0.0
    w = warm or {}
    ith = nlp.var("theta", n, thlb, thub, w.get("theta", 0.0))
    iv = nlp.var("v", n, model.vmin, model.vmax, w.get("v", 1.0))
    gens = model.gens
    ipg = nlp.var("pg", ng, [g.p_min for g in gens], [g.p_max for g in gens],
                  w.get("pg", [0.5 * (g.p_min + g.p_max) for g in gens]))
    iqg = nlp.var("qg", ng, [g.q_min for g in gens], [g.q_max for g in gens],
                  w.get("qg", [0.5 * (g.q_min + g.q_max) for g in gens]))
    iz = nlp.var("zd", nd, z_lb, z_ub, w.get("zd", z_ub if z0 is None else z0))
    qextra_idx, qextra_bus = q_extra if q_extra is not None else (np.zeros(0, int), np.zeros(0, int))
    cache = {}

    def evaluate(x):
        key = x.tobytes()
        if cache.get("key") != key:
            v, th = x[iv], x[ith]
            z = x[iz]
            P, Q = model.mismatch(v, th, x[ipg], x[iqg], z, qfix, qcoef)
            np.add.at(Q, qextra_bus, x[qextra_idx])
            cache.update(key=key, val=np.concatenate([P, Q]), x=x.copy())
        return cache

    def fun(x):
        return evaluate(x)["val"]

    def jac(x):
        J = np.zeros((2 * n, nlp.n))
        v, th, z = x[iv], x[ith], x[iz]
        blocks = model.mismatch_jac(v, th, z, qcoef)
        for r0, key in ((0, "P"), (n, "Q")):
            Jth, Jv, Jz = blocks[key]
            J[r0:r0 + n, ith] = Jth
            J[r0:r0 + n, iv] = Jv
            J[r0:r0 + n, iz] = Jz
        J[np.ix_(np.arange(n), ipg)] = -model.gen_matrix
        J[np.ix_(np.arange(n, 2 * n), iqg)] = -model.gen_matrix
        np.add.at(J, (n + qextra_bus, qextra_idx), 1.0)
        return J

    nlp.eq(fun, jac)

    nb = len(model.f)
    if nb:
        smax2 = model.smax**2

        def thermal(x):
            pf, qf, pt, qt = model.flows(x[iv], x[ith])
            return np.concatenate([smax2 - pf**2 - qf**2, smax2 - pt**2 - qt**2])

        def thermal_jac(x):
            v, th = x[iv], x[ith]
            pf, qf, pt, qt = model.flows(v, th)
            parts = model.flow_partials(v, th)
            J = np.zeros((2 * nb, nlp.n))
            rows = np.arange(nb)
            for off, (pn, qn, pv, qv) in ((0, ("p_fr", "q_fr", pf, qf)), (nb, ("p_to", "q_to", pt, qt))):
                dp, dq = parts[pn], parts[qn]
                dvf = -2 * (pv * dp[0] + qv * dq[0])
                dvt = -2 * (pv * dp[1] + qv * dq[1])
                dthf = -2 * (pv * dp[2] + qv * dq[2])
                np.add.at(J, (off + rows, iv[model.f]), dvf)
                np.add.at(J, (off + rows, iv[model.t]), dvt)
                np.add.at(J, (off + rows, ith[model.f]), dthf)
                np.add.at(J, (off + rows, ith[model.t]), -dthf)
            return J

        nlp.ineq(thermal, thermal_jac)
        A = np.zeros((nb, nlp.n))
        A[np.arange(nb), ith[model.f]] = 1.0
        A[np.arange(nb), ith[model.t]] -= 1.0
        nlp.linear_ineq(np.vstack([A, -A]), np.concatenate([model.angmax, -model.angmin]))
    return {"theta": ith, "v": iv, "pg": ipg, "qg": iqg, "zd": iz}


def _objective(nlp, model, idx, objective):
    gens = model.gens
    ipg, iz = idx["pg"], idx["zd"]
    if objective == "gen-cost":
        c1 = np.array([g.cost_c1 for g in gens])
        c2 = np.array([g.cost_c2 for g in gens])
        c0 = sum(g.cost_c0 for g in gens)

        def fun(x):
            p = x[ipg]
            return c0 + float(c1 @ p + c2 @ p**2)

        def grad(x):
            gr = np.zeros(nlp.n)
            gr[ipg] = c1 + 2 * c2 * x[ipg]
            return gr
    else:
        w = np.array([abs(d.p_d) * d.shed_cost for d in model.loads])

        def fun(x):
            return float(w @ (1.0 - x[iz]))

        def grad(x):
            gr = np.zeros(nlp.n)
            gr[iz] = -w
            return gr
    nlp.objective(fun, grad)


def add_load_constraints(nlp, idx, load_constraints):
    """Each (a, rhs) adds a @ z_d <= rhs."""
    for a, rhs in load_constraints or ():
        A = np.zeros((1, nlp.n))
        A[0, idx["zd"]] = a
        nlp.linear_ineq(A, [rhs])


def _solve_nlp_once(model, qfix, qcoef, z_lb, z_ub, objective, opts, warm, load_constraints=None):
    nlp = Nlp()
    idx = add_ac_block(nlp, model, qfix, qcoef, z_lb, z_ub, warm=warm)
    add_load_constraints(nlp, idx, load_constraints)
    _objective(nlp, model, idx, objective)
    res = nlp.solve(maxiter=opts.max_iter)
    return nlp, idx, res


def _opf_continuous(model, qfix, qcoef, z_lb, z_ub, objective, opts, warm=None, load_constraints=None):
    """Solve with z in [z_lb, z_ub]; returns (nlp, idx, x) or None when no start converges."""
    best = None
    starts = [warm, None] if warm is not None else [None]
    for w in starts:
        nlp, idx, res = _solve_nlp_once(model, qfix, qcoef, z_lb, z_ub, objective, opts, w,
                                        load_constraints)
        if res.feasible(FEAS_TOL):
            x = nlp.polish(res.x)
            if best is None or nlp._obj[0](x) < best[3] - 1e-9:
                best = (nlp, idx, x, nlp._obj[0](x))
            if res.success:
                break
    return None if best is None else best[:3]


def _unpack(model, idx, x):
    return {k: x[v].copy() for k, v in idx.items()}


def _solution_from(model, parts, qfix, qcoef, objective_value, stats):
    case = model.case
    v, th = parts["v"], parts["theta"]
    pf, qf, pt, qt = model.flows(v, th)
    brs = model.branches
    z = parts["zd"]
    qloss = {b: float(qfix[i] + qcoef[i] * v[i]) for i, b in enumerate(model.bus_ids)
             if qfix[i] or qcoef[i]}
    sol = AcSolution(
        v={b: float(v[i]) for i, b in enumerate(model.bus_ids)},
        theta={b: float(th[i]) for i, b in enumerate(model.bus_ids)},
        p_g={g.id: float(parts["pg"][k]) for k, g in enumerate(model.gens)},
        q_g={g.id: float(parts["qg"][k]) for k, g in enumerate(model.gens)},
        p_fr={b.id: float(pf[k]) for k, b in enumerate(brs)},
        q_fr={b.id: float(qf[k]) for k, b in enumerate(brs)},
        p_to={b.id: float(pt[k]) for k, b in enumerate(brs)},
        q_to={b.id: float(qt[k]) for k, b in enumerate(brs)},
        z_d={d.id: float(z[k]) for k, d in enumerate(model.loads)},
        qloss=qloss,
        objective=float(objective_value),
        max_residual=float("nan"),
        status="converged",
        stats=stats,
    )
    for gen in case.generators:
        if not gen.status:
            sol.p_g[gen.id] = 0.0
            sol.q_g[gen.id] = 0.0
    cert = certificate(case, sol)
    sol.max_residual = cert["max_residual"]
    if cert["max_residual"] > CERT_TOL or cert["bound_violation"] > CERT_TOL:
        sol.status = "limits-violated" if cert["max_residual"] <= CERT_TOL else "residual"
    return sol


def _z_bounds(model, opts, fixed=None):
    lb = np.ones(model.nd)
    ub = np.ones(model.nd)
    if opts.shed != "none":
        for k, d in enumerate(model.loads):
            if d.sheddable:
                lb[k] = 0.0
    for k, val in (fixed or {}).items():
        lb[k] = ub[k] = val
    return lb, ub


def solve_opf(case, qloss_pseudo_loads=None, opts=None, *, qloss_coeff=None, model=None,
              fixed_loads=None, warm=None, load_constraints=None):
    """Optimal power flow.

    ``qloss_coeff`` adds voltage-proportional pseudo-loads c * v.
    ``load_constraints`` is a list of (a, rhs) meaning a @ z_d <= rhs over
    the case's load order.
    """
    opts = opts or OpfOptions()
    model = model or AcModel(case)
    qfix = model.bus_vector(qloss_pseudo_loads)
    qcoef = model.bus_vector(qloss_coeff)
    objective = opts.objective
    fixed = {model.loads.index(next(d for d in model.loads if d.id == k)): float(v)
             for k, v in (fixed_loads or {}).items()}
    stats = {"nlp_solves": 0}

    def run(fx, w=None):
        lb, ub = _z_bounds(model, opts, fx)
        stats["nlp_solves"] += 1
        return _opf_continuous(model, qfix, qcoef, lb, ub, objective, opts, w, load_constraints)

    if opts.shed != "binary":
        out = run(fixed, warm)
        if out is None:
            raise InfeasibleError("AC OPF infeasible: no start reached a feasible point",
                                  _infeasibility_report(model, qfix, qcoef))
        nlp, idx, x = out
        return _solution_from(model, _unpack(model, idx, x), qfix, qcoef, nlp._obj[0](x), stats)

    # binary shedding: depth-first branch-and-bound over load decisions
    lb0, ub0 = _z_bounds(model, opts, fixed)
    best = None
    stack = [dict(fixed)]
    while stack:
        fx = stack.pop()
        pats = _integral_patterns(lb0, ub0, fx, load_constraints)
        if pats is not None:
            if not pats:
                continue
            if len(pats) == 1:
                fx = dict(enumerate(pats[0]))
        out = run(fx, warm)
        if out is None:
            continue
        nlp, idx, x = out
        val = nlp._obj[0](x)
        if best is not None and val >= best[0] - 1e-9:
            continue
        z = x[idx["zd"]]
        frac = np.abs(z - np.round(z))
        if np.all(frac <= 1e-6):
            fx_int = {k: float(round(z[k])) for k in range(model.nd)}
            if np.any(frac > 0):
                out = run(fx_int, _unpack(model, idx, x))
                if out is None:
                    continue
                nlp, idx, x = out
                val = nlp._obj[0](x)
            if best is None or val < best[0] - 1e-9:
                best = (val, idx, x)
            continue
        k = int(np.argmax(frac))
        warm = _unpack(model, idx, x)
        stack.append({**fx, k: 0.0})
        stack.append({**fx, k: 1.0})
    if best is None:
        raise InfeasibleError("AC OPF infeasible for every load-shedding pattern",
                              _infeasibility_report(model, qfix, qcoef))
    val, idx, x = best
    return _solution_from(model, _unpack(model, idx, x), qfix, qcoef, val, stats)


PATTERN_CAP = 12


def _integral_patterns(lb, ub, fixed, load_constraints):
    """0/1 load patterns meeting the fixings and linear load constraints.

    None when too many loads are free to enumerate.
    """
    lo, hi = lb.copy(), ub.copy()
    for k, val in fixed.items():
        lo[k] = hi[k] = val
    free = np.flatnonzero(lo < hi)
    if len(free) > PATTERN_CAP:
        return None
    out = []
    for bits in itertools.product((1.0, 0.0), repeat=len(free)):
        z = lo.copy()
        z[free] = bits
        if all(float(np.dot(a, z)) <= rhs for a, rhs in load_constraints or ()):
            out.append(tuple(z.tolist()))
    return out


def _infeasibility_report(model, qfix, qcoef):
    qneed = float(np.sum(qfix + qcoef * model.vmax))
    qcap = float(sum(g.q_max for g in model.gens))
    return {
        "total_qloss_pu_at_vmax": qneed,
        "total_gen_qmax_pu": qcap,
        "total_p_demand_pu": float(model.pd.sum()),
        "total_gen_pmax_pu": float(sum(g.p_max for g in model.gens)),
    }


# ---------------------------------------------------------- power flow (Newton)


def solve_pf(case, qloss_pseudo_loads=None, opts=None, *, qloss_coeff=None, z=None, model=None):
    """Newton-Raphson power flow with PV->PQ switching on generator Q limits."""
    opts = opts or OpfOptions(mode="pf")
    model = model or AcModel(case)
    n = model.n
    qfix = model.bus_vector(qloss_pseudo_loads)
    qcoef = model.bus_vector(qloss_coeff)
    zz = np.array([1.0 if z is None else float(z.get(d.id, 1.0)) for d in model.loads])
    gens = model.gens
    slack = set(model.slack.tolist())
    pv = set(model.gbus.tolist()) - slack
    v = np.ones(n)
    for k, g in enumerate(gens):
        v[model.gbus[k]] = g.vg
    th = np.zeros(n)
    pg = np.array([g.pg for g in gens], dtype=float)
    qg = np.zeros(model.ng)
    qfixed = {}  # bus -> total Q pinned at a limit
    gmat = model.gen_matrix
    qmin_bus = gmat @ np.array([g.q_min for g in gens]) if gens else np.zeros(n)
    qmax_bus = gmat @ np.array([g.q_max for g in gens]) if gens else np.zeros(n)
    iters = 0
    for _switch in range(n + 1):
        pq = [i for i in range(n) if i not in slack and i not in pv]
        ang = [i for i in range(n) if i not in slack]
        qbus = np.zeros(n)
        for i, qv in qfixed.items():
            qbus[i] = qv
        for it in range(opts.pf_max_iter):
            P, Q = model.mismatch(v, th, pg, np.zeros(model.ng), zz, qfix, qcoef)
            # generator Q at pinned busses enters as fixed injection
            Q = Q - qbus
            # slack P and PV/slack Q are free: drop those rows
            F = np.concatenate([P[ang], Q[pq]])
            err = float(np.max(np.abs(F), initial=0.0))
            if err <= opts.tol:
                break
            blocks = model.mismatch_jac(v, th, zz, qcoef)
            JPth, JPv, _ = blocks["P"]
            JQth, JQv, _ = blocks["Q"]
            J = np.block([[JPth[np.ix_(ang, ang)], JPv[np.ix_(ang, pq)]],
                          [JQth[np.ix_(pq, ang)], JQv[np.ix_(pq, pq)]]])
            dx = np.linalg.solve(J, -F)
            th[ang] += dx[:len(ang)]
            v[pq] += dx[len(ang):]
            iters += 1
        else:
            raise DivergenceError(f"power flow did not converge in {opts.pf_max_iter} iterations; "
                                  f"final residual {err:.3e}", err)
        # net generator Q needed at each bus
        P, Q = model.mismatch(v, th, pg, np.zeros(model.ng), zz, qfix, qcoef)
        need = Q
        switched = False
        for i in sorted(pv):
            if need[i] > qmax_bus[i] + 1e-12:
                qfixed[i] = qmax_bus[i]
                pv.discard(i)
                switched = True
            elif need[i] < qmin_bus[i] - 1e-12:
                qfixed[i] = qmin_bus[i]
                pv.discard(i)
                switched = True
        if not switched:
            break
    # distribute bus-level P (slack) and Q over generators
    P, Q = model.mismatch(v, th, np.zeros(model.ng), np.zeros(model.ng), zz, qfix, qcoef)
    for i in range(n):
        at = [k for k in range(model.ng) if model.gbus[k] == i]
        if not at:
            continue
        if i in slack:
            for k in at:
                pg[k] = P[i] / len(at)
        span = np.array([gens[k].q_max - gens[k].q_min for k in at], dtype=float)
        qtot = Q[i]
        if span.sum() > 0:
            lo = np.array([gens[k].q_min for k in at])
            frac = (qtot - lo.sum()) / span.sum()
            for j, k in enumerate(at):
                qg[k] = lo[j] + frac * span[j]
        else:
            for k in at:
                qg[k] = qtot / len(at)
    parts = {"v": v, "theta": th, "pg": pg, "qg": qg, "zd": zz}
    obj = sum(g.cost_c0 + g.cost_c1 * p + g.cost_c2 * p * p for g, p in zip(gens, pg))
    return _solution_from(model, parts, qfix, qcoef, obj, {"newton_iterations": iters})


def solve_acpf(case, qloss_pseudo_loads=None, opts=None, **kw):
    """Dispatch on ``opts.mode``: Newton power flow or NLP-based OPF."""
    opts = opts or OpfOptions()
    if opts.mode == "pf":
        return solve_pf(case, qloss_pseudo_loads, opts, **kw)
    return solve_opf(case, qloss_pseudo_loads, opts, **kw)


# --------------------------------------------------------------- certificates


def certificate(case, sol):
    """Re-evaluate slack, flow and balance equations and operating limits branch by branch.

    Independent of the vectorized solver path: loops over records and calls
    ``branch_flow`` directly.
    """
    bal_p = {b.id: 0.0 for b in case.busses}
    bal_q = {b.id: 0.0 for b in case.busses}
    flow_err = 0.0
    bound = 0.0
    for br in case.branches:
        if not br.status:
            continue
        vj, vk = sol.v[br.from_bus], sol.v[br.to_bus]
        tj, tk = sol.theta[br.from_bus], sol.theta[br.to_bus]
        pf, qf, pt, qt = branch_flow(vj, vk, tj, tk, br.g, br.b, br.b_sh)
        if br.id in sol.p_fr:
            flow_err = max(flow_err, abs(pf - sol.p_fr[br.id]), abs(qf - sol.q_fr[br.id]),
                           abs(pt - sol.p_to[br.id]), abs(qt - sol.q_to[br.id]))
        bal_p[br.from_bus] += pf
        bal_q[br.from_bus] += qf
        bal_p[br.to_bus] += pt
        bal_q[br.to_bus] += qt
        s2 = br.s_max**2
        bound = max(bound, math.sqrt(max(pf * pf + qf * qf, 0)) - br.s_max if pf * pf + qf * qf > s2 else 0.0,
                    math.sqrt(pt * pt + qt * qt) - br.s_max if pt * pt + qt * qt > s2 else 0.0)
        d = tj - tk
        bound = max(bound, br.theta_min - d, d - br.theta_max)
    for g in case.generators:
        if not g.status:
            continue
        p, q = sol.p_g[g.id], sol.q_g[g.id]
        bal_p[g.bus] -= p
        bal_q[g.bus] -= q
        bound = max(bound, g.p_min - p, p - g.p_max, g.q_min - q, q - g.q_max)
    for d in case.loads:
        bal_p[d.bus] += d.p_d * sol.z_d[d.id]
        bal_q[d.bus] += d.q_d * sol.z_d[d.id]
    for s in case.shunts:
        if s.status:
            v2 = sol.v[s.bus] ** 2
            bal_p[s.bus] += s.g_s * v2
            bal_q[s.bus] -= s.b_s * v2
    for b, q in sol.qloss.items():
        bal_q[b] += q
    slack_err = 0.0
    for b in case.busses:
        bound = max(bound, b.v_min - sol.v[b.id], sol.v[b.id] - b.v_max)
        if b.is_slack:
            slack_err = max(slack_err, abs(sol.theta[b.id]))
    res = max([abs(x) for x in bal_p.values()] + [abs(x) for x in bal_q.values()] + [flow_err, slack_err])
    return {"max_residual": res, "slack_angle": slack_err, "bound_violation": max(bound, 0.0)}


def objective_gen_cost(solution, case):
    return sum(
        g.cost_c0 + g.cost_c1 * solution.p_g[g.id] + g.cost_c2 * solution.p_g[g.id] ** 2
        for g in case.generators if g.status
    )


def objective_shed_cost(solution, loads):
    """Sum of |p_d| * shed_cost over shed loads; shed indicator is 1 - z_d."""
    return sum(abs(d.p_d) * d.shed_cost * (1.0 - solution.z_d[d.id]) for d in loads)


def reactive_margin(solution, case, bus):
    """Voltage headroom above the bus lower limit (pu)."""
    return solution.v[bus] - case.bus[bus].v_min


# ----------------------------------------------------------- staged coupling


def solve_coupled(case, gic, opts=None, *, iterate=False, tol=1e-6, max_rounds=20, exact=False):
    """GIC -> q_loss -> AC. Fixed-point on the high-side voltages when ``iterate``.

    ``exact`` keeps q_loss proportional to the solved voltage inside the AC
    equations, which is the converged fixed point in one solve.
    """
    from .gic import qloss_by_bus, qloss_coeff_by_bus

    opts = opts or OpfOptions()
    if exact:
        sol = solve_acpf(case, None, opts, qloss_coeff=qloss_coeff_by_bus(case, gic))
        sol.stats["coupling_rounds"] = 1
        return sol
    q = qloss_by_bus(case, gic)
    sol = solve_acpf(case, q, opts)
    rounds = 1
    while iterate and rounds < max_rounds:
        q_new = qloss_by_bus(case, gic, sol.v)
        delta = max((abs(q_new[k] - q.get(k, 0.0)) for k in q_new), default=0.0)
        if delta < tol:
            break
        q = q_new
        sol = solve_acpf(case, q, opts)
        rounds += 1
    sol.stats["coupling_rounds"] = rounds
    return sol
