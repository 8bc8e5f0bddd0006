"""Blocker placement: exhaustive oracle and NLP-based branch-and-bound.

Every integral configuration (a "leaf") is scored by the same exact
pipeline: structural GIC solve, effective GIC, q_loss proportional to the
high-side voltage, then AC OPF minimizing weighted load shed with binary
shedding under the served-fraction and shed-cost limits. Branch-and-bound
nodes solve a continuous relaxation in which blocker and shed variables lie
in [0, 1], the grounding current (1 - z) g V uses McCormick envelopes over a
voltage box, |I_eff| is relaxed to two half-planes, and q_loss = c I_eff v
uses McCormick envelopes over [0, I_max] x [v_min, v_max].
"""

from __future__ import annotations

import heapq
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acopf import AcModel, OpfOptions, add_ac_block, add_load_constraints, solve_opf
from .coupling import apply_field
from .dcnet import build_dc_network, candidate_neutrals, nodal_matrix
from .errors import EnumerationCapError, InfeasibleError, PlacementInfeasibleError
from .gic import BlockerConfig, qloss_coeff_by_bus, qloss_coefficient, solve_gic
from .nlp import Nlp

OBJECTIVES = ("blocker-cost", "shed", "gic-sq")
ENUM_CAP = 20
EXACT_BOX_CAP = 12  # enumerate all dc solves for the McCormick box up to 2^12 configurations
BOX_MARGIN = 0.2
FEAS_TOL = 1e-6
BOUND_SLACK = 1e-6  # relative to the objective scale; absorbs local-solver stopping error


@dataclass
class PlacementProblem:
    case: object
    objective: str = "blocker-cost"
    budget: float | None = None
    count: int | None = None
    count_mode: str = "eq"  # eq | le
    shed_cap: float | None = None
    served_frac: float | None = 0.85
    gap: float = 1e-6
    time_limit: float = 3600.0
    gic_sq_edges: str = "transformers"  # transformers | all
    threads: int | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}")
        if self.count_mode not in ("eq", "le"):
            raise ValueError("count_mode must be 'eq' or 'le'")
        if self.served_frac is not None and not 0 <= self.served_frac <= 1:
            raise ValueError("served_frac must lie in [0, 1]")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.gic_sq_edges not in ("transformers", "all"):
            raise ValueError("gic_sq_edges must be 'transformers' or 'all'")


@dataclass
class Leaf:
    placed: tuple
    feasible: bool
    objective: float = float("inf")
    load_met: float = 0.0
    shed_cost: float = float("nan")
    blocker_cost: float = 0.0
    gic: object = None
    ac: object = None
    reason: str = ""


@dataclass
class PlacementSolution:
    placed: tuple
    objective: float
    load_met: float
    blocker_count: int
    blocker_cost: float
    shed_cost: float
    i_eff: dict
    i_eff_before: dict
    status: str  # proved | gap | timeout
    gap: float
    stats: dict = field(default_factory=dict)
    ac: object = None
    gic: object = None

    def to_dict(self):
        return {
            "placed": list(self.placed),
            "objective": self.objective,
            "load_met": self.load_met,
            "blocker_count": self.blocker_count,
            "blocker_cost": self.blocker_cost,
            "shed_cost": self.shed_cost,
            "status": self.status,
            "gap": self.gap,
            "stats": {k: v for k, v in self.stats.items() if k != "node_log"},
        }


def objective_gic_sq(gic, edges="transformers"):
    """Sum of squared effective GIC (A^2); ``edges="all"`` squares every dc edge current."""
    if edges == "all":
        return float(np.sum(np.asarray(gic.edge_i) ** 2))
    return float(sum(v * v for v in gic.i_eff.values()))


class Evaluator:
    """Shared, read-only pipeline state for one placement problem."""

    def __init__(self, problem, ac_cache=None):
        """``ac_cache`` may be shared by evaluators of problems that differ only in
        objective, budget or count: leaf AC results depend on the case and the
        load constraints alone."""
        self.problem = problem
        self._ac = {} if ac_cache is None else ac_cache
        case = problem.case
        self.case = case
        self.net = apply_field(build_dc_network(case), case.gmd)
        self.candidates = [n.id for n in candidate_neutrals(self.net)]
        self.cost = {n.id: n.blocker_cost for n in candidate_neutrals(self.net)}
        self.model = AcModel(case)
        self._cache = {}
        p = np.array([abs(d.p_d) for d in case.loads])
        w = np.array([abs(d.p_d) * d.shed_cost for d in case.loads])
        self.total_load = float(p.sum())
        self.shed_weights = w
        lc = []
        if problem.served_frac is not None and self.total_load > 0:
            lc.append((-p, -problem.served_frac * self.total_load + 1e-9))
        if problem.shed_cap is not None:
            lc.append((-w, problem.shed_cap - w.sum() + 1e-9))
        self.load_constraints = lc

    def key(self, placed):
        order = {c: i for i, c in enumerate(self.candidates)}
        return tuple(sorted(order[c] for c in placed))

    def sorted_placed(self, placed):
        return tuple(self.candidates[i] for i in self.key(placed))

    def combinatorial_ok(self, placed):
        pr = self.problem
        n = len(placed)
        if pr.count is not None:
            if pr.count_mode == "eq" and n != pr.count:
                return False, "count"
            if pr.count_mode == "le" and n > pr.count:
                return False, "count"
        if pr.budget is not None and sum(self.cost[c] for c in placed) > pr.budget + 1e-9:
            return False, "budget"
        return True, ""

    def gic(self, placed):
        return solve_gic(self.net, BlockerConfig(placed), on_floating="reference", case=self.case)

    def evaluate(self, placed):
        placed = self.sorted_placed(placed)
        if placed in self._cache:
            return self._cache[placed]
        leaf = self._evaluate(placed)
        self._cache[placed] = leaf
        return leaf

    def leaves(self):
        """Every leaf scored so far, keyed by its sorted placement."""
        return dict(self._cache)

    def _leaf_ac(self, placed):
        if placed in self._ac:
            return self._ac[placed]
        g = self.gic(placed)
        try:
            ac = solve_opf(
                self.case,
                opts=OpfOptions(objective="shed-cost", shed="binary"),
                qloss_coeff=qloss_coeff_by_bus(self.case, g),
                model=self.model,
                load_constraints=self.load_constraints,
            )
        except InfeasibleError:
            ac = None
        self._ac[placed] = (g, ac)
        return g, ac

    def _evaluate(self, placed):
        ok, why = self.combinatorial_ok(placed)
        bcost = sum(self.cost[c] for c in placed)
        if not ok:
            return Leaf(placed, False, blocker_cost=bcost, reason=why)
        g, ac = self._leaf_ac(placed)
        if ac is None:
            return Leaf(placed, False, blocker_cost=bcost, gic=g, reason="ac")
        met = ac.load_met(self.case)
        shed = float(self.shed_weights @ (1.0 - np.array([ac.z_d[d.id] for d in self.case.loads])))
        pr = self.problem
        if pr.served_frac is not None and met < pr.served_frac - 1e-9:
            return Leaf(placed, False, load_met=met, shed_cost=shed, blocker_cost=bcost, gic=g,
                        ac=ac, reason="served-frac")
        if pr.shed_cap is not None and shed > pr.shed_cap + 1e-9:
            return Leaf(placed, False, load_met=met, shed_cost=shed, blocker_cost=bcost, gic=g,
                        ac=ac, reason="shed-cap")
        if pr.objective == "blocker-cost":
            obj = bcost
        elif pr.objective == "shed":
            obj = shed
        else:
            obj = objective_gic_sq(g, pr.gic_sq_edges)
        return Leaf(placed, True, obj, met, shed, bcost, g, ac)


def _better(leaf, best, tol=1e-9):
    """Lower objective wins; ties go to the lexicographically smaller placement."""
    if not leaf.feasible:
        return False
    if best is None:
        return True
    if leaf.objective < best.objective - tol * max(1.0, abs(best.objective)):
        return True
    if abs(leaf.objective - best.objective) <= tol * max(1.0, abs(best.objective)):
        return leaf.placed_key < best.placed_key
    return False


def _finish(ev, leaf, status, gap, stats):
    before = ev.gic(())
    out = PlacementSolution(
        placed=leaf.placed,
        objective=leaf.objective,
        load_met=leaf.load_met,
        blocker_count=len(leaf.placed),
        blocker_cost=leaf.blocker_cost,
        shed_cost=leaf.shed_cost,
        i_eff=dict(leaf.gic.i_eff),
        i_eff_before=dict(before.i_eff),
        status=status,
        gap=gap,
        stats=stats,
        ac=leaf.ac,
        gic=leaf.gic,
    )
    return out


def _threads(problem):
    if problem.threads:
        return problem.threads
    return int(os.environ.get("GICBLOCK_THREADS", "1") or 1)


def _annotate(ev, leaf):
    leaf.placed_key = ev.key(leaf.placed)
    return leaf


def enumerate_optimal(problem, evaluator=None):
    """Score every blocker subset through the full pipeline; provably optimal."""
    ev = evaluator or Evaluator(problem)
    n = len(ev.candidates)
    if n > ENUM_CAP:
        raise EnumerationCapError(
            f"{n} candidates exceed the enumeration cap of {ENUM_CAP}; use branch_and_bound"
        )
    t0 = time.perf_counter()
    subsets = [c for k in range(n + 1) for c in itertools.combinations(ev.candidates, k)]
    subsets = [s for s in subsets if ev.combinatorial_ok(s)[0]]
    workers = _threads(problem)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            leaves = list(pool.map(ev.evaluate, subsets))
    else:
        leaves = [ev.evaluate(s) for s in subsets]
    best = None
    for leaf in leaves:
        _annotate(ev, leaf)
        if _better(leaf, best):
            best = leaf
    stats = {
        "leaves_evaluated": len(leaves),
        "nodes_explored": len(leaves),
        "wall_time": time.perf_counter() - t0,
        "method": "enumeration",
    }
    if best is None:
        raise PlacementInfeasibleError(
            "no blocker subset satisfies the placement constraints",
            infeasibility_certificate(problem, ev),
        )
    return _finish(ev, best, "proved", 0.0, stats)


# --------------------------------------------------------------- relaxation


class Relaxation:
    """Continuous relaxation of the placement MINLP at a branch-and-bound node."""

    def __init__(self, ev):
        self.ev = ev
        self.net = ev.net
        self._box()
        self._dc_structure()

    def _box(self):
        ev = self.ev
        n = len(ev.candidates)
        if n <= EXACT_BOX_CAP:
            configs = [c for k in range(n + 1) for c in itertools.combinations(ev.candidates, k)]
        else:
            single = [(c,) for c in ev.candidates]
            allbut = [tuple(x for x in ev.candidates if x != c) for c in ev.candidates]
            configs = [(), tuple(ev.candidates)] + single + allbut
        leads = list(self.net.leads)
        idx = self.net.node_index
        ln = np.array([idx[n] for n in leads], dtype=int)
        lg = np.array([idx[self.net.leads[n]] for n in leads], dtype=int)
        Vs, Is, Ls = [], [], []
        self.edge_sq = 0.0
        for cfg in configs:
            g = ev.gic(cfg)
            self.edge_sq = max(self.edge_sq, float(g.edge_i @ g.edge_i))
            Vs.append(g.node_v)
            Is.append([g.i_eff.get(t, 0.0) for t in self.transformer_ids])
            Ls.append([g.lead_i.get(n, 0.0) for n in leads])
        Vs = np.array(Vs)
        Is = np.array(Is)
        lo, hi = Vs.min(axis=0), Vs.max(axis=0)
        pad = BOX_MARGIN * np.maximum(np.maximum(np.abs(lo), np.abs(hi)), 1.0)
        self.vlo, self.vhi = lo - pad, hi + pad
        imax = Is.max(axis=0) if len(Is) else np.zeros(0)
        self.imax = imax * (1 + BOX_MARGIN) + 1.0
        # lead current bound M and open-lead voltage bound D
        self.leads = leads
        self.lead_n, self.lead_g = ln, lg
        if leads:
            self.lead_M = np.abs(np.array(Ls)).max(axis=0) * (1 + BOX_MARGIN) + 1.0
            self.lead_D = np.abs(Vs[:, ln] - Vs[:, lg]).max(axis=0) * (1 + BOX_MARGIN) + 1.0
        else:
            self.lead_M = self.lead_D = np.zeros(0)

    @property
    def transformer_ids(self):
        return [t for t, w in self.net.windings.items() if w]

    def _dc_structure(self):
        net = self.net
        ev = self.ev
        nn = len(net.nodes)
        G, J = nodal_matrix(net, blocked=frozenset(ev.candidates), dense=True)
        # G now carries grounding only for non-candidate grounded neutrals
        self.G_base = G
        self.J = J
        idx = net.node_index
        self.cand_node = np.array([idx[c] for c in ev.candidates], dtype=int)
        self.cand_g = np.array([net.node[c].grounding_g for c in ev.candidates])
        self.cand_lead = {c: self.leads.index(c) for c in ev.candidates if c in net.leads}
        # signed effective current per transformer as a linear map of node voltages
        f, t, a, ev_, on = net.incidence()
        T = np.zeros((len(self.transformer_ids), nn))
        case = ev.case
        for r, tid in enumerate(self.transformer_ids):
            xf = case.transformer[tid]
            coef = _ieff_weights(xf)
            for w, k in net.windings[tid].items():
                if not on[k]:
                    continue
                c = coef.get(w, 0.0) * a[k] / 3.0
                T[r, f[k]] += c
                T[r, t[k]] -= c
        self.T = T
        self.E_edges = (f, t, a, ev_, on)
        self.q_coef = np.array([
            qloss_coefficient(case.transformer[t], case.bus[case.transformer[t].high_bus].base_kv,
                              case.base_mva)
            for t in self.transformer_ids
        ])
        bi = ev.model.bus_index
        self.q_bus = np.array([bi[case.transformer[t].high_bus] for t in self.transformer_ids], dtype=int)

    def solve(self, fixed, warm=None):
        """Return (bound, z_free dict, x) or None if no start reaches a feasible point."""
        ev = self.ev
        pr = ev.problem
        model = ev.model
        nn = len(self.net.nodes)
        nt = len(self.transformer_ids)
        free = [c for c in ev.candidates if c not in fixed]
        nf = len(free)
        nlp = Nlp()
        zlb, zub = np.ones(model.nd), np.ones(model.nd)
        for k, d in enumerate(model.loads):
            if d.sheddable:
                zlb[k] = 0.0
        # dc block
        vscale = np.maximum(np.maximum(np.abs(self.vlo), np.abs(self.vhi)), 1.0)
        vx0 = np.zeros(nn)
        iV = nlp.var("V", nn, self.vlo, self.vhi, vx0, vscale)
        iz = nlp.var("zb", nf, 0.0, 1.0, 0.5)
        pos = {c: i for i, c in enumerate(ev.candidates)}
        fpos = np.array([pos[c] for c in free], dtype=int)
        # direct-grounded free candidates carry p = (1 - z) V; lead candidates a lead current
        direct = [j for j, c in enumerate(free) if c not in self.cand_lead]
        nfd = len(direct)
        cnode = self.cand_node[fpos[direct]] if nfd else np.zeros(0, int)
        cg = self.cand_g[fpos[direct]] if nfd else np.zeros(0)
        L, U = self.vlo[cnode], self.vhi[cnode]
        ip = nlp.var("p", nfd, np.minimum(L, 0.0), np.maximum(U, 0.0), 0.0, vscale[cnode] if nfd else 1.0)
        nl = len(self.leads)
        iL = nlp.var("lead", nl, -self.lead_M, self.lead_M, 0.0, np.maximum(self.lead_M, 1.0))
        iscale = np.maximum(self.imax, 1.0)
        iI = nlp.var("ieff", nt, 0.0, self.imax, 0.0, iscale)
        qmax = self.q_coef * self.imax * model.vmax[self.q_bus] if nt else np.zeros(0)
        iq = nlp.var("q", nt, 0.0, qmax, 0.0, np.maximum(qmax, 1e-3))
        if pr_needs_ac(pr):
            idx = add_ac_block(nlp, model, np.zeros(model.n), np.zeros(model.n), zlb, zub,
                               q_extra=(iq, self.q_bus), warm=warm)
            add_load_constraints(nlp, idx, ev.load_constraints)
        else:
            idx = None
        N = nlp.n

        # KCL: G V + sum over direct candidates of g (1 - z) V + lead currents = J
        A = np.zeros((nn, N))
        A[:, iV] = self.G_base
        for c, val in fixed.items():
            if val == 0 and c not in self.cand_lead:
                k = self.cand_node[pos[c]]
                A[k, iV[k]] += self.cand_g[pos[c]]
        for j in range(nfd):
            A[cnode[j], ip[j]] += cg[j]
        for m in range(nl):
            A[self.lead_n[m], iL[m]] += 1.0
            A[self.lead_g[m], iL[m]] -= 1.0
        eq_rows, eq_rhs = [A], [self.J]
        # closed leads tie V_n = V_g; open leads carry no current
        zpos = {c: j for j, c in enumerate(free)}
        rows, rhs = [], []
        for m, nid in enumerate(self.leads):
            cand = nid in self.cand_lead
            state = fixed.get(nid) if cand else 0
            vn, vg = iV[self.lead_n[m]], iV[self.lead_g[m]]
            if state == 0:
                r = np.zeros((1, N)); r[0, vn] = 1; r[0, vg] = -1
                eq_rows.append(r); eq_rhs.append([0.0])
            elif state == 1:
                r = np.zeros((1, N)); r[0, iL[m]] = 1
                eq_rows.append(r); eq_rhs.append([0.0])
            else:
                j = iz[zpos[nid]]
                M, D = self.lead_M[m], self.lead_D[m]
                for sgn in (1.0, -1.0):
                    r = np.zeros(N); r[iL[m]] = sgn; r[j] = M; rows.append(r); rhs.append(M)
                    r = np.zeros(N); r[vn] = sgn; r[vg] = -sgn; r[j] = -D; rows.append(r); rhs.append(0.0)
        nlp.linear_eq(np.vstack(eq_rows), np.concatenate(eq_rhs))

        # McCormick for p = (1 - z) V
        for jj, j0 in enumerate(direct):
            j = j0
            zj = iz[j]
            k = iV[cnode[jj]]
            pj = ip[jj]
            Lj, Uj = L[jj], U[jj]
            r = np.zeros(N); r[zj] = -Lj; r[pj] = -1; rows.append(r); rhs.append(-Lj)
            r = np.zeros(N); r[k] = 1; r[zj] = -Uj; r[pj] = -1; rows.append(r); rhs.append(0.0)
            r = np.zeros(N); r[pj] = 1; r[k] = -1; r[zj] = Lj; rows.append(r); rhs.append(0.0)
            r = np.zeros(N); r[pj] = 1; r[zj] = Uj; rows.append(r); rhs.append(Uj)
        # |I_eff| >= +-(T V)
        for r_ in range(nt):
            r = np.zeros(N); r[iV] = self.T[r_]; r[iI[r_]] = -1; rows.append(r); rhs.append(0.0)
            r = np.zeros(N); r[iV] = -self.T[r_]; r[iI[r_]] = -1; rows.append(r); rhs.append(0.0)
        # q = c * I * v McCormick, I in [0, Imax], v in [vL, vU]
        if idx is not None:
            for r_ in range(nt):
                c = self.q_coef[r_]
                b = self.q_bus[r_]
                vL, vU = model.vmin[b], model.vmax[b]
                Im = self.imax[r_]
                iv = idx["v"][b]
                # q >= c*vL*I
                r = np.zeros(N); r[iI[r_]] = c * vL; r[iq[r_]] = -1; rows.append(r); rhs.append(0.0)
                # q >= c*(vU*I + Im*v - Im*vU)
                r = np.zeros(N); r[iI[r_]] = c * vU; r[iv] = c * Im; r[iq[r_]] = -1
                rows.append(r); rhs.append(c * Im * vU)
                # q <= c*vU*I
                r = np.zeros(N); r[iq[r_]] = 1; r[iI[r_]] = -c * vU; rows.append(r); rhs.append(0.0)
                # q <= c*(vL*I + Im*v - Im*vL)
                r = np.zeros(N); r[iq[r_]] = 1; r[iI[r_]] = -c * vL; r[iv] = -c * Im
                rows.append(r); rhs.append(-c * Im * vL)
        # budget and count
        fixed_on = [c for c, v in fixed.items() if v == 1]
        fixed_cost = sum(ev.cost[c] for c in fixed_on)
        if pr.budget is not None and nf:
            r = np.zeros(N); r[iz] = [ev.cost[c] for c in free]; rows.append(r)
            rhs.append(pr.budget - fixed_cost + 1e-9)
        if rows:
            nlp.linear_ineq(np.array(rows), np.array(rhs))
        if pr.count is not None:
            r = np.zeros((1, N)); r[0, iz] = 1.0
            target = pr.count - len(fixed_on)
            if pr.count_mode == "eq":
                nlp.linear_eq(r, [target])
            else:
                nlp.linear_ineq(r, [target])

        # objective
        fscale = None
        if pr.objective == "blocker-cost":
            cvec = np.array([ev.cost[c] for c in free])

            def fun(x):
                return fixed_cost + float(cvec @ x[iz])

            def grad(x):
                gr = np.zeros(N); gr[iz] = cvec; return gr
        elif pr.objective == "shed":
            sw = ev.shed_weights
            zi = idx["zd"]

            def fun(x):
                return float(sw @ (1.0 - x[zi]))

            def grad(x):
                gr = np.zeros(N); gr[zi] = -sw; return gr
        elif pr.gic_sq_edges == "transformers":
            fscale = float(np.sum(self.imax ** 2))

            def fun(x):
                return float(np.sum(x[iI] ** 2))

            def grad(x):
                gr = np.zeros(N); gr[iI] = 2 * x[iI]; return gr
        else:
            fscale = self.edge_sq
            f, t, a, evv, on = self.E_edges
            D = np.zeros((len(f), N))
            D[np.arange(len(f)), iV[f]] = a * on
            D[np.arange(len(f)), iV[t]] -= a * on
            e0 = a * evv * on

            def fun(x):
                cur = D @ x + e0
                return float(cur @ cur)

            def grad(x):
                return 2 * D.T @ (D @ x + e0)
        nlp.objective(fun, grad, fscale)

        best = None
        starts = [warm, None] if warm is not None else [None]
        for start in starts:
            x0 = None
            if start is not None and "x" in start and len(start["x"]) == N:
                x0 = start["x"]
            res = nlp.solve(x0=x0, maxiter=500)
            if res.feasible(FEAS_TOL) and (best is None or res.fun < best.fun):
                best = res
            if best is not None and res.success:
                break
        if best is None:
            return None
        z = {c: float(best.x[iz[j]]) for j, c in enumerate(free)}
        acwarm = {k: best.x[v] for k, v in idx.items()} if idx is not None else {}
        bound = best.fun - BOUND_SLACK * max(1.0, fscale or 1.0)
        return bound, z, {"x": best.x, **acwarm}


def pr_needs_ac(problem):
    return True


def _ieff_weights(xf):
    """Linear weights of per-phase winding currents in the signed effective GIC."""
    a = xf.alpha
    if xf.config == "delta-delta":
        return {"high": 1.0}
    if xf.config in ("gwye-delta", "gwye-gwye"):
        return {"high": 1.0, "low": 1.0 / a}
    if xf.config == "auto":
        return {"series": a / (a + 1.0), "common": 1.0 / (a + 1.0)}
    if xf.config == "three-winding":
        return {"high": 1.0, "low": 1.0 / a, "tertiary": 1.0 / xf.beta}
    return {}


# ----------------------------------------------------------- branch and bound


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    fixed: dict = field(compare=False)
    warm: dict = field(compare=False, default=None)


def _min_key(ev, fixed):
    """Lexicographically smallest candidate-index tuple reachable under ``fixed``."""
    on = [ev.candidates.index(c) for c, v in fixed.items() if v == 1]
    if not on:
        return ()
    top = max(on)
    free = [i for i, c in enumerate(ev.candidates) if c not in fixed and i < top]
    return tuple(sorted(on + free))


def branch_and_bound(problem, evaluator=None):
    """Best-first NLP branch-and-bound on the blocker variables."""
    ev = evaluator or Evaluator(problem)
    t0 = time.perf_counter()
    relax = Relaxation(ev)
    counter = itertools.count()
    heap = [_Node(-np.inf, next(counter), {})]
    best = None
    history = []
    node_log = []
    explored = 0
    status = "proved"
    tol = lambda inc: max(problem.gap * max(1.0, abs(inc)), 1e-9)  # noqa: E731

    def prunable(bound, fixed):
        if best is None:
            return False
        t = tol(best.objective)
        if bound > best.objective + t:
            return True
        # a tie only matters if the subtree can hold a lexicographically smaller placement
        return bound >= best.objective - t and _min_key(ev, fixed) >= best.placed_key

    def offer(placed):
        nonlocal best
        if not ev.combinatorial_ok(placed)[0]:
            return
        leaf = _annotate(ev, ev.evaluate(placed))
        if _better(leaf, best):
            best = leaf
            history.append({"node": explored, "time": time.perf_counter() - t0,
                            "objective": leaf.objective, "placed": list(leaf.placed)})

    while heap:
        if time.perf_counter() - t0 > problem.time_limit:
            status = "timeout"
            break
        node = heapq.heappop(heap)
        if prunable(node.bound, node.fixed):
            continue
        explored += 1
        free = [c for c in ev.candidates if c not in node.fixed]
        if not free:
            offer([c for c, v in node.fixed.items() if v == 1])
            continue
        out = relax.solve(node.fixed, node.warm)
        if out is None:
            # a local solver failure proves nothing: keep the parent bound and branch
            node_log.append({"fixed": dict(node.fixed), "bound": None})
            var = free[0]
            for val in (1, 0):
                heapq.heappush(heap, _Node(node.bound, next(counter), {**node.fixed, var: val}, node.warm))
            continue
        rbound, z, warm = out
        bound = max(rbound, node.bound)
        node_log.append({"fixed": dict(node.fixed), "bound": bound})
        if prunable(bound, node.fixed):
            continue
        # rounding heuristic
        placed = [c for c, v in node.fixed.items() if v == 1] + [c for c in free if z[c] >= 0.5]
        offer(placed)
        if prunable(bound, node.fixed):
            continue
        frac = {c: abs(z[c] - 0.5) for c in free}
        var = min(free, key=lambda c: (round(frac[c], 9), ev.candidates.index(c)))
        for val in (1, 0):
            child = {**node.fixed, var: val}
            heapq.heappush(heap, _Node(bound, next(counter), child, warm))

    lower = min([n.bound for n in heap], default=np.inf)
    stats = {
        "nodes_explored": explored,
        "leaves_evaluated": len(ev._cache),
        "incumbent_history": history,
        "wall_time": time.perf_counter() - t0,
        "method": "branch-and-bound",
        "node_log": node_log,
    }
    if best is None:
        if status == "timeout":
            raise PlacementInfeasibleError("time limit reached without a feasible placement",
                                           {"status": "timeout"})
        raise PlacementInfeasibleError(
            "no blocker placement satisfies the constraints",
            infeasibility_certificate(problem, ev),
        )
    gap = 0.0
    if status == "timeout" and np.isfinite(lower):
        gap = max(0.0, (best.objective - lower) / max(1.0, abs(best.objective)))
    elif status == "proved" and heap:
        gap = 0.0
    return _finish(ev, best, status if status == "timeout" else ("proved" if gap <= problem.gap else "gap"),
                   gap, stats)


# ------------------------------------------------------------ verification


def constraint_check(solution, problem):
    """Slack per active placement constraint (>= 0 means satisfied)."""
    case = problem.case
    ev = Evaluator(problem)
    report = {}
    placed = list(solution.placed)
    if problem.budget is not None:
        used = sum(ev.cost[c] for c in placed)
        report["budget"] = {"value": used, "limit": problem.budget, "slack": problem.budget - used}
    if problem.count is not None:
        n = len(placed)
        slack = -abs(n - problem.count) if problem.count_mode == "eq" else problem.count - n
        report["count"] = {"value": n, "limit": problem.count, "slack": slack}
    z = solution.ac.z_d if solution.ac is not None else {d.id: 1.0 for d in case.loads}
    if problem.shed_cap is not None:
        shed = sum(abs(d.p_d) * d.shed_cost * (1.0 - z[d.id]) for d in case.loads)
        report["shed_cap"] = {"value": shed, "limit": problem.shed_cap, "slack": problem.shed_cap - shed}
    if problem.served_frac is not None:
        tot = sum(abs(d.p_d) for d in case.loads)
        served = sum(abs(d.p_d) * z[d.id] for d in case.loads)
        report["served_frac"] = {"value": served, "limit": problem.served_frac * tot,
                                 "slack": served - problem.served_frac * tot}
    for item in report.values():
        item["ok"] = item["slack"] >= -1e-6
    return report


def infeasibility_certificate(problem, ev):
    """Name the constraints that rule out every placement."""
    binding = []
    n = len(ev.candidates)
    costs = sorted(ev.cost.values())
    if problem.count is not None and problem.count > n:
        binding.append(f"count: {problem.count} blockers requested, {n} candidates exist")
    if problem.count is not None and problem.budget is not None and problem.count <= n:
        need = sum(costs[:problem.count])
        if need > problem.budget + 1e-9:
            binding.append(f"budget: cheapest {problem.count} blockers cost {need} > {problem.budget}")
    relaxed = PlacementProblem(problem.case, "blocker-cost", served_frac=None, shed_cap=None)
    full = Evaluator(relaxed).evaluate(tuple(ev.candidates))
    if not full.feasible:
        binding.append("ac: AC operation infeasible even with all blockers placed and free shedding")
    else:
        if problem.served_frac is not None and full.load_met < problem.served_frac - 1e-9:
            binding.append(
                f"served_frac: {problem.served_frac:.3f} unattainable even with all blockers "
                f"(best {full.load_met:.3f})"
            )
        if problem.shed_cap is not None and full.shed_cost > problem.shed_cap + 1e-9:
            binding.append(f"shed_cap: {problem.shed_cap} below shed cost {full.shed_cost:.4g} "
                           "with all blockers")
        if not binding:
            # operation is attainable with every blocker, so a combinatorial limit binds
            total = sum(costs)
            if problem.budget is not None and total > problem.budget + 1e-9:
                binding.append(f"budget: {problem.budget} < {total} needed for the all-blocker "
                               "placement; no affordable subset operates feasibly")
            if problem.count is not None and problem.count < n:
                binding.append(f"count: {problem.count} blockers allowed; no such subset "
                               "operates feasibly")
    if not binding:
        binding.append("combination: no single constraint is infeasible alone")
    return {"binding": binding}
