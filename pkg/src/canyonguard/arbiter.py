"""Control arbitration between pilot and guardian.

Intervention is decided from attention-map differences (amplitude L1 or
weighted-center distance) against a threshold: the guardian steps in when the
difference *exceeds* the threshold. The printed-rule variant with the opposite
orientation is available behind `eq34_verbatim` for fidelity experiments.

The cooperation layer solves the strictly convex quadratic program

    min_u  ||u - u_R||^2_{Qh} + I * ||u - u_G||^2_{QG}   s.t.  u in S

where S is a per-axis box plus optional linear inequalities A u <= b. The
solver starts from the unconstrained stationary point and refines with an
active-set iteration; a brute-force grid oracle is provided for verification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalFault, PreconditionError
from .saliency import AttentionMap, amplitude_distance, center_distance

RULES = ("amplitude", "center", "shield", "none")


@dataclass(frozen=True)
class InterventionDecision:
    flag: int                 # I in {0, 1}
    metric_value: float
    threshold: float
    rule: str


@dataclass(frozen=True)
class CooperationWeights:
    q_h: np.ndarray           # diagonal pilot weight, length 4
    q_g: np.ndarray           # diagonal guardian weight, length 4
    horizon: int = 1

    def __post_init__(self):
        object.__setattr__(self, "q_h", np.asarray(self.q_h, dtype=np.float64))
        object.__setattr__(self, "q_g", np.asarray(self.q_g, dtype=np.float64))
        if self.q_h.shape != self.q_g.shape or self.q_h.ndim != 1:
            raise ConfigurationError("q_h and q_g must be equal-length vectors")
        if np.any(self.q_h <= 0) or np.any(self.q_g <= 0):
            raise ConfigurationError("cooperation weights must be strictly positive")
        if self.horizon < 1:
            raise ConfigurationError("prediction horizon must be >= 1")

    @staticmethod
    def uniform(q_h: float = 1.0, q_g: float = 4.0, dim: int = 4) -> "CooperationWeights":
        return CooperationWeights(np.full(dim, q_h), np.full(dim, q_g))


@dataclass(frozen=True)
class SafetySet:
    """Box bounds per control axis plus optional linear cuts A u <= b."""

    lo: np.ndarray
    hi: np.ndarray
    a: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape:
            raise ConfigurationError("box bounds must have equal shapes")
        if np.any(self.lo > self.hi):
            raise ConfigurationError("box lower bounds exceed upper bounds")
        if self.a is not None:
            a = np.asarray(self.a, dtype=np.float64)
            b = np.asarray(self.b, dtype=np.float64)
            if a.ndim != 2 or a.shape[1] != self.lo.shape[0] or b.shape != (a.shape[0],):
                raise ConfigurationError("linear constraint shapes inconsistent")
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
            self._check_interior()

    def _check_interior(self):
        # vertex enumeration over the box: some vertex must strictly satisfy
        # every linear cut for the set to have a usable interior
        n = self.lo.shape[0]
        for corner in itertools.product(*[(self.lo[i], self.hi[i]) for i in range(n)]):
            u = np.array(corner)
            if np.all(self.a @ u < self.b - 1e-12):
                return
        raise ConfigurationError("safety set has empty interior on the control box")

    @staticmethod
    def unit_box(dim: int = 4) -> "SafetySet":
        return SafetySet(np.full(dim, -1.0), np.full(dim, 1.0))

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=np.float64)
        if np.any(u < self.lo - tol) or np.any(u > self.hi + tol):
            return False
        if self.a is not None and np.any(self.a @ u > self.b + tol):
            return False
        return True

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """All constraints as G u <= h (box rows first, then linear cuts)."""
        n = self.lo.shape[0]
        g = np.vstack([np.eye(n), -np.eye(n)])
        h = np.concatenate([self.hi, -self.lo])
        if self.a is not None:
            g = np.vstack([g, self.a])
            h = np.concatenate([h, self.b])
        return g, h


# ---------------------------------------------------------------------------
# intervention predicates

def decide(rule: str, phi_r: AttentionMap, phi_g: AttentionMap,
           thresholds: dict, eq34_verbatim: bool = False) -> InterventionDecision:
    """Evaluate one intervention rule on a pilot/guardian attention pair."""
    if rule == "none":
        return InterventionDecision(0, 0.0, 0.0, "none")
    if rule == "amplitude":
        threshold = float(thresholds["c_f"])
        metric = amplitude_distance(phi_r, phi_g)
    elif rule == "center":
        threshold = float(thresholds["d_f"])
        metric = center_distance(phi_r, phi_g)
    else:
        raise ConfigurationError(f"unknown attention rule {rule!r}")
    if threshold < 0:
        raise PreconditionError("thresholds must be non-negative")
    if eq34_verbatim:
        flag = 1 if metric <= threshold else 0
    else:
        flag = 1 if metric > threshold else 0
    return InterventionDecision(flag, metric, threshold, rule)


class HysteresisFilter:
    """Optional N-step majority filter over the raw intervention flag."""

    def __init__(self, window: int = 0):
        self.window = window
        self._history: list[int] = []

    def apply(self, flag: int) -> int:
        if self.window <= 1:
            return flag
        self._history.append(flag)
        if len(self._history) > self.window:
            self._history.pop(0)
        return 1 if sum(self._history) * 2 > len(self._history) else 0

    def reset(self):
        self._history.clear()


# ---------------------------------------------------------------------------
# quadratic program

def _solve_kkt(hmat, c, g, h, active):
    n = hmat.shape[0]
    idx = sorted(active)
    ga = g[idx]
    kkt = np.block([[hmat, ga.T], [ga, np.zeros((len(idx), len(idx)))]]) \
        if idx else hmat
    rhs = np.concatenate([-c, h[idx]]) if idx else -c
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], dict(zip(idx, sol[n:]))


def solve_box_qp(hmat: np.ndarray, c: np.ndarray, g: np.ndarray, h: np.ndarray,
                 max_iter: int = 60) -> np.ndarray:
    """min 1/2 u'Hu + c'u s.t. G u <= h, H symmetric positive definite.

    Active-set iteration seeded at the unconstrained stationary point: add the
    most violated constraint, drop constraints with negative multipliers, stop
    when primal feasible with non-negative multipliers. Falls back to exact
    enumeration of active subsets if the iteration stalls.
    """
    n = hmat.shape[0]
    active: set[int] = set()
    seen: set[frozenset] = set()
    for _ in range(max_iter):
        key = frozenset(active)
        if key in seen:
            break
        seen.add(key)
        try:
            u, lams = _solve_kkt(hmat, c, g, h, active)
        except np.linalg.LinAlgError:
            break
        viol = g @ u - h
        worst = int(np.argmax(viol))
        if viol[worst] > 1e-10:
            if len(active) < n:
                active.add(worst)
                continue
            break
        neg = [i for i, lam in lams.items() if lam < -1e-10]
        if neg:
            active.discard(min(neg, key=lambda i: lams[i]))
            continue
        return u

    # exact fallback: enumerate candidate active sets (n is tiny)
    best, best_obj = None, np.inf
    m = g.shape[0]
    for size in range(n + 1):
        for combo in itertools.combinations(range(m), size):
            try:
                u, lams = _solve_kkt(hmat, c, g, h, set(combo))
            except np.linalg.LinAlgError:
                continue
            if np.any(g @ u - h > 1e-9):
                continue
            if any(lam < -1e-9 for lam in lams.values()):
                continue
            obj = 0.5 * u @ hmat @ u + c @ u
            if obj < best_obj:
                best, best_obj = u, obj
    if best is None:
        raise NumericalFault("active-set QP found no feasible stationary point")
    return best


def cooperate(u_r: np.ndarray, u_g: np.ndarray, decision: InterventionDecision,
              weights: CooperationWeights, safety: SafetySet
              ) -> tuple[np.ndarray, float]:
    """Blend pilot and guardian controls through the cooperation QP.

    Returns the final control and the realized blend level in [0, 1].
    """
    u_r = np.asarray(u_r, dtype=np.float64)
    u_g = np.asarray(u_g, dtype=np.float64)
    flag = decision.flag
    qh, qg = weights.q_h, weights.q_g

    if flag == 0 and safety.contains(u_r):
        return u_r.copy(), 0.0

    diag = qh + flag * qg
    hmat = 2.0 * np.diag(diag)
    c = -2.0 * (qh * u_r + flag * qg * u_g)
    g, h = safety.halfspaces()
    u = solve_box_qp(hmat, c, g, h)
    if not safety.contains(u, tol=1e-7):
        raise NumericalFault("cooperation QP produced an infeasible control")

    if flag == 0:
        return u, 0.0
    denom = float(np.linalg.norm(u_g - u_r))
    if denom > 1e-12:
        level = float(np.linalg.norm(u - u_r)) / denom
    else:
        level = float(np.mean(qg / (qh + qg)))
    return u, float(np.clip(level, 0.0, 1.0))


def qp_oracle(u_r: np.ndarray, u_g: np.ndarray, flag: int,
              weights: CooperationWeights, safety: SafetySet,
              grid_step: float) -> np.ndarray:
    """Exhaustive grid search over the safety set at resolution grid_step.

    The diagonal objective and the constraint sparsity split the axes into
    independent groups, so the full product grid is searched group by group;
    the combined result equals the argmin over the whole grid.
    """
    if grid_step <= 0:
        raise PreconditionError("grid_step must be positive")
    u_r = np.asarray(u_r, dtype=np.float64)
    u_g = np.asarray(u_g, dtype=np.float64)
    n = u_r.shape[0]
    qh, qg = weights.q_h, weights.q_g

    axis_grids = []
    for i in range(n):
        lo, hi = safety.lo[i], safety.hi[i]
        if hi - lo < grid_step * 1e-9:
            axis_grids.append(np.array([lo]))
        else:
            count = int(round((hi - lo) / grid_step)) + 1
            axis_grids.append(np.linspace(lo, hi, count))

    # union-find over axes coupled by shared linear constraint rows
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    rows_for_axis: list[list[int]] = [[] for _ in range(n)]
    if safety.a is not None:
        for r, row in enumerate(safety.a):
            touched = [i for i in range(n) if row[i] != 0.0]
            for i in touched:
                rows_for_axis[i].append(r)
            for i, j in zip(touched, touched[1:]):
                parent[find(i)] = find(j)

    def axis_cost(i, vals):
        return qh[i] * (vals - u_r[i]) ** 2 + flag * qg[i] * (vals - u_g[i]) ** 2

    out = np.empty(n)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    for axes in groups.values():
        if len(axes) == 1 and not rows_for_axis[axes[0]]:
            i = axes[0]
            out[i] = axis_grids[i][int(np.argmin(axis_cost(i, axis_grids[i])))]
            continue
        mesh = np.meshgrid(*[axis_grids[i] for i in axes], indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        cost = np.zeros(pts.shape[0])
        for k, i in enumerate(axes):
            cost += axis_cost(i, pts[:, k])
        rows = sorted({r for i in axes for r in rows_for_axis[i]})
        if rows:
            feas = np.ones(pts.shape[0], dtype=bool)
            for r in rows:
                lhs = pts @ safety.a[r, axes]
                feas &= lhs <= safety.b[r] + 1e-12
            cost = np.where(feas, cost, np.inf)
        best = int(np.argmin(cost))
        if not np.isfinite(cost[best]):
            raise NumericalFault("no feasible grid point in safety set")
        for k, i in enumerate(axes):
            out[i] = pts[best, k]
    return out


def shield(u_r: np.ndarray, u_g: np.ndarray, s_threshold: float
           ) -> tuple[np.ndarray, int]:
    """Switch to the guardian when the control difference leaves the shield."""
    if s_threshold < 0:
        raise PreconditionError("shield threshold must be non-negative")
    u_r = np.asarray(u_r, dtype=np.float64)
    u_g = np.asarray(u_g, dtype=np.float64)
    if float(np.linalg.norm(u_r - u_g)) > s_threshold:
        return u_g.copy(), 1
    return u_r.copy(), 0
