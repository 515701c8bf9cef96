"""Filtered mod-2 Morse complex of the reduced dual functional.

Generators are the critical points graded by Morse index; the boundary
operator counts, modulo 2, the negative-gradient flow lines between
generators of adjacent index.  The gradient flow runs in a seeded
random perturbation of the head-space H^1 metric (Morse-Smale
genericity); trajectories are integrated at normalized speed, which
reparametrizes but does not change the flow lines, with geometric
terminal events: capture in a small ball around a critical point, or
exit from the bounding ball (the functional is typically unbounded
below, so escapes are legitimate endpoints).

Index-1 generators emit exactly two flow lines, along the two unstable
rays.  For index-2 generators the unstable circle is meshed; endpoint
basins are read off, and each basin boundary is bisected until its
trajectory is captured by the intermediate index-1 point it limits to
(the broken-trajectory count).  Counts must be stable under mesh
doubling, and the assembled boundary must square to zero; either
failure triggers a metric re-seed.

The engine is generic over a small "reduced problem" protocol (value,
gradient, hessian, metric), so a synthetic system can drive the same
counting machinery as the Hamiltonian reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

from .errors import BasinInstability, MissingMinimum, NonConvergentFlow
from .reduction import ReducedManifold

__all__ = [
    "Generator",
    "MorseComplexData",
    "FlowOptions",
    "HeadProblem",
    "ToyDoubleWell",
    "count_connecting_orbits",
    "build_complex",
    "verify_d2",
    "filtered_betti",
    "betti_profile",
    "capacity_vanishing_check",
    "transition_level",
    "euler_characteristic",
    "gf2_rank",
    "gf2_solve",
]


# ---------------------------------------------------------------------------
# Reduced problems
# ---------------------------------------------------------------------------


class HeadProblem:
    """The reduced dual functional as a flow problem on head coordinates."""

    def __init__(self, R: ReducedManifold):
        self.R = R
        self.dim = R.head_dim

    def value(self, a):
        return self.R.value(a)

    def gradient(self, a):
        return self.R.gradient(a)

    def hessian(self, a):
        return self.R.hessian(a)

    def metric(self):
        return self.R.h1_gram_head()


class ToyDoubleWell:
    """psi(x, y) = (x^2 - 1)^2 + c y^2: two minima and one saddle.

    The planar double well is the brute-force-checkable validation
    system for the connecting-orbit counter: the saddle at the origin
    sends one flow line into each minimum.
    """

    dim = 2

    def __init__(self, c: float = 0.5):
        self.c = c

    def value(self, a):
        x, y = a
        return (x**2 - 1.0) ** 2 + self.c * y**2

    def gradient(self, a):
        x, y = a
        return np.array([4.0 * x * (x**2 - 1.0), 2.0 * self.c * y])

    def hessian(self, a):
        x, y = a
        return np.array([[12.0 * x**2 - 4.0, 0.0], [0.0, 2.0 * self.c]])

    def metric(self):
        return np.eye(2)

    def critical_points(self):
        return [
            {"label": "min-", "point": np.array([-1.0, 0.0]), "index": 0},
            {"label": "min+", "point": np.array([1.0, 0.0]), "index": 0},
            {"label": "saddle", "point": np.array([0.0, 0.0]), "index": 1},
        ]


# ---------------------------------------------------------------------------
# Complex data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Generator:
    label: str
    index: int
    action: float
    point: np.ndarray


@dataclass
class MorseComplexData:
    """Generators, mod-2 boundary and action filtration of a Morse complex."""

    generators: list  # of Generator, sorted by (index, action)
    boundary: set  # of (source_label, target_label) pairs with parity 1
    metric_perturbation_seed: int
    meta: dict = field(default_factory=dict)

    def by_label(self, label: str) -> Generator:
        return next(g for g in self.generators if g.label == label)

    def of_index(self, k: int, below: float = np.inf) -> list:
        return [g for g in self.generators if g.index == k and g.action < below]

    @property
    def max_index(self) -> int:
        return max((g.index for g in self.generators), default=0)

    def boundary_matrix(self, k: int, below: float = np.inf) -> np.ndarray:
        """Mod-2 matrix of the boundary from index k to k-1 (rows: targets)."""
        src = self.of_index(k, below)
        dst = self.of_index(k - 1, below)
        A = np.zeros((len(dst), len(src)), dtype=np.uint8)
        for j, s in enumerate(src):
            for i, d in enumerate(dst):
                if (s.label, d.label) in self.boundary:
                    A[i, j] = 1
        return A

    def to_json(self) -> dict:
        return {
            "generators": [
                {"label": g.label, "index": g.index, "action": g.action}
                for g in self.generators
            ],
            "boundary": sorted(list(self.boundary)),
            "metric_perturbation_seed": self.metric_perturbation_seed,
            "meta": self.meta,
        }


# ---------------------------------------------------------------------------
# GF(2) linear algebra
# ---------------------------------------------------------------------------


def gf2_rank(A: np.ndarray) -> int:
    A = A.copy() % 2
    m, n = A.shape
    rank = 0
    for col in range(n):
        pivot = None
        for row in range(rank, m):
            if A[row, col]:
                pivot = row
                break
        if pivot is None:
            continue
        A[[rank, pivot]] = A[[pivot, rank]]
        for row in range(m):
            if row != rank and A[row, col]:
                A[row] ^= A[rank]
        rank += 1
        if rank == m:
            break
    return rank


def gf2_solve(A: np.ndarray, b: np.ndarray):
    """One solution of A c = b over GF(2), or None when inconsistent."""
    A = A.copy() % 2
    b = b.copy() % 2
    m, n = A.shape
    aug = np.concatenate([A, b[:, None]], axis=1)
    pivots = []
    rank = 0
    for col in range(n):
        pivot = None
        for row in range(rank, m):
            if aug[row, col]:
                pivot = row
                break
        if pivot is None:
            continue
        aug[[rank, pivot]] = aug[[pivot, rank]]
        for row in range(m):
            if row != rank and aug[row, col]:
                aug[row] ^= aug[rank]
        pivots.append(col)
        rank += 1
    for row in range(rank, m):
        if aug[row, -1]:
            return None
    c = np.zeros(n, dtype=np.uint8)
    for i, col in enumerate(pivots):
        c[col] = aug[i, -1]
    return c


# ---------------------------------------------------------------------------
# Flow engine
# ---------------------------------------------------------------------------


@dataclass
class FlowOptions:
    capture_radius: float = 1e-4
    offset: float = 1e-3
    mesh_points: int = 8
    bisect_angle_tol: float = 1e-7
    max_bisections: int = 14
    attribution_radius: float = 5e-3
    metric_perturbation: float = 0.05
    ball_factor: float = 2.5
    rtol: float = 1e-6
    atol: float = 1e-9
    t_max: float = 2e3
    level_tol: float = 1e-5


class _FlowEngine:
    def __init__(self, problem, generators, seed: int, options: FlowOptions):
        self.problem = problem
        self.gens = list(generators)
        self.opt = options
        G = problem.metric()
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((problem.dim, problem.dim))
        S = 0.5 * (S + S.T)
        S /= max(1.0, np.linalg.norm(S, 2))
        sqrtG = np.diag(np.sqrt(np.diag(G))) if _is_diag(G) else _sqrtm_sym(G)
        self.M = sqrtG @ (np.eye(problem.dim) + options.metric_perturbation * S) @ sqrtG
        self.Minv = np.linalg.inv(self.M)
        self.points = np.array([g.point for g in self.gens])
        norms = np.linalg.norm(self.points, axis=1) if len(self.gens) else np.zeros(1)
        self.ball_radius = options.ball_factor * (float(np.max(norms)) + 1.0)
        self.flow_calls = 0
        self._endpoint_cache: dict = {}

    def endpoint_from(self, key, a0, source: str | None = None):
        """(label, min_dists) of the flow from a0, cached per (generator, ray)."""
        if key not in self._endpoint_cache:
            self._endpoint_cache[key] = self.flow(a0, source=source)
        return self._endpoint_cache[key]

    def _rhs(self, t, a):
        g = self.Minv @ self.problem.gradient(a)
        nrm = np.linalg.norm(g)
        return -g / max(nrm, 1e-12)  # unit speed: same flow lines, finite time

    def flow(self, a0: np.ndarray, source: str | None = None):
        """Integrate until capture or escape; returns (label, min_dists).

        label is a generator label or 'escape'; min_dists maps labels of
        all generators to the closest approach along the trajectory.
        Capture of the source generator is armed only after the
        trajectory has genuinely left its neighborhood, so a mesh point
        that briefly swings back toward its saddle is not mislabeled.
        """
        opt = self.opt
        self.flow_calls += 1
        src_i = None
        if source is not None:
            src_i = next(i for i, g in enumerate(self.gens) if g.label == source)
        armed = {"on": src_i is None}
        leave_radius = max(5.0 * opt.offset, 3.0 * opt.capture_radius)

        def ev_capture(t, a):
            d = np.linalg.norm(self.points - a, axis=1)
            if not armed["on"]:
                if d[src_i] > leave_radius:
                    armed["on"] = True
                else:
                    d = np.delete(d, src_i)
                    if d.size == 0:
                        return 1.0
            return float(np.min(d)) - opt.capture_radius

        def ev_ball(t, a):
            return float(np.linalg.norm(a)) - self.ball_radius

        ev_capture.terminal = True
        ev_ball.terminal = True
        sol = solve_ivp(
            self._rhs, (0.0, opt.t_max), a0, method="RK45",
            rtol=opt.rtol, atol=opt.atol, events=(ev_capture, ev_ball),
            dense_output=True,
        )
        ts = np.linspace(0.0, sol.t[-1], 800)
        traj = sol.sol(ts).T
        dists = np.linalg.norm(traj[:, None, :] - self.points[None, :, :], axis=2)
        # two-level refinement: the coarse arc-length samples overestimate a
        # brief close pass, so zoom around each per-generator minimum
        min_dists = {}
        dt = ts[1] - ts[0] if ts.size > 1 else 0.0
        for i, g in enumerate(self.gens):
            j = int(np.argmin(dists[:, i]))
            lo, hi = max(ts[j] - 2 * dt, 0.0), min(ts[j] + 2 * dt, sol.t[-1])
            fine = sol.sol(np.linspace(lo, hi, 160)).T
            d = float(np.min(np.linalg.norm(fine - self.points[i], axis=1)))
            min_dists[g.label] = min(d, float(dists[j, i]))
        if sol.t_events[0].size > 0:
            a_end = sol.y_events[0][0]
            i = int(np.argmin(np.linalg.norm(self.points - a_end, axis=1)))
            return self.gens[i].label, min_dists
        if sol.t_events[1].size > 0:
            return "escape", min_dists
        raise NonConvergentFlow(
            f"trajectory unresolved after path length {opt.t_max}"
        )

    def unstable_frame(self, gen: Generator) -> np.ndarray:
        """M-orthonormal basis of the negative eigenspace at a generator."""
        Hm = self.problem.hessian(gen.point)
        lam, V = eigh(Hm, self.M)
        neg = V[:, lam < 0]
        if neg.shape[1] != gen.index:
            raise BasinInstability(
                f"negative eigenspace at {gen.label} has dimension {neg.shape[1]}, "
                f"expected index {gen.index}"
            )
        return neg


def _is_diag(G):
    return np.allclose(G, np.diag(np.diag(G)))


def _sqrtm_sym(G):
    lam, V = np.linalg.eigh(G)
    return (V * np.sqrt(np.maximum(lam, 0.0))) @ V.T


# ---------------------------------------------------------------------------
# Connecting-orbit counting
# ---------------------------------------------------------------------------


def _count_from_index1(engine: _FlowEngine, x: Generator, y: Generator) -> int:
    E = engine.unstable_frame(x)
    count = 0
    for sgn in (+1.0, -1.0):
        label, _ = engine.endpoint_from(
            (x.label, sgn), x.point + sgn * engine.opt.offset * E[:, 0], source=x.label
        )
        if label == y.label:
            count += 1
    return count % 2


def _count_from_index2(
    engine: _FlowEngine, x: Generator, y: Generator, mesh: int
) -> int:
    E = engine.unstable_frame(x)
    opt = engine.opt
    saddle_labels = [g.label for g in engine.gens if g.index == x.index - 1]
    if len(saddle_labels) > 1:
        pts = np.array(
            [g.point for g in engine.gens if g.index == x.index - 1]
        )
        sep = np.min(
            [np.linalg.norm(p - q) for i, p in enumerate(pts) for q in pts[i + 1 :]]
        )
        attr_radius = min(opt.attribution_radius, 0.2 * float(sep))
    else:
        attr_radius = opt.attribution_radius

    def endpoint(theta: float):
        d = np.cos(theta) * E[:, 0] + np.sin(theta) * E[:, 1]
        return engine.endpoint_from(
            (x.label, round(theta, 12)), x.point + opt.offset * d, source=x.label
        )

    thetas = [2.0 * np.pi * i / mesh for i in range(mesh)]
    labels = [endpoint(th)[0] for th in thetas]
    hits = 0
    for i in range(mesh):
        a, b = thetas[i], thetas[(i + 1) % mesh] + (2.0 * np.pi if i + 1 == mesh else 0.0)
        la, lb = labels[i], labels[(i + 1) % mesh]
        if la == lb:
            continue
        # bisect the basin boundary; the boundary trajectory limits to the
        # stable manifold of an index-1 point.  Attribution, in order of
        # confidence: capture by an intermediate critical point's ball;
        # closest approach to an index-1 point within the attribution
        # radius; and, when the flow has a strongly contracting direction
        # that keeps bracketing trajectories away from the saddle itself
        # (slow-fast splitting of a near-degenerate family), the unique
        # index-1 generator below the source action.
        attributed = None
        best_approach = {s: np.inf for s in saddle_labels}
        for _ in range(opt.max_bisections):
            if b - a <= opt.bisect_angle_tol:
                break
            mid = 0.5 * (a + b)
            lm, md = endpoint(mid)
            for s in saddle_labels:
                best_approach[s] = min(best_approach[s], md[s])
            if lm not in (la, lb):
                attributed = lm  # captured by an intermediate critical point
                break
            close = {s: md[s] for s in saddle_labels if md[s] < attr_radius}
            if close:
                attributed = min(close, key=close.get)
                break
            if lm == la:
                a = mid
            else:
                b = mid
        if attributed is None:
            candidates = [
                g for g in engine.gens
                if g.index == x.index - 1 and g.action < x.action
            ]
            if len(candidates) == 1:
                attributed = candidates[0].label
            elif candidates:
                # disambiguate by closest approach if it is decisive
                ranked = sorted(candidates, key=lambda g: best_approach[g.label])
                if (
                    len(ranked) == 1
                    or best_approach[ranked[0].label]
                    < 0.2 * best_approach[ranked[1].label]
                ):
                    attributed = ranked[0].label
        if attributed is None:
            raise BasinInstability(
                f"basin boundary between {la} and {lb} did not resolve an "
                "intermediate critical point"
            )
        if attributed == y.label:
            hits += 1
    return hits % 2


def count_connecting_orbits(
    engine_or_problem,
    generators,
    x: Generator,
    y: Generator,
    seed: int = 0,
    options: FlowOptions | None = None,
    mesh: int | None = None,
) -> int:
    """Parity of the negative-gradient flow lines from x down to y.

    Structurally zero unless index drops by exactly 1 and the action
    strictly decreases.  Implemented for source index 1 (two rays) and 2
    (meshed unstable circle with basin-boundary bisection).
    """
    if x.index - y.index != 1:
        return 0
    if y.action >= x.action:
        return 0
    if isinstance(engine_or_problem, _FlowEngine):
        engine = engine_or_problem
    else:
        engine = _FlowEngine(engine_or_problem, generators, seed, options or FlowOptions())
    if x.index == 1:
        return _count_from_index1(engine, x, y)
    if x.index == 2:
        return _count_from_index2(engine, x, y, mesh or engine.opt.mesh_points)
    raise NonConvergentFlow(
        "connecting-orbit counting is implemented for source index <= 2"
    )


# ---------------------------------------------------------------------------
# Complex assembly and homology
# ---------------------------------------------------------------------------


def build_complex(
    problem,
    generators,
    metric_seed: int = 0,
    options: FlowOptions | None = None,
    max_reseeds: int = 3,
    audit_mesh_doubling: bool = True,
) -> MorseComplexData:
    """Assemble the filtered mod-2 Morse complex of a reduced problem.

    Counts are audited by mesh doubling (index-2 sources) and by the
    d^2 = 0 identity; a failed audit re-seeds the metric perturbation.
    """
    options = options or FlowOptions()
    gens = sorted(generators, key=lambda g: (g.index, g.action))
    last_error = None
    for attempt in range(max_reseeds):
        seed = metric_seed + attempt
        engine = _FlowEngine(problem, gens, seed, options)
        try:
            boundary = set()
            for x in gens:
                if x.index == 0:
                    continue
                for y in gens:
                    if y.index != x.index - 1 or y.action >= x.action:
                        continue
                    parity = count_connecting_orbits(engine, gens, x, y)
                    if audit_mesh_doubling and x.index == 2 and parity is not None:
                        parity2 = count_connecting_orbits(
                            engine, gens, x, y, mesh=2 * options.mesh_points
                        )
                        if parity2 != parity:
                            raise BasinInstability(
                                f"count {x.label}->{y.label} unstable under mesh doubling"
                            )
                    if parity:
                        boundary.add((x.label, y.label))
            C = MorseComplexData(
                generators=gens,
                boundary=boundary,
                metric_perturbation_seed=seed,
                meta={"flow_calls": engine.flow_calls, "reseeds": attempt},
            )
            if not verify_d2(C):
                raise BasinInstability("boundary fails d^2 = 0")
            _check_filtration(C)
            return C
        except BasinInstability as exc:
            last_error = exc
            continue
    raise last_error


def _check_filtration(C: MorseComplexData, margin: float = 1e-9):
    for (src, dst) in C.boundary:
        a_src = C.by_label(src).action
        a_dst = C.by_label(dst).action
        if not a_dst < a_src - margin:
            raise BasinInstability(
                f"boundary entry {src}->{dst} does not strictly decrease action"
            )


def verify_d2(C: MorseComplexData) -> bool:
    """d o d = 0 over Z_2 in every degree."""
    for k in range(2, C.max_index + 1):
        A = C.boundary_matrix(k)
        B = C.boundary_matrix(k - 1)
        if A.size and B.size and np.any((B @ A) % 2):
            return False
    return True


def filtered_betti(C: MorseComplexData, a: float) -> list[int]:
    """Betti numbers of the subcomplex generated below action level a."""
    out = []
    for k in range(0, C.max_index + 1):
        nk = len(C.of_index(k, below=a))
        rk = gf2_rank(C.boundary_matrix(k, below=a)) if k >= 1 else 0
        rk1 = gf2_rank(C.boundary_matrix(k + 1, below=a))
        out.append(nk - rk - rk1)
    return out


def betti_profile(C: MorseComplexData, levels=None):
    """Filtered Betti numbers at a list of levels (default: between actions)."""
    if levels is None:
        acts = sorted(g.action for g in C.generators)
        levels = []
        for i in range(len(acts)):
            lo = acts[i]
            hi = acts[i + 1] if i + 1 < len(acts) else acts[i] + 1.0
            levels.append(0.5 * (lo + hi))
    return [{"level": float(a), "betti": filtered_betti(C, a)} for a in levels]


def euler_characteristic(C: MorseComplexData) -> int:
    return int(sum((-1) ** g.index for g in C.generators))


def capacity_vanishing_check(C: MorseComplexData, eps: float, eta_level: float) -> bool:
    """Whether the low-action minimum dies in the filtered homology below
    eta_level.

    The generator z is the index-0 generator with action in (-eps, eps);
    it dies exactly when it is a boundary within the sublevel complex,
    which is the Morse-side content of the capacity bound
    c <= minimal action + eps.
    """
    zs = [g for g in C.generators if g.index == 0 and -eps < g.action < eps]
    if not zs:
        raise MissingMinimum(f"no index-0 generator with action in (-{eps}, {eps})")
    z = min(zs, key=lambda g: g.action)
    dst = C.of_index(0, below=eta_level)
    if z.label not in [g.label for g in dst]:
        return False
    A = C.boundary_matrix(1, below=eta_level)
    b = np.array([1 if g.label == z.label else 0 for g in dst], dtype=np.uint8)
    return gf2_solve(A, b) is not None


def transition_level(C: MorseComplexData, eps: float) -> float | None:
    """Smallest filtration level at which the low-action minimum dies."""
    zs = [g for g in C.generators if g.index == 0 and -eps < g.action < eps]
    if not zs:
        raise MissingMinimum(f"no index-0 generator with action in (-{eps}, {eps})")
    levels = sorted(g.action for g in C.generators if g.index == 1)
    for a in levels:
        if capacity_vanishing_check(C, eps, a + 1e-12):
            return a
    return None
