"""Named experiment suites producing deterministic pass/fail bundles."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from qmetric import __version__
from qmetric.analysis import SpaceMap, decay_exponent, qs_profile
from qmetric.generators import (
    euclidean_sample,
    geometric_set,
    grid,
    nonisotropic,
    path_graph,
    sample_points,
    snowflake,
    tree,
    ultrametric,
)
from qmetric.graphs import WeightedGraph
from qmetric.hyperbolic import (
    bourdon,
    flattening_identity_error,
    hamenstadt,
    regularity_duality_check,
)
from qmetric.modulus import (
    ModulusProblem,
    conformal_invariance_check,
    modulus,
    modulus_enumerated,
    simple_paths,
)
from qmetric.space import (
    MeasuredSpace,
    QuasimetricSpace,
    ahlfors_fit,
    default_radii,
    measure_doubling_constant,
    quasimetric_constant,
    uniform_perfectness,
)
from qmetric.transforms import david_semmes, flatten, roundtrip, sphericalize

SUITES = ("preservation", "duality", "boundary", "modulus")

#: resolution window used for every regularity fit in the suites
FIT_WINDOW = {"min_count": 16, "max_fraction": 0.25}


@dataclass
class AssertionResult:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""

    def to_dict(self):
        return asdict(self)


@dataclass
class SuiteReport:
    suite: str
    seed: int
    version: str
    results: list
    timings: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def assertions(self) -> list:
        """The deterministic part of the report."""
        return [r.to_dict() for r in self.results]

    def to_dict(self):
        return {"suite": self.suite, "seed": self.seed, "version": self.version,
                "passed": self.passed, "results": self.assertions(),
                "timings": self.timings}


class _Recorder:
    def __init__(self):
        self.results = []
        self.timings = {}

    def check(self, name, passed, value, bound, detail=""):
        self.results.append(AssertionResult(name, bool(passed), float(value),
                                            float(bound), detail))

    def timed(self, name):
        rec = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()
                return self

            def __exit__(self, *exc):
                self.elapsed = time.perf_counter() - self.t
                rec.timings[name] = self.elapsed
        return _T()


# ---------------------------------------------------------------------------
# shared experiment builders


def random_space(rng, n: int = 64) -> QuasimetricSpace:
    """Euclidean sample in dimension 1-3, powered so that K lands in [1.05, 3]."""
    dim = int(rng.integers(1, 4))
    x = rng.random((n, dim))
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    base = QuasimetricSpace(tuple(range(n)), d)
    K0 = quasimetric_constant(base)
    if K0 == 1.0:
        return base
    target = rng.uniform(1.05, 3.0)
    return base.powered(math.log(target) / math.log(K0))


def constant_bounds(seed: int, count: int = 50, n: int = 64):
    """Worst K_out / bound over sphericalize (4K^2) and flatten (K^2)."""
    rng = np.random.default_rng(seed)
    worst_s = worst_f = 0.0
    all_ok = True
    for _ in range(count):
        s = random_space(rng, n)
        K = quasimetric_constant(s)
        a, c = rng.integers(0, n, size=2)
        Ks = quasimetric_constant(sphericalize(s, int(a)).space)
        Kf = quasimetric_constant(flatten(s, int(c)).space)
        all_ok &= Ks <= 4 * K * K and Kf <= K * K
        worst_s = max(worst_s, Ks / (4 * K * K))
        worst_f = max(worst_f, Kf / (K * K))
    return all_ok, worst_s, worst_f


def regularity_shift(alpha: float, n: int = 2048, seed: int = 0):
    """Fits before, after sphericalizing at the left end, after flattening mid-sample."""
    ms = snowflake(n, alpha, seed=seed, jitter=True)
    fit = ahlfors_fit(ms, **FIT_WINDOW)
    sph = ahlfors_fit(sphericalize(ms, 0), **FIT_WINDOW)
    fla = ahlfors_fit(flatten(ms, n // 2), **FIT_WINDOW)
    return fit.Q, sph.Q, fla.Q


def david_semmes_experiment(depth: int = 10, epsilon: float = 0.5, seed: int = 0):
    """Fit of the deformed space and envelope(1) against C0^eps K^(alpha eps)."""
    ms = ultrametric(depth)
    out, _ = david_semmes(ms, epsilon)
    fit = ahlfors_fit(out)
    prof = qs_profile(SpaceMap.identity(ms.space, out.space), 10 ** 6, seed)
    cert = decay_exponent(ms)
    bound = cert.C0 ** epsilon * cert.K ** (cert.alpha * epsilon)
    return fit.Q, prof.envelope(1.0), bound, prof.finite


def decay_generators(seed: int):
    return {
        "line": euclidean_sample(512, 1, seed, jitter=True),
        "plane": euclidean_sample(400, 2, seed),
        "snowflake": snowflake(512, 0.5, 1, seed, jitter=True),
        "nonisotropic": nonisotropic(300, (1.0, 0.5), seed),
        "geometric_set": geometric_set(10),
        "ultrametric": ultrametric(8),
    }


def doubling_growth(seed: int, n: int = 512):
    """C_mu of the sphericalized and flattened line samples at n and 2n points.

    Both deformations use the left end as base point; balls with fewer than
    8 points are left out because their normalizers are dominated by
    single atoms.
    """
    out = {}
    for label in ("sphericalize", "flatten"):
        vals = []
        for m in (n, 2 * n):
            ms = euclidean_sample(m, 1, seed, jitter=True)
            t = sphericalize(ms, 0) if label == "sphericalize" else flatten(ms, 0)
            vals.append(measure_doubling_constant(t, default_radii(t.space), min_count=8))
        out[label] = vals
    return out


def duality_spaces(seed: int, count: int = 20):
    rng = np.random.default_rng(seed)
    return [random_space(rng, int(rng.integers(3, 40))) for _ in range(count)]


def parallel_paths(m: int, k: int) -> WeightedGraph:
    """m internally disjoint s-t paths of k unit edges each."""
    vertices = ["s", "t"]
    edges = []
    for i in range(m):
        chain = ["s"] + [f"p{i}_{j}" for j in range(1, k)] + ["t"]
        vertices += chain[1:-1]
        edges += [(a, b, 1.0) for a, b in zip(chain, chain[1:])]
    return WeightedGraph(vertices, edges)


def small_instances(seed: int):
    """Modulus problems with at most 8 simple E-F paths."""
    rng = np.random.default_rng(seed)
    out = [
        ("path4", ModulusProblem(path_graph(5), (0,), (4,), 2.0)),
        ("parallel3", ModulusProblem(parallel_paths(3, 4), ("s",), ("t",), 2.0)),
        ("parallel2_q3", ModulusProblem(parallel_paths(2, 3), ("s",), ("t",), 3.0)),
    ]
    g = grid(2, 3)
    out.append(("ladder", ModulusProblem(g, g.boundary["left"], g.boundary["right"], 2.0)))
    # diamond chain with random weights
    v = ["s", "a", "b", "m", "c", "d", "t"]
    e = [("s", "a"), ("s", "b"), ("a", "m"), ("b", "m"), ("a", "b"),
         ("m", "c"), ("m", "d"), ("c", "t"), ("d", "t")]
    lengths = rng.uniform(0.5, 2.0, len(e))
    measure = rng.uniform(0.5, 2.0, len(e))
    dg = WeightedGraph(v, [(a, b, float(x)) for (a, b), x in zip(e, lengths)])
    out.append(("diamonds", ModulusProblem(dg, ("s",), ("t",), 2.5, measure)))
    return [(name, p) for name, p in out if len(simple_paths(p, 64)) <= 8]


def conformal_grid(n: int, Q: float = 2.0):
    g = grid(n, length=1.0 / (n - 1))
    E = tuple(v for v in g.boundary["left"] if v != (0, 0))
    return conformal_invariance_check(g, (0, 0), E, g.boundary["right"], Q)


# ---------------------------------------------------------------------------
# suites


def _preservation(rec: _Recorder, seed: int, tol: float):
    with rec.timed("constant_bounds"):
        ok, ws, wf = constant_bounds(seed)
    rec.check("sphericalize K <= 4K^2 (50 spaces)", ok, ws, 1.0, "worst K_out / 4K^2")
    rec.check("flatten K <= K^2 (50 spaces)", ok, wf, 1.0, "worst K_out / K^2")
    rec.check("constant bounds runtime", rec.timings["constant_bounds"] < 5.0,
              0.0, 5.0, "wall time reported separately")
    for alpha, lo, hi in ((1.0, 0.9, 1.1), (0.5, 1.8, 2.2)):
        with rec.timed(f"regularity_alpha_{alpha}"):
            q, qs, qf = regularity_shift(alpha, seed=seed)
        rec.check(f"fit Q in [{lo}, {hi}] (alpha={alpha})", lo <= q <= hi, q, hi)
        rec.check(f"sphericalized shift <= 0.15 (alpha={alpha})",
                  abs(qs - q) <= 0.15, abs(qs - q), 0.15)
        rec.check(f"flattened shift <= 0.15 (alpha={alpha})",
                  abs(qf - q) <= 0.15, abs(qf - q), 0.15)
        rec.check(f"regularity runtime (alpha={alpha})",
                  rec.timings[f"regularity_alpha_{alpha}"] < 30.0, 0.0, 30.0)
    with rec.timed("david_semmes"):
        q, env1, bound, finite = david_semmes_experiment(seed=seed)
    rec.check("david-semmes fit 1/eps = 2 within 0.2", abs(q - 2.0) <= 0.2, q, 2.2)
    rec.check("david-semmes envelope(1) <= C0^eps K^(alpha eps)",
              finite and env1 <= bound * (1 + 1e-9), env1, bound)
    with rec.timed("decay"):
        for name, ms in decay_generators(seed).items():
            cert = decay_exponent(ms)
            rec.check(f"decay certificate ({name})", bool(cert.ok),
                      cert.empirical, cert.C0, f"alpha={cert.alpha!r}")
    with rec.timed("doubling_growth"):
        growth = doubling_growth(seed)
    for label, (c1, c2) in growth.items():
        rec.check(f"doubling n->2n ratio <= 1.5 ({label})", c2 / c1 <= 1.5, c2 / c1, 1.5)


def _duality(rec: _Recorder, seed: int, tol: float):
    rng = np.random.default_rng(seed + 1)
    worst_err, worst_lip, ok = 0.0, 0.0, True
    with rec.timed("roundtrip"):
        for s in duality_spaces(seed):
            c = s.points[int(rng.integers(0, len(s)))]
            r = roundtrip(s, c)
            ok &= r.max_rel_error <= tol and r.bilipschitz <= r.bound * (1 + 1e-9)
            worst_err = max(worst_err, r.max_rel_error)
            worst_lip = max(worst_lip, r.bilipschitz / r.bound)
    rec.check("roundtrip closed form (20 spaces)", ok, worst_err, tol)
    rec.check("roundtrip bilipschitz <= (1+T)^2", worst_lip <= 1 + 1e-9, worst_lip, 1.0,
              "worst constant / bound")


def _boundary(rec: _Recorder, seed: int, tol: float):
    import warnings
    with rec.timed("identity"):
        for depth in range(6, 11):
            g = tree(depth)
            omega = g.boundary["leaves"][0]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                b = bourdon(g, "leaves", 0.5)
                h = hamenstadt(g, omega, "leaves", 0.5, delta=b.delta)
            err = flattening_identity_error(b, h, omega)
            rec.check(f"flattening identity depth {depth}", err <= tol, err, tol)
            for q in (b, h):
                if q.sandwich.asserted:
                    rec.check(f"{q.flavor} sandwich depth {depth}", q.sandwich.ok,
                              q.sandwich.min_ratio, 0.5, f"K={q.K!r}")
    with rec.timed("regularity"):
        g = tree(10)
        for eps, target, tq in ((math.log(2), 1.0, 0.1), (math.log(2) / 2, 2.0, 0.15)):
            r = regularity_duality_check(g, "leaves", None, eps)
            qb, qh = r.bourdon_fit.Q, r.hamenstadt_fit.Q
            rec.check(f"bourdon Q = {target} +- {tq} (eps={eps:.6f})",
                      abs(qb - target) <= tq, qb, target + tq)
            if target == 1.0:
                rec.check(f"hamenstadt within 0.15 of bourdon (eps={eps:.6f})",
                          abs(qh - qb) <= 0.15, abs(qh - qb), 0.15)
            else:
                rec.check(f"hamenstadt Q = {target} +- {tq} (eps={eps:.6f})",
                          abs(qh - target) <= tq, qh, target + tq)


def _modulus(rec: _Recorder, seed: int, tol: float):
    with rec.timed("oracles"):
        single = modulus(ModulusProblem(path_graph(5), (0,), (4,), 2.0)).value
        rec.check("single path k=4, Q=2", abs(single - 0.25) <= 1e-6, single, 0.25)
        par = modulus(ModulusProblem(parallel_paths(3, 4), ("s",), ("t",), 2.0)).value
        rec.check("three parallel paths", abs(par - 0.75) <= 1e-6, par, 0.75)
        for name, prob in small_instances(seed):
            a = modulus(prob).value
            b = modulus_enumerated(prob)
            rel = abs(a - b) / max(abs(b), 1e-300)
            rec.check(f"enumeration agrees ({name})", rel <= 1e-6, rel, 1e-6)
    with rec.timed("conformal"):
        r9 = conformal_grid(9)
        r17 = conformal_grid(17)
    rec.check("conformal discrepancy 9x9 <= 5%", r9.discrepancy <= 0.05, r9.discrepancy, 0.05)
    rec.check("conformal discrepancy shrinks at 17x17", r17.discrepancy < r9.discrepancy,
              r17.discrepancy, r9.discrepancy)


_RUNNERS = {"preservation": _preservation, "duality": _duality,
            "boundary": _boundary, "modulus": _modulus}


def run_suite(name: str, seed: int = 0, tol: float = 1e-12) -> SuiteReport:
    """Run a named suite; unknown names raise ValueError."""
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    rec = _Recorder()
    _RUNNERS[name](rec, seed, tol)
    return SuiteReport(name, seed, __version__, rec.results, rec.timings)
