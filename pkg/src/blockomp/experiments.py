"""Seeded ensembles, recovery trials, exhaustive recovery checks and phase sweeps.

Every random draw comes from a Philox generator keyed by
``(seed, stream, *counters)``, so a trial's inputs depend only on its address
and never on how many trials ran before it or on which thread ran it.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations

import numpy as np

from .blocks import BlockLayout, BlockSignal, BlockSupport, block_support, embed, mixed_l20_norm
from .errors import BudgetExceeded, InvalidSpec
from .numeric import as_matrix
from .pursuit import PursuitConfig, block_omp, omp
from .rip import (
    DEFAULT_BUDGET,
    LemmaReport,
    block_rip_constant_exact,
    check_identification,
    lemma4_batch,
    orthogonalized_dictionary,
    restricted_rip_extremes_of_A,
    verify_corollary1,
    verify_lemma1,
    verify_lemma2,
    verify_lemma3,
)

COEFF_MODELS = ("gaussian", "rademacher", "unit_block")
MATRIX_MODELS = ("gaussian_normalized", "orthonormal_perturbed")
EXACT_TOL = 1e-8
MIN_BLOCK_NORM = 1e-6

# RNG stream ids
MATRIX_STREAM = 1
SIGNAL_STREAM = 2
THEOREM_STREAM = 3
LEMMA_STREAM = 4


def rng(seed, stream, *counter):
    """Counter-addressed generator: output depends only on ``(seed, stream, counter)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), *(int(c) for c in counter)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything needed to regenerate a run.

    ``max_iterations`` is the Block OMP stopping index; OMP gets
    ``max_iterations * d``. ``None`` stops at the signal sparsity ``K``
    (``Kd`` for OMP). ``L_values`` / ``K_values`` define sweep axes and default
    to the single values ``L`` and ``K``.
    """

    L: int
    N: int
    d: int
    K: int
    seed: int = 0
    trials: int = 1
    coeff_model: str = "gaussian"
    matrix_model: str = "gaussian_normalized"
    normalize_columns: bool = True
    epsilon: float = 0.0
    max_iterations: int = None
    residual_tol: float = 1e-10
    draws_per_support: int = 20
    budget: int = DEFAULT_BUDGET
    L_values: tuple = None
    K_values: tuple = None

    def __post_init__(self):
        for name in ("L", "N", "d", "K", "trials"):
            if getattr(self, name) < 1:
                raise InvalidSpec(f"{name} must be >= 1")
        if self.N % self.d:
            raise InvalidSpec(f"N={self.N} is not a multiple of d={self.d}")
        if self.coeff_model not in COEFF_MODELS:
            raise InvalidSpec(f"unknown coeff_model {self.coeff_model!r}")
        if self.matrix_model not in MATRIX_MODELS:
            raise InvalidSpec(f"unknown matrix_model {self.matrix_model!r}")
        if self.epsilon < 0:
            raise InvalidSpec("epsilon must be >= 0")
        for k in self.k_axis:
            if k > self.N // self.d:
                raise InvalidSpec(f"K={k} exceeds the block count M={self.N // self.d}")
        if any(l < 1 for l in self.l_axis):
            raise InvalidSpec("L values must be >= 1")

    @property
    def layout(self):
        return BlockLayout(self.N, self.d)

    @property
    def M(self):
        return self.N // self.d

    @property
    def l_axis(self):
        return tuple(self.L_values) if self.L_values else (self.L,)

    @property
    def k_axis(self):
        return tuple(self.K_values) if self.K_values else (self.K,)

    def to_dict(self):
        out = asdict(self)
        for key in ("L_values", "K_values"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    def pursuit_config(self, k=None):
        cap = self.max_iterations or (self.K if k is None else k)
        return PursuitConfig(max_iterations=cap, residual_tol=self.residual_tol)


def gen_matrix(spec, index=0):
    """Dictionary for trial ``index``; a pure function of ``(spec, index)``."""
    L, N = spec.L, spec.N
    g = rng(spec.seed, MATRIX_STREAM, L, N, index)
    if spec.matrix_model == "gaussian_normalized":
        d = g.standard_normal((L, N)) / math.sqrt(L)
        if spec.normalize_columns:
            d = d / np.linalg.norm(d, axis=0)
        return d
    # orthonormal_perturbed: draw the basis and the noise unconditionally so that
    # epsilon only rescales a fixed perturbation.
    if N <= L:
        q, r = np.linalg.qr(g.standard_normal((L, L)))
        q = q * np.sign(np.diag(r))
        base = q[:, :N]
    else:
        q, r = np.linalg.qr(g.standard_normal((N, N)))
        q = q * np.sign(np.diag(r))
        # Orthonormal rows scaled to unit average column norm: a tight frame.
        base = q[:L, :] * math.sqrt(N / L)
    noise = g.standard_normal((L, N)) / math.sqrt(L)
    return base + spec.epsilon * noise


def _fill_block(g, model, d):
    while True:
        if model == "gaussian":
            v = g.standard_normal(d)
        elif model == "rademacher":
            v = g.choice([-1.0, 1.0], size=d)
        else:
            v = g.standard_normal(d)
            n = np.linalg.norm(v)
            if n < MIN_BLOCK_NORM:
                continue
            v = v / n
        if np.linalg.norm(v) >= MIN_BLOCK_NORM:
            return v


def coefficients_for(support, g, model):
    """Random nonzero coefficients on every block of ``support``."""
    d = support.layout.d
    return embed(np.concatenate([_fill_block(g, model, d) for _ in support] or [np.zeros(0)]), support)


def gen_block_sparse_signal(spec, index=0, k=None):
    """Block ``k``-sparse signal (``k`` defaults to ``spec.K``) with exactly ``k`` nonzero blocks."""
    k = spec.K if k is None else k
    if k > spec.M:
        raise InvalidSpec(f"K={k} exceeds M={spec.M}")
    g = rng(spec.seed, SIGNAL_STREAM, spec.N, spec.d, k, index)
    chosen = g.choice(spec.M, size=k, replace=False) + 1
    return coefficients_for(BlockSupport.of(spec.layout, chosen), g, spec.coeff_model)


@dataclass(frozen=True)
class TrialResult:
    exact: bool
    iterations: int
    residual_final: float
    support_recovered: bool
    selections: tuple = ()
    termination: str = ""


def score(x, trace, layout):
    """Compare a pursuit trace against the ground truth ``x`` in ``layout``."""
    xhat = trace.estimate.values
    xn = float(np.linalg.norm(x))
    err = float(np.linalg.norm(xhat - x))
    tol = EXACT_TOL * xn
    # Support decisions at the exactness scale; threshold zero for x = 0.
    truth = block_support(BlockSignal(layout, x), tol)
    found = block_support(BlockSignal(layout, xhat), tol)
    support_ok = truth.indices == found.indices
    return TrialResult(
        exact=bool(err <= tol and support_ok),
        iterations=trace.iterations,
        residual_final=trace.final.residual_norm(),
        support_recovered=bool(support_ok),
        selections=tuple(trace.selections),
        termination=trace.termination.value,
    )


def run_trial(d, x, layout, config=None, algorithms=("block_omp", "omp")):
    """Form ``y = D x`` and run each algorithm; returns ``{name: (TrialResult, trace)}``.

    OMP is allowed ``config.max_iterations * d`` iterations. The default
    stopping index is the block sparsity of ``x``.
    """
    d = as_matrix(d)
    x = x.values if isinstance(x, BlockSignal) else np.asarray(x, dtype=float)
    if config is None:
        config = PursuitConfig(max_iterations=max(1, mixed_l20_norm(BlockSignal(layout, x))))
    y = d @ x
    out = {}
    if "block_omp" in algorithms:
        trace = block_omp(d, y, layout, config)
        out["block_omp"] = (score(x, trace, layout), trace)
    if "omp" in algorithms:
        cfg = replace(config, max_iterations=config.max_iterations * layout.d)
        trace = omp(d, y, cfg)
        out["omp"] = (score(x, trace, BlockLayout(layout.n, 1)), trace)
    return out


@dataclass
class InvariantStats:
    """Worst observed values of the pursuit invariants over a set of runs."""

    runs: int = 0
    monotonicity_violations: int = 0
    duplicate_selections: int = 0
    max_orthogonality: float = 0.0  # max ||D_S^T r|| / ||y||
    max_proxy_gap: float = 0.0  # max ||D^T r - A^T A x|| / ||x||
    max_proxy_on_support: float = 0.0  # max ||h[j]||, j in S, relative to ||y||

    def ok(self, orth_tol=1e-10, proxy_tol=1e-9):
        return (
            self.monotonicity_violations == 0
            and self.duplicate_selections == 0
            and self.max_orthogonality <= orth_tol
            and self.max_proxy_gap <= proxy_tol
            and self.max_proxy_on_support <= orth_tol
        )


def check_pursuit_invariants(d, layout, x, trace, stats=None, proxy_identity=True):
    """Update ``stats`` with the invariants of one Block OMP trace for ``y = D x``."""
    stats = stats or InvariantStats()
    stats.runs += 1
    d = as_matrix(d)
    x = np.asarray(x, dtype=float)
    y = d @ x
    yn = float(np.linalg.norm(y)) or 1.0
    xn = float(np.linalg.norm(x)) or 1.0
    sel = trace.selections
    if len(set(sel)) != len(sel):
        stats.duplicate_selections += 1
    prev = float(np.linalg.norm(y))
    for l, step in enumerate(trace.steps):
        if step.residual_norm > prev * (1 + 1e-12) + 1e-15 * yn:
            stats.monotonicity_violations += 1
        prev = step.residual_norm
        chosen = BlockSupport.of(layout, sel[: l + 1])
        cols = chosen.columns()
        stats.max_orthogonality = max(stats.max_orthogonality, float(np.linalg.norm(d[:, cols].T @ step.residual)) / yn)
        before = BlockSupport.of(layout, sel[:l])
        if len(before):
            on = layout.block_norms(step.proxy)[np.asarray(before.indices) - 1]
            stats.max_proxy_on_support = max(stats.max_proxy_on_support, float(on.max()) / yn)
        if proxy_identity:
            a = orthogonalized_dictionary(d, layout, before)
            gap = float(np.linalg.norm(step.proxy - a.T @ (a @ x))) / xn
            stats.max_proxy_gap = max(stats.max_proxy_gap, gap)
    return stats


@dataclass
class Theorem1Report:
    certificate: object
    k: int
    supports_visited: int
    trials: int
    successes: int
    max_iterations_used: int
    asserted: bool
    invariants: InvariantStats = field(default_factory=InvariantStats)
    failures: list = field(default_factory=list)

    @property
    def success_rate(self):
        return self.successes / self.trials if self.trials else 1.0

    @property
    def passed(self):
        """True unless the certificate held and some trial failed."""
        if not self.asserted:
            return True
        return self.successes == self.trials and self.max_iterations_used <= self.k

    def to_dict(self):
        c = self.certificate
        return {
            "K": self.k,
            "order": c.order,
            "delta": c.delta,
            "threshold": c.theorem1_threshold,
            "certified": c.satisfied,
            "asserted": self.asserted,
            "supports_visited": self.supports_visited,
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "max_iterations_used": self.max_iterations_used,
            "passed": self.passed,
            "invariants": asdict(self.invariants),
            "failures": self.failures[:10],
        }


def verify_theorem1_exhaustive(d, layout, k, draws_per_support=20, config=None, seed=0,
                               coeff_model="gaussian", budget=DEFAULT_BUDGET, threads=1,
                               check_invariants=True):
    """Run Block OMP on every block ``k``-sparse support times ``draws_per_support`` coefficient fills.

    Recovery is asserted (``passed`` reflects it) only when the Block-RIP
    constant of order ``k + 1`` lies below ``1 / (2 sqrt(k + 1))``; otherwise
    the empirical rate is reported as-is.
    """
    d = as_matrix(d)
    cert = block_rip_constant_exact(d, layout, k + 1, budget=budget, threads=threads, signal_sparsity=k)
    if math.comb(layout.m, k) * draws_per_support > (budget or math.inf):
        raise BudgetExceeded(f"{math.comb(layout.m, k)} supports x {draws_per_support} draws exceed the budget")
    config = config or PursuitConfig(max_iterations=k)

    def one(item):
        s_index, subset = item
        support = BlockSupport(layout, subset)
        results = []
        for r in range(draws_per_support):
            x = coefficients_for(support, rng(seed, THEOREM_STREAM, k, s_index, r), coeff_model)
            res, trace = run_trial(d, x, layout, config, algorithms=("block_omp",))["block_omp"]
            results.append((subset, r, x, res, trace))
        return results

    items = list(enumerate(combinations(range(1, layout.m + 1), k)))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(one, items))
    else:
        batches = [one(it) for it in items]

    report = Theorem1Report(cert, k, len(items), 0, 0, 0, asserted=cert.satisfied)
    for batch in batches:
        for subset, r, x, res, trace in batch:
            report.trials += 1
            report.successes += res.exact
            report.max_iterations_used = max(report.max_iterations_used, res.iterations)
            if not res.exact:
                report.failures.append({"support": list(subset), "draw": r, "selections": list(res.selections)})
            if check_invariants:
                check_pursuit_invariants(d, layout, x.values, trace, report.invariants)
    return report


def calibrate_epsilon(spec, order, target, index=0, hi=1.0, iterations=40, budget=DEFAULT_BUDGET):
    """Largest perturbation ``epsilon`` (by bisection) keeping the order-``order``
    Block-RIP constant of the ``orthonormal_perturbed`` matrix below ``target``.

    Returns ``(epsilon, certificate)``.
    """
    if spec.matrix_model != "orthonormal_perturbed":
        raise InvalidSpec("epsilon calibration needs matrix_model='orthonormal_perturbed'")

    def cert(eps):
        return block_rip_constant_exact(gen_matrix(replace(spec, epsilon=eps), index), spec.layout, order,
                                        budget=budget)

    lo_cert = cert(0.0)
    if not lo_cert.delta < target:
        raise InvalidSpec("the unperturbed matrix already misses the target")
    lo = 0.0
    while cert(hi).delta < target:
        lo, hi = hi, 2 * hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if cert(mid).delta < target:
            lo = mid
        else:
            hi = mid
    return lo, cert(lo)


@dataclass
class LemmaSuite:
    reports: dict
    certificates: dict

    @property
    def passed(self):
        return all(r.passed for r in self.reports.values())


def lemma_suite(d, layout, k, seed=0, lemma1_pairs=10_000, corollary1_signals=1_000, lemma3_draws=10,
                lemma4_signals=100_000, identification_draws=10, budget=DEFAULT_BUDGET, threads=1):
    """Check every intermediate inequality numerically on ``d`` with exact constants.

    Block-RIP constants are enumerated at orders ``1 .. k + 1``; each check
    uses the constant at the order its hypothesis requires.
    """
    d = as_matrix(d)
    m = layout.m
    top = min(k + 1, m)
    certs = {o: block_rip_constant_exact(d, layout, o, budget=budget, threads=threads) for o in range(1, top + 1)}
    delta = {o: c.delta for o, c in certs.items()}
    blocks = np.arange(1, m + 1)
    reports = {}

    # Near-orthogonality: disjoint block-sparse pairs; order max(||u+v||_{2,0}, ||u-v||_{2,0}).
    rep = LemmaReport("L1")
    g = rng(seed, LEMMA_STREAM, 1)
    for _ in range(lemma1_pairs):
        total = int(g.integers(2, top + 1)) if top >= 2 else 1
        su = int(g.integers(1, total)) if total >= 2 else 1
        chosen = g.choice(blocks, size=total, replace=False)
        u = coefficients_for(BlockSupport.of(layout, chosen[:su]), g, "gaussian")
        v = coefficients_for(BlockSupport.of(layout, chosen[su:]), g, "gaussian") if total > su else BlockSignal.zeros(layout)
        order = max(mixed_l20_norm(BlockSignal(layout, u.values + v.values)),
                    mixed_l20_norm(BlockSignal(layout, u.values - v.values)), 1)
        verify_lemma1(d, layout, u, v, delta[order], rep)
    reports["L1"] = rep

    # Restricted extremes of A for every support below the top order.
    rep = LemmaReport("L2")
    for size in range(1, top):
        for subset in combinations(range(1, m + 1), size):
            verify_lemma2(d, layout, BlockSupport(layout, subset), top - size, delta[top], budget, rep)
    reports["L2"] = rep

    # Per-block Gram gap: sparsity s <= k, every block j.
    rep = LemmaReport("C1")
    g = rng(seed, LEMMA_STREAM, 3)
    for _ in range(corollary1_signals):
        s = int(g.integers(1, top)) if top >= 2 else 1
        support = BlockSupport.of(layout, g.choice(blocks, size=s, replace=False))
        x = coefficients_for(support, g, "gaussian")
        verify_corollary1(d, layout, x, None, delta[min(s + 1, top)], rep)
    reports["C1"] = rep

    # Proxy gap and identification over every (Lambda, supp) pair with |Lambda| + |supp| + 1 <= top.
    l3 = LemmaReport("L3")
    c2 = LemmaReport("C2")
    g = rng(seed, LEMMA_STREAM, 5)
    for a_size in range(0, top - 1):
        for lam in combinations(range(1, m + 1), a_size):
            support = BlockSupport(layout, lam)
            a = orthogonalized_dictionary(d, layout, support)
            rest = support.complement().indices
            for s in range(1, top - a_size):
                dl = delta[a_size + s + 1]
                for supp in combinations(rest, s):
                    sb = BlockSupport(layout, supp)
                    for _ in range(max(lemma3_draws, identification_draws)):
                        x = coefficients_for(sb, g, "gaussian")
                        verify_lemma3(d, layout, support, x, dl, l3, a=a)
                        h = a.T @ (a @ x.values)
                        res = check_identification(x, h, support, dl)
                        if res.skipped:
                            c2.skipped += 1
                            continue
                        c2.trials += 1
                        if not res.held:
                            c2.failures += 1
                        if res.margin > c2.max_violation:
                            c2.max_violation = res.margin
                            c2.witness = {"support": list(lam), "x": x.values.tolist(), "delta": dl}
    reports["L3"] = l3
    reports["C2"] = c2

    # The block-norm bound is layout-only; sweep assorted (M, d) plus the instance layout.
    rep = LemmaReport("L4", tol=1e-12)
    g = rng(seed, LEMMA_STREAM, 6)
    layouts = [layout] + [BlockLayout.from_blocks(mm, dd) for mm in (1, 3, 8) for dd in (1, 2, 5)]
    per = lemma4_signals // len(layouts)
    for i, lay in enumerate(layouts):
        n = per + (lemma4_signals - per * len(layouts) if i == 0 else 0)
        vals = g.standard_normal((n, lay.n))
        # Zero out a random subset of blocks, keeping at least one.
        keep = g.random((n, lay.m)) < 0.5
        keep[np.arange(n), g.integers(0, lay.m, size=n)] = True
        vals = (vals.reshape(n, lay.m, lay.d) * keep[:, :, None]).reshape(n, lay.n)
        lemma4_batch(vals, lay, rep)
    reports["L4"] = rep

    return LemmaSuite(reports, certs)


@dataclass(frozen=True)
class SweepCell:
    L: int
    K: int
    d: int
    algorithm: str
    trials: int
    successes: int
    mean_iterations: float
    max_success_iterations: int

    @property
    def success_rate(self):
        return self.successes / self.trials if self.trials else 0.0


@dataclass
class SweepGrid:
    L_values: tuple
    K_values: tuple
    d: int
    cells: list

    def cell(self, L, K, algorithm):
        for c in self.cells:
            if (c.L, c.K, c.algorithm) == (L, K, algorithm):
                return c
        raise KeyError((L, K, algorithm))


def _sweep_trial(args):
    spec, index = args
    d = gen_matrix(spec, index)
    x = gen_block_sparse_signal(spec, index)
    out = run_trial(d, x, spec.layout, spec.pursuit_config())
    return {name: res for name, (res, _) in out.items()}


def phase_sweep(spec, threads=1):
    """Success rate and mean iterations of Block OMP and OMP on every ``(L, K)`` cell."""
    cells = []
    jobs = []
    for L in sorted(spec.l_axis):
        for K in sorted(spec.k_axis):
            cell_spec = replace(spec, L=L, K=K, L_values=None, K_values=None)
            jobs.append((L, K, [(cell_spec, i) for i in range(spec.trials)]))
    flat = [job for _, _, js in jobs for job in js]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_trial, flat))
    else:
        results = [_sweep_trial(j) for j in flat]

    pos = 0
    for L, K, js in jobs:
        chunk = results[pos : pos + len(js)]
        pos += len(js)
        for name in ("block_omp", "omp"):
            rs = [r[name] for r in chunk]
            ok = [r.iterations for r in rs if r.exact]
            cells.append(SweepCell(
                L=L, K=K, d=spec.d, algorithm=name, trials=len(rs), successes=len(ok),
                mean_iterations=float(np.mean([r.iterations for r in rs])) if rs else 0.0,
                max_success_iterations=max(ok) if ok else 0,
            ))
    return SweepGrid(tuple(sorted(spec.l_axis)), tuple(sorted(spec.k_axis)), spec.d, cells)
