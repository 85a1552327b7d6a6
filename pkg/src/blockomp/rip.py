"""Exact RIP / Block-RIP constants by support enumeration, and numerical checks
of the inequalities that lead to the Block OMP recovery guarantee.

For a fixed support ``S`` the ratio ``||Dx||^2 / ||x||^2`` over ``x`` supported
on ``S`` ranges exactly over the spectrum of ``D_S^T D_S``. Enumerating every
``K``-subset of blocks therefore yields the isometry constant itself, not a
bound, at the cost of ``C(M, K)`` small symmetric eigenproblems.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, islice

import numpy as np

from .blocks import (
    BlockLayout,
    BlockSignal,
    BlockSupport,
    block_support,
    mixed_l2inf_norm,
    mixed_l20_norm,
    submatrix_for_support,
)
from .errors import BudgetExceeded, InvalidInput, LayoutMismatch, SupportOverlap, ZeroSignal
from .numeric import EigenExtremes, as_matrix, project_complement

DEFAULT_BUDGET = 2_000_000
LEMMA_TOL = 1e-10
_CHUNK = 4096


def theorem1_threshold(k):
    """Block-RIP constant below which Block OMP recovers every block ``k``-sparse signal."""
    if k < 1:
        raise InvalidInput(f"K must be >= 1, got {k}")
    return _threshold(k)


def _threshold(k):
    return 1.0 / (2.0 * math.sqrt(k + 1))


def omp_threshold(k, d):
    """RIP constant required by the classical OMP analysis, treating the signal as ``Kd``-sparse."""
    if k < 1 or d < 1:
        raise InvalidInput(f"K and d must be >= 1, got K={k}, d={d}")
    return 1.0 / (3.0 * math.sqrt(k * d))


@dataclass(frozen=True)
class RipCertificate:
    order: int
    block_d: int
    delta: float
    worst_support: BlockSupport
    extremes_at_worst: EigenExtremes
    theorem1_threshold: float
    supports_visited: int

    @property
    def satisfied(self):
        return self.delta < self.theorem1_threshold


def _check_budget(count, budget):
    if budget is not None and count > budget:
        raise BudgetExceeded(f"{count} supports exceed the enumeration budget of {budget}")


def _chunked(iterable, size):
    it = iter(iterable)
    while chunk := list(islice(it, size)):
        yield chunk


def _chunk_extremes(gram, layout, subsets):
    """Batched spectra of principal sub-Grams; returns (lmin, lmax) arrays."""
    cols = np.stack([layout.columns(s) for s in subsets])
    sub = gram[cols[:, :, None], cols[:, None, :]]
    w = np.linalg.eigvalsh(sub)
    return w[:, 0], w[:, -1]


def _enumerate(gram, layout, subsets, threads=1):
    """Scan subsets in the given order; returns (global lmin, global lmax, worst subset, its extremes, count).

    The worst subset is the first one attaining the maximal deviation from 1.
    """
    chunks = list(_chunked(subsets, _CHUNK))
    if not chunks:
        return None
    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _chunk_extremes(gram, layout, c), chunks))
    else:
        results = [_chunk_extremes(gram, layout, c) for c in chunks]

    lmin = np.concatenate([r[0] for r in results])
    lmax = np.concatenate([r[1] for r in results])
    dev = np.maximum(lmax - 1.0, 1.0 - lmin)
    k = int(np.argmax(dev))
    worst = chunks[k // _CHUNK][k % _CHUNK]
    return float(lmin.min()), float(lmax.max()), worst, EigenExtremes(float(lmin[k]), float(lmax[k])), lmin.size


def block_rip_constant_exact(d, layout, k, budget=DEFAULT_BUDGET, threads=1, signal_sparsity=None):
    """Exact Block-RIP constant of order ``k`` by enumerating all ``k``-subsets of blocks.

    Parameters
    ----------
    d : ndarray of shape (L, N)
    layout : BlockLayout
    k : int
        Order, i.e. the number of nonzero blocks.
    budget : int or None
        Maximum number of supports to visit.
    signal_sparsity : int, optional
        Sparsity of the signals the certificate is meant for; the recovery
        threshold is ``1 / (2 sqrt(signal_sparsity + 1))``. Defaults to ``k - 1``.

    Returns
    -------
    RipCertificate
    """
    d = as_matrix(d)
    if d.shape[1] != layout.n:
        raise LayoutMismatch(f"matrix has {d.shape[1]} columns, layout expects N={layout.n}")
    if not 1 <= k <= layout.m:
        raise InvalidInput(f"order must lie in 1..{layout.m}, got {k}")
    _check_budget(math.comb(layout.m, k), budget)

    gram = d.T @ d
    subsets = combinations(range(1, layout.m + 1), k)
    _, _, worst, ext, count = _enumerate(gram, layout, subsets, threads)
    ks = k - 1 if signal_sparsity is None else signal_sparsity
    return RipCertificate(
        order=k,
        block_d=layout.d,
        delta=ext.deviation,
        worst_support=BlockSupport(layout, worst),
        extremes_at_worst=ext,
        theorem1_threshold=_threshold(ks),
        supports_visited=count,
    )


def rip_constant_exact(d, k, budget=DEFAULT_BUDGET, threads=1, signal_sparsity=None):
    """Standard RIP constant of order ``k`` (unit blocks)."""
    d = as_matrix(d)
    return block_rip_constant_exact(d, BlockLayout(d.shape[1], 1), k, budget, threads, signal_sparsity)


def orthogonalized_dictionary(d, layout, support):
    """``P_perp D``: every column of ``d`` projected off the span of the selected blocks."""
    d = as_matrix(d)
    return project_complement(submatrix_for_support(d, support), d)


def restricted_rip_extremes_of_A(d, layout, support, kp, budget=DEFAULT_BUDGET, threads=1):
    """Global Gram extremes of ``A = P_perp D`` over all ``kp``-block supports disjoint from ``support``."""
    rest = support.complement().indices
    if kp < 1 or kp > len(rest):
        raise InvalidInput(f"order {kp} not available with {len(rest)} free blocks")
    _check_budget(math.comb(len(rest), kp), budget)
    a = orthogonalized_dictionary(d, layout, support)
    lmin, lmax, *_ = _enumerate(a.T @ a, layout, combinations(rest, kp), threads)
    return EigenExtremes(lmin, lmax)


@dataclass
class LemmaReport:
    """Worst case of one inequality over a set of trials.

    ``max_violation`` is the largest ``lhs - rhs`` observed (for ``>=``
    inequalities, ``rhs - lhs``); the inequality holds in a trial when its
    violation is at most ``tol * (1 + |rhs|)``.
    """

    lemma_id: str
    trials: int = 0
    max_violation: float = -math.inf
    witness: dict = field(default_factory=dict)
    failures: int = 0
    skipped: int = 0
    tol: float = LEMMA_TOL

    @property
    def passed(self):
        return self.failures == 0

    def record(self, lhs, rhs, witness=None, ge=False):
        violation = float(rhs - lhs) if ge else float(lhs - rhs)
        self.trials += 1
        if violation > self.tol * (1.0 + abs(rhs)):
            self.failures += 1
        if violation > self.max_violation:
            self.max_violation = violation
            self.witness = witness() if callable(witness) else (witness or {})
        return self

    def merge(self, other):
        if self.lemma_id != other.lemma_id:
            raise InvalidInput("cannot merge reports of different lemmas")
        out = LemmaReport(self.lemma_id, tol=self.tol)
        out.trials = self.trials + other.trials
        out.failures = self.failures + other.failures
        out.skipped = self.skipped + other.skipped
        best = self if self.max_violation >= other.max_violation else other
        out.max_violation, out.witness = best.max_violation, best.witness
        return out

    def to_dict(self):
        return {
            "lemma": self.lemma_id,
            "trials": self.trials,
            "skipped": self.skipped,
            "failures": self.failures,
            "max_violation": self.max_violation if self.trials else None,
            "passed": self.passed,
            "witness": self.witness,
        }


def _signal(layout, values):
    return values if isinstance(values, BlockSignal) else BlockSignal(layout, values)


def verify_lemma1(d, layout, u, v, delta, report=None):
    """Near-orthogonality: ``|<Du, Dv> - <u, v>| <= delta ||u|| ||v||``."""
    u, v = _signal(layout, u), _signal(layout, v)
    d = as_matrix(d)
    lhs = abs(float((d @ u.values) @ (d @ v.values) - u.values @ v.values))
    rhs = delta * u.norm() * v.norm()
    report = report or LemmaReport("L1")
    return report.record(lhs, rhs, lambda: {"u": u.values.tolist(), "v": v.values.tolist(), "delta": delta})


def verify_lemma2(d, layout, support, kp, delta, budget=DEFAULT_BUDGET, report=None):
    """Restricted isometry of ``P_perp D`` on supports disjoint from ``support``.

    Checks both ``lambda_min >= 1 - delta/(1-delta)`` and ``lambda_max <= 1 + delta``.
    The bounds need ``delta < 1``; otherwise the trial is counted as skipped.
    """
    report = report or LemmaReport("L2")
    if not delta < 1.0:
        report.skipped += 1
        return report
    ext = restricted_rip_extremes_of_A(d, layout, support, kp, budget)
    w = {"support": list(support.indices), "order": kp, "delta": delta,
         "lambda_min": ext.lambda_min, "lambda_max": ext.lambda_max}
    report.record(ext.lambda_min, 1.0 - delta / (1.0 - delta), w, ge=True)
    report.record(ext.lambda_max, 1.0 + delta, w)
    return report


def corollary1_gaps(d, layout, x):
    """Per-block ``||(D^T D x)[j] - x[j]||_2`` for every block ``j``."""
    d = as_matrix(d)
    x = _signal(layout, x)
    return layout.block_norms(d.T @ (d @ x.values) - x.values)


def verify_corollary1(d, layout, x, j, delta, report=None):
    """``||(D^T D x)[j] - x[j]|| <= delta ||x||`` for one block ``j`` (or all when ``j`` is None)."""
    x = _signal(layout, x)
    gaps = corollary1_gaps(d, layout, x)
    report = report or LemmaReport("C1")
    blocks = range(1, layout.m + 1) if j is None else [j]
    rhs = delta * x.norm()
    for b in blocks:
        report.record(gaps[b - 1], rhs, lambda: {"x": x.values.tolist(), "j": b, "delta": delta})
    return report


def lemma3_proxy(d, layout, support, x):
    """``h = A^T A x`` with ``A = P_perp D`` for the given support."""
    a = orthogonalized_dictionary(d, layout, support)
    return a.T @ (a @ _signal(layout, x).values)


def verify_lemma3(d, layout, support, x, delta, report=None, a=None):
    """``||h[j] - x[j]|| <= delta/(1-delta) ||x||`` for every block ``j`` outside ``support``.

    Skipped (and counted as such) unless ``delta < 1``.
    """
    x = _signal(layout, x)
    if not block_support(x).isdisjoint(support):
        raise SupportOverlap(f"signal support {block_support(x).indices} meets {support.indices}")
    report = report or LemmaReport("L3")
    if not delta < 1.0:
        report.skipped += 1
        return report
    if a is None:
        a = orthogonalized_dictionary(d, layout, support)
    h = a.T @ (a @ x.values)
    gaps = layout.block_norms(h - x.values)
    rhs = delta / (1.0 - delta) * x.norm()
    for j in support.complement():
        report.record(gaps[j - 1], rhs, lambda: {"support": list(support.indices), "x": x.values.tolist(),
                                                 "j": j, "delta": delta})
    return report


@dataclass(frozen=True)
class IdentificationCheck:
    """Outcome of the identification test.

    ``margin`` is ``max_{j off supp} ||h[j]|| - max_{j in supp} ||h[j]||``;
    a negative margin means the largest proxy block lies on the support.
    """

    held: bool
    skipped: bool
    margin: float

    def __bool__(self):
        return self.held


def check_identification(x, h, support, delta):
    """If ``||x||_{2,inf} > 2 delta/(1-delta) ||x||``, the largest block of ``h`` must lie in ``supp_B(x)``.

    When the hypothesis does not hold the check passes vacuously and is
    marked as skipped.
    """
    layout = x.layout
    h = _signal(layout, h)
    if not delta < 1.0 or x.norm() == 0.0 or not mixed_l2inf_norm(x) > 2.0 * delta / (1.0 - delta) * x.norm():
        return IdentificationCheck(True, True, math.nan)
    supp = block_support(x)
    norms = h.block_norms()
    on = np.zeros(layout.m, dtype=bool)
    on[np.asarray(supp.indices) - 1] = True
    off_max = norms[~on].max() if (~on).any() else -math.inf
    margin = float(off_max - norms[on].max())
    j = int(np.argmax(norms)) + 1
    return IdentificationCheck(j in supp, False, margin)


def verify_lemma4(x, report=None):
    """``||x||_{2,inf} >= ||x||_2 / sqrt(||x||_{2,0})`` (relative tolerance 1e-12)."""
    if x.norm() == 0.0:
        raise ZeroSignal("the inequality needs a nonzero signal")
    report = report or LemmaReport("L4", tol=1e-12)
    lhs = mixed_l2inf_norm(x)
    rhs = x.norm() / math.sqrt(mixed_l20_norm(x))
    return report.record(lhs, rhs, lambda: {"x": x.values.tolist()}, ge=True)


def lemma4_batch(values, layout, report=None):
    """Vectorised largest-block-norm bound over the rows of ``values``."""
    values = np.asarray(values, dtype=float)
    norms = np.linalg.norm(values.reshape(values.shape[0], layout.m, layout.d), axis=2)
    total = np.linalg.norm(values, axis=1)
    tol = 1e-12 * (1.0 + total)
    count = np.count_nonzero(norms > tol[:, None], axis=1)
    if np.any(count == 0):
        raise ZeroSignal("the inequality needs nonzero signals")
    lhs = norms.max(axis=1)
    rhs = total / np.sqrt(count)
    report = report or LemmaReport("L4", tol=1e-12)
    viol = rhs - lhs
    worst = int(np.argmax(viol))
    report.trials += values.shape[0]
    report.failures += int(np.count_nonzero(viol > report.tol * (1.0 + rhs)))
    if viol[worst] > report.max_violation:
        report.max_violation = float(viol[worst])
        report.witness = {"x": values[worst].tolist()}
    return report
