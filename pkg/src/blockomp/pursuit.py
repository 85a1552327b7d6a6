"""Block orthogonal matching pursuit as an inspectable state machine.

Each iteration correlates the residual with the dictionary, adds the block
whose correlation has the largest l2 norm, refits by least squares on the
accumulated support and updates the residual. Conventional OMP is the
``d = 1`` case.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .blocks import BlockLayout, BlockSignal, BlockSupport, embed, submatrix_for_support
from .errors import AllForbidden, InvalidInput, LayoutMismatch, RankDeficient, ResidualConverged
from .numeric import as_matrix, as_vector, solve_least_squares


class Termination(str, Enum):
    RESIDUAL_CONVERGED = "ResidualConverged"
    MAX_ITERATIONS = "MaxIterations"
    RANK_LIMIT = "RankLimit"


@dataclass(frozen=True)
class PursuitConfig:
    """Stopping rules.

    ``max_iterations`` is the iteration cap of the algorithm. The run also
    stops early once ``||r|| <= residual_tol * ||y||``.
    """

    max_iterations: int
    residual_tol: float = 1e-10
    zero_tol: float = 1e-12

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidInput(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if self.residual_tol < 0 or self.zero_tol < 0:
            raise InvalidInput("tolerances must be non-negative")


@dataclass(frozen=True, eq=False)
class PursuitState:
    iteration: int
    support: BlockSupport
    estimate: BlockSignal
    residual: np.ndarray
    proxy: np.ndarray = None
    # Selection order; ``support`` itself is kept sorted.
    order: tuple = ()

    @classmethod
    def initial(cls, y, layout):
        y = as_vector(y)
        return cls(0, BlockSupport(layout), BlockSignal.zeros(layout), y.copy())

    def residual_norm(self):
        return float(np.linalg.norm(self.residual))


@dataclass(frozen=True)
class PursuitStep:
    chosen_block: int
    residual_norm: float
    proxy_block_norms: np.ndarray = field(repr=False)
    # Proxy used for this selection and the residual after the refit.
    proxy: np.ndarray = field(default=None, repr=False)
    residual: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class PursuitTrace:
    steps: list
    final: PursuitState
    termination: Termination

    @property
    def selections(self):
        return [s.chosen_block for s in self.steps]

    @property
    def iterations(self):
        return len(self.steps)

    @property
    def estimate(self):
        return self.final.estimate


def select_block(h, forbidden=None):
    """Index of the block of ``h`` with the largest l2 norm, skipping ``forbidden``.

    Ties go to the smallest index.
    """
    norms = h.block_norms()
    if forbidden is not None and len(forbidden):
        norms = norms.copy()
        norms[np.asarray(forbidden.indices) - 1] = -np.inf
        if np.all(np.isneginf(norms)):
            raise AllForbidden("every block is already selected")
    # argmax returns the first maximiser.
    return int(np.argmax(norms)) + 1


def pursuit_step(d, y, state, layout=None, residual_tol=1e-10):
    """Advance one iteration: correlate, select, refit, update the residual."""
    layout = layout or state.support.layout
    d = as_matrix(d)
    y = as_vector(y)
    if state.residual_norm() <= residual_tol * np.linalg.norm(y):
        raise ResidualConverged("residual is already zero to tolerance")
    rows = d.shape[0]
    if (len(state.support) + 1) * layout.d > rows:
        raise RankDeficient(f"support of {len(state.support) + 1} blocks of length {layout.d} exceeds {rows} rows")

    h = d.T @ state.residual
    h_signal = BlockSignal(layout, h)
    j = select_block(h_signal, state.support)

    order = state.order + (j,)
    support = BlockSupport.of(layout, order)
    coeffs = solve_least_squares(submatrix_for_support(d, support), y)
    estimate = embed(coeffs, support)
    residual = y - d @ estimate.values
    return PursuitState(state.iteration + 1, support, estimate, residual, h, order)


def block_omp(d, y, layout, config):
    """Run Block OMP until the residual vanishes, the iteration cap, or rank exhaustion."""
    d = as_matrix(d)
    y = as_vector(y)
    if d.shape[1] != layout.n:
        raise LayoutMismatch(f"matrix has {d.shape[1]} columns, layout expects N={layout.n}")
    if d.shape[0] != y.size:
        raise LayoutMismatch(f"measurement length {y.size} does not match {d.shape[0]} rows")

    state = PursuitState.initial(y, layout)
    stop = config.residual_tol * np.linalg.norm(y)
    steps = []
    termination = Termination.MAX_ITERATIONS
    while True:
        if state.residual_norm() <= stop:
            termination = Termination.RESIDUAL_CONVERGED
            break
        if state.iteration >= config.max_iterations:
            break
        try:
            state = pursuit_step(d, y, state, layout, config.residual_tol)
        except (RankDeficient, AllForbidden):
            termination = Termination.RANK_LIMIT
            break
        steps.append(
            PursuitStep(
                state.order[-1],
                state.residual_norm(),
                layout.block_norms(state.proxy),
                state.proxy,
                state.residual,
            )
        )
    return PursuitTrace(steps, state, termination)


def omp(d, y, config):
    """Conventional OMP: Block OMP with unit blocks."""
    d = as_matrix(d)
    return block_omp(d, y, BlockLayout(d.shape[1], 1), config)
