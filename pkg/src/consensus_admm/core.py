"""Domain types shared by every part of the solver.

Everything here is a small value object.  Arrays stored on the objects are
treated as read-only once the object is built; the solver never mutates a
:class:`Shard` or a problem description in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

__all__ = [
    "LOSS_KINDS",
    "SPARSITY_PARTS",
    "STRUCTURE_PARTS",
    "FAMILY_NAMES",
    "InvalidProblemError",
    "PartitionError",
    "LossKind",
    "GroupMap",
    "PenaltyFamily",
    "ConstraintSet",
    "Partition",
    "SolverOptions",
    "ProblemSpec",
    "Shard",
    "CentralState",
    "LocalState",
    "SolverState",
    "IterationRecord",
    "SolveReport",
    "balanced_partition",
    "make_shards",
    "init_feasible",
]

LOSS_KINDS = ("least_squares", "quantile", "square_root", "huber")
SPARSITY_PARTS = ("l1", "scad", "mcp")
STRUCTURE_PARTS = ("ridge", "group", "fused")

# (sparsity, structure) -> conventional short name
FAMILY_NAMES = {
    ("l1", "ridge"): "enet",
    ("l1", "group"): "sgla",
    ("l1", "fused"): "sfla",
    ("scad", "ridge"): "snet",
    ("scad", "group"): "scgl",
    ("scad", "fused"): "sctv",
    ("mcp", "ridge"): "mnet",
    ("mcp", "group"): "mcgl",
    ("mcp", "fused"): "mctv",
}
_FAMILY_PARTS = {v: k for k, v in FAMILY_NAMES.items()}

DEFAULT_A = {"scad": 3.7, "mcp": 3.0}


class InvalidProblemError(ValueError):
    """Raised when a problem description violates its invariants."""


class PartitionError(InvalidProblemError):
    """Raised when rows cannot be split into the requested number of shards."""


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossKind:
    """Which data-fit loss to use, with its parameters.

    ``huber_variant`` selects between the conventional Huber loss
    (quadratic for ``|r| <= delta``) and the ``"table"`` orientation whose
    quadratic branch is gated on ``r >= delta``.  Both variants come with
    an exact proximal map; see :func:`consensus_admm.prox.prox_loss`.
    """

    kind: str = "least_squares"
    tau: Optional[float] = None
    delta: Optional[float] = None
    huber_variant: str = "standard"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidProblemError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.kind == "quantile":
            if self.tau is None or not (0.0 < float(self.tau) < 1.0):
                raise InvalidProblemError(f"quantile loss needs tau in (0, 1), got {self.tau!r}")
        if self.kind == "huber":
            if self.delta is None or not float(self.delta) > 0.0:
                raise InvalidProblemError(f"huber loss needs delta > 0, got {self.delta!r}")
            if self.huber_variant not in ("standard", "table"):
                raise InvalidProblemError(f"huber_variant must be 'standard' or 'table', got {self.huber_variant!r}")

    @classmethod
    def least_squares(cls) -> "LossKind":
        return cls("least_squares")

    @classmethod
    def quantile(cls, tau: float) -> "LossKind":
        return cls("quantile", tau=float(tau))

    @classmethod
    def square_root(cls) -> "LossKind":
        return cls("square_root")

    @classmethod
    def huber(cls, delta: float, variant: str = "standard") -> "LossKind":
        return cls("huber", delta=float(delta), huber_variant=variant)

    @property
    def separable(self) -> bool:
        return self.kind != "square_root"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.tau is not None:
            out["tau"] = self.tau
        if self.delta is not None:
            out["delta"] = self.delta
            out["huber_variant"] = self.huber_variant
        return out


# ---------------------------------------------------------------------------
# Penalty
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupMap:
    """Assignment of the ``p`` coefficients to ``G`` disjoint groups.

    Labels run from 1 to ``G``.  Groups need not be contiguous.
    """

    assignment: np.ndarray
    _index: tuple = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.size == 0:
            raise InvalidProblemError("group assignment must be a nonempty 1-d sequence")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(np.equal(np.mod(a, 1), 0)):
                raise InvalidProblemError("group labels must be integers")
            a = a.astype(np.int64)
        labels = np.unique(a)
        G = int(labels.size)
        if labels[0] != 1 or labels[-1] != G:
            raise InvalidProblemError(f"group labels must cover 1..G with every group nonempty; got labels {labels.tolist()}")
        a = a.astype(np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "_index", tuple(np.flatnonzero(a == g) for g in range(1, G + 1)))

    @property
    def G(self) -> int:
        return len(self._index)

    @property
    def p(self) -> int:
        return int(self.assignment.size)

    def indices(self) -> tuple:
        """Index arrays, one per group, in label order."""
        return self._index

    @classmethod
    def contiguous(cls, p: int, G: int) -> "GroupMap":
        """``G`` equal contiguous groups; ``p`` must be divisible by ``G``."""
        if G < 1 or p % G:
            raise InvalidProblemError(f"cannot split p={p} into {G} equal contiguous groups")
        return cls(np.repeat(np.arange(1, G + 1), p // G))

    def __eq__(self, other):
        return isinstance(other, GroupMap) and np.array_equal(self.assignment, other.assignment)

    def __hash__(self):
        return hash(self.assignment.tobytes())


@dataclass(frozen=True)
class PenaltyFamily:
    """Combined regularizer: a sparsity part plus a structure part.

    ``structure`` is ``"ridge"`` (lambda2 * ||b||_2^2), ``"group"``
    (lambda2 * sum_g ||b_g||_2) or ``"fused"`` (lambda2 * ||F beta||_1, the
    total-variation penalty).  ``sparsity`` is ``"l1"``, ``"scad"`` or
    ``"mcp"``; the nonconvex parts are handled by local linear approximation.
    """

    sparsity: str = "l1"
    structure: str = "ridge"
    lambda1: float = 0.0
    lambda2: float = 0.0
    a: Optional[float] = None
    groups: Optional[GroupMap] = None

    def __post_init__(self):
        if self.sparsity not in SPARSITY_PARTS:
            raise InvalidProblemError(f"unknown sparsity part {self.sparsity!r}")
        if self.structure not in STRUCTURE_PARTS:
            raise InvalidProblemError(f"unknown structure part {self.structure!r}")
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise InvalidProblemError("lambda1 and lambda2 must be nonnegative")
        if self.sparsity in DEFAULT_A:
            if self.a is None:
                object.__setattr__(self, "a", DEFAULT_A[self.sparsity])
            lower = 2.0 if self.sparsity == "scad" else 1.0
            if not self.a > lower:
                raise InvalidProblemError(f"{self.sparsity} needs a > {lower:g}, got {self.a}")
        if self.structure == "group" and self.groups is None:
            raise InvalidProblemError("group structure requires a GroupMap")

    @classmethod
    def from_name(cls, name: str, lambda1: float = 0.0, lambda2: float = 0.0,
                  groups: Optional[GroupMap] = None, a: Optional[float] = None) -> "PenaltyFamily":
        """Build a family from its short name (``enet``, ``sgla``, ``sctv``, ...)."""
        try:
            sparsity, structure = _FAMILY_PARTS[name]
        except KeyError:
            raise InvalidProblemError(f"unknown penalty family {name!r}; expected one of {sorted(_FAMILY_PARTS)}") from None
        return cls(sparsity, structure, float(lambda1), float(lambda2), a, groups)

    @property
    def name(self) -> str:
        return FAMILY_NAMES[(self.sparsity, self.structure)]

    @property
    def convex(self) -> bool:
        return self.sparsity == "l1"

    @property
    def fused(self) -> bool:
        return self.structure == "fused"

    def aux_dim(self, p: int) -> int:
        """Length of the auxiliary variable ``b = G beta``."""
        return p - 1 if self.fused else p

    def as_convex(self) -> "PenaltyFamily":
        """The same family with the sparsity part replaced by plain l1."""
        return replace(self, sparsity="l1", a=None)

    def with_lambdas(self, lambda1: float, lambda2: Optional[float] = None) -> "PenaltyFamily":
        return replace(self, lambda1=float(lambda1),
                       lambda2=self.lambda2 if lambda2 is None else float(lambda2))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"family": self.name, "lambda1": self.lambda1, "lambda2": self.lambda2}
        if self.a is not None:
            out["a"] = self.a
        if self.groups is not None:
            out["groups"] = self.groups.assignment.tolist()
        return out


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Convex set the central coefficient vector is projected onto."""

    kind: str = "none"
    lo: Any = None
    hi: Any = None

    def __post_init__(self):
        if self.kind not in ("none", "nonnegative", "simplex", "box"):
            raise InvalidProblemError(f"unknown constraint {self.kind!r}")
        if self.kind == "box":
            if self.lo is None or self.hi is None:
                raise InvalidProblemError("box constraint needs lo and hi")
            if np.any(np.asarray(self.lo, dtype=float) > np.asarray(self.hi, dtype=float)):
                raise InvalidProblemError("box constraint needs lo <= hi componentwise")

    @classmethod
    def none(cls) -> "ConstraintSet":
        return cls("none")

    @classmethod
    def nonnegative(cls) -> "ConstraintSet":
        return cls("nonnegative")

    @classmethod
    def simplex(cls) -> "ConstraintSet":
        return cls("simplex")

    @classmethod
    def box(cls, lo, hi) -> "ConstraintSet":
        return cls("box", lo, hi)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "box":
            out["lo"] = np.asarray(self.lo, dtype=float).tolist()
            out["hi"] = np.asarray(self.hi, dtype=float).tolist()
        return out


# ---------------------------------------------------------------------------
# Partition / problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    sizes: tuple

    def __post_init__(self):
        if not self.sizes or any(int(s) < 1 for s in self.sizes):
            raise PartitionError(f"every shard needs at least one row, got sizes {list(self.sizes)}")

    @property
    def M(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @property
    def offsets(self) -> tuple:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.sizes)]))

    def slices(self) -> list:
        off = self.offsets
        return [slice(off[m], off[m + 1]) for m in range(self.M)]


def balanced_partition(n: int, M: int) -> Partition:
    """Contiguous row blocks whose sizes differ by at most one.

    Earlier shards absorb the remainder, so ``balanced_partition(10, 3)``
    gives sizes ``(4, 3, 3)``.
    """
    if M < 1 or M > n:
        raise PartitionError(f"cannot split n={n} rows into M={M} shards (need 1 <= M <= n)")
    q, rem = divmod(n, M)
    return Partition(tuple(q + 1 if m < rem else q for m in range(M)))


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule and execution knobs for one ADMM solve."""

    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    max_iter: int = 5000
    strategy: str = "auto"
    cg_tol: float = 1e-10
    cg_max_iter: Optional[int] = None
    threads: int = 1
    track_objective: bool = True
    track_h_norm: bool = True

    def __post_init__(self):
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise InvalidProblemError("stopping tolerances must be positive")
        if int(self.max_iter) < 1:
            raise InvalidProblemError("max_iter must be at least 1")
        if self.strategy not in ("auto", "direct_gram", "woodbury", "conjugate_gradient"):
            raise InvalidProblemError(f"unknown linear-solver strategy {self.strategy!r}")
        if int(self.threads) < 1:
            raise InvalidProblemError("threads must be at least 1")


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to run one consensus ADMM solve, except the data."""

    loss: LossKind = field(default_factory=LossKind)
    penalty: PenaltyFamily = field(default_factory=PenaltyFamily)
    constraint: ConstraintSet = field(default_factory=ConstraintSet)
    M: int = 1
    mu: float = 1.0
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidProblemError(f"mu must be positive, got {self.mu}")
        if int(self.M) < 1:
            raise InvalidProblemError(f"M must be at least 1, got {self.M}")

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def with_options(self, **changes) -> "ProblemSpec":
        return replace(self, options=replace(self.options, **changes))


# ---------------------------------------------------------------------------
# Data shards and iterate state
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Shard:
    """One machine's block of rows.

    ``factor`` holds the cached linear-system solver prepared by
    :func:`consensus_admm.worker.prepare_factorization`.
    """

    X: np.ndarray
    y: np.ndarray
    factor: Any = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise InvalidProblemError("shard X must be a 2-d array")
        if X.shape[0] != y.shape[0]:
            raise InvalidProblemError(f"shard X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def make_shards(X, y, M: int) -> list:
    """Split ``(X, y)`` into ``M`` contiguous, balanced shards."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidProblemError(f"X shape {X.shape} does not match y length {y.shape[0]}")
    part = balanced_partition(X.shape[0], M)
    return [Shard(X[s], y[s]) for s in part.slices()]


@dataclass
class CentralState:
    beta: np.ndarray
    b: np.ndarray
    f: np.ndarray

    def copy(self) -> "CentralState":
        return CentralState(self.beta.copy(), self.b.copy(), self.f.copy())


@dataclass
class LocalState:
    r: np.ndarray
    beta: np.ndarray
    d: np.ndarray
    e: np.ndarray

    def copy(self) -> "LocalState":
        return LocalState(self.r.copy(), self.beta.copy(), self.d.copy(), self.e.copy())


@dataclass
class SolverState:
    """Full ADMM iterate: the central variables plus one local state per shard."""

    central: CentralState
    locals: list

    def copy(self) -> "SolverState":
        return SolverState(self.central.copy(), [loc.copy() for loc in self.locals])

    def __sub__(self, other: "SolverState") -> "SolverState":
        c, o = self.central, other.central
        return SolverState(
            CentralState(c.beta - o.beta, c.b - o.b, c.f - o.f),
            [LocalState(a.r - b.r, a.beta - b.beta, a.d - b.d, a.e - b.e)
             for a, b in zip(self.locals, other.locals)],
        )


def init_feasible(problem: ProblemSpec, shards: Sequence[Shard]) -> tuple:
    """Zero start that satisfies every equality constraint exactly.

    beta = beta_m = b = 0, all duals zero and r_m = y_m, so
    ``X_m beta_m + r_m = y_m``, ``beta_m = beta`` and ``G beta = b`` hold
    with zero violation.
    """
    if len(shards) != problem.M:
        raise InvalidProblemError(f"problem has M={problem.M} but {len(shards)} shards were given")
    p = shards[0].p
    for s in shards:
        if s.p != p:
            raise InvalidProblemError("all shards must have the same number of columns")
    if problem.penalty.groups is not None and problem.penalty.groups.p != p:
        raise InvalidProblemError(f"group map covers {problem.penalty.groups.p} coefficients, data has p={p}")
    if problem.penalty.fused and p < 2:
        raise InvalidProblemError("fused structure needs p >= 2")
    q = problem.penalty.aux_dim(p)
    central = CentralState(np.zeros(p), np.zeros(q), np.zeros(q))
    local = [LocalState(s.y.copy(), np.zeros(p), np.zeros(s.n), np.zeros(p)) for s in shards]
    return central, local


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    primal: float
    dual: float
    objective: float = float("nan")
    h_norm_sq: float = float("nan")


@dataclass
class SolveReport:
    beta: np.ndarray
    iterations: int
    converged: bool
    history: list
    timings: dict
    state: Optional[SolverState] = None
    objective: float = float("nan")
    outer: list = field(default_factory=list)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(np.abs(self.beta) > 1e-8))

    def history_arrays(self) -> dict:
        """History as a dict of 1-d arrays keyed by field name."""
        keys = ("primal", "dual", "objective", "h_norm_sq")
        return {k: np.array([getattr(h, k) for h in self.history], dtype=float) for k in keys}
