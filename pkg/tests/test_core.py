import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from consensus_admm.core import (
    ConstraintSet,
    GroupMap,
    InvalidProblemError,
    LossKind,
    PartitionError,
    PenaltyFamily,
    ProblemSpec,
    SolveReport,
    SolverOptions,
    SolverState,
    balanced_partition,
    init_feasible,
    make_shards,
)
from consensus_admm.regularizer import apply_G


class TestPartition:
    @pytest.mark.parametrize("n, M, sizes", [(10, 3, (4, 3, 3)), (6, 1, (6,)), (5, 5, (1, 1, 1, 1, 1))])
    def test_examples(self, n, M, sizes):
        assert balanced_partition(n, M).sizes == sizes

    @pytest.mark.parametrize("n, M", [(3, 4), (3, 0), (5, -1)])
    def test_invalid(self, n, M):
        with pytest.raises(PartitionError):
            balanced_partition(n, M)

    @given(st.integers(1, 500), st.integers(1, 50))
    def test_balanced_and_covering(self, n, M):
        if M > n:
            with pytest.raises(PartitionError):
                balanced_partition(n, M)
            return
        part = balanced_partition(n, M)
        assert part.M == M and part.n == n
        assert max(part.sizes) - min(part.sizes) <= 1
        assert list(part.sizes) == sorted(part.sizes, reverse=True)
        covered = np.concatenate([np.arange(n)[s] for s in part.slices()])
        np.testing.assert_array_equal(covered, np.arange(n))


class TestLossKind:
    def test_constructors(self):
        assert LossKind.quantile(0.3).tau == 0.3
        assert LossKind.huber(1.345).delta == 1.345
        assert not LossKind.square_root().separable
        assert LossKind.least_squares().separable

    @pytest.mark.parametrize("kwargs", [
        dict(kind="quantile", tau=0.0),
        dict(kind="quantile", tau=1.0),
        dict(kind="quantile"),
        dict(kind="huber", delta=0.0),
        dict(kind="huber", delta=1.0, huber_variant="other"),
        dict(kind="logistic"),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidProblemError):
            LossKind(**kwargs)


class TestPenaltyFamily:
    @pytest.mark.parametrize("name, parts", [
        ("enet", ("l1", "ridge")), ("sgla", ("l1", "group")), ("sfla", ("l1", "fused")),
        ("snet", ("scad", "ridge")), ("scgl", ("scad", "group")), ("sctv", ("scad", "fused")),
        ("mnet", ("mcp", "ridge")), ("mcgl", ("mcp", "group")), ("mctv", ("mcp", "fused")),
    ])
    def test_nine_families(self, name, parts):
        groups = GroupMap.contiguous(4, 2) if parts[1] == "group" else None
        fam = PenaltyFamily.from_name(name, 0.1, 0.2, groups=groups)
        assert (fam.sparsity, fam.structure) == parts
        assert fam.name == name
        assert fam.convex == (parts[0] == "l1")
        assert fam.as_convex().convex

    def test_default_a(self):
        assert PenaltyFamily.from_name("snet").a == 3.7
        assert PenaltyFamily.from_name("mnet").a == 3.0

    @pytest.mark.parametrize("kwargs", [
        dict(sparsity="scad", a=2.0), dict(sparsity="mcp", a=1.0), dict(lambda1=-1.0),
        dict(structure="group"), dict(sparsity="lasso"),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidProblemError):
            PenaltyFamily(**kwargs)

    def test_unknown_name(self):
        with pytest.raises(InvalidProblemError):
            PenaltyFamily.from_name("ridge")

    def test_aux_dim(self):
        assert PenaltyFamily.from_name("sfla").aux_dim(10) == 9
        assert PenaltyFamily.from_name("enet").aux_dim(10) == 10


class TestGroupMap:
    def test_contiguous(self):
        g = GroupMap.contiguous(6, 3)
        assert g.G == 3 and g.p == 6
        assert [idx.tolist() for idx in g.indices()] == [[0, 1], [2, 3], [4, 5]]

    def test_noncontiguous(self):
        g = GroupMap(np.array([2, 1, 2, 1]))
        assert [idx.tolist() for idx in g.indices()] == [[1, 3], [0, 2]]

    @pytest.mark.parametrize("labels", [[0, 1], [1, 3], [], [1.5, 1]])
    def test_invalid(self, labels):
        with pytest.raises(InvalidProblemError):
            GroupMap(np.array(labels))

    def test_not_divisible(self):
        with pytest.raises(InvalidProblemError):
            GroupMap.contiguous(256, 80)

    def test_equality(self):
        assert GroupMap.contiguous(4, 2) == GroupMap(np.array([1, 1, 2, 2]))
        assert hash(GroupMap.contiguous(4, 2)) == hash(GroupMap(np.array([1, 1, 2, 2])))


class TestConstraintAndOptions:
    def test_box_needs_bounds(self):
        with pytest.raises(InvalidProblemError):
            ConstraintSet("box")
        with pytest.raises(InvalidProblemError):
            ConstraintSet.box([1.0], [0.0])

    @pytest.mark.parametrize("kwargs", [dict(eps_abs=0), dict(max_iter=0), dict(threads=0), dict(strategy="lu")])
    def test_options_invalid(self, kwargs):
        with pytest.raises(InvalidProblemError):
            SolverOptions(**kwargs)

    def test_problem_invalid(self):
        with pytest.raises(InvalidProblemError):
            ProblemSpec(mu=0.0)
        with pytest.raises(InvalidProblemError):
            ProblemSpec(M=0)


class TestInitFeasible:
    @pytest.mark.parametrize("name", ["enet", "sgla", "sfla"])
    def test_constraints_hold_exactly(self, name):
        rng = np.random.default_rng(0)
        X, y = rng.standard_normal((11, 6)), rng.standard_normal(11)
        fam = PenaltyFamily.from_name(name, 0.1, 0.1, groups=GroupMap.contiguous(6, 3))
        prob = ProblemSpec(penalty=fam, M=3)
        shards = make_shards(X, y, 3)
        central, locals_ = init_feasible(prob, shards)
        for s, loc in zip(shards, locals_):
            np.testing.assert_array_equal(s.X @ loc.beta + loc.r, s.y)
            np.testing.assert_array_equal(loc.beta, central.beta)
        np.testing.assert_array_equal(apply_G(fam, central.beta), central.b)

    def test_dimension_mismatch(self):
        X, y = np.ones((4, 3)), np.ones(4)
        with pytest.raises(InvalidProblemError):
            init_feasible(ProblemSpec(M=2), make_shards(X, y, 1))
        groups = GroupMap.contiguous(4, 2)
        with pytest.raises(InvalidProblemError):
            init_feasible(ProblemSpec(penalty=PenaltyFamily.from_name("sgla", groups=groups)), make_shards(X, y, 1))
        with pytest.raises(InvalidProblemError):
            init_feasible(ProblemSpec(penalty=PenaltyFamily.from_name("sfla")),
                          make_shards(np.ones((4, 1)), y, 1))

    def test_state_difference(self):
        shards = make_shards(np.ones((4, 2)), np.arange(4.0), 2)
        c, locs = init_feasible(ProblemSpec(M=2), shards)
        s = SolverState(c, locs)
        d = s - s.copy()
        assert all(np.all(loc.r == 0) for loc in d.locals)


def test_make_shards_mismatch():
    with pytest.raises(InvalidProblemError):
        make_shards(np.ones((3, 2)), np.ones(4), 1)


def test_report_nnz_and_history():
    from consensus_admm.core import IterationRecord
    rep = SolveReport(np.array([0.0, 1e-9, 0.5]), 2, True,
                      [IterationRecord(1.0, 2.0), IterationRecord(0.5, 0.25, 3.0, 4.0)], {})
    assert rep.nnz == 1
    h = rep.history_arrays()
    np.testing.assert_array_equal(h["primal"], [1.0, 0.5])
    assert np.isnan(h["objective"][0])
