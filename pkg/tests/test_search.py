import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvshort.errors import DataError, ParameterError
from mvshort.search import (
    GroundTruthQuery, Index, average_precision, evaluate, mean_ap, query, read_ground_truth,
    read_results, write_ground_truth, write_results,
)


def gt(positives, junk=(), query_id="q", exclude_self=False):
    return GroundTruthQuery(query_id, frozenset(positives), frozenset(junk), exclude_self)


class TestQuery:
    def test_self_first(self, rng):
        V = rng.standard_normal((5, 4))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        idx = Index([f"i{j}" for j in range(5)], V)
        ranked = query(idx, idx.vector("i3"))
        assert ranked[0][0] == "i3"
        assert ranked[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_query_orders_by_id(self):
        s = 2 ** -0.5
        idx = Index(["c", "a", "b"], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [s, s, 0.0]])
        ranked = query(idx, [0.0, 0.0, 1.0])
        assert [r[0] for r in ranked] == ["a", "b", "c"]
        assert all(r[1] == 0.0 for r in ranked)

    def test_direct_dot_products(self):
        idx = Index(["e1", "e2"], np.eye(2))
        ranked = query(idx, [0.6, 0.8])
        assert [r[0] for r in ranked] == ["e2", "e1"]
        assert [r[1] for r in ranked] == pytest.approx([0.8, 0.6])

    def test_zero_rows_last(self):
        idx = Index(["z", "a", "b"], [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
        assert [r[0] for r in query(idx, [-1.0, 0.0])] == ["b", "a", "z"]

    def test_top(self):
        idx = Index(["e1", "e2"], np.eye(2))
        assert len(query(idx, [1.0, 0.0], top=1)) == 1
        with pytest.raises(ParameterError):
            query(idx, [1.0, 0.0], top=0)

    def test_non_unit_rows_rejected(self):
        with pytest.raises(DataError):
            Index(["a"], [[0.5, 0.5]])

    @settings(max_examples=30)
    @given(st.integers(0, 2 ** 31))
    def test_matches_euclidean_ranking(self, seed):
        rng = np.random.default_rng(seed)
        # quantized coordinates force exact score ties
        V = rng.integers(-2, 3, size=(30, 3)).astype(float)
        V = V[np.any(V != 0, axis=1)]
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        ids = [f"{j:03d}" for j in range(len(V))]
        idx = Index(ids, V)
        q = idx.vectors[0].astype(np.float64)
        by_ip = [r[0] for r in query(idx, q)]
        dist = ((idx.vectors.astype(np.float64) - q) ** 2).sum(1)
        scores = idx.vectors.astype(np.float64) @ q
        by_l2 = [ids[i] for i in np.lexsort((np.arange(len(ids)), dist))]
        # both orders agree except inside groups that tie in exact arithmetic
        for a, b in zip(by_ip, by_l2):
            assert scores[ids.index(a)] == pytest.approx(scores[ids.index(b)], abs=1e-6)


AP_TABLE = [
    # ranked, positives, junk, exclude_self, expected
    (["p1", "n1", "p2"], {"p1", "p2"}, set(), False, 5 / 6),
    (["p1", "p2", "n1"], {"p1", "p2"}, set(), False, 1.0),
    (["n1", "n2", "p1"], {"p1"}, set(), False, 1 / 3),
    (["n1", "p1"], {"p1"}, set(), False, 1 / 2),
    (["n1", "j1", "p1"], {"p1"}, {"j1"}, False, 1 / 2),
    (["q", "p1", "n1", "p2"], {"p1", "p2"}, set(), True, 5 / 6),
    (["n1", "n2"], {"p1"}, set(), False, 0.0),
    (["p1", "n1"], {"p1", "p2"}, set(), False, 1 / 2),
    (["n1", "p1", "n2", "p2", "p3"], {"p1", "p2", "p3"}, set(), False, (1 / 2 + 2 / 4 + 3 / 5) / 3),
    (["j1", "j2", "p1", "n1", "p2"], {"p1", "p2"}, {"j1", "j2"}, False, 5 / 6),
]


class TestAveragePrecision:
    @pytest.mark.parametrize("ranked,pos,junk,excl,expected", AP_TABLE)
    def test_table(self, ranked, pos, junk, excl, expected):
        assert average_precision(ranked, gt(pos, junk, exclude_self=excl)) == pytest.approx(expected)

    def test_accepts_scored_pairs(self):
        assert average_precision([("p1", 0.9), ("n1", 0.5)], gt({"p1"})) == 1.0

    def test_no_positives(self):
        with pytest.raises(DataError):
            average_precision(["a"], gt(set()))

    def test_positive_and_junk_overlap(self):
        with pytest.raises(DataError):
            gt({"a"}, {"a"})

    @settings(max_examples=60)
    @given(st.permutations([f"p{i}" for i in range(3)] + [f"n{i}" for i in range(5)]),
           st.lists(st.integers(0, 8), max_size=4))
    def test_junk_insertion_invariance(self, ranked, positions):
        entry = gt({"p0", "p1", "p2"}, {"j0", "j1", "j2", "j3"})
        base = average_precision(ranked, entry)
        ranked = list(ranked)
        for i, pos in enumerate(positions):
            ranked.insert(min(pos, len(ranked)), f"j{i}")
        assert average_precision(ranked, entry) == base
        assert 0.0 <= base <= 1.0

    @given(st.permutations([f"p{i}" for i in range(3)] + [f"n{i}" for i in range(4)]))
    def test_perfect_iff_positives_first(self, ranked):
        ap = average_precision(ranked, gt({"p0", "p1", "p2"}))
        first = all(r.startswith("p") for r in ranked[:3])
        assert (ap == 1.0) == first


class TestMeanAP:
    def _index(self):
        return Index(["a", "b", "c"], np.eye(3))

    def test_mean(self):
        idx = self._index()
        g = [gt({"a"}, query_id="qa"), gt({"b"}, query_id="qb")]
        qv = {"qa": [1.0, 0.0, 0.0], "qb": [0.9, 0.1, 0.0]}
        assert mean_ap(idx, g, qv) == pytest.approx(0.75)

    def test_single_and_duplicates(self):
        idx = self._index()
        one = [gt({"b"}, query_id="qb")]
        qv = {"qb": [0.9, 0.1, 0.0]}
        assert mean_ap(idx, one, qv) == pytest.approx(0.5)
        assert mean_ap(idx, one * 3, qv) == pytest.approx(0.5)

    def test_query_from_index_with_exclusion(self):
        idx = self._index()
        g = [GroundTruthQuery("a", frozenset({"b"}), exclude_self=True)]
        # a is excluded; b and c tie at 0 and b wins on id
        assert mean_ap(idx, g) == 1.0

    def test_permutation_invariant(self):
        idx = self._index()
        g = [gt({"a"}, query_id="qa"), gt({"c"}, query_id="qb")]
        qv = {"qa": [1.0, 0.0, 0.0], "qb": [0.9, 0.1, 0.0]}
        assert mean_ap(idx, g, qv) == mean_ap(idx, g[::-1], qv)

    def test_unknown_query_reports_id(self):
        with pytest.raises(DataError, match="missing"):
            evaluate(self._index(), [gt({"a"}, query_id="missing")])


def test_ground_truth_file_roundtrip(tmp_path):
    queries = [GroundTruthQuery("q1", frozenset({"a", "b"}), frozenset({"j"}), True),
               GroundTruthQuery("q2", frozenset({"c"}))]
    write_ground_truth(tmp_path / "gt.txt", queries)
    text = (tmp_path / "gt.txt").read_text()
    assert text.startswith("Q\tq1\t1\nP\ta\nP\tb\nJ\tj\n")
    back = read_ground_truth(tmp_path / "gt.txt")
    assert back == queries


def test_ground_truth_requires_positives(tmp_path):
    (tmp_path / "gt.txt").write_text("Q\tq1\t0\nJ\tx\n")
    with pytest.raises(DataError):
        read_ground_truth(tmp_path / "gt.txt")


def test_results_file(tmp_path):
    write_results(tmp_path / "r.txt", {"q": [("a", 0.5), ("b", -0.25)]})
    assert (tmp_path / "r.txt").read_text() == "q\t1\ta\t0.500000\nq\t2\tb\t-0.250000\n"
    assert read_results(tmp_path / "r.txt") == {"q": [("a", 0.5), ("b", -0.25)]}
