import numpy as np
import pytest

from arena_rank.data import (
    DataError,
    DisconnectedError,
    collapse_ties,
    drop_ties,
    from_arrays,
    parse_csv,
    parse_dataset,
    parse_json,
    read_dataset,
    split,
    to_csv,
    to_json,
    validate,
    write_dataset,
)


class TestParse:
    def test_single_row(self):
        d = parse_dataset([("A", "B", 3, 1, 2)])
        assert d.competitors == ("A", "B")
        assert d.m == 2 and d.n_pairs == 1
        assert (d.i[0], d.j[0]) == (0, 1)
        assert (d.wins_i[0], d.wins_j[0], d.ties[0]) == (3, 1, 2)

    def test_orientation_aware_merge(self):
        # the reversed row says A beat B twice; swapped into A's orientation it adds (2, 0, 1)
        d = parse_dataset([("A", "B", 1, 0, 0), ("B", "A", 0, 2, 1)])
        assert d.n_pairs == 1 and d.competitors == ("A", "B")
        assert (d.wins_i[0], d.wins_j[0], d.ties[0]) == (3, 0, 1)

    def test_same_orientation_rows_sum(self):
        d = parse_dataset([("A", "B", 1, 0, 0), ("A", "B", 0, 2, 1)])
        assert (d.wins_i[0], d.wins_j[0], d.ties[0]) == (1, 2, 1)

    def test_self_comparison(self):
        with pytest.raises(DataError, match="self"):
            parse_dataset([("A", "A", 1, 0, 0)])

    @pytest.mark.parametrize(
        "row",
        [("A", "B", 1, 0), ("A", "B", "x", 0, 0), ("A", "B", -1, 0, 0), ("A", "B", float("nan"), 0, 0)],
    )
    def test_malformed_rows(self, row):
        with pytest.raises(DataError):
            parse_dataset([row])

    def test_first_appearance_roster_and_zero_pairs_dropped(self):
        d = parse_dataset([("C", "A", 1, 0, 0), ("B", "A", 0, 0, 0), ("B", "C", 0, 1, 0)])
        assert d.competitors == ("C", "A", "B")
        assert d.n_pairs == 2

    def test_mapping_rows(self):
        d = parse_dataset([{"model_a": "A", "model_b": "B", "wins_a": 2, "wins_b": 1, "ties": 0}])
        assert d.total == 3

    def test_csv_json_round_trip(self, tmp_path):
        d = parse_dataset([("A", "B", 3, 1, 2), ("B", "C", 1, 1, 0), ("C", "A", 0.5, 2, 1)])
        assert parse_csv(to_csv(d)) == d
        assert parse_json(to_json(d)) == d
        for name in ("d.csv", "d.json"):
            write_dataset(d, tmp_path / name)
            assert read_dataset(tmp_path / name) == d

    def test_bad_header(self):
        with pytest.raises(DataError, match="header"):
            parse_csv("a,b,c,d,e\nA,B,1,0,0\n")


class TestValidate:
    def test_path_graph(self):
        rep = validate(parse_dataset([("A", "B", 1, 0, 0), ("B", "C", 1, 0, 0)]))
        assert rep.ok

    def test_two_components(self):
        rep = validate(parse_dataset([("A", "B", 1, 0, 0), ("C", "D", 1, 0, 0)]))
        assert not rep.ok
        assert rep.components == (("A", "B"), ("C", "D"))
        with pytest.raises(DisconnectedError) as info:
            rep.raise_for_errors()
        assert info.value.components == [["A", "B"], ["C", "D"]]

    def test_no_edges(self):
        empty = from_arrays(["A", "B"], [], [], [], [], [])
        rep = validate(empty)
        assert not rep.ok
        with pytest.raises(DisconnectedError):
            rep.raise_for_errors()

    def test_negative_count(self):
        bad = from_arrays(["A", "B"], [0], [1], [-1.0], [2.0], [0.0])
        rep = validate(bad)
        assert not rep.ok and any("negative" in e for e in rep.errors)


class TestTransforms:
    @pytest.mark.parametrize(
        "counts, expected",
        [((2, 1, 3), (3.5, 2.5, 0)), ((5, 0, 0), (5, 0, 0)), ((0, 0, 4), (2, 2, 0))],
    )
    def test_collapse(self, counts, expected):
        c = collapse_ties(parse_dataset([("A", "B", *counts)]))
        assert (c.wins_i[0], c.wins_j[0], c.ties[0]) == expected
        assert c.n_ij[0] == sum(counts)

    def test_collapse_idempotent(self):
        d = parse_dataset([("A", "B", 2, 1, 3)])
        assert collapse_ties(collapse_ties(d)) == collapse_ties(d)

    def test_drop_ties_removes_pure_tie_pairs(self):
        d = parse_dataset([("A", "B", 2, 1, 3), ("B", "C", 0, 0, 4)])
        t = drop_ties(d)
        assert t.n_pairs == 1 and t.total == 3 and t.competitors == d.competitors


class TestSplit:
    def test_conservation(self, rng):
        d = parse_dataset([(f"c{a}", f"c{b}", *rng.integers(0, 50, 3).tolist()) for a in range(6) for b in range(a + 1, 6)])
        for seed in range(5):
            train, test = split(d, 0.1, seed)
            for k in range(d.n_pairs):
                key = (d.i[k], d.j[k])
                tr = _counts(train, key)
                te = _counts(test, key)
                np.testing.assert_array_equal(np.add(tr, te), [d.wins_i[k], d.wins_j[k], d.ties[k]])

    def test_deterministic_and_seed_dependent(self, rng):
        d = parse_dataset([("A", "B", 500, 400, 100), ("B", "C", 300, 300, 300)])
        assert split(d, 0.1, 7) == split(d, 0.1, 7)
        assert split(d, 0.1, 7)[1] != split(d, 0.1, 8)[1]

    def test_binomial_concentration(self):
        n = 10**6
        d = parse_dataset([("A", "B", n // 2, n // 4, n // 4)])
        _, test = split(d, 0.1, 3)
        sd = np.sqrt(n * 0.1 * 0.9)
        assert abs(test.total - 1e5) < 3 * sd

    def test_disconnected_train(self):
        d = parse_dataset([("A", "B", 1, 0, 0)])
        seed = next(s for s in range(100) if np.random.default_rng(s).binomial(1, 0.9) == 1)
        with pytest.raises(DisconnectedError):
            split(d, 0.9, seed)

    def test_fractional_rejected(self):
        with pytest.raises(DataError, match="integer"):
            split(collapse_ties(parse_dataset([("A", "B", 1, 0, 1)])), 0.1, 0)


def _counts(ds, key):
    for k in range(ds.n_pairs):
        if (ds.i[k], ds.j[k]) == key:
            return [ds.wins_i[k], ds.wins_j[k], ds.ties[k]]
    return [0, 0, 0]
