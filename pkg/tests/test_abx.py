import numpy as np
import pytest

from perceptimetric import (
    DeltaRecord,
    FeatureMatrix,
    abx_scores,
    evaluate_deltas,
    load_items,
    native_nonnative_abx_diff,
    read_archive,
    write_archive,
)
from perceptimetric.abx import TripletItem, read_deltas_csv, write_deltas_csv
from perceptimetric.errors import ItemTableError, UnknownStimulusError

from oracles import brute_force_dtw_value

ITEM_HEADER = "triplet_id,target_id,other_id,x_id,phone_target,phone_other,language,subset,target_is_A\n"


def make_item(tid="t1", target="s_a", other="s_b", x="s_x", p1="i", p2="a",
              lang="fr", subset="zerospeech", target_is_A=True):
    return TripletItem(
        triplet_id=tid, target_id=target, other_id=other, x_id=x,
        phone_target=p1, phone_other=p2, language=lang, subset_id=subset,
        target_is_A=target_is_A,
    )


class TestLoadItems:
    def test_contrast_canonicalized(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text(ITEM_HEADER + "t1,s_a,s_b,s_x,i,a,fr,zerospeech,true\n")
        items = load_items(path)
        assert len(items) == 1
        assert items[0].contrast == "a:i"
        assert items[0].contrast_key == "fr/a:i"
        assert items[0].target_is_A is True

    def test_duplicate_triplet_id(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text(ITEM_HEADER
                        + "t1,s_a,s_b,s_x,i,a,fr,zerospeech,true\n"
                        + "t1,s_c,s_d,s_y,u,o,fr,zerospeech,false\n")
        with pytest.raises(ItemTableError, match="duplicate"):
            load_items(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text("triplet_id,target_id\nt1,s_a\n")
        with pytest.raises(ItemTableError, match="missing columns"):
            load_items(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text("")
        with pytest.raises(ItemTableError, match="empty"):
            load_items(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text(ITEM_HEADER)
        with pytest.raises(ItemTableError, match="no item rows"):
            load_items(path)

    def test_full_benchmark_size(self, tmp_path):
        path = tmp_path / "items.csv"
        rows = [ITEM_HEADER]
        for i in range(4231):
            rows.append(f"t{i},a{i},b{i},x{i},i,a,fr,zerospeech,true\n")
        path.write_text("".join(rows))
        assert len(load_items(path)) == 4231

    def test_identical_phones_rejected(self):
        with pytest.raises(ItemTableError, match="phones"):
            make_item(p1="a", p2="a")

    def test_unknown_subset_rejected(self):
        with pytest.raises(ItemTableError, match="subset"):
            make_item(subset="mystery")

    def test_bad_bool(self, tmp_path):
        path = tmp_path / "items.csv"
        path.write_text(ITEM_HEADER + "t1,s_a,s_b,s_x,i,a,fr,zerospeech,maybe\n")
        with pytest.raises(ItemTableError, match="boolean"):
            load_items(path)


@pytest.fixture
def toy_archive(tmp_path):
    rng = np.random.default_rng(99)
    mats = {
        sid: rng.normal(size=(2, 3)).astype(np.float32)
        for sid in ("s_a", "s_b", "s_x", "s_c", "s_d", "s_y")
    }
    path = tmp_path / "toy.pma"
    write_archive(
        [FeatureMatrix(sid, data, 0.01) for sid, data in sorted(mats.items())], path
    )
    return read_archive(path), mats


class TestEvaluateDeltas:
    def test_target_equals_x_positive(self, toy_archive):
        archive, _ = toy_archive
        item = make_item(target="s_x", other="s_b", x="s_x")
        [record] = evaluate_deltas(archive, [item])
        assert record.delta > 0

    def test_missing_stimulus_names_triplet(self, toy_archive):
        archive, _ = toy_archive
        item = make_item(tid="t77", x="s_missing")
        with pytest.raises(UnknownStimulusError, match="t77"):
            evaluate_deltas(archive, [item])

    def test_matches_brute_force(self, toy_archive):
        archive, mats = toy_archive
        items = [
            make_item(tid="t1", target="s_a", other="s_b", x="s_x"),
            make_item(tid="t2", target="s_c", other="s_d", x="s_y"),
            make_item(tid="t3", target="s_b", other="s_c", x="s_a"),
        ]
        records = evaluate_deltas(archive, items)
        assert [r.triplet_id for r in records] == ["t1", "t2", "t3"]
        for item, record in zip(items, records):
            want = (brute_force_dtw_value(mats[item.other_id], mats[item.x_id])
                    - brute_force_dtw_value(mats[item.target_id], mats[item.x_id]))
            assert record.delta == pytest.approx(want, abs=1e-9)

    def test_parallelism_invariance(self, toy_archive):
        archive, _ = toy_archive
        items = [
            make_item(tid=f"t{i}", target="s_a", other="s_b", x="s_x")
            for i in range(6)
        ] + [make_item(tid="u1", target="s_c", other="s_d", x="s_y")]
        serial = evaluate_deltas(archive, items, threads=1)
        parallel = evaluate_deltas(archive, items, threads=4)
        assert [r.delta for r in serial] == [r.delta for r in parallel]

    def test_order_permutation(self, toy_archive):
        archive, _ = toy_archive
        items = [
            make_item(tid="t1", target="s_a", other="s_b", x="s_x"),
            make_item(tid="t2", target="s_c", other="s_d", x="s_y"),
        ]
        forward = evaluate_deltas(archive, items)
        backward = evaluate_deltas(archive, items[::-1])
        assert {(r.triplet_id, r.delta) for r in forward} == \
            {(r.triplet_id, r.delta) for r in backward}


def records(*pairs):
    return [DeltaRecord(model_id="m", triplet_id=t, delta=d) for t, d in pairs]


class TestAbxScores:
    def test_zero_delta_counts_incorrect(self):
        items = [make_item(tid=f"t{i}") for i in range(3)]
        items = [
            make_item(tid="t0"),
            make_item(tid="t1", target="s_c"),
            make_item(tid="t2", target="s_d"),
        ]
        deltas = records(("t0", 0.5), ("t1", -0.2), ("t2", 0.0))
        [score] = abx_scores(deltas, items, group_by="contrast")
        assert score.group == "fr/a:i"
        assert score.n_triplets == 3
        assert score.abx_accuracy == pytest.approx(1 / 3)
        assert score.mean_delta == pytest.approx(0.1)

    def test_negated_deltas_complement(self):
        rng = np.random.default_rng(31)
        items = [make_item(tid=f"t{i}") for i in range(20)]
        values = [(f"t{i}", float(v)) for i, v in enumerate(rng.normal(size=20))]
        [score] = abx_scores(records(*values), items, group_by="subset")
        [neg] = abx_scores(records(*[(t, -v) for t, v in values]), items,
                           group_by="subset")
        assert score.abx_accuracy + neg.abx_accuracy == pytest.approx(1.0)

    def test_accuracy_times_n_is_integer(self):
        rng = np.random.default_rng(33)
        items = [
            make_item(tid=f"t{i}", p1=rng.choice(["i", "u", "o"]), p2="a",
                      lang=rng.choice(["fr", "en"]))
            for i in range(40)
        ]
        deltas = records(*[(f"t{i}", float(rng.normal())) for i in range(40)])
        for grouping in ("contrast", "subset", "subset_language"):
            for score in abx_scores(deltas, items, group_by=grouping):
                count = score.abx_accuracy * score.n_triplets
                assert abs(count - round(count)) < 1e-9

    def test_grouping_by_subset_language(self):
        items = [
            make_item(tid="t0", subset="zerospeech", lang="fr"),
            make_item(tid="t1", subset="zerospeech", lang="en"),
            make_item(tid="t2", subset="worldvowels", lang="fr"),
        ]
        deltas = records(("t0", 1.0), ("t1", -1.0), ("t2", 1.0))
        scores = abx_scores(deltas, items, group_by="subset_language")
        assert [s.group for s in scores] == [
            "worldvowels/fr", "zerospeech/en", "zerospeech/fr"
        ]
        assert [s.abx_accuracy for s in scores] == [1.0, 0.0, 1.0]

    def test_permuting_items_leaves_table_unchanged(self):
        rng = np.random.default_rng(35)
        items = [make_item(tid=f"t{i}", lang=rng.choice(["fr", "en"]))
                 for i in range(15)]
        deltas = records(*[(f"t{i}", float(rng.normal())) for i in range(15)])
        base = abx_scores(deltas, items, group_by="contrast")
        perm = list(np.random.default_rng(1).permutation(15))
        shuffled = abx_scores([deltas[i] for i in perm], [items[i] for i in perm],
                              group_by="contrast")
        assert base == shuffled

    def test_misaligned_tables_rejected(self):
        items = [make_item(tid="t0")]
        with pytest.raises(ItemTableError, match="aligned"):
            abx_scores(records(("t0", 1.0), ("t1", 1.0)), items)

    def test_unknown_grouping(self):
        with pytest.raises(ValueError, match="grouping"):
            abx_scores(records(("t0", 1.0)), [make_item(tid="t0")], group_by="phase")


class TestNativeNonnativeDiff:
    def test_identical_tables_give_zero(self):
        items = [make_item(tid="t0"), make_item(tid="t1", subset="worldvowels")]
        deltas = records(("t0", 1.0), ("t1", -1.0))
        scores = abx_scores(deltas, items, group_by="subset")
        diffs = native_nonnative_abx_diff(scores, scores)
        assert all(d.difference == 0.0 for d in diffs)

    def test_hand_example(self):
        items_nat = [make_item(tid=f"t{i}") for i in range(100)]
        native = abx_scores(
            records(*[(f"t{i}", 1.0 if i < 88 else -1.0) for i in range(100)]),
            items_nat, group_by="subset")
        nonnative = abx_scores(
            records(*[(f"t{i}", 1.0 if i < 85 else -1.0) for i in range(100)]),
            items_nat, group_by="subset")
        [diff] = native_nonnative_abx_diff(native, nonnative)
        assert diff.difference == pytest.approx(0.03)

    def test_key_mismatch_rejected(self):
        items_a = [make_item(tid="t0", subset="zerospeech")]
        items_b = [make_item(tid="t0", subset="worldvowels")]
        a = abx_scores(records(("t0", 1.0)), items_a, group_by="subset")
        b = abx_scores(records(("t0", 1.0)), items_b, group_by="subset")
        with pytest.raises(ItemTableError, match="keyed differently"):
            native_nonnative_abx_diff(a, b)


class TestDeltasCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        original = records(("t0", 0.125), ("t1", -3.5e-7))
        write_deltas_csv(original, path)
        back = read_deltas_csv(path, model_id="m")
        assert [(r.triplet_id, r.delta) for r in back] == \
            [(r.triplet_id, r.delta) for r in original]

    def test_bad_value(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("triplet_id,delta\nt0,abc\n")
        with pytest.raises(ItemTableError, match="bad delta"):
            read_deltas_csv(path)
