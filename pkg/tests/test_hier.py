import numpy as np
import pytest

from asdmeta import synth, tabular
from asdmeta.forest import ForestConfig
from asdmeta.ga import GAConfig
from asdmeta.hier import (
    RoundHistory,
    SelectionRound,
    history_from_dict,
    history_to_dict,
    read_site_report,
    run_rounds,
    run_rounds_by_site,
    site_wise_eval,
    write_site_report,
)
from asdmeta.cv import CVResult


@pytest.fixture(scope="module")
def planted_table():
    cfg = synth.SynthConfig(sizes=(80,), d=4, k_informative=1, effect_size=4.0, seed=13)
    table, truth, _ = synth.generate(cfg)
    return table, truth


FAST_GA = GAConfig(n_iter=6, n_pop=16, seed=21)
FAST_FOREST = ForestConfig(n_trees=8)


class TestRunRounds:
    def test_converges_once_optimum_found(self, planted_table):
        table, truth = planted_table
        history = run_rounds(table, FAST_GA, FAST_FOREST, k=3,
                             epsilon=0.01, max_rounds=5)
        assert history.converged
        assert history.rounds_run == 2
        assert len(history.rounds) == 3  # baseline + 2 GA rounds
        assert history.rounds[1].mask[np.flatnonzero(truth)[0]] == 1

    def test_max_rounds_one(self, planted_table):
        table, _ = planted_table
        history = run_rounds(table, FAST_GA, FAST_FOREST, k=3,
                             epsilon=0.01, max_rounds=1)
        assert history.rounds_run == 1
        assert not history.converged
        assert len(history.rounds) == 2

    def test_mask_nesting(self, planted_table):
        table, _ = planted_table
        history = run_rounds(table, FAST_GA, FAST_FOREST, k=3,
                             epsilon=0.0, max_rounds=4)
        for prev, cur in zip(history.rounds, history.rounds[1:]):
            assert np.array_equal(cur.mask & prev.mask, cur.mask)

    def test_stopping_rule_iff(self, planted_table):
        table, _ = planted_table
        for epsilon in (0.0, 0.01, 0.05):
            history = run_rounds(table, FAST_GA, FAST_FOREST, k=3,
                                 epsilon=epsilon, max_rounds=4)
            means = [r.fitness.mean for r in history.rounds[1:]]  # GA rounds only
            improvements = [b - a for a, b in zip(means, means[1:])]
            if history.converged:
                assert improvements[-1] < epsilon
                assert all(imp >= epsilon for imp in improvements[:-1])
            else:
                assert all(imp >= epsilon for imp in improvements)
                assert history.rounds_run == 4

    def test_baseline_is_all_features(self, planted_table):
        table, _ = planted_table
        history = run_rounds(table, FAST_GA, FAST_FOREST, k=3, max_rounds=1)
        assert history.rounds[0].mask.tolist() == [1] * table.d

    def test_parameter_validation(self, planted_table):
        table, _ = planted_table
        with pytest.raises(ValueError):
            run_rounds(table, FAST_GA, FAST_FOREST, k=3, epsilon=-0.1)
        with pytest.raises(ValueError):
            run_rounds(table, FAST_GA, FAST_FOREST, k=3, max_rounds=0)


def test_lift_then_apply_equals_sequential_masking(tiny_table):
    within = tabular.as_mask([1, 1, 0, 1])
    sub = tabular.as_mask([0, 1, 1])
    lifted = tabular.lift_mask(sub, within)
    direct = tabular.apply_mask(tiny_table, lifted)
    sequential = tabular.apply_mask(tabular.apply_mask(tiny_table, within), sub)
    assert direct.feature_names == sequential.feature_names
    assert np.array_equal(direct.features, sequential.features)


def _history(*means, d=3):
    rounds = [SelectionRound(np.ones(d, dtype=np.uint8),
                             CVResult.from_folds([m, m, m])) for m in means]
    return RoundHistory(tuple(rounds), converged=True, rounds_run=len(means) - 1)


class TestSiteWiseEval:
    def test_rows_match_history_entries(self):
        cfg = synth.SynthConfig(sizes=(12, 9), d=3, k_informative=1,
                                effect_size=1.0, seed=5)
        table, _, _ = synth.generate(cfg)
        histories = {"S01": _history(0.5, 0.7), "S02": _history(0.4, 0.6, 0.8)}
        rows = site_wise_eval(table, histories)
        assert [(r.site_id, r.round_index) for r in rows] == [
            ("S01", 0), ("S01", 1), ("S02", 0), ("S02", 1), ("S02", 2)]
        assert rows[0].data_size == 12 and rows[2].data_size == 9
        assert rows[1].acc_mean == pytest.approx(0.7)
        assert rows[4].acc_mean == pytest.approx(0.8)

    def test_single_site(self):
        cfg = synth.SynthConfig(sizes=(10,), d=3, k_informative=1,
                                effect_size=1.0, seed=6)
        table, _, _ = synth.generate(cfg)
        rows = site_wise_eval(table, {"S01": _history(0.5, 0.9)})
        assert len(rows) == 2

    def test_missing_site_history(self):
        cfg = synth.SynthConfig(sizes=(5, 5), d=3, k_informative=1,
                                effect_size=1.0, seed=7)
        table, _, _ = synth.generate(cfg)
        with pytest.raises(ValueError, match="S02"):
            site_wise_eval(table, {"S01": _history(0.5)})


def test_report_csv_round_trip(tmp_path):
    cfg = synth.SynthConfig(sizes=(8, 6), d=3, k_informative=1,
                            effect_size=1.0, seed=8)
    table, _, _ = synth.generate(cfg)
    histories = {"S01": _history(0.5, 0.625), "S02": _history(0.25, 0.75)}
    rows = site_wise_eval(table, histories)
    path = tmp_path / "report.csv"
    write_site_report(rows, path, meta={"seed": 0, "version": "t"})
    assert read_site_report(path) == rows


def test_history_dict_round_trip(planted_table):
    table, _ = planted_table
    history = run_rounds(table, FAST_GA, FAST_FOREST, k=3, max_rounds=2)
    payload = history_to_dict(history)
    restored = history_from_dict(payload)
    assert restored.converged == history.converged
    assert restored.rounds_run == history.rounds_run
    for a, b in zip(restored.rounds, history.rounds):
        assert np.array_equal(a.mask, b.mask)
        assert a.fitness == b.fitness


def test_run_rounds_by_site_per_site_seeds():
    cfg = synth.SynthConfig(sizes=(40, 40), d=4, k_informative=1,
                            effect_size=3.0, seed=9)
    table, _, _ = synth.generate(cfg)
    histories = run_rounds_by_site(table, FAST_GA, FAST_FOREST, k=3, max_rounds=2)
    assert set(histories) == {"S01", "S02"}
    again = run_rounds_by_site(table, FAST_GA, FAST_FOREST, k=3, max_rounds=2)
    for site in histories:
        assert histories[site].rounds_run == again[site].rounds_run
        for a, b in zip(histories[site].rounds, again[site].rounds):
            assert np.array_equal(a.mask, b.mask) and a.fitness == b.fitness
