import numpy as np
import pytest

from prefcache.cli import main as cli_main
from prefcache.core import FormatError, RequestMatrix, SeededRng, load_request_matrix
from prefcache.forecaster import load_forecast
from prefcache.harness import (
    RESULT_FIELDS,
    ExperimentConfig,
    ResultRow,
    compare_static_dynamic,
    config_from_sources,
    load_results,
    load_rho,
    parse_config_file,
    run_experiment,
    run_pipeline,
    write_plot_data,
    write_results,
    write_rho,
    write_summary,
)
from prefcache.placement import load_schedule
from prefcache.preference import aggregate_preference, profile_from_counts


def tiny_config(**overrides):
    base = dict(
        num_bs=2,
        users_per_bs=2,
        num_contents=12,
        bs_capacity=3,
        user_capacity=2,
        n_req_min=15,
        n_req_max=30,
        history_slots=24,
        horizon=4,
        hidden_dim=6,
        epochs=12,
        patience=5,
        seed=5,
        num_seeds=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_file_then_flag_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment line\n"
            "num_bs = 2\n"
            "gamma_max = 1.2  # trailing comment\n"
            "schemes = overlapping,homogeneous\n"
            "amplitudes = 0.5,0.5\n"
        )
        cfg = config_from_sources(path, {"gamma_max": "1.4"})
        assert cfg.num_bs == 2
        assert cfg.gamma_max == 1.4  # flag wins over file
        assert cfg.schemes == ("overlapping", "homogeneous")
        assert cfg.amplitudes == (0.5, 0.5)

    def test_unknown_key_reports_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("nope = 3\n")
        with pytest.raises(FormatError) as exc:
            parse_config_file(path)
        assert exc.value.line_no == 1

    def test_validation_catches_bad_values(self):
        with pytest.raises(ValueError):
            tiny_config(history_slots=2).validate()
        with pytest.raises(ValueError):
            tiny_config(sweep_axis="sideways").validate()
        with pytest.raises(ValueError):
            tiny_config(schemes=("nonsense",)).validate()
        with pytest.raises(ValueError):
            tiny_config(sweep_axis="cb", sweep_min=5, sweep_max=99).validate()

    def test_sweep_points(self):
        cfg = tiny_config(sweep_axis="cb", sweep_min=2, sweep_max=4)
        assert cfg.sweep_points() == [(2, 2), (3, 2), (4, 2)]
        cfg = tiny_config(sweep_axis="cd", sweep_min=1, sweep_max=2)
        assert cfg.sweep_points() == [(3, 1), (3, 2)]
        assert tiny_config().sweep_points() == [(3, 2)]


class TestRunExperiment:
    def test_empty_scheme_list_gives_empty_table(self):
        rows = run_experiment(tiny_config(schemes=()))
        assert rows == []

    def test_row_count_matches_points_times_schemes(self):
        cfg = tiny_config(
            sweep_axis="cb",
            sweep_min=2,
            sweep_max=4,
            schemes=("bs-first", "user-first", "overlapping"),
        )
        rows = run_experiment(cfg)
        assert len(rows) == 3 * 3
        assert {(r.c_b, r.c_d) for r in rows} == {(2, 2), (3, 2), (4, 2)}

    def test_deterministic_costs(self):
        cfg = tiny_config(schemes=("overlapping", "static-zipf"))
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert [(r.scheme, r.cost) for r in a] == [(r.scheme, r.cost) for r in b]

    def test_cost_bounds(self):
        cfg = tiny_config(schemes=("bs-first", "user-first", "overlapping", "homogeneous", "static-zipf"))
        for row in run_experiment(cfg):
            assert cfg.storage_cost <= row.cost <= cfg.comm_cloud + cfg.storage_cost

    def test_oracle_mode_runs(self):
        rows_f = run_experiment(tiny_config(schemes=("overlapping",)))
        rows_o = run_experiment(tiny_config(schemes=("overlapping",), rho_mode="oracle"))
        assert len(rows_f) == len(rows_o) == 1

    def test_static_cost_non_increasing_in_bs_capacity(self):
        cfg = tiny_config(sweep_axis="cb", sweep_min=0, sweep_max=6, schemes=("static-zipf",))
        rows = run_experiment(cfg)
        costs = [r.cost for r in sorted(rows, key=lambda r: r.c_b)]
        assert all(costs[i + 1] <= costs[i] + 1e-9 for i in range(len(costs) - 1))

    def test_multi_seed_rows(self):
        cfg = tiny_config(schemes=("static-zipf",), num_seeds=3)
        rows = run_experiment(cfg)
        assert [r.seed for r in rows] == [5, 6, 7]


class TestCompareStaticDynamic:
    def test_degenerate_single_content_demand_ties(self):
        # every user only ever requests content 0: both placements put it at
        # the user tier, so the costs coincide
        def provider(seed):
            counts = np.zeros((28, 4, 12), dtype=np.int64)
            counts[:, :, 0] = 20
            return RequestMatrix(counts, seed=seed)

        cfg = tiny_config(epochs=25)
        rows, table = compare_static_dynamic(cfg, dataset_provider=provider)
        assert {r.scheme for r in rows} == {"static-zipf", "homogeneous"}
        assert table[0]["difference"] == pytest.approx(0.0, abs=1e-9)

    def test_rotating_preferences_favor_dynamic(self):
        def provider(seed):
            gen = SeededRng(seed, "rot").generator()
            counts = np.zeros((28, 4, 12), dtype=np.int64)
            for t in range(28):
                pair = 2 * (t % 4)
                counts[t, :, pair] = 25 + gen.integers(0, 3)
                counts[t, :, pair + 1] = 20 + gen.integers(0, 3)
            return RequestMatrix(counts, seed=seed)

        cfg = tiny_config(epochs=120, hidden_dim=12, patience=25, num_seeds=2)
        _, table = compare_static_dynamic(cfg, dataset_provider=provider)
        assert table[0]["difference"] > 0

    def test_single_scheme_request_still_reports_both_columns(self):
        cfg = tiny_config()
        _, table = compare_static_dynamic(cfg)
        assert set(table[0]) == {"c_b", "c_d", "static_cost", "dynamic_cost", "difference"}


class TestResultFiles:
    ROWS = [
        ResultRow("overlapping", 3, 2, 4321.5, 5, 0.25),
        ResultRow("static-zipf", 3, 2, 6543.25, 5, 0.5),
        ResultRow("overlapping", 3, 2, 4421.5, 6, 0.25),
    ]

    def test_round_trip_without_timing(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results(self.ROWS, path)
        loaded = load_results(path)
        assert [(r.scheme, r.c_b, r.c_d, r.cost, r.seed) for r in loaded] == [
            (r.scheme, r.c_b, r.c_d, r.cost, r.seed) for r in self.ROWS
        ]
        assert all(r.wall_time == 0.0 for r in loaded)

    def test_timing_columns_match_declared_order(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results(self.ROWS, path, include_timing=True)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(RESULT_FIELDS)
        assert header == "scheme,c_b,c_d,cost,seed,wall_time"
        loaded = load_results(path)
        assert [r.wall_time for r in loaded] == [0.25, 0.5, 0.25]

    def test_truncated_results_report_line(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("scheme,c_b,c_d,cost,seed\noverlapping,3,2\n")
        with pytest.raises(FormatError) as exc:
            load_results(path)
        assert exc.value.line_no == 2

    def test_summary_and_plot_data(self, tmp_path):
        write_summary(self.ROWS, tmp_path / "summary.csv")
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[0] == "scheme,c_b,c_d,mean_cost,stderr,num_seeds"
        overlap = next(l for l in lines if l.startswith("overlapping"))
        assert overlap.endswith(",2")  # two seeds aggregated
        write_plot_data(self.ROWS, tmp_path / "plot.csv", axis="cb")
        plot = (tmp_path / "plot.csv").read_text().splitlines()
        assert plot[0] == "x,scheme,cost"
        assert plot[1].startswith("3,overlapping,")

    def test_rho_round_trip(self, tmp_path):
        profiles = [profile_from_counts(np.array([[2, 1], [0, 3]]), slot=9)]
        agg = aggregate_preference(profiles)
        path = tmp_path / "rho.csv"
        write_rho(agg, path)
        loaded = load_rho(path)
        assert np.allclose(loaded.rho, agg.rho)
        assert loaded.start_slot == 9 and loaded.horizon == 1


class TestPipeline:
    def test_placement_never_sees_actual_future(self):
        # oracle mode changes rho only; the placement joints stay forecast-based
        cfg_f = tiny_config(schemes=("overlapping",))
        cfg_o = tiny_config(schemes=("overlapping",), rho_mode="oracle")
        b_f = run_pipeline(cfg_f, cfg_f.seed)
        b_o = run_pipeline(cfg_o, cfg_o.seed)
        assert np.array_equal(b_f.joints, b_o.joints)
        assert not np.allclose(b_f.rho.rho, b_o.rho.rho)

    def test_short_dataset_rejected(self):
        cfg = tiny_config()
        with pytest.raises(ValueError):
            run_pipeline(cfg, 0, dataset=RequestMatrix(np.zeros((3, 4, 12), dtype=int)))


class TestCli:
    def test_gen_train_place_evaluate_chain(self, tmp_path):
        out = tmp_path / "run"
        common = [
            "--num_bs", "2", "--users_per_bs", "2", "--num_contents", "12",
            "--bs_capacity", "3", "--user_capacity", "2",
            "--n_req_min", "15", "--n_req_max", "30",
            "--history_slots", "24", "--horizon", "4",
            "--hidden_dim", "6", "--epochs", "12", "--patience", "5",
            "--seed", "5", "--out_dir", str(out),
        ]
        assert cli_main(["gen", *common]) == 0
        dataset = load_request_matrix(out / "dataset.csv")
        assert dataset.slots == 28  # history + horizon
        assert cli_main(["train", "--data", str(out / "dataset.csv"), *common]) == 0
        forecast = load_forecast(out / "forecast.csv")
        assert forecast.horizon == 4 and forecast.start_slot == 24
        assert cli_main([
            "place", "--forecast", str(out / "forecast.csv"), "--scheme", "overlapping", *common,
        ]) == 0
        sched, scheme = load_schedule(out / "schedule-overlapping.csv")
        assert scheme == "overlapping" and sched.num_slots == 4
        assert cli_main([
            "evaluate", "--schedule", str(out / "schedule-overlapping.csv"),
            "--forecast", str(out / "forecast.csv"),
            "--out", str(out / "eval.csv"), *common,
        ]) == 0
        row = load_results(out / "eval.csv")[0]
        assert 2000.0 <= row.cost <= 7000.0

    def test_forecast_baseline_method(self, tmp_path):
        out = tmp_path / "run"
        common = [
            "--num_bs", "2", "--users_per_bs", "2", "--num_contents", "12",
            "--bs_capacity", "3", "--user_capacity", "2",
            "--n_req_min", "15", "--n_req_max", "30",
            "--history_slots", "24", "--horizon", "4", "--seed", "5",
            "--out_dir", str(out),
        ]
        assert cli_main(["gen", *common]) == 0
        assert cli_main([
            "forecast", "--data", str(out / "dataset.csv"), "--method", "last-value",
            "--out", str(out / "fc.csv"), *common,
        ]) == 0
        fc = load_forecast(out / "fc.csv")
        dataset = load_request_matrix(out / "dataset.csv")
        assert np.array_equal(fc.counts[0], dataset.counts[23])

    def test_config_file_driven_sweep(self, tmp_path):
        out = tmp_path / "run"
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text(
            "num_bs = 2\nusers_per_bs = 2\nnum_contents = 12\n"
            "bs_capacity = 3\nuser_capacity = 2\n"
            "n_req_min = 15\nn_req_max = 30\n"
            "history_slots = 24\nhorizon = 4\n"
            "hidden_dim = 6\nepochs = 12\npatience = 5\nseed = 5\n"
            "schemes = overlapping,static-zipf\n"
            "sweep_axis = cb\nsweep_min = 2\nsweep_max = 3\n"
            f"out_dir = {out}\n"
        )
        assert cli_main(["sweep", "--config", str(cfg_file)]) == 0
        rows = load_results(out / "results.csv")
        assert len(rows) == 4
        assert (out / "summary.csv").exists() and (out / "plotdata.csv").exists()
