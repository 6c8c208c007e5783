import numpy as np
import pytest
from click.testing import CliRunner

from alphaforge import marketdata
from alphaforge.cli import main
from alphaforge.config import (
    ConfigError,
    DEFAULTS,
    RunConfig,
    load_config,
)
from alphaforge.exprtree import parse


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "panel.csv"
    panel, _ = marketdata.synth_market(0, 8, 120, parse("Mean(close,20)"),
                                       0.9, horizon=5)
    marketdata.save_csv(panel, path)
    return str(path)


class TestRunConfig:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        for section, kv in DEFAULTS.items():
            for key, val in kv.items():
                assert cfg.get(section, key) == val

    def test_override_and_coercion(self):
        cfg = RunConfig({"miner": {"epochs": "30"},
                         "mcts": {"c_puct": "2.5"},
                         "grammar": {"level": "syn"}})
        assert cfg.get("miner", "epochs") == 30
        assert cfg.get("mcts", "c_puct") == 2.5
        assert cfg.get("grammar", "level") == "syn"
        # untouched keys keep their defaults
        assert cfg.get("miner", "batch_size") == DEFAULTS["miner"]["batch_size"]

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig({"nonsense": {"x": 1}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig({"miner": {"epoochs": 1}})

    def test_bad_type_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig({"miner": {"epochs": "many"}})

    def test_ini_round_trip(self, tmp_path):
        cfg = RunConfig({"run": {"seed": 7}, "target": {"horizon": 5}})
        path = tmp_path / "run.ini"
        path.write_text(cfg.to_ini())
        again = load_config(str(path))
        assert again.values == cfg.values

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/run.ini")

    def test_typed_views(self):
        cfg = RunConfig({"nn": {"d_h": 16}, "mcts": {"parallelism": 4},
                         "grammar": {"max_length": 0}})
        net = cfg.net_config(n_actions=10)
        assert net.d_h == 16 and net.n_actions == 10
        assert cfg.mcts_config().parallelism == 4
        assert cfg.mcts_config(deterministic=True).parallelism == 1
        level, max_length, b_ref = cfg.grammar_args()
        assert max_length is None and b_ref == 40.0


class TestCliEval:
    def test_metrics_printed(self, synth_csv):
        result = CliRunner().invoke(
            main, ["eval", "Mean(close,20)", synth_csv, "--horizon", "5"]
        )
        assert result.exit_code == 0
        lines = result.output.strip().split("\n")
        keys = [line.split("\t")[0] for line in lines]
        assert keys == ["ic", "rank_ic", "icir", "rank_icir"]
        ic = float(lines[0].split("\t")[1])
        assert ic > 0.5  # the planted factor scores well

    def test_parse_error_exit_code_and_caret(self, synth_csv):
        result = CliRunner().invoke(main, ["eval", "Mean(close,", synth_csv])
        assert result.exit_code == 2
        assert "^" in result.output

    def test_data_error_exit_code(self):
        result = CliRunner().invoke(main, ["eval", "close", "/nope.csv"])
        assert result.exit_code == 3

    def test_eval_error_exit_code(self, synth_csv):
        # Log of a negative difference is all-missing: nothing to correlate
        result = CliRunner().invoke(
            main, ["eval", "Log(Sub(close,Add(close,close)))", synth_csv]
        )
        assert result.exit_code == 4


class TestCliPipelines:
    def test_gen_synth_then_eval(self, tmp_path):
        runner = CliRunner()
        csv_path = str(tmp_path / "m.csv")
        result = runner.invoke(main, [
            "gen-synth", "--seed", "1", "--stocks", "6", "--days", "80",
            "--expr", "close", "--strength", "1.0", "--horizon", "5",
            "--out", csv_path,
        ])
        assert result.exit_code == 0
        result = runner.invoke(
            main, ["eval", "close", csv_path, "--horizon", "5"]
        )
        assert result.exit_code == 0
        ic = float(result.output.split("\n")[0].split("\t")[1])
        assert ic > 0.95

    def test_count_space_csv(self, tmp_path):
        result = CliRunner().invoke(main, [
            "count-space", "--grammar", "sem", "--max-n", "6", "--k", "4",
            "--out-dir", str(tmp_path),
        ])
        assert result.exit_code == 0
        lines = result.output.strip().split("\n")
        assert lines[0] == "n,cum_sigma,cum_syn,cum_sem,cum_sem_k"
        assert len(lines) == 7
        assert (tmp_path / "space.csv").exists()
        assert (tmp_path / "space.png").exists()

    def test_grammar_dump(self):
        result = CliRunner().invoke(main, ["grammar", "dump",
                                           "--level", "sem"])
        assert result.exit_code == 0
        rows = result.output.strip().split("\n")
        assert len(rows) == 55  # header + 54 rules
        assert rows[1].split("\t")[0] == "0"

    def test_backtest_outputs(self, synth_csv, tmp_path):
        ini = tmp_path / "bt.ini"
        ini.write_text("[backtest]\nk = 4\nn = 2\n[target]\nhorizon = 5\n")
        out = tmp_path / "run"
        result = CliRunner().invoke(main, [
            "backtest", "--config", str(ini), "--out-dir", str(out),
            "Mean(close,20)", synth_csv,
        ])
        assert result.exit_code == 0
        for name in ("report.txt", "nav.csv", "nav.png",
                     "resolved-config.ini", "versions.txt"):
            assert (out / name).exists()
        report = (out / "report.txt").read_text()
        assert "max_drawdown" in report and "ic\t" in report
        nav = (out / "nav.csv").read_text().strip().split("\n")
        assert nav[0] == "day,nav"
        assert float(nav[1].split(",")[1]) == 1.0

    def test_mine_writes_artifacts(self, synth_csv, tmp_path):
        ini = tmp_path / "mine.ini"
        ini.write_text(
            "[target]\nhorizon = 5\n"
            "[grammar]\nmax_length = 6\n"
            "[nn]\nd_emb = 8\nd_h = 8\nhead_hidden = 8\ndropout = 0.0\n"
            "[mcts]\nsimulations = 8\n"
            "[pool]\ncapacity = 3\nopt_steps = 40\n"
            "[miner]\nepochs = 1\ntrajectories_per_epoch = 2\n"
            "batch_size = 8\ntrain_batches_per_epoch = 1\n"
        )
        out = tmp_path / "run"
        result = CliRunner().invoke(main, [
            "mine", "--config", str(ini), "--data", synth_csv,
            "--out-dir", str(out), "--deterministic",
        ])
        assert result.exit_code == 0, result.output
        for name in ("pool.tsv", "training.csv", "training.png",
                     "params.bin", "resolved-config.ini"):
            assert (out / name).exists()
        pool_lines = (out / "pool.tsv").read_text().strip().split("\n")
        assert all(len(line.split("\t")) == 2 for line in pool_lines)
        header = (out / "training.csv").read_text().split("\n")[0]
        assert header.startswith("epoch,")

    def test_refine_writes_artifacts(self, synth_csv, tmp_path):
        ini = tmp_path / "refine.ini"
        ini.write_text(
            "[target]\nhorizon = 5\n"
            "[nn]\nd_emb = 8\nd_h = 8\nhead_hidden = 8\ndropout = 0.0\n"
            "[mcts]\nsimulations = 8\n"
            "[miner]\nepochs = 1\ntrajectories_per_epoch = 2\n"
            "batch_size = 8\ntrain_batches_per_epoch = 1\n"
        )
        out = tmp_path / "run"
        result = CliRunner().invoke(main, [
            "refine", "--config", str(ini), "--data", synth_csv,
            "--out-dir", str(out), "--deterministic",
            "Sub(Mean(volume,20),vwap)",
        ])
        assert result.exit_code == 0, result.output
        refined = (out / "refined.txt").read_text()
        assert "prefix\tSub(<Expr>,<Expr>)" in refined
        assert (out / "refine.csv").exists()
        assert (out / "refine.png").exists()
