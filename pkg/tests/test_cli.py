import json

from headtail.cli import main

SMALL_CFG = {
    "n_queries": 40,
    "k_samples": 4,
    "iterations": 2,
    "calibration_shots": 16,
}


def write_cfg(tmp_path, **extra):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**SMALL_CFG, **extra}))
    return path


def write_log(tmp_path, k_correct, K):
    lines = []
    for qid, k in sorted(k_correct.items()):
        for j in range(1, K + 1):
            lines.append(
                json.dumps(
                    {
                        "query_id": qid,
                        "gt_answer": f"a{qid}",
                        "extracted_answer": f"a{qid}" if j <= k else "no",
                        "token_count": 30,
                    }
                )
            )
    path = tmp_path / "log.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


class TestRunVerb:
    def test_run_writes_report(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        code = main(["run", "--config", str(cfg), "--seed", "0", "--output-dir", str(out)])
        assert code == 0
        assert (out / "metrics.csv").exists()
        assert "report written" in capsys.readouterr().out

    def test_flag_overrides(self, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["run", "--n", "30", "--k", "4", "--t", "1", "--strategy", "rp",
             "--seed", "1", "--output-dir", str(out)]
        )
        assert code == 0
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["n_queries"] == 30
        assert cfg["strategy"]["kind"] == "rp"
        assert cfg["seed"] == 1

    def test_k_below_threshold_is_config_error(self):
        assert main(["run", "--n", "10", "--k", "2", "--t", "1"]) == 2

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, mode="wat")
        assert main(["run", "--config", str(cfg)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_unknown_key_exit_code(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"mystery": 1}))
        assert main(["run", "--config", str(cfg)]) == 2


class TestRebalanceVerb:
    def test_tc_round_trip(self, tmp_path, capsys):
        src = write_log(tmp_path, {1: 6, 2: 3, 3: 1}, K=8)
        out = tmp_path / "train.jsonl"
        code = main(
            ["rebalance", "--input", str(src), "--output", str(out),
             "--strategy", "tc", "--k", "8", "--l", "4"]
        )
        assert code == 0
        assert len(out.read_text().splitlines()) == 8
        assert "24 records in" in capsys.readouterr().out

    def test_schema_error_exit_code(self, tmp_path, capsys):
        src = tmp_path / "log.jsonl"
        src.write_text('{"query_id": 1}\n')
        out = tmp_path / "train.jsonl"
        code = main(
            ["rebalance", "--input", str(src), "--output", str(out),
             "--strategy", "vanilla", "--k", "4"]
        )
        assert code == 3
        assert "line 1" in capsys.readouterr().err
        assert not out.exists()

    def test_sampler_strategy_rejected(self, tmp_path):
        src = write_log(tmp_path, {1: 1}, K=2)
        code = main(
            ["rebalance", "--input", str(src), "--output", str(tmp_path / "o.jsonl"),
             "--strategy", "gr", "--k", "2"]
        )
        assert code == 2

    def test_summary_csv(self, tmp_path):
        src = write_log(tmp_path, {1: 4}, K=4)
        summary = tmp_path / "summary.csv"
        code = main(
            ["rebalance", "--input", str(src), "--output", str(tmp_path / "o.jsonl"),
             "--strategy", "rp", "--k", "4", "--summary", str(summary)]
        )
        assert code == 0
        assert len(summary.read_text().splitlines()) == 2


class TestReportVerb:
    def test_recompute_from_snapshot(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--seed", "0", "--output-dir", str(out)])
        capsys.readouterr()
        code = main(["report", "--run-dir", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert text.startswith("iteration,role,total")
        assert len(text.strip().splitlines()) == 2

    def test_missing_snapshot(self, tmp_path, capsys):
        assert main(["report", "--run-dir", str(tmp_path)]) == 3


class TestSweepVerb:
    def test_small_grid(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "sweep"
        code = main(
            ["sweep", "--config", str(cfg), "--seeds", "0,1",
             "--strategies", "vanilla,rp", "--output-dir", str(out)]
        )
        assert code == 0
        summary = (out / "sweep_summary.csv").read_text().splitlines()
        assert len(summary) == 1 + 4
        assert (out / "vanilla_k4_l4_s4_seed0" / "metrics.csv").exists()
        assert (out / "rp_k4_l4_s4_seed1" / "metrics.csv").exists()
