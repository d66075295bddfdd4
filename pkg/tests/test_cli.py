import numpy as np
import pytest

from blindcfo.cli import main, parse_config
from blindcfo.harness import CSV_COLUMNS


CONFIG = """\
# reference scenario
K = 2
P = 4
N = 512
snr_db = 20
n_channels = 2
n_mc = 1
constellation = 4qam
pulse = hamming
cfo_range_mode = paper
seed = 5
pll_kp = 0.05
pll_ki = 0.005
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG)
    return str(path)


class TestParseConfig:
    def test_round_trip(self, config_path):
        cfg = parse_config(config_path)
        assert cfg.K == 2
        assert cfg.P == (4,)
        assert cfg.N == (512,)
        assert cfg.snr_db == (20.0,)
        assert cfg.n_channels == 2
        assert cfg.seed == 5
        assert cfg.pll.kp == 0.05

    def test_lists(self, tmp_path):
        path = tmp_path / "lists.cfg"
        path.write_text("N = 256, 1024\nsnr_db = 0,10,20\n")
        cfg = parse_config(str(path))
        assert cfg.N == (256, 1024)
        assert cfg.snr_db == (0.0, 10.0, 20.0)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("snr = 20\n")
        with pytest.raises(ValueError, match="unknown config key 'snr'"):
            parse_config(str(path))

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("K 2\n")
        with pytest.raises(ValueError, match="key = value"):
            parse_config(str(path))

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("\n# hello\nK = 3  # trailing\n")
        assert parse_config(str(path)).K == 3


class TestCli:
    def test_simulate_prints_summary(self, config_path, capsys):
        assert main(["simulate", "--config", config_path]) == 0
        out = capsys.readouterr().out
        assert "mse_cfo" in out
        assert "f_true" in out

    def test_sweep_writes_csv(self, config_path, tmp_path, capsys):
        out_csv = tmp_path / "results.csv"
        assert main(["sweep", "--config", config_path, "--out", str(out_csv)]) == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 2 * 1 * 2  # channels x mc x users

    def test_sweep_seed_override_changes_rows(self, config_path, tmp_path):
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        main(["sweep", "--config", config_path, "--out", str(a)])
        main(["sweep", "--config", config_path, "--out", str(b), "--seed", "99"])
        main(["sweep", "--config", config_path, "--out", str(c), "--seed", "5"])
        assert a.read_text() != b.read_text()
        assert a.read_text() == c.read_text()

    def test_crb_table(self, config_path, tmp_path):
        out_csv = tmp_path / "bounds.csv"
        assert main(["crb", "--config", config_path, "--out", str(out_csv)]) == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "K,P,N,snr_db,channel_id,user,f_true,crb_f"
        assert len(lines) == 1 + 2 * 2  # channels x users
        bound = float(lines[1].split(",")[-1])
        assert bound > 0

    def test_default_config_when_unspecified(self, capsys, tmp_path, monkeypatch):
        # simulate runs on built-in defaults without a config file
        assert main(["simulate", "--seed", "3"]) == 0
        assert "scenario" in capsys.readouterr().out
