import numpy as np
import pytest

from svf import svt1
from svf.attention import AttentionSpec, AttentionWeights
from svf.cli import main
from svf.tensor import SpikeTensor


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    rc = main([*argv, "--out", str(out)])
    return rc, out.read_text() if out.exists() else None


class TestJL:
    def test_curve(self, tmp_path):
        rc, text = run(tmp_path, "jl-verify", "--dims", "16,64,256", "--pairs", "2000", "--seed", "7")
        assert rc == 0
        assert len(text.splitlines()) == 4

    @pytest.mark.parametrize("argv", [["--pairs", "0"], ["--dims", "a,b"], ["--dims", "0"]])
    def test_bad_flags(self, tmp_path, argv):
        with pytest.raises(SystemExit) as exc:
            main(["jl-verify", *argv])
        assert exc.value.code == 1


class TestEquiv:
    def test_default_passes(self, tmp_path, capsys):
        rc, text = run(tmp_path, "equiv-check", "--trials", "30")
        assert rc == 0
        assert "fail" not in text

    def test_degenerate_dim(self, tmp_path):
        assert run(tmp_path, "equiv-check", "--max-dims", "1", "--trials", "20")[0] == 0

    def test_self_test_fails_with_reproducer(self, tmp_path, capsys):
        rc, _ = run(tmp_path, "equiv-check", "--self-test", "--trials", "5")
        assert rc == 2
        assert "reproducer: Q=['1'] K=['1']" in capsys.readouterr().out


class TestAttnBench:
    def test_rows(self, tmp_path):
        rc, text = run(tmp_path, "attn-bench", "--T-list", "2,4", "--N", "4", "--D", "8")
        assert rc == 0
        assert len(text.splitlines()) == 3

    def test_invalid_spec(self, tmp_path):
        assert run(tmp_path, "attn-bench", "--D", "6", "--M", "4")[0] == 1


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "wb.ini"
    p.write_text("[attention]\nT = 2\nN = 4\nD = 8\nheads = 2\n")
    return p


class TestEnergyReport:
    def _input(self, tmp_path, bits):
        p = tmp_path / "x.svt1"
        svt1.save(p, SpikeTensor.from_bits(bits))
        return p

    def test_zero_input(self, tmp_path, small_config):
        x = self._input(tmp_path, np.zeros((1, 2, 4, 8), np.uint8))
        rc, text = run(tmp_path, "energy-report", "--config", str(small_config), "--input", str(x))
        assert rc == 0
        total = text.splitlines()[-1].split(",")
        assert total[0] == "total" and float(total[5]) == 0.0

    def test_ratio_column(self, tmp_path, small_config, rng):
        x = self._input(tmp_path, (rng.random((2, 2, 4, 8)) < 0.4).astype(np.uint8))
        _, text = run(tmp_path, "energy-report", "--config", str(small_config), "--input", str(x))
        for line in text.splitlines()[1:]:
            f = line.split(",")
            assert abs(float(f[6]) - float(f[3]) * 0.9 / 4.6) < 1e-12

    def test_weight_manifest(self, tmp_path, small_config, rng):
        spec = AttentionSpec(T=2, N=4, D=8, heads=2)
        man = svt1.save_weights(tmp_path / "w", AttentionWeights.random(spec, 5).to_arrays())
        x = self._input(tmp_path, (rng.random((1, 2, 4, 8)) < 0.5).astype(np.uint8))
        args = ["energy-report", "--config", str(small_config), "--input", str(x)]
        a = run(tmp_path, *args, "--weights", str(man), name="a.csv")
        b = run(tmp_path, *args, "--seed", "5", name="b.csv")
        assert a == b and a[0] == 0

    def test_unreadable_input(self, tmp_path):
        assert run(tmp_path, "energy-report", "--input", str(tmp_path / "none.svt1"))[0] == 1
        bad = tmp_path / "bad.svt1"
        bad.write_bytes(b"junk")
        assert run(tmp_path, "energy-report", "--input", str(bad))[0] == 1


class TestTrainToy:
    def test_zero_epochs_fails_threshold(self, tmp_path):
        cfg = tmp_path / "t.ini"
        cfg.write_text("[training]\nn_test = 256\n")
        rc, text = run(tmp_path, "train-toy", "--epochs", "0", "--config", str(cfg))
        assert rc == 2
        assert text.splitlines() == ["epoch,train_loss,test_acc"]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit(self, tmp_path):
        cfg = tmp_path / "t.ini"
        cfg.write_text("[training]\nlr = 1e200\nn_train = 32\nn_test = 32\nT = 4\nsize = 8\n")
        assert run(tmp_path, "train-toy", "--epochs", "3", "--config", str(cfg))[0] == 3


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ["jl-verify", "--dims", "16,64", "--pairs", "500", "--seed", "3"],
        ["equiv-check", "--trials", "10", "--seed", "3"],
        ["attn-bench", "--T-list", "2,4", "--N", "4", "--D", "8", "--seed", "3"],
    ])
    def test_rerun_identical(self, tmp_path, argv):
        assert run(tmp_path, *argv, name="a.csv")[1] == run(tmp_path, *argv, name="b.csv")[1]
