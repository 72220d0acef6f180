"""End-to-end tests for the command-line front end.

Commands run in-process through cli.main so exit codes and stdout are
easy to assert; one smoke test goes through `python -m radmi` to cover
the real entry point.
"""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from radmi.cli import main
from radmi.dataio import read_tensor, write_tensor
from radmi.synthetic import generate_miniature_dataset


@pytest.fixture(scope="module")
def mini(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini")
    generate_miniature_dataset(root)
    return root


def _read_csv(path):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.setdefault(row["section_id"], {})[row["metric"]] = float(
                row["value"]
            )
    return rows


def _tree_bytes(root, suffixes=(".npy", ".csv", ".txt", ".json")):
    root = Path(root)
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.suffix in suffixes:
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


class TestRadmiCommand:
    def test_writes_three_maps(self, mini, tmp_path):
        out = tmp_path / "out"
        rc = main(["radmi", "--dataset", str(mini), "--out", str(out)])
        assert rc == 0
        for sid in ("s001", "s002", "s003"):
            arr = read_tensor(out / "sections" / sid / "radmi.npy")
            assert arr.shape == (32, 32)
            assert arr.dtype == np.float32
            assert np.isfinite(arr).all()
            assert arr.min() >= 0.0

    def test_manifest_config_echo(self, mini, tmp_path):
        out = tmp_path / "out"
        rc = main(["radmi", "--dataset", str(mini), "--out", str(out),
                   "--patch", "5", "--stride", "2"])
        assert rc == 0
        manifest = json.loads((out / "radmi_manifest.json").read_text())
        assert manifest["config"]["patch"] == 5
        assert manifest["config"]["stride"] == 2
        assert manifest["sections"]["s001"]["forward_passes"] == 1
        # no paths and no worker counts in the echo
        assert "dataset" not in manifest["config"]
        assert "jobs" not in manifest["config"]

    def test_single_layer_dataset_exits_2(self, tmp_path):
        sec = tmp_path / "data" / "sections" / "s001"
        sec.mkdir(parents=True)
        write_tensor(np.zeros((2, 8, 8), dtype=np.float32),
                     sec / "decoder_L1.npy")
        rc = main(["radmi", "--dataset", str(tmp_path / "data"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_singular_covariance_exits_3(self, tmp_path):
        sec = tmp_path / "data" / "sections" / "s001"
        sec.mkdir(parents=True)
        write_tensor(np.ones((2, 8, 8), dtype=np.float32),
                     sec / "decoder_L1.npy")
        write_tensor(np.ones((2, 16, 16), dtype=np.float32),
                     sec / "decoder_L2.npy")
        rc = main(["radmi", "--dataset", str(tmp_path / "data"),
                   "--out", str(tmp_path / "out"), "--epsilon", "0"])
        assert rc == 3

    def test_partial_failure_completes_other_sections(self, mini, tmp_path,
                                                      capsys):
        data = tmp_path / "data" / "sections"
        data.mkdir(parents=True)
        good = data / "s001"
        good.symlink_to(mini / "sections" / "s001")
        bad = data / "s002"
        bad.mkdir()
        write_tensor(np.zeros((2, 8, 8), dtype=np.float32),
                     bad / "decoder_L1.npy")
        out = tmp_path / "out"
        rc = main(["radmi", "--dataset", str(tmp_path / "data"),
                   "--out", str(out)])
        assert rc == 2
        assert (out / "sections" / "s001" / "radmi.npy").exists()
        assert "s002" in capsys.readouterr().err

    def test_figures_opt_in(self, mini, tmp_path):
        out = tmp_path / "out"
        assert main(["radmi", "--dataset", str(mini),
                     "--out", str(out)]) == 0
        assert not (out / "figures").exists()
        assert main(["radmi", "--dataset", str(mini), "--out", str(out),
                     "--figures"]) == 0
        assert (out / "figures" / "radmi_s001.png").exists()

    def test_invalid_patch_exits_2(self, mini, tmp_path):
        rc = main(["radmi", "--dataset", str(mini),
                   "--out", str(tmp_path / "out"), "--patch", "4"])
        assert rc == 2


class TestBaselineCommand:
    def test_all_names_produce_maps(self, mini, tmp_path):
        out = tmp_path / "out"
        for name in ("entropy", "msp", "ensemble", "mcdropout", "switches"):
            rc = main(["baseline", name, "--dataset", str(mini),
                       "--out", str(out)])
            assert rc == 0
            arr = read_tensor(out / "sections" / "s002" / f"{name}.npy")
            assert arr.shape == (32, 32)

    def test_forward_pass_counts_in_manifest(self, mini, tmp_path):
        out = tmp_path / "out"
        expected = {"entropy": 1, "msp": 1, "ensemble": 3,
                    "mcdropout": 2, "switches": 5}
        for name, count in expected.items():
            assert main(["baseline", name, "--dataset", str(mini),
                         "--out", str(out)]) == 0
            manifest = json.loads((out / f"{name}_manifest.json").read_text())
            assert manifest["sections"]["s001"]["forward_passes"] == count

    def test_missing_stack_exits_2(self, tmp_path):
        sec = tmp_path / "data" / "sections" / "s001"
        sec.mkdir(parents=True)
        rng = np.random.default_rng(42)
        write_tensor(rng.normal(size=(2, 8, 8)).astype(np.float32),
                     sec / "decoder_L1.npy")
        write_tensor(rng.normal(size=(2, 16, 16)).astype(np.float32),
                     sec / "decoder_L2.npy")
        rc = main(["baseline", "ensemble", "--dataset",
                   str(tmp_path / "data"), "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_entropy_matches_library(self, mini, tmp_path):
        from radmi.baselines import softmax_entropy
        from radmi.dataio import load_section

        out = tmp_path / "out"
        assert main(["baseline", "entropy", "--dataset", str(mini),
                     "--out", str(out)]) == 0
        section = load_section(mini / "sections" / "s001")
        expected = softmax_entropy(section.probs).values.astype(np.float32)
        got = read_tensor(out / "sections" / "s001" / "entropy.npy")
        assert_array_equal(got, expected)


class TestEvalCommand:
    def test_self_evaluation_is_ideal(self, mini, tmp_path):
        out = tmp_path / "out"
        rc = main(["eval", "--dataset", str(mini), "--out", str(out),
                   "--methods", "entropy", "--reference", "entropy",
                   "--no-figures"])
        assert rc == 0
        rows = _read_csv(out / "eval" / "per_section_entropy.csv")
        assert sorted(rows) == ["s001", "s002", "s003"]
        for metrics in rows.values():
            for name in ("pearson", "spearman", "cosine", "miou", "dice",
                         "hist_intersection"):
                assert_allclose(metrics[name], 1.0, atol=1e-9)
            for name in ("kl_div", "js_div", "l2", "chamfer", "emd"):
                assert_allclose(metrics[name], 0.0, atol=1e-9)

    def test_summary_table_layout(self, mini, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["eval", "--dataset", str(mini), "--out", str(out),
                   "--methods", "radmi,entropy", "--reference", "ensemble",
                   "--no-figures"])
        assert rc == 0
        text = (out / "eval" / "summary.txt").read_text()
        assert capsys.readouterr().out == text
        assert "correlation (higher is better)" in text
        assert "overlap (higher is better)" in text
        assert "distance (lower is better)" in text
        assert "method: radmi" in text
        assert "method: entropy" in text
        assert "±" in text
        footer = [l for l in text.splitlines() if l.startswith("forward passes")]
        assert footer == ["forward passes: radmi=1, entropy=1, msp=1, "
                          "ensemble=3, mcdropout=2, switches=5"]

    def test_empty_methods_exits_2(self, mini, tmp_path):
        rc = main(["eval", "--dataset", str(mini),
                   "--out", str(tmp_path / "out"), "--methods", "",
                   "--no-figures"])
        assert rc == 2

    def test_unknown_method_exits_2(self, mini, tmp_path):
        rc = main(["eval", "--dataset", str(mini),
                   "--out", str(tmp_path / "out"), "--methods", "sorcery",
                   "--no-figures"])
        assert rc == 2

    def test_missing_reference_dir_exits_2(self, mini, tmp_path):
        rc = main(["eval", "--dataset", str(mini),
                   "--out", str(tmp_path / "out"), "--methods", "entropy",
                   "--reference", str(tmp_path / "nowhere"), "--no-figures"])
        assert rc == 2

    def test_external_reference_dir(self, mini, tmp_path):
        out1 = tmp_path / "out1"
        assert main(["baseline", "ensemble", "--dataset", str(mini),
                     "--out", str(out1)]) == 0
        ref_dir = tmp_path / "refs"
        ref_dir.mkdir()
        for sid in ("s001", "s002", "s003"):
            arr = read_tensor(out1 / "sections" / sid / "ensemble.npy")
            write_tensor(arr, ref_dir / f"{sid}.npy")
        out2 = tmp_path / "out2"
        rc = main(["eval", "--dataset", str(mini), "--out", str(out2),
                   "--methods", "ensemble", "--reference", str(ref_dir),
                   "--no-figures"])
        assert rc == 0
        rows = _read_csv(out2 / "eval" / "per_section_ensemble.csv")
        for metrics in rows.values():
            assert_allclose(metrics["pearson"], 1.0, atol=1e-9)

    def test_reuses_precomputed_maps(self, mini, tmp_path):
        out = tmp_path / "out"
        assert main(["radmi", "--dataset", str(mini),
                     "--out", str(out)]) == 0
        before = (out / "sections" / "s001" / "radmi.npy").read_bytes()
        rc = main(["eval", "--dataset", str(mini), "--out", str(out),
                   "--methods", "radmi", "--reference", "ensemble",
                   "--no-figures"])
        assert rc == 0
        after = (out / "sections" / "s001" / "radmi.npy").read_bytes()
        assert before == after

    def test_figures_rendered_by_default(self, mini, tmp_path):
        out = tmp_path / "out"
        rc = main(["eval", "--dataset", str(mini), "--out", str(out),
                   "--methods", "entropy", "--reference", "ensemble"])
        assert rc == 0
        fig_dir = out / "eval" / "figures"
        assert (fig_dir / "section_s001.png").exists()
        assert (fig_dir / "metrics_entropy.png").exists()

    def test_jobs_do_not_change_bytes(self, mini, tmp_path):
        trees = {}
        for jobs in ("1", "4"):
            out = tmp_path / f"out{jobs}"
            rc = main(["eval", "--dataset", str(mini), "--out", str(out),
                       "--methods", "radmi,entropy,ensemble",
                       "--reference", "ensemble", "--jobs", jobs,
                       "--no-figures"])
            assert rc == 0
            trees[jobs] = _tree_bytes(out)
        assert trees["1"].keys() == trees["4"].keys()
        for name in trees["1"]:
            assert trees["1"][name] == trees["4"][name], name


class TestSynthCommand:
    def test_correlated_field_prints_true_mi(self, tmp_path, capsys):
        rc = main(["synth", "correlated-field", "--out",
                   str(tmp_path / "d"), "--rho", "0.8", "--channels", "1"])
        assert rc == 0
        assert "true_mi=0.510826" in capsys.readouterr().out

    def test_correlated_field_layout(self, tmp_path):
        root = tmp_path / "d"
        rc = main(["synth", "correlated-field", "--out", str(root),
                   "--hw", "24x16", "--channels", "2"])
        assert rc == 0
        a = read_tensor(root / "sections" / "s001" / "decoder_L1.npy")
        b = read_tensor(root / "sections" / "s001" / "decoder_L2.npy")
        assert a.shape == (2, 24, 16) and b.shape == (2, 24, 16)

    def test_invalid_rho_exits_2(self, tmp_path):
        rc = main(["synth", "correlated-field", "--out",
                   str(tmp_path / "d"), "--rho", "1.5"])
        assert rc == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        trees = {}
        for run in ("a", "b"):
            root = tmp_path / run
            rc = main(["synth", "boundary-scene", "--out", str(root),
                       "--seed", "5"])
            assert rc == 0
            trees[run] = _tree_bytes(root)
        assert trees["a"] == trees["b"]
        assert any(n.endswith("decoder_L2.npy") for n in trees["a"])

    def test_boundary_scene_layout(self, tmp_path):
        root = tmp_path / "d"
        rc = main(["synth", "boundary-scene", "--out", str(root),
                   "--hw", "32x32"])
        assert rc == 0
        ref = read_tensor(root / "reference" / "s001.npy")
        mask = read_tensor(root / "band_mask" / "s001.npy")
        assert ref.shape == (32, 32) and ref.dtype == np.float32
        assert mask.shape == (32, 32) and mask.dtype == np.int32
        coarse = read_tensor(root / "sections" / "s001" / "decoder_L1.npy")
        fine = read_tensor(root / "sections" / "s001" / "decoder_L2.npy")
        assert coarse.shape[1:] == (16, 16) and fine.shape[1:] == (32, 32)

    def test_miniature_matches_library_generator(self, mini, tmp_path):
        root = tmp_path / "d"
        rc = main(["synth", "miniature", "--out", str(root)])
        assert rc == 0
        for rel in ("sections/s001/decoder_L1.npy",
                    "sections/s003/probs.npy"):
            assert (root / rel).read_bytes() == (mini / rel).read_bytes()

    def test_bad_hw_exits_2(self, tmp_path):
        rc = main(["synth", "boundary-scene", "--out", str(tmp_path / "d"),
                   "--hw", "banana"])
        assert rc == 2


class TestConfigFile:
    def test_toml_supplies_defaults(self, mini, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(
            f'dataset = "{mini}"\nout = "{tmp_path / "out"}"\npatch = 5\n'
        )
        rc = main(["radmi", "--config", str(cfg)])
        assert rc == 0
        manifest = json.loads((tmp_path / "out" / "radmi_manifest.json")
                              .read_text())
        assert manifest["config"]["patch"] == 5

    def test_flags_win_over_toml(self, mini, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('patch = 5\nstride = 2\n')
        out = tmp_path / "out"
        rc = main(["radmi", "--dataset", str(mini), "--out", str(out),
                   "--config", str(cfg), "--patch", "3"])
        assert rc == 0
        manifest = json.loads((out / "radmi_manifest.json").read_text())
        assert manifest["config"]["patch"] == 3
        assert manifest["config"]["stride"] == 2

    def test_invalid_toml_exits_2(self, mini, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("patch = [unclosed\n")
        rc = main(["radmi", "--dataset", str(mini),
                   "--out", str(tmp_path / "out"), "--config", str(cfg)])
        assert rc == 2

    def test_missing_out_exits_2(self, mini):
        rc = main(["radmi", "--dataset", str(mini)])
        assert rc == 2


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "radmi", "synth", "correlated-field",
             "--out", str(tmp_path / "d"), "--rho", "0.8",
             "--channels", "1"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "true_mi=0.510826" in proc.stdout

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "radmi" in capsys.readouterr().out
