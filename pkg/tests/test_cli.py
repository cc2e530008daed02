import csv

import numpy as np
import pytest

from conftest import admissible_component
from mhthfa.cli import GRID_HEADER, main, parse_int_set
from mhthfa.fit import MixtureModel, _cell_seed, responsibilities, sample_mixture
from mhthfa.io import SerializedModel, load_model, save_model


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    rng = np.random.default_rng(5)
    comps = [admissible_component(rng, 5, 1, 1, shift=s) for s in (0.0, 5.0)]
    model = MixtureModel(np.array([0.5, 0.5]), comps)
    X, lab = sample_mixture(model, 120, rng)
    path = tmp_path_factory.mktemp("cli") / "train.csv"
    write_csv(path, [f"f{j}" for j in range(5)] + ["group"], [[repr(float(v)) for v in x] + ["ab"[k - 1]] for x, k in zip(X, lab)])
    return path, X, lab


FAST = ["--starts", "1", "--max-iter", "15"]


class TestParseIntSet:
    @pytest.mark.parametrize("text,expected", [("3", [3]), ("1-4", [1, 2, 3, 4]), ("1..3", [1, 2, 3]), ("1,5,2-3", [1, 2, 3, 5])])
    def test_forms(self, text, expected):
        assert parse_int_set(text) == expected

    def test_bad(self):
        with pytest.raises(Exception):
            parse_int_set("a-b")


class TestFitAndPredict:
    def test_fit_predict_simulate_evaluate(self, dataset, tmp_path, capsys):
        path, X, lab = dataset
        model_path = tmp_path / "m.json"
        code = main(["fit", "--data", str(path), "--labels", "group", "--G", "2", "--q", "1", "--r", "1", "--seed", "2", "--out", str(model_path)] + FAST)
        assert code == 0
        out = capsys.readouterr().out
        assert "ARI=" in out and "q=1" in out
        sm = load_model(model_path)
        assert sm.dims == (2, 5, 1, 1)
        # the stored seed is the one the cell's fit actually used
        assert sm.metadata["seed"] == _cell_seed(2, 0)

        pred_path = tmp_path / "pred.csv"
        assert main(["predict", "--model", str(model_path), "--data", str(path), "--labels", "group", "--out", str(pred_path)]) == 0
        header, rows = read_csv(pred_path)
        assert header == ["z1", "z2", "map"]
        z = np.array([[float(v) for v in row[:2]] for row in rows])
        np.testing.assert_array_equal(z, responsibilities(X, sm.model))
        assert [int(row[2]) for row in rows] == list(np.argmax(z, axis=1) + 1)

        sim_path = tmp_path / "sim.csv"
        assert main(["simulate", "--model", str(model_path), "--n", "30", "--seed", "4", "--latents", "--out", str(sim_path)]) == 0
        header, rows = read_csv(sim_path)
        assert header == [f"f{j}" for j in range(5)] + ["component", "w", "v1", "u1"]
        assert len(rows) == 30 and all(float(row[6]) > 0 for row in rows)

        # evaluate the MAP labels against the generating groups
        truth_path = write_csv(tmp_path / "truth.csv", ["group"], [["ab"[k - 1]] for k in lab])
        assert main(["evaluate", "--true", f"{truth_path}:group", "--pred", f"{pred_path}:map"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("ARI=")

    def test_standardized_model_predicts_in_raw_units(self, dataset, tmp_path):
        path, X, _ = dataset
        model_path = tmp_path / "m.json"
        assert main(["fit", "--data", str(path), "--labels", "group", "--G", "2", "--q", "1", "--r", "1", "--standardize", "--out", str(model_path)] + FAST) == 0
        sm = load_model(model_path)
        assert sm.center is not None
        pred_path = tmp_path / "pred.csv"
        main(["predict", "--model", str(model_path), "--data", str(path), "--labels", "group", "--out", str(pred_path)])
        z = np.array([[float(v) for v in row[:2]] for row in read_csv(pred_path)[1]])
        np.testing.assert_array_equal(z, responsibilities((X - sm.center) / sm.scale, sm.model))

    def test_semi_supervised_scores_hidden_rows(self, dataset, capsys):
        path, _, _ = dataset
        code = main(["fit", "--data", str(path), "--labels", "group", "--hide-fraction", "0.5", "--split-seed", "1", "--G", "2", "--q", "1", "--r", "1"] + FAST)
        assert code == 0
        assert "ARI=" in capsys.readouterr().out


class TestGrid:
    def test_table(self, dataset, tmp_path):
        path, _, _ = dataset
        table = tmp_path / "grid.csv"
        code = main(["grid", "--data", str(path), "--labels", "group", "--G-set", "1-2", "--q-set", "1-3", "--r-set", "1", "--table", str(table)] + FAST)
        assert code == 0
        header, rows = read_csv(table)
        assert header == GRID_HEADER
        # p = 5 admits q = 1, 2 only
        assert sorted((int(r[1]), int(r[2])) for r in rows) == [(1, 1), (1, 2), (2, 1), (2, 2)]
        bics = [float(r[5]) for r in rows]
        assert bics == sorted(bics, reverse=True)


class TestExitCodes:
    def test_input_error(self, tmp_path, capsys):
        assert main(["fit", "--data", str(tmp_path / "none.csv"), "--G", "2", "--q", "1", "--r", "1"]) == 2
        bad = write_csv(tmp_path / "bad.csv", ["a", "b", "c", "d", "e"], [["1", "2", "x", "4", "5"]])
        assert main(["fit", "--data", str(bad), "--G", "2", "--q", "1", "--r", "1"]) == 2
        assert "column 'c'" in capsys.readouterr().err

    def test_corrupt_model(self, tmp_path, dataset):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        assert main(["predict", "--model", str(path), "--data", str(dataset[0]), "--labels", "group"]) == 2

    def test_constraint_violation(self, dataset):
        assert main(["fit", "--data", str(dataset[0]), "--labels", "group", "--G", "2", "--q", "4", "--r", "1"]) == 4

    def test_fit_failure(self, tmp_path):
        # four identical rows plus one outlier: every k-means start leaves a singleton cluster
        rows = [["0", "0", "0", "0", "0"]] * 4 + [["9", "9", "9", "9", "9"]]
        path = write_csv(tmp_path / "tiny.csv", list("abcde"), rows)
        assert main(["fit", "--data", str(path), "--G", "2", "--q", "1", "--r", "1", "--starts", "2"]) == 3

    def test_model_roundtrip_through_cli(self, dataset, tmp_path):
        rng = np.random.default_rng(0)
        model = MixtureModel(np.array([0.5, 0.5]), [admissible_component(rng, 5, 1, 1, shift=s) for s in (0.0, 5.0)])
        save_model(SerializedModel(model, column_names=tuple(f"f{j}" for j in range(5))), tmp_path / "m.json")
        assert main(["simulate", "--model", str(tmp_path / "m.json"), "--n", "5", "--out", str(tmp_path / "s.csv")]) == 0
        assert main(["simulate", "--model", str(tmp_path / "m.json"), "--n", "0"]) == 2
