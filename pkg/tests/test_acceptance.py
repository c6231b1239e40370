"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; tolerances are pinned here and nowhere else.
"""

import json
import time

import numpy as np
import pytest

import localattr as la
from localattr import autodiff as ad
from localattr.cli import main
from localattr.datasets import write_idx

from conftest import CNN_LAYERS, DIGITS_TRAIN_CFG, random_cnn, random_mlp


def report(number, description, ok):
    print(f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'} - {description}")
    assert ok, f"criterion {number}: {description}"


@pytest.fixture(scope="module")
def digits_mlp(digits_split):
    """Small trained MLP with two dense layers (permutable hidden units)."""
    (xtr, ytr), _ = digits_split
    layers = [la.Flatten(), la.Dense(64, 32), la.ReLU(), la.Dense(32, 10)]
    model = la.build_model((1, 8, 8), layers, seed=1)
    cfg = la.TrainConfig(learning_rate=0.3, epochs=15, batch_size=32, seed=1)
    return la.train_sgd(model, la.make_dataset(xtr, ytr, 10), cfg).model


def test_criterion_1_gradient_correctness(rng):
    started = time.monotonic()
    worst = 0.0
    for trial in range(10):
        if trial % 2 == 0:
            model = random_mlp(trial, in_dim=5, hidden=9, classes=3)
            x = rng.random(5)
        else:
            model = random_cnn(trial)
            x = rng.random((1, 6, 6))
        label = int(rng.integers(model.n_classes))
        g = la.grad_input(model, x, la.CrossEntropy(label))
        fd = la.finite_diff_gradient(model, x, la.CrossEntropy(label), h=1e-4)
        scale = max(np.abs(fd).max(), 1e-12)
        worst = max(worst, np.abs(g - fd).max() / scale)
    elapsed = time.monotonic() - started
    report(1, f"grad vs finite differences, max rel err {worst:.2e} in {elapsed:.1f}s",
           worst < 1e-5 and elapsed < 60.0)


def test_criterion_2_cross_entropy_closed_form(rng):
    worst = 0.0
    cases = [rng.normal(0.0, 3.0, size=6) for _ in range(50)]
    cases += [np.array([100.0, 0.0]), np.array([0.0, 100.0, 50.0]),
              np.array([-50.0, 50.0])]
    for z in cases:
        for label in range(z.size):
            _, grad = la.softmax_cross_entropy(z, label)
            expect = ad.softmax(z)
            expect[label] -= 1.0
            worst = max(worst, np.abs(grad - expect).max())
    report(2, f"grad_logits == softmax - onehot, max err {worst:.2e}", worst < 1e-12)


def test_criterion_3_containment(rng):
    model = random_mlp(31)
    violations = 0
    for trial in range(100):
        x = rng.random(6)
        mode = "linear" if trial % 2 else "constant"
        space = la.make_local_space(x, 20.0, mode, 1e-3)
        _, trace = la.local_attribution(model, x, int(rng.integers(4)),
                                        n_iter=3, space=space, k_targets=2)
        for s in trace.steps:
            if not s.deviations_exact(space.radius):
                violations += 1
            if not np.array_equal(s.x_before, np.clip(x + s.origin_delta, 0, 1)):
                violations += 1
            if not np.array_equal(s.x_after, np.clip(s.x_before + s.raw_delta, 0, 1)):
                violations += 1
    report(3, f"containment violations over 100 runs: {violations}", violations == 0)


def test_criterion_4_exploration_count(rng):
    model = la.build_model((6,), [la.Dense(6, 8), la.ReLU(), la.Dense(8, 10)], seed=2)
    ok = True
    for n_iter in (1, 5, 20):
        for k in (0, 2, 9):
            _, trace = la.local_attribution(model, rng.random(6), 0,
                                            n_iter=n_iter, k_targets=k)
            ok = ok and trace.gradient_evaluations == (k + 1) * n_iter
            ok = ok and len(trace.steps) == (k + 1) * n_iter
    report(4, "gradient evaluations == (k_targets+1)*N on the (N,k) grid", ok)


def test_criterion_5_completeness_residual():
    identity_ok = True
    ratios = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        model = la.build_model((8,), [la.Dense(8, 4)], seed=seed)
        x = 0.3 + 0.4 * rng.random(8)
        label = int(rng.integers(4))
        residuals = []
        for s_range in (20.0, 40.0):
            space = la.make_local_space(x, s_range, "constant")
            amap, trace = la.local_attribution(model, x, label, n_iter=1,
                                               space=space, k_targets=2)
            res = la.completeness_residual(trace, model)
            identity_ok = identity_ok and abs(res.attr_total - res.first_order_total) < 1e-12
            identity_ok = identity_ok and abs(amap.values.sum() - res.attr_total) < 1e-12
            residuals.append(abs(res.first_order_total - res.loss_delta_total))
        ratios.append(residuals[0] / residuals[1])
    mean_ratio = float(np.mean(ratios))
    report(5, f"attr==first-order exactly; residual ratio {mean_ratio:.3f} in [3,5]",
           identity_ok and 3.0 <= mean_ratio <= 5.0)


def test_criterion_6_implementation_invariance(digits_mlp, digits_split, rng):
    _, (xte, _) = digits_split
    perm_twin = la.permute_hidden_units(digits_mlp, 0, rng.permutation(32))
    id_twin = la.insert_identity_layer(digits_mlp, 3)
    worst = 0.0
    for i in range(20):
        x = xte[i]
        y = int(digits_mlp.predict(x)[0])
        base, _ = la.local_attribution(digits_mlp, x, y, n_iter=5, k_targets=3)
        for twin in (perm_twin, id_twin):
            other, _ = la.local_attribution(twin, x, y, n_iter=5, k_targets=3)
            scale = max(np.abs(base.values).max(), np.abs(other.values).max(), 1e-300)
            worst = max(worst, np.abs(base.values - other.values).max() / scale)
    report(6, f"twin attribution max rel diff {worst:.2e}", worst < 1e-9)


def test_criterion_7_sensitivity():
    ok = True
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(5))
        w = np.zeros((5, 3))
        w[d] = rng.normal(size=3) + np.array([1.0, -1.0, 0.5])
        model = la.ModelGraph((5,), [la.Dense(5, 3)], [(w, rng.normal(size=3))])
        amap, _ = la.local_attribution(model, rng.random(5), int(rng.integers(3)),
                                       n_iter=3, k_targets=2)
        mask = np.ones(5, dtype=bool)
        mask[d] = False
        ok = ok and amap.values[d] != 0.0 and np.all(amap.values[mask] == 0.0)
    report(7, "single-dimension models: A_d != 0, zero-gradient dims get 0", ok)


def test_criterion_8_metric_oracle():
    worst = 0.0
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        n, c = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        w, b = rng.normal(size=(n, c)), rng.normal(size=c)
        model = la.ModelGraph((n,), [la.Dense(n, c)], [(w, b)])
        x = rng.random(n)
        baseline = 0.2 * rng.random(n)
        ranking = la.rank_dimensions(rng.normal(size=n))
        for kind, engine in (("insertion", la.insertion_curve),
                             ("deletion", la.deletion_curve)):
            oracle = la.linear_model_oracle(w.T, b, x, ranking, baseline, 11, kind)
            curve = engine(model, x, ranking, baseline, 11)
            worst = max(worst, abs(curve.auc - oracle.auc))
    wm = np.array([[1.0, 0.0], [2.0, 0.0]])
    model = la.ModelGraph((2,), [la.Dense(2, 2)], [(wm, np.zeros(2))])
    ins = la.insertion_curve(model, np.array([1.0, 1.0]), np.array([1, 0]),
                             np.zeros(2), 3)
    dele = la.deletion_curve(model, np.array([1.0, 1.0]), np.array([1, 0]),
                             np.zeros(2), 3)
    worked = abs(ins.auc - 0.8036) < 1e-3 and abs(dele.auc - 0.7287) < 1e-3
    report(8, f"affine oracle max AUC gap {worst:.2e}; worked example "
              f"ins {ins.auc:.4f} del {dele.auc:.4f}",
           worst < 1e-9 and worked)


def test_criterion_9_desk_scale_efficacy(digits_split):
    started = time.monotonic()
    (xtr, ytr), (xte, yte) = digits_split
    model = la.build_model((1, 8, 8), CNN_LAYERS, seed=0)
    trained = la.train_sgd(model, la.make_dataset(xtr, ytr, 10), DIGITS_TRAIN_CFG).model
    test_acc = la.models.accuracy(trained, xte, yte)
    n_eval = 100
    sums = {name: {"ins": 0.0, "del": 0.0} for name in ("la", "random", "sm")}
    for i in range(n_eval):
        x = xte[i]
        y = int(trained.predict(x)[0])
        space = la.make_local_space(x, 20.0, "linear", 1e-3)
        amap, _ = la.local_attribution(trained, x, y, n_iter=20, space=space,
                                       k_targets=9)
        maps = {"la": amap.values,
                "random": la.random_attribution(x.shape, seed=1000 + i).values,
                "sm": la.saliency(trained, x, y).values}
        for name, values in maps.items():
            ranking = la.rank_dimensions(values)
            sums[name]["ins"] += la.insertion_curve(trained, x, ranking, n_points=101).auc
            sums[name]["del"] += la.deletion_curve(trained, x, ranking, n_points=101).auc
    means = {name: {k: v / n_eval for k, v in d.items()} for name, d in sums.items()}
    elapsed = time.monotonic() - started
    ok = (test_acc >= 0.95
          and means["la"]["ins"] >= means["random"]["ins"] + 0.10
          and means["la"]["del"] <= means["random"]["del"] - 0.05
          and means["la"]["ins"] >= means["sm"]["ins"]
          and elapsed < 600.0)
    report(9, f"test acc {test_acc:.3f}; insertion la/sm/random "
              f"{means['la']['ins']:.3f}/{means['sm']['ins']:.3f}/{means['random']['ins']:.3f}; "
              f"deletion la/random {means['la']['del']:.3f}/{means['random']['del']:.3f}; "
              f"{elapsed:.0f}s", ok)


@pytest.fixture(scope="module")
def staged_cli_experiment(tmp_path_factory, digits_split):
    """Digit subset as IDX plus CLI-trained CNN weights, for criteria 10-11."""
    root = tmp_path_factory.mktemp("cli_stage")
    (xtr, ytr), _ = digits_split
    data = root / "data"
    data.mkdir()
    write_idx(data / "images.idx", np.round(xtr[:200, 0] * 255).astype(np.uint8))
    write_idx(data / "labels.idx", ytr[:200].astype(np.uint8))
    weights = root / "cnn.law"
    code = main(["train", "--data.path", str(data), "--model.path", str(weights),
                 "--model.spec", "conv:8x3x3:same,relu,pool2,flatten,dense:10",
                 "--train.lr", "0.2", "--train.epochs", "10",
                 "--run.output_dir", str(root / "train_out")])
    assert code == 0
    return root, data, weights


def test_criterion_10_ablation_harness(staged_cli_experiment):
    root, data, weights = staged_cli_experiment
    out = root / "ablate"
    sweeps = {"mode": "linear,constant", "attack_type": "both,untargeted,targeted",
              "N": "1,5,20", "s_range": "5,20,40"}
    ok = True
    for sweep, values in sweeps.items():
        code = main(["ablate", "--sweep", sweep, "--values", values,
                     "--model.path", str(weights), "--data.path", str(data),
                     "--method.N", "4", "--method.k_targets", "3",
                     "--metric.n_points", "11", "--run.samples", "5",
                     "--run.seed", "0", "--run.output_dir", str(out)])
        csv_path = out / f"ablate_{sweep}.csv"
        rows = csv_path.read_text().strip().splitlines()
        ok = ok and code == 0 and len(rows) == len(values.split(",")) + 1
    mode_rows = (out / "ablate_mode.csv").read_text().strip().splitlines()[1:]
    by_mode = {r.split(",")[0]: (float(r.split(",")[1]), float(r.split(",")[2]))
               for r in mode_rows}
    direction = "linear better" if by_mode["linear"][0] >= by_mode["constant"][0] \
        else "constant better"
    report(10, f"four sweeps emitted; linear vs constant insertion "
               f"{by_mode['linear'][0]:.3f} vs {by_mode['constant'][0]:.3f} "
               f"({direction}, recorded, not asserted)", ok)


def test_criterion_11_end_to_end_determinism(staged_cli_experiment):
    root, data, weights = staged_cli_experiment
    out = root / "determinism"
    reports = []
    for _ in range(2):
        code = main(["evaluate", "--model.path", str(weights), "--data.path", str(data),
                     "--method.name", "la", "--method.N", "4", "--method.k_targets", "3",
                     "--metric.n_points", "11", "--run.samples", "8",
                     "--run.seed", "42", "--run.output_dir", str(out)])
        assert code == 0
        payload = json.loads((out / "report.json").read_text())
        payload.pop("wall_clock_seconds")
        reports.append(payload)
    report(11, "two cmd_evaluate runs identical apart from timing",
           reports[0] == reports[1])
