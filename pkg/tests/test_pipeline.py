import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import pytest

from qabind import _rng
from qabind.logo import weights_to_matrix
from qabind.metrics import auprc, kendall_tau, threshold_labels
from qabind.model import TargetScaler
from qabind.pipeline import (DEFAULT_LAMBDA_GRID, CalibrationResult, DigestOverlapError,
                             EvaluationReport, ExperimentConfig, ExternalPredictor, MethodKind,
                             MethodSpec, PipelineError, Task, calibrate, draw_folds, evaluate,
                             run_experiment, safe_tau, train_instances)
from qabind.samplers import AnnealSchedule
from qabind.seqdata import (EncodedDataset, RawRecord, SplitSpec, bag_sample, preprocess,
                            train_test_split, write_tsv)

from synthetic import planted_records, score

SCRIPT = Path(__file__).parent / "data" / "position_mean.py"
EXTERNAL = f"{sys.executable} {SCRIPT} {{train}} {{predict}} {{out}}"
SMALL_SA = AnnealSchedule(sweeps=100, reads=20)


@pytest.fixture(scope="module")
def planted():
    records, pwm = planted_records(1200, 6, 0.1, seed=3)
    data = preprocess(records)
    spec = SplitSpec(0.1, 0.1, 5, seed=17)
    train, test = train_test_split(data, spec)
    return train, test, spec, pwm


# -- method spec -----------------------------------------------------------------

def test_method_spec_invariants():
    assert MethodSpec("ridge").k_candidates() == (None,)
    assert MethodSpec("exact").k_candidates() == tuple(range(1, 21))
    assert MethodSpec("sa", SMALL_SA, 3).k_candidates() == (3,)
    for bad in [("sa",), ("ridge", SMALL_SA), ("ridge", None, 2), ("exact", None, 21),
                ("external",), ("sqa", AnnealSchedule(gamma_initial=0.1, gamma_final=1.0))]:
        with pytest.raises(ValueError):
            MethodSpec(*bad)
    spec = MethodSpec("sqa", SMALL_SA, 4)
    assert MethodSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


# -- calibration -----------------------------------------------------------------

def test_single_lambda_grid(planted):
    train, _, spec, _ = planted
    calib = calibrate(train, MethodSpec("ridge"), Task.CLASSIFY, spec, [0.7], folds=100)
    assert calib.chosen_lambda == 0.7
    assert calib.fold_scores.shape == (1, 100)
    assert calib.chosen_K is None


def test_tie_goes_to_larger_lambda(planted):
    train, _, spec, _ = planted
    # the external toy model ignores lambda, so every grid point scores the same
    calib = calibrate(train, MethodSpec("external", command=EXTERNAL), "rank", spec,
                      [0.5, 4.0, 2.0], folds=3)
    assert np.all(calib.mean_scores == calib.mean_scores[0])
    assert calib.chosen_lambda == 4.0


def test_k_tie_goes_to_smaller_k():
    data = EncodedDataset.from_sequences(
        ["A", "C", "G", "T"] * 5, [1.0, 0.0, 0.0, 0.5] * 5)
    spec = SplitSpec(0.1, 0.5, 1, seed=0)
    calib = calibrate(data, MethodSpec("exact"), "rank", spec, [1.0], folds=4)
    best = calib.mean_scores[0]
    assert calib.chosen_K == 1 + int(np.flatnonzero(best == best.max())[0])


def _oracle_ridge_cv(train, spec, grid, folds):
    """Independent CV loop: same fold stream, numpy solve, direct AUPRC walk."""
    y = train.targets
    lo, hi = y.min(), y.max()
    z = (y - lo) * train.seq_length / (hi - lo)
    X = train.features.astype(float)
    n = len(train)
    size = int(np.floor(spec.bag_fraction * n + 0.5))
    means = []
    for lam in grid:
        scores = []
        for f in range(folds):
            for attempt in range(21):
                perm = _rng.substream(spec.seed, _rng.FOLD, f, attempt).permutation(n)
                fit, val = np.sort(perm[:size]), np.sort(perm[size:])
                zv = z[val]
                thr = np.sort(zv)[int(np.ceil(0.8 * zv.size)) - 1]
                labels = (zv > thr).astype(int)
                if 0 < labels.sum() < labels.size:
                    break
            w = np.linalg.solve(X[fit].T @ X[fit] + lam * np.eye(X.shape[1]), X[fit].T @ z[fit])
            s = X[val] @ w
            order = np.argsort(-s)
            ap, tp = 0.0, 0
            # distinct scores only (continuous predictions)
            for rank, i in enumerate(order, 1):
                if labels[i]:
                    tp += 1
                    ap += tp / rank
            scores.append(ap / labels.sum())
        means.append(np.mean(scores))
    means = np.array(means)
    return grid[max(np.flatnonzero(means == means.max()))], means


def test_ridge_calibration_matches_scripted_loop(planted):
    train, _, spec, _ = planted
    grid = list(DEFAULT_LAMBDA_GRID)
    calib = calibrate(train, MethodSpec("ridge"), "classify", spec, grid, folds=20)
    chosen, means = _oracle_ridge_cv(train, spec, grid, 20)
    assert np.allclose(calib.mean_scores[:, 0], means, atol=1e-12)
    assert calib.chosen_lambda == chosen


def test_folds_redraw_degenerate_and_fail():
    targets = np.zeros(40)
    targets[0] = 1.0
    data = EncodedDataset.from_sequences([f"{a}{b}{c}" for a in "ACGT" for b in "ACGT" for c in "ACGT"][:40],
                                         targets)
    # one nonzero target: validation is scorable only when it is left out of the fit rows
    folds = draw_folds(data, SplitSpec(0.1, 0.5, 1, seed=1), Task.CLASSIFY, folds=10)
    assert all(0 in val for _, val in folds)
    flat = EncodedDataset.from_sequences(["AA", "CC", "GG", "TT"] * 3, [1.0] * 12)
    with pytest.raises(ValueError, match="redraws"):
        draw_folds(flat, SplitSpec(0.1, 0.5, 1), Task.RANK, folds=1)


def test_calibration_result_round_trip(planted):
    train, _, spec, _ = planted
    calib = calibrate(train, MethodSpec("sa", SMALL_SA), "rank", spec, [0.5, 1.0], folds=3)
    assert calib.chosen_K in range(1, 21)
    assert calib.mean_scores.shape == (2, 20)
    back = CalibrationResult.from_dict(json.loads(json.dumps(calib.to_dict())))
    assert back.to_dict() == calib.to_dict()


# -- training --------------------------------------------------------------------

def _calib(method, lam=1.0, K=None, scaler=None):
    return CalibrationResult(method, Task.RANK, np.array([lam]), lam, K, np.zeros((1, 1)),
                             np.zeros((1, 1)), (K,), scaler)


def test_train_single_bag(planted):
    train, _, spec, _ = planted
    one = dataclasses.replace(spec, bag_count=1)
    weights = train_instances(train, MethodSpec("ridge"), _calib(MethodSpec("ridge")), one)
    assert len(weights) == 1 and weights[0].shape == (train.dim,)


def test_exact_k1_weights_are_binary():
    records, _ = planted_records(300, 5, 0.1, seed=8)
    data = preprocess(records)
    spec = SplitSpec(0.1, 0.1, 4, seed=3)
    method = MethodSpec("exact")
    weights = train_instances(data, method, _calib(method, 0.5, 1), spec)
    assert len(weights) == 4
    for w in weights:
        assert set(np.unique(w)) <= {0.0, 1.0}


def test_training_deterministic_and_bags_shared(planted):
    train, _, spec, _ = planted
    method = MethodSpec("sa", SMALL_SA)
    a = train_instances(train, method, _calib(method, 1.0, 3), spec)
    b = train_instances(train, method, _calib(method, 1.0, 3), spec)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
    # bag contents depend on (seed, index) only, never on the method
    assert bag_sample(train, spec, 2).sequence_labels == bag_sample(train, spec, 2).sequence_labels


def test_external_command_failure(planted):
    train, _, spec, _ = planted
    bad = MethodSpec("external", command=f"{sys.executable} -c 'raise SystemExit(3)'")
    models = train_instances(train, bad, _calib(bad), spec)
    with pytest.raises(RuntimeError, match="exited 3"):
        models[0].predict(train)


def test_training_wraps_errors_with_instance_index():
    data = EncodedDataset.from_sequences(["A", "C", "G", "T"] * 5, np.arange(20.0))
    spec = SplitSpec(0.1, 0.5, 2, seed=0)
    with pytest.raises(PipelineError, match="instance 0"):
        train_instances(data, MethodSpec("ridge"), _calib(MethodSpec("ridge"), lam=-1.0), spec)


# -- evaluation ------------------------------------------------------------------

def test_identical_weights_zero_std(planted):
    train, test, _, _ = planted
    w = np.random.default_rng(0).uniform(size=train.dim)
    report = evaluate(test, [w] * 50, exclude=train)
    assert report.instance_count == 50
    assert np.all(report.auprc_std == 0)
    assert report.tau_quartiles == (report.tau_median, report.tau_median)


def test_planted_weights_rank_perfectly():
    records, pwm = planted_records(200, 6, 0.0, seed=5)
    data = preprocess(records)
    w = pwm.T.reshape(-1)
    report = evaluate(data, [w], [80])
    assert report.tau[0] == pytest.approx(1.0, abs=1e-12)
    assert report.auprc[0, 0] == 1.0
    assert np.allclose(score(data.sequence_labels, pwm), data.targets)


def test_evaluate_matches_direct_metric_calls():
    seqs = ["AA", "AC", "AG", "AT", "CA", "CC", "CG", "CT", "GA", "GC"]
    data = EncodedDataset.from_sequences(seqs, np.arange(1.0, 11.0))
    rng = np.random.default_rng(1)
    weights = [rng.normal(size=8) for _ in range(3)]
    report = evaluate(data, weights, [80])
    labels = threshold_labels(data.targets, 80).labels
    assert labels.tolist() == [0] * 8 + [1, 1]
    for i, w in enumerate(weights):
        preds = data.features @ w
        assert report.auprc[i, 0] == auprc(preds, labels)
        assert report.tau[i] == kendall_tau(data.targets, preds)


def test_evaluate_refuses_overlap(planted):
    train, test, _, _ = planted
    w = np.ones(train.dim)
    with pytest.raises(DigestOverlapError):
        evaluate(test, [w], exclude=test)
    with pytest.raises(DigestOverlapError):
        evaluate(test, [w], exclude=test.digests())
    with pytest.raises(ValueError):
        evaluate(test, [])


def test_report_round_trip(planted):
    train, test, _, _ = planted
    rng = np.random.default_rng(2)
    report = evaluate(test, [rng.normal(size=train.dim) for _ in range(9)], exclude=train,
                      method="ridge", task="rank", bag_fraction=0.1, provenance={"lambda": 1.0})
    back = EvaluationReport.from_dict(json.loads(report.to_json()))
    assert back.aggregates() == report.aggregates()
    assert back.to_json() == report.to_json()
    # aggregates recomputed from raw values
    raw = np.array(json.loads(report.to_json())["per_instance"]["auprc"])
    assert np.allclose(raw.mean(axis=0), report.auprc_mean, atol=0)
    assert np.allclose(raw.std(axis=0), report.auprc_std, rtol=1e-12, atol=1e-15)
    tsv = report.to_tsv().splitlines()
    assert tsv[0].startswith("metric\tthreshold") and len(tsv) == 1 + 5 + 1 + 1 + 1 + 9


def test_safe_tau_constant_predictions():
    assert safe_tau([1, 2, 3], [0, 0, 0]) == 0.0
    assert safe_tau([1, 2, 3], [1, 2, 3]) == 1.0


# -- external adapter ----------------------------------------------------------------

def test_external_predictor(planted):
    train, test, _, _ = planted
    preds = ExternalPredictor(EXTERNAL, train, 0.5, 1).predict(test)
    assert preds.shape == (len(test),)
    report = evaluate(test, [ExternalPredictor(EXTERNAL, train, 0.5, 1)], [80])
    assert report.tau[0] > 0.3


def test_external_wrong_count(planted, tmp_path):
    train, test, _, _ = planted
    cmd = f"{sys.executable} -c \"open('{{out}}', 'w').write('1\\n')\""
    with pytest.raises(RuntimeError, match="predictions"):
        ExternalPredictor(cmd, train, 0.5, 1).predict(test)


# -- config and experiment -------------------------------------------------------------

def _write_input(path, n=300, length=6, seed=4):
    records, _ = planted_records(n, length, 0.1, seed=seed)
    write_tsv(path, records)


def test_config_parsing(tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(
        "# experiment\ninput = data.tsv\noutput = out  # trailing comment\nseed = 5\n"
        "bag_fractions = 0.02, 0.1\nmethods = SA, ridge\ntasks = rank\nlambda_grid = 0.5,1\n"
        "thresholds = 80, 90\nsweeps = 50\nreads = 7\nkeep_window = 4\nlog2 = yes\nensemble_k = 3\n")
    cfg = ExperimentConfig.from_file(cfg_path)
    assert cfg.input == str(tmp_path / "data.tsv") and cfg.output == str(tmp_path / "out")
    assert cfg.seed == 5 and cfg.bag_fractions == (0.02, 0.1)
    assert cfg.lambda_grid == (0.5, 1.0) and cfg.thresholds == (80.0, 90.0)
    assert cfg.keep_window == 4 and cfg.log2 is True
    specs = cfg.method_specs()
    assert [s.kind for s in specs] == [MethodKind.SA_QUBO, MethodKind.RIDGE]
    assert specs[0].schedule == AnnealSchedule(50, 0.1, 3.0, 7) and specs[0].ensemble_K == 3
    assert specs[1].ensemble_K is None


def test_config_errors(tmp_path):
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_mapping({"input": "x", "colour": "red"})
    with pytest.raises(ValueError, match="input"):
        ExperimentConfig.from_mapping({"seed": "1"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"input": "x", "log2": "maybe"})
    bad = tmp_path / "bad.cfg"
    bad.write_text("input data.tsv\n")
    with pytest.raises(ValueError, match="key = value"):
        ExperimentConfig.from_file(bad)


def _config(tmp_path, **overrides):
    values = dict(input=str(tmp_path / "data.tsv"), output=str(tmp_path / "out"), seed=3,
                  bag_fractions=(0.1,), bag_count=4, methods=("ridge",), tasks=("classify",),
                  cv_folds=5, lambda_grid=(0.5, 2.0))
    values.update(overrides)
    return ExperimentConfig(**values)


def test_ridge_only_experiment(tmp_path):
    _write_input(tmp_path / "data.tsv")
    reports = run_experiment(_config(tmp_path))
    assert len(reports) == 1 and reports[0].method == "ridge"
    out = tmp_path / "out"
    names = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    assert names == ["calibration/ridge_bag0.1_classify.json", "logos/ridge_bag0.1_classify.svg",
                     "logos/ridge_bag0.1_classify.tsv", "manifest.json",
                     "reports/ridge_bag0.1_classify.json", "reports/ridge_bag0.1_classify.tsv",
                     "summary.tsv", "weights/ridge_bag0.1_classify.tsv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == set(names) - {"manifest.json"}
    prov = reports[0].provenance
    assert prov["n_train"] + prov["n_test"] == manifest["n_sequences"]


def test_experiment_rerun_is_byte_identical(tmp_path):
    _write_input(tmp_path / "data.tsv")
    outputs = []
    for name in ("a", "b"):
        run_experiment(_config(tmp_path, output=str(tmp_path / name),
                               methods=("sa", "lasso"), sweeps=50, reads=10, tasks=("rank",)))
        outputs.append({str(p.relative_to(tmp_path / name)): p.read_bytes()
                        for p in sorted((tmp_path / name).rglob("*")) if p.is_file()})
    assert outputs[0] == outputs[1]


def test_experiment_errors_carry_phase(tmp_path):
    (tmp_path / "data.tsv").write_text("ACGT\t1\nACG\t2\n")
    with pytest.raises(PipelineError) as info:
        run_experiment(_config(tmp_path))
    assert info.value.phase == "preprocess"
    write_tsv(tmp_path / "data.tsv", [RawRecord("ACGT", 1.0)] * 3)
    with pytest.raises(PipelineError) as info:
        run_experiment(_config(tmp_path))
    assert info.value.phase == "split"


def test_synthetic_smoke_six_reports(tmp_path):
    records, pwm = planted_records(1600, 10, 0.1, seed=1)
    write_tsv(tmp_path / "data.tsv", records)
    cfg = _config(tmp_path, bag_fractions=(0.02, 0.10), methods=("sa", "ridge", "lasso"),
                  bag_count=10, cv_folds=10, lambda_grid=DEFAULT_LAMBDA_GRID, sweeps=100, reads=20)
    reports = run_experiment(cfg)
    assert len(reports) == 6
    assert sorted(p.name for p in (tmp_path / "out" / "reports").glob("*.json")) == sorted(
        f"{m}_bag{f:g}_classify.json" for m in ("sa", "ridge", "lasso") for f in (0.02, 0.1))
    summary = (tmp_path / "out" / "summary.tsv").read_text().splitlines()
    assert len(summary) == 7
    for r in reports:
        assert r.auprc.shape == (10, 5)
        assert r.provenance["n_test"] == 160
        assert r.provenance["bag_size"] == (29 if r.bag_fraction == 0.02 else 144)
    ridge = next(r for r in reports if r.method == "ridge" and r.bag_fraction == 0.1)
    assert ridge.tau_median > 0.3
    scaler = TargetScaler(**ridge.provenance["scaler"])
    assert scaler.length == 10
    # ridge logo at 10% bags already points at the planted core
    logo_rows = np.loadtxt(tmp_path / "out" / "logos" / "ridge_bag0.1_classify.tsv",
                           skiprows=2)[:, 1:].T
    consensus = "".join("ACGT"[i] for i in np.argmax(logo_rows, axis=0))
    assert sum(a == b for a, b in zip(consensus[2:8], "CACGTG")) >= 5
    assert weights_to_matrix(np.arange(40), 10).shape == (4, 10)
