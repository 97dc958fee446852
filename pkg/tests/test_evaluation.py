import math

import numpy as np
import pytest
import torch

from gfiqa.errors import ConfigurationError, DataError, PreconditionError
from gfiqa.evaluation import (
    EvalReport,
    average_spectrum,
    evaluate_cell,
    fit_logistic,
    grid_key,
    leave_one_out_eval,
    logistic_map,
    pair_ranking_accuracy,
    permutation_null,
    plcc,
    predict_scores,
    srcc,
    _pearson,
)

from reference import pearson_bruteforce, spearman_bruteforce


class TestSrcc:
    def test_perfect_agreement(self):
        x = [1.0, 2.5, 3.0, 7.0]
        y = [10.0, 20.0, 30.0, 70.0]
        assert srcc(x, y) == pytest.approx(1.0, abs=1e-12)

    def test_perfect_disagreement(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert srcc(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)

    def test_self_correlation_identities(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=6)
            assert srcc(x, x) == pytest.approx(1.0, abs=1e-12)
            assert srcc(x, -x) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_bruteforce_oracle_small_n(self):
        rng = np.random.default_rng(1)
        for trial in range(300):
            n = int(rng.integers(3, 9))
            pred = rng.normal(size=n)
            target = rng.normal(size=n)
            if trial % 3 == 0:  # exercise ties
                pred = np.round(pred)
                target = np.round(target * 2) / 2
            expected = spearman_bruteforce(list(pred), list(target))
            got = srcc(pred, target)
            if math.isnan(expected):
                assert math.isnan(got)
            else:
                assert got == pytest.approx(expected, abs=1e-12)

    def test_constant_vector_is_nan(self):
        assert math.isnan(srcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))

    def test_too_few_points_rejected(self):
        with pytest.raises(PreconditionError):
            srcc([1.0, 2.0], [1.0, 2.0])

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        transforms = [
            lambda v: 3 * v + 2,
            lambda v: v**3,
            lambda v: np.exp(v),
            lambda v: np.tanh(v) * 10,
        ]
        for trial in range(200):
            x = rng.normal(size=int(rng.integers(4, 12)))
            y = rng.normal(size=x.size)
            base = srcc(x, y)
            f = transforms[trial % len(transforms)]
            assert srcc(f(x), y) == pytest.approx(base, abs=1e-9)


class TestPearsonAndPlcc:
    def test_pearson_matches_textbook_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = int(rng.integers(3, 9))
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            assert _pearson(a, b) == pytest.approx(
                pearson_bruteforce(list(a), list(b)), abs=1e-12
            )

    def test_identity_mapping_gives_one(self):
        x = np.linspace(0, 10, 30)
        assert plcc(x, x) == pytest.approx(1.0, abs=1e-10)

    def test_affine_target_gives_one(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=60)
        assert plcc(x, 2 * x + 3) == pytest.approx(1.0, abs=1e-10)

    def test_plcc_range_invariant(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.normal(size=12)
            t = rng.normal(size=12)
            value = plcc(x, t)
            assert -1.0 <= value <= 1.0

    def test_anticorrelated_mapping_lands_in_lower_half(self):
        # when the fitted mapping leaves predictions anti-correlated, the
        # value must sit in [-1, 0]; plain Pearson shows the range bound
        x = np.linspace(0, 1, 20)
        assert -1.0 <= _pearson(x, -x) <= 0.0


class TestFitLogistic:
    def test_identity_is_in_model_family(self):
        y = np.linspace(-5, 5, 40)
        fit = fit_logistic(y, y)
        assert fit.residual < 1e-8

    def test_planted_parameters_recovered(self):
        beta = (50.0, 0.1, 0.0, 0.5, 10.0)
        y = np.linspace(-20, 20, 200)
        target = logistic_map(y, beta)
        fit = fit_logistic(y, target)
        assert fit.converged
        rms = float(np.sqrt(np.mean((fit(y) - target) ** 2)))
        assert rms < 0.01 * (target.max() - target.min())

    def test_logistic_at_least_as_good_as_linear(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            y = rng.normal(size=40)
            t = np.tanh(y) + rng.normal(size=40) * 0.05
            mapped_corr = plcc(y, t)
            slope, intercept = np.polyfit(y, t, 1)
            linear_corr = _pearson(slope * y + intercept, t)
            assert mapped_corr >= linear_corr - 1e-9

    def test_too_few_points_rejected(self):
        with pytest.raises(PreconditionError):
            fit_logistic([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])

    def test_degenerate_data_falls_back_to_linear(self):
        y = np.ones(10)
        t = np.linspace(0, 1, 10)
        fit = fit_logistic(y, t)
        assert np.isfinite(fit(y)).all()


class TestPairRankingAccuracy:
    def test_perfect_and_inverted(self):
        pred = np.array([1.0, 2.0, 3.0, 4.0])
        target = np.array([10.0, 20.0, 30.0, 40.0])
        assert pair_ranking_accuracy(pred, target) == 1.0
        assert pair_ranking_accuracy(-pred, target) == 0.0

    def test_target_ties_excluded(self):
        pred = np.array([1.0, 2.0, 3.0])
        target = np.array([5.0, 5.0, 6.0])
        # only pairs (0,2) and (1,2) count; both ordered correctly
        assert pair_ranking_accuracy(pred, target) == 1.0

    def test_prediction_ties_count_as_misses(self):
        pred = np.array([1.0, 1.0, 1.0])
        target = np.array([1.0, 2.0, 3.0])
        assert pair_ranking_accuracy(pred, target) == 0.0


class TestAverageSpectrum:
    def test_constant_image_concentrates_at_dc(self):
        img = np.full((8, 8), 0.5)
        raw = np.fft.fftshift(np.fft.fft2(img))
        magnitude = np.abs(raw)
        center = (4, 4)
        assert magnitude[center] == pytest.approx(0.5 * 64)
        off_dc = magnitude.copy()
        off_dc[center] = 0.0
        assert off_dc.max() < 1e-8

        spectrum = average_spectrum([img])
        assert np.unravel_index(spectrum.argmax(), spectrum.shape) == center

    def test_single_image_equals_own_spectrum(self):
        rng = np.random.default_rng(6)
        img = rng.random((16, 16))
        one = average_spectrum([img])
        log_mag = np.log1p(
            np.abs(np.fft.fftshift(np.fft.fft2(img)))
        )
        assert np.allclose(one, log_mag / log_mag.max(), atol=1e-12)

    def test_checkerboard_peaks_at_nyquist(self):
        img = np.array([[1.0, -1.0], [-1.0, 1.0]])
        # 4-point transform by hand: F(u,v) = sum_xy img * (-1)^(ux+vy)
        f = np.empty((2, 2), dtype=complex)
        for u in range(2):
            for v in range(2):
                f[u, v] = sum(
                    img[y, x] * (-1) ** (u * y + v * x)
                    for y in range(2)
                    for x in range(2)
                )
        assert f[1, 1] == pytest.approx(4.0)
        assert abs(f[0, 0]) + abs(f[0, 1]) + abs(f[1, 0]) < 1e-12
        # fftshift moves the (1,1) Nyquist bin to the (0,0) corner for n=2
        spectrum = average_spectrum([img])
        assert np.unravel_index(spectrum.argmax(), spectrum.shape) == (0, 0)

    def test_mixed_sizes_rejected(self):
        with pytest.raises(DataError):
            average_spectrum([np.zeros((4, 4)), np.zeros((8, 8))])

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            average_spectrum([])


class TestPermutationNull:
    def test_null_shrinks_with_n(self):
        target = list(range(300))
        null = permutation_null(target, n_shuffles=300, seed=0)
        assert 0.0 < null < 0.15
        small = permutation_null(list(range(20)), n_shuffles=300, seed=0)
        assert small > null


class TestLeaveOneOut:
    def _checkpoints(self, small_corpus, tiny_config, tmp_path, domains=(0, 1, 2, 3)):
        from gfiqa.model import QualityNet, save_checkpoint
        from gfiqa.training import seed_everything

        paths = {}
        for d in domains:
            seed_everything(d)
            model = QualityNet(tiny_config)
            path = tmp_path / f"ckpt{d}.pt"
            save_checkpoint(path, model)
            paths[d] = path
        return paths

    def test_grid_shape_and_diagonal(self, small_corpus, tiny_config, tmp_path):
        from gfiqa.data import load_manifest

        root, manifests = small_corpus
        checkpoints = self._checkpoints(small_corpus, tiny_config, tmp_path)
        test_sets = {d: load_manifest(m) for d, m in manifests.items()}
        report = leave_one_out_eval(checkpoints, test_sets, manifests)
        assert len(report.grid) == 16
        for d in report.domains:
            assert report.unseen[d] == report.grid[grid_key(d, d)]
            assert not report.unseen[d].missing
            cell = report.unseen[d]
            assert -1.0 <= cell.srcc <= 1.0
            assert -1.0 <= cell.plcc <= 1.0
            pooled = report.pooled[d]
            assert pooled.n == sum(len(v) for v in test_sets.values())
            assert -1.0 <= pooled.srcc <= 1.0

    def test_missing_checkpoint_leaves_gap_markers(
        self, small_corpus, tiny_config, tmp_path
    ):
        from gfiqa.data import load_manifest

        root, manifests = small_corpus
        checkpoints = self._checkpoints(
            small_corpus, tiny_config, tmp_path, domains=(0, 1, 2)
        )
        checkpoints[3] = None
        test_sets = {d: load_manifest(m) for d, m in manifests.items()}
        report = leave_one_out_eval(checkpoints, test_sets, manifests)
        assert report.unseen[3].missing
        assert report.grid[grid_key(3, 0)].missing
        assert not report.unseen[0].missing
        rendered = report.render_text()
        assert "--" in rendered

    def test_report_generation_is_pure(self, small_corpus, tiny_config, tmp_path):
        from gfiqa.data import load_manifest

        root, manifests = small_corpus
        checkpoints = self._checkpoints(
            small_corpus, tiny_config, tmp_path, domains=(0, 1)
        )
        test_sets = {d: load_manifest(manifests[d]) for d in (0, 1)}
        paths = {d: manifests[d] for d in (0, 1)}
        r1 = leave_one_out_eval(checkpoints, test_sets, paths)
        r2 = leave_one_out_eval(checkpoints, test_sets, paths)
        assert r1.to_json() == r2.to_json()
        assert r1.render_text() == r2.render_text()

    def test_predict_scores_deterministic(self, small_corpus, tiny_config, tmp_path):
        from gfiqa.data import load_manifest
        from gfiqa.model import QualityNet

        root, manifests = small_corpus
        images = load_manifest(manifests[0])[:8]
        model = QualityNet(tiny_config)
        a = predict_scores(model, images, manifests[0])
        b = predict_scores(model, images, manifests[0])
        assert np.array_equal(a, b)
        assert a.shape == (8,)
