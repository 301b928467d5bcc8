"""
Prediction & Evaluation Tests
=============================

Usage:
------
    pytest tests/functional/test_evaluation.py -v --alluredir=allure-results
    pytest -m evaluation -v
"""

from dataclasses import replace

import allure
import numpy as np
import pandas as pd
import pytest

from config.logger_config import get_run_logger
from conftest import SMALL_BUCKETS
from contrastnet.encoder import EncoderParams, init_params
from contrastnet.episodes import sample_episode
from contrastnet.evaluation import (
    dump_embeddings,
    episode_accuracy,
    evaluate,
    nn_predict,
    predict_episode,
    proto_predict,
    write_predictions,
)

logger = get_run_logger()


@allure.feature("Evaluation")
@allure.story("Nearest Neighbor")
@pytest.mark.evaluation
class TestNnPredict:

    def test_self_match(self):
        supports = np.eye(4)
        labels = ["a", "b", "c", "d"]
        for j in range(4):
            assert nn_predict(supports, labels, supports[j]) == labels[j]

    def test_tie_goes_to_lowest_index(self):
        supports = np.array([[1.0, 1.0], [1.0, 1.0]])
        assert nn_predict(supports, ["first", "second"], np.array([0.3, 0.2])) == "first"

    def test_inner_product(self):
        assert nn_predict(np.eye(2), ["A", "B"], np.array([0.9, 0.1])) == "A"

    def test_one_nn_not_prototype(self):
        # class A mean is closer in inner product, but B owns the single best instance
        supports = np.array([[0.9, 0.0], [0.9, 0.0], [1.0, 0.0], [-5.0, 0.0]])
        labels = ["A", "A", "B", "B"]
        assert nn_predict(supports, labels, np.array([1.0, 0.0])) == "B"


@allure.feature("Evaluation")
@allure.story("Prototype Baseline")
@pytest.mark.evaluation
class TestProtoPredict:

    def test_exact_prototype_hit(self):
        supports = np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 0.0]])
        assert proto_predict(supports, ["A", "A", "B"], np.array([1.0, 0.0])) == "A"

    def test_tie_goes_to_first_appearing_class(self):
        supports = np.array([[2.0, 0.0], [-2.0, 0.0]])
        assert proto_predict(supports, ["right", "left"], np.array([0.0, 0.0])) == "right"
        assert proto_predict(supports[::-1], ["left", "right"], np.array([0.0, 0.0])) == "left"

    def test_agrees_with_nn_for_equal_norms(self, rng):
        supports = rng.normal(size=(5, 4))
        supports /= np.linalg.norm(supports, axis=1, keepdims=True)
        labels = list("abcde")
        for _ in range(50):
            query = rng.normal(size=4)
            assert proto_predict(supports, labels, query) == nn_predict(supports, labels, query)


@allure.feature("Evaluation")
@allure.story("Episode Accuracy")
@pytest.mark.evaluation
class TestEpisodeAccuracy:

    @allure.title("Degenerate encoder scores exactly 1/n through the tie rule")
    def test_degenerate_encoder(self, small_corpus, rng):
        params = EncoderParams(np.zeros((SMALL_BUCKETS, 4)))
        episode = sample_episode(small_corpus, "train", 5, 1, 5, rng)
        assert episode_accuracy(params, small_corpus, episode) == pytest.approx(1 / 5)

    def test_denominator(self, small_corpus, small_params, rng):
        episode = sample_episode(small_corpus, "train", 5, 1, 5, rng)
        accuracy = episode_accuracy(small_params, small_corpus, episode)
        assert round(accuracy * 25) == pytest.approx(accuracy * 25)

    def test_predictions_ignore_query_labels(self, small_corpus, small_params, rng):
        episode = sample_episode(small_corpus, "train", 4, 2, 3, rng)
        relabeled = replace(episode, query=tuple((i, "???") for i, _ in episode.query))
        assert predict_episode(small_params, small_corpus, episode) == \
            predict_episode(small_params, small_corpus, relabeled)


@allure.feature("Evaluation")
@allure.story("Many-Episode Evaluation")
@pytest.mark.evaluation
@pytest.mark.protocol
class TestEvaluate:

    def test_single_episode(self, small_corpus, small_params):
        report = evaluate(small_params, small_corpus, "test", 3, 1, 2, 1)
        assert report.episodes == 1
        assert report.mean == report.per_episode_accuracy[0]
        assert report.std == 0.0

    def test_mean_and_std_recomputable(self, small_corpus, small_params):
        report = evaluate(small_params, small_corpus, "val", 3, 1, 2, 40, seed=5)
        values = np.array(report.per_episode_accuracy)
        assert report.mean == float(values.mean())
        assert report.std == pytest.approx(float(np.sqrt(np.mean((values - values.mean()) ** 2))), rel=1e-12)
        assert 0.0 <= report.mean <= 1.0 and report.std >= 0.0

    def test_same_seed_identical_reports(self, small_corpus, small_params):
        a = evaluate(small_params, small_corpus, "test", 3, 1, 2, 20, seed=1)
        b = evaluate(small_params, small_corpus, "test", 3, 1, 2, 20, seed=1)
        assert a.to_json() == b.to_json()

    @allure.title("Threaded evaluation matches serial evaluation")
    def test_threads_match_serial(self, small_corpus, small_params):
        serial = evaluate(small_params, small_corpus, "test", 3, 1, 2, 30, seed=2)
        threaded = evaluate(small_params, small_corpus, "test", 3, 1, 2, 30, seed=2, threads=4)
        assert serial.to_json() == threaded.to_json()

    def test_report_fields(self, small_corpus, small_params):
        data = evaluate(small_params, small_corpus, "test", 3, 1, 2, 3, predictor="proto", seed=4).to_dict()
        assert set(data) == {"episodes", "per_episode_accuracy", "mean", "std", "seed", "n", "k", "m", "split", "predictor"}
        assert data["predictor"] == "proto" and data["split"] == "test"

    def test_predictions_table(self, small_corpus, small_params, tmp_path):
        report = evaluate(small_params, small_corpus, "test", 3, 1, 2, 4, collect_predictions=True)
        assert len(report.predictions) == 4 * 3 * 2
        rows = write_predictions(report, tmp_path / "p.tsv")
        frame = pd.read_csv(tmp_path / "p.tsv", sep="\t", header=None)
        assert rows == len(frame) == 24
        correct = (frame[2] == frame[3]).groupby(frame[0]).mean().tolist()
        assert correct == pytest.approx(report.per_episode_accuracy)


@allure.feature("Evaluation")
@allure.story("Embedding Export")
@pytest.mark.evaluation
class TestDumpEmbeddings:

    def test_shape_and_precision(self, tiny_corpus, tmp_path):
        params = init_params(tiny_corpus.tokenizer.bucket_count, 4, 1.0, np.random.default_rng(0))
        count = dump_embeddings(params, tiny_corpus, "val", tmp_path / "e.tsv")
        lines = (tmp_path / "e.tsv").read_text(encoding="utf-8").splitlines()

        assert count == 2 == len(lines)
        fields = lines[0].split("\t")
        assert len(fields) == 6
        assert fields[:2] == ["t1", "thanks"]
        expected = params.table[tiny_corpus.tokens("t1")].mean(axis=0)
        assert [float(x) for x in fields[2:]] == expected.tolist()

    def test_rerun_byte_identical(self, small_corpus, small_params, tmp_path):
        dump_embeddings(small_params, small_corpus, "test", tmp_path / "a.tsv")
        dump_embeddings(small_params, small_corpus, "test", tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
