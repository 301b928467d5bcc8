"""
Synthetic End-to-End Run
========================

Meta-trains on a class-separable synthetic corpus and evaluates on the held-out test classes.

Usage:
------
    pytest tests/performance/test_end_to_end.py -v --alluredir=allure-results
    pytest -m "acceptance and slow" -v

Thresholds:
-----------
Test-split accuracy (5-way 1-shot, 200 episodes):   mean >= 0.95
Nearest neighbor vs prototype on the same episodes:  nn >= proto - 0.02
Best checkpoint vs the untrained table (same episodes): trained >= initial - 0.02
Wall clock:                                          a few minutes on a laptop
"""

import time

import allure
import numpy as np
import pytest
from allure_commons.types import AttachmentType

from config.logger_config import get_run_logger, log_metric
from constants import TEST
from contrastnet.corpus import Document, SplitSpec, TokenizerConfig, build_corpus
from contrastnet.encoder import init_params, load_checkpoint
from contrastnet.evaluation import evaluate
from contrastnet.synth import SynthSpec, generate
from contrastnet.trainer import INIT_STREAM, TrainConfig, train

logger = get_run_logger()

ACCEPTANCE_SYNTH = SynthSpec(
    class_count=20,
    docs_per_class=100,
    shared_vocab=50,
    signature_ratio=0.8,
    seed=0,
    min_split_classes=5,
)


@pytest.fixture(scope="module")
def acceptance_corpus():
    synth = generate(ACCEPTANCE_SYNTH)
    documents = [Document(r["id"], r["text"], r["label"]) for r in synth.records]
    splits = SplitSpec.from_lists(synth.splits["train"], synth.splits["val"], synth.splits["test"])
    return build_corpus(documents, splits, TokenizerConfig())


@allure.feature("End to End")
@allure.story("Synthetic Corpus")
@pytest.mark.acceptance
@pytest.mark.slow
class TestSyntheticEndToEnd:

    @allure.title("2000 training episodes reach 95% test accuracy without losing ground to the untrained table")
    @allure.severity(allure.severity_level.BLOCKER)
    @pytest.mark.timeout(1800)
    def test_train_and_evaluate(self, acceptance_corpus, tmp_path):
        assert [len(acceptance_corpus.split_classes(s)) for s in ("train", "val", "test")] == [10, 5, 5]
        cfg = TrainConfig(n=5, k=1, m=5, total_episodes=2000)

        with allure.step("Train"):
            started = time.perf_counter()
            _, history, checkpoint = train(acceptance_corpus, cfg, tmp_path / "model.bin", tmp_path / "history.jsonl")
            log_metric("train_duration", f"{time.perf_counter() - started:.1f}", "s")
            assert len(history.episodes) == 2000
            assert len(history.validations) == 20
            allure.attach.file(str(tmp_path / "history.jsonl"), name="History", attachment_type=AttachmentType.TEXT)

        with allure.step("Evaluate the untrained table on the test split"):
            initial_params = init_params(cfg.bucket_count, cfg.dim, cfg.init_scale,
                                         np.random.default_rng([cfg.seed, INIT_STREAM]))
            initial = evaluate(initial_params, acceptance_corpus, TEST, 5, 1, 5, 200, predictor="nn", seed=cfg.seed)
            log_metric("test_accuracy_initial", f"{initial.mean:.4f}")

        with allure.step("Evaluate best checkpoint on the test split"):
            params, _ = load_checkpoint(checkpoint)
            nn = evaluate(params, acceptance_corpus, TEST, 5, 1, 5, 200, predictor="nn", seed=cfg.seed)
            proto = evaluate(params, acceptance_corpus, TEST, 5, 1, 5, 200, predictor="proto", seed=cfg.seed)
            allure.attach(nn.to_json(), name="nn report", attachment_type=AttachmentType.JSON)
            allure.attach(proto.to_json(), name="proto report", attachment_type=AttachmentType.JSON)
            log_metric("test_accuracy_nn", f"{nn.mean:.4f}")
            log_metric("test_accuracy_proto", f"{proto.mean:.4f}")

        assert nn.mean >= 0.95
        assert nn.mean >= proto.mean - 0.02
        assert nn.mean >= initial.mean - 0.02
