import json
import sys

import allure
import numpy as np
import pytest
import subprocess
from allure_commons.types import AttachmentType
from dotenv import load_dotenv

from config.logger_config import get_run_logger, log_run_end, log_run_start
from contrastnet.corpus import Document, SplitSpec, TokenizerConfig, build_corpus, load_corpus
from contrastnet.encoder import init_params
from contrastnet.synth import SynthSpec, generate, write
from utils.schema_manager import get_schema_manager

# loading environment variables from .env file
load_dotenv()

# Initialize logger
logger = get_run_logger()

TINY_RECORDS = [
    {"id": "g1", "text": "Hello there!", "label": "greet"},
    {"id": "g2", "text": "Hi, friend.", "label": "greet"},
    {"id": "g3", "text": "Good morning", "label": "greet"},
    {"id": "b1", "text": "Goodbye now.", "label": "bye"},
    {"id": "b2", "text": "See you later", "label": "bye"},
    {"id": "b3", "text": "Bye!", "label": "bye"},
    {"id": "t1", "text": "Thanks a lot", "label": "thanks"},
    {"id": "t2", "text": "Thank you.", "label": "thanks"},
    {"id": "w1", "text": "Is it raining?", "label": "weather"},
    {"id": "w2", "text": "Sunny today", "label": "weather"},
]
TINY_SPLITS = {"train": ["bye", "greet"], "val": ["thanks"], "test": ["weather"]}

# 12 classes, 12 documents each; splits 6/3/3
SMALL_SYNTH = SynthSpec(
    class_count=12,
    docs_per_class=12,
    vocab_per_class=5,
    shared_vocab=10,
    tokens_per_doc=8,
    seed=0,
    min_split_classes=3,
)
SMALL_BUCKETS = 256


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    return path


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f)
    return path


# Pytest hooks

@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Hook to capture test results for logging
    The hook captures the outcome of each test phase (setup, call, teardown)
    and logs the test result accordingly.
    """
    outcome = yield
    report = outcome.get_result()

    if report.when == "call":
        test_name = item.nodeid
        duration = report.duration

        # Allure metadata
        allure.dynamic.parameter("Test Name", test_name)
        allure.dynamic.parameter("Duration", f"{duration:.3f}s")

        if report.passed:
            log_run_end(test_name, "PASSED", duration)
        elif report.failed:
            log_run_end(test_name, "FAILED", duration)

            # Attach failure logs to Allure
            if report.longrepr:
                allure.attach(
                    str(report.longreprtext),
                    name="Failure Details",
                    attachment_type=AttachmentType.TEXT
                )
                logger.error(f"Failure reason: {report.longreprtext}")
        elif report.skipped:
            log_run_end(test_name, "SKIPPED", duration)


def pytest_sessionfinish(session, exitstatus):
    """
    Hook that runs after all tests complete.
    Generates the Allure report when the Allure CLI is installed.
    """
    try:
        subprocess.run(
            ["allure", "generate", "allure-results", "-o", "allure-report", "--clean"],
            check=True,
            capture_output=True
        )
        logger.info("✅ Allure report generated successfully in allure-report/")
    except subprocess.CalledProcessError as e:
        logger.error(f"❌ Failed to generate Allure report: {e.stderr.decode()}")
    except FileNotFoundError:
        logger.debug("Allure CLI not found; skipping report generation")


# Fixtures

@pytest.fixture(scope="session", autouse=True)
def setup_allure_environment():
    """Configure Allure environment metadata"""
    allure.dynamic.parameter("Python Version", sys.version)
    allure.dynamic.parameter("NumPy Version", np.__version__)


@pytest.fixture(scope="function", autouse=True)
def log_test_info(request):
    """Automatically log test start"""
    test_name = request.node.nodeid
    params = getattr(request.node, "callspec", None)
    param_dict = params.params if params else None

    log_run_start(test_name, param_dict)

    yield


@pytest.fixture
def rng():
    """Fresh seeded generator per test"""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def schema_manager():
    return get_schema_manager()


@pytest.fixture
def tiny_files(tmp_path):
    """Hand-written 10-document corpus: train {bye, greet}, val {thanks}, test {weather}"""
    data_path = write_jsonl(tmp_path / "tiny.jsonl", TINY_RECORDS)
    splits_path = write_json(tmp_path / "tiny_splits.json", TINY_SPLITS)
    return data_path, splits_path


@pytest.fixture
def tiny_corpus(tiny_files):
    data_path, splits_path = tiny_files
    return load_corpus(data_path, splits_path, TokenizerConfig())


@pytest.fixture(scope="session")
def small_synth():
    return generate(SMALL_SYNTH)


@pytest.fixture(scope="session")
def small_corpus(small_synth):
    """In-memory synthetic corpus; 6 train, 3 val, 3 test classes of 12 documents"""
    documents = [Document(r["id"], r["text"], r["label"]) for r in small_synth.records]
    splits = SplitSpec.from_lists(
        small_synth.splits["train"], small_synth.splits["val"], small_synth.splits["test"]
    )
    return build_corpus(documents, splits, TokenizerConfig(bucket_count=SMALL_BUCKETS))


@pytest.fixture
def small_files(tmp_path, small_synth):
    """The small synthetic corpus written to disk"""
    data_path = tmp_path / "synth.jsonl"
    splits_path = tmp_path / "synth_splits.json"
    write(small_synth, data_path, splits_path)
    return data_path, splits_path


@pytest.fixture
def small_params():
    return init_params(SMALL_BUCKETS, 8, 0.5, np.random.default_rng(7))
