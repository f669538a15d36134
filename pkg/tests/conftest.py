import numpy as np
import pytest

from lsdat.harness.dataset import DatasetManifest, Sample
from lsdat.harness.serve import serve_oracle


def planted(seed, n=50, rank=3, density=0.05):
    """Random rank-``rank`` matrix plus ``density`` fraction of +-1 spikes."""
    rng = np.random.default_rng(seed)
    low = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, n))
    spikes = np.zeros((n, n))
    m = int(round(density * n * n))
    idx = rng.choice(n * n, m, replace=False)
    spikes.flat[idx] = rng.choice([-1.0, 1.0], m)
    return low, spikes


def bench_dataset(bench) -> DatasetManifest:
    return DatasetManifest(
        [Sample(sid, f"{sid}.npy", label, img) for sid, label, img in zip(bench.ids, bench.labels, bench.images)],
        bench.class_count,
    )


@pytest.fixture
def classify_server():
    """Factory for local /classify servers; all are shut down after the test."""
    servers = []

    def start(oracle_or_fn):
        if callable(oracle_or_fn) and not hasattr(oracle_or_fn, "_predict"):
            from lsdat.harness.serve import ClassifyServer
            server = ClassifyServer(("127.0.0.1", 0), oracle_or_fn)
        else:
            server = serve_oracle(oracle_or_fn)
        server.start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
