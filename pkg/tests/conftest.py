import os

# At this problem size, BLAS threading only adds overhead; pin to one thread
# before numpy loads (falls back to threadpoolctl if numpy won the race).
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import pytest

try:
    import threadpoolctl
    _THREAD_LIMIT = threadpoolctl.threadpool_limits(1)  # keep alive for the session
except ImportError:
    _THREAD_LIMIT = None

from tea.synthetic import CorpusGeometry, default_class_specs, generate_synthetic_dataset


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """The default desk-scale corpus: K=4, 200 samples, 16x16, T=24."""
    root = tmp_path_factory.mktemp("desk_corpus")
    manifest, samples = generate_synthetic_dataset(
        specs=default_class_specs(4, 4),
        geometry=CorpusGeometry(),
        n_samples=200, seed=7, out_dir=root, return_samples=True)
    return manifest, samples


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 20-sample corpus for fast trainer-level tests."""
    root = tmp_path_factory.mktemp("small_corpus")
    manifest = generate_synthetic_dataset(
        specs=default_class_specs(4, 4),
        geometry=CorpusGeometry(),
        n_samples=20, seed=3, out_dir=root)
    return manifest
