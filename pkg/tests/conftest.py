import numpy as np
import pytest

from fi2i.dataset import InteractionStore, Vocabulary
from fi2i.similarity import DistanceFn, SimilarityKind


class MatrixDistance(DistanceFn):
    """Distance read off an explicit matrix, for synthetic instances."""

    def __init__(self, d, kind=SimilarityKind.JACCARD):
        self.d = np.asarray(d, dtype=np.float64)
        self.kind = kind
        self.n_items = self.d.shape[0]

    def matrix(self, rows, cols):
        return self.d[np.ix_(np.asarray(rows), np.asarray(cols))]


def random_distances(rng, m, symmetric=True):
    d = rng.uniform(0.0, 1.0, size=(m, m))
    if symmetric:
        d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return d


def store_from_lists(lists, n_items=None):
    n_items = n_items or (max(max(x) for x in lists if len(x)) + 1)
    vocab = Vocabulary([f"i{k:03d}" for k in range(n_items)])
    users = [f"u{k:03d}" for k in range(len(lists))]
    return InteractionStore.from_user_lists(vocab, users, lists)


def synthetic_lists(rng, n_users=80, n_items=40, mean_len=8):
    """Long-tailed user histories: item popularity ~ Zipf."""
    pop = 1.0 / np.arange(1, n_items + 1) ** 0.8
    pop /= pop.sum()
    lists = []
    for _ in range(n_users):
        k = int(np.clip(rng.poisson(mean_len), 2, n_items))
        lists.append(rng.choice(n_items, size=k, replace=False, p=pop).tolist())
    return lists


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_store(rng):
    return store_from_lists(synthetic_lists(rng), n_items=40)


# acceptance reporting: one line per criterion in the terminal summary
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = mark.args
        prev = _ACCEPTANCE.get(num, (title, "PASS"))
        status = "PASS" if rep.outcome == "passed" and prev[1] == "PASS" else "FAIL"
        if rep.outcome == "skipped":
            status = "SKIP"
        _ACCEPTANCE[num] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {title}")
