import pytest

from champrec.data import generate_synthetic, two_archetype_config
from champrec.ratings import MasteryRecord, build_training_set

# Nami, Zyra, Cassiopeia, Janna, Lulu
TOP5_POINTS = [(267, 367191), (143, 136709), (69, 106064), (40, 89306), (117, 59486)]
TOP5_RATINGS = [100, 38, 29, 25, 17]


@pytest.fixture
def top5_records():
    return [MasteryRecord("sample", c, cmp) for c, cmp in TOP5_POINTS]


@pytest.fixture(scope="session")
def two_arch_cfg():
    return two_archetype_config(n_users=300, n_items=40, seed=7)


@pytest.fixture(scope="session")
def two_arch_records(two_arch_cfg):
    return generate_synthetic(two_arch_cfg)


@pytest.fixture(scope="session")
def two_arch_data(two_arch_records):
    return build_training_set(two_arch_records)


@pytest.fixture(scope="session")
def small_data():
    cfg = two_archetype_config(n_users=50, n_items=20, seed=1)
    return build_training_set(generate_synthetic(cfg))


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        if report.when == "setup" and report.outcome == "passed":
            return
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    import test_acceptance

    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        doc = (getattr(test_acceptance, name).__doc__ or name).strip().splitlines()[0]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {doc}")
