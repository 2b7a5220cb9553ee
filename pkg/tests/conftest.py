import pytest
from hypothesis import HealthCheck, settings

from c3o.core import ClusterConfig, JobSignature, MachineType, RuntimeRecord
from c3o.simulator import builtin_catalog

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIG = JobSignature("kmeans", "spark-2.4.4")


def make_record(
    machine="m5.xlarge",
    nodes=4,
    size_mb=15000.0,
    params=None,
    runtime_ms=100_000.0,
    context_id="org-a",
    submitted_at=1_600_000_000,
    signature=SIG,
    data=None,
):
    data_characteristics = {"size_mb": size_mb, **(data or {})}
    return RuntimeRecord(
        signature=signature,
        config=ClusterConfig(machine, nodes),
        data_characteristics=data_characteristics,
        parameters={"k_clusters": 6.0} if params is None else params,
        context_id=context_id,
        runtime_ms=runtime_ms,
        submitted_at=submitted_at,
    )


@pytest.fixture
def catalog():
    return builtin_catalog()


@pytest.fixture
def abc_catalog():
    return [MachineType("A", 4, 16.0, 0.2), MachineType("B", 8, 32.0, 0.4), MachineType("C", 4, 32.0, 0.25)]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
