import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

# Make the sibling helper modules (synth, oracles, criteria) importable.
sys.path.insert(0, str(Path(__file__).parent))

from criteria import ACCEPTANCE_LINES  # noqa: E402

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
