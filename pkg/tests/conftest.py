import pytest

_LINES: list[str] = []


class Recorder:
    """Collects one verdict line per acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.parts: list = []

    def add(self, check) -> None:
        self.parts.append(check)

    def verdict(self) -> bool:
        return all(c.passed for c in self.parts)

    def line(self) -> str:
        tag = "PASS" if self.verdict() else "FAIL"
        failed = [c.name for c in self.parts if not c.passed]
        tail = f"  failing: {'; '.join(failed)}" if failed else ""
        return f"[{tag}] criterion {self.number:>2}: {self.title} ({len(self.parts)} checks){tail}"


@pytest.fixture
def criterion(request):
    made = []

    def make(number: int, title: str) -> Recorder:
        rec = Recorder(number, title)
        made.append(rec)
        return rec

    yield make
    for rec in made:
        _LINES.append(rec.line())
        print(rec.line())
        for c in rec.parts:
            print("    " + c.line())


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
