"""Collects acceptance verdicts and prints one line per criterion after the run."""

VERDICTS: dict = {}


def record(number: int, name: str, ok: bool, detail: str) -> bool:
    VERDICTS[number] = (name, bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name}: {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        name, ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name}: {detail}")
    passed = sum(ok for _, ok, _ in VERDICTS.values())
    terminalreporter.write_line(f"{passed}/{len(VERDICTS)} criteria pass")
