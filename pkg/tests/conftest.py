RESULTS = []


def record(number, title, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})"
    RESULTS.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
