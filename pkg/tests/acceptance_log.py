"""One PASS/FAIL line per acceptance criterion, printed at the end of the pytest run."""

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
    RESULTS.append(line)
    print(line)
