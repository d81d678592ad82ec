"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[number] = line
    print(line)
    return line
