"""Collects one pass/fail line per acceptance criterion."""

LINES = []


def report(n: int, ok: bool, title: str, detail: str = "") -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    LINES.append(line)
    print(line)
    return ok
