"""Shared store for acceptance result lines (printed by conftest at the end)."""

lines = []


def record(number: int, ok, detail: str) -> None:
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    lines.append((number, line))
    print(line)
