"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

from __future__ import annotations

_RESULTS: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    _RESULTS[number] = (bool(passed), detail)
    print(line(number))


def line(number: int) -> str:
    passed, detail = _RESULTS[number]
    return f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def summary_lines() -> list[str]:
    return [line(n) for n in sorted(_RESULTS)]
