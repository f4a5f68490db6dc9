"""Collects one verdict per acceptance criterion for the end-of-run summary."""

RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    RESULTS[criterion] = (bool(ok), detail)
    print(format_line(criterion))
    return bool(ok)


def format_line(criterion: int) -> str:
    ok, detail = RESULTS[criterion]
    return f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
