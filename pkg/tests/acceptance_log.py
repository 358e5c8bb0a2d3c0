"""Collects one PASS/FAIL line per acceptance criterion for the run summary."""

RESULTS = []


def report(name, ok, detail="", extra=()):
    """Record a criterion outcome; ``extra`` lines are shown indented under it."""
    RESULTS.append((name, bool(ok), detail, list(extra)))
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    for e in extra:
        print("      " + e)
    return ok
