"""Operation counters used to verify complexity claims in tests."""


class OpCounter:
    """Counts elementary operations (e.g. distance evaluations)."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def reset(self) -> None:
        self.count = 0
