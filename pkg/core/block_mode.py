# core/block_mode.py
from enum import Enum


class BlockMode(Enum):
    ONE_BLOCK = "one-block"
    NINE_BLOCK = "nine-block"

    @property
    def block_count(self) -> int:
        return 1 if self is BlockMode.ONE_BLOCK else 9


class AutocorrSource(Enum):
    EMPIRICAL = "empirical"
    MARKOV = "markov"
