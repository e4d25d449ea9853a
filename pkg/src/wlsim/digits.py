"""Exact base-m fixed-point codes for multisets.

A multiset over positions {1, 2, ...} of order at most m-1 is encoded as the
digits of a base-m fraction: position i contributes one count to the digit at
depth i. Addition of codes counts, shifting multiplies by m^-offset, and the
code is unique per multiset as long as no digit ever reaches m. Reaching m
is reported as an error rather than carried, because a carry would merge
distinct multisets.

Everything here is integer arithmetic on digit tuples; no floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import BASE_MISMATCH, DIGIT_OVERFLOW, INVALID_SCHEMA, ValidationError


def _normalize(digits: Iterable[int]) -> tuple[int, ...]:
    out = list(digits)
    while out and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class DigitVector:
    """Digits of a base-``base`` fraction, index i holding the m^-(i+1) coefficient."""

    base: int
    digits: tuple[int, ...]

    def __post_init__(self):
        if self.base < 2:
            raise ValidationError(INVALID_SCHEMA, f"base must be >= 2, got {self.base}")
        object.__setattr__(self, "digits", _normalize(self.digits))
        for pos, d in enumerate(self.digits, start=1):
            if d < 0:
                raise ValidationError(INVALID_SCHEMA, f"negative digit at position {pos}")
            if d >= self.base:
                raise ValidationError(
                    DIGIT_OVERFLOW, f"digit {d} at position {pos} reached base {self.base}"
                )

    @classmethod
    def zero(cls, base: int) -> "DigitVector":
        return cls(base, ())

    def is_zero(self) -> bool:
        return not self.digits


def code_of(position: int, base: int) -> DigitVector:
    """The code of a single element at ``position`` (>= 1): one count at that depth."""
    if position < 1:
        raise ValidationError(INVALID_SCHEMA, f"position must be >= 1, got {position}")
    return DigitVector(base, (0,) * (position - 1) + (1,))


def add(a: DigitVector, b: DigitVector) -> DigitVector:
    """Digit-wise sum. Raises DIGIT_OVERFLOW if any digit would reach the base."""
    if a.base != b.base:
        raise ValidationError(BASE_MISMATCH, f"bases differ: {a.base} vs {b.base}")
    n = max(len(a.digits), len(b.digits))
    summed = []
    for i in range(n):
        da = a.digits[i] if i < len(a.digits) else 0
        db = b.digits[i] if i < len(b.digits) else 0
        s = da + db
        if s >= a.base:
            raise ValidationError(
                DIGIT_OVERFLOW,
                f"digit {s} at position {i + 1} reached base {a.base}; multiset order exceeded",
            )
        summed.append(s)
    return DigitVector(a.base, tuple(summed))


def shift(a: DigitVector, offset: int) -> DigitVector:
    """Move every digit ``offset`` positions deeper (multiply by base^-offset)."""
    if offset < 0:
        raise ValidationError(INVALID_SCHEMA, f"offset must be >= 0, got {offset}")
    if a.is_zero() or offset == 0:
        return DigitVector(a.base, a.digits)
    return DigitVector(a.base, (0,) * offset + a.digits)


def encode_multiset(positions: Iterable[int], base: int) -> DigitVector:
    """Sum of per-element codes; order of the multiset must stay below the base."""
    acc = DigitVector.zero(base)
    for p in positions:
        acc = add(acc, code_of(p, base))
    return acc
