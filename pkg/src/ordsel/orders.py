"""Sort orders and the prefix algebra everything else is built on.

A sort order is an ordered sequence of attributes; the empty order is the
identity of concatenation and is subsumed by every order.  All operators here
ignore sort direction (ascending is assumed throughout).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator


class OrderAlgebraError(ValueError):
    """Base class for sort-order algebra violations."""


class DuplicateAttributeError(OrderAlgebraError):
    """An attribute would appear twice in one sort order."""


class NotAPrefixError(OrderAlgebraError):
    """Subtraction requested for an order that is not a prefix."""


@dataclass(frozen=True, order=True)
class Attribute:
    """A column, optionally qualified by a relation name.

    Equality and ordering are by the (qualifier, column) pair; the empty
    qualifier sorts first so bare columns precede qualified ones.
    """

    qualifier: str | None
    column: str

    def __post_init__(self) -> None:
        if not self.column:
            raise OrderAlgebraError("attribute column name must be non-empty")

    @classmethod
    def parse(cls, text: str) -> "Attribute":
        """Parse "REL.col" or "col"; the first dot separates the qualifier."""
        if "." in text:
            qualifier, column = text.split(".", 1)
            if not qualifier:
                raise OrderAlgebraError(f"empty qualifier in attribute {text!r}")
            return cls(qualifier, column)
        return cls(None, text)

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.qualifier or "", self.column)

    def __str__(self) -> str:
        return f"{self.qualifier}.{self.column}" if self.qualifier else self.column


AttributeSet = frozenset  # set-of-Attribute semantics; permutations live in SortOrder


@dataclass(frozen=True)
class SortOrder:
    """An ordered, duplicate-free sequence of attributes."""

    attrs: tuple[Attribute, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.attrs)) != len(self.attrs):
            raise DuplicateAttributeError(f"duplicate attribute in order {self.attrs}")

    @classmethod
    def of(cls, *names: str) -> "SortOrder":
        return cls(tuple(Attribute.parse(n) for n in names))

    @classmethod
    def from_strings(cls, names: Iterable[str]) -> "SortOrder":
        return cls(tuple(Attribute.parse(n) for n in names))

    def to_strings(self) -> list[str]:
        return [str(a) for a in self.attrs]

    @property
    def attr_set(self) -> frozenset[Attribute]:
        return frozenset(self.attrs)

    def __len__(self) -> int:
        return len(self.attrs)

    def __bool__(self) -> bool:
        return bool(self.attrs)

    def __iter__(self) -> Iterator[Attribute]:
        return iter(self.attrs)

    def __str__(self) -> str:
        return "(" + ",".join(str(a) for a in self.attrs) + ")"


EMPTY_ORDER = SortOrder()


def subsumes(o1: SortOrder, o2: SortOrder) -> bool:
    """True iff o2 is a prefix of o1 (every order subsumes the empty order)."""
    return o1.attrs[: len(o2.attrs)] == o2.attrs


def lcp(o1: SortOrder, o2: SortOrder) -> SortOrder:
    """Longest common prefix of two sort orders."""
    common: list[Attribute] = []
    for a, b in zip(o1.attrs, o2.attrs):
        if a != b:
            break
        common.append(a)
    return SortOrder(tuple(common))


def lcp_in_set(o: SortOrder, s: frozenset[Attribute] | set[Attribute]) -> SortOrder:
    """Longest prefix of o whose attributes all belong to s."""
    prefix: list[Attribute] = []
    for a in o.attrs:
        if a not in s:
            break
        prefix.append(a)
    return SortOrder(tuple(prefix))


def concat(o1: SortOrder, o2: SortOrder) -> SortOrder:
    """o1 followed by o2; the attribute sets must be disjoint."""
    overlap = o1.attr_set & o2.attr_set
    if overlap:
        raise DuplicateAttributeError(
            f"cannot concatenate orders sharing {sorted(str(a) for a in overlap)}"
        )
    return SortOrder(o1.attrs + o2.attrs)


def subtract(o1: SortOrder, o2: SortOrder) -> SortOrder:
    """The unique suffix o' with concat(o2, o') == o1; o2 must be a prefix."""
    if not subsumes(o1, o2):
        raise NotAPrefixError(f"{o2} is not a prefix of {o1}")
    return SortOrder(o1.attrs[len(o2.attrs):])


def canonical_permutation(s: Iterable[Attribute]) -> SortOrder:
    """Deterministic permutation of an attribute set.

    Ascending lexicographic order of (qualifier, column), so every
    "arbitrarily chosen permutation" in the pipeline is reproducible.
    """
    return SortOrder(tuple(sorted(s, key=lambda a: a.sort_key)))
