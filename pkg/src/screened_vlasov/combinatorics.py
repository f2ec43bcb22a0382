"""Partition enumeration and the combinatorial inequalities of the ladder.

Higher spatial derivatives of compositions are expanded over integer
partitions (the Faa di Bruno formula).  The solver's induction closes because
each partition term, weighted by the Gevrey weights ``phi_n``, is summable
with a uniform constant.  This module enumerates partitions as multiplicity
tuples, computes the exact integer composition weights, and certifies the
per-term and summed inequalities together with the interpolation bounds that
prove them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .weights import phi_eval

__all__ = [
    "enumerate_partitions",
    "multinomial_weight",
    "PartitionReport",
    "partition_margins",
    "geometric_tail_sum",
    "InterpolationMargins",
    "interpolation_margins",
    "binom_phi_sums",
]

#: Largest order whose partitions the enumerator serves (p(16) = 231 tuples).
MAX_PARTITION_ORDER = 16

#: Constant dividing each non-unit factor in the summed partition bound.
LADDER_FACTOR_DIVISOR = 200.0

#: Exponent in the summed-bound constant exp(0.15) (geometric tail 15 / 100).
PARTITION_SUM_EXPONENT = 0.15


def enumerate_partitions(n: int) -> list[tuple[int, ...]]:
    """List the partitions of ``n`` as multiplicity tuples, in ascending lex order.

    A partition is encoded as ``m = (m_1, ..., m_n)`` with ``sum(j*m_j) == n``;
    ``m_j`` counts the parts equal to ``j``.  The count of tuples is the
    partition number ``p(n)``.
    """
    if not isinstance(n, int) or not 1 <= n <= MAX_PARTITION_ORDER:
        raise ValueError(f"enumerate_partitions requires 1 <= n <= {MAX_PARTITION_ORDER}")
    found: list[tuple[int, ...]] = []
    counts = [0] * n

    def descend(remaining: int, max_part: int) -> None:
        if remaining == 0:
            found.append(tuple(counts))
            return
        for part in range(min(remaining, max_part), 0, -1):
            counts[part - 1] += 1
            descend(remaining - part, part)
            counts[part - 1] -= 1

    descend(n, n)
    return sorted(found)


def multinomial_weight(m: Sequence[int]) -> int:
    """Exact integer composition weight ``n! / (prod m_j! * (j!)**m_j)``.

    This is the number of set partitions of ``{1..n}`` with ``m_j`` blocks of
    size ``j``; summed over all ``m`` it gives the Bell number of ``n``.
    """
    if any(v < 0 for v in m):
        raise ValueError("multiplicities must be nonnegative")
    n = sum(j * mj for j, mj in enumerate(m, start=1))
    if n == 0:
        raise ValueError("the empty partition has no composition weight")
    numerator = math.factorial(n)
    denominator = 1
    for j, mj in enumerate(m, start=1):
        if mj:
            denominator *= math.factorial(mj) * math.factorial(j) ** mj
    quotient, remainder = divmod(numerator, denominator)
    if remainder:
        raise ArithmeticError("composition weight is not integral; enumeration bug")
    return quotient


@dataclass(frozen=True)
class PartitionReport:
    """Per-tuple and summed margins of the partition inequalities at ``(n, t)``.

    ``product_*`` is the bare factorial-product bound, ``weighted_*`` the
    phi-weighted variant, and ``sum_*`` the full partition sum against
    ``n! * phi_n(t) * exp(0.15)``.  All margins are ``rhs - lhs``.
    """

    n: int
    t: float
    tuples: list[tuple[int, ...]]
    weights: list[int]
    product_lhs: np.ndarray
    product_rhs: np.ndarray
    weighted_lhs: np.ndarray
    weighted_rhs: np.ndarray
    sum_lhs: float
    sum_rhs: float

    @property
    def product_margins(self) -> np.ndarray:
        return self.product_rhs - self.product_lhs

    @property
    def weighted_margins(self) -> np.ndarray:
        return self.weighted_rhs - self.weighted_lhs

    @property
    def sum_margin(self) -> float:
        return self.sum_rhs - self.sum_lhs


def partition_margins(n: int, t: float) -> PartitionReport:
    """Certify the per-partition product bounds and the summed bound at ``(n, t)``.

    For each multiplicity tuple ``m`` with ``k = sum(m_j)``, ``m_1`` the count
    of unit parts and ``s = 2k - m_1``:

    * product bound:   ``(k!)^2/(m_1! n!) * prod_{j>=2}(j!/2)^{m_j}
      <= (s/n)^{(s-2)/2} * prod_{j>=2}(j/n)^{(j-2)m_j/2}``
    * weighted bound:  the same with ``phi_k/phi_n`` and ``phi_j`` factors on
      the left and fourth-root exponents on the right
    * summed bound:    ``sum_m (k!)^2 phi_k / prod(m_j!) *
      prod_{j>=2}(j! phi_j / 200)^{m_j} <= n! phi_n exp(0.15)``
    """
    if n < 1:
        raise ValueError("partition_margins requires n >= 1")
    tuples = enumerate_partitions(n)
    weights = [multinomial_weight(m) for m in tuples]
    phi = [float(phi_eval(j, t)) for j in range(n + 1)]
    n_factorial = float(math.factorial(n))

    product_lhs = np.empty(len(tuples))
    product_rhs = np.empty(len(tuples))
    weighted_lhs = np.empty(len(tuples))
    weighted_rhs = np.empty(len(tuples))
    sum_lhs = 0.0
    for row, m in enumerate(tuples):
        k = sum(m)
        m1 = m[0]
        s = 2 * k - m1
        k_sq = float(math.factorial(k)) ** 2
        base = k_sq / (math.factorial(m1) * n_factorial)

        bare_prod = 1.0
        weighted_prod = 1.0
        rhs_half = 1.0
        rhs_quarter = 1.0
        term_prod = 1.0
        for j in range(2, n + 1):
            mj = m[j - 1]
            if not mj:
                continue
            j_fact = float(math.factorial(j))
            bare_prod *= (j_fact / 2.0) ** mj
            weighted_prod *= (j_fact * phi[j] / 2.0) ** mj
            rhs_half *= (j / n) ** ((j - 2) * mj / 2.0)
            rhs_quarter *= (j / n) ** ((j - 2) * mj / 4.0)
            term_prod *= (j_fact * phi[j] / LADDER_FACTOR_DIVISOR) ** mj / math.factorial(mj)

        product_lhs[row] = base * bare_prod
        product_rhs[row] = (s / n) ** ((s - 2) / 2.0) * rhs_half
        weighted_lhs[row] = base * phi[k] / phi[n] * weighted_prod
        weighted_rhs[row] = rhs_quarter
        sum_lhs += k_sq * phi[k] / math.factorial(m1) * term_prod

    sum_rhs = n_factorial * phi[n] * math.exp(PARTITION_SUM_EXPONENT)
    return PartitionReport(
        n=n,
        t=float(t),
        tuples=tuples,
        weights=weights,
        product_lhs=product_lhs,
        product_rhs=product_rhs,
        weighted_lhs=weighted_lhs,
        weighted_rhs=weighted_rhs,
        sum_lhs=sum_lhs,
        sum_rhs=sum_rhs,
    )


def geometric_tail_sum(n: int) -> float:
    """Evaluate ``sum_{j=2}^n (j/n)**((j-2)/4)``, which stays below 15.

    This tail sum turns the per-factor fourth-root decay into the uniform
    ``exp(0.15)`` constant of the summed partition bound.
    """
    if n < 2:
        raise ValueError("geometric_tail_sum requires n >= 2")
    j = np.arange(2, n + 1, dtype=float)
    return float(np.sum((j / n) ** ((j - 2) / 4.0)))


@dataclass(frozen=True)
class InterpolationMargins:
    """Margins of the per-factor interpolation bounds at ``(n, j, t)``."""

    factorial_margin: float
    weight_margin: float


def interpolation_margins(n: int, j: int, t: float) -> InterpolationMargins:
    """Certify the two per-factor interpolation inequalities.

    For ``n >= 3`` and ``2 <= j <= n``:

    * factorial bound: ``j!/2 <= (n!/2)**((j-2)/(n-2)) * (j/n)**((j-2)/2)``
      (equality at ``j == 2`` and at ``(n, j) == (4, 3)``)
    * weight bound: ``phi_j(t) * (j/n)**((j-2)/4) <= phi_n(t)**((j-2)/(n-2))``
    """
    if n < 3:
        raise ValueError("interpolation_margins requires n >= 3")
    if not 2 <= j <= n:
        raise ValueError("interpolation_margins requires 2 <= j <= n")
    ratio = (j - 2) / (n - 2)
    factorial_rhs = (math.factorial(n) / 2.0) ** ratio * (j / n) ** ((j - 2) / 2.0)
    factorial_lhs = math.factorial(j) / 2.0
    weight_rhs = float(phi_eval(n, t)) ** ratio
    weight_lhs = float(phi_eval(j, t)) * (j / n) ** ((j - 2) / 4.0)
    return InterpolationMargins(
        factorial_margin=factorial_rhs - factorial_lhs,
        weight_margin=weight_rhs - weight_lhs,
    )


def binom_phi_sums(n: int, t: float) -> tuple[float, float]:
    """Binomially-damped weight sums ``sum_k phi_{n-k} phi_k / (C(n,k) phi_n)``.

    Returns ``(sum over k=1..n, sum over k=0..n)``; the first stays at or
    below ``5/3`` (with equality at ``n in {3, 4}``, ``t = 0``) and the second
    below ``8/3``.
    """
    if n < 1:
        raise ValueError("binom_phi_sums requires n >= 1")
    phi = [float(phi_eval(k, t)) for k in range(n + 1)]
    terms = [phi[n - k] * phi[k] / (math.comb(n, k) * phi[n]) for k in range(n + 1)]
    from_one = float(sum(terms[1:]))
    from_zero = float(sum(terms))
    return from_one, from_zero
