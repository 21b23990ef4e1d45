"""
Hermite polynomials and L2(gamma) expansions of real functions.

The probabilists' family is used throughout: H_0 = 1, H_1 = x and
H_{m+1}(x) = x H_m(x) - m H_{m-1}(x), orthogonal against the standard Gaussian
measure gamma with E[H_m H_l] = m! delta_{ml}.

A function f is represented by the finite coefficient sequence c_0..c_M of
f = sum c_m H_m. Functions given as callables are projected by quadrature,
functions given as coefficient lists bypass quadrature.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import hermite_e, legendre
from scipy.special import gammaln

from bmlab.errors import EvaluationError, HermiteRangeError, IntegrabilityWarning, RankError
from reference_data.reference import (
    default_max_order,
    default_quadrature_nodes,
    default_rank_tol,
    integrability_excess,
    max_hermite_order,
    split_rule_half_width,
)

LOGGER = logging.getLogger(__name__)

SYMBOLIC = "symbolic-coefficients"
QUADRATURE = "quadrature-of-callable"


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights such that sum(w * f(x)) approximates the integral of f against gamma.

    `gauss-hermite` rules integrate polynomials up to degree 2 * order - 1 exactly.
    `split-legendre` rules put a Gauss-Legendre panel on each half-line, which keeps
    spectral accuracy for callables with a kink at 0 such as |x|."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "gauss-hermite"

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    @classmethod
    def gauss_hermite(cls, order: int = default_quadrature_nodes) -> "QuadratureRule":
        if order < 1:
            raise ValueError(f"A quadrature rule needs at least one node, got {order}")
        nodes, weights = hermite_e.hermegauss(order)
        return cls(nodes=nodes, weights=weights / np.sqrt(2.0 * np.pi))

    @classmethod
    def split_legendre(
        cls, order: int = default_quadrature_nodes, half_width: float = split_rule_half_width
    ) -> "QuadratureRule":
        if order < 1:
            raise ValueError(f"A quadrature rule needs at least one node per panel, got {order}")
        u, w = legendre.leggauss(order)
        x = 0.5 * half_width * (u + 1.0)
        w = 0.5 * half_width * w * np.exp(-0.5 * x**2) / np.sqrt(2.0 * np.pi)
        nodes = np.concatenate([-x[::-1], x])
        weights = np.concatenate([w[::-1], w])
        return cls(nodes=nodes, weights=weights, kind="split-legendre")

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


_DEFAULT_RULE: Optional[QuadratureRule] = None


def default_rule() -> QuadratureRule:
    global _DEFAULT_RULE
    if _DEFAULT_RULE is None:
        _DEFAULT_RULE = QuadratureRule.gauss_hermite(default_quadrature_nodes)
    return _DEFAULT_RULE


def _check_order(m: int):
    if not 0 <= m <= max_hermite_order:
        raise HermiteRangeError(
            f"Hermite order {m} is outside the supported range 0..{max_hermite_order}"
        )


def hermite_eval(m: int, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """H_m(x) by the three-term recurrence"""
    _check_order(m)
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x.copy()
    if m == 0:
        h = h_prev
    for k in range(1, m):
        h_prev, h = h, x * h - k * h_prev
    return float(h) if h.ndim == 0 else h


def _log_factorial(orders: np.ndarray) -> np.ndarray:
    return gammaln(np.asarray(orders, dtype=float) + 1.0)


def _normalised_table(max_order: int, x: np.ndarray) -> np.ndarray:
    """Rows H_m(x) / sqrt(m!) for m = 0..max_order; bounded where H_m itself overflows"""
    _check_order(max_order)
    table = np.empty((max_order + 1, x.size))
    table[0] = 1.0
    if max_order >= 1:
        table[1] = x
    for m in range(1, max_order):
        table[m + 1] = (x * table[m] - np.sqrt(m) * table[m - 1]) / np.sqrt(m + 1.0)
    return table


def _chaos_norms(coeffs: np.ndarray) -> np.ndarray:
    """sqrt(m!) |c_m|, the L2(gamma) norm of each chaos component, computed in log-space"""
    coeffs = np.asarray(coeffs, dtype=float)
    norms = np.zeros_like(coeffs)
    nonzero = coeffs != 0.0
    orders = np.arange(coeffs.size)[nonzero]
    norms[nonzero] = np.exp(np.log(np.abs(coeffs[nonzero])) + 0.5 * _log_factorial(orders))
    return norms


def _rank_from_norms(norms: np.ndarray, threshold: float) -> Optional[int]:
    above = np.flatnonzero(norms > threshold)
    return int(above[0]) if above.size else None


@dataclass(frozen=True, eq=False)
class HermiteExpansion:
    """f = sum_{m <= max_order} coeffs[m] H_m, with detected Hermite rank.

    `rank` is None when every chaos component is below `rank_threshold` (rank
    "undefined"). The threshold applies to sqrt(m!)|c_m| and is inherited by every
    expansion derived from this one.

    An expansion projected from a callable keeps it in `function`, and calling the
    expansion evaluates f itself rather than its truncated series. Derivatives,
    pseudo-inverses and truncations are series only."""

    coeffs: np.ndarray
    rank: Optional[int]
    rank_threshold: float
    source: str = SYMBOLIC
    function: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).ravel()
        if coeffs.size == 0:
            coeffs = np.zeros(1)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_coefficients(
        cls,
        coeffs: Sequence[float],
        source: str = SYMBOLIC,
        rank_tol: float = default_rank_tol,
        rank_threshold: Optional[float] = None,
        function: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> "HermiteExpansion":
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if coeffs.size - 1 > max_hermite_order:
            raise HermiteRangeError(
                f"Expansion order {coeffs.size - 1} exceeds the supported {max_hermite_order}"
            )
        norms = _chaos_norms(coeffs)
        if rank_threshold is None:
            rank_threshold = rank_tol * float(np.sqrt(np.sum(norms**2)))
        return cls(
            coeffs=coeffs,
            rank=_rank_from_norms(norms, rank_threshold),
            rank_threshold=rank_threshold,
            source=source,
            function=function,
        )

    @property
    def max_order(self) -> int:
        return int(self.coeffs.size - 1)

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(_chaos_norms(self.coeffs) ** 2)))

    def _derived(self, coeffs: np.ndarray) -> "HermiteExpansion":
        return HermiteExpansion.from_coefficients(
            coeffs, source=self.source, rank_threshold=self.rank_threshold
        )

    def scaled(self, alpha: float) -> "HermiteExpansion":
        function = None
        if self.function is not None:
            f = self.function
            function = lambda x: alpha * f(x)
        return HermiteExpansion.from_coefficients(
            alpha * self.coeffs,
            source=self.source,
            rank_threshold=abs(alpha) * self.rank_threshold,
            function=function,
        )

    def center(self) -> "HermiteExpansion":
        """f - E[f(N)]"""
        coeffs = self.coeffs.copy()
        coeffs[0] = 0.0
        function = None
        if self.function is not None:
            f, c_0 = self.function, self.coeffs[0]
            function = lambda x: f(x) - c_0
        return HermiteExpansion.from_coefficients(
            coeffs, source=self.source, rank_threshold=self.rank_threshold, function=function
        )

    def __call__(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        if self.function is None:
            return evaluate(self, x)
        values = np.broadcast_to(np.asarray(self.function(x), dtype=float), np.shape(x))
        return float(values) if values.ndim == 0 else values

    def to_dict(self) -> dict:
        return {
            "coeffs": [float(c) for c in self.coeffs],
            "rank": "undefined" if self.rank is None else self.rank,
            "max_order": self.max_order,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HermiteExpansion":
        e = cls.from_coefficients(d["coeffs"], source=d.get("source", SYMBOLIC))
        stored = None if d.get("rank") in (None, "undefined") else int(d["rank"])
        if stored != e.rank:
            LOGGER.info("Stored rank %s differs from the detected rank %s", stored, e.rank)
        return e


def evaluate(e: HermiteExpansion, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """sum c_m H_m(x), by Clenshaw summation; the series even when e keeps its callable"""
    return hermite_e.hermeval(x, e.coeffs)


def _tail_decays(energies: np.ndarray) -> bool:
    """True if the last third of a nonnegative sequence carries no more mass than the middle third"""
    energies = np.where(energies > 1e-24 * energies.sum(), energies, 0.0)
    third = max(energies.size // 3, 1)
    tail = energies[-third:].sum()
    middle = energies[-2 * third : -third].sum() if energies.size >= 2 * third else 0.0
    return bool(tail <= middle or tail == 0.0)


def expand(
    f: Callable[[np.ndarray], np.ndarray],
    max_order: int = default_max_order,
    rule: Optional[QuadratureRule] = None,
    rank_tol: float = default_rank_tol,
) -> HermiteExpansion:
    """Projects a callable on H_0..H_max_order: c_m = (1/m!) sum_j w_j f(x_j) H_m(x_j)"""
    _check_order(max_order)
    rule = rule or default_rule()
    try:
        values = np.asarray(f(rule.nodes), dtype=float)
        function = f
    except (TypeError, ValueError):
        values = np.array([f(float(x)) for x in rule.nodes], dtype=float)
        function = np.vectorize(f, otypes=[float])
    values = np.broadcast_to(values, rule.nodes.shape)
    if not np.all(np.isfinite(values)):
        bad = rule.nodes[~np.isfinite(values)]
        raise EvaluationError(
            f"The function is not finite at {bad.size} quadrature node(s), e.g. x = {bad[0]:.6g}"
        )

    # sqrt(m!) c_m = E[f(N) H_m(N)] / sqrt(m!)
    projections = _normalised_table(max_order, rule.nodes) @ (rule.weights * values)
    orders = np.arange(max_order + 1)
    coeffs = projections * np.exp(-0.5 * _log_factorial(orders))
    e = HermiteExpansion.from_coefficients(
        coeffs, source=QUADRATURE, rank_tol=rank_tol, function=function
    )

    parseval = float(np.sum(projections**2))
    direct = rule.integrate(values**2)
    LOGGER.debug(
        "Expanded a callable to order %d on %d nodes: parseval %.6g, direct %.6g",
        max_order,
        rule.order,
        parseval,
        direct,
    )
    if not _tail_decays(projections**2) or parseval > (1.0 + integrability_excess) * direct:
        warnings.warn(
            f"Hermite coefficients do not decay (sum m! c_m^2 = {parseval:.6g}, direct "
            f"estimate of E[f^2] = {direct:.6g}); f may not be square integrable",
            IntegrabilityWarning,
        )
    return e


def rank_of(e: HermiteExpansion, rank_tol: Optional[float] = None) -> Optional[int]:
    """Smallest m with |c_m| > rank_tol, or None ("undefined").

    Without an explicit tolerance the rank detected at construction is returned."""
    if rank_tol is None:
        return e.rank
    above = np.flatnonzero(np.abs(e.coeffs) > rank_tol)
    return int(above[0]) if above.size else None


def derivative(e: HermiteExpansion) -> HermiteExpansion:
    """f' via H_m' = m H_{m-1}"""
    if e.max_order == 0:
        return e._derived(np.zeros(1))
    return e._derived(hermite_e.hermeder(e.coeffs))


def ou_pseudo_inverse(e: HermiteExpansion) -> HermiteExpansion:
    """g = -L^{-1} f = sum (c_m / m) H_m; undefined on the constant chaos"""
    if e.rank == 0:
        raise RankError(
            f"The pseudo-inverse of the Ornstein-Uhlenbeck operator needs c_0 = 0, got c_0 = {e.coeffs[0]:.6g}"
        )
    coeffs = np.zeros_like(e.coeffs)
    orders = np.arange(1, e.coeffs.size)
    coeffs[1:] = e.coeffs[1:] / orders
    return e._derived(coeffs)


def truncate(e: HermiteExpansion, p: int) -> HermiteExpansion:
    """Zeroes the coefficients of order > p"""
    if p < 0:
        raise ValueError(f"Truncation order must be nonnegative, got {p}")
    if p >= e.max_order:
        return e
    coeffs = e.coeffs.copy()
    coeffs[p + 1 :] = 0.0
    return e._derived(coeffs)


def malliavin_sobolev_norm(e: HermiteExpansion) -> float:
    """||f||_{1,2} = (E[f^2] + E[f'^2])^{1/2} = (sum (1 + m) m! c_m^2)^{1/2}"""
    norms = _chaos_norms(e.coeffs)
    orders = np.arange(e.coeffs.size)
    return float(np.sqrt(np.sum((1.0 + orders) * norms**2)))


@dataclass(frozen=True, eq=False)
class DecayDiagnostic:
    energies: np.ndarray
    decaying: bool


def decay_diagnostic(e: HermiteExpansion) -> DecayDiagnostic:
    """The energies m m! c_m^2 of f' per chaos; membership of f in D^{1,2} needs them summable.

    Whether a black-box callable is in D^{1,2} cannot be decided numerically, so
    only the decay verdict of the truncated sequence is reported."""
    orders = np.arange(e.coeffs.size)
    energies = orders * _chaos_norms(e.coeffs) ** 2
    return DecayDiagnostic(
        energies=energies, decaying=e.source == SYMBOLIC or _tail_decays(energies)
    )


def chaos_energies(e: HermiteExpansion) -> np.ndarray:
    """m! c_m^2, the squared L2(gamma) norm of each chaos component of f"""
    return _chaos_norms(e.coeffs) ** 2
