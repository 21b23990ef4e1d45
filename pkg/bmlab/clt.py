"""
Breuer-Major partial sums and their distance to the Gaussian limit.

S_n(f) = n^{-1/2} sum_{k <= n} f(X_k) converges to N(0, sigma^2) with
sigma^2 = sum_{m >= d} m! c_m^2 sum_{k in Z} rho(k)^m when rho is in l^d,
d being the Hermite rank of f.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal, stats

from bmlab.errors import EstimationError, RankError, SummabilityWarning
from bmlab.functions import mean_and_se, variance_and_se
from bmlab.gaussproc import (
    CorrelationModel,
    PathBatch,
    SummabilityReport,
    lag_sum,
    stream,
    summability,
)
from bmlab.hermite import HermiteExpansion, chaos_energies
from reference_data.reference import (
    default_k_lag,
    kde_grid_points,
    kde_span_sd,
    min_kde_sample,
    stein_betas,
    tv_floor_copy,
)

LOGGER = logging.getLogger(__name__)

# sigma^2 below this fraction of E[f^2] is treated as zero
_DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PartialSumSample:
    values: np.ndarray
    n: int
    normalized: bool = False
    # pooled standard deviation the values were divided by, 1 when not normalized
    scale: float = 1.0

    @property
    def M(self) -> int:
        return int(self.values.size)


def partial_sum(f: HermiteExpansion, batch: PathBatch, normalized: bool = False) -> PartialSumSample:
    if f.rank == 0:
        raise RankError(
            f"Breuer-Major sums need a centered function (rank >= 1), got c_0 = {f.coeffs[0]:.6g}"
        )
    values = np.sum(f(batch.data), axis=1) / np.sqrt(batch.n)
    if not normalized:
        return PartialSumSample(values=values, n=batch.n)
    scale = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    if scale == 0.0:
        raise EstimationError("Cannot normalize partial sums with zero pooled variance")
    return PartialSumSample(values=values / scale, n=batch.n, normalized=True, scale=scale)


@dataclass(frozen=True)
class EmpiricalVariance:
    n: int
    var: float
    se: float

    @property
    def ci(self) -> Tuple[float, float]:
        return self.var - 1.96 * self.se, self.var + 1.96 * self.se


def empirical_variance(sample: PartialSumSample) -> EmpiricalVariance:
    var, se = variance_and_se(sample.values * sample.scale)
    return EmpiricalVariance(n=sample.n, var=var, se=se)


@dataclass(frozen=True)
class VarianceReport:
    """sigma^2 with the truncation it was computed under.

    `order_tail` is the magnitude of the highest-order term included, `lag_tail`
    the magnitude |rho(K)|^d of the last included lag term."""

    sigma2: float
    k_lag: int
    max_order: int
    order_tail: float
    lag_tail: float
    summability: SummabilityReport
    degenerate: bool
    empirical: Dict[int, EmpiricalVariance] = field(default_factory=dict)


def limiting_variance(
    f: HermiteExpansion, model: CorrelationModel, k_lag: int = default_k_lag
) -> VarianceReport:
    if f.rank == 0:
        raise RankError("The limiting variance is defined for centered functions (rank >= 1)")
    energies = chaos_energies(f)
    d = f.rank or 1
    check = summability(model, d, k_lag)
    if not check.converged:
        warnings.warn(
            f"sum |rho(k)|^{d} of {model.spec} does not converge numerically "
            f"(last-half increment {check.tail_increment:.3g} of {check.partial_sum:.3g}); "
            "sigma^2 is a truncated value",
            SummabilityWarning,
        )

    terms = np.zeros_like(energies)
    for m in np.flatnonzero(energies[1:] > 0.0) + 1:
        terms[m] = energies[m] * lag_sum(model, int(m), k_lag)
    sigma2 = float(terms.sum())
    nonzero = np.flatnonzero(terms)
    order_tail = float(abs(terms[nonzero[-1]])) if nonzero.size else 0.0
    if model.support is not None and model.support < k_lag:
        lag_tail = 0.0
    else:
        lag_tail = float(abs(model(k_lag)) ** d)
    degenerate = sigma2 <= _DEGENERATE_RTOL * max(float(energies.sum()), 1.0)
    if degenerate:
        LOGGER.info("sigma^2 = %.3g for %s: the limit is degenerate", sigma2, model.spec)
    return VarianceReport(
        sigma2=0.0 if degenerate else sigma2,
        k_lag=k_lag,
        max_order=f.max_order,
        order_tail=order_tail,
        lag_tail=lag_tail,
        summability=check,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class DistanceReport:
    tv: float
    kolmogorov: float
    kolmogorov_pvalue: float
    bandwidth: float
    M: int


def silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = (q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0.0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def binned_kde(x: np.ndarray, edges: np.ndarray, bandwidth: float) -> np.ndarray:
    """Gaussian KDE at the bin centres: binned relative frequencies convolved with the kernel"""
    width = edges[1] - edges[0]
    counts, _ = np.histogram(x, bins=edges)
    density = counts / (width * x.size)
    h = bandwidth / width
    if h < 0.5:
        return density
    offsets = np.arange(-int(np.ceil(5.0 * h)), int(np.ceil(5.0 * h)) + 1)
    kernel = np.exp(-0.5 * (offsets / h) ** 2)
    kernel /= kernel.sum()
    return np.clip(signal.fftconvolve(density, kernel, mode="same"), 0.0, None)


def density_tv(p: np.ndarray, q: np.ndarray, width: float) -> float:
    """1/2 integral |p - q| on a uniform grid"""
    return 0.5 * float(np.sum(np.abs(p - q))) * width


def tv_estimate(
    sample: Union[PartialSumSample, np.ndarray], mean: float = 0.0, var: float = 1.0
) -> DistanceReport:
    """Total variation between a sample and N(mean, var), with the Kolmogorov distance"""
    x = np.asarray(getattr(sample, "values", sample), dtype=float).ravel()
    sd = float(np.std(x))
    if x.size < 2 or not np.isfinite(sd) or sd == 0.0:
        raise EstimationError("Cannot estimate a density from a sample with zero variance")
    if x.size < min_kde_sample:
        raise EstimationError(
            f"{x.size} draws is below the {min_kde_sample} the default bandwidth is tuned for"
        )
    scale = np.sqrt(var)
    centre = float(np.mean(x))
    lo = min(centre - kde_span_sd * sd, mean - kde_span_sd * scale)
    hi = max(centre + kde_span_sd * sd, mean + kde_span_sd * scale)
    edges = np.linspace(lo, hi, kde_grid_points + 1)
    grid = 0.5 * (edges[1:] + edges[:-1])
    bandwidth = silverman_bandwidth(x)
    estimate = binned_kde(x, edges, bandwidth)
    reference = stats.norm.pdf(grid, loc=mean, scale=scale)
    ks = stats.kstest(x, "norm", args=(mean, scale))
    return DistanceReport(
        tv=density_tv(estimate, reference, edges[1] - edges[0]),
        kolmogorov=float(ks.statistic),
        kolmogorov_pvalue=float(ks.pvalue),
        bandwidth=bandwidth,
        M=int(x.size),
    )


@dataclass(frozen=True)
class TvFloor:
    M: int
    floor: float
    se: float


def calibrate_tv_floor(M: int, seed: int, repeats: int = 5, normalized: bool = True) -> TvFloor:
    """The TV estimate of exactly Gaussian samples of size M: the estimator's bias floor"""
    estimates = []
    for r in range(repeats):
        x = stream(seed, r, tv_floor_copy).standard_normal(M)
        if normalized:
            x = x / np.std(x, ddof=1)
        estimates.append(tv_estimate(x).tv)
    floor, se = mean_and_se(np.array(estimates))
    LOGGER.debug("TV floor at M = %d: %.4f +- %.4f", M, floor, se)
    return TvFloor(M=M, floor=floor, se=se)


def nnp21_rate(model: CorrelationModel, n: int) -> float:
    """n^{-1/2} [(sum_{|k|<=n} |rho(k)|)^{1/2} + (sum_{|k|<=n} |rho(k)|^{4/3})^{3/2}]"""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    first = lag_sum(model, 1.0, n, absolute=True)
    second = lag_sum(model, 4.0 / 3.0, n, absolute=True)
    return float((np.sqrt(first) + second**1.5) / np.sqrt(n))


TestFunction = Tuple[str, Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]


def stein_family(betas: Sequence[float] = stein_betas) -> List[TestFunction]:
    """tanh(bx), sin(bx) and u exp(-u^2/4) with u = bx, with their derivatives"""
    family = []
    for b in betas:
        family += [
            (f"tanh({b}x)", lambda x, b=b: np.tanh(b * x), lambda x, b=b: b / np.cosh(b * x) ** 2),
            (f"sin({b}x)", lambda x, b=b: np.sin(b * x), lambda x, b=b: b * np.cos(b * x)),
            (
                f"gauss({b}x)",
                lambda x, b=b: b * x * np.exp(-((b * x) ** 2) / 4.0),
                lambda x, b=b: b * (1.0 - (b * x) ** 2 / 2.0) * np.exp(-((b * x) ** 2) / 4.0),
            ),
        ]
    return family


@dataclass(frozen=True)
class SteinReport:
    discrepancy: float
    se: float
    max_z: float
    rows: List[Dict]


def stein_discrepancy(
    sample: Union[PartialSumSample, np.ndarray],
    nu: float,
    family: Optional[List[TestFunction]] = None,
) -> SteinReport:
    """max over the family of |E[F phi(F)] - nu E[phi'(F)]|"""
    x = np.asarray(getattr(sample, "values", sample), dtype=float).ravel()
    rows = []
    for name, phi, dphi in family or stein_family():
        value, se = mean_and_se(x * phi(x) - nu * dphi(x))
        rows.append({"phi": name, "value": value, "se": se, "z": abs(value) / se if se > 0 else 0.0})
    worst = max(rows, key=lambda row: abs(row["value"]))
    return SteinReport(
        discrepancy=abs(worst["value"]),
        se=worst["se"],
        max_z=max(row["z"] for row in rows),
        rows=rows,
    )
