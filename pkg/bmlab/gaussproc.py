"""
Exact simulation of centered stationary Gaussian sequences with unit variance.

Paths are drawn by circulant embedding of the Toeplitz covariance
(Dietrich & Newsam; Wood & Chan), padding the embedding until it is positive
semi-definite, with a dense Cholesky fallback for short paths.

Every row comes from its own counter-based stream keyed by (seed, replication,
copy): copy 0 is the base path X, copy 1 the doubled path X-hat of the sharp
construction and copies 2, 3, ... are fresh X-hat copies. Rows are therefore
reproducible one by one and independent of the order or the number of threads
they are generated with.
"""
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import toeplitz

from bmlab.errors import (
    ConfigError,
    ConstructionError,
    EmbeddingWarning,
    ModelError,
    ReportParseError,
    SimulationError,
)
from bmlab.functions import symmetric_lag_sum
from reference_data.reference import (
    base_copy,
    builtin_models,
    cholesky_max_n,
    clip_tolerance,
    default_summability_lags,
    doubled_copy,
    first_hat_copy,
    max_padding_factor,
    summability_rtol,
)

LOGGER = logging.getLogger(__name__)

# rows generated per task
_ROW_CHUNK = 256


@dataclass(frozen=True)
class CorrelationModel:
    """The correlation function rho: N -> R of the sequence, rho(0) = 1.

    kinds: kronecker, geometric (a^k), polynomial ((1 + k)^-alpha), fgn
    (fractional Gaussian noise with Hurst index H) and table (listed values).
    A table is finitely supported (unlisted lags are 0) unless `exhaustive` is
    False, in which case unlisted lags are unknown and asking for them is an error."""

    kind: str
    parameter: Optional[float] = None
    values: Tuple[float, ...] = ()
    exhaustive: bool = True

    def __post_init__(self):
        if self.kind == "kronecker":
            return
        if self.kind == "geometric":
            if self.parameter is None or not -1.0 < self.parameter < 1.0:
                raise ModelError(f"A geometric correlation needs |a| < 1, got {self.parameter}")
        elif self.kind == "polynomial":
            if self.parameter is None or self.parameter <= 0.0:
                raise ModelError(f"A polynomial decay needs alpha > 0, got {self.parameter}")
        elif self.kind == "fgn":
            if self.parameter is None or not 0.0 < self.parameter < 1.0:
                raise ModelError(f"A Hurst index must lie in (0, 1), got {self.parameter}")
        elif self.kind == "table":
            if len(self.values) == 0 or self.values[0] != 1.0:
                raise ModelError("A tabulated correlation must start with rho(0) = 1")
            if any(abs(v) > 1.0 for v in self.values):
                raise ModelError("A tabulated correlation must satisfy |rho(k)| <= 1")
        else:
            raise ModelError(f"Unknown correlation kind {self.kind!r}")

    @classmethod
    def kronecker(cls) -> "CorrelationModel":
        return cls("kronecker")

    @classmethod
    def geometric(cls, a: float) -> "CorrelationModel":
        return cls("geometric", parameter=float(a))

    @classmethod
    def polynomial(cls, alpha: float) -> "CorrelationModel":
        return cls("polynomial", parameter=float(alpha))

    @classmethod
    def fgn(cls, hurst: float) -> "CorrelationModel":
        return cls("fgn", parameter=float(hurst))

    @classmethod
    def table(cls, values: Sequence[float], exhaustive: bool = True) -> "CorrelationModel":
        return cls("table", values=tuple(float(v) for v in values), exhaustive=exhaustive)

    @property
    def spec(self) -> str:
        if self.kind == "kronecker":
            return "kronecker"
        if self.kind == "table":
            prefix = "table" if self.exhaustive else "table-prefix"
            return f"{prefix}:{json.dumps(list(self.values))}"
        short = {"geometric": "geom", "polynomial": "poly", "fgn": "fgn"}[self.kind]
        return f"{short}:{self.parameter!r}"

    @property
    def support(self) -> Optional[int]:
        """Largest lag with a known nonzero correlation, None if unbounded or unknown"""
        if self.kind == "kronecker":
            return 0
        if self.kind == "table" and self.exhaustive:
            return len(self.values) - 1
        return None

    def __call__(self, k: Union[int, np.ndarray]) -> np.ndarray:
        k = np.abs(np.asarray(k))
        if self.kind == "kronecker":
            return (k == 0).astype(float)
        if self.kind == "geometric":
            return self.parameter ** k.astype(float)
        if self.kind == "polynomial":
            return (1.0 + k) ** -self.parameter
        if self.kind == "fgn":
            h2 = 2.0 * self.parameter
            k = k.astype(float)
            return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
        table = np.asarray(self.values)
        if not self.exhaustive and np.any(k >= table.size):
            raise ModelError(
                f"The tabulated correlation lists lags 0..{table.size - 1} only, "
                f"lag {int(k.max())} is needed"
            )
        return np.where(k < table.size, table[np.minimum(k, table.size - 1)], 0.0)

    def lags(self, count: int) -> np.ndarray:
        """rho(0), ..., rho(count - 1)"""
        return np.asarray(self(np.arange(count)), dtype=float)

    def summable(self, d: float) -> Optional[bool]:
        """Analytic verdict on sum |rho(k)|^d < infinity, None when the family admits none"""
        if self.kind in ("kronecker", "geometric", "table"):
            return True if self.kind != "table" or self.exhaustive else None
        if self.kind == "polynomial":
            return self.parameter * d > 1.0
        if self.kind == "fgn":
            return self.parameter == 0.5 or d * (2.0 - 2.0 * self.parameter) > 1.0
        return None


def parse_model_spec(spec: str) -> CorrelationModel:
    """'kronecker', 'geom:0.5', 'poly:0.8', 'fgn:0.7', 'table:[1,0.6,0.2]' or 'table-prefix:[...]'"""
    name, _, argument = spec.strip().partition(":")
    if name not in builtin_models:
        raise ConfigError(
            f"Unknown correlation model {spec!r}; expected one of {', '.join(builtin_models)}"
        )
    try:
        if name == "kronecker":
            return CorrelationModel.kronecker()
        if name in ("table", "table-prefix"):
            values = np.asarray(json.loads(argument), dtype=float)
            if values.ndim != 1:
                raise ValueError("a list of correlations is expected")
        else:
            parameter = float(argument)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"Cannot parse the correlation model {spec!r}: {e}") from e
    if name in ("table", "table-prefix"):
        return CorrelationModel.table(values, exhaustive=name == "table")
    if name == "geom":
        return CorrelationModel.geometric(parameter)
    if name == "poly":
        return CorrelationModel.polynomial(parameter)
    return CorrelationModel.fgn(parameter)


@dataclass(frozen=True)
class SpectralReport:
    n: int
    embedding_size: int
    min_eigenvalue: float
    psd: bool


@dataclass(frozen=True)
class SummabilityReport:
    d: float
    lags: int
    partial_sum: float
    tail_increment: float
    converged: bool
    analytic: Optional[bool]


def _embedding_row(model: CorrelationModel, half: int) -> np.ndarray:
    """First row of the circulant of size 2 * half embedding rho(0..half)"""
    rho = model.lags(half + 1)
    return np.concatenate([rho, rho[-2:0:-1]])


def _embedding_eigenvalues(model: CorrelationModel, half: int) -> np.ndarray:
    return np.fft.fft(_embedding_row(model, half)).real


def validate(model: CorrelationModel, n: int) -> SpectralReport:
    """Spectrum of the minimal circulant embedding of rho(0), ..., rho(n - 1)"""
    if n < 1:
        raise ValueError(f"Path length must be at least 1, got {n}")
    if n == 1:
        return SpectralReport(n=1, embedding_size=1, min_eigenvalue=1.0, psd=True)
    eigenvalues = _embedding_eigenvalues(model, n - 1)
    min_eigenvalue = float(eigenvalues.min())
    return SpectralReport(
        n=n,
        embedding_size=eigenvalues.size,
        min_eigenvalue=min_eigenvalue,
        psd=min_eigenvalue >= -clip_tolerance,
    )


def summability(
    model: CorrelationModel, d: float, lags: int = default_summability_lags
) -> SummabilityReport:
    """Partial sums of |rho(k)|^d over k <= K, and whether they converge"""
    if model.support is not None:
        lags = min(lags, max(model.support, 1))
    rho = np.abs(model.lags(lags + 1)) ** d
    cumulative = np.cumsum(rho)
    partial_sum = float(cumulative[-1])
    tail_increment = float(cumulative[-1] - cumulative[lags // 2])
    numeric = tail_increment <= summability_rtol * partial_sum
    analytic = model.summable(d)
    return SummabilityReport(
        d=d,
        lags=lags,
        partial_sum=partial_sum,
        tail_increment=tail_increment,
        converged=numeric if analytic is None else analytic,
        analytic=analytic,
    )


def lag_sum(
    model: CorrelationModel, power: float, lags: int, absolute: bool = False
) -> float:
    """sum over |k| <= lags of rho(k)^power (|rho(k)|^power if absolute)"""
    if model.kind == "kronecker":
        return 1.0
    if model.kind == "geometric":
        a = abs(model.parameter) if absolute else model.parameter
        if a < 0.0 and not float(power).is_integer():
            raise ValueError(f"rho(k)^{power} is undefined for negative correlations; use absolute=True")
        q = a**power
        if q == 1.0:
            return float(2 * lags + 1)
        return float(1.0 + 2.0 * q * (1.0 - q**lags) / (1.0 - q))
    if model.support is not None:
        lags = min(lags, model.support)
    return symmetric_lag_sum(model.lags(lags + 1), power, absolute=absolute)


@dataclass(frozen=True, eq=False)
class _Plan:
    """A covariance square root for paths of length n"""

    n: int
    method: str
    sqrt_eigenvalues: Optional[np.ndarray] = None
    cholesky: Optional[np.ndarray] = None

    def sample(self, seed: int, keys: Sequence[Tuple[int, int]]) -> np.ndarray:
        out = np.empty((len(keys), self.n))
        for i, (replication, copy) in enumerate(keys):
            rng = stream(seed, replication, copy)
            if self.cholesky is not None:
                out[i] = self.cholesky @ rng.standard_normal(self.n)
            else:
                size = self.sqrt_eigenvalues.size
                z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
                out[i] = np.fft.fft(self.sqrt_eigenvalues * z).real[: self.n]
        return out


def stream(seed: int, replication: int, copy: int) -> np.random.Generator:
    """The Philox stream of one row, derived from (seed, replication, copy)"""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replication, copy)))
    )


def _circulant_plan(model: CorrelationModel, n: int, clip: bool) -> Tuple[Optional[_Plan], float]:
    base = max(n - 1, 1)
    most_negative = 0.0
    eigenvalues = None
    for factor in (2**i for i in range(int(np.log2(max_padding_factor)) + 1)):
        half = base * factor
        eigenvalues = _embedding_eigenvalues(model, half)
        most_negative = float(eigenvalues.min())
        LOGGER.debug(
            "Circulant embedding of size %d for n = %d: min eigenvalue %.3g",
            eigenvalues.size,
            n,
            most_negative,
        )
        if most_negative >= -clip_tolerance:
            break
    else:
        if not clip:
            return None, most_negative
        warnings.warn(
            f"Clipping negative eigenvalues (down to {most_negative:.3g}) of the circulant "
            f"embedding for n = {n}; the simulated covariance is approximate",
            EmbeddingWarning,
        )
    eigenvalues = np.maximum(eigenvalues, 0.0)
    sqrt_eigenvalues = np.sqrt(eigenvalues / eigenvalues.size)
    sqrt_eigenvalues.setflags(write=False)
    method = "circulant" if most_negative >= -clip_tolerance else "clipped-circulant"
    return _Plan(n=n, method=method, sqrt_eigenvalues=sqrt_eigenvalues), most_negative


def _cholesky_plan(model: CorrelationModel, n: int) -> Optional[_Plan]:
    try:
        factor = np.linalg.cholesky(toeplitz(model.lags(n)))
    except np.linalg.LinAlgError:
        return None
    factor.setflags(write=False)
    return _Plan(n=n, method="cholesky", cholesky=factor)


@lru_cache(maxsize=32)
def _plan(model: CorrelationModel, n: int, clip: bool = False, method: str = "auto") -> _Plan:
    if method == "cholesky":
        plan = _cholesky_plan(model, n)
        if plan is None:
            raise SimulationError(
                f"The Toeplitz covariance of {model.spec} is not positive definite for n = {n}"
            )
        return plan

    if n == 1:
        return _Plan(n=1, method="circulant", sqrt_eigenvalues=np.ones(1))
    plan, most_negative = _circulant_plan(model, n, clip=False)
    if plan is not None:
        return plan
    if method == "auto" and n <= cholesky_max_n:
        LOGGER.info(
            "Circulant embedding of %s is not PSD for n = %d, falling back to Cholesky",
            model.spec,
            n,
        )
        plan = _cholesky_plan(model, n)
        if plan is not None:
            return plan
    if clip:
        plan, _ = _circulant_plan(model, n, clip=True)
        return plan
    raise SimulationError(
        f"No PSD circulant embedding of {model.spec} for n = {n} up to {max_padding_factor}x "
        f"padding: most negative eigenvalue {most_negative:.6g}"
    )


@dataclass(frozen=True, eq=False)
class PathBatch:
    """M independent realizations of (X_1, ..., X_n), with the optional doubled copy X-hat"""

    data: np.ndarray
    seed: Optional[int] = None
    model: Optional[CorrelationModel] = None
    doubled: Optional[np.ndarray] = None
    method: str = "circulant"
    clip: bool = False

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.doubled is not None:
            doubled = np.atleast_2d(np.asarray(self.doubled, dtype=float))
            if doubled.shape != data.shape:
                raise ConstructionError(
                    f"The doubled copy has shape {doubled.shape}, the base paths {data.shape}"
                )
            doubled.setflags(write=False)
            object.__setattr__(self, "doubled", doubled)

    @classmethod
    def from_arrays(
        cls,
        data: np.ndarray,
        doubled: Optional[np.ndarray] = None,
        model: Optional[CorrelationModel] = None,
        seed: Optional[int] = None,
    ) -> "PathBatch":
        return cls(data=data, doubled=doubled, model=model, seed=seed)

    @property
    def n(self) -> int:
        return int(self.data.shape[1])

    @property
    def M(self) -> int:
        return int(self.data.shape[0])

    def hat_copies(self, replication: int, hat_count: int) -> np.ndarray:
        """Fresh X-hat copies for one base replication, shape (hat_count, n)"""
        if self.model is None or self.seed is None:
            raise ConstructionError(
                "Fresh X-hat copies need the correlation model and seed of the batch"
            )
        return simulate_hat_copies(
            self.model,
            self.n,
            self.seed,
            replication,
            hat_count,
            clip=self.clip,
            method="cholesky" if self.method == "cholesky" else "auto",
        )


def _sample_rows(
    plan: _Plan, seed: int, keys: List[Tuple[int, int]], workers: int = 1
) -> np.ndarray:
    chunks = [keys[i : i + _ROW_CHUNK] for i in range(0, len(keys), _ROW_CHUNK)]
    if workers <= 1 or len(chunks) <= 1:
        parts = [plan.sample(seed, chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(lambda chunk: plan.sample(seed, chunk), chunks))
    return np.concatenate(parts, axis=0) if parts else np.empty((0, plan.n))


def simulate(
    model: CorrelationModel,
    n: int,
    M: int,
    seed: int,
    with_double: bool = False,
    clip: bool = False,
    method: str = "auto",
    workers: int = 1,
) -> PathBatch:
    """M rows with covariance Toeplitz(rho(0..n-1)), plus the independent X-hat batch if asked"""
    if n < 1 or M < 1:
        raise ValueError(f"Need n >= 1 and M >= 1, got n = {n}, M = {M}")
    plan = _plan(model, n, clip, method)
    LOGGER.debug("Simulating %d paths of %s, n = %d, by %s", M, model.spec, n, plan.method)
    data = _sample_rows(plan, seed, [(r, base_copy) for r in range(M)], workers)
    doubled = None
    if with_double:
        doubled = _sample_rows(plan, seed, [(r, doubled_copy) for r in range(M)], workers)
    return PathBatch(
        data=data,
        seed=seed,
        model=model,
        doubled=doubled,
        method="cholesky" if plan.method == "cholesky" else "circulant",
        clip=clip,
    )


def simulate_hat_copies(
    model: CorrelationModel,
    n: int,
    seed: int,
    replication: int,
    hat_count: int,
    clip: bool = False,
    method: str = "auto",
) -> np.ndarray:
    """hat_count fresh copies for one base replication, from streams (seed, replication, 2 + j)"""
    plan = _plan(model, n, clip, method)
    keys = [(replication, first_hat_copy + j) for j in range(hat_count)]
    return plan.sample(seed, keys)


def empirical_covariance(batch: PathBatch, max_lag: int) -> np.ndarray:
    """Pooled unbiased autocovariances at lags 0..max_lag, the rows taken as centered"""
    if not 0 <= max_lag < batch.n:
        raise ValueError(f"max_lag must lie in 0..{batch.n - 1}, got {max_lag}")
    x = batch.data
    return np.array(
        [np.sum(x[:, : batch.n - k] * x[:, k:]) / (batch.M * (batch.n - k)) for k in range(max_lag + 1)]
    )


def empirical_cross_correlation(batch: PathBatch) -> float:
    """Pooled lag-0 correlation between X and X-hat"""
    if batch.doubled is None:
        raise ConstructionError("The batch carries no doubled copy")
    x, y = batch.data, batch.doubled
    return float(np.mean(x * y) / np.sqrt(np.mean(x * x) * np.mean(y * y)))


def save_batch(batch: PathBatch, stem: Union[Path, str]) -> Tuple[Path, Path]:
    """Writes <stem>.bin (little-endian float64, X rows then X-hat rows) and a <stem>.json sidecar"""
    stem = Path(stem)
    binary, sidecar = stem.with_suffix(".bin"), stem.with_suffix(".json")
    arrays: Iterable[np.ndarray] = [batch.data] if batch.doubled is None else [batch.data, batch.doubled]
    with open(binary, "wb") as f:
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    meta = {
        "n": batch.n,
        "M": batch.M,
        "seed": batch.seed,
        "model": None if batch.model is None else batch.model.spec,
        "doubled": batch.doubled is not None,
        "method": batch.method,
        "clip": batch.clip,
    }
    sidecar.write_text(json.dumps(meta, indent=2))
    return binary, sidecar


def load_batch(stem: Union[Path, str]) -> PathBatch:
    stem = Path(stem)
    try:
        meta = json.loads(stem.with_suffix(".json").read_text())
        raw = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
        n, M = int(meta["n"]), int(meta["M"])
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise ReportParseError(f"Cannot read the batch {stem}: {e}") from e
    copies = 2 if meta.get("doubled") else 1
    if raw.size != copies * n * M:
        raise ReportParseError(
            f"{stem.with_suffix('.bin')} holds {raw.size} values, expected {copies * n * M}"
        )
    raw = raw.reshape(copies, M, n).astype(float)
    return PathBatch(
        data=raw[0],
        doubled=raw[1] if copies == 2 else None,
        seed=meta.get("seed"),
        model=None if meta.get("model") is None else parse_model_spec(meta["model"]),
        method=meta.get("method", "circulant"),
        clip=bool(meta.get("clip", False)),
    )
