"""
The sharp gradient of Breuer-Major functionals and their carré du champ.

For F_n = n^{-1/2} sum f(X_k), the sharp gradient pairs the chain rule with an
independent copy X-hat of the sequence:

    #F_n = n^{-1/2} sum_k f'(X_k) X-hat_k,    #G_n likewise with g = -L^{-1} f.

Conditionally on X, #F_n is a centered Gaussian with variance

    Gamma[F_n, F_n] = (1/n) sum_{k,l} f'(X_k) f'(X_l) rho(|k - l|),

so the carré du champ has an exact quadratic form ("exact-quadratic" mode), and a
Monte-Carlo form averaging #F_n #G_n over fresh X-hat copies ("monte-carlo" mode).
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft
from scipy.linalg import toeplitz

from bmlab.errors import ConstructionError, ModelError, RankError
from bmlab.functions import mean_and_se, variance_and_se, z_score
from bmlab.gaussproc import CorrelationModel, PathBatch, lag_sum
from bmlab.hermite import (
    HermiteExpansion,
    chaos_energies,
    derivative,
    ou_pseudo_inverse,
    truncate,
)
from reference_data.reference import (
    default_hat_count,
    default_k_lag,
    default_st_grid,
    default_xi_grid,
    direct_quadratic_max_n,
    gamma_modes,
    pass_z,
)

LOGGER = logging.getLogger(__name__)

# rows per FFT block of the quadratic form
_FFT_CHUNK = 256


@dataclass(frozen=True, eq=False)
class SharpPair:
    """Per-replication (#F_n, #G_n), an (M, 2) matrix"""

    values: np.ndarray
    n: int
    hat_count: int = 1

    @property
    def sharp_f(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def sharp_g(self) -> np.ndarray:
        return self.values[:, 1]


@dataclass(frozen=True, eq=False)
class GammaEstimate:
    """Per-replication Gamma[F,F], Gamma[G,G], Gamma[F,G] with standard errors.

    Exact-quadratic estimates carry zero standard errors."""

    ff: np.ndarray
    gg: np.ndarray
    fg: np.ndarray
    ff_se: np.ndarray
    gg_se: np.ndarray
    fg_se: np.ndarray
    mode: str
    hat_count: int

    @property
    def M(self) -> int:
        return int(self.ff.size)

    def combined(self, t: float, s: float) -> np.ndarray:
        """Gamma[tF + sG, tF + sG] by bilinearity"""
        return t * t * self.ff + s * s * self.gg + 2.0 * t * s * self.fg

    def negative_replications(self) -> np.ndarray:
        """Replications whose Gamma[F,F] is negative beyond the noise of the mode"""
        if self.mode == "exact-quadratic":
            return np.flatnonzero(self.ff < -1e-10)
        return np.flatnonzero(self.ff < -3.0 * self.ff_se)

    def write_csv(self, path: Union[Path, str]):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["replication", "gamma_ff", "gamma_gg", "gamma_fg", "se"])
            for r in range(self.M):
                writer.writerow(
                    [r, repr(float(self.ff[r])), repr(float(self.gg[r])), repr(float(self.fg[r])), repr(float(self.fg_se[r]))]
                )


def _derivatives(f: HermiteExpansion) -> Tuple[HermiteExpansion, HermiteExpansion]:
    """f' and g' for g = -L^{-1} f"""
    if f.rank == 0:
        raise RankError(
            f"The sharp construction needs a function of Hermite rank >= 1, got c_0 = {f.coeffs[0]:.6g}"
        )
    return derivative(f), derivative(ou_pseudo_inverse(f))


def _require_doubled(batch: PathBatch):
    if batch.doubled is None:
        raise ConstructionError(
            "The sharp gradient needs the doubled copy X-hat; simulate with with_double=True"
        )


def _pair(fp: HermiteExpansion, gp: HermiteExpansion, batch: PathBatch) -> SharpPair:
    scale = 1.0 / np.sqrt(batch.n)
    sharp_f = np.sum(fp(batch.data) * batch.doubled, axis=1) * scale
    sharp_g = np.sum(gp(batch.data) * batch.doubled, axis=1) * scale
    return SharpPair(values=np.column_stack([sharp_f, sharp_g]), n=batch.n)


def sharp_partial_sums(f: HermiteExpansion, batch: PathBatch) -> SharpPair:
    _require_doubled(batch)
    fp, gp = _derivatives(f)
    return _pair(fp, gp, batch)


def truncated_sharp_pair(f: HermiteExpansion, p: int, batch: PathBatch) -> SharpPair:
    """The pair built from f' and g' truncated at order p - 1, i.e. from f truncated at p"""
    if p < 1:
        raise ValueError(f"The truncation order must be at least 1, got {p}")
    _require_doubled(batch)
    if f.rank == 0:
        raise RankError("The sharp construction needs a function of Hermite rank >= 1")
    f_p = truncate(f, p)
    return _pair(derivative(f_p), derivative(ou_pseudo_inverse(f_p)), batch)


def _kernel(batch: PathBatch) -> np.ndarray:
    if batch.model is None:
        raise ModelError("The exact quadratic form needs the correlation model of the batch")
    return batch.model.lags(batch.n)


def _toeplitz_matvec(rho: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rows of b multiplied by Toeplitz(rho), through a circulant of length >= 2n - 1"""
    n = rho.size
    size = fft.next_fast_len(2 * n - 1, real=True)
    column = np.zeros(size)
    column[:n] = rho
    if n > 1:
        column[size - n + 1 :] = rho[:0:-1]
    spectrum = fft.rfft(column)
    out = np.empty_like(b)
    for i in range(0, b.shape[0], _FFT_CHUNK):
        block = fft.rfft(b[i : i + _FFT_CHUNK], n=size, axis=1)
        out[i : i + _FFT_CHUNK] = fft.irfft(block * spectrum, n=size, axis=1)[:, :n]
    return out


def _quadratic_form(a: np.ndarray, b: np.ndarray, rho: np.ndarray, method: str = "fft") -> np.ndarray:
    """(1/n) a_r^T Toeplitz(rho) b_r for every row r"""
    n = rho.size
    if method == "direct":
        if n > direct_quadratic_max_n:
            raise ValueError(
                f"The direct quadratic form is limited to n <= {direct_quadratic_max_n}, got {n}"
            )
        return np.einsum("ij,ij->i", a @ toeplitz(rho), b) / n
    if method != "fft":
        raise ValueError(f"Unknown quadratic form method {method!r}")
    return np.einsum("ij,ij->i", a, _toeplitz_matvec(rho, b)) / n


def quadratic_gamma(
    f: HermiteExpansion, batch: PathBatch, t: float = 1.0, s: float = 0.0, method: str = "fft"
) -> np.ndarray:
    """Exact Gamma[tF_n + sG_n, tF_n + sG_n] per replication"""
    fp, gp = _derivatives(f)
    a = t * fp(batch.data) + s * gp(batch.data)
    return _quadratic_form(a, a, _kernel(batch), method)


def _for_each_base(
    batch: PathBatch,
    hat_count: int,
    task: Callable[[int, np.ndarray], np.ndarray],
    workers: int = 1,
) -> List[np.ndarray]:
    """task(r, hats) for every base replication r, in replication order"""

    def run(r: int) -> np.ndarray:
        return task(r, batch.hat_copies(r, hat_count))

    if workers <= 1:
        return [run(r) for r in range(batch.M)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run, range(batch.M)))


def gamma_estimate(
    f: HermiteExpansion,
    batch: PathBatch,
    hat_count: int = default_hat_count,
    mode: str = "exact-quadratic",
    method: str = "fft",
    workers: int = 1,
) -> GammaEstimate:
    if mode not in gamma_modes:
        raise ValueError(f"Unknown Gamma mode {mode!r}; expected one of {', '.join(gamma_modes)}")
    fp, gp = _derivatives(f)
    a, b = fp(batch.data), gp(batch.data)

    if mode == "exact-quadratic":
        rho = _kernel(batch)
        ff = _quadratic_form(a, a, rho, method)
        gg = _quadratic_form(b, b, rho, method)
        fg = _quadratic_form(a, b, rho, method)
        zeros = np.zeros(batch.M)
        return GammaEstimate(ff, gg, fg, zeros, zeros, zeros, mode=mode, hat_count=0)

    if hat_count < 2:
        raise ConstructionError(f"Monte-Carlo Gamma needs at least 2 hat copies, got {hat_count}")
    scale = 1.0 / np.sqrt(batch.n)

    def inner(r: int, hats: np.ndarray) -> np.ndarray:
        sf, sg = hats @ a[r] * scale, hats @ b[r] * scale
        stats = []
        for products in (sf * sf, sg * sg, sf * sg):
            stats.extend(mean_and_se(products))
        return np.array(stats)

    LOGGER.debug("Monte-Carlo Gamma over %d bases x %d hat copies", batch.M, hat_count)
    table = np.array(_for_each_base(batch, hat_count, inner, workers))
    return GammaEstimate(
        ff=table[:, 0],
        ff_se=table[:, 1],
        gg=table[:, 2],
        gg_se=table[:, 3],
        fg=table[:, 4],
        fg_se=table[:, 5],
        mode=mode,
        hat_count=hat_count,
    )


def bilinearity_residual(
    f: HermiteExpansion,
    batch: PathBatch,
    gamma: Optional[GammaEstimate] = None,
    st_grid: Sequence[Tuple[float, float]] = default_st_grid,
) -> float:
    """Largest per-replication gap between Gamma[tF+sG] and its three-term expansion"""
    gamma = gamma or gamma_estimate(f, batch)
    worst = 0.0
    for s, t in st_grid:
        direct = quadratic_gamma(f, batch, t=t, s=s)
        worst = max(worst, float(np.max(np.abs(direct - gamma.combined(t, s)))))
    return worst


def key_identity_grid(
    f: HermiteExpansion,
    batch: PathBatch,
    hat_count: int = default_hat_count,
    st_grid: Sequence[Tuple[float, float]] = default_st_grid,
    xi_grid: Sequence[float] = default_xi_grid,
    workers: int = 1,
) -> List[Dict]:
    """E[exp(-xi^2/2 Gamma[Phi, Phi])] against E[cos(xi #Phi)], Phi = tF_n + sG_n.

    Both sides are compared on the same bases: the residual of base r is
    exp(-xi^2/2 Gamma_r) minus the average of cos(xi #Phi) over its hat copies,
    and the standard error is that of the pooled residual."""
    xi = np.asarray(xi_grid, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("The xi grid must be finite")
    fp, gp = _derivatives(f)
    a, b = fp(batch.data), gp(batch.data)
    rho = _kernel(batch)
    scale = 1.0 / np.sqrt(batch.n)
    directions = [(t * a + s * b) for s, t in st_grid]
    gammas = [_quadratic_form(d, d, rho) for d in directions]

    def inner(r: int, hats: np.ndarray) -> np.ndarray:
        # (pairs, xi, [cos, sin])
        out = np.empty((len(directions), xi.size, 2))
        for i, d in enumerate(directions):
            phase = np.outer(xi, hats @ d[r] * scale)
            out[i, :, 0] = np.cos(phase).mean(axis=1)
            out[i, :, 1] = np.sin(phase).mean(axis=1)
        return out

    per_base = np.array(_for_each_base(batch, hat_count, inner, workers))
    rows = []
    for i, (s, t) in enumerate(st_grid):
        laplace = np.exp(-0.5 * np.outer(gammas[i], xi**2))
        fourier = per_base[:, i, :, 0]
        for j, x in enumerate(xi):
            residual = laplace[:, j] - fourier[:, j]
            mean_residual, se = mean_and_se(residual)
            z = z_score(mean_residual, se)
            rows.append(
                {
                    "s": float(s),
                    "t": float(t),
                    "xi": float(x),
                    "lhs": float(laplace[:, j].mean()),
                    "rhs": float(fourier[:, j].mean()),
                    "rhs_imag": float(per_base[:, i, j, 1].mean()),
                    "se": se,
                    "z": z,
                    "pass": bool(abs(mean_residual) <= pass_z * se + 1e-12),
                }
            )
    LOGGER.debug(
        "Key identity: %d of %d grid points pass", sum(r["pass"] for r in rows), len(rows)
    )
    return rows


def key_identity_check(
    f: HermiteExpansion,
    s: float,
    t: float,
    xi_grid: Sequence[float],
    batch: PathBatch,
    hat_count: int = default_hat_count,
    workers: int = 1,
) -> List[Dict]:
    return key_identity_grid(f, batch, hat_count, [(s, t)], xi_grid, workers)


@dataclass(frozen=True)
class LimitEstimate:
    lambda_hat: float
    lambda_se: float
    mu_hat: float
    mu_se: float
    nu_hat: float
    nu_se: float


def estimate_limits(
    f: HermiteExpansion, batch: PathBatch, gamma: Optional[GammaEstimate] = None
) -> LimitEstimate:
    """Pooled means of the exact Gamma[F,F], Gamma[G,G] and Gamma[F,G]"""
    gamma = gamma or gamma_estimate(f, batch)
    lam, lam_se = mean_and_se(gamma.ff)
    mu, mu_se = mean_and_se(gamma.gg)
    nu, nu_se = mean_and_se(gamma.fg)
    return LimitEstimate(lam, lam_se, mu, mu_se, nu, nu_se)


@dataclass(frozen=True)
class AnalyticLimits:
    lambda_: float
    mu: float
    nu: float


def analytic_limits(
    f: HermiteExpansion, model: CorrelationModel, k_lag: int = default_k_lag
) -> AnalyticLimits:
    """lambda = sum m m! c_m^2 S_m, mu = sum (m!/m) c_m^2 S_m, nu = sum m! c_m^2 S_m,
    with S_m = sum_{|k| <= k_lag} rho(k)^m"""
    energies = chaos_energies(f)
    lam = mu = nu = 0.0
    for m in np.flatnonzero(energies[1:] > 0.0) + 1:
        s_m = lag_sum(model, int(m), k_lag)
        lam += m * energies[m] * s_m
        mu += energies[m] / m * s_m
        nu += energies[m] * s_m
    return AnalyticLimits(lambda_=float(lam), mu=float(mu), nu=float(nu))


def chaos_tv_diagnostic(gamma: GammaEstimate) -> float:
    """sqrt(var Gamma[F,F]), the quantity chaos total-variation bounds are driven by"""
    var, _ = variance_and_se(gamma.ff)
    return float(np.sqrt(var))


def concentration(gamma: GammaEstimate) -> Tuple[float, float]:
    """Pooled variance of Gamma[F,G] and its standard error"""
    return variance_and_se(gamma.fg)


@dataclass(frozen=True)
class TruncationGap:
    n: int
    p: int
    second_moment: float
    se: float
    psi_gap: float
    bound_constant: Optional[float]

    @property
    def ratio(self) -> float:
        return self.second_moment / self.psi_gap if self.psi_gap > 0.0 else 0.0

    @property
    def ratio_se(self) -> float:
        return self.se / self.psi_gap if self.psi_gap > 0.0 else 0.0


def truncation_gap(f: HermiteExpansion, p: int, batch: PathBatch) -> TruncationGap:
    """E[(#F_n - #F_n^(p))^2] against ||(Psi - Psi_p)_1||^2 = sum_{m > p} m m! c_m^2.

    Their ratio is bounded by sum_{k in Z} |rho(k)|^(p+1), which depends only on
    the covariance."""
    full = sharp_partial_sums(f, batch)
    cut = truncated_sharp_pair(f, p, batch)
    second_moment, se = mean_and_se((full.sharp_f - cut.sharp_f) ** 2)
    energies = chaos_energies(f)
    orders = np.arange(energies.size)
    psi_gap = float(np.sum((orders * energies)[p + 1 :]))
    bound = None
    if batch.model is not None:
        bound = lag_sum(batch.model, p + 1, default_k_lag, absolute=True)
    return TruncationGap(
        n=batch.n,
        p=p,
        second_moment=second_moment,
        se=se,
        psi_gap=psi_gap,
        bound_constant=bound,
    )
