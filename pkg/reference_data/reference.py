import math

# Hermite expansions
# probabilists' Hermite orders above this are refused by hermite_eval
max_hermite_order = 512
# default truncation order of an expansion
default_max_order = 30
# Gauss-Hermite nodes of the default quadrature rule
default_quadrature_nodes = 200
# rank tolerance, relative to the L2(gamma) norm of the function
default_rank_tol = 1e-9
# Parseval excess over the direct integral of f^2 that triggers an integrability warning
integrability_excess = 0.10
# half-line length of the split Gauss-Legendre rule; the gamma mass beyond it is below 1e-30
split_rule_half_width = 12.0

# built-in functions accepted in function specs, used by parser._parse_function_spec
builtin_functions = ["hermite", "coeffs", "poly", "abs", "abs-centered"]
mean_abs_normal = math.sqrt(2.0 / math.pi)

# Stationary Gaussian simulation
# built-in correlation families accepted in model specs
builtin_models = ["kronecker", "geom", "poly", "fgn", "table", "table-prefix"]
# the circulant embedding is doubled until PSD, up to this factor of the minimal size
max_padding_factor = 8
# eigenvalues above -clip_tolerance are treated as zero
clip_tolerance = 1e-10
# dense Cholesky fallback is only attempted up to this path length
cholesky_max_n = 2048
# stream ids: (seed, replication, copy); copies >= first_hat_copy are fresh sharp copies
base_copy = 0
doubled_copy = 1
first_hat_copy = 2
# exactly Gaussian draws for the TV estimator floor, clear of every path copy
tv_floor_copy = 2**32 - 1
# lags used by the numerical summability diagnostic
default_summability_lags = 100_000
# relative increment of the last half of the lag sum under which it is called converged
summability_rtol = 1e-3

# Sharp gradient and carre du champ
default_hat_count = 64
default_xi_grid = [0.25, 0.5, 1.0, 2.0]
# (s, t) pairs: t F_n + s G_n
default_st_grid = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)]
# the O(n^2) quadratic form is kept as an oracle up to this n
direct_quadratic_max_n = 512
gamma_modes = ["exact-quadratic", "monte-carlo"]
# z-score under which a Monte-Carlo residual passes
pass_z = 4.0

# Breuer-Major partial sums and distances
default_k_lag = 100_000
kde_grid_points = 4096
kde_span_sd = 8.0
min_kde_sample = 500
stein_betas = [0.5, 1.0, 2.0]
variance_rtol = 0.10
# a TV estimate this many floors high is indistinguishable from the floor
tv_floor_band = 1.5
# a Kolmogorov statistic with a larger p-value is consistent with the reference
ks_pvalue_level = 0.01
# nu_hat must lie this close to sigma^2 at the largest n when f is a single chaos
nu_rtol = 0.05

# Experiments
known_checks = ["variance", "tv", "identity", "gamma", "stein", "rate", "truncation"]
default_truncation_p = 3
default_workers = 1
report_files = {"csv": "report.csv", "json": "report.json", "rdf": "report.ttl"}
exit_codes = {"pass": 0, "check_failure": 1, "usage": 2, "numerical": 3}
