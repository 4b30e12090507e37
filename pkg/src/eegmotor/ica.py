"""FastICA decomposition and statistical artifact rejection.

The channel signal is modeled as x = A s with statistically independent,
non-Gaussian sources s; the unmixing y = W x is estimated on whitened data by
the fixed-point iteration with the log-cosh contrast (g = tanh) and symmetric
decorrelation. Contaminated components are then flagged from per-component
statistics; the default rule excludes components whose kurtosis z-score
(standardized across the decomposition) exceeds 0.23. Cleaning reconstructs
the channels with the flagged source rows zeroed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .features import moment_stats
from .validation import check_fitted

DEFAULT_N_COMPONENTS = 30

# §5.1-style defaults: only the kurtosis z-score rule is active.
DEFAULT_ZSCORE_LIMIT = 0.23
DEFAULT_ABS_KURTOSIS_LIMIT = 8.83
DEFAULT_CENTRAL_MOMENT_LIMIT = 3.05
DEFAULT_PEARSON_LIMIT = 0.5


class IcaConvergenceWarning(UserWarning):
    """FastICA hit max_iter before the unmixing stabilized."""


@dataclass(frozen=True)
class Whitening:
    """Centering + PCA whitening learned from one channel-major signal."""

    channel_means: np.ndarray       # (n_channels,)
    matrix: np.ndarray              # (n_components, n_channels)
    eigenvalues: np.ndarray         # descending, length n_components

    @property
    def n_components(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_channels(self) -> int:
        return self.matrix.shape[1]

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.matrix @ (np.asarray(X, dtype=np.float64)
                              - self.channel_means[:, None])

    def inverse_matrix(self) -> np.ndarray:
        """Pseudo-inverse mapping whitened coordinates back to channels."""
        return np.linalg.pinv(self.matrix)


def center_and_whiten(X: np.ndarray, n_components: int,
                      ) -> tuple[np.ndarray, Whitening]:
    """Zero-mean, identity-covariance projection onto the top eigenvectors.

    X is channel-major (n_channels, n_samples) with n_samples > n_channels.
    Components are ordered by descending eigenvalue. Raises when the sample
    covariance has rank below n_components.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D channel-major, got shape {X.shape}")
    n_channels, n_samples = X.shape
    if n_samples <= n_channels:
        raise ValueError(
            f"need more samples than channels, got {n_samples} <= {n_channels}"
        )
    if not 1 <= n_components <= n_channels:
        raise ValueError(
            f"n_components must be in [1, {n_channels}], got {n_components}"
        )
    means = X.mean(axis=1)
    cov = np.cov(X)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    rank_floor = eigvals[0] * n_channels * np.finfo(np.float64).eps
    rank = int(np.sum(eigvals > rank_floor))
    if rank < n_components:
        raise ValueError(
            f"covariance rank {rank} < n_components {n_components}"
        )
    top = eigvals[:n_components]
    matrix = eigvecs[:, :n_components].T / np.sqrt(top)[:, None]
    whitening = Whitening(
        channel_means=means, matrix=matrix, eigenvalues=top.copy()
    )
    return whitening.apply(X), whitening


@dataclass(frozen=True)
class FastIcaConfig:
    max_iter: int = 200
    tol: float = 1e-4
    contrast: str = "logcosh"
    seed: int = 0

    def __post_init__(self):
        if self.contrast != "logcosh":
            raise ValueError(f"unsupported contrast {self.contrast!r}")
        if self.max_iter < 1 or self.tol <= 0:
            raise ValueError("max_iter must be >= 1 and tol > 0")


@dataclass
class IcaDecomposition:
    """Unmixing W (orthonormal rows, whitened space) and fit sources S."""

    W: np.ndarray                   # (n_components, n_components)
    S: np.ndarray                   # (n_components, n_samples)
    converged: bool
    n_iter: int
    A: np.ndarray | None = None     # channel-space mixing, set by fit_ica

    @property
    def n_components(self) -> int:
        return self.W.shape[0]


def _symmetric_decorrelation(W: np.ndarray) -> np.ndarray:
    """W <- (W W^T)^(-1/2) W, making row vectors exactly orthonormal."""
    s, u = np.linalg.eigh(W @ W.T)
    if s[0] <= 0:
        raise np.linalg.LinAlgError("degenerate unmixing iterate")
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def fastica(Z: np.ndarray, config: FastIcaConfig = FastIcaConfig(),
            ) -> IcaDecomposition:
    """Fixed-point FastICA on whitened data Z (n_components, n_samples).

    Each sweep applies g(u) = tanh(u) and symmetric decorrelation; the loop
    stops when max over rows of |1 - |<w_new, w_old>|| drops below tol.
    Deterministic for a fixed seed. Non-convergence returns the last iterate
    with converged=False and emits IcaConvergenceWarning.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n, t = Z.shape
    sample_cov = (Z @ Z.T) / (t - 1)
    if np.max(np.abs(sample_cov - np.eye(n))) > 1e-5:
        raise ValueError("input is not whitened (covariance far from identity)")

    rng = np.random.default_rng(config.seed)
    W = _symmetric_decorrelation(rng.standard_normal((n, n)))
    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        S = W @ Z
        G = np.tanh(S)
        g_prime_mean = (1.0 - G * G).mean(axis=1)
        W_new = _symmetric_decorrelation(
            (G @ Z.T) / t - g_prime_mean[:, None] * W
        )
        shift = np.max(np.abs(1.0 - np.abs(np.sum(W_new * W, axis=1))))
        W = W_new
        if shift < config.tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"FastICA did not converge in {config.max_iter} iterations",
            IcaConvergenceWarning,
            stacklevel=2,
        )
    return IcaDecomposition(W=W, S=W @ Z, converged=converged, n_iter=n_iter)


def fit_ica(X: np.ndarray, n_components: int = DEFAULT_N_COMPONENTS,
            config: FastIcaConfig = FastIcaConfig(),
            ) -> tuple[Whitening, IcaDecomposition]:
    """Whiten a channel-major signal and fit FastICA on it."""
    Z, whitening = center_and_whiten(X, n_components)
    decomposition = fastica(Z, config)
    decomposition.A = whitening.inverse_matrix() @ decomposition.W.T
    return whitening, decomposition


@dataclass
class ComponentStats:
    """Per-component rejection statistics; degenerate rows hold NaN."""

    variance: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    kurtosis_zscore: np.ndarray
    entropy: np.ndarray
    max_abs_pearson: np.ndarray
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(len(self.variance), dtype=bool)

    @property
    def n_components(self) -> int:
        return len(self.variance)

    @classmethod
    def from_moments(cls, variance, skewness, kurtosis, kurtosis_zscore=None,
                     entropy=None, max_abs_pearson=None) -> "ComponentStats":
        """Build stats from externally tabulated moments.

        When no z-score column is supplied it is standardized from the
        kurtosis column.
        """
        variance = np.asarray(variance, dtype=np.float64)
        kurtosis = np.asarray(kurtosis, dtype=np.float64)
        n = len(variance)
        if kurtosis_zscore is None:
            kurtosis_zscore = _standardize(kurtosis, np.ones(n, dtype=bool))
        return cls(
            variance=variance,
            skewness=np.asarray(skewness, dtype=np.float64),
            kurtosis=kurtosis,
            kurtosis_zscore=np.asarray(kurtosis_zscore, dtype=np.float64),
            entropy=(np.full(n, np.nan) if entropy is None
                     else np.asarray(entropy, dtype=np.float64)),
            max_abs_pearson=(np.zeros(n) if max_abs_pearson is None
                             else np.asarray(max_abs_pearson, dtype=np.float64)),
        )


def _standardize(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Z-score across the valid entries; NaN elsewhere."""
    out = np.full(values.shape, np.nan)
    sample = values[valid]
    if sample.size == 0:
        return out
    std = sample.std()
    if std == 0:
        out[valid] = 0.0
    else:
        out[valid] = (sample - sample.mean()) / std
    return out


def _histogram_entropy(x: np.ndarray, bins: int = 50) -> float:
    """Shannon entropy (nats) of the amplitude histogram."""
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / x.size
    return float(-np.sum(p * np.log(p)))


def component_stats(S: np.ndarray) -> ComponentStats:
    """Rejection statistics for each source row of a decomposition.

    Kurtosis follows the excess convention of the feature formulas; its
    z-score is standardized across this decomposition's non-degenerate
    components (zero mean, unit standard deviation by construction).
    Constant rows are marked degenerate with undefined skewness/kurtosis.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ValueError(f"S must be (n_components, n_samples >= 2), got {S.shape}")
    n = S.shape[0]
    variance = np.empty(n)
    skewness = np.full(n, np.nan)
    kurtosis = np.full(n, np.nan)
    entropy = np.empty(n)
    degenerate = np.zeros(n, dtype=bool)
    for i in range(n):
        _, var, skew, kurt, is_degenerate = moment_stats(S[i])
        variance[i] = var
        entropy[i] = _histogram_entropy(S[i])
        if is_degenerate:
            degenerate[i] = True
        else:
            skewness[i] = skew
            kurtosis[i] = kurt

    valid = ~degenerate
    kurtosis_zscore = _standardize(kurtosis, valid)

    max_abs_pearson = np.full(n, np.nan)
    if valid.sum() == 1:
        max_abs_pearson[valid] = 0.0
    elif valid.sum() > 1:
        corr = np.abs(np.corrcoef(S[valid]))
        np.fill_diagonal(corr, 0.0)
        max_abs_pearson[valid] = corr.max(axis=1)

    return ComponentStats(
        variance=variance,
        skewness=skewness,
        kurtosis=kurtosis,
        kurtosis_zscore=kurtosis_zscore,
        entropy=entropy,
        max_abs_pearson=max_abs_pearson,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class ArtifactThresholds:
    """Rejection rule limits; only the kurtosis z-score rule is on by default."""

    zscore_limit: float = DEFAULT_ZSCORE_LIMIT
    abs_kurtosis_limit: float = DEFAULT_ABS_KURTOSIS_LIMIT
    central_moment_limit: float = DEFAULT_CENTRAL_MOMENT_LIMIT
    pearson_limit: float = DEFAULT_PEARSON_LIMIT
    use_zscore: bool = True
    use_abs_kurtosis: bool = False
    use_central_moments: bool = False
    use_pearson: bool = False

    def __post_init__(self):
        for name in ("zscore_limit", "abs_kurtosis_limit",
                     "central_moment_limit", "pearson_limit"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def detect_artifact_components(stats: ComponentStats,
                               thresholds: ArtifactThresholds = ArtifactThresholds(),
                               ) -> list[int]:
    """Indices of components to exclude under the enabled threshold rules.

    Degenerate components are always excluded (with a warning). NaN
    statistics never satisfy a rule, so missing columns stay inert.
    """
    flagged = np.zeros(stats.n_components, dtype=bool)
    if np.any(stats.degenerate):
        warnings.warn(
            f"excluding {int(np.sum(stats.degenerate))} degenerate "
            "(zero-variance) component(s)",
            stacklevel=2,
        )
        flagged |= stats.degenerate

    with np.errstate(invalid="ignore"):
        if thresholds.use_zscore:
            flagged |= stats.kurtosis_zscore > thresholds.zscore_limit
        if thresholds.use_abs_kurtosis:
            flagged |= stats.kurtosis > thresholds.abs_kurtosis_limit
        if thresholds.use_central_moments:
            valid = ~stats.degenerate
            z_var = _standardize(stats.variance, valid)
            z_skew = _standardize(stats.skewness, valid)
            flagged |= np.abs(z_var) > thresholds.central_moment_limit
            flagged |= np.abs(z_skew) > thresholds.central_moment_limit
        if thresholds.use_pearson:
            flagged |= stats.max_abs_pearson >= thresholds.pearson_limit

    return [int(i) for i in np.flatnonzero(flagged)]


def remove_components(X: np.ndarray, whitening: Whitening,
                      decomposition: IcaDecomposition,
                      exclude) -> np.ndarray:
    """Reconstruct channels with the excluded source rows zeroed.

    With an empty exclusion set this equals the projection of X onto the
    whitening's principal subspace (the PCA-truncated signal).
    """
    X = np.asarray(X, dtype=np.float64)
    exclude = sorted(int(i) for i in exclude)
    n = decomposition.n_components
    for i in exclude:
        if not 0 <= i < n:
            raise IndexError(f"component index {i} out of range [0, {n})")
    sources = decomposition.W @ whitening.apply(X)
    if exclude:
        sources[exclude, :] = 0.0
    back = decomposition.W.T @ sources
    return whitening.channel_means[:, None] + whitening.inverse_matrix() @ back


class IcaArtifactRemover(TransformerMixin, BaseEstimator):
    """Estimator facade: fit learns the decomposition, transform cleans.

    Follows the time-major array convention (n_samples, n_channels), so it
    drops into sklearn pipelines; the channel-major functions above do the
    work. fit() is typically given a 1 Hz high-passed stream while
    transform() cleans the band-passed stream with the learned unmixing.
    """

    def __init__(self, n_components: int = DEFAULT_N_COMPONENTS,
                 max_iter: int = 200, tol: float = 1e-4, random_state: int = 0,
                 zscore_limit: float = DEFAULT_ZSCORE_LIMIT,
                 abs_kurtosis_limit: float = DEFAULT_ABS_KURTOSIS_LIMIT,
                 central_moment_limit: float = DEFAULT_CENTRAL_MOMENT_LIMIT,
                 pearson_limit: float = DEFAULT_PEARSON_LIMIT,
                 use_zscore: bool = True, use_abs_kurtosis: bool = False,
                 use_central_moments: bool = False, use_pearson: bool = False):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.zscore_limit = zscore_limit
        self.abs_kurtosis_limit = abs_kurtosis_limit
        self.central_moment_limit = central_moment_limit
        self.pearson_limit = pearson_limit
        self.use_zscore = use_zscore
        self.use_abs_kurtosis = use_abs_kurtosis
        self.use_central_moments = use_central_moments
        self.use_pearson = use_pearson
        self.whitening_ = None
        self.decomposition_ = None
        self.stats_ = None
        self.exclude_ = None

    def thresholds(self) -> ArtifactThresholds:
        return ArtifactThresholds(
            zscore_limit=self.zscore_limit,
            abs_kurtosis_limit=self.abs_kurtosis_limit,
            central_moment_limit=self.central_moment_limit,
            pearson_limit=self.pearson_limit,
            use_zscore=self.use_zscore,
            use_abs_kurtosis=self.use_abs_kurtosis,
            use_central_moments=self.use_central_moments,
            use_pearson=self.use_pearson,
        )

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        config = FastIcaConfig(max_iter=self.max_iter, tol=self.tol,
                               seed=self.random_state)
        self.whitening_, self.decomposition_ = fit_ica(
            X.T, n_components=self.n_components, config=config
        )
        self.stats_ = component_stats(self.decomposition_.S)
        self.exclude_ = detect_artifact_components(self.stats_, self.thresholds())
        return self

    def transform(self, X):
        check_fitted(self, "decomposition_")
        X = np.asarray(X, dtype=np.float64)
        return remove_components(
            X.T, self.whitening_, self.decomposition_, self.exclude_
        ).T

    def sources(self, X) -> np.ndarray:
        """Source time courses of X under the fitted unmixing (time-major)."""
        check_fitted(self, "decomposition_")
        X = np.asarray(X, dtype=np.float64)
        return (self.decomposition_.W @ self.whitening_.apply(X.T)).T
