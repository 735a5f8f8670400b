"""The disaggregation pipeline: per-day clustering on fine-scale features,
per-cluster kernel regression on in-situ observations, soft-membership
blending, hyperparameter cross-validation, and the season driver.

Training uses hard cluster assignment (argmax membership) while
prediction blends all cluster models with the soft membership row; the
asymmetry is part of the method.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kridge, metrics, pri
from .config import MetricsSection, RunConfig
from .errors import DataError, DomainError
from .grid import Grid, VarTag, replicate
from .itclust import ClusterParams, FeatureMatrix, MembershipMatrix, cluster
from .synth import BARE, CORN, COTTON, CLASS_NAMES, Scene, SeasonDataset, stream_seed

logger = logging.getLogger(__name__)

LC_CLASSES = (BARE, CORN, COTTON)


@dataclass
class DayFeatures:
    """Per-pixel design matrices for one scene."""

    clustering: FeatureMatrix    # standardized features + one-hot LC + scaled x,y
    regression: np.ndarray       # clustering columns + replicated coarse SM


@dataclass
class SrrmParams:
    K: int = 4
    psi: float = 1e-3
    mu: float = 1e-3
    sigma_scale: float = 1.0
    iterations: int = 30
    sample_fraction: float = 0.33
    alpha: float = 0.05
    gamma: float = 1e-3
    train_frac: float = 0.33
    seed: int = 0

    def cluster_params(self, seed: int) -> ClusterParams:
        return ClusterParams(
            K=self.K,
            psi=self.psi,
            iterations=self.iterations,
            sample_fraction=self.sample_fraction,
            alpha=self.alpha,
            gamma=self.gamma,
            seed=seed,
        )


@dataclass
class CvGrids:
    k_values: tuple = (2, 3, 4, 5, 6, 7, 8)
    psi_values: tuple = (1e-3, 1e-2, 1e-1)
    mu_values: tuple = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)


def _zscore(col: np.ndarray) -> np.ndarray:
    sd = col.std()
    return (col - col.mean()) / (sd if sd > 0 else 1.0)


def build_features(scene: Scene) -> DayFeatures:
    """Assemble per-pixel features.

    Clustering columns: z-scored LST, 3-day PPT, LAI; one-hot LC over the
    declared class set; x and y min-max scaled to [0, 1].  Regression
    appends the coarse SM value replicated onto the fine lattice.
    """
    for name in ("lst", "ppt", "lai", "lc", "coarse_sm", "true_sm"):
        if getattr(scene, name, None) is None:
            raise DataError(f"scene is missing the {name} grid")
    rows, cols = scene.true_sm.values.shape
    lst = _zscore(scene.lst.values.ravel())
    ppt = _zscore(scene.ppt.values.ravel())
    lai = _zscore(scene.lai.values.ravel())
    lc = scene.lc.values.ravel()
    onehot = np.stack([(lc == c).astype(float) for c in LC_CLASSES], axis=1)
    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    x = (jj.ravel() / max(cols - 1, 1)).astype(float)
    y = (ii.ravel() / max(rows - 1, 1)).astype(float)
    clust = np.column_stack([lst, ppt, lai, onehot, x, y])
    coarse_rep = replicate(scene.coarse_sm, scene.coarse_factor).values.ravel()
    reg = np.column_stack([clust, coarse_rep])
    return DayFeatures(clustering=FeatureMatrix(clust), regression=reg)


def _training_rows(scene: Scene, train_frac: float) -> np.ndarray:
    """Deterministic, spatially spread subset of the in-situ pool."""
    if not 0.0 < train_frac <= 1.0:
        raise DomainError("train_frac must be in (0, 1]")
    target = max(1, int(round(train_frac * scene.n_fine)))
    pool = scene.insitu_idx
    if target >= pool.size:
        return np.arange(pool.size)
    stride = pool.size / target
    return np.unique((np.arange(target) * stride).astype(int))


def _membership_centroids(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    w = M.sum(axis=0)
    w[w == 0.0] = 1.0
    return (M.T @ X) / w[:, None]


def fit_cluster_models(X: np.ndarray, y: np.ndarray, labels: np.ndarray,
                       centroids: np.ndarray, K: int, mu: float,
                       sigma_scale: float = 1.0) -> list:
    """One kernel model per cluster from hard-assigned training rows.

    A cluster with no training rows adopts the model of the nearest
    cluster by membership centroid (with a warning).
    """
    models: list = [None] * K
    empty = []
    for k in range(K):
        rows = np.flatnonzero(labels == k)
        if rows.size == 0:
            empty.append(k)
            continue
        models[k] = kridge.fit(X[rows], y[rows], mu=mu, sigma_scale=sigma_scale)
    nonempty = [k for k in range(K) if models[k] is not None]
    if not nonempty:
        raise DomainError("no cluster received any training pixel")
    for k in empty:
        warnings.warn(f"cluster {k} has no training pixels; merging into nearest",
                      stacklevel=2)
        dists = [np.linalg.norm(centroids[k] - centroids[j]) for j in nonempty]
        models[k] = models[nonempty[int(np.argmin(dists))]]
    return models


def train_cluster_models(scene: Scene, M: MembershipMatrix, train_frac: float = 0.33,
                         mu: float = 1e-3, sigma_scale: float = 1.0) -> list:
    """Fit per-cluster regressors on the scene's in-situ observations.

    Training pixels are hard-assigned by their maximum membership.
    train_frac caps the used fraction of fine pixels; the in-situ pool
    is subsampled evenly when it is larger than the cap.
    """
    feats = build_features(scene)
    rows = _training_rows(scene, train_frac)
    idx = scene.insitu_idx[rows]
    X = feats.regression[idx]
    y = scene.insitu_sm[rows]
    labels = M.m[idx].argmax(axis=1)
    centroids = _membership_centroids(M.m, feats.regression)
    return fit_cluster_models(X, y, labels, centroids, M.K, mu, sigma_scale)


def blend_predictions(M: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Soft-membership combination: per pixel, m . (f_1(x), ..., f_K(x))."""
    return np.einsum("ik,ik->i", M, preds)


def disaggregate_day(scene: Scene, params: SrrmParams) -> Grid:
    """Full per-day chain: cluster, fit per-cluster models, blend, clamp."""
    feats = build_features(scene)
    M = cluster(feats.clustering, params.cluster_params(params.seed))
    rows = _training_rows(scene, params.train_frac)
    idx = scene.insitu_idx[rows]
    labels = M.m[idx].argmax(axis=1)
    centroids = _membership_centroids(M.m, feats.regression)
    models = fit_cluster_models(
        feats.regression[idx], scene.insitu_sm[rows], labels, centroids, params.K,
        params.mu, params.sigma_scale,
    )
    preds = np.column_stack([kridge.predict_batch(mod, feats.regression) for mod in models])
    sm = np.clip(blend_predictions(M.m, preds), 0.0, 1.0)
    return Grid(sm.reshape(scene.true_sm.values.shape), scene.true_sm.cell_size, VarTag.SM)


def cross_validate(scene: Scene, grids: CvGrids, base: SrrmParams,
                   folds: int = 10) -> SrrmParams:
    """Pick (K, psi, mu) by 10-fold mean absolute error on the in-situ pool.

    Clustering for candidate scoring runs on the training-pool rows only
    (the full-field clustering happens once the winner is chosen).  Ties
    prefer the smaller K, then the larger mu.
    """
    if not (grids.k_values and grids.psi_values and grids.mu_values):
        raise DomainError("cross-validation grids must be non-empty")
    feats = build_features(scene)
    rows = _training_rows(scene, base.train_frac)
    idx = scene.insitu_idx[rows]
    Xc = feats.clustering.values[idx]
    Xr = feats.regression[idx]
    y = scene.insitu_sm[rows]
    n = idx.size

    if n < folds:
        warnings.warn(f"only {n} training pixels; reducing fold count", stacklevel=2)
        folds = max(2, n)
    order = np.random.default_rng(stream_seed(base.seed, scene.day, "cv")).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % folds

    mus = [float(m) for m in grids.mu_values]
    best = None
    for K in grids.k_values:
        for psi in grids.psi_values:
            params = replace(base, K=int(K), psi=float(psi))
            M = cluster(Xc, params.cluster_params(stream_seed(base.seed, scene.day, "cvclust")))
            labels_all = M.m.argmax(axis=1)
            centroids = _membership_centroids(M.m, Xr)
            abs_err = np.zeros(len(mus))
            for f in range(folds):
                val = fold_of == f
                train = ~val
                X_tr, y_tr, lab_tr = Xr[train], y[train], labels_all[train]
                families: list = [None] * int(K)
                nonempty = []
                for k in range(int(K)):
                    krows = np.flatnonzero(lab_tr == k)
                    if krows.size:
                        families[k] = kridge.fit_mu_family(
                            X_tr[krows], y_tr[krows], mus, sigma_scale=base.sigma_scale)
                        nonempty.append(k)
                if not nonempty:
                    raise DomainError("no cluster received any training pixel")
                for k in range(int(K)):
                    if families[k] is None:  # silent merge; the real fit warns
                        dists = [np.linalg.norm(centroids[k] - centroids[j]) for j in nonempty]
                        families[k] = families[nonempty[int(np.argmin(dists))]]
                preds = [kridge.predict_family(fam, Xr[val]) for fam in families]
                m_val = M.m[val]
                for i in range(len(mus)):
                    stacked = np.column_stack([p[:, i] for p in preds])
                    blended = blend_predictions(m_val, stacked)
                    abs_err[i] += float(np.sum(np.abs(blended - y[val])))
            for i, mu in enumerate(mus):
                score = abs_err[i] / n
                cand = (score, int(K), -mu, float(psi))
                if best is None or cand < best[0]:
                    best = (cand, replace(base, K=int(K), psi=float(psi), mu=mu))
    return best[1]


def pri_day(scene: Scene, beta: float = pri.DEFAULT_BETA, iters: int = pri.DEFAULT_ITERS,
            step_scale: float = pri.DEFAULT_STEP_SCALE, bins_target: int = pri.DEFAULT_BINS,
            bins_feature: int = pri.DEFAULT_BINS, train_frac: float = 0.33) -> Grid:
    """Baseline chain for one scene: binned Bayes initialization from the
    in-situ pool on (LST, PPT, LAI, LC), then density morphing from the
    replicated coarse observations."""
    rows = _training_rows(scene, train_frac)
    idx = scene.insitu_idx[rows]
    X_all = np.column_stack([
        scene.lst.values.ravel(),
        scene.ppt.values.ravel(),
        scene.lai.values.ravel(),
        scene.lc.values.ravel(),
    ])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # constant features are routine
        model = pri.fit_bayes(X_all[idx], scene.insitu_sm[rows], k=bins_target, k_j=bins_feature)
    initial = pri.bayes_initial(model, X_all, like=scene.true_sm)
    sd = float(initial.values.std())
    step = step_scale * (sd if sd > 0 else 1.0)
    return pri.pri_optimize(initial, scene.coarse_sm, beta=beta, iters=iters, step=step)


def iteration_error_trace(scene: Scene, params: SrrmParams) -> list[tuple[int, float]]:
    """Disaggregation RMSE after each clustering iteration (convergence plot)."""
    feats = build_features(scene)
    rows = _training_rows(scene, params.train_frac)
    idx = scene.insitu_idx[rows]
    snapshots: list[MembershipMatrix] = []
    cluster(
        feats.clustering,
        params.cluster_params(params.seed),
        snapshot_hook=lambda it, M: snapshots.append(M),
    )
    out = []
    for it, M in enumerate(snapshots):
        labels = M.m[idx].argmax(axis=1)
        centroids = _membership_centroids(M.m, feats.regression)
        models = fit_cluster_models(
            feats.regression[idx], scene.insitu_sm[rows], labels, centroids, params.K,
            params.mu, params.sigma_scale,
        )
        preds = np.column_stack([kridge.predict_batch(mod, feats.regression) for mod in models])
        sm = np.clip(blend_predictions(M.m, preds), 0.0, 1.0)
        est = Grid(sm.reshape(scene.true_sm.values.shape), scene.true_sm.cell_size, VarTag.SM)
        out.append((it + 1, metrics.rmse(est, scene.true_sm)))
    return out


# ---------------------------------------------------------------------------
# season driver

#: metrics CSV column order (fixed so reruns are byte-identical)
METRIC_COLUMNS = (
    "day", "method", "rmse", "sd",
    "rmse_bare", "rmse_corn", "rmse_cotton",
    "kld_bare", "kld_corn", "kld_cotton",
    "ztest_pass", "frac_below",
)


@dataclass
class DayOutput:
    day: int
    grids: dict[str, Grid]
    metric_rows: list[dict]
    params: SrrmParams | None = None


@dataclass
class SeasonResult:
    days: list[DayOutput] = field(default_factory=list)
    failures: dict[int, str] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for d in self.days:
            out.extend(d.metric_rows)
        return out


def day_metrics(scene: Scene, method: str, est: Grid, mcfg: MetricsSection) -> dict:
    """One metrics CSV row for one method on one day."""
    errors = (est.values - scene.true_sm.values).ravel()
    row = {
        "day": scene.day,
        "method": method,
        "rmse": metrics.rmse(est, scene.true_sm),
        "sd": metrics.error_sd(est, scene.true_sm),
        "frac_below": metrics.error_fraction_below(est, scene.true_sm, mcfg.error_level),
    }
    passed, _ = metrics.ztest_threshold(np.abs(errors), mcfg.ztest_threshold)
    row["ztest_pass"] = int(passed)
    for cls, name in CLASS_NAMES.items():
        mask = scene.lc.values == cls
        if mask.sum() >= 10:
            row[f"rmse_{name}"] = metrics.rmse(est, scene.true_sm, mask=mask)
            row[f"kld_{name}"] = metrics.kld(
                est.values[mask], scene.true_sm.values[mask],
                bins=mcfg.kld_bins, value_range=(mcfg.kld_lo, mcfg.kld_hi),
            )
        else:
            row[f"rmse_{name}"] = float("nan")
            row[f"kld_{name}"] = float("nan")
    return row


def _srrm_base(cfg: RunConfig) -> SrrmParams:
    return SrrmParams(
        K=cfg.srrm.k,
        psi=cfg.srrm.psi,
        mu=cfg.srrm.mu,
        sigma_scale=cfg.srrm.sigma_scale,
        iterations=cfg.cluster.iterations,
        sample_fraction=cfg.cluster.sample_fraction,
        alpha=cfg.cluster.alpha,
        gamma=cfg.cluster.gamma,
        train_frac=cfg.srrm.train_fraction,
        seed=cfg.run.seed,
    )


def run_day(scene: Scene, cfg: RunConfig, methods: tuple[str, ...],
            cv_mode: str, fixed: SrrmParams | None = None) -> DayOutput:
    """All requested methods on one scene, plus their metric rows.

    cv_mode here is the day-effective mode: "off" uses the given params,
    "full" cross-validates (K, psi, mu), "psi_mu" cross-validates psi and
    mu around a fixed K.
    """
    grids: dict[str, Grid] = {}
    rows: list[dict] = []
    params = None
    if "srrm" in methods:
        params = fixed if fixed is not None else _srrm_base(cfg)
        params = replace(params, seed=stream_seed(cfg.run.seed, scene.day, "day"))
        if cv_mode == "full":
            params = cross_validate(scene, CvGrids(
                cfg.cv.k_values, cfg.cv.psi_values, cfg.cv.mu_values), params, cfg.cv.folds)
        elif cv_mode == "psi_mu":
            params = cross_validate(scene, CvGrids(
                (params.K,), cfg.cv.psi_values, cfg.cv.mu_values), params, cfg.cv.folds)
        grids["srrm"] = disaggregate_day(scene, params)
        rows.append(day_metrics(scene, "srrm", grids["srrm"], cfg.metrics))
    if "pri" in methods:
        grids["pri"] = pri_day(
            scene,
            beta=cfg.pri.beta,
            iters=cfg.pri.iterations,
            step_scale=cfg.pri.step_scale,
            bins_target=cfg.pri.bins_target,
            bins_feature=cfg.pri.bins_feature,
            train_frac=cfg.srrm.train_fraction,
        )
        rows.append(day_metrics(scene, "pri", grids["pri"], cfg.metrics))
    return DayOutput(day=scene.day, grids=grids, metric_rows=rows, params=params)


def _day_task(args):
    source, day, cfg, methods, cv_mode, fixed = args
    try:
        scene = SeasonDataset(source).load_scene(day) if isinstance(source, str) else source
        return day, run_day(scene, cfg, methods, cv_mode, fixed), None
    except Exception as exc:  # per-day failures must not kill the season
        return day, None, f"{type(exc).__name__}: {exc}"


def run_season(dataset, cfg: RunConfig, methods: tuple[str, ...] = ("srrm", "pri"),
               days: list[int] | None = None, jobs: int | None = None) -> SeasonResult:
    """Disaggregate every requested day independently.

    dataset is a SeasonDataset (parallelizable across processes) or a
    list of Scene objects.  Results are reduced in day order, so the
    output is deterministic regardless of scheduling.
    """
    if isinstance(dataset, SeasonDataset):
        all_days = dataset.days
        source = lambda day: str(dataset.root)
    else:
        scenes = list(dataset)
        all_days = [s.day for s in scenes]
        by_day = {s.day: s for s in scenes}
        source = lambda day: by_day[day]
    run_days = sorted(all_days if days is None else days)
    missing = [d for d in run_days if d not in all_days]
    if missing:
        raise DataError(f"days not in dataset: {missing}")

    if jobs is None or jobs <= 0:
        jobs = cfg.run.jobs if cfg.run.jobs > 0 else (os.cpu_count() or 1)

    cv_mode = cfg.cv.mode
    fixed = None
    day_mode = "off"
    if "srrm" in methods and cv_mode != "off":
        if cv_mode == "full":
            day_mode = "full"
        else:
            # pick hyperparameters once on the first day, then reuse the
            # cluster count (k_once refreshes psi/mu per day)
            first = run_days[0]
            scene0 = (SeasonDataset(source(first)).load_scene(first)
                      if isinstance(source(first), str) else source(first))
            base = replace(_srrm_base(cfg), seed=stream_seed(cfg.run.seed, first, "day"))
            chosen = cross_validate(scene0, CvGrids(
                cfg.cv.k_values, cfg.cv.psi_values, cfg.cv.mu_values), base, cfg.cv.folds)
            logger.info("cross-validated day %d: K=%d psi=%g mu=%g",
                        first, chosen.K, chosen.psi, chosen.mu)
            fixed = replace(chosen, seed=cfg.run.seed)
            day_mode = "psi_mu" if cv_mode == "k_once" else "off"

    tasks = [(source(d), d, cfg, methods, day_mode, fixed) for d in run_days]
    result = SeasonResult()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_day_task, tasks))
    else:
        outcomes = [_day_task(t) for t in tasks]
    for day, output, err in sorted(outcomes, key=lambda t: t[0]):
        if err is not None:
            logger.error("day %d failed: %s", day, err)
            result.failures[day] = err
        else:
            result.days.append(output)
    return result
