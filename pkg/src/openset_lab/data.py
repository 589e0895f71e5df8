"""Synthetic open-set mixtures with planted high-variance instances.

Classes are Gaussian clusters whose means sit on a seeded orthonormal
frame scaled so every pair of means is exactly `cluster_separation`
apart.  The unlabeled pool mixes seen and unseen classes, and a seeded
fraction of it is planted as "unfriendly": the same draw with its
feature noise inflated by `unfriendly_noise_scale`.  Hidden truth and
planted flags ride along for evaluation only; training code never
reads them.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError

CSV_FIXED_COLUMNS = ["split", "idx", "label", "hidden_truth", "planted_unfriendly"]


def seeded_rng(*entropy):
    """A fresh generator keyed by a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def derive_seed(*entropy):
    """Collapse an entropy tuple into a single reusable integer seed."""
    seq = np.random.SeedSequence([int(e) for e in entropy])
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class OpenSetConfig:
    dim: int
    k_seen: int
    k_unseen: int
    labels_per_class: int
    unlabeled_per_class: int
    val_per_class: int
    test_per_class: int
    cluster_separation: float
    cluster_stddev: float
    unfriendly_fraction: float
    unfriendly_noise_scale: float
    seed: int

    def __post_init__(self):
        if self.k_seen < 2:
            raise ConfigError(f"k_seen must be >= 2, got {self.k_seen}")
        if self.k_unseen < 0:
            raise ConfigError(f"k_unseen must be >= 0, got {self.k_unseen}")
        if self.dim < self.k_seen + self.k_unseen:
            raise ConfigError(
                f"dim {self.dim} too small to separate "
                f"{self.k_seen + self.k_unseen} cluster means"
            )
        for name in ("labels_per_class", "unlabeled_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("val_per_class", "test_per_class"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.cluster_separation <= 0 or self.cluster_stddev <= 0:
            raise ConfigError("cluster separation and stddev must be positive")
        if not 0.0 <= self.unfriendly_fraction <= 1.0:
            raise ConfigError(
                f"unfriendly_fraction must be in [0, 1], got {self.unfriendly_fraction}"
            )
        if self.unfriendly_noise_scale < 1.0:
            raise ConfigError("unfriendly_noise_scale must be >= 1")

    @property
    def k_total(self):
        return self.k_seen + self.k_unseen

    @property
    def mismatch_ratio(self):
        return self.k_unseen / self.k_total


@dataclass
class OpenSetData:
    """Labeled set S, unlabeled pool U, validation V, test T."""

    s_x: np.ndarray
    s_y: np.ndarray
    s_idx: np.ndarray
    u_x: np.ndarray
    u_truth: np.ndarray
    u_planted: np.ndarray
    u_idx: np.ndarray
    v_x: np.ndarray
    v_y: np.ndarray
    v_idx: np.ndarray
    t_x: np.ndarray
    t_y: np.ndarray
    t_idx: np.ndarray
    k_seen: int
    k_unseen: int

    @property
    def dim(self):
        return self.s_x.shape[1]


def _cluster_means(cfg, rng):
    # Orthonormal frame (QR of a Gaussian matrix, sign-fixed), scaled so
    # all pairwise distances equal cluster_separation exactly.
    a = rng.standard_normal((cfg.dim, cfg.dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    frame = q[:, : cfg.k_total].T
    return frame * (cfg.cluster_separation / np.sqrt(2.0))


def make_openset_mixture(cfg):
    """Generate a dataset; the same config always yields identical arrays."""
    rng = seeded_rng(cfg.seed)
    means = _cluster_means(cfg, rng)

    def sample(class_id, count):
        return means[class_id] + cfg.cluster_stddev * rng.standard_normal(
            (count, cfg.dim)
        )

    s_x = np.concatenate([sample(c, cfg.labels_per_class) for c in range(cfg.k_seen)])
    s_y = np.repeat(np.arange(cfg.k_seen), cfg.labels_per_class)

    u_blocks, u_truth, u_planted = [], [], []
    for c in range(cfg.k_total):
        noise = rng.standard_normal((cfg.unlabeled_per_class, cfg.dim))
        planted = rng.random(cfg.unlabeled_per_class) < cfg.unfriendly_fraction
        scale = np.where(planted, cfg.unfriendly_noise_scale, 1.0)[:, None]
        u_blocks.append(means[c] + cfg.cluster_stddev * scale * noise)
        u_truth.append(np.full(cfg.unlabeled_per_class, c))
        u_planted.append(planted)
    u_x = np.concatenate(u_blocks)
    u_truth = np.concatenate(u_truth)
    u_planted = np.concatenate(u_planted)

    v_x = np.concatenate(
        [sample(c, cfg.val_per_class) for c in range(cfg.k_seen)]
    ) if cfg.val_per_class else np.empty((0, cfg.dim))
    v_y = np.repeat(np.arange(cfg.k_seen), cfg.val_per_class)

    t_x = np.concatenate(
        [sample(c, cfg.test_per_class) for c in range(cfg.k_total)]
    ) if cfg.test_per_class else np.empty((0, cfg.dim))
    t_y = np.repeat(np.arange(cfg.k_total), cfg.test_per_class)

    counts = [len(s_x), len(u_x), len(v_x), len(t_x)]
    bounds = np.cumsum([0] + counts)
    return OpenSetData(
        s_x=s_x,
        s_y=s_y,
        s_idx=np.arange(bounds[0], bounds[1]),
        u_x=u_x,
        u_truth=u_truth,
        u_planted=u_planted,
        u_idx=np.arange(bounds[1], bounds[2]),
        v_x=v_x,
        v_y=v_y,
        v_idx=np.arange(bounds[2], bounds[3]),
        t_x=t_x,
        t_y=t_y,
        t_idx=np.arange(bounds[3], bounds[4]),
        k_seen=cfg.k_seen,
        k_unseen=cfg.k_unseen,
    )


# -- augmentations ---------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    weak_jitter: float = 0.1
    strong_jitter: float = 0.5
    mask_fraction: float = 0.25

    def __post_init__(self):
        if self.weak_jitter < 0:
            raise ConfigError("weak_jitter must be >= 0")
        if self.strong_jitter <= self.weak_jitter:
            raise ConfigError("strong_jitter must exceed weak_jitter")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ConfigError("mask_fraction must be in [0, 1]")


def weak_augment(x, seed, aug=AugmentConfig()):
    """Isotropic Gaussian jitter with stddev weak_jitter."""
    x = np.asarray(x, dtype=np.float64)
    rng = seeded_rng(seed)
    return x + aug.weak_jitter * rng.standard_normal(x.shape)


def strong_augment(x, seed, aug=AugmentConfig()):
    """Coordinate masking (each kept with prob 1 - mask_fraction) then jitter."""
    x = np.asarray(x, dtype=np.float64)
    rng = seeded_rng(seed)
    masked = np.where(rng.random(x.shape) < aug.mask_fraction, 0.0, x)
    return masked + aug.strong_jitter * rng.standard_normal(x.shape)


def unsup_views(x, aug_seed, aug=AugmentConfig()):
    """The three views an unlabeled instance is judged on.

    Two weak views (entropy and consistency terms; the first also
    produces the pseudo-label) and one strong view.  Sub-seeds derive
    from (aug_seed, view_tag) so each view is independently seeded.
    """
    x = np.asarray(x, dtype=np.float64)
    rng0 = seeded_rng(aug_seed, 0)
    rng1 = seeded_rng(aug_seed, 1)
    rng2 = seeded_rng(aug_seed, 2)
    w0 = x + aug.weak_jitter * rng0.standard_normal(x.shape)
    w1 = x + aug.weak_jitter * rng1.standard_normal(x.shape)
    masked = np.where(rng2.random(x.shape) < aug.mask_fraction, 0.0, x)
    strong = masked + aug.strong_jitter * rng2.standard_normal(x.shape)
    return w0, w1, strong


# -- CSV serialization -------------------------------------------------------


def _float_cell(v):
    return repr(float(v))


def export_csv(data, path):
    """Write every split to one CSV; floats use round-trip repr."""
    dim = data.dim
    header = CSV_FIXED_COLUMNS + [f"x{i}" for i in range(dim)]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)

        def rows(split, xs, idxs, labels, truths, planted):
            for i in range(len(xs)):
                writer.writerow(
                    [split, int(idxs[i]), int(labels[i]), int(truths[i]), int(planted[i])]
                    + [_float_cell(v) for v in xs[i]]
                )

        rows("S", data.s_x, data.s_idx, data.s_y, data.s_y, np.zeros(len(data.s_x)))
        rows("U", data.u_x, data.u_idx, -np.ones(len(data.u_x)), data.u_truth, data.u_planted)
        rows("V", data.v_x, data.v_idx, data.v_y, data.v_y, np.zeros(len(data.v_x)))
        rows("T", data.t_x, data.t_idx, data.t_y, data.t_y, np.zeros(len(data.t_x)))


def import_csv(path):
    """Read a dataset written by export_csv; inverse on all fields."""
    splits = {name: {"x": [], "idx": [], "label": [], "truth": [], "planted": []}
              for name in ("S", "U", "V", "T")}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if header[: len(CSV_FIXED_COLUMNS)] != CSV_FIXED_COLUMNS:
            raise ParseError(
                f"expected header to start with {','.join(CSV_FIXED_COLUMNS)}", line=1
            )
        feat_cols = header[len(CSV_FIXED_COLUMNS) :]
        if feat_cols != [f"x{i}" for i in range(len(feat_cols))] or not feat_cols:
            raise ParseError("feature columns must be x0..x{dim-1}", line=1)
        dim = len(feat_cols)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", line=lineno
                )
            split = row[0]
            if split not in splits:
                raise ParseError(f"unknown split {split!r}", line=lineno)
            try:
                idx, label, truth, planted = (int(v) for v in row[1:5])
                x = [float(v) for v in row[5:]]
            except ValueError as e:
                raise ParseError(str(e), line=lineno) from None
            bucket = splits[split]
            bucket["x"].append(x)
            bucket["idx"].append(idx)
            bucket["label"].append(label)
            bucket["truth"].append(truth)
            bucket["planted"].append(planted)

    def arrays(name):
        b = splits[name]
        x = np.asarray(b["x"], dtype=np.float64).reshape(len(b["x"]), dim)
        return (
            x,
            np.asarray(b["idx"], dtype=np.int64),
            np.asarray(b["label"], dtype=np.int64),
            np.asarray(b["truth"], dtype=np.int64),
            np.asarray(b["planted"], dtype=bool),
        )

    s_x, s_idx, s_y, _, _ = arrays("S")
    u_x, u_idx, _, u_truth, u_planted = arrays("U")
    v_x, v_idx, v_y, _, _ = arrays("V")
    t_x, t_idx, t_y, _, _ = arrays("T")
    seen = np.concatenate([s_y, v_y])
    k_seen = int(seen.max()) + 1 if len(seen) else 0
    all_truth = np.concatenate([u_truth, t_y, seen])
    k_total = int(all_truth.max()) + 1 if len(all_truth) else 0
    return OpenSetData(
        s_x=s_x, s_y=s_y, s_idx=s_idx,
        u_x=u_x, u_truth=u_truth, u_planted=u_planted, u_idx=u_idx,
        v_x=v_x, v_y=v_y, v_idx=v_idx,
        t_x=t_x, t_y=t_y, t_idx=t_idx,
        k_seen=k_seen, k_unseen=max(k_total - k_seen, 0),
    )
