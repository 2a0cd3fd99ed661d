"""Joint alternating training of encoder, codes, and centers.

Each epoch runs (1) a continuous phase: minibatch SGD on the encoder
against the pair losses plus the quantization pull toward the current
codes, then (2) a discrete phase on the full training set: re-quantize
codes, descend the relaxed centers, and apply the closed-form code
update, alternating for a few rounds.  All randomness flows from the
single seed, so a fixed configuration reproduces bit-identical
artifacts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import centers as centers_mod
from . import encoder as encoder_mod
from .binary_codes import BinaryCodeMatrix
from .centers import CenterHyper, init_centers, target_matrix, update_centers, update_codes
from .datasets import Dataset
from .evaluation import metrics_report
from .exceptions import NumericalError
from .pairwise import MarginParams, PairSets, loss_dissimilar, loss_similar, pair_gradient, pair_objective


@dataclass(frozen=True)
class HyperParams:
    """Training weights, margin, code length, and schedule.

    phi scales the pair losses relative to the quantization pull (whose
    weight stays 1); mu and nu weigh the center pull and the center
    separation; eta anchors relaxed centers to their sign pattern.  The
    use_* flags zero out the corresponding term for ablations.
    """

    bits: int
    epochs: int
    batch_size: int = 64
    lr: float = 0.01
    seed: int = 0
    phi: float = 1.0
    mu: float = 1.0
    nu: float = 0.1
    eta: float = 0.5
    margin: float = 1.0
    weight_decay: float = 0.0
    momentum: float = 0.0
    use_pair: bool = True
    use_intra: bool = True
    use_inter: bool = True
    use_margin: bool = True
    center_inner_lr: float = 1e-2
    center_inner_steps: int = 20
    center_rounds: int = 3
    reinit_centers_each_epoch: bool = False
    # Run one discrete phase on the untrained encoder output, so the
    # first continuous pass already pulls toward center-shaped codes.
    # Off by default: the baseline behavior quantizes the first epoch's
    # targets directly from the initial representations.
    warm_start_centers: bool = False

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("phi", "mu", "nu", "eta", "margin", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.use_pair and self.batch_size < 2:
            raise ValueError("use_pair requires batch_size >= 2 (pairs need two items)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")

    @property
    def effective_phi(self) -> float:
        return self.phi if self.use_pair else 0.0

    @property
    def effective_mu(self) -> float:
        return self.mu if self.use_intra else 0.0

    @property
    def effective_nu(self) -> float:
        return self.nu if self.use_inter else 0.0

    @property
    def effective_margin(self) -> float:
        return self.margin if self.use_margin else 0.0

    def center_hyper(self) -> CenterHyper:
        # Both normalizations keep the inner step size independent of
        # dataset size, code length, and class count.
        return CenterHyper(
            mu=self.effective_mu,
            nu=self.effective_nu,
            eta=self.eta,
            inner_lr=self.center_inner_lr,
            inner_steps=self.center_inner_steps,
            rounds=self.center_rounds,
            normalize_intra=True,
            normalize_inter=True,
        )

    def ablation(self, variant: str) -> "HyperParams":
        """The three stacked variants: pair / pair+intra / full."""
        if variant == "pair":
            return replace(self, use_pair=True, use_intra=False, use_inter=False)
        if variant == "pair+intra":
            return replace(self, use_pair=True, use_intra=True, use_inter=False)
        if variant == "full":
            return replace(self, use_pair=True, use_intra=True, use_inter=True)
        raise ValueError(f"unknown ablation variant {variant!r}")


@dataclass
class EpochRecord:
    epoch: int
    pair_loss: float
    intra_loss: float
    inter_loss: float
    quant_loss: float
    total: float


@dataclass
class TrainReport:
    """Per-epoch objective components plus final artifact paths.

    Wall-clock time is kept out of the serialized report so identical
    configurations produce byte-identical report files; it is written
    to a separate timing sidecar instead.
    """

    records: list = field(default_factory=list)
    train_map: float | None = None
    artifacts: dict = field(default_factory=dict)
    config_hash: str | None = None
    elapsed_seconds: float | None = None

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "train_map": self.train_map,
            "artifacts": {k: str(v) for k, v in self.artifacts.items()},
            "epochs": [
                {
                    "epoch": r.epoch,
                    "pair_loss": r.pair_loss,
                    "intra_loss": r.intra_loss,
                    "inter_loss": r.inter_loss,
                    "quant_loss": r.quant_loss,
                    "total": r.total,
                }
                for r in self.records
            ],
        }


def joint_objective(u, b, c, y, pairs: PairSets, hp: HyperParams):
    """Weighted sum of the four objective blocks on explicit inputs.

    Returns (total, components); the components are the raw block
    values, the total applies phi/mu/nu and the ablation flags.
    """
    a = target_matrix(hp.bits, np.asarray(y).shape[0])
    pair = pair_objective(u, b, pairs, MarginParams(m=hp.effective_margin, psi=0.0))
    intra = centers_mod.intra_loss(b, c, y)
    inter = centers_mod.inter_loss(c, a)
    quant = centers_mod.quant_loss(b, u)
    components = {"pair": pair, "intra": intra, "inter": inter, "quant": quant}
    total = (
        hp.effective_phi * pair
        + hp.effective_mu * intra
        + hp.effective_nu * inter
        + quant
    )
    return total, components


def pair_loss_full(u: np.ndarray, label_sets, margin: float, block: int = 1024) -> float:
    """Sum of pair losses over all unordered pairs, without
    materializing the pair sets (blocked Gram computation)."""
    n = u.shape[1]
    classes = sorted({c for s in label_sets for c in s})
    ind = np.zeros((n, len(classes)), dtype=bool)
    pos = {c: i for i, c in enumerate(classes)}
    for i, s in enumerate(label_sets):
        ind[i, [pos[c] for c in s]] = True
    total = 0.0
    for bi in range(0, n, block):
        ei = min(bi + block, n)
        for bj in range(bi, n, block):
            ej = min(bj + block, n)
            d = -0.5 * (u[:, bi:ei].T @ u[:, bj:ej])
            sim = ind[bi:ei] @ ind[bj:ej].T
            if bi == bj:
                upper = np.triu(np.ones_like(sim, dtype=bool), k=1)
            else:
                upper = np.ones_like(sim, dtype=bool)
            s_mask = sim & upper
            d_mask = ~sim & upper
            if s_mask.any():
                total += float(loss_similar(d[s_mask], margin).sum())
            if d_mask.any():
                total += float(loss_dissimilar(d[d_mask], margin).sum())
    return total


def continuous_step_gradient(u: np.ndarray, b, pairs: PairSets, hp: HyperParams) -> np.ndarray:
    """Gradient in U for one minibatch of the continuous phase.

    Pair losses are averaged over the pair count and the quantization
    pull over the item count, decoupling the step size from the batch
    size; with mu = nu = 0 and margin 0 this is exactly the classical
    pairwise logistic step with a quantization penalty.
    """
    n = u.shape[1]
    bd = b.dense(np.float64) if isinstance(b, BinaryCodeMatrix) else np.asarray(b, dtype=np.float64)
    grad = 2.0 * (u - bd) / n
    if hp.use_pair and pairs.count:
        pair_part = pair_gradient(
            u, bd, pairs, MarginParams(m=hp.effective_margin, psi=0.0)
        )
        grad = grad + hp.phi * pair_part / pairs.count
    return grad


def _discrete_phase(u_full, y, v, hp: HyperParams, a):
    """Re-quantize codes, then alternate center descent / code update."""
    b = BinaryCodeMatrix.from_values(u_full)
    if v is None:
        v = init_centers(u_full, y)
    ch = hp.center_hyper()
    for _ in range(ch.rounds):
        v, c = update_centers(v, b, y, a, ch)
        b = update_codes(u_full, c, y, hp.effective_mu)
    return b, c, v


def train(
    dataset: Dataset,
    hp: HyperParams,
    encoder_spec: encoder_mod.EncoderSpec,
    out_dir=None,
    config_hash: str | None = None,
) -> TrainReport:
    """Run the alternating optimization and optionally save artifacts.

    Artifacts: encoder checkpoint, training-set code table, packed
    centers with a raw float64 sidecar of the relaxed centers, and the
    report (JSON + CSV).  The returned report also carries the
    training-set self-retrieval MAP.
    """
    if encoder_spec.output_dim != hp.bits:
        raise ValueError(
            f"encoder output_dim {encoder_spec.output_dim} != bits {hp.bits}"
        )
    if encoder_spec.input_dim != dataset.input_dim:
        raise ValueError(
            f"encoder input_dim {encoder_spec.input_dim} != dataset dim {dataset.input_dim}"
        )
    t_start = time.perf_counter()
    train_idx = dataset.split("train")
    x = dataset.features[:, train_idx]
    label_sets = dataset.subset_labels(train_idx)
    y = dataset.y_matrix(train_idx)
    n = x.shape[1]
    a = target_matrix(hp.bits, dataset.num_classes)

    rng = np.random.default_rng(hp.seed)
    state = encoder_mod.init_state(encoder_spec)
    opt = encoder_mod.SGD(hp.lr, hp.weight_decay, hp.momentum)

    u_full, _ = encoder_mod.forward(state, x)
    b = BinaryCodeMatrix.from_values(u_full)
    c = None
    v = None
    if hp.warm_start_centers and hp.epochs > 0:
        b, c, v = _discrete_phase(u_full, y, v, hp, a)
    report = TrainReport(config_hash=config_hash)

    for epoch in range(hp.epochs):
        perm = rng.permutation(n)
        b_dense = b.dense(np.float64)
        for start in range(0, n, hp.batch_size):
            idx = perm[start : start + hp.batch_size]
            u_batch, cache = encoder_mod.forward(state, x[:, idx])
            pairs = PairSets.all_pairs_from_label_sets([label_sets[i] for i in idx])
            du = continuous_step_gradient(u_batch, b_dense[:, idx], pairs, hp)
            if not np.isfinite(du).all():
                raise NumericalError(
                    f"non-finite loss gradient at epoch {epoch}, batch {start // hp.batch_size}"
                )
            grads, _ = encoder_mod.backward(state, cache, du)
            state = opt.step(state, grads)

        u_full, _ = encoder_mod.forward(state, x)
        if hp.reinit_centers_each_epoch:
            v = None
        b, c, v = _discrete_phase(u_full, y, v, hp, a)

        pair = pair_loss_full(u_full, label_sets, hp.effective_margin)
        intra = centers_mod.intra_loss(b, c, y)
        inter = centers_mod.inter_loss(c, a)
        quant = centers_mod.quant_loss(b, u_full)
        total = (
            hp.effective_phi * pair
            + hp.effective_mu * intra
            + hp.effective_nu * inter
            + quant
        )
        if not np.isfinite(total):
            raise NumericalError(f"non-finite objective at epoch {epoch}")
        report.records.append(
            EpochRecord(epoch, pair, intra, inter, quant, total)
        )

    if hp.epochs == 0:
        # Degenerate run: codes are the sign pattern of the untrained encoder.
        b = BinaryCodeMatrix.from_values(u_full)
        c, v = _initial_centers_for_report(u_full, y)
    train_metrics = metrics_report(
        b, b, label_sets, label_sets, ks=[b.n], num_classes=dataset.num_classes
    )
    report.train_map = train_metrics.map_at[b.n]
    report.elapsed_seconds = time.perf_counter() - t_start

    if out_dir is not None:
        _save_artifacts(out_dir, state, b, c, v, report)
    return report


def _initial_centers_for_report(u_full, y):
    v = init_centers(u_full, y)
    return BinaryCodeMatrix.from_values(centers_mod.sign_plus(v)), v


def _save_artifacts(out_dir, state, b, c, v, report: TrainReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "checkpoint": out / "encoder.fhnn",
        "codes": out / "codes.fhsh",
        "centers": out / "centers.fhsh",
        "centers_v": out / "centers.v.f64",
        "report_json": out / "report.json",
        "report_csv": out / "report.csv",
    }
    encoder_mod.save_checkpoint(state, paths["checkpoint"])
    b.save(paths["codes"])
    c.save(paths["centers"])
    with open(paths["centers_v"], "wb") as fh:
        fh.write(np.ascontiguousarray(v.T, dtype="<f8").tobytes())
    report.artifacts = {k: p.name for k, p in paths.items()}
    with open(paths["report_json"], "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["report_csv"], "w", encoding="utf-8") as fh:
        fh.write("epoch,pair_loss,intra_loss,inter_loss,quant_loss,total\n")
        for r in report.records:
            fh.write(
                f"{r.epoch},{r.pair_loss!r},{r.intra_loss!r},{r.inter_loss!r},"
                f"{r.quant_loss!r},{r.total!r}\n"
            )
    # Wall-clock timing goes to a sidecar: it is the one run-dependent
    # quantity and must not break artifact reproducibility.
    with open(out / "timing.json", "w", encoding="utf-8") as fh:
        json.dump({"elapsed_seconds": report.elapsed_seconds}, fh)
        fh.write("\n")


def load_relaxed_centers(path, bits: int, classes: int) -> np.ndarray:
    """Read a centers.v.f64 sidecar back into a K x M matrix."""
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != bits * classes:
        raise ValueError(
            f"{path}: expected {bits * classes} float64 values, got {raw.size}"
        )
    return raw.reshape(classes, bits).T.copy()


def loss_curve_rows(m_values, d_min: float = -8.0, d_max: float = 8.0, points: int = 161):
    """Rows (D, m, loss_similar, loss_dissimilar) over a grid of D.

    When the range is symmetric around zero the grid is built by
    mirroring, so every -D is exactly representable on it.
    """
    if points < 2:
        raise ValueError("points must be >= 2")
    if d_min >= d_max:
        raise ValueError("d_min must be < d_max")
    if d_min == -d_max and points % 2 == 1:
        half = np.linspace(0.0, d_max, (points + 1) // 2)
        grid = np.concatenate([-half[:0:-1], half])
    else:
        grid = np.linspace(d_min, d_max, points)
    rows = []
    for m in m_values:
        ls = loss_similar(grid, m)
        ld = loss_dissimilar(grid, m)
        rows.extend(
            (float(d), float(m), float(s), float(o))
            for d, s, o in zip(grid, ls, ld)
        )
    return rows


def write_loss_curves(path, m_values, d_min: float = -8.0, d_max: float = 8.0, points: int = 161) -> None:
    rows = loss_curve_rows(m_values, d_min, d_max, points)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("D,m,loss_similar,loss_dissimilar\n")
        for d, m, ls, ld in rows:
            fh.write(f"{d!r},{m!r},{ls!r},{ld!r}\n")
