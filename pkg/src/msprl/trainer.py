"""Training loop, evaluation and the SFE x FF ablation harness

One `Trainer` owns the model and the optimizer. Batch preparation runs ahead
on the prefetcher thread; batch `i` is always drawn from the random stream
of (seed, i), so an interrupted run resumed from its checkpoint replays the
exact trajectory of an uninterrupted one.
"""
import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .dataset import Batch, BatchPrefetcher, Dataset, Halftoner, PatchSampler
from .exceptions import NonFiniteError, TrainingDivergedError
from .halftone import DEFAULT_SIGMA, floyd_steinberg, gaussian_baseline
from .image import (
    GrayImage,
    HalftoneImage,
    Raster,
    center_crop,
    images_to_tensor,
    save_image,
    tensor_to_images,
)
from .losses import LossBreakdown, loss_terms
from .metrics import MetricRecord, MetricReport, psnr, ssim
from .model import MsprlModel, build_model, count_parameters
from .optim import AdamW, OptimizerState, learning_rate
from .tensor import backward, no_grad
from .utils import PathLike, atomic_write_text

logger = logging.getLogger(__name__)

SIZE_MULTIPLE = 4
FINAL_CHECKPOINT = "final.msprl"
VALIDATION_CSV = "validation.csv"


def periodic_checkpoint_name(iteration: int) -> str:
    """File name of the checkpoint written after `iteration` steps"""
    return f"ckpt-{iteration:08d}.msprl"


class Restorer:
    """Maps a halftone (or any raster) to a continuous-tone estimate"""

    name = "restorer"

    def restore(self, source: Raster) -> GrayImage:
        """Restored image, clamped to [0, 1]"""
        raise NotImplementedError


class ModelRestorer(Restorer):
    """Runs the network without recording a graph"""

    name = "model"

    def __init__(self, model: MsprlModel) -> None:
        self.model = model

    def restore(self, source: Raster) -> GrayImage:
        with no_grad():
            output = self.model(images_to_tensor([source], self.model.config.dtype))
        return tensor_to_images(output)[0]


class GaussianRestorer(Restorer):
    """Separable Gaussian low-pass baseline"""

    name = "gaussian"

    def __init__(self, sigma: float = DEFAULT_SIGMA) -> None:
        self.sigma = sigma

    def restore(self, source: Raster) -> GrayImage:
        return gaussian_baseline(source, self.sigma)


class IdentityRestorer(Restorer):
    """Returns its input unchanged"""

    name = "identity"

    def restore(self, source: Raster) -> GrayImage:
        if isinstance(source, HalftoneImage):
            return source.to_gray()
        return source


def evaluate(
    restorer: Restorer,
    dataset: Dataset,
    halftoner: Optional[Halftoner] = floyd_steinberg,
) -> MetricReport:
    """Halftone, restore and score every image.

    Images whose sides are not divisible by 4 are centre-cropped first and the
    crop is recorded. With `halftoner=None` the restorer receives the ground
    truth itself.
    """
    dataset.require_nonempty()
    report = MetricReport()
    for path, image in zip(dataset.paths, dataset.images):
        target, cropped = center_crop(image, SIZE_MULTIPLE)
        if cropped:
            logger.warning(
                "%s: cropped %dx%d to %dx%d",
                path,
                image.height,
                image.width,
                target.height,
                target.width,
            )
        source: Raster = halftoner(target) if halftoner is not None else target
        restored = restorer.restore(source)
        report.add(MetricRecord(path, psnr(restored, target), ssim(restored, target), cropped))
    logger.info(
        "%s: mean PSNR %.4f dB, mean SSIM %.4f over %d image(s)",
        restorer.name,
        report.mean_psnr,
        report.mean_ssim,
        len(report.records),
    )
    return report


@dataclass(frozen=True)
class TrainingRecord:
    """Values logged for one optimisation step"""

    iteration: int
    lr: float
    loss: float
    l1: float
    fft: float


def validation_csv(validations: List[Tuple[int, float, float]]) -> str:
    """`iteration,psnr_db,ssim` rows of a validation curve"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["iteration", "psnr_db", "ssim"])
    for iteration, psnr_db, ssim_value in validations:
        writer.writerow([iteration, repr(psnr_db), repr(ssim_value)])
    return buffer.getvalue()


def read_validation_csv(path: PathLike) -> List[Tuple[int, float, float]]:
    """Rows written by validation_csv; empty when the file does not exist"""
    if not Path(path).is_file():
        return []
    with open(path, encoding="utf-8", newline="") as csv_file:
        rows = list(csv.DictReader(csv_file))
    return [(int(row["iteration"]), float(row["psnr_db"]), float(row["ssim"])) for row in rows]


class Trainer:
    """Iteration-based AdamW training of one model"""

    def __init__(
        self,
        cfg: TrainConfig,
        train_set: Dataset,
        val_set: Optional[Dataset] = None,
        model: Optional[MsprlModel] = None,
        resume: Optional[Checkpoint] = None,
        halftoner: Halftoner = floyd_steinberg,
    ) -> None:
        train_set.require_nonempty()
        self.cfg = cfg
        self.val_set = val_set
        self.halftoner = halftoner
        self.iteration = 0
        if resume is not None:
            model = resume.build_model()
            self.iteration = resume.iteration
        elif model is None:
            model = build_model(cfg.model_config())
        self.model = model
        self.optimizer = AdamW(list(model.named_parameters()), cfg)
        if resume is not None:
            self.optimizer.state = OptimizerState(
                exp_avg={name: array.copy() for name, array in resume.optimizer.exp_avg.items()},
                exp_avg_sq={
                    name: array.copy() for name, array in resume.optimizer.exp_avg_sq.items()
                },
                step=resume.optimizer.step,
            )
            self.optimizer.state.check_matches(self.optimizer.params)
        self.sampler = PatchSampler(
            train_set,
            cfg.batch_size,
            cfg.patch_size,
            cfg.seed,
            augment=cfg.augment,
            halftoner=halftoner,
            dtype=model.config.dtype,
        )
        self.weights = cfg.loss_weights()
        self.history: List[TrainingRecord] = []
        self.validations: List[Tuple[int, float, float]] = []
        if resume is not None:
            self.validations = [
                row
                for row in read_validation_csv(self.checkpoint_dir / VALIDATION_CSV)
                if row[0] <= self.iteration
            ]

    @property
    def checkpoint_dir(self) -> Path:
        return Path(self.cfg.checkpoint_dir)

    def checkpoint(self) -> Checkpoint:
        """Snapshot of the current training state"""
        return Checkpoint.capture(self.model, self.optimizer.state, self.iteration, self.cfg)

    def _diverged(self, batch: Batch, reason: str) -> TrainingDivergedError:
        dump_dir = self.checkpoint_dir / f"diverged-{batch.index:08d}"
        for i, (halftone, target) in enumerate(
            zip(tensor_to_images(batch.inputs), tensor_to_images(batch.targets))
        ):
            save_image(halftone, dump_dir / f"input-{i:02d}.pgm")
            save_image(target, dump_dir / f"target-{i:02d}.pgm")
        message = (
            f"training diverged at iteration {batch.index}: {reason}; batch dumped to {dump_dir}"
        )
        logger.error(message)
        return TrainingDivergedError(message, str(dump_dir))

    def step(self, batch: Batch) -> TrainingRecord:
        """One forward, backward and AdamW update on `batch`"""
        assert batch.index == self.iteration
        lr = learning_rate(self.iteration, self.cfg)
        self.optimizer.zero_grad()
        try:
            terms: LossBreakdown = loss_terms(self.model(batch.inputs), batch.targets, self.weights)
            loss = terms.total.item()
            if not math.isfinite(loss):
                raise NonFiniteError(f"loss is {loss}")
            backward(terms.total)
        except NonFiniteError as error:
            raise self._diverged(batch, str(error)) from error
        self.optimizer.step(lr)
        self.iteration += 1
        record = TrainingRecord(self.iteration, lr, loss, terms.l1, terms.fft)
        self.history.append(record)
        return record

    def validate(self) -> Optional[MetricReport]:
        """Score the current model on the validation set, if any"""
        if self.val_set is None or not len(self.val_set):
            return None
        report = evaluate(ModelRestorer(self.model), self.val_set, self.halftoner)
        self.validations.append((self.iteration, report.mean_psnr, report.mean_ssim))
        atomic_write_text(self.checkpoint_dir / VALIDATION_CSV, validation_csv(self.validations))
        logger.info(
            "iter=%d val_psnr=%.4f val_ssim=%.4f",
            self.iteration,
            report.mean_psnr,
            report.mean_ssim,
        )
        return report

    def _due(self, interval: int) -> bool:
        return interval > 0 and self.iteration % interval == 0

    def run(self, stop: Optional[int] = None) -> Checkpoint:
        """Train up to iteration `stop` (default: the end of the schedule).

        Periodic checkpoints are written every `checkpoint_interval` steps; the
        final checkpoint is written when the schedule completes.
        """
        total = self.cfg.total_iterations
        stop = total if stop is None else min(stop, total)
        logger.info(
            "training %d parameters from iteration %d to %d",
            count_parameters(self.model),
            self.iteration,
            stop,
        )
        if self.iteration < stop:
            prefetcher = BatchPrefetcher(self.sampler, self.iteration, stop, self.cfg.queue_depth)
            with prefetcher as batches:
                for batch in batches:
                    record = self.step(batch)
                    if self._due(self.cfg.log_interval) or self.iteration == stop:
                        logger.info(
                            "iter=%d lr=%.6g loss=%.6f l1=%.6f fft=%.6f",
                            record.iteration,
                            record.lr,
                            record.loss,
                            record.l1,
                            record.fft,
                        )
                    if self._due(self.cfg.validation_interval):
                        self.validate()
                    if self._due(self.cfg.checkpoint_interval) and self.iteration < total:
                        save_checkpoint(
                            self.checkpoint(),
                            self.checkpoint_dir / periodic_checkpoint_name(self.iteration),
                        )
        final = self.checkpoint()
        if self.iteration == total:
            save_checkpoint(final, self.checkpoint_dir / FINAL_CHECKPOINT)
        return final


def train(
    model: MsprlModel,
    dataset: Dataset,
    cfg: TrainConfig,
    val_set: Optional[Dataset] = None,
) -> Checkpoint:
    """Train `model` in place for cfg.total_iterations and return the final checkpoint"""
    return Trainer(cfg, dataset, val_set=val_set, model=model).run()


@dataclass(frozen=True)
class AblationResult:
    """Outcome of one SFE x FF configuration"""

    enable_sfe: bool
    enable_ff: bool
    parameters: int
    psnr_db: float
    ssim: float


def run_ablation(cfg: TrainConfig, train_set: Dataset, eval_set: Dataset) -> List[AblationResult]:
    """Train and evaluate all four SFE x FF combinations with a shared seed"""
    results = []
    for enable_sfe, enable_ff in itertools.product((False, True), repeat=2):
        label = f"sfe{int(enable_sfe)}-ff{int(enable_ff)}"
        variant = cfg.replace(
            enable_sfe=enable_sfe,
            enable_ff=enable_ff,
            checkpoint_dir=str(Path(cfg.checkpoint_dir) / label),
        )
        logger.info("ablation %s", label)
        model = build_model(variant.model_config())
        train(model, train_set, variant)
        report = evaluate(ModelRestorer(model), eval_set)
        results.append(
            AblationResult(
                enable_sfe,
                enable_ff,
                count_parameters(model),
                report.mean_psnr,
                report.mean_ssim,
            )
        )
    return results


def ablation_csv(results: List[AblationResult]) -> str:
    """`sfe,ff,parameters,psnr_db,ssim` rows"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sfe", "ff", "parameters", "psnr_db", "ssim"])
    for result in results:
        writer.writerow(
            [
                int(result.enable_sfe),
                int(result.enable_ff),
                result.parameters,
                repr(result.psnr_db),
                repr(result.ssim),
            ]
        )
    return buffer.getvalue()


def write_ablation_csv(results: List[AblationResult], path: PathLike) -> None:
    """Write the ablation table atomically"""
    atomic_write_text(path, ablation_csv(results))
