"""Command-line entry point of the visuo-tactile toolkit."""

import argparse
import json
import logging
import shutil
import sys
import tempfile
import traceback
import uuid
from contextlib import contextmanager
from itertools import islice
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from config import (
    COMMANDS,
    RunConfig,
    config_hash,
    get_default_config,
    read_config_file,
    resolve_config,
    validate_run_config,
)
from cvtp import encode_tactile_clip, encode_visual_clip, load_cvtp, retrieval_accuracy, save_cvtp, train_cvtp
from data import PairDataset, load_manifest, synthesize_dataset, write_dataset
from data.image_io import read_frame, write_frame, write_unit_gray
from data.types import PairSample
from metrics import RoughnessOracle, evaluate_pairs, write_report
from tasks import (
    ImageToTouchTask,
    ShadingTask,
    StylizeTask,
    TaskRequest,
    TouchToImageTask,
    load_bundle,
    save_bundle,
    train_task,
)
from tasks.bundle import ModelBundle
from utils.errors import (
    CheckpointError,
    MissingArgumentError,
    ToolkitError,
    UnknownCommandError,
    ValidationError,
)
from utils.logging_config import RunLogger, setup_logging
from utils.rng import RngStreams, configure_determinism

SIDECAR_FILE = "run.json"
SAMPLES_FILE = "samples.json"
CVTP_FILE = "cvtp.vtck"
SIDECAR_VERSION = 1


class ToolkitArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports problems as toolkit errors instead of exiting."""

    def error(self, message: str):
        if "required" in message:
            raise MissingArgumentError(message)
        raise ValidationError(message)


class VisuoTactileToolkit:
    """Runs one toolkit command with run logging, staged outputs and a sidecar."""

    def __init__(self, config: RunConfig, argv: Optional[Sequence[str]] = None, run_id: Optional[str] = None):
        """Initialize the toolkit for one command.

        Args:
            config: Resolved and validated run configuration
            argv: Command line that produced ``config``, recorded in the sidecar
            run_id: Optional run ID for logging
        """
        self.config = config
        self.command = config.command
        self.argv = list(argv or [])
        self.config_hash = config_hash(config)
        self.streams = RngStreams(config.seed)
        self.progress = not config.quiet and sys.stderr.isatty()

        if run_id is None:
            run_id = str(uuid.uuid4())[:8]
        self.run_id = run_id
        self.run_logger: RunLogger = setup_logging(run_id, config.debug, config.log_dir)
        self.logger = logging.getLogger("vt.cli")

        configure_determinism(config.threads)
        self.run_logger.log_config(self.command, config.model_dump(mode="json"), self.config_hash)

    def run(self) -> Dict[str, Any]:
        """Execute the command; outputs appear under ``output_dir`` only on success.

        Returns:
            Command results, also stored in the sidecar
        """
        handlers = {
            "synth-data": self.synth_data,
            "train-cvtp": self.train_cvtp,
            "train-diffusion": self.train_diffusion,
            "sample": self.sample,
            "stylize": self.stylize,
            "shade": self.shade,
            "evaluate": self.evaluate,
        }
        self.logger.info(f"Running {self.command} (config {self.config_hash[:12]}, seed {self.config.seed})")
        try:
            with staged_output(Path(self.config.output_dir), self.config.overwrite) as staging:
                results = handlers[self.command](staging)
                self._write_sidecar(staging, results)
        except ToolkitError as e:
            self.run_logger.log_error(e.code, e.message, {"command": self.command})
            self.run_logger.finalize_run({"command": self.command, "status": "failed"})
            raise
        except Exception as e:
            self.logger.error(traceback.format_exc())
            self.run_logger.log_error(ToolkitError.code, f"{type(e).__name__}: {e}", {"command": self.command})
            self.run_logger.finalize_run({"command": self.command, "status": "failed"})
            raise
        self.run_logger.log_artifact(self.command, Path(self.config.output_dir))
        self.run_logger.finalize_run({"command": self.command, "status": "success"})
        return results

    def _write_sidecar(self, directory: Path, results: Dict[str, Any]) -> None:
        payload = {
            "version": SIDECAR_VERSION,
            "command": self.command,
            "argv": self.argv,
            "seed": self.config.seed,
            "config_hash": self.config_hash,
            "config": self.config.model_dump(mode="json"),
            "results": results,
        }
        with open(directory / SIDECAR_FILE, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(payload, sort_keys=True, indent=2, default=float) + "\n")

    # Data

    def _samples(self, half_window: int) -> List[PairSample]:
        samples = load_manifest(self.config.dataset, half_window)
        if self.config.data.limit:
            samples = islice(samples, self.config.data.limit)
        return list(samples)

    def _dataset(self) -> PairDataset:
        return PairDataset(self._samples(self.config.cvtp.encoder.window // 2))

    def synth_data(self, out: Path) -> Dict[str, Any]:
        data = self.config.data
        frames = data.frames_per_touch or self.config.cvtp.encoder.window + 2
        pairs = synthesize_dataset(
            data.pairs,
            self.config.seed,
            num_classes=data.num_classes,
            frames=frames,
            image_size=data.image_size,
            occluder=data.occluder,
            albedo=data.albedo,
            progress=self.progress,
        )
        metadata = {
            "seed": self.config.seed,
            "num_classes": data.num_classes,
            "frames_per_touch": frames,
            "occluder": data.occluder,
            "albedo": list(data.albedo) if data.albedo else None,
        }
        write_dataset(out, pairs, metadata)
        return {"pairs": len(pairs), "frames_per_touch": frames}

    # Training

    def train_cvtp(self, out: Path) -> Dict[str, Any]:
        dataset = self._dataset()
        model = train_cvtp(
            dataset,
            self.config.cvtp.encoder,
            self.config.cvtp.train,
            self.streams,
            run_logger=self.run_logger,
            progress=self.progress,
        )
        visual = encode_visual_clip([s.visual for s in dataset.samples], model.visual_encoder)
        tactile = encode_tactile_clip([s.tactile for s in dataset.samples], model.tactile_encoder)
        retrieval = retrieval_accuracy(visual, tactile)
        self.run_logger.log_event("retrieval", retrieval)

        save_cvtp(out / CVTP_FILE, model, {"retrieval": retrieval, "config_hash": self.config_hash})
        return {"steps": model.step, "losses": model.losses, "retrieval": retrieval}

    def train_diffusion(self, out: Path) -> Dict[str, Any]:
        cvtp_model = load_cvtp(self.config.cvtp_checkpoint) if self.config.cvtp_checkpoint else None
        encoder_config = cvtp_model.encoder_config if cvtp_model else self.config.cvtp.encoder
        dataset = PairDataset(self._samples(encoder_config.window // 2))
        num_classes = max(self.config.data.num_classes, max(dataset.labels) + 1)

        bundle = train_task(
            self.config.task,
            dataset,
            self.config.diffusion.train,
            self.config.diffusion.denoiser,
            self.config.codec,
            encoder_config,
            self.config.diffusion.make_schedule(),
            self.config.guidance(),
            self.streams,
            num_classes,
            cvtp_model=cvtp_model,
            run_logger=self.run_logger,
            progress=self.progress,
        )
        bundle.metadata["config_hash"] = self.config_hash
        save_bundle(out, bundle)
        return {"steps": bundle.metadata["step"], "losses": bundle.metadata["losses"], "fingerprint": bundle.fingerprint}

    # Inference

    def _bundle(self) -> ModelBundle:
        bundle = load_bundle(self.config.checkpoint)
        if not bundle.verify_fingerprint():
            raise CheckpointError(f"bundle {self.config.checkpoint} does not reproduce its stored fingerprint")
        return bundle

    def _bundle_samples(self, bundle: ModelBundle) -> List[PairSample]:
        samples = self._samples(bundle.encoder_config.window // 2)
        if not samples:
            raise ValidationError(f"dataset {self.config.dataset} has no entries")
        return samples

    def _request(self, bundle: ModelBundle, sample: PairSample, generator, **fields) -> TaskRequest:
        return TaskRequest(
            bundle=bundle,
            generator=generator,
            tactile=sample.tactile,
            visual=sample.visual,
            reflectance=sample.reflectance,
            reference=sample.reference,
            label=sample.label,
            steps=self.config.sampling.steps,
            guidance_scale=self.config.sampling.guidance_scale,
            **fields,
        )

    def _write_index(self, out: Path, bundle: ModelBundle, entries: List[Dict[str, Any]], **extra) -> None:
        payload = {
            "command": self.command,
            "direction": bundle.task_spec.direction,
            "target_modality": bundle.task_spec.target_modality,
            "bundle_fingerprint": bundle.fingerprint,
            "entries": entries,
            **extra,
        }
        with open(out / SAMPLES_FILE, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def sample(self, out: Path) -> Dict[str, Any]:
        bundle = self._bundle()
        task = TouchToImageTask() if bundle.task_spec.direction == "touch_to_image" else ImageToTouchTask()
        entries = []
        for i, sample in enumerate(self._bundle_samples(bundle)):
            request = self._request(bundle, sample, self.streams.torch_generator("sample", i))
            image = task.execute(request).unwrap()["image"]
            write_frame(image, out / f"{sample.entry_id}.png")
            entries.append({"id": sample.entry_id, "file": f"{sample.entry_id}.png",
                            "partner_id": sample.entry_id, "reference_id": sample.entry_id, "label": sample.label})
        self._write_index(out, bundle, entries)
        self.logger.info(f"Sampled {len(entries)} {bundle.task_spec.target_modality} frames")
        return {"samples": len(entries)}

    def stylize(self, out: Path) -> Dict[str, Any]:
        bundle = self._bundle()
        samples = self._bundle_samples(bundle)
        level = bundle.task_spec.resolve_level(bundle.schedule.timesteps, self.config.sampling.level)
        task = StylizeTask()
        entries = []
        for i, sample in enumerate(samples):
            target = samples[(i + self.config.sampling.touch_offset) % len(samples)]
            request = self._request(bundle, target, self.streams.torch_generator("sdedit", i),
                                    image=sample.visual.center, level=level)
            image = task.execute(request).unwrap()["image"]
            write_frame(image, out / f"{sample.entry_id}.png")
            entries.append({"id": sample.entry_id, "file": f"{sample.entry_id}.png",
                            "partner_id": target.entry_id, "reference_id": target.entry_id, "label": target.label})
        self._write_index(out, bundle, entries, level=level)
        return {"samples": len(entries), "level": level}

    def shade(self, out: Path) -> Dict[str, Any]:
        bundle = self._bundle()
        task = ShadingTask()
        entries = []
        for i, sample in enumerate(self._bundle_samples(bundle)):
            request = self._request(bundle, sample, self.streams.torch_generator("sample", i))
            data = task.execute(request).unwrap()
            write_frame(data["image"], out / f"{sample.entry_id}.png")
            np.save(out / f"{sample.entry_id}_shading.npy", data["shading"])
            write_unit_gray(np.clip(data["shading"], 0.0, 1.0), out / f"{sample.entry_id}_shading.png")
            entries.append({
                "id": sample.entry_id,
                "file": f"{sample.entry_id}.png",
                "shading": f"{sample.entry_id}_shading.npy",
                "shading_variance": float(np.var(data["shading"])),
                "partner_id": sample.entry_id,
                "reference_id": sample.entry_id,
                "label": sample.label,
            })
        self._write_index(out, bundle, entries)
        return {"samples": len(entries)}

    # Evaluation

    def evaluate(self, out: Path) -> Dict[str, Any]:
        samples_dir = Path(self.config.samples)
        index_file = samples_dir / SAMPLES_FILE
        if not index_file.is_file():
            raise MissingArgumentError(f"{samples_dir} holds no {SAMPLES_FILE}; run sample, stylize or shade first")
        with open(index_file, "r", encoding="utf-8") as f:
            index = json.load(f)

        cvtp_model = load_cvtp(self.config.cvtp_checkpoint)
        by_id = {s.entry_id: s for s in self._samples(cvtp_model.encoder_config.window // 2)}
        target = index["target_modality"]
        partner_modality = "tactile" if target == "visual" else "visual"

        def centre(sample: PairSample):
            return getattr(sample, target).center

        missing = [e["id"] for e in index["entries"] if e["partner_id"] not in by_id or e["reference_id"] not in by_id]
        if missing:
            raise ValidationError(f"{len(missing)} sampled entries are not in {self.config.dataset} (e.g. {missing[0]})")

        generated = [read_frame(samples_dir / e["file"]) for e in index["entries"]]
        reference = [centre(by_id[e["reference_id"]]) for e in index["entries"]]
        partners = [getattr(by_id[e["partner_id"]], partner_modality) for e in index["entries"]]
        labels = [e["label"] for e in index["entries"]]

        oracle = RoughnessOracle().fit([centre(s) for s in by_id.values()], [s.label for s in by_id.values()])
        report, pairs = evaluate_pairs(
            generated,
            reference,
            partners,
            cvtp_model,
            oracle,
            target_modality=target,
            labels=labels,
            config_hash=self.config_hash,
            bundle_fingerprint=index.get("bundle_fingerprint"),
        )
        write_report(out, report, pairs)
        self.run_logger.log_event("metric_report", {"metrics": report.values, "counts": report.counts})
        return {"metrics": report.values}


@contextmanager
def staged_output(target: Path, overwrite: bool = False) -> Iterator[Path]:
    """Yield a staging directory next to ``target`` and move it into place on success."""
    if target.exists() and (not target.is_dir() or any(target.iterdir())) and not overwrite:
        raise ValidationError(f"output {target} already exists and is not empty (pass --overwrite)")
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{target.name}.staging-", dir=target.parent))
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target) if target.is_dir() else target.unlink()
    staging.rename(target)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (a run.json sidecar also works)")
    parser.add_argument("--seed", type=int, help="64-bit seed of all random streams")
    parser.add_argument("--threads", type=int, help="Torch intra-op threads; 1 is fully deterministic")
    parser.add_argument("--out", dest="output_dir", help="Output directory")
    parser.add_argument("--log-dir", help="Directory receiving run logs")
    parser.add_argument("--debug", action="store_true", default=None, help="Enable debug logging")
    parser.add_argument("--quiet", action="store_true", default=None, help="Disable progress bars")
    parser.add_argument("--overwrite", action="store_true", default=None, help="Replace an existing output")
    parser.add_argument("--limit", type=int, help="Use only the first N dataset entries")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backbone", choices=["resnet18", "tiny"], help="Clip encoder backbone")
    parser.add_argument("--window", type=int, help="Frames per clip (odd)")
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--batch-size", type=int, help="Training batch size")
    parser.add_argument("--lr", type=float, help="Learning rate")


def build_parser() -> argparse.ArgumentParser:
    parser = ToolkitArgumentParser(prog="main.py", description="Visuo-tactile generation toolkit")
    subparsers = parser.add_subparsers(dest="command", metavar="command")

    synth = subparsers.add_parser("synth-data", help="Write a synthetic visuo-tactile dataset")
    _add_common(synth)
    synth.add_argument("--pairs", type=int, help="Number of pairs")
    synth.add_argument("--classes", type=int, help="Roughness classes")
    synth.add_argument("--image-size", type=int, help="Frame size in pixels")
    synth.add_argument("--frames", type=int, help="Frames per touch (odd)")
    synth.add_argument("--window", type=int, help="Clip window the dataset is meant for")
    synth.add_argument("--occluder", action="store_true", default=None, help="Add a static hand occluder and masks")
    synth.add_argument("--albedo", type=_albedo, help="Flat albedo r,g,b in [0, 1]")

    cvtp = subparsers.add_parser("train-cvtp", help="Contrastive visuo-tactile pretraining")
    _add_common(cvtp)
    cvtp.add_argument("--dataset", help="Dataset root")
    _add_model_flags(cvtp)
    cvtp.add_argument("--bank-size", type=int, help="Memory bank capacity K")
    cvtp.add_argument("--temperature", type=float, help="InfoNCE temperature τ")

    diffusion = subparsers.add_parser("train-diffusion", help="Train a conditional diffusion model")
    _add_common(diffusion)
    diffusion.add_argument("--dataset", help="Dataset root")
    diffusion.add_argument("--cvtp", dest="cvtp_checkpoint", help="CVTP checkpoint initialising the condition encoder")
    _add_model_flags(diffusion)
    diffusion.add_argument("--direction", choices=["touch_to_image", "image_to_touch"])
    diffusion.add_argument("--hand-free", action="store_true", default=None, help="Mask hand pixels out of the loss")
    diffusion.add_argument("--concat", choices=["none", "reflectance", "reference"], help="Concatenated latent input")
    diffusion.add_argument("--condition", choices=["clip", "single_frame", "material_label", "none"])
    diffusion.add_argument("--timesteps", type=int, help="Diffusion steps T")
    diffusion.add_argument("--denoiser", choices=["unet", "tiny"], help="Denoiser architecture")
    diffusion.add_argument("--base-channels", type=int, help="U-Net base width")
    diffusion.add_argument("--codec", choices=["identity", "pool", "learned"], help="Codec kind")
    diffusion.add_argument("--codec-factor", type=int, help="Codec downsampling factor")
    diffusion.add_argument("--codec-weights", help="Learned codec archive")
    diffusion.add_argument("--guidance-scale", type=float, help="Default guidance scale s stored in the bundle")
    diffusion.add_argument("--drop-prob", type=float, help="Condition drop probability")

    for name, help_text in (
        ("sample", "Generate the target modality for every dataset entry"),
        ("stylize", "Restyle dataset images with the touch of another entry"),
        ("shade", "Estimate shading from reflectance and touch"),
    ):
        command = subparsers.add_parser(name, help=help_text)
        _add_common(command)
        command.add_argument("--checkpoint", help="Model bundle directory")
        command.add_argument("--dataset", help="Dataset root supplying the conditioning inputs")
        command.add_argument("--steps", type=int, help="Sampling steps")
        command.add_argument("--guidance-scale", type=float, help="Guidance scale s")
        if name == "stylize":
            command.add_argument("--level", type=int, help="Noise level N in [0, T]; T/2 by default")
            command.add_argument("--touch-offset", type=int, help="Use the touch of entry i + offset")

    evaluate = subparsers.add_parser("evaluate", help="Score generated samples")
    _add_common(evaluate)
    evaluate.add_argument("--samples", help="Output directory of sample, stylize or shade")
    evaluate.add_argument("--dataset", help="Dataset the samples were drawn from")
    evaluate.add_argument("--cvtp", dest="cvtp_checkpoint", help="CVTP checkpoint for the cosine score and features")
    return parser


def _albedo(text: str):
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"albedo must be r,g,b, got {text}") from e
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"albedo must have three components, got {text}")
    return values


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config overrides from parsed flags; unset flags are ``None`` and ignored."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    training = args.command == "train-diffusion"
    overrides = {
        "seed": get("seed"),
        "threads": get("threads"),
        "dataset": get("dataset"),
        "checkpoint": get("checkpoint"),
        "cvtp_checkpoint": get("cvtp_checkpoint"),
        "samples": get("samples"),
        "output_dir": get("output_dir"),
        "log_dir": get("log_dir"),
        "debug": get("debug"),
        "quiet": get("quiet"),
        "overwrite": get("overwrite"),
        "data": {
            "pairs": get("pairs"),
            "num_classes": get("classes"),
            "image_size": get("image_size"),
            "frames_per_touch": get("frames"),
            "occluder": get("occluder"),
            "albedo": get("albedo"),
            "limit": get("limit"),
        },
        "codec": {"kind": get("codec"), "factor": get("codec_factor"), "weights": get("codec_weights")},
        "cvtp": {
            "encoder": {"backbone": get("backbone"), "window": get("window"), "temperature": get("temperature")},
            "train": {"bank_size": get("bank_size")},
        },
        "diffusion": {
            "timesteps": get("timesteps"),
            "drop_prob": get("drop_prob"),
            "denoiser": {"kind": get("denoiser"), "base_channels": get("base_channels")},
        },
        "task": {
            "direction": get("direction"),
            "hand_free": get("hand_free"),
            "concat_source": get("concat"),
            "condition_source": get("condition"),
            "guidance_scale": get("guidance_scale") if training else None,
        },
        "sampling": {
            "steps": get("steps"),
            "guidance_scale": None if training else get("guidance_scale"),
            "level": get("level"),
            "touch_offset": get("touch_offset"),
        },
    }
    train_section = overrides["cvtp"] if args.command == "train-cvtp" else overrides["diffusion"]
    train_section.setdefault("train", {}).update(
        {"epochs": get("epochs"), "batch_size": get("batch_size"), "lr": get("lr")}
    )
    return overrides


def parse_run_config(argv: Sequence[str]) -> RunConfig:
    """Resolve and validate the config of a command line: defaults < --config file < flags."""
    if not argv:
        raise MissingArgumentError(f"no command given; expected one of {', '.join(COMMANDS)}")
    if not argv[0].startswith("-") and argv[0] not in COMMANDS:
        raise UnknownCommandError(f"unknown command '{argv[0]}'; expected one of {', '.join(COMMANDS)}")
    args = build_parser().parse_args(list(argv))
    if args.command is None:
        raise MissingArgumentError(f"no command given; expected one of {', '.join(COMMANDS)}")

    file_config = read_config_file(args.config) if args.config else {}
    if "config_hash" in file_config and "config" in file_config:
        file_config = file_config["config"]
    config = resolve_config(get_default_config(), file_config, flag_overrides(args))
    return validate_run_config(config, args.command)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for command-line usage."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = parse_run_config(argv)
        toolkit = VisuoTactileToolkit(config, argv)
        results = toolkit.run()
        summary = {k: v for k, v in results.items() if k != "losses"}
        print(json.dumps({"command": config.command, "output": config.output_dir, **summary}, default=float))
        return 0
    except ToolkitError as e:
        print(e.one_line(), file=sys.stderr)
        return e.exit_status
    except Exception as e:
        print(ToolkitError(f"{type(e).__name__}: {e}").one_line(), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
