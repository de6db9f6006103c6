"""Config-driven orchestration of the full adaptation flow.

Stages: pretrain on simulated source scenes (with scan-simulation
augmentation), generate pseudo labels for the unlabeled target scenes,
self-train on mixed scenes, and evaluate against target ground truth. A
source-only baseline (no scan simulation) is trained alongside so every
run reports the three ablation mIoUs. Everything is reproducible from
(config, seed); reports and checkpoints are byte-identical across reruns.

The config file is line-oriented ``key=value`` with dotted section
prefixes (for example ``vss.n_v=4``); see ``DEFAULT_CONFIG_TEXT`` for the
full key set.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    Aabb,
    AugmentConfig,
    ClassTaxonomy,
    RandomStream,
    StructuralClasses,
)
from .cuboidmix import CuboidMixConfig, TailCuboidQueue, compose_mixed_scene
from .errors import ConfigError, StageError
from .io import (
    FileFormat,
    load_manifest,
    load_scenes,
    read_point_file,
    detect_format,
    save_manifest,
    write_point_file,
)
from .metrics import ConfusionMatrix, accumulate_confusion, compute_iou, write_iou_csv
from .pseudo import PseudoLabelConfig, class_ratio, generate_pseudo_labels
from .scansim import FovConfig, ScanSimConfig, scan_and_jitter
from .scenegen import (
    TOY_STRUCTURAL,
    TOY_TAXONOMY,
    SceneSpec,
    generate_scene,
    make_template,
    template_names,
)
from .segmenter import (
    FeatureConfig,
    SegmenterModel,
    TrainConfig,
    extract_features,
    forward_scores,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
    train_pretrain,
    train_selftrain,
)

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(s: str) -> bool:
    try:
        return _BOOL[s.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {s!r}") from None


@dataclass
class PipelineConfig:
    """Everything a run needs, mirroring the config-file sections."""

    seed: int = 0
    out_dir: Path = Path("out")
    source_manifest: Path = Path("source_manifest.txt")
    target_manifest: Path = Path("target_manifest.txt")
    taxonomy: ClassTaxonomy = field(default_factory=lambda: TOY_TAXONOMY)
    structural: StructuralClasses = field(default_factory=lambda: TOY_STRUCTURAL)
    scan: ScanSimConfig = field(default_factory=ScanSimConfig)
    mix: CuboidMixConfig = field(default_factory=CuboidMixConfig)
    pseudo: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    selftrain: TrainConfig = field(default_factory=TrainConfig)


def parse_config_text(text: str, base: Path | None = None) -> PipelineConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val.strip()

    def pop(key, cast, default):
        if key not in values:
            return default
        raw = values.pop(key)
        try:
            return cast(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc

    def pop_path(key, default):
        raw = pop(key, str, None)
        if raw is None:
            return default
        p = Path(raw)
        return (base / p if base is not None and not p.is_absolute() else p)

    names = tuple(pop("taxonomy.names", lambda s: [p.strip() for p in s.split(",")], TOY_TAXONOMY.names))
    taxonomy = ClassTaxonomy(
        pop("taxonomy.name", str, TOY_TAXONOMY.name),
        names,
        pop("taxonomy.ignore", int, -1),
    )
    structural = StructuralClasses(
        pop("structural.floor", int, 0),
        pop("structural.ceiling", int, 1),
        pop("structural.wall", int, 2),
    )
    scan = ScanSimConfig(
        n_v=pop("vss.n_v", int, 4),
        fov=FovConfig(
            alpha_h=pop("vss.alpha_h", float, 180.0),
            alpha_v=pop("vss.alpha_v", float, 90.0),
            mode=pop("vss.mode", str, "fixed"),
            d_ref=pop("vss.d_ref", float, 2.0),
        ),
        bev_cell=pop("vss.bev_cell", float, 0.25),
        clearance=pop("vss.clearance", float, 0.1),
        theta_bin=pop("vss.theta_bin", float, 0.5),
        eps_d=pop("vss.eps_d", float, 0.05),
        delta_p=pop("vss.delta_p", float, 0.01),
    )
    mix = CuboidMixConfig(
        nx=pop("tacm.nx", int, 2),
        ny=pop("tacm.ny", int, 2),
        nz=pop("tacm.nz", int, 1),
        delta_phi=pop("tacm.delta_phi", float, 0.1),
        rho_s=pop("tacm.rho_s", float, 0.5),
        rho_m=pop("tacm.rho_m", float, 0.5),
        queue_cap=pop("tacm.queue_cap", int, 256),
        n_tail_classes=pop("tacm.n_tail_classes", int, 2),
        min_tail_cuboids=pop("tacm.min_tail_cuboids", int, 2),
    )
    pseudo = PseudoLabelConfig(
        mode=pop("pseudo.mode", str, "global_threshold"),
        threshold=pop("pseudo.threshold", float, 0.7),
        fraction=pop("pseudo.fraction", float, 0.3),
    )
    features = FeatureConfig(
        voxel_size=pop("features.voxel_size", float, 0.02),
        radius=pop("features.radius", float, 0.15),
    )
    augment = AugmentConfig(
        rotate=pop("augment.rotate", _parse_bool, True),
        flip=pop("augment.flip", _parse_bool, True),
        elastic=pop("augment.elastic", _parse_bool, True),
        jitter=pop("augment.jitter", _parse_bool, True),
        shuffle=pop("augment.shuffle", _parse_bool, True),
        elastic_spacing=pop("augment.elastic_spacing", float, 0.2),
        elastic_magnitude=pop("augment.elastic_magnitude", float, 0.05),
        jitter_range=pop("augment.jitter_range", float, 0.005),
    )

    def train_section(prefix, defaults: TrainConfig):
        return TrainConfig(
            learning_rate=pop(f"{prefix}.lr", float, defaults.learning_rate),
            iterations=pop(f"{prefix}.iterations", int, defaults.iterations),
            batch_size=pop(f"{prefix}.batch", int, defaults.batch_size),
            source_loss_weight=pop(f"{prefix}.lambda", float, defaults.source_loss_weight),
            momentum=pop(f"{prefix}.momentum", float, defaults.momentum),
            lr_decay_power=pop(f"{prefix}.lr_decay", float, defaults.lr_decay_power),
            regen_every=pop(f"{prefix}.regen_every", int, defaults.regen_every),
        )

    config = PipelineConfig(
        seed=pop("seed", int, 0),
        out_dir=pop_path("out_dir", Path("out")),
        source_manifest=pop_path("source_manifest", Path("source_manifest.txt")),
        target_manifest=pop_path("target_manifest", Path("target_manifest.txt")),
        taxonomy=taxonomy,
        structural=structural,
        scan=scan,
        mix=mix,
        pseudo=pseudo,
        features=features,
        augment=augment,
        pretrain=train_section("pretrain", TrainConfig()),
        selftrain=train_section("selftrain", TrainConfig()),
    )
    if values:
        raise ConfigError(f"unknown config keys: {sorted(values)}")
    return config


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), base=path.parent)


def config_text(config: PipelineConfig) -> str:
    """Serialize in the canonical key order (inverse of parsing)."""
    c = config
    lines = [
        f"seed={c.seed}",
        f"out_dir={c.out_dir}",
        f"source_manifest={c.source_manifest}",
        f"target_manifest={c.target_manifest}",
        f"taxonomy.name={c.taxonomy.name}",
        "taxonomy.names=" + ",".join(c.taxonomy.names),
        f"taxonomy.ignore={c.taxonomy.ignore_index}",
        f"structural.floor={c.structural.floor}",
        f"structural.ceiling={c.structural.ceiling}",
        f"structural.wall={c.structural.wall}",
        f"vss.n_v={c.scan.n_v}",
        f"vss.alpha_h={c.scan.fov.alpha_h!r}",
        f"vss.alpha_v={c.scan.fov.alpha_v!r}",
        f"vss.mode={c.scan.fov.mode}",
        f"vss.d_ref={c.scan.fov.d_ref!r}",
        f"vss.bev_cell={c.scan.bev_cell!r}",
        f"vss.clearance={c.scan.clearance!r}",
        f"vss.theta_bin={c.scan.theta_bin!r}",
        f"vss.eps_d={c.scan.eps_d!r}",
        f"vss.delta_p={c.scan.delta_p!r}",
        f"tacm.nx={c.mix.nx}",
        f"tacm.ny={c.mix.ny}",
        f"tacm.nz={c.mix.nz}",
        f"tacm.delta_phi={c.mix.delta_phi!r}",
        f"tacm.rho_s={c.mix.rho_s!r}",
        f"tacm.rho_m={c.mix.rho_m!r}",
        f"tacm.queue_cap={c.mix.queue_cap}",
        f"tacm.n_tail_classes={c.mix.n_tail_classes}",
        f"tacm.min_tail_cuboids={c.mix.min_tail_cuboids}",
        f"pseudo.mode={c.pseudo.mode}",
        f"pseudo.threshold={c.pseudo.threshold!r}",
        f"pseudo.fraction={c.pseudo.fraction!r}",
        f"features.voxel_size={c.features.voxel_size!r}",
        f"features.radius={c.features.radius!r}",
        f"augment.rotate={str(c.augment.rotate).lower()}",
        f"augment.flip={str(c.augment.flip).lower()}",
        f"augment.elastic={str(c.augment.elastic).lower()}",
        f"augment.jitter={str(c.augment.jitter).lower()}",
        f"augment.shuffle={str(c.augment.shuffle).lower()}",
        f"augment.elastic_spacing={c.augment.elastic_spacing!r}",
        f"augment.elastic_magnitude={c.augment.elastic_magnitude!r}",
        f"augment.jitter_range={c.augment.jitter_range!r}",
        f"pretrain.lr={c.pretrain.learning_rate!r}",
        f"pretrain.iterations={c.pretrain.iterations}",
        f"pretrain.batch={c.pretrain.batch_size}",
        f"pretrain.momentum={c.pretrain.momentum!r}",
        f"pretrain.lr_decay={c.pretrain.lr_decay_power!r}",
        f"pretrain.lambda={c.pretrain.source_loss_weight!r}",
        f"selftrain.lr={c.selftrain.learning_rate!r}",
        f"selftrain.iterations={c.selftrain.iterations}",
        f"selftrain.batch={c.selftrain.batch_size}",
        f"selftrain.momentum={c.selftrain.momentum!r}",
        f"selftrain.lr_decay={c.selftrain.lr_decay_power!r}",
        f"selftrain.regen_every={c.selftrain.regen_every}",
        f"selftrain.lambda={c.selftrain.source_loss_weight!r}",
    ]
    return "\n".join(lines) + "\n"


def save_config(config: PipelineConfig, path) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(config_text(config))


DEFAULT_CONFIG_TEXT = config_text(PipelineConfig())


# --- helpers ----------------------------------------------------------------

CKPT_SOURCE_ONLY = "checkpoint_source_only.bin"
CKPT_SCAN_PRETRAIN = "checkpoint_scan_pretrain.bin"
CKPT_FINAL = "checkpoint_final.bin"

# Fixed child-stream tags per stage keep stage subcommands and run-all in
# agreement about which draws each stage sees.
_TAG_SOURCE_ONLY = 0x501
_TAG_PRETRAIN = 0x502
_TAG_SELFTRAIN = 0x504
_TAG_SCAN = 0x505
_TAG_MIX = 0x506


def _map_scenes(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_losses(path, losses: np.ndarray) -> None:
    with open(path, "w", newline="\n") as f:
        for value in losses:
            f.write(f"{float(value)!r}\n")


def _load_domains(config: PipelineConfig):
    src_manifest = load_manifest(config.source_manifest)
    tgt_manifest = load_manifest(config.target_manifest)
    source = load_scenes(src_manifest, config.taxonomy)
    target = load_scenes(tgt_manifest, config.taxonomy)
    return src_manifest, tgt_manifest, source, target


def _evaluate(model, scenes, taxonomy, feature_config, threads=1):
    matrix = ConfusionMatrix.zeros(taxonomy)
    preds = _map_scenes(lambda s: predict_labels(model, s, feature_config), scenes, threads)
    for scene, pred in zip(scenes, preds):
        accumulate_confusion(matrix, pred, scene.labels)
    return compute_iou(matrix)


# --- stages -----------------------------------------------------------------


def stage_pretrain(config: PipelineConfig, with_scan_sim: bool = True) -> Path:
    """Train a model on the source scenes; returns the checkpoint path."""
    stage = "pretrain" if with_scan_sim else "source-only"
    try:
        _, _, source, _target = _load_domains(config)
        rng = RandomStream(config.seed).child(
            _TAG_PRETRAIN if with_scan_sim else _TAG_SOURCE_ONLY
        )
        model = SegmenterModel.zeros(config.taxonomy)
        result = train_pretrain(
            model,
            source,
            config.scan if with_scan_sim else None,
            config.structural,
            config.augment,
            config.features,
            config.pretrain,
            rng,
        )
        config.out_dir.mkdir(parents=True, exist_ok=True)
        name = CKPT_SCAN_PRETRAIN if with_scan_sim else CKPT_SOURCE_ONLY
        path = config.out_dir / name
        save_checkpoint(result.model, path)
        _write_losses(config.out_dir / f"losses_{stage.replace('-', '_')}.txt", result.losses)
        return path
    except Exception as exc:
        raise StageError(stage, exc) from exc


def stage_pseudo_label(config: PipelineConfig, threads: int = 1) -> Path:
    """Score target scenes with the pretrained model and write pseudo-label
    files (plus the class-ratio summary); returns the pseudo directory."""
    try:
        model = load_checkpoint(config.out_dir / CKPT_SCAN_PRETRAIN, config.taxonomy)
        tgt_manifest = load_manifest(config.target_manifest)
        scenes = load_scenes(tgt_manifest, config.taxonomy)
        pseudo_dir = config.out_dir / "pseudo"
        pseudo_dir.mkdir(parents=True, exist_ok=True)

        def label_one(scene):
            scores = forward_scores(model, extract_features(scene, config.features))
            return generate_pseudo_labels(scores, config.pseudo, config.taxonomy.ignore_index)

        labels = _map_scenes(label_one, scenes, threads)
        for (scene_id, _path), scene, lab in zip(tgt_manifest.entries, scenes, labels):
            write_point_file(
                scene.with_labels(lab), pseudo_dir / f"{scene_id}.ply", FileFormat.PLY_BINARY_LE
            )
        ratios = class_ratio(np.concatenate(labels), config.taxonomy)
        with open(pseudo_dir / "ratios.txt", "w", newline="\n") as f:
            for name, value in zip(config.taxonomy.names, ratios):
                f.write(f"{name}\t{float(value)!r}\n")
        return pseudo_dir
    except Exception as exc:
        raise StageError("pseudo-label", exc) from exc


def _load_pseudo_scenes(config: PipelineConfig):
    tgt_manifest = load_manifest(config.target_manifest)
    pseudo_dir = config.out_dir / "pseudo"
    scenes = []
    for scene_id, _path in tgt_manifest.entries:
        p = pseudo_dir / f"{scene_id}.ply"
        scenes.append(read_point_file(p, detect_format(p), config.taxonomy))
    return scenes


def stage_selftrain(config: PipelineConfig) -> Path:
    """Self-train from the pretrained checkpoint using pseudo-labeled
    target scenes; writes the final checkpoint and three mixed samples."""
    try:
        model = load_checkpoint(config.out_dir / CKPT_SCAN_PRETRAIN, config.taxonomy)
        src_manifest = load_manifest(config.source_manifest)
        source = load_scenes(src_manifest, config.taxonomy)
        pseudo_scenes = _load_pseudo_scenes(config)
        samples_dir = config.out_dir / "mixed_samples"
        samples_dir.mkdir(parents=True, exist_ok=True)

        def save_sample(it, cloud):
            if it < 3:
                write_point_file(cloud, samples_dir / f"mixed_{it:03d}.ply", FileFormat.PLY_BINARY_LE)

        rng = RandomStream(config.seed).child(_TAG_SELFTRAIN)
        result = train_selftrain(
            model,
            source,
            pseudo_scenes,
            config.scan,
            config.structural,
            config.mix,
            config.features,
            config.selftrain,
            rng,
            on_mixed=save_sample,
            pseudo_config=config.pseudo,
        )
        path = config.out_dir / CKPT_FINAL
        save_checkpoint(result.model, path)
        _write_losses(config.out_dir / "losses_selftrain.txt", result.losses)
        return path
    except Exception as exc:
        raise StageError("selftrain", exc) from exc


_EVAL_TAGS = (
    (CKPT_SOURCE_ONLY, "source_only"),
    (CKPT_SCAN_PRETRAIN, "scan_only"),
    (CKPT_FINAL, "full"),
)


def stage_evaluate(config: PipelineConfig, threads: int = 1) -> dict[str, float]:
    """Evaluate whichever checkpoints exist against target ground truth;
    writes one metrics CSV per model and returns tag -> mIoU."""
    try:
        tgt_manifest = load_manifest(config.target_manifest)
        scenes = load_scenes(tgt_manifest, config.taxonomy)
        mious: dict[str, float] = {}
        for ckpt, tag in _EVAL_TAGS:
            path = config.out_dir / ckpt
            if not path.is_file():
                continue
            model = load_checkpoint(path, config.taxonomy)
            ious, miou = _evaluate(model, scenes, config.taxonomy, config.features, threads)
            write_iou_csv(config.out_dir / f"metrics_{tag}.csv", config.taxonomy, ious, miou)
            mious[tag] = miou
        return mious
    except StageError:
        raise
    except Exception as exc:
        raise StageError("evaluate", exc) from exc


def stage_scan(config: PipelineConfig) -> Path:
    """Apply the scan simulation once to every source scene; writes the
    scanned clouds and a manifest into out/scanned."""
    try:
        src_manifest = load_manifest(config.source_manifest)
        scenes = load_scenes(src_manifest, config.taxonomy)
        out = config.out_dir / "scanned"
        out.mkdir(parents=True, exist_ok=True)
        rng = RandomStream(config.seed).child(_TAG_SCAN)
        entries = []
        for i, ((scene_id, _), scene) in enumerate(zip(src_manifest.entries, scenes)):
            scanned = scan_and_jitter(scene, config.scan, config.structural, rng.child(i))
            write_point_file(scanned, out / f"{scene_id}.ply", FileFormat.PLY_BINARY_LE)
            entries.append((scene_id, f"{scene_id}.ply"))
        save_manifest(out / "manifest.txt", "source", config.taxonomy.name, entries)
        return out
    except Exception as exc:
        raise StageError("scan", exc) from exc


def stage_mix(config: PipelineConfig, count: int = 5) -> Path:
    """Compose a few mixed scenes (source ground truth vs target labels or
    pseudo labels when present) into out/mixed for inspection."""
    try:
        _, tgt_manifest, source, target = _load_domains(config)
        pseudo_dir = config.out_dir / "pseudo"
        if pseudo_dir.is_dir():
            target = _load_pseudo_scenes(config)
        out = config.out_dir / "mixed"
        out.mkdir(parents=True, exist_ok=True)
        rng = RandomStream(config.seed).child(_TAG_MIX)
        ratios = class_ratio(np.concatenate([s.labels for s in target]), config.taxonomy)
        queue = TailCuboidQueue(config.mix.queue_cap)
        n = min(count, len(target))
        for i in range(n):
            src = source[int(rng.integers(0, len(source)))]
            result = compose_mixed_scene(src, target[i], ratios, config.mix, queue, rng)
            queue = result.queue
            write_point_file(result.mixed.cloud, out / f"mixed_{i:03d}.ply", FileFormat.PLY_BINARY_LE)
        return out
    except Exception as exc:
        raise StageError("mix", exc) from exc


# --- full run ---------------------------------------------------------------


@dataclass
class PipelineReport:
    status: str
    failed_stage: str | None
    mious: dict[str, float]
    out_dir: Path

    @property
    def complete(self) -> bool:
        return self.status == "complete"


def _write_report(config: PipelineConfig, report: PipelineReport, n_source: int, n_target: int) -> None:
    lines = [
        f"status={report.status}",
        f"seed={config.seed}",
        f"scenes_source={n_source}",
        f"scenes_target={n_target}",
    ]
    if report.failed_stage is not None:
        lines.append(f"failed_stage={report.failed_stage}")
    for tag in ("source_only", "scan_only", "full"):
        if tag in report.mious:
            lines.append(f"miou_{tag}={report.mious[tag]!r}")
        else:
            lines.append(f"miou_{tag}=incomplete")
    with open(config.out_dir / "report.txt", "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def run_pipeline(config: PipelineConfig, threads: int = 1) -> PipelineReport:
    """Execute every stage and write the run report.

    On a stage failure the report is still written, with the failed stage
    named and the missing mIoUs marked incomplete, then the tagged error
    is re-raised.
    """
    config.out_dir.mkdir(parents=True, exist_ok=True)
    n_source = n_target = 0
    mious: dict[str, float] = {}
    try:
        try:
            src_manifest = load_manifest(config.source_manifest)
            tgt_manifest = load_manifest(config.target_manifest)
        except Exception as exc:
            raise StageError("load", exc) from exc
        n_source, n_target = len(src_manifest), len(tgt_manifest)
        stage_pretrain(config, with_scan_sim=False)
        stage_pretrain(config, with_scan_sim=True)
        stage_pseudo_label(config, threads)
        stage_selftrain(config)
        mious = stage_evaluate(config, threads)
        report = PipelineReport("complete", None, mious, config.out_dir)
        _write_report(config, report, n_source, n_target)
        return report
    except StageError as exc:
        report = PipelineReport("failed", exc.stage, mious, config.out_dir)
        _write_report(config, report, n_source, n_target)
        raise


# --- scene-set generation and the toy benchmark ------------------------------


def generate_scene_set(
    out_dir,
    count: int,
    seed: int,
    role: str,
    templates: tuple[str, ...] | None = None,
    density: float = 200.0,
    taxonomy: ClassTaxonomy = TOY_TAXONOMY,
    fmt: FileFormat = FileFormat.PLY_BINARY_LE,
) -> Path:
    """Generate ``count`` template scenes and a manifest; returns the
    manifest path. Scene i uses template i mod len(templates) and the
    child stream i, so sets are reproducible and extendable."""
    out_dir = Path(out_dir)
    scene_dir = out_dir / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)
    templates = templates or template_names()
    root = RandomStream(seed)
    ext = "ply" if fmt != FileFormat.XYZL_TEXT else "xyzl"
    entries = []
    for i in range(count):
        rng = root.child(i)
        spec = make_template(templates[i % len(templates)], rng, density=density)
        cloud = generate_scene(spec, taxonomy, rng)
        name = f"scene_{i:04d}.{ext}"
        write_point_file(cloud, scene_dir / name, fmt)
        entries.append((f"scene_{i:04d}", f"scenes/{name}"))
    manifest_path = out_dir / "manifest.txt"
    save_manifest(manifest_path, role, taxonomy.name, entries)
    return manifest_path


# Scene builders for the toy benchmark. Source rooms keep furniture near
# the walls; target rooms cluster furniture centrally and carry more tail
# objects, so the two domains differ in layout statistics as well as in
# point pattern (the target set is additionally scanned and jittered with
# a harsher, hidden configuration).

_TABLE, _CHAIR, _LAMP = 3, 4, 5


def _bench_box(cx, cy, w, d, h):
    return Aabb((cx - w / 2, cy - d / 2, 0.0), (cx + w / 2, cy + d / 2, h))


def _bench_source_spec(rng: RandomStream, density: float) -> SceneSpec:
    w = 5.0 + float(rng.uniform(-0.4, 0.4))
    d = 4.6 + float(rng.uniform(-0.4, 0.4))
    slots = [
        (1.3, 0.62), (w - 1.3, 0.62), (1.3, d - 0.62), (w - 1.3, d - 0.62),
        (0.62, d / 2), (w - 0.62, d / 2),
    ]
    order = rng.permutation(len(slots))
    kinds = [_TABLE, _TABLE, _CHAIR, _CHAIR]
    if rng.random() < 0.4:
        kinds.append(_LAMP)
    furniture = []
    for slot_idx, cls in zip(order, kinds):
        sx, sy = slots[int(slot_idx)]
        cx = sx + float(rng.uniform(-0.12, 0.12))
        cy = sy + float(rng.uniform(-0.12, 0.12))
        if cls == _TABLE:
            furniture.append((_bench_box(cx, cy, 0.9, 0.7, 0.75), cls))
        elif cls == _CHAIR:
            furniture.append((_bench_box(cx, cy, 0.5, 0.5, 0.42), cls))
        else:
            furniture.append((_bench_box(cx, cy, 0.3, 0.3, 1.8), cls))
    return SceneSpec(width=w, depth=d, height=2.5, furniture=tuple(furniture), density=density)


def _bench_target_spec(rng: RandomStream, density: float) -> SceneSpec:
    w = 5.0 + float(rng.uniform(-0.4, 0.4))
    d = 4.6 + float(rng.uniform(-0.4, 0.4))
    cx0, cy0 = w / 2, d / 2
    slots = [
        (cx0 - 1.15, cy0 - 0.95), (cx0 + 1.15, cy0 - 0.95),
        (cx0 - 1.15, cy0 + 0.95), (cx0 + 1.15, cy0 + 0.95),
        (cx0, cy0),
    ]
    order = rng.permutation(len(slots))
    kinds = [_TABLE, _TABLE, _CHAIR, _LAMP, _LAMP]
    furniture = []
    for slot_idx, cls in zip(order, kinds):
        sx, sy = slots[int(slot_idx)]
        cx = sx + float(rng.uniform(-0.1, 0.1))
        cy = sy + float(rng.uniform(-0.1, 0.1))
        if cls == _TABLE:
            furniture.append((_bench_box(cx, cy, 0.9, 0.7, 0.75), cls))
        elif cls == _CHAIR:
            furniture.append((_bench_box(cx, cy, 0.5, 0.5, 0.42), cls))
        else:
            furniture.append((_bench_box(cx, cy, 0.3, 0.3, 1.8), cls))
    return SceneSpec(width=w, depth=d, height=2.5, furniture=tuple(furniture), density=density)


# Hidden scan configuration used only while constructing the toy target
# domain; the pipeline config never sees it.
_HIDDEN_TARGET_SCAN = ScanSimConfig(
    n_v=1,
    fov=FovConfig(alpha_h=100.0, alpha_v=50.0, mode="fixed"),
    delta_p=0.02,
)


def make_toy_benchmark(
    out_dir,
    seed: int = 0,
    n_source: int = 20,
    n_target: int = 20,
    density: float = 45.0,
) -> Path:
    """Build the desk-scale benchmark: clean source scenes, degraded
    target scenes, manifests, and a tuned config. Returns the config path."""
    out_dir = Path(out_dir)
    src_dir = out_dir / "source" / "scenes"
    tgt_dir = out_dir / "target" / "scenes"
    src_dir.mkdir(parents=True, exist_ok=True)
    tgt_dir.mkdir(parents=True, exist_ok=True)
    root = RandomStream(seed)

    src_entries = []
    for i in range(n_source):
        rng = root.child(i)
        cloud = generate_scene(_bench_source_spec(rng, density), TOY_TAXONOMY, rng)
        name = f"scene_{i:04d}.ply"
        write_point_file(cloud, src_dir / name, FileFormat.PLY_BINARY_LE)
        src_entries.append((f"scene_{i:04d}", f"scenes/{name}"))
    save_manifest(out_dir / "source" / "manifest.txt", "source", TOY_TAXONOMY.name, src_entries)

    tgt_entries = []
    for i in range(n_target):
        rng = root.child(10_000 + i)
        clean = generate_scene(_bench_target_spec(rng, density), TOY_TAXONOMY, rng)
        degraded = scan_and_jitter(clean, _HIDDEN_TARGET_SCAN, TOY_STRUCTURAL, rng)
        name = f"scene_{i:04d}.ply"
        write_point_file(degraded, tgt_dir / name, FileFormat.PLY_BINARY_LE)
        tgt_entries.append((f"scene_{i:04d}", f"scenes/{name}"))
    save_manifest(out_dir / "target" / "manifest.txt", "target", TOY_TAXONOMY.name, tgt_entries)

    # paths are written relative to the config file so the benchmark
    # directory can be moved or renamed freely
    config = PipelineConfig(
        seed=seed,
        out_dir=Path("out"),
        source_manifest=Path("source/manifest.txt"),
        target_manifest=Path("target/manifest.txt"),
        scan=ScanSimConfig(delta_p=0.02),
        features=FeatureConfig(voxel_size=0.02, radius=0.2),
        augment=AugmentConfig(elastic=False),
        pseudo=PseudoLabelConfig(mode="per_class_fraction", fraction=0.3),
        pretrain=TrainConfig(
            learning_rate=0.05, iterations=400, batch_size=3,
            momentum=0.95, lr_decay_power=0.9,
        ),
        selftrain=TrainConfig(
            learning_rate=0.02, iterations=400, batch_size=1,
            momentum=0.95, lr_decay_power=0.9, source_loss_weight=0.5,
        ),
    )
    config_path = out_dir / "toy.cfg"
    save_config(config, config_path)
    return config_path
