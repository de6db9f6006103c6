"""Train the reference segmenter briefly, generate pseudo labels under
both retention modes, and score predictions with the IoU metrics.

Run:

    python demos/04_pseudo_labels_and_metrics.py
"""

import numpy as np

from scanmix import (
    AugmentConfig,
    ConfusionMatrix,
    FeatureConfig,
    PseudoLabelConfig,
    RandomStream,
    SegmenterModel,
    TOY_STRUCTURAL,
    TOY_TAXONOMY,
    TrainConfig,
    accumulate_confusion,
    compute_iou,
    extract_features,
    forward_scores,
    generate_pseudo_labels,
    generate_scene,
    make_template,
    predict_labels,
    train_pretrain,
)

rng = RandomStream(5)
train_scenes = [
    generate_scene(make_template("cluttered", rng.child(i), density=60.0), TOY_TAXONOMY, rng.child(100 + i))
    for i in range(6)
]
held_out = generate_scene(make_template("cluttered", rng.child(50), density=60.0), TOY_TAXONOMY, rng.child(150))

features = FeatureConfig(voxel_size=0.02, radius=0.2)
config = TrainConfig(learning_rate=0.05, iterations=150, batch_size=2, momentum=0.95, lr_decay_power=0.9)
result = train_pretrain(
    SegmenterModel.zeros(TOY_TAXONOMY), train_scenes, None, TOY_STRUCTURAL,
    AugmentConfig(elastic=False), features, config, rng,
)
print(f"trained {config.iterations} iterations, loss {result.losses[0]:.3f} -> {result.losses[-1]:.3f}")

scores = forward_scores(result.model, extract_features(held_out, features))
for pcfg in (
    PseudoLabelConfig(mode="global_threshold", threshold=0.7),
    PseudoLabelConfig(mode="per_class_fraction", fraction=0.3),
):
    pseudo = generate_pseudo_labels(scores, pcfg, TOY_TAXONOMY.ignore_index)
    kept = pseudo != TOY_TAXONOMY.ignore_index
    accuracy = (pseudo[kept] == held_out.labels[kept]).mean()
    print(
        f"{pcfg.mode:20s} retains {kept.mean():6.1%} of points, "
        f"accuracy on retained {accuracy:.1%}"
    )

matrix = ConfusionMatrix.zeros(TOY_TAXONOMY)
accumulate_confusion(matrix, predict_labels(result.model, held_out, features), held_out.labels)
ious, miou = compute_iou(matrix)
print("\nheld-out IoU per class:")
for name, value in zip(TOY_TAXONOMY.names, ious):
    shown = f"{value:.3f}" if np.isfinite(value) else "undefined"
    print(f"  {name:8s} {shown}")
print(f"mIoU {miou:.3f}")
