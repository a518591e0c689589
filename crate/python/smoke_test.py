"""Exercises the ppg_har extension end to end on a tiny synthetic set.

Build and install first:
    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""

import math
import random
import sys
import tempfile
from pathlib import Path

import ppg_har

FS = 256.0
RATES = {"walk": 1.5, "run": 2.6, "bike_low": 1.2, "bike_high": 2.2}


def record(label, seed, seconds=20):
    rng = random.Random(seed)
    rate = RATES[label]
    return [
        math.sin(2 * math.pi * rate * i / FS) + 0.05 * rng.gauss(0, 1) + 0.3 * math.sin(2 * math.pi * 50 * i / FS)
        for i in range(int(seconds * FS))
    ]


def main():
    assert ppg_har.LABELS == ["walk", "run", "bike_low", "bike_high"]

    # 600 s at 256 Hz, 8 s windows every 2 s
    assert len(ppg_har.segment([0.0] * (600 * 256), FS)) == 297

    embedder = ppg_har.StubEmbedder(seed=3)
    features, labels = [], []
    for label in ppg_har.LABELS:
        for seed in range(3):
            clean = ppg_har.lowpass(record(label, seed), FS)
            for window in ppg_har.segment(clean, FS):
                image = ppg_har.rasterize(window)
                assert len(image) == 299 and len(image[0]) == 299
                features.append(embedder.embed(image))
                labels.append(label)
    assert all(len(f) == 2048 for f in features)
    print(f"{len(features)} windows embedded")

    train, val, test = ppg_har.split(labels, seed=1)
    assert sorted(train + val + test) == list(range(len(labels)))
    pick = lambda idx: ([features[i] for i in idx], [labels[i] for i in idx])
    x_train, y_train = pick(train)
    x_test, y_test = pick(test)

    svm = ppg_har.SvmClassifier.fit(x_train, y_train, c=10.0)
    svm_acc = sum(p == t for p, t in zip(svm.predict(x_test), y_test)) / len(y_test)
    print(f"svm test accuracy {svm_acc:.3f} (gamma {svm.gamma:.3g})")

    head = ppg_har.SoftmaxHead.train(x_train, y_train, steps=2000, seed=2)
    assert abs(head.loss_history[0][1] - math.log(4)) < 1e-9
    head_acc = sum(p == t for p, t in zip(head.predict(x_test), y_test)) / len(y_test)
    print(f"softmax test accuracy {head_acc:.3f}")
    probs = head.predict_proba(x_test[0])
    assert abs(sum(probs) - 1.0) < 1e-9

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "svm.bin"
        svm.save(str(path))
        assert ppg_har.SvmClassifier.load(str(path)).predict(x_test) == svm.predict(x_test)

    image = ppg_har.rasterize(ppg_har.segment(record("run", 9), FS)[0])
    maps = embedder.feature_maps(image)
    cam = ppg_har.class_activation_map(maps, head.weights("run"))
    flat = [v for row in cam for v in row]
    assert len(cam) == 8 and min(flat) == 0.0 and max(flat) == 1.0

    points, kl = ppg_har.tsne(features, perplexity=10.0, iterations=500, seed=0)
    assert len(points) == len(features) and math.isfinite(kl)
    print(f"t-SNE KL {kl:.3f}")

    mean_acc, folds = ppg_har.nested_cv(features, labels, seed=0)
    assert len(folds) == 5
    print(f"nested-CV accuracy {mean_acc:.3f}")

    if min(svm_acc, head_acc, mean_acc) < 0.9:
        print("accuracy below 0.9", file=sys.stderr)
        return 1
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
