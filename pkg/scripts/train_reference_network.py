"""Train and ship the bundled reference network plus its query corpus.

Trains a small digit classifier (one 3x3 convolution with 2x2 pooling,
one hidden layer) on the scikit-learn handwritten digits, upscaled to
14x14 and rescaled to byte range.  Writes the network document, the
first 20 correctly classified held-out images as PGM files, and one
translation-robustness query document per image into
src/transcheck/data/.

Deterministic end to end: fixed seed, full-batch gradient descent.

Run from the repository root:

    python3 scripts/train_reference_network.py
"""

import json
import os
import sys

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from transcheck.core import Image, Tensor3
from transcheck.io import save_image, save_network
from transcheck.network import (
    ARGMAX,
    RELU,
    ConvolutionalLayer,
    FullyConnectedLayer,
    Network,
    forward,
)

SEED = 20240817
HIDDEN = 24
EPOCHS = 400
LEARNING_RATE = 0.08
MOMENTUM = 0.9
WEIGHT_DECAY = 1e-4
TRAIN_COUNT = 1500
SHIP_COUNT = 20

DATA_DIR = os.path.join(os.path.dirname(__file__), "..",
                        "src", "transcheck", "data")


def prepared_digits():
    """14x14 byte-range images and labels, deterministic order."""
    bunch = load_digits()
    images = []
    for im in bunch.images:
        up = ndimage.zoom(im, 14.0 / 8.0, order=1, grid_mode=True,
                          mode="grid-constant")
        images.append(np.rint(np.clip(up * (255.0 / 16.0), 0.0, 255.0)))
    return np.stack(images), bunch.target.astype(int)


def pool_windows(a):
    n = a.shape[0]
    return (a.reshape(n, 6, 2, 6, 2)
             .transpose(0, 1, 3, 2, 4)
             .reshape(n, 6, 6, 4))


def train(x, y, rng):
    """Full-batch momentum descent on softmax cross-entropy.

    x is scaled to [0, 1]; the conv kernel is rescaled to byte inputs
    before shipping.
    """
    n = x.shape[0]
    onehot = np.zeros((n, 10))
    onehot[np.arange(n), y] = 1.0

    kernel = rng.normal(scale=0.3, size=(3, 3))
    b1 = 0.0
    w2 = rng.normal(scale=np.sqrt(2.0 / 36.0), size=(HIDDEN, 36))
    b2 = np.zeros(HIDDEN)
    w3 = rng.normal(scale=np.sqrt(2.0 / HIDDEN), size=(10, HIDDEN))
    b3 = np.zeros(10)
    velocity = [np.zeros_like(p) for p in (kernel, b1, w2, b2, w3, b3)]

    patches = np.lib.stride_tricks.sliding_window_view(x, (3, 3), axis=(1, 2))
    for step in range(EPOCHS):
        z1 = np.einsum("nuvpq,pq->nuv", patches, kernel) + b1
        a1 = np.maximum(z1, 0.0)
        windows = pool_windows(a1)
        which = windows.argmax(axis=-1)
        pooled = np.take_along_axis(windows, which[..., None], -1)[..., 0]
        feats = pooled.reshape(n, 36)
        z2 = feats @ w2.T + b2
        a2 = np.maximum(z2, 0.0)
        z3 = a2 @ w3.T + b3

        shifted = z3 - z3.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        if step % 100 == 0:
            loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-12))
            acc = float(np.mean(probs.argmax(axis=1) == y))
            print(f"step {step:4d}  loss {loss:.4f}  train acc {acc:.3f}")

        dz3 = (probs - onehot) / n
        dw3 = dz3.T @ a2 + WEIGHT_DECAY * w3
        db3 = dz3.sum(axis=0)
        da2 = dz3 @ w3
        dz2 = da2 * (z2 > 0.0)
        dw2 = dz2.T @ feats + WEIGHT_DECAY * w2
        db2 = dz2.sum(axis=0)
        dfeats = dz2 @ w2
        dpooled = dfeats.reshape(n, 6, 6)
        dwindows = np.zeros_like(windows)
        np.put_along_axis(dwindows, which[..., None], dpooled[..., None], -1)
        da1 = (dwindows.reshape(n, 6, 6, 2, 2)
                       .transpose(0, 1, 3, 2, 4)
                       .reshape(n, 12, 12))
        dz1 = da1 * (z1 > 0.0)
        dkernel = np.einsum("nuvpq,nuv->pq", patches, dz1) + WEIGHT_DECAY * kernel
        db1 = dz1.sum()

        params = [kernel, b1, w2, b2, w3, b3]
        grads = [dkernel, db1, dw2, db2, dw3, db3]
        for i, (p, g) in enumerate(zip(params, grads)):
            velocity[i] = MOMENTUM * velocity[i] - LEARNING_RATE * g
            params[i] = p + velocity[i]
        kernel, b1, w2, b2, w3, b3 = params
    return kernel, b1, w2, b2, w3, b3


def as_network(kernel, b1, w2, b2, w3, b3):
    """Fold the [0, 1] training scale into the kernel so the network
    consumes raw byte pixels."""
    conv = ConvolutionalLayer(
        kernels=(kernel / 255.0)[None, :, :, None],
        biases=np.array([b1]),
        pool_height=2, pool_width=2,
    )
    return Network(14, 14, 1, (
        conv,
        FullyConnectedLayer(w2, b2, RELU),
        FullyConnectedLayer(w3, b3, ARGMAX),
    ), 10)


def main():
    rng = np.random.default_rng(SEED)
    images, labels = prepared_digits()
    x_train = images[:TRAIN_COUNT] / 255.0
    y_train = labels[:TRAIN_COUNT]
    x_test, y_test = images[TRAIN_COUNT:], labels[TRAIN_COUNT:]

    net = as_network(*train(x_train, y_train, rng))

    correct = []
    for i, (im, lab) in enumerate(zip(x_test, y_test)):
        image = Image(Tensor3.from_array(im[:, :, None]), 255.0)
        if forward(net, image).label == lab + 1:
            correct.append((i, image, lab))
    acc = len(correct) / len(y_test)
    print(f"held-out accuracy: {acc:.3f} ({len(correct)}/{len(y_test)})")
    if len(correct) < SHIP_COUNT:
        raise SystemExit("not enough correctly classified images to ship")

    os.makedirs(os.path.join(DATA_DIR, "images"), exist_ok=True)
    os.makedirs(os.path.join(DATA_DIR, "queries"), exist_ok=True)
    save_network(net, os.path.join(DATA_DIR, "reference_net.json"))
    for slot, (i, image, lab) in enumerate(correct[:SHIP_COUNT]):
        name = f"digit_{slot:02d}.pgm"
        save_image(image, os.path.join(DATA_DIR, "images", name))
        doc = {
            "network": "../reference_net.json",
            "image": f"../images/{name}",
            "expected_label": int(lab) + 1,
            "transformations": [
                {"kind": "translation", "box": [-1, 1, -1, 1]},
            ],
            "solver": {
                "timeout_seconds": 200.0,
                # creation-order branching fixes the shift selectors
                # first, which is what makes these models tractable
                "branching_rule": "first_fractional",
            },
        }
        with open(os.path.join(DATA_DIR, "queries", f"query_{slot:02d}.json"),
                  "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"shipped {SHIP_COUNT} images and queries to {DATA_DIR}")


if __name__ == "__main__":
    main()
