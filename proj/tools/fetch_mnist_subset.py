#!/usr/bin/env python3
"""Write a 5000-image MNIST training subset as a standard IDX pair.

The images come from the ``mnist_5k.csv.gz`` table shipped inside the
mlxtend wheel: 500 digits per class drawn from MNIST, stored class by class.
The rows are written in a fixed pseudo-random order (seed 0) so that, like the
original MNIST files, the index order is not grouped by class. The wheel is
fetched with ``pip download`` unless ``--wheel`` points at a local copy.

Output: <out>/train-images-idx3-ubyte and <out>/train-labels-idx1-ubyte.
"""

import argparse
import random
import glob
import gzip
import io
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def locate_wheel(explicit, workdir):
    if explicit:
        return Path(explicit)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--quiet",
         "mlxtend", "-d", workdir],
        check=True,
    )
    wheels = glob.glob(str(Path(workdir) / "mlxtend-*.whl"))
    if not wheels:
        raise SystemExit("pip download produced no mlxtend wheel")
    return Path(wheels[0])


def read_rows(wheel):
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER)).decode("ascii")
    images, labels = bytearray(), bytearray()
    for line in io.StringIO(raw):
        line = line.strip()
        if not line:
            continue
        values = [int(float(v)) for v in line.split(",")]
        if len(values) != 785:
            raise SystemExit(f"unexpected row width {len(values)}")
        images.extend(values[:784])
        labels.append(values[784])
    return images, labels


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/mnist5k")
    parser.add_argument("--wheel", help="local mlxtend wheel to read from")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        images, labels = read_rows(locate_wheel(args.wheel, tmp))

    count = len(labels)
    order = list(range(count))
    random.Random(0).shuffle(order)
    images = b"".join(bytes(images[i * 784:(i + 1) * 784]) for i in order)
    labels = bytes(labels[i] for i in order)
    with open(out / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        f.write(images)
    with open(out / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} images to {out}")


if __name__ == "__main__":
    main()
