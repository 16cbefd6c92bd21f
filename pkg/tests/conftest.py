from pathlib import Path

DATA = Path(__file__).parent / "data"
MNIST = DATA / "mnist_2k.libsvm.gz"
CONFIGS = Path(__file__).parent.parent / "configs"
