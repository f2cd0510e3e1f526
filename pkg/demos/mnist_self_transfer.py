"""MNIST train -> MNIST test transfer with a privately perturbed source.

Usage: python3 demos/mnist_self_transfer.py [MNIST_DIR]
"""

import sys
import time

from dptransfer.benchmarks import confusion, domain_transfer, load_mnist

directory = sys.argv[1] if len(sys.argv) > 1 else "/root/data/mnist"
train, test = load_mnist(directory)
start = time.perf_counter()
run = domain_transfer(train, test, seed=0, epsilon=0.1)
print(f"multitask accuracy {run.accuracy:.4f} in {time.perf_counter() - start:.0f}s")
print("confusion (rows true, columns predicted):")
print(confusion(run.predictions, run.truth, 10))
