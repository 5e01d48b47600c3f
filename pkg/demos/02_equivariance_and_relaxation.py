"""Fresh nets are exactly equivariant; unequal bank weights break that.

A relaxed group convolution carries one scalar weight per group element and
filter bank. At initialization the weights are all one, so the layer is an
ordinary group convolution and commutes with every group action. Skewing the
weights trades that guarantee for flexibility, and the equivariance error
grows with the skew.

    python3 demos/02_equivariance_and_relaxation.py
"""

import numpy as np

from rgconv import build_discovery_net, build_group, equivariance_error


def main():
    g = build_group("cyclic_2d(4)")
    net = build_discovery_net(g, channels=6).init(3)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 15, 15))

    err = equivariance_error(net, g, x, description="fresh net")
    print(f"fresh net:   max |f(T x) - T f(x)| = {err.max_error:.3e}")

    # skew the per-element weights of every relaxed layer
    for skew in (1e-3, 1e-1):
        for layer in net.weight_layers():
            w = layer.w.data
            w[...] = 1.0 + skew * np.arange(w.size).reshape(w.shape)
        err = equivariance_error(net, g, x, description=f"skew {skew}")
        print(f"skew {skew:.0e}: max |f(T x) - T f(x)| = {err.max_error:.3e}")


if __name__ == "__main__":
    main()
