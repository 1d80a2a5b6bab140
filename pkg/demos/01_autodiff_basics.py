"""A short tour of the tensor core: build a computation, pull gradients
back through it, and confirm them against central finite differences.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from fusenet.tensor import (
    Tensor, grad_check, matmul, sigmoid, softmax, tensor_sum,
)

rng = np.random.default_rng(0)

# A tiny two-layer computation: x @ w1 -> sigmoid -> @ w2 -> softmax.
x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
w1 = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
w2 = Tensor(rng.standard_normal((5, 2)), requires_grad=True)

h = sigmoid(matmul(x, w1))
y = softmax(matmul(h, w2), axis=-1)
loss = tensor_sum(y * y)

loss.backward()
print("loss:", float(loss.data))
print("dloss/dx row 0:", x.grad[0])

# The same computation, validated against finite differences.  Every
# element of every input is perturbed by +-1e-5 and the analytic gradient
# must agree within 1e-4 (it lands many orders below that in float64).
def f(x, w1, w2):
    h = sigmoid(matmul(x, w1))
    y = softmax(matmul(h, w2), axis=-1)
    return tensor_sum(y * y)

report = grad_check(f, [Tensor(x.data.copy()), Tensor(w1.data.copy()),
                        Tensor(w2.data.copy())])
print(f"gradient check: max rel error {report.max_rel_error:.3e} "
      f"(tolerance {report.tolerance:.0e}) -> "
      f"{'pass' if report.passed else 'FAIL'}")
