"""Walk through the 2-D tensor library and its gradient tape.

Builds a tiny two-layer network by hand, runs backward, and checks one
gradient against central finite differences.
"""

import numpy as np

import gtde.tensor as tz
from gtde.rng import Rng
from gtde.tensor import Tape, Tensor

rng = Rng(0)

# Forward arithmetic works with or without a tape.
a = Tensor([[1.0, 2.0], [3.0, 4.0]])
b = tz.eye(2)
print("identity product:\n", tz.matmul(b, a).data)
print("row softmax of zeros:", tz.softmax_rows(tz.zeros(1, 3)).data)

# Gradients are recorded on an explicit tape and consumed by one backward.
x = rng.normal(5, 3)
w1 = Tensor(rng.normal(3, 4), requires_grad=True)
w2 = Tensor(rng.normal(4, 1), requires_grad=True)

with Tape() as tape:
    hidden = tz.tanh(tz.matmul(Tensor(x), w1))
    prediction = tz.matmul(hidden, w2)
    loss = tz.mean_all(tz.mul(prediction, prediction))
    grads = tape.backward(loss)
    g_w1 = grads.wrt(w1).data
print("loss:", loss.item())
print("dL/dw1 row 0:", np.round(g_w1[0], 4))

# Check one entry against (f(x+h) - f(x-h)) / 2h.
h = 1e-5


def loss_at(w1_values):
    hidden = np.tanh(x @ w1_values)
    prediction = hidden @ w2.data
    return float((prediction * prediction).mean())


up, down = w1.data.copy(), w1.data.copy()
up[0, 0] += h
down[0, 0] -= h
fd = (loss_at(up) - loss_at(down)) / (2 * h)
print(f"finite difference check: analytic={g_w1[0, 0]:.8f} fd={fd:.8f}")
assert abs(g_w1[0, 0] - fd) / max(1.0, abs(g_w1[0, 0])) < 1e-4
print("gradient agrees with finite differences")
