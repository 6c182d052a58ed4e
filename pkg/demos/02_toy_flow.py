"""Train a flow prior on a 2-D mixture and sample from it."""

import numpy as np

from fmplug import generate, no_grad, train_fm
from fmplug.bench import make_mixture_dataset

data = make_mixture_dataset(2, 500, seed=0)
model = train_fm(data, steps=2000, lr=3e-3, seed=0)
trace = model.metadata["loss_trace"]
print(f"loss: first 100 steps {np.mean(trace[:100]):.3f}, last 100 steps {np.mean(trace[-100:]):.3f}")

seeds = np.random.default_rng(1).standard_normal((1000, 2))
with no_grad():
    for T in (3, 10, 100):
        x = generate(model, seeds, steps=T).data
        print(f"T={T:3d}  sample mean {np.round(x.mean(axis=0), 3)}  data mean {np.round(data.mean(axis=0), 3)}")

# component weights are 1/3 and 2/3
right = x[:, 0] > 2.5
print(f"fraction on the lighter component: {right.mean():.2f} (weight 1/3)")
