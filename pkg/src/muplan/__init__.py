"""muplan: train candidate-action generators on marginal utility and plan over them.

The package has three strata:

* domain code: a curling-like continuous game, a synthetic bump surface, and
  a discrete location game on a value grid;
* planning code: UCB over fixed candidate sets and kernel-regression UCB over
  continuous candidates, both sharing one execution-noise model;
* learning code: a small reverse-mode tape, feed-forward generator networks,
  utility objectives (marginal utility, max, sum, softmax) and their
  semi-gradients, plus REINFORCE and policy-distillation baselines.

Everything is seeded through ``muplan.core.substream`` so runs reproduce
bit for bit.
"""

__version__ = "0.1.0"
