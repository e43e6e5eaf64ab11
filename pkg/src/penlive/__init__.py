"""Handwriting liveness detection toolkit.

Synthesizes machine-generated counterparts of human handwriting with a
sigma-lognormal movement model, extracts velocity features, and trains
classifiers (1NN-DTW, recurrent nets, a small CNN) to tell human and
machine movements apart.

Module map: `data` (samples + JSONL I/O), `slm` (kinematic model),
`extract` (plan reconstruction + counterpart factory), `features`
(velocity pipeline), `dtw` (baseline classifier), `nn`/`cells`/`train`/
`model` (neural substrate), `rnn`/`cnn` (classifiers), `evaluate`
(metrics + experiment runners), `simulate` (surrogate corpus), `cli`.
"""

__version__ = "0.1.0"
