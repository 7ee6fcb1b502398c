"""Half-space LTL without next: syntax, discrete semantics on lasso words,
and continuous-time semantics on dense trajectories."""
