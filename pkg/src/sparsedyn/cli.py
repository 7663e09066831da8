"""Config-driven experiment runner.

Every subcommand takes a mandatory seed, resolves its parameters from
defaults < JSON config < explicit flags, writes a JSON summary (and CSV
curves) into --out-dir, and exits 0 on pass, 1 on tolerance failure,
2 on config errors, 3 on numerical aborts.  Outputs are a pure function of
the resolved config: reruns are byte-identical, and --threads (which only
parallelizes independent seeded chunks with a fixed merge order) never
changes any output byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import rng
from .dynamics import (
    NumericalAbort,
    builtin_model,
    covariance_decay_profile,
    simulate_discrete,
)
from .empirical import (
    bernoulli_init,
    component_functional_distribution,
    ergodicity_variance_curve,
    fixed_graph_sampler,
    frequency_tv,
    giant_fraction,
    global_empirical,
    mix_frequencies,
    root_law_monte_carlo,
    shift_average,
    trajectory_frequencies,
    tv_discrete,
    ugw_forest_sampler,
与)
from .gibbs import GibbsSpec, glauber_sample, iid_sample
from .graphs import (
    Graph,
    ball,
    component_labels,
    gen_canopy_truncation,
    gen_configuration_model,
    gen_erdos_renyi,
    gen_gnm,
    gen_lattice_box,
    gen_random_regular,
    gen_regular_tree,
    largest_component,
    write_edgelist,
)
from .localtopo import histogram_of_samples, histogram_tv, neighborhood_histogram
from .trees import (
    degree_dist,
    dual_distribution,
    poisson_dist,
    poisson_dual,
    sample_gw,
    theta,
)

EXIT_PASS = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass
