"""Generator of the bundled synthetic observational dataset.

Ten covariates: x1, x2 confound treatment and outcome, x3, x4 predict only
the outcome, x5 is an instrument, x6 and x10 are noise, x7 is a common
0/1 confounder, x8 a common 0/1 noise flag and x9 a rare 0/1 flag
(about 0.3% ones) that the rare-binary filter removes. The true treatment
effect is ``EFFECT``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

EFFECT = 0.2
BUNDLED_NAME = "synthetic_confounded.csv"


def make_synthetic(n: int = 5000, seed: int = 20240501) -> pd.DataFrame:
    """Confounded dataset with columns ``y, z, x1..x10``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 10))
    x[:, 6] = (rng.random(n) < 0.4).astype(float)
    x[:, 7] = (rng.random(n) < 0.3).astype(float)
    x[:, 8] = (rng.random(n) < 0.003).astype(float)
    eta = -0.3 + 0.8 * x[:, 0] + 0.8 * x[:, 1] + 1.0 * x[:, 4] + 0.6 * x[:, 6]
    z = (rng.random(n) < expit(eta)).astype(int)
    y = (1.0 + EFFECT * z + 0.8 * x[:, 0] + 0.8 * x[:, 1] + 0.6 * x[:, 2] + 0.6 * x[:, 3]
         + 0.5 * x[:, 6] + rng.standard_normal(n))
    frame = pd.DataFrame(x, columns=[f"x{j + 1}" for j in range(10)])
    for j in (6, 7, 8):
        frame[f"x{j + 1}"] = frame[f"x{j + 1}"].astype(int)
    frame.insert(0, "z", z)
    frame.insert(0, "y", y)
    return frame


def write_synthetic(path, n: int = 5000, seed: int = 20240501) -> Path:
    path = Path(path)
    make_synthetic(n, seed).to_csv(path, index=False, float_format="%.10g")
    return path


def bundled_path() -> Path:
    """Location of the 5000-row synthetic CSV shipped with the package."""
    return Path(str(resources.files("penaipw").joinpath("resources", BUNDLED_NAME)))
