import numpy as np
import pytest

from hullforge.geometry import HullParams, SHAPE_NAMES


def make_hull(loa=50.0, **overrides) -> HullParams:
    """Midpoint-of-box hull with zero bulb, overridable per parameter."""
    base = {
        "beam_ratio": 0.26, "depth_ratio": 0.16, "run_frac": 0.325,
        "entrance_frac": 0.325, "run_fullness": 2.25, "entrance_fullness": 2.25,
        "section_fullness": 3.25, "deadrise_frac": 0.25, "bow_rake": 0.15,
        "stern_rake": 0.15, "bulb_len": 0.0, "bulb_radius": 0.0,
        "bulb_height": 0.0,
    }
    base.update(overrides)
    return HullParams(loa, np.array([base[n] for n in SHAPE_NAMES]))


@pytest.fixture
def reference_hull():
    return make_hull()


@pytest.fixture
def box_hull():
    """Degenerate no-taper prism: y = b/2 over the whole unit box."""
    return make_hull(100.0, beam_ratio=0.1, depth_ratio=0.05, run_frac=0.0,
                     entrance_frac=0.0, run_fullness=1.0, entrance_fullness=1.0,
                     section_fullness=1.0, deadrise_frac=0.0, bow_rake=0.0,
                     stern_rake=0.0)


@pytest.fixture
def wedge_hull():
    """Prismatic hull with linear tapers: piecewise-constant slope field."""
    return make_hull(1.0, beam_ratio=0.12, depth_ratio=0.08, run_frac=0.45,
                     entrance_frac=0.45, run_fullness=1.0, entrance_fullness=1.0,
                     section_fullness=1.0, deadrise_frac=0.0, bow_rake=0.0,
                     stern_rake=0.0)


@pytest.fixture(scope="session")
def mini_records():
    """A small but real dataset (64 feasible + 64 infeasible records)."""
    from hullforge.dataset import build_dataset

    return build_dataset(64, seed=2024, workers=2)


@pytest.fixture(scope="session")
def mini_normalizer(mini_records):
    from hullforge.dataset import fit_normalizer

    return fit_normalizer(mini_records)


@pytest.fixture(scope="session")
def mini_stacked(mini_records, mini_normalizer):
    from hullforge.dataset import stack_records

    return stack_records(mini_records, mini_normalizer)
