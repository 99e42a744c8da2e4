import numpy as np
import pytest

from kspec.experiments import ExperimentConfig, run
from kspec.stieltjes import mp_affine_support

SEED = 7


@pytest.fixture(scope="module")
def fig3(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig3")
    return out, run(ExperimentConfig(experiment="fig3", seed=SEED, out=str(out)))


def test_fig3_scalings(fig3):
    _, man = fig3
    over_p = man["results"]["over_p_p100_n200"]["kendall"]["ks"]
    over_sqrt = man["results"]["over_sqrt_p_p100_n200"]["kendall"]["ks"]
    assert over_p < 0.07
    assert over_sqrt > 2 * over_p


def test_fig3_histograms_integrate_to_one(fig3):
    out, man = fig3
    for name in man["files"]:
        if name.startswith("hist_"):
            rows = np.loadtxt(out / name, delimiter=",", skiprows=1, ndmin=2)
            assert float(np.sum((rows[:, 1] - rows[:, 0]) * rows[:, 2])) == pytest.approx(1.0)


def test_fig2_support_and_atom(tmp_path):
    man = run(ExperimentConfig(experiment="fig2", seed=SEED, out=str(tmp_path)))
    for tag, c in (("p100_n200", 0.5), ("p200_n100", 2.0)):
        res = man["results"][tag]["kendall"]
        lo, hi = mp_affine_support(c)
        edges = np.loadtxt(tmp_path / f"hist_kendall_indep_{tag}.csv", delimiter=",", skiprows=1)
        width = edges[0, 1] - edges[0, 0]
        assert res["max_eig"] == pytest.approx(hi, abs=max(width, 0.1 * hi))
        if c < 1:
            assert res["min_eig"] == pytest.approx(lo, abs=max(width, 0.1))
    assert man["results"]["p200_n100"]["kendall"]["theory_atoms"] == [[1.0 / 3.0, 0.5]]
    # W_n keeps the exact atom: p - n + 1 eigenvalues equal to 1/3
    assert man["results"]["p200_n100"]["wn_atom_empirical_mass"] == pytest.approx(101 / 200)


def test_fig4_differs_from_independent_case(tmp_path):
    man = run(ExperimentConfig(experiment="fig4", seed=SEED, out=str(tmp_path),
                               shapes=((200, 400),)))
    res = man["results"]["p200_n400"]
    assert res["max_density_gap_vs_indep"] > 0.05
    assert res["ks"] < 0.05
