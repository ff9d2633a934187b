import numpy as np
import pytest

from datacollab import container
from datacollab.errors import LoadError
from datacollab.learner import LabelMatrix, predict, train
from datacollab.mappers import fit_pca, fit_random_projection


def test_mapper_roundtrip(tmp_path, rng):
    x = rng.standard_normal((6, 20))
    for f in (fit_pca(x, 3), fit_random_projection(6, 2, seed=9)):
        g = container.load(container.save(tmp_path / "f.npz", f))
        assert g == f
        assert g(x).tobytes() == f(x).tobytes()


@pytest.mark.parametrize("kind", ["least-squares", "knn"])
def test_model_roundtrip_predicts_identically(tmp_path, rng, kind):
    x = rng.standard_normal((3, 30))
    y = LabelMatrix.from_names(["a", "b", "c"] * 10)
    model = train(x, y, kind=kind, k=3)
    again = container.load(container.save(tmp_path / "m.npz", model))
    test = rng.standard_normal((3, 12))
    assert predict(again, test) == predict(model, test)


def test_rejects_foreign_files(tmp_path):
    bad = tmp_path / "x.npz"
    bad.write_bytes(b"not a zip")
    with pytest.raises(LoadError):
        container.load(bad)
    np.savez(tmp_path / "y.npz", type=np.array("nope"))
    with pytest.raises(LoadError, match="unknown container type"):
        container.load(tmp_path / "y.npz")
    with pytest.raises(TypeError):
        container.save(tmp_path / "z.npz", object())
