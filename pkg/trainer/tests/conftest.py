import pytest

from edgeprof_trainer.data import make_shape_dataset
from edgeprof_trainer.train import TrainConfig, train

SMOKE_CLASSES = 6
SMOKE_POINTS = 128


@pytest.fixture(scope="session")
def smoke_training(tmp_path_factory):
    """Train once on the procedural stand-in dataset; shared across tests.

    20 epochs is the reduced smoke recipe; the dataset is 6 distinctive
    shape classes at 128 points so the whole run stays desk-scale on CPU.
    """
    root = tmp_path_factory.mktemp("smoke")
    dataset_dir = root / "dataset"
    out_dir = root / "out"
    make_shape_dataset(dataset_dir, per_class_train=24, per_class_test=8,
                       points_per_cloud=SMOKE_POINTS, num_classes=SMOKE_CLASSES, seed=1)
    cfg = TrainConfig(epochs=20, k=10, batch_size=16, points_per_cloud=SMOKE_POINTS,
                      num_classes=SMOKE_CLASSES, seed=1, scheduler_step=8, dropout=0.3)
    metrics = train(cfg, dataset_dir, out_dir, device="cpu", log=lambda *_: None)
    return {"metrics": metrics, "out_dir": out_dir, "dataset_dir": dataset_dir}
