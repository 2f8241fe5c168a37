import pytest

torch = pytest.importorskip("torch")

from tmct_export.dataset import load_split
from tmct_export.encoders import FinetunedEncoder, StubEncoder
from tmct_export.export import ExportJob, run_export
from tmct_export.finetune import (
    FinetuneJob,
    build_model,
    finetune_base,
    train_accuracy,
)
from tmct_export.fixture import FixtureConfig, generate_fixture

CFG = FixtureConfig(num_attributes=4, num_objects=3, train_pairs=6,
                    val_seen=2, val_unseen=2, test_seen=3, test_unseen=3,
                    test_images=36, train_images_per_pair=12, seed=3)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ft-ds")
    generate_fixture(root, CFG)
    return root


def test_one_epoch_smoke_and_exports_load(dataset, tmp_path):
    split = load_split(dataset)
    job = FinetuneJob(dataset_root=str(dataset),
                      checkpoint_out=str(tmp_path / "ck.pt"),
                      epochs=1, batch_size=32, seed=0)
    history = finetune_base(split, job)
    assert len(history) == 1

    enc = FinetunedEncoder(tmp_path / "ck.pt")
    export = ExportJob(dataset_root=str(dataset),
                       bank_out=str(tmp_path / "b.bank"),
                       stream_out=str(tmp_path / "s.stream"),
                       checkpoint=str(tmp_path / "ck.pt"))
    manifest = run_export(export, enc)
    assert manifest["prototype_rows"] == 6
    assert manifest["stream_count"] == 36
    from tmct.data_model import load_prototype_bank, load_stream
    space, bank = load_prototype_bank(export.bank_out)
    assert len(list(load_stream(export.stream_out, expected_dim=bank.dim))) == 36


def test_training_improves_seen_accuracy(dataset, tmp_path):
    """Seen-composition train accuracy rises above the untrained model's."""
    split = load_split(dataset)
    job = FinetuneJob(dataset_root=str(dataset),
                      checkpoint_out=str(tmp_path / "ck.pt"),
                      epochs=6, batch_size=32, lr=5e-4, seed=0)
    untrained, stub = build_model(split, job)
    acc_before = train_accuracy(untrained, split, dataset, stub.temperature)
    history = finetune_base(split, job)
    trained, meta = __import__("tmct_export.finetune", fromlist=["load_checkpoint"]) \
        .load_checkpoint(tmp_path / "ck.pt")
    acc_after = train_accuracy(trained, split, dataset, meta["temperature"])
    assert acc_after > acc_before
    # The logged curve should also end at or above its start.
    assert history[-1].accuracy >= history[0].accuracy


def test_omitting_finetune_keeps_zero_shot_valid(dataset, tmp_path):
    job = ExportJob(dataset_root=str(dataset),
                    bank_out=str(tmp_path / "zs.bank"),
                    stream_out=str(tmp_path / "zs.stream"))
    manifest = run_export(job, StubEncoder())
    assert manifest["prototype_rows"] == 6
