"""Pet re-identification embedding toolkit."""

from ._pawprint import (
    FusionModel,
    PawprintError,
    Record,
    __version__,
    batch_loss,
    batch_loss_grad,
    decode_store,
    eer,
    embed,
    encode_store,
    evaluate,
    gen_population,
    generate_pairs,
    mcnemar,
    plan_epoch,
    read_store,
    roc_auc,
    top_k,
    train,
    triplet_loss,
    variance_loss,
    write_store,
)

__all__ = [
    "FusionModel",
    "PawprintError",
    "Record",
    "__version__",
    "batch_loss",
    "batch_loss_grad",
    "decode_store",
    "eer",
    "embed",
    "encode_store",
    "evaluate",
    "gen_population",
    "generate_pairs",
    "mcnemar",
    "plan_epoch",
    "read_store",
    "roc_auc",
    "top_k",
    "train",
    "triplet_loss",
    "variance_loss",
    "write_store",
]
