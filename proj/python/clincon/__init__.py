"""Python access to the clincon core."""

import json as _json

from . import _clincon
from ._clincon import (  # noqa: F401
    ConfigError,
    DataError,
    Dataset,
    Encoder,
    Classifier,
    Error,
    NumericError,
    auroc,
    bce_multilabel,
    clinical_supcon,
    collision_probability,
    combined_clinical,
    cross_entropy,
    decompose_loss,
    distillation_loss,
    info_nce,
    load_classifier,
    load_encoder,
    load_manifest,
    normalize,
    paired_t_test,
    parse_loss_spec,
    run_cli,
    spearman,
    split_by_identity,
    write_manifest,
)

__version__ = "0.1.0"


def _dump(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def generate_cohort(config):
    """Returns (dataset, ground_truth dict)."""
    ds, truth = _clincon.generate_cohort(_dump(config))
    return ds, _json.loads(truth)


def init_encoder(input_dim, config=None, seed=0):
    return _clincon.init_encoder(input_dim, _dump(config), seed)


def pretrain(train, loss="cst+eye", config=None, seed=0):
    return _clincon.pretrain(train, loss, _dump(config), seed)


def probe(encoder, labeled, target="multilabel", config=None, seed=0):
    return _clincon.probe(encoder, labeled, target, _dump(config), seed)


def distill(teacher, labeled, unlabeled, temperature=1.0, config=None, seed=0):
    return _clincon.distill(teacher, labeled, unlabeled, temperature, _dump(config), seed)


def evaluate(model, test, seed=0):
    return _json.loads(_clincon.evaluate(model, test, seed))


def theory_sweep(eps, config=None, seeds=(1, 2, 3)):
    cfg = None if config is None else {"theory": config}
    return _clincon.theory_sweep(list(eps), _dump(cfg), list(seeds))
