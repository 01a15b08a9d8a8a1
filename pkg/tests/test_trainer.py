import json

import numpy as np
import pytest

from smda import autograd as ag
from smda.augment import AugmentedPair
from smda.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from smda.corpus import TASKS, build_vocab, encode_examples, make_example
from smda.model import ModelConfig, forward, init_params, pad_batch
from smda.objective import cross_entropy_rows
from smda.trainer import (
    DivergenceError,
    TrainConfig,
    TrainData,
    TrainError,
    evaluate,
    make_mixed_batches,
    predict_file,
    train,
)

POS = ["good", "great", "happy", "kind", "warm"]
NEG = ["bad", "awful", "sad", "cruel", "cold"]
FILL = ["the", "a", "day", "we", "it", "was"]


def _sentence(rng, c):
    words = [str(rng.choice(POS if c else NEG)) for _ in range(2)] + [str(rng.choice(FILL)) for _ in range(3)]
    rng.shuffle(words)
    return " ".join(words)


def toy_data(n_train=24, n_dev=12, n_unl=30, seed=0):
    rng = np.random.default_rng(seed)
    lab = lambda c: {t: c for t in TASKS}
    train_ex = [make_example(f"t{i}", _sentence(rng, i % 2), lab(i % 2)) for i in range(n_train)]
    dev_ex = [make_example(f"d{i}", _sentence(rng, i % 2), lab(i % 2)) for i in range(n_dev)]
    unl = [make_example(f"u{i}", _sentence(rng, int(rng.integers(2)))) for i in range(n_unl)]
    vocab = build_vocab(train_ex + unl, 1)
    enc = lambda xs: encode_examples(xs, vocab)
    pairs = [AugmentedPair(o, a) for o, a in zip(enc(unl), enc([make_example(u.id + "#aug0", _sentence(rng, 1)) for u in unl]))]
    return TrainData(enc(train_ex), enc(dev_ex), pairs, vocab)


def toy_config(**kw):
    base = dict(task="Support", batch_size=8, batch_size_grid=(), epochs=3, d_emb=6, d_hid=7, lr_encoder=0.5, lr_head=0.5, seed=1)
    base.update(kw)
    return TrainConfig(**base)


def test_batch_sizes():
    data = toy_data(n_train=100)
    batches = make_mixed_batches(data.train, data.pairs, 32, seed=0, epoch=1)
    assert [len(l) for l, _ in batches] == [32, 32, 32, 4]
    assert [len(p) for _, p in batches] == [32, 32, 32, 4]


def test_unlabeled_pool_cycles():
    data = toy_data(n_train=40, n_unl=10)
    batches = make_mixed_batches(data.train, data.pairs, 16, seed=0, epoch=1)
    ids = [p.original.id for _, ps in batches for p in ps]
    assert len(ids) == 40 and set(ids) == {p.original.id for p in data.pairs}


def test_empty_unlabeled_pool():
    data = toy_data()
    assert all(p == [] for _, p in make_mixed_batches(data.train, [], 8, 0, 1))


def test_batches_deterministic_and_epoch_dependent():
    data = toy_data()
    ids = lambda b: [[e.id for e in l] + [p.original.id for p in ps] for l, ps in b]
    assert ids(make_mixed_batches(data.train, data.pairs, 8, 3, 2)) == ids(make_mixed_batches(data.train, data.pairs, 8, 3, 2))
    assert ids(make_mixed_batches(data.train, data.pairs, 8, 3, 2)) != ids(make_mixed_batches(data.train, data.pairs, 8, 3, 3))


def test_bad_batch_size():
    data = toy_data()
    with pytest.raises(TrainError):
        make_mixed_batches(data.train, data.pairs, 0, 0, 1)


def test_zero_learning_rate_leaves_params_unchanged():
    data = toy_data(n_train=8)
    cfg = toy_config(epochs=1, lr_encoder=0.0, lr_head=0.0)
    init = init_params(ModelConfig(len(data.vocab), cfg.d_emb, cfg.d_hid), cfg.seed)
    trace = []
    train(data, cfg, trace=trace)
    assert len(trace) == 1 and trace[0].equals(init)


def _standalone_supervised(data, cfg):
    """Plain minibatch SGD on cross-entropy only, written independently of the trainer."""
    params = init_params(ModelConfig(len(data.vocab), cfg.d_emb, cfg.d_hid), cfg.seed)
    lrs = {"encoder": cfg.lr_encoder, "head": cfg.lr_head}
    traj = []
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch, 0]).permutation(len(data.train))
        for start in range(0, len(order), cfg.batch_size):
            batch = [data.train[i] for i in order[start : start + cfg.batch_size]]
            onehot = np.eye(2)[[e.label(cfg.task) for e in batch]]
            leaves = params.tensors(requires_grad=True)
            loss = ag.mean(cross_entropy_rows(onehot, forward(leaves, pad_batch([e.ids for e in batch]))))
            grads = ag.backward(loss, leaves)
            for name, g in grads.items():
                params.arrays[name] = params.arrays[name] - lrs[params.group_of(name)] * g
            traj.append(params.copy())
    return traj


def test_gamma_zero_matches_standalone_supervised_loop():
    data = toy_data()
    cfg = toy_config(gamma_constant=0.0, epochs=2)
    trace = []
    train(data, cfg, trace=trace)
    ref = _standalone_supervised(data, cfg)
    assert len(trace) == len(ref)
    assert all(a.equals(b) for a, b in zip(trace, ref))


def test_unsupervised_terms_change_the_trajectory():
    data = toy_data()
    a, b = [], []
    train(data, toy_config(gamma_constant=0.0), trace=a)
    train(data, toy_config(gamma_constant=1.0), trace=b)
    assert not a[-1].equals(b[-1])


def test_per_group_learning_rates():
    data = toy_data(n_train=8)
    cfg = toy_config(epochs=1, lr_encoder=0.0, lr_head=0.5)
    init = init_params(ModelConfig(len(data.vocab), cfg.d_emb, cfg.d_hid), cfg.seed)
    trace = []
    train(data, cfg, trace=trace)
    after = trace[0]
    for name in ("embedding", "enc_w", "enc_b"):
        np.testing.assert_array_equal(after.arrays[name], init.arrays[name])
    assert not np.array_equal(after.arrays["head_w2"], init.arrays["head_w2"])


def test_training_is_deterministic():
    data = toy_data()
    p1, s1 = train(data, toy_config(optimizer="adam", lr_encoder=0.05, lr_head=0.05))
    p2, s2 = train(data, toy_config(optimizer="adam", lr_encoder=0.05, lr_head=0.05))
    assert p1.equals(p2) and s1.epochs == s2.epochs and s1.steps == s2.steps


def test_best_checkpoint_has_max_dev_f1():
    data = toy_data()
    cfg = toy_config(epochs=6)
    best, state = train(data, cfg)
    f1s = [r["dev_macro_f1"] for r in state.epochs]
    assert state.best_dev_macro_f1 == max(f1s)
    assert state.best_epoch == f1s.index(max(f1s)) + 1
    assert evaluate(best, data.dev, cfg.task).macro_f1 == max(f1s)


def test_step_log_identities():
    data = toy_data()
    _, state = train(data, toy_config(epochs=2))
    assert len(state.steps) == 2 * 3
    for rec in state.steps:
        assert abs(rec["L_U"] - (rec["L_s"] + rec["L_e"] + rec["L_c"])) <= 1e-9
        assert abs(rec["L"] - (rec["L_S"] + rec["gamma"] * rec["L_U"])) <= 1e-9
    gammas = [r["gamma"] for r in state.steps]
    assert gammas[0] == 0.0 and gammas[-1] == 1.0 and gammas == sorted(gammas)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_guard():
    data = toy_data()
    cfg = toy_config()
    huge = init_params(ModelConfig(len(data.vocab), cfg.d_emb, cfg.d_hid), 0)
    for name in ("embedding", "enc_w", "head_w1"):
        huge.arrays[name] = huge.arrays[name] * 1e120  # overflows float64 in the forward pass
    with pytest.raises(DivergenceError, match="step 0"):
        train(data, cfg, init=huge)


def test_config_validation():
    with pytest.raises(TrainError):
        TrainConfig(task="Nope")
    with pytest.raises(TrainError):
        TrainConfig(batch_size=10)
    assert TrainConfig(batch_size=10, batch_size_grid=()).batch_size == 10
    with pytest.raises(TrainError):
        TrainConfig.from_dict({"bogus": 1})
    cfg = TrainConfig(T=0.3)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_evaluate_empty():
    data = toy_data()
    with pytest.raises(TrainError):
        evaluate(init_params(ModelConfig(len(data.vocab), 3, 3), 0), [], "Support")


def _write_unlabeled(path, texts):
    path.write_text("".join(json.dumps({"id": f"p{i}", "text": t}) + "\n" for i, t in enumerate(texts)), encoding="utf-8")


def test_predict_file(tmp_path):
    data = toy_data()
    params, _ = train(data, toy_config())
    _write_unlabeled(tmp_path / "in.jsonl", ["good great day", "bad awful day", "it was", "totally unseen words"])
    assert predict_file(params, data.vocab, 64, tmp_path / "in.jsonl", tmp_path / "out.jsonl", "Support") == 4
    recs = [json.loads(l) for l in (tmp_path / "out.jsonl").read_text().splitlines()]
    assert [r["id"] for r in recs] == ["p0", "p1", "p2", "p3"]
    assert all(r["task"] == "Support" and r["label"] in (0, 1) and 0 <= r["p1"] <= 1 for r in recs)
    assert all(r["label"] == int(r["p1"] > 0.5) for r in recs)
    first = (tmp_path / "out.jsonl").read_bytes()
    predict_file(params, data.vocab, 64, tmp_path / "in.jsonl", tmp_path / "out.jsonl", "Support")
    assert (tmp_path / "out.jsonl").read_bytes() == first


def test_predict_empty_file(tmp_path):
    data = toy_data()
    params = init_params(ModelConfig(len(data.vocab), 3, 3), 0)
    (tmp_path / "in.jsonl").write_text("", encoding="utf-8")
    assert predict_file(params, data.vocab, 64, tmp_path / "in.jsonl", tmp_path / "out.jsonl", "Support") == 0
    assert (tmp_path / "out.jsonl").read_text() == ""


def test_predict_many_lines(tmp_path):
    data = toy_data()
    params = init_params(ModelConfig(len(data.vocab), 3, 3), 0)
    _write_unlabeled(tmp_path / "in.jsonl", ["good day"] * 500)
    assert predict_file(params, data.vocab, 64, tmp_path / "in.jsonl", tmp_path / "out.jsonl", "Support") == 500
    assert len((tmp_path / "out.jsonl").read_text().splitlines()) == 500


def test_checkpoint_roundtrip(tmp_path):
    data = toy_data()
    params = init_params(ModelConfig(len(data.vocab), 4, 5), 9)
    cfg = toy_config().to_dict()
    save_checkpoint(tmp_path / "ck", Checkpoint(params, data.vocab, "Support", 3, 64, cfg))
    loaded = load_checkpoint(tmp_path / "ck")
    assert loaded.params.equals(params) and loaded.task == "Support" and loaded.epoch == 3
    assert dict(loaded.vocab.index) == dict(data.vocab.index)
    manifest = json.loads((tmp_path / "ck" / "manifest.json").read_text())
    sizes = [int(np.prod(t["shape"])) * 8 for t in manifest["tensors"]]
    assert [t["offset"] for t in manifest["tensors"]] == list(np.cumsum([0] + sizes[:-1]))
    assert (tmp_path / "ck" / "params.bin").stat().st_size == sum(sizes)
    first = params.arrays[manifest["tensors"][0]["name"]].reshape(-1)[0]
    assert np.frombuffer((tmp_path / "ck" / "params.bin").read_bytes()[:8], dtype="<f8")[0] == first
