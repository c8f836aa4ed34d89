import copy

import numpy as np
import pytest

import core.gan.trainer as trainer
from core.augment import augment_data, perturb_latent
from core.contrastive import forgetting_factors, iteration_info_nce
from core.data.datasets import load_dataset
from core.errors import AbortRunError
from core.gan.losses import discriminator_loss, generator_loss
from core.gan.strategies import QueueBank, contrastive_term_D, contrastive_term_G, contrastive_weight_d
from core.gan.trainer import TrainState, d_step, g_step, monitor_losses, sample_reals, train
from core.model.schema import config_hash
from core.numerics import Rng


def _setup(cfg, seed=0):
    state = TrainState.initial(cfg)
    data = load_dataset(state.cfg.dataset)
    z = Rng(seed).stream("z").normal(size=(cfg.train_batch, cfg.network.latent_dim))
    reals = sample_reals(data, cfg.train_batch, Rng(seed).stream("reals"))
    return state, data, z, reals


def _fill(queue, unit_rows, labels, seed=0):
    keys = unit_rows(len(labels), queue.dim, seed)
    for i, label in enumerate(labels):
        queue.push(keys[i:i + 1], label)


def _params_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(np.array_equal(sa[k], sb[k]) for k in sa)


# --- contrastive terms ---

def test_baseline_term_is_zero_and_touches_no_queue(make_config):
    cfg = make_config(strategy={"variant": "baseline"})
    state, _, z, reals = _setup(cfg)
    value = contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals, state.cfg,
                               Rng(1), iteration=1)
    assert value.item() == 0.0
    assert len(state.queues.fake) == 0 and len(state.queues.real) == 0
    assert contrastive_weight_d(state.cfg) == 0.0


def test_empty_queue_term_is_zero(make_config):
    cfg = make_config()
    state, _, z, reals = _setup(cfg)
    value = contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals, state.cfg,
                               Rng(1), iteration=1)
    assert value.item() == 0.0
    assert len(state.queues.fake) == cfg.enqueue_batch
    assert set(state.queues.fake.labels.tolist()) == {1}


def test_real_keys_join_the_fake_queue(make_config):
    cfg = make_config(strategy={"real_in_fake_queue": 0.5})
    state, _, z, reals = _setup(cfg)
    contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals, state.cfg, Rng(1), 1)
    assert len(state.queues.fake) == cfg.enqueue_batch + 4


def test_real_keys_wait_for_the_start_iteration(make_config):
    cfg = make_config(strategy={"variant": "instance_perturbation", "real_in_fake_queue": 1.0,
                                "real_in_fake_queue_start": 3})
    state, _, z, reals = _setup(cfg)
    for it in (1, 2, 3, 4):
        contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals, state.cfg, Rng(it), it)
    counts = np.bincount(state.queues.fake.labels, minlength=5)
    assert counts.tolist() == [0, 8, 8, 16, 16]


def test_start_iteration_is_cleared_without_real_keys(make_config):
    late = make_config(strategy={"variant": "instance_perturbation", "real_in_fake_queue_start": 50})
    early = make_config(strategy={"variant": "instance_perturbation"})
    assert late.resolved().strategy.real_in_fake_queue_start == 0
    assert config_hash(late) == config_hash(early)
    mixed = make_config(strategy={"variant": "instance_perturbation", "real_in_fake_queue": 1.0,
                                  "real_in_fake_queue_start": 50})
    assert mixed.resolved().strategy.real_in_fake_queue_start == 50


def test_instance_real_uses_the_real_queue(make_config):
    cfg = make_config(strategy={"variant": "instance_real"})
    state, _, z, reals = _setup(cfg)
    contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals, state.cfg, Rng(1), 3)
    assert len(state.queues.real) == cfg.enqueue_batch and len(state.queues.fake) == 0
    assert contrastive_term_G(state.model, state.queues.fake, z, state.cfg, Rng(2), 3).item() == 0.0


def test_fakeclr_collapses_to_instance_fake(make_config, unit_rows):
    fakeclr = make_config(perturbation={"l1": 0.0}, queue={"decay_rate": 0.0})
    plain = make_config(strategy={"variant": "instance_fake", "forgetting": True})
    values = []
    for cfg in (fakeclr, plain):
        state, _, z, reals = _setup(cfg)
        _fill(state.queues.fake, unit_rows, [7] * 20)
        assert len(state.queues.fake) == 20
        values.append(contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals,
                                         state.cfg, Rng(4), iteration=8, enqueue=False).item())
    assert values[0] == values[1]


def test_fakeclr_term_equals_reference_composition(make_config, unit_rows):
    cfg = make_config(iterations=2000)
    state, _, z, reals = _setup(cfg)
    _fill(state.queues.fake, unit_rows, list(range(0, 40, 2)))
    rng = Rng(9)
    got = contrastive_term_D(state.model, state.queues.fake, state.queues.real, z, reals, state.cfg, rng,
                             iteration=50, enqueue=False).item()

    c = state.cfg
    G, D, E = state.model.generator, state.model.discriminator, state.model.encoder
    z_k = perturb_latent(z, c.perturbation, rng.stream("perturb"), mode="noise_related")
    q = D.project_fake(augment_data(G(z)[1].data, c.augmentation, rng.stream("view_q")))
    k = E.fake_key(augment_data(G(z_k)[1].data, c.augmentation, rng.stream("view_k")))
    m = forgetting_factors(state.queues.fake.labels, c.contrastive.forgetting.tau_m)
    expected = iteration_info_nce(q, k, state.queues.fake.embeddings, m, c.contrastive.tau).item()
    assert got == expected


# --- steps ---

def test_d_step_decomposes_and_leaves_g_alone(make_config, unit_rows):
    cfg = make_config()
    state, data, _, _ = _setup(cfg)
    _fill(state.queues.fake, unit_rows, [0] * 10)
    ref = copy.deepcopy(state)
    reals = sample_reals(data, cfg.train_batch, state.rng.stream("real_batch", 1))

    result = d_step(state, reals, 1)

    z = ref.rng.stream("latent_d", 1).normal(size=(cfg.train_batch, cfg.network.latent_dim))
    D = ref.model.discriminator
    fake = ref.model.generator(z)[1].data
    adv = discriminator_loss(D.logits(reals), D.logits(fake)).item()
    con = contrastive_term_D(ref.model, ref.queues.fake, ref.queues.real, z, reals, ref.cfg,
                             ref.rng.stream("contrastive_d", 1), 1).item()
    assert result.adversarial == pytest.approx(adv, abs=1e-12)
    assert result.contrastive == pytest.approx(con, abs=1e-12)
    assert result.loss == pytest.approx(adv + cfg.weights.lambda_f * con, abs=1e-12)

    assert _params_equal(state.model.generator, ref.model.generator)
    assert all(p.grad is None for p in state.model.generator.parameters())
    assert not _params_equal(state.model.discriminator, ref.model.discriminator)
    assert not _params_equal(state.model.encoder, ref.model.encoder)
    assert len(state.queues.fake) == 10 + cfg.enqueue_batch


def test_g_step_decomposes_and_leaves_d_alone(make_config, unit_rows):
    cfg = make_config()
    state, _, _, _ = _setup(cfg)
    _fill(state.queues.fake, unit_rows, [0] * 10)
    state.model.discriminator.zero_grad()
    ref = copy.deepcopy(state)

    result = g_step(state, 1)

    z = ref.rng.stream("latent_g", 1).normal(size=(cfg.train_batch, cfg.network.latent_dim))
    adv = generator_loss(ref.model.discriminator.logits(ref.model.generator(z)[1])).item()
    con = contrastive_term_G(ref.model, ref.queues.fake, z, ref.cfg, ref.rng.stream("contrastive_g", 1), 1).item()
    assert result.adversarial == pytest.approx(adv, abs=1e-12)
    assert result.loss == pytest.approx(adv + cfg.weights.lambda_g * con, abs=1e-12)

    assert _params_equal(state.model.discriminator, ref.model.discriminator)
    assert _params_equal(state.model.encoder, ref.model.encoder)
    assert all(np.all(p.grad == 0.0) for p in state.model.discriminator.parameters())
    assert not _params_equal(state.model.generator, ref.model.generator)
    assert len(state.queues.fake) == 10


def test_generator_keys_enqueue_on_request(make_config):
    cfg = make_config(contrastive={"enqueue_generator_keys": True})
    state, _, _, _ = _setup(cfg)
    g_step(state, 1)
    assert len(state.queues.fake) == cfg.enqueue_batch


@pytest.mark.parametrize("variant", ["fakeclr", "instance_perturbation", "instance_fake", "instance_real"])
def test_zero_weights_train_exactly_like_baseline(make_config, variant):
    weights = {"lambda_f": 0.0, "lambda_r": 0.0, "lambda_g": 0.0}
    base = train(make_config(strategy={"variant": "baseline"}, iterations=5))
    other = train(make_config(strategy={"variant": variant}, weights=weights, iterations=5))
    assert _params_equal(base.model.generator, other.model.generator)
    assert _params_equal(base.model.discriminator, other.model.discriminator)
    assert [r.toy_fid for r in base.rows] == [r.toy_fid for r in other.rows]


def test_monitor_losses_do_not_mutate(make_config, unit_rows):
    cfg = make_config()
    state, data, _, _ = _setup(cfg)
    _fill(state.queues.fake, unit_rows, [0] * 5)
    before = copy.deepcopy(state.model)
    losses = monitor_losses(state, data)
    assert np.isfinite([losses.loss_d, losses.loss_g, losses.contrastive]).all()
    assert len(state.queues.fake) == 5
    assert _params_equal(before.discriminator, state.model.discriminator)


# --- train ---

def test_zero_iterations_returns_initial_model(make_config):
    cfg = make_config(iterations=0)
    result = train(cfg)
    initial = TrainState.initial(cfg)
    assert [r.iteration for r in result.rows] == [0]
    assert _params_equal(result.model.generator, initial.model.generator)
    assert _params_equal(result.model.discriminator, initial.model.discriminator)


def test_eval_points_and_determinism(make_config):
    cfg = make_config(iterations=5, eval_interval=2)
    first, second = train(cfg), train(cfg)
    assert [r.iteration for r in first.rows] == [0, 2, 4, 5]
    assert [r.model_dump() for r in first.rows] == [r.model_dump() for r in second.rows]
    cap = QueueBank.from_config(cfg).fake.target_size(5)
    assert first.rows[-1].queue_size == min(5 * cfg.enqueue_batch, cap)


def test_callback_sees_every_row(make_config):
    seen = []
    result = train(make_config(iterations=2, eval_interval=1), callback=seen.append)
    assert seen == result.rows and len(seen) == 3


def test_non_finite_loss_aborts(make_config, monkeypatch):
    monkeypatch.setattr(trainer, "_adversarial_input", lambda x, state, rng: np.full(np.shape(x), np.nan))
    with pytest.raises(AbortRunError) as info:
        train(make_config(iterations=3))
    assert info.value.iteration == 1 and info.value.phase == "d_step"


def test_queue_bank_schedules(make_config):
    bank = QueueBank.from_config(make_config(iterations=10))
    assert bank.fake.schedule.decay_rate == pytest.approx(64 / 20)
    assert bank.real.schedule.decay_rate == 0.0
    bank = QueueBank.from_config(make_config(strategy={"variant": "instance_fake"}))
    assert bank.fake.schedule.decay_rate == 0.0
