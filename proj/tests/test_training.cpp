#include <doctest.h>

#include <cmath>

#include "altpp/data.hpp"
#include "altpp/errors.hpp"
#include "altpp/gradcheck.hpp"
#include "altpp/rng.hpp"
#include "altpp/training.hpp"

using namespace altpp;

namespace {

ModelShape toy_shape(std::size_t dx = 2, std::size_t dz = 2) {
  ModelShape s;
  s.dim_x = dx;
  s.dim_z = dz;
  s.hidden_dim = 5;
  return s;
}

Tensor randn(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(rng, std::move(shape));
}

std::vector<Tensor> flat_params(const AlternatorModel& m) {
  std::vector<Tensor> out;
  for (const Tensor* p : parameter_tensors(m)) out.push_back(*p);
  return out;
}

LossTerms losses_on(Tape& tape, const AlternatorModel& m, const Tensor& batch, const TrainConfig& cfg,
                    std::uint64_t seed, std::span<const unsigned char> mask = {}) {
  BoundModel bm(tape, m);
  Rng rng(seed);
  return total_loss(bm, batch, mask, cfg, rng);
}

}  // namespace

TEST_CASE("gamma weight") {
  CHECK(gamma_weight(3, 3, 0.2, 0.2, 0.4, 0.4) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(gamma_weight(3, 5, 0.2, 0.3, 0.0, 0.4) == 0.0);
  CHECK(gamma_weight(4, 2, 0.2, 0.1, 0.5, 0.5) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK_THROWS_AS(gamma_weight(1, 1, 0.2, 0.2, 0.5, 0.0), ConfigError);
  CHECK_THROWS_AS(gamma_weight(1, 1, 0.0, 0.2, 0.5, 0.5), ConfigError);
}

TEST_CASE("alternator loss on hand-built rollouts") {
  NoiseSchedule s;
  s.sigma_x = s.sigma_z = 0.5;
  s.beta = {0.5};
  s.alpha = {0.5};
  const AlternatorModel m = make_zero_model(toy_shape(1, 1), s);
  Tape tape;
  BatchRollout r;
  r.batch = 1;
  r.data_x = {tape.constant(Tensor::matrix({{1.0}}))};
  r.mu_x = {tape.constant(Tensor::matrix({{0.0}}))};
  r.z = {tape.constant(Tensor::matrix({{2.0}}))};
  r.mu_z = {tape.constant(Tensor::matrix({{1.0}}))};
  const auto terms = alternator_loss(m, r);
  CHECK(terms.z_term.value().item() + terms.x_term.value().item() == 2.0);

  r.data_x = r.mu_x;
  r.z = r.mu_z;
  const auto zero = alternator_loss(m, r);
  CHECK(zero.z_term.value().item() + zero.x_term.value().item() == 0.0);

  // Doubling sigma_z quadruples the weight on the observation term.
  r.data_x = {tape.constant(Tensor::matrix({{1.0}}))};
  AlternatorModel m2 = m;
  m2.schedule.sigma_z = 1.0;
  CHECK(alternator_loss(m2, r).x_term.value().item() == doctest::Approx(4.0 * alternator_loss(m, r).x_term.value().item()));
}

TEST_CASE("noise matching loss on hand-built rollouts") {
  NoiseSchedule s;
  s.sigma_x = 0.3;
  s.sigma_z = 0.2;
  s.beta = {0.5};
  s.alpha = {0.0};  // gamma_1 = 0
  const AlternatorModel m = make_zero_model(toy_shape(1, 2), s);
  Tape tape;
  BatchRollout r;
  r.batch = 1;
  r.data_x = {tape.constant(Tensor::matrix({{0.7}}))};
  r.mu_x = {tape.constant(Tensor::matrix({{0.7}}))};
  r.eps_x_pred = {tape.constant(Tensor::matrix({{3.0}}))};
  r.eps_z_pred = {tape.constant(Tensor::matrix({{1.0, -1.0}}))};
  r.z_noise = {Tensor::matrix({{0.0, 0.0}})};
  r.z = r.mu_z = {tape.constant(Tensor::matrix({{0.0, 0.0}}))};
  Rng rng(1);
  const auto nm = noise_matching_loss(m, r, NoiseTargetMode::kTrajectory, rng);
  CHECK(nm.z_term.value().item() == 2.0);
  CHECK(nm.x_term.value().item() == 0.0);

  r.eps_z_pred = {tape.constant(Tensor::matrix({{0.0, 0.0}}))};
  CHECK(noise_matching_loss(m, r, NoiseTargetMode::kTrajectory, rng).z_term.value().item() == 0.0);
}

TEST_CASE("zero model on zero data under the vanilla schedule has zero observation term") {
  const AlternatorModel m = make_zero_model(toy_shape(), vanilla_schedule(4, 0.3, 0.15));
  TrainConfig cfg;
  Tape tape;
  const auto terms = losses_on(tape, m, Tensor(Shape{3, 4, 2}), cfg, 5);
  CHECK(terms.alternator.x_term.value().item() == 0.0);
  CHECK(terms.noise_matching.x_term.value().item() == 0.0);
}

// Property: additivity and non-negativity over random models, batches and lambdas.
TEST_CASE("loss additivity and non-negativity") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    CAPTURE(seed);
    const AlternatorModel m = make_model(toy_shape(2, 3), default_schedule(5, 0.3, 0.15), seed);
    TrainConfig cfg;
    cfg.lambda = 0.25 * static_cast<double>(seed % 7);
    cfg.noise_target_mode = seed % 2 ? NoiseTargetMode::kLiteral : NoiseTargetMode::kTrajectory;
    const auto v = evaluate_loss(m, randn({3, 5, 2}, seed + 100), cfg, seed);
    CHECK(std::abs(v.total - (v.alt_z + v.alt_x + cfg.lambda * (v.nm_z + v.nm_x))) <= 1e-10);
    CHECK(v.alt_z >= 0.0);
    CHECK(v.alt_x >= 0.0);
    CHECK(v.nm_z >= 0.0);
    CHECK(v.nm_x >= 0.0);
  }
}

TEST_CASE("lambda zero reduces to the alternator loss") {
  const AlternatorModel m = make_model(toy_shape(), default_schedule(4, 0.3, 0.15), 3);
  TrainConfig cfg;
  cfg.lambda = 0.0;
  const auto v = evaluate_loss(m, randn({2, 4, 2}, 1), cfg, 9);
  CHECK(v.total == v.alt_z + v.alt_x);
}

TEST_CASE("lambda zero with the vanilla schedule leaves eps_x untouched") {
  const AlternatorModel m = make_model(toy_shape(), vanilla_schedule(3, 0.3, 0.15), 4);
  TrainConfig cfg;
  cfg.lambda = 0.0;
  Tape tape;
  BoundModel bm(tape, m);
  Rng rng(2);
  const auto terms = total_loss(bm, randn({2, 3, 2}, 3), {}, cfg, rng);
  tape.backward(terms.total);
  for (Var v : bm.eps_x().leaves()) CHECK(tape.grad(v) == Tensor(v.shape(), 0.0));
  bool f_moves = false;
  for (Var v : bm.f().leaves())
    for (double g : tape.grad(v).values()) f_moves |= g != 0.0;
  CHECK(f_moves);
}

TEST_CASE("gradient of the total loss matches finite differences") {
  for (auto mode : {NoiseTargetMode::kTrajectory, NoiseTargetMode::kLiteral}) {
    const AlternatorModel m = make_model(toy_shape(), default_schedule(2, 0.3, 0.15), 17);
    const Tensor batch = randn({1, 2, 2}, 18);
    TrainConfig cfg;
    cfg.noise_target_mode = mode;
    const auto r = finite_difference_check(
        [&](Tape&, const std::vector<Var>& leaves) {
          BoundModel bm(m, leaves);
          Rng rng(19);
          return total_loss(bm, batch, {}, cfg, rng).total;
        },
        flat_params(m));
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("masked rollouts exclude missing residuals") {
  const AlternatorModel m = make_model(toy_shape(1, 2), default_schedule(3, 0.3, 0.15), 6);
  TrainConfig cfg;
  Tensor a = randn({1, 3, 1}, 1);
  Tensor b = a;
  b[1] = 50.0;  // hidden behind the mask
  const std::vector<unsigned char> mask = {1, 0, 1};
  Tape t1, t2;
  const auto la = losses_on(t1, m, a, cfg, 3, mask).values();
  const auto lb = losses_on(t2, m, b, cfg, 3, mask).values();
  CHECK(la.total == lb.total);
}

TEST_CASE("adam") {
  Tensor p = Tensor::vector({1.0, -2.0});
  std::vector<Tensor*> params = {&p};
  AdamState state;
  adam_step(params, std::vector<Tensor>{Tensor::vector({1.0, 1.0})}, state, 0.1);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(-2.1).epsilon(1e-9));

  Tensor q = Tensor::vector({0.5, 0.25});
  std::vector<Tensor*> qs = {&q};
  AdamState s2;
  for (int i = 0; i < 3; ++i) adam_step(qs, std::vector<Tensor>{Tensor(Shape{2}, 0.0)}, s2, 0.1);
  CHECK(q == Tensor::vector({0.5, 0.25}));
  CHECK_THROWS_AS(adam_step(qs, std::vector<Tensor>{Tensor(Shape{3}, 0.0)}, s2, 0.1), DimensionError);
}

TEST_CASE("cosine learning rate") {
  CHECK(cosine_lr(0, 100, 1e-3, 1e-5) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 1e-3, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 1e-3, 1e-5) == doctest::Approx(5.05e-4).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_lr(0, 0, 1e-3, 1e-5), ConfigError);
  for (std::size_t e = 0; e < 100; ++e) CHECK(cosine_lr(e + 1, 100, 1e-3, 1e-5) <= cosine_lr(e, 100, 1e-3, 1e-5));
}

TEST_CASE("training makes progress and is deterministic") {
  const SeriesDataset data = synth_bimodal(4, 6, 0.1, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 8;
  const AlternatorModel init = make_model(toy_shape(1, 3), default_schedule(6, 0.3, 0.15), 1);
  AlternatorModel a = init, b = init;
  const auto ha = train(a, data, cfg);
  const auto hb = train(b, data, cfg);
  REQUIRE(ha.history.size() == 3);
  CHECK_FALSE(a.f.params == init.f.params);
  CHECK(a.f.params == b.f.params);
  CHECK(a.eps_z.params == b.eps_z.params);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(ha.history[e].epoch == e + 1);
    CHECK(ha.history[e].loss.total == hb.history[e].loss.total);
    CHECK(std::isfinite(ha.history[e].loss.total));
  }
  CHECK(ha.history.front().lr == cfg.lr_max);
  CHECK(ha.history.back().lr == doctest::Approx(cfg.lr_min).epsilon(1e-12));
}

TEST_CASE("training options") {
  const SeriesDataset data = synth_bimodal(4, 5, 0.1, 3);
  const AlternatorModel init = make_model(toy_shape(1, 2), default_schedule(5, 0.3, 0.15), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 3;
  for (bool free_running : {false, true}) {
    cfg.free_running = free_running;
    cfg.latent_samples = free_running ? 2 : 1;
    AlternatorModel m = init;
    CHECK(std::isfinite(train(m, data, cfg).history.front().loss.total));
  }
  cfg.epochs = 0;
  AlternatorModel m = init;
  CHECK_THROWS_AS(train(m, data, cfg), ConfigError);
  cfg.epochs = 1;
  AlternatorModel wide = make_model(toy_shape(2, 2), default_schedule(5, 0.3, 0.15), 1);
  CHECK_THROWS_AS(train(wide, data, cfg), DimensionError);
}

TEST_CASE("non-finite losses abort with the epoch and term") {
  const SeriesDataset data = synth_bimodal(2, 3, 0.0, 1);
  AlternatorModel m = make_model(toy_shape(1, 2), default_schedule(3, 0.3, 0.15), 1);
  m.f.params.tensors.back().value = Tensor::vector({1e200});
  TrainConfig cfg;
  cfg.epochs = 2;
  try {
    train(m, data, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}
