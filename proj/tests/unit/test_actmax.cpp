#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "amx/actmax/actmax.hpp"
#include "amx/core/ops.hpp"
#include "amx/error.hpp"
#include "amx/io/csv.hpp"
#include "amx/rng.hpp"

using namespace amx;

namespace {

constexpr std::size_t N = FeatureGrid::kSize;

// Two-class linear classifier over the flattened grid.
struct LinearToy {
  std::vector<double> w;  // 2 x N
  std::vector<double> b = {0.1, -0.2};

  explicit LinearToy(std::uint64_t seed, double scale) : w(2 * N) {
    Rng rng(seed);
    for (auto& v : w) v = rng.uniform(-scale, scale);
  }

  LogitBuilder<double> builder() const {
    return [this](Graph<double>& g, NodeId x) {
      const auto W = g.leaf(Tensor<double>({2, N}, w));
      const auto B = g.leaf(Tensor<double>({2}, b));
      return dense(g, flatten(g, x), W, B);
    };
  }

  double logit(std::size_t k, std::span<const float> x) const {
    long double s = b[k];
    for (std::size_t i = 0; i < N; ++i) s += (long double)w[k * N + i] * x[i];
    return double(s);
  }
};

FeatureGrid constant_grid(float v) { return FeatureGrid(std::vector<float>(N, v)); }

}  // namespace

TEST_CASE("MaxConfig defaults and validation") {
  const auto d = MaxConfig::direct_defaults();
  CHECK(d.learning_rate == 0.05);
  CHECK(d.max_iters == 500);
  CHECK(d.target_prob_stop == 0.99);
  CHECK(d.clamp_inputs);
  const auto l = MaxConfig::latent_defaults();
  CHECK(l.learning_rate == 0.1);
  CHECK_FALSE(l.clamp_inputs);
  MaxConfig bad;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_mode("latent") == MaxMode::kLatent);
  CHECK_THROWS_AS(parse_mode("both"), ConfigError);
}

TEST_CASE("zero learning rate is the identity") {
  const LinearToy toy(1, 1e-3);
  MaxConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.max_iters = 7;
  const auto x0 = noise_grid(3);
  const auto r = maximize_direct_with<double>(toy.builder(), x0, 0, cfg);
  CHECK(r.maximized == x0);
  CHECK(r.iterations_used == 7);
  REQUIRE(r.trajectory.size() == 8);
  for (double h : r.trajectory) CHECK(h == r.trajectory[0]);
  for (double d : r.x_diff) CHECK(d == 0.0);
}

TEST_CASE("linear toy: target logit rises every step until the clamp saturates") {
  const LinearToy toy(2, 1e-3);
  MaxConfig cfg;
  cfg.learning_rate = 40.0;
  cfg.max_iters = 60;
  cfg.target_prob_stop = 1.0;
  const auto x0 = noise_grid(4);
  const auto r = maximize_direct_with<double>(toy.builder(), x0, 1, cfg);

  // Oracle: the gradient is the constant weight row, so iterate by hand.
  std::vector<float> x = x0.data();
  std::vector<double> expected = {toy.logit(1, x)};
  std::vector<bool> moved;
  for (std::size_t t = 0; t < r.iterations_used; ++t) {
    bool changed = false;
    for (std::size_t i = 0; i < N; ++i) {
      const float nx = to_feature_range(double(x[i]) + cfg.learning_rate * toy.w[N + i]);
      changed = changed || nx != x[i];
      x[i] = nx;
    }
    moved.push_back(changed);
    expected.push_back(toy.logit(1, x));
  }
  REQUIRE(r.trajectory.size() == expected.size());
  CHECK(r.maximized.data() == x);
  for (std::size_t t = 0; t < expected.size(); ++t) CHECK(r.trajectory[t] == doctest::Approx(expected[t]).epsilon(1e-12));
  bool saturated = false;
  for (std::size_t t = 0; t + 1 < r.trajectory.size(); ++t) {
    if (!moved[t]) saturated = true;
    if (!saturated) CHECK(r.trajectory[t + 1] > r.trajectory[t]);
  }
}

TEST_CASE("quadratic toy: iterates follow hand-rolled gradient ascent") {
  // h = mean((x - c)^2), carried as logit 0 of [h, 0].
  Rng rng(5);
  std::vector<double> c(N);
  for (auto& v : c) v = 0.5 + rng.uniform(-0.1, 0.1);
  const LogitBuilder<double> quad = [&](Graph<double>& g, NodeId x) {
    const auto C = g.leaf(Tensor<double>({1, FeatureGrid::kMels, FeatureGrid::kFrames}, c));
    const auto W = g.leaf(Tensor<double>({2, 1}, {1.0, 0.0}));
    const auto B = g.leaf(Tensor<double>({2}, {0.0, 0.0}));
    return dense(g, mse(g, x, C), W, B);
  };
  MaxConfig cfg;
  cfg.learning_rate = 200.0;
  cfg.max_iters = 12;
  const auto x0 = noise_grid(6);
  const auto r = maximize_direct_with<double>(quad, x0, 0, cfg);
  REQUIRE(r.iterations_used == 12);

  std::vector<float> x = x0.data();
  for (std::size_t t = 0; t <= cfg.max_iters; ++t) {
    long double h = 0;
    for (std::size_t i = 0; i < N; ++i) h += ((long double)x[i] - c[i]) * ((long double)x[i] - c[i]);
    CHECK(std::abs(double(h / N) - r.trajectory[t]) < 1e-10);
    for (std::size_t i = 0; i < N; ++i) {
      x[i] = to_feature_range(double(x[i]) + cfg.learning_rate * 2.0 * (double(x[i]) - c[i]) / double(N));
    }
    if (t + 1 == cfg.max_iters) {
      for (std::size_t i = 0; i < N; ++i) CHECK(std::abs(double(x[i]) - double(r.maximized.values()[i])) < 1e-10);
    }
  }
}

TEST_CASE("linear composite: latent ascent never lowers the target logit") {
  // dec(z) = D z + 0.5, logits = W dec(z) + b. The target logit is linear in z
  // with gradient g = D^T w_t, so each step adds exactly lr * |g|^2.
  const std::size_t d = 6;
  Rng rng(7);
  std::vector<double> D(N * d);
  for (auto& v : D) v = rng.uniform(-1e-4, 1e-4);
  const LinearToy toy(8, 1e-2);
  const DecoderBuilder<double> dec = [&](Graph<double>& g, NodeId z) {
    const auto Dn = g.leaf(Tensor<double>({N, d}, D));
    const auto e = g.leaf(Tensor<double>({N}, std::vector<double>(N, 0.5)));
    return dense(g, z, Dn, e);
  };
  std::vector<double> grad(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    long double s = 0;
    for (std::size_t i = 0; i < N; ++i) s += (long double)D[i * d + j] * toy.w[i];
    grad[j] = double(s);
  }
  double g2 = 0;
  for (double v : grad) g2 += v * v;

  MaxConfig cfg = MaxConfig::latent_defaults();
  cfg.learning_rate = 5.0;
  cfg.max_iters = 20;
  cfg.target_prob_stop = 1.0;
  const LatentCode z0{std::vector<double>(d, 0.0)};
  const auto r = maximize_latent_with<double>(toy.builder(), dec, z0, 0, cfg);
  REQUIRE(r.trajectory.size() == 21);
  for (std::size_t t = 0; t + 1 < r.trajectory.size(); ++t) {
    CHECK(r.trajectory[t + 1] >= r.trajectory[t]);
    CHECK(r.trajectory[t + 1] - r.trajectory[t] == doctest::Approx(cfg.learning_rate * g2).epsilon(1e-6));
  }
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(r.final_latent->values[j] == doctest::Approx(20 * cfg.learning_rate * grad[j]).epsilon(1e-9));
  }
}

TEST_CASE("non-finite values name the iteration") {
  const std::size_t d = 4;
  const DecoderBuilder<float> dec = [&](Graph<float>& g, NodeId z) {
    const auto Dn = g.leaf(Tensor<float>({N, d}, std::vector<float>(N * d, 1e-3f)));
    const auto e = g.leaf(Tensor<float>({N}, std::vector<float>(N, 0.5f)));
    return dense(g, z, Dn, e);
  };
  const LogitBuilder<float> clf = [&](Graph<float>& g, NodeId x) {
    const auto W = g.leaf(Tensor<float>({2, N}, std::vector<float>(2 * N, 1.0f)));
    const auto B = g.leaf(Tensor<float>({2}, {0.0f, 0.0f}));
    return dense(g, flatten(g, x), W, B);
  };
  MaxConfig cfg = MaxConfig::latent_defaults();
  cfg.learning_rate = 1e37;
  cfg.target_prob_stop = 1.0;
  try {
    maximize_latent_with<float>(clf, dec, LatentCode{std::vector<double>(d, 0.0)}, 0, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("model-backed maximization contracts") {
  const auto clf = init_classifier(31, 4);
  const auto ae = init_autoencoder(32, 16);
  const MaxModels models{&clf, &ae};

  SUBCASE("direct: trajectory endpoints match classifier_forward, outputs stay in range") {
    MaxConfig cfg;
    cfg.max_iters = 3;
    const auto r = noise_to_class(MaxMode::kDirect, models, 2, 11, cfg);
    CHECK(r.trajectory.size() == r.iterations_used + 1);
    CHECK(r.trajectory.front() == classifier_forward(clf, r.start).logits[2]);
    CHECK(r.trajectory.back() == classifier_forward(clf, r.maximized).logits[2]);
    for (float v : r.start.values()) CHECK((v >= 0.0f && v <= 1.0f));
    for (float v : r.maximized.values()) CHECK((v >= 0.0f && v <= 1.0f));
  }
  SUBCASE("latent: zero iterations decodes z0, outputs in (0,1)") {
    MaxConfig cfg = MaxConfig::latent_defaults();
    cfg.max_iters = 0;
    const auto z0 = noise_latent(16, 12);
    const auto r = maximize_latent(clf, ae, z0, 1, cfg);
    CHECK(r.maximized == decoder_forward(ae, z0));
    CHECK(r.iterations_used == 0);
    for (double d : additive_noise(r)) CHECK(d == 0.0);

    cfg.max_iters = 3;
    const auto r3 = maximize_latent(clf, ae, z0, 1, cfg);
    CHECK(r3.trajectory.back() == classifier_forward(clf, r3.maximized).logits[1]);
    CHECK(r3.maximized == decoder_forward(ae, *r3.final_latent));
    for (float v : r3.maximized.values()) CHECK((v > 0.0f && v < 1.0f));
  }
  SUBCASE("same seed, same result") {
    MaxConfig cfg;
    cfg.max_iters = 2;
    for (auto mode : {MaxMode::kDirect, MaxMode::kLatent}) {
      const auto a = noise_to_class(mode, models, 0, 99, cfg);
      const auto b = noise_to_class(mode, models, 0, 99, cfg);
      CHECK(a.maximized == b.maximized);
      CHECK(a.trajectory == b.trajectory);
      CHECK(a.x_diff == b.x_diff);
    }
  }
  SUBCASE("class_to_class") {
    LabeledExample ex{noise_grid(13), 3, "spk", ""};
    MaxConfig cfg;
    cfg.target_prob_stop = 1e-6;
    const auto done = class_to_class(MaxMode::kDirect, models, ex, cfg);
    CHECK(done.iterations_used == 0);
    CHECK(done.reached_stop);
    CHECK(done.maximized == ex.features);

    cfg.target_prob_stop = 0.99;
    cfg.max_iters = 4;
    for (auto mode : {MaxMode::kDirect, MaxMode::kLatent}) {
      const auto r = class_to_class(mode, models, ex, cfg);
      CHECK(r.target == 3);
      CHECK(r.final_probs[3] >= r.start_probs[3]);
    }
    const auto lr = class_to_class(MaxMode::kLatent, models, ex, cfg);
    CHECK(lr.start_latent->values == encoder_forward(ae, ex.features).values);
  }
  SUBCASE("additive noise identities are bit-exact") {
    MaxConfig cfg;
    cfg.max_iters = 5;
    cfg.learning_rate = 0.5;
    for (auto mode : {MaxMode::kDirect, MaxMode::kLatent}) {
      const auto r = noise_to_class(mode, models, 1, 21, cfg);
      const auto d = additive_noise(r);
      bool nonzero = false;
      for (std::size_t i = 0; i < N; ++i) {
        CHECK(double(r.start.values()[i]) - d[i] == double(r.maximized.values()[i]));
        CHECK(double(r.maximized.values()[i]) + d[i] == double(r.start.values()[i]));
        nonzero = nonzero || d[i] != 0.0;
      }
      CHECK(nonzero);
    }
  }
  SUBCASE("batch equals sequential") {
    MaxConfig cfg;
    cfg.max_iters = 2;
    const auto plan = noise_run_plan(4, 2, 5);
    CHECK(plan.size() == 8);
    CHECK(plan[3].target == 1);
    const auto batch = noise_to_class_batch(MaxMode::kDirect, models, plan, cfg);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto one = noise_to_class(MaxMode::kDirect, models, plan[i].target, plan[i].seed, cfg);
      CHECK(batch[i].maximized == one.maximized);
    }
  }
  SUBCASE("errors") {
    MaxConfig cfg;
    CHECK_THROWS_AS(noise_to_class(MaxMode::kDirect, models, 4, 1, cfg), IndexError);
    CHECK_THROWS_AS(noise_to_class(MaxMode::kLatent, MaxModels{&clf, nullptr}, 0, 1, cfg), ConfigError);
    cfg.clamp_inputs = false;
    CHECK_THROWS_AS(noise_to_class(MaxMode::kDirect, models, 0, 1, cfg), ConfigError);
  }
}

TEST_CASE("top_energy_fraction") {
  std::vector<double> spike(500, 0.0);
  spike[17] = -3.0;
  CHECK(top_energy_fraction(spike) == 1.0);
  std::vector<double> flat(500, 0.25);
  CHECK(top_energy_fraction(flat) == doctest::Approx(5.0 / 500.0).epsilon(1e-12));
  // Top 1% of 1000 cells = 10 cells of energy 4 vs 990 of energy 1.
  std::vector<double> mixed(1000, 1.0);
  for (int i = 0; i < 10; ++i) mixed[i * 97] = 2.0;
  CHECK(top_energy_fraction(mixed) == doctest::Approx(40.0 / (40.0 + 990.0)).epsilon(1e-12));
  CHECK(top_energy_fraction(std::vector<double>(10, 0.0)) == 0.0);
}

TEST_CASE("write_result") {
  const auto clf = init_classifier(41, 3);
  MaxConfig cfg;
  cfg.max_iters = 2;
  const auto r = noise_to_class(MaxMode::kDirect, MaxModels{&clf, nullptr}, 2, 5, cfg);
  const auto dir = std::filesystem::temp_directory_path() / "amx_test_actmax";
  write_result(r, cfg, dir, "run0");
  std::ifstream in(dir / "run0.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["mode"] == "direct");
  CHECK(j["target"] == 2);
  CHECK(j["trajectory"].get<std::vector<double>>() == r.trajectory);
  CHECK(j["iterations_used"] == r.iterations_used);
  const auto grid = io::read_matrix_csv(dir / "run0.csv");
  CHECK(grid.rows == FeatureGrid::kMels);
  CHECK(grid.cols == FeatureGrid::kFrames);
  for (std::size_t i = 0; i < N; ++i) CHECK(float(grid.values[i]) == r.maximized.values()[i]);
}
