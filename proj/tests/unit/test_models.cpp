#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "amx/core/gradcheck.hpp"
#include "amx/core/ops.hpp"
#include "amx/error.hpp"
#include "amx/models/checkpoint.hpp"
#include "amx/rng.hpp"

using namespace amx;
namespace fs = std::filesystem;

namespace {

FeatureGrid random_grid(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(FeatureGrid::kSize);
  for (auto& x : v) x = rng.uniform_f24();
  return FeatureGrid(std::move(v));
}

LatentCode random_latent(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  LatentCode z;
  z.values.resize(dim);
  for (auto& v : z.values) v = rng.normal();
  return z;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "amx_test_models";
  fs::create_directories(dir);
  return dir / name;
}

bool same_params(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape) return false;
    if (std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size() * 4) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("init_classifier") {
  const auto a = init_classifier(7, 10);
  const auto b = init_classifier(7, 10);
  const auto c = init_classifier(8, 10);
  CHECK(same_params(a.params, b.params));
  CHECK_FALSE(same_params(a.params, c.params));
  const auto big = init_classifier(1, 35);
  CHECK(big.params.back().shape == Shape{35});
  CHECK(classifier_forward(big, random_grid(1)).logits.size() == 35);
  CHECK_THROWS_AS(init_classifier(1, 1), ConfigError);
}

TEST_CASE("classifier_forward") {
  const auto m = init_classifier(3, 10);
  const auto x = random_grid(4);
  const auto out = classifier_forward(m, x);
  double sum = 0;
  for (double p : out.probs) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(classifier_forward(m, x).logits == out.logits);

  const auto dbl = classifier_forward(m, x, Precision::kFloat64);
  for (std::size_t i = 0; i < 10; ++i) CHECK(dbl.logits[i] == doctest::Approx(out.logits[i]).epsilon(1e-4));
}

TEST_CASE("untrained classifiers give near-uniform probabilities") {
  const std::size_t K = 10;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = init_classifier(seed, K);
    const auto out = classifier_forward(m, random_grid(1000 + seed));
    worst = std::max(worst, out.probs[out.argmax()]);
  }
  MESSAGE("max probability over 100 seeds: " << worst);
  CHECK(worst < 3.0 / K);
}

TEST_CASE("autoencoder shapes and ranges") {
  const auto ae = init_autoencoder(5);
  CHECK(ae.latent_dim == 128);
  bool any_negative = false;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto z = encoder_forward(ae, random_grid(s));
    CHECK(z.values.size() == 128);
    for (double v : z.values) any_negative = any_negative || v < 0.0;
    const auto y = decoder_forward(ae, random_latent(128, s + 10));
    for (float v : y.values()) CHECK((v > 0.0f && v < 1.0f));
  }
  CHECK(any_negative);

  // Saturating latents still decode strictly inside (0, 1).
  LatentCode huge{std::vector<double>(128, 1e3)};
  for (float v : decoder_forward(ae, huge).values()) CHECK((v > 0.0f && v < 1.0f));
  CHECK_THROWS_AS(decoder_forward(ae, LatentCode{std::vector<double>(5, 0.0)}), DimensionError);
}

TEST_CASE("encoder bottleneck has no activation") {
  const auto ae = init_autoencoder(6, 16);
  Graph<double> g;
  ParamBinding<double> binding(ae.encoder);
  const auto x = g.leaf(Tensor<double>(kGridShape, std::vector<double>(FeatureGrid::kSize, 0.5)));
  const auto z = encoder_graph(g, x, binding.add_leaves(g, false));
  CHECK(g.node(z).kind == OpKind::kDense);
  CHECK(z.index == g.size() - 1);
}

TEST_CASE("decoder-to-classifier composite is differentiable end to end") {
  const auto ae = init_autoencoder(11);
  const auto clf = init_classifier(12, 5);
  Graph<double> g;
  ParamBinding<double> dec(ae.decoder);
  ParamBinding<double> cls(clf.params);
  const auto z0 = random_latent(128, 13);
  const auto z = g.leaf(Tensor<double>({128}, z0.values, true), "z");
  const auto x = reshape(g, decoder_graph(g, z, dec.add_leaves(g, false)), kGridShape);
  const auto logits = classifier_graph(g, x, cls.add_leaves(g, false));
  const auto target = select(g, logits, 2);
  const auto report = check_gradients(g, target, {.step = 1e-5});
  MESSAGE("composite max rel err " << report.max_rel_err << " excluded " << report.excluded);
  CHECK(report.max_rel_err < 1e-4);
  CHECK(report.checked >= 32);
}

TEST_CASE("classifier parameter gradients match finite differences (sampled)") {
  const auto clf = init_classifier(14, 4);
  Graph<double> g;
  ParamBinding<double> cls(clf.params);
  const auto params = cls.add_leaves(g, true);
  const auto x = g.leaf(Tensor<double>(kGridShape, [] {
    const auto grid = random_grid(15);
    return std::vector<double>(grid.values().begin(), grid.values().end());
  }()));
  const auto loss = cross_entropy(g, softmax(g, classifier_graph(g, x, params)), 1);
  const auto report = check_gradients(g, loss, {.step = 1e-5, .max_elements_per_tensor = 12});
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round trip and error paths") {
  const auto clf = init_classifier(21, 6);
  save_checkpoint(clf, temp_path("clf.amxc"));
  const auto back = load_classifier(temp_path("clf.amxc"));
  CHECK(back.num_classes == 6);
  CHECK(back.seed == 21);
  CHECK(same_params(back.params, clf.params));

  const auto ae = init_autoencoder(22, 32);
  save_checkpoint(ae, temp_path("ae.amxc"));
  const auto ae_back = load_autoencoder(temp_path("ae.amxc"));
  CHECK(ae_back.latent_dim == 32);
  CHECK(same_params(ae_back.encoder, ae.encoder));
  CHECK(same_params(ae_back.decoder, ae.decoder));
  CHECK_THROWS_AS(load_classifier(temp_path("ae.amxc")), FormatError);

  auto rewrite = [](const fs::path& from, const fs::path& to, auto&& edit) {
    std::ifstream in(from, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    edit(bytes);
    std::ofstream(to, std::ios::binary) << bytes;
  };

  SUBCASE("bad magic") {
    rewrite(temp_path("clf.amxc"), temp_path("magic.amxc"), [](std::string& b) { b.replace(0, 4, "XXXX"); });
    try {
      load_checkpoint(temp_path("magic.amxc"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
    }
  }
  SUBCASE("version mismatch names both versions") {
    rewrite(temp_path("clf.amxc"), temp_path("ver.amxc"), [](std::string& b) { b[4] = 2; });
    try {
      load_checkpoint(temp_path("ver.amxc"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("version 2") != std::string::npos);
      CHECK(msg.find("version 1") != std::string::npos);
    }
  }
  SUBCASE("header declaring more tensors than the payload holds") {
    // Five tiny tensors declared, four written.
    ParamSet four;
    for (int i = 0; i < 4; ++i) four.push_back({"t" + std::to_string(i), {2}, {1.0f, 2.0f}});
    std::string meta = R"({"arch":"x","K":null,"latent_dim":null,"seed":0,"tensors":[)";
    for (int i = 0; i < 5; ++i) meta += std::string(i ? "," : "") + "[\"t" + std::to_string(i) + "\",[2]]";
    meta += "]}";
    std::string bytes = "AMXC";
    auto u32 = [&](std::uint32_t v) {
      for (int i = 0; i < 4; ++i) bytes.push_back(char((v >> (8 * i)) & 0xff));
    };
    u32(1);
    u32(static_cast<std::uint32_t>(meta.size()));
    bytes += meta;
    for (const auto& t : four)
      for (float v : t.values) u32(std::bit_cast<std::uint32_t>(v));
    std::ofstream(temp_path("short.amxc"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(temp_path("short.amxc")), CorruptionError);
  }
  SUBCASE("truncated payload") {
    rewrite(temp_path("clf.amxc"), temp_path("trunc.amxc"), [](std::string& b) { b.resize(b.size() - 8); });
    CHECK_THROWS_AS(load_checkpoint(temp_path("trunc.amxc")), CorruptionError);
  }
}
