#include <doctest.h>

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <cstring>
#include <filesystem>
#include <vector>

#include "dcf/gmf.hpp"
#include "dcf/rng.hpp"

using namespace dcf;

namespace {

GmfModel make_model(std::int32_t users = 4, std::int32_t items = 5, int dim = 2,
                    std::uint64_t seed = 1) {
  return GmfModel(users, items, dim, seed);
}

void set_row(std::span<double> row, std::initializer_list<double> values) {
  std::size_t j = 0;
  for (const double v : values) row[j++] = v;
}

}  // namespace

TEST_CASE("predict evaluates the sigmoid of the weighted product") {
  GmfModel model = make_model();
  set_row(model.mutable_user_row(0), {1.0, 0.0});
  set_row(model.mutable_item_row(0), {1.0, 0.0});
  CHECK(model.predict(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));

  set_row(model.mutable_user_row(1), {0.0, 0.0});
  CHECK(model.predict(1, 0) == doctest::Approx(0.5));

  set_row(model.mutable_user_row(2), {2.0, 0.0});
  set_row(model.mutable_item_row(1), {-2.0, 0.0});
  CHECK(model.predict(2, 1) == doctest::Approx(0.0180).epsilon(1e-3));

  CHECK_THROWS_AS(model.predict(99, 0), std::invalid_argument);
}

TEST_CASE("init draws small normals, unit output weights, deterministic") {
  const GmfModel a(943, 50, 32, 7);
  const GmfModel b(943, 50, 32, 7);
  CHECK(a.raw_user_embeddings().size() == 943u * 32u);
  CHECK(a.raw_user_embeddings() == b.raw_user_embeddings());
  CHECK(a.raw_item_embeddings() == b.raw_item_embeddings());
  for (const double h : a.output_weights()) CHECK(h == 1.0);

  double max_abs = 0.0;
  for (const double x : a.raw_user_embeddings()) max_abs = std::max(max_abs, std::abs(x));
  CHECK(max_abs < 0.1);  // stddev 0.01

  const GmfModel c(943, 50, 32, 8);
  CHECK(a.raw_user_embeddings() != c.raw_user_embeddings());
}

TEST_CASE("bce_loss hand values and clamped edges") {
  CHECK(bce_loss(0.5, 1.0) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(bce_loss(0.9, 0.0) == doctest::Approx(2.3026).epsilon(1e-4));
  CHECK(bce_loss(1.0 - 1e-7, 1.0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::isfinite(bce_loss(0.0, 1.0)));
  CHECK(std::isfinite(bce_loss(1.0, 0.0)));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(99);
  OptimizerConfig opt;
  opt.embedding_dim = 8;
  double max_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    GmfModel model(3, 3, opt.embedding_dim, rng.next_u64());
    const std::int32_t user = static_cast<std::int32_t>(rng.below(3));
    const std::int32_t item = static_cast<std::int32_t>(rng.below(3));
    for (int j = 0; j < opt.embedding_dim; ++j) {
      model.mutable_user_row(user)[static_cast<std::size_t>(j)] = rng.normal(0.0, 0.5);
      model.mutable_item_row(item)[static_cast<std::size_t>(j)] = rng.normal(0.0, 0.5);
      model.mutable_output_weights()[static_cast<std::size_t>(j)] = rng.normal(0.0, 0.5);
    }
    const double label = rng.below(2) ? 1.0 : 0.0;
    const auto grad = model.example_gradient(user, item, label);

    constexpr double h = 1e-5;
    const auto fd = [&](std::span<double> params, std::size_t j) {
      const double saved = params[j];
      params[j] = saved + h;
      const double up = bce_loss(model.predict(user, item), label);
      params[j] = saved - h;
      const double down = bce_loss(model.predict(user, item), label);
      params[j] = saved;
      return (up - down) / (2.0 * h);
    };
    for (int j = 0; j < opt.embedding_dim; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double fdu = fd(model.mutable_user_row(user), ju);
      const double fdi = fd(model.mutable_item_row(item), ju);
      const double fdh = fd(model.mutable_output_weights(), ju);
      const auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
      };
      max_rel = std::max({max_rel, rel(grad.user[ju], fdu), rel(grad.item[ju], fdi),
                          rel(grad.output[ju], fdh)});
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("backward_and_step applies one bias-corrected Adam step") {
  OptimizerConfig opt;
  opt.embedding_dim = 2;
  GmfModel model = make_model(2, 2, 2, 3);
  set_row(model.mutable_user_row(0), {0.3, -0.2});
  set_row(model.mutable_item_row(1), {0.5, 0.4});

  const auto grad = model.example_gradient(0, 1, 1.0);
  const auto p_before = std::vector<double>(model.user_row(0).begin(), model.user_row(0).end());

  const BatchExample ex{0, 0, 1, 1};
  const std::uint8_t w = 1;
  const auto loss = model.backward_and_step({&ex, 1}, {&w, 1}, opt);
  REQUIRE(loss.has_value());

  // first step with zero moments: update = lr * g / (|g| + eps)
  for (std::size_t j = 0; j < 2; ++j) {
    const double g = grad.user[j];
    const double expected = p_before[j] - opt.learning_rate * g / (std::sqrt(g * g) + opt.epsilon);
    CHECK(model.user_row(0)[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("weight-0 samples do not contribute gradients") {
  OptimizerConfig opt;
  opt.embedding_dim = 4;
  GmfModel a = make_model(3, 3, 4, 11);
  GmfModel b = a;

  const std::vector<BatchExample> full = {{0, 0, 1, 1}, {1, 1, 2, 0}, {2, 2, 0, 1}};
  const std::vector<std::uint8_t> gated = {1, 0, 1};
  const std::vector<BatchExample> reduced = {{0, 0, 1, 1}, {2, 2, 0, 1}};
  const std::vector<std::uint8_t> ones = {1, 1};

  a.backward_and_step({full.data(), full.size()}, {gated.data(), gated.size()}, opt);
  b.backward_and_step({reduced.data(), reduced.size()}, {ones.data(), ones.size()}, opt);
  CHECK(a.raw_user_embeddings() == b.raw_user_embeddings());
  CHECK(a.raw_item_embeddings() == b.raw_item_embeddings());
}

TEST_CASE("all-dropped batch is a no-op with a warning signal") {
  OptimizerConfig opt;
  GmfModel model = make_model(2, 2, 32, 5);
  const auto before = model.raw_user_embeddings();
  const std::vector<BatchExample> batch = {{0, 0, 1, 1}};
  const std::vector<std::uint8_t> weights = {0};
  const auto loss = model.backward_and_step({batch.data(), batch.size()},
                                            {weights.data(), weights.size()}, opt);
  CHECK(!loss.has_value());
  CHECK(model.raw_user_embeddings() == before);
}

TEST_CASE("exact zero gradient leaves parameters unchanged") {
  OptimizerConfig opt;
  opt.embedding_dim = 1;
  GmfModel model = make_model(1, 1, 1, 2);
  // logit large enough that sigmoid rounds to exactly 1.0
  model.mutable_user_row(0)[0] = 50.0;
  model.mutable_item_row(0)[0] = 1.0;
  REQUIRE(model.predict(0, 0) == 1.0);

  const auto p = model.raw_user_embeddings();
  const auto q = model.raw_item_embeddings();
  const BatchExample ex{0, 0, 0, 1};
  const std::uint8_t w = 1;
  model.backward_and_step({&ex, 1}, {&w, 1}, opt);
  CHECK(model.raw_user_embeddings() == p);
  CHECK(model.raw_item_embeddings() == q);
}

TEST_CASE("plain_mf freezes the output weights") {
  OptimizerConfig opt;
  opt.embedding_dim = 4;
  opt.plain_mf = true;
  GmfModel model = make_model(2, 2, 4, 9);
  const BatchExample ex{0, 0, 1, 1};
  const std::uint8_t w = 1;
  for (int step = 0; step < 5; ++step) model.backward_and_step({&ex, 1}, {&w, 1}, opt);
  for (const double h : model.output_weights()) CHECK(h == 1.0);
}

TEST_CASE("score_all_items sorts by logit with index tie-break") {
  GmfModel model = make_model(1, 3, 1, 4);
  model.mutable_user_row(0)[0] = 1.0;
  model.mutable_item_row(0)[0] = 0.5;
  model.mutable_item_row(1)[0] = 2.0;
  model.mutable_item_row(2)[0] = -1.0;

  CHECK(model.score_all_items(0, {}) == std::vector<std::int32_t>{1, 0, 2});
  const std::vector<std::int32_t> exclude = {1};
  CHECK(model.score_all_items(0, {exclude.data(), exclude.size()}) ==
        std::vector<std::int32_t>{0, 2});

  GmfModel tie = make_model(1, 5, 1, 4);
  tie.mutable_user_row(0)[0] = 1.0;
  for (int i = 0; i < 5; ++i) tie.mutable_item_row(i)[0] = 0.0;
  tie.mutable_item_row(4)[0] = 1.0;
  tie.mutable_item_row(2)[0] = 1.0;
  const auto ranked = tie.score_all_items(0, {});
  CHECK(ranked[0] == 2);  // equal logits: lower index first
  CHECK(ranked[1] == 4);
}

TEST_CASE("score_all_items returns a permutation of the non-excluded items") {
  GmfModel model = make_model(3, 20, 4, 12);
  const std::vector<std::int32_t> exclude = {3, 7, 11};
  auto ranked = model.score_all_items(1, {exclude.data(), exclude.size()});
  CHECK(ranked.size() == 17);
  std::sort(ranked.begin(), ranked.end());
  std::int32_t expected = 0;
  for (const auto item : ranked) {
    while (std::binary_search(exclude.begin(), exclude.end(), expected)) ++expected;
    CHECK(item == expected);
    ++expected;
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const GmfModel model(17, 23, 8, 77);
  const auto path = (std::filesystem::temp_directory_path() / "dcf_ckpt_test.ckpt").string();
  save_checkpoint(model, path);
  const GmfModel loaded = load_checkpoint(path);
  CHECK(loaded.num_users() == 17);
  CHECK(loaded.num_items() == 23);
  CHECK(loaded.dim() == 8);
  CHECK(loaded.raw_user_embeddings() == model.raw_user_embeddings());
  CHECK(loaded.raw_item_embeddings() == model.raw_item_embeddings());

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "DCF-CKPT v1 17 23 8");
}
