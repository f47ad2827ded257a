#include <cmath>
#include <vector>

#include "doctest.h"
#include "fftat/patch_embed.hpp"
#include "fftat/rng.hpp"

using namespace fftat;

namespace {

RunConfig tiny_cfg() {
  RunConfig cfg;
  cfg.image_side = 16;
  cfg.patch_side = 4;  // 4x4 grid, P = 16, patch_dim = 48
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.classes = 2;
  return cfg;
}

Image random_image(Rng& rng, std::size_t side) {
  Image img(side, side);
  for (float& v : img.data) v = float(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("patch grid arithmetic: counts and flattened dimension") {
  const RunConfig cfg = tiny_cfg();
  CHECK(cfg.patches_per_side() == 4);
  CHECK(cfg.patch_count() == 16);
  CHECK(cfg.patch_dim() == 48);

  Rng rng(0);
  std::vector<Image> batch{random_image(rng, 16), random_image(rng, 16)};
  const Tensor<double> p = extract_patches<double>(batch, 16, 4);
  REQUIRE(p.shape == Shape({2, 16, 48}));
}

TEST_CASE("extract and reassemble are exact inverses") {
  Rng rng(7);
  const Image img = random_image(rng, 32);
  const Tensor<double> p = extract_patches<double>({img}, 32, 8);
  REQUIRE(p.shape == Shape({1, 16, 192}));

  Tensor<double> one({16, 192});
  std::copy(p.data.begin(), p.data.end(), one.data.begin());
  const Image back = reassemble_patches(one, 32, 8);
  REQUIRE(back.h == 32);
  REQUIRE(back.w == 32);
  CHECK(back.data == img.data);  // bitwise: no pixel dropped, duplicated, or rounded
}

TEST_CASE("patch layout: patches scan row-major, interiors channel-major") {
  // image pixel value encodes (c, y, x); check a few fixed positions
  Image img(8, 8);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) img.at(c, y, x) = float(c * 100 + y * 10 + x);

  const Tensor<double> p = extract_patches<double>({img}, 8, 4);
  // small integers are exact in float and double, so compare exactly
  // patch 1 is the top-right quadrant (py = 0, px = 1)
  CHECK(p.at(0, 1, 0) == double(0 * 100 + 0 * 10 + 4));
  // inside a patch, index = (c * side + y) * side + x
  CHECK(p.at(0, 1, (1 * 4 + 2) * 4 + 3) == double(1 * 100 + 2 * 10 + 7));
  // patch 2 starts the second grid row (py = 1, px = 0)
  CHECK(p.at(0, 2, 0) == double(0 * 100 + 4 * 10 + 0));
}

TEST_CASE("extract_patches validates geometry") {
  Rng rng(1);
  CHECK_THROWS_AS(extract_patches<double>({}, 16, 4), Error);
  CHECK_THROWS_AS(extract_patches<double>({random_image(rng, 16)}, 16, 5), Error);
  CHECK_THROWS_AS(extract_patches<double>({random_image(rng, 8)}, 16, 4), Error);
}

TEST_CASE("token shapes: class token prepended, projection applied per patch") {
  const RunConfig cfg = tiny_cfg();
  Rng rng(3);
  ModelParamsT<Tensor<double>> params = init_params<double>(cfg, rng);

  Tape<double> t;
  auto pv = params_to_tape(t, params, false);
  std::vector<Image> batch{random_image(rng, 16), random_image(rng, 16), random_image(rng, 16)};
  auto patches = t.constant(extract_patches<double>(batch, 16, 4));
  auto tokens = embed_tokens(t, patches, pv);
  CHECK(t.val(tokens).shape == Shape({3, 17, 8}));
}

TEST_CASE("zero pixels and zero weights leave only the position embedding") {
  const RunConfig cfg = tiny_cfg();
  ModelParamsT<Tensor<double>> params = zero_params<double>(cfg);
  Rng rng(5);
  for (auto& v : params.pos.data) v = rng.normal(0.0, 1.0);

  Tape<double> t;
  auto pv = params_to_tape(t, params, false);
  std::vector<Image> batch{Image(16, 16), Image(16, 16)};
  auto tokens = embed_tokens(t, t.constant(extract_patches<double>(batch, 16, 4)), pv);
  const Tensor<double>& tk = t.val(tokens);
  REQUIRE(tk.shape == Shape({2, 17, 8}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t n = 0; n < 17; ++n)
      for (std::size_t e = 0; e < 8; ++e) CHECK(tk.at(b, n, e) == params.pos.at(n, e));
}

TEST_CASE("locality: editing one patch changes exactly that token") {
  const RunConfig cfg = tiny_cfg();
  Rng rng(9);
  ModelParamsT<Tensor<double>> params = init_params<double>(cfg, rng);

  auto run = [&](const Image& img) {
    Tape<double> t;
    auto pv = params_to_tape(t, params, false);
    auto tokens = embed_tokens(t, t.constant(extract_patches<double>({img}, 16, 4)), pv);
    return t.val(tokens);
  };

  Image img = random_image(rng, 16);
  const Tensor<double> before = run(img);
  img.at(1, 6, 10) += 0.25f;  // patch row 1, col 2 -> patch index 6 -> token 7
  const Tensor<double> after = run(img);

  for (std::size_t n = 0; n < 17; ++n) {
    bool changed = false;
    for (std::size_t e = 0; e < 8; ++e) changed |= before.at(0, n, e) != after.at(0, n, e);
    CHECK(changed == (n == 7));
  }
}

TEST_CASE("embedding is affine in the pixels") {
  const RunConfig cfg = tiny_cfg();
  Rng rng(11);
  ModelParamsT<Tensor<double>> params = init_params<double>(cfg, rng);

  auto embed = [&](const Tensor<double>& patches) {
    Tape<double> t;
    auto pv = params_to_tape(t, params, false);
    return t.val(embed_tokens(t, t.constant(patches), pv));
  };

  Image a = random_image(rng, 16), b = random_image(rng, 16);
  Tensor<double> pa = extract_patches<double>({a}, 16, 4);
  Tensor<double> pb = extract_patches<double>({b}, 16, 4);
  Tensor<double> psum = pa;
  for (std::size_t i = 0; i < psum.data.size(); ++i) psum.data[i] += pb.data[i];
  Tensor<double> pzero = Tensor<double>::zeros(pa.shape);

  const Tensor<double> ea = embed(pa), eb = embed(pb), esum = embed(psum), e0 = embed(pzero);
  // affine map: E(a + b) + E(0) = E(a) + E(b)
  for (std::size_t i = 0; i < ea.data.size(); ++i)
    CHECK(std::fabs(esum.data[i] + e0.data[i] - ea.data[i] - eb.data[i]) <= 1e-12);
}
