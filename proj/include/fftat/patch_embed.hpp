#pragma once

#include <cstddef>
#include <vector>

#include "fftat/image_io.hpp"
#include "fftat/params.hpp"
#include "fftat/tape.hpp"
#include "fftat/tensor.hpp"

namespace fftat {

// Patch layout: patches scan the image row-major (p = py * grid + px); inside
// a patch, values are channel-major then row-major (c, y, x). extract and
// reassemble are exact inverses, pixels are neither dropped nor duplicated.

template <typename T>
Tensor<T> extract_patches(const std::vector<Image>& images, std::size_t image_side,
                          std::size_t patch_side) {
  check(!images.empty(), "extract_patches: empty batch");
  check(patch_side > 0 && image_side % patch_side == 0, "image side ", image_side,
        " not divisible by patch side ", patch_side);
  const std::size_t grid = image_side / patch_side;
  const std::size_t p_count = grid * grid;
  const std::size_t p_dim = 3 * patch_side * patch_side;
  Tensor<T> out({images.size(), p_count, p_dim});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = images[b];
    check(img.h == image_side && img.w == image_side, "extract_patches: image ", b, " is ",
          img.h, "x", img.w, ", want ", image_side, "x", image_side);
    for (std::size_t py = 0; py < grid; ++py)
      for (std::size_t px = 0; px < grid; ++px) {
        const std::size_t p = py * grid + px;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = 0; y < patch_side; ++y)
            for (std::size_t x = 0; x < patch_side; ++x)
              out.at(b, p, (c * patch_side + y) * patch_side + x) =
                  T(img.at(c, py * patch_side + y, px * patch_side + x));
      }
  }
  return out;
}

template <typename T>
Image reassemble_patches(const Tensor<T>& patches, std::size_t image_side,
                         std::size_t patch_side) {
  const std::size_t grid = image_side / patch_side;
  check(patches.rank() == 2 && patches.dim(0) == grid * grid &&
            patches.dim(1) == 3 * patch_side * patch_side,
        "reassemble_patches: got shape ", shape_str(patches.shape));
  Image img(image_side, image_side);
  for (std::size_t py = 0; py < grid; ++py)
    for (std::size_t px = 0; px < grid; ++px) {
      const std::size_t p = py * grid + px;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < patch_side; ++y)
          for (std::size_t x = 0; x < patch_side; ++x)
            img.at(c, py * patch_side + y, px * patch_side + x) =
                float(patches.at(p, (c * patch_side + y) * patch_side + x));
    }
  return img;
}

// patches (B x P x patch_dim) -> tokens (B x (1+P) x d): pixels centered to
// [-0.5, 0.5] (otherwise the bright background dominates every projection),
// linear projection, class token prepended at index 0, position embedding
// added to every token
template <typename T>
Var<T> embed_tokens(Tape<T>& tape, Var<T> patch_mat, const ModelParamsT<Var<T>>& params) {
  const Tensor<T>& pm = tape.val(patch_mat);
  check(pm.rank() == 3, "embed_tokens: want B x P x patch_dim, got ", shape_str(pm.shape));
  const std::size_t b = pm.dim(0);
  const std::size_t d = tape.val(params.cls).dim(0);
  Var<T> centered = ops::add_scalar(patch_mat, T(-0.5));
  Var<T> x = ops::matmul(centered, params.patch_w);             // B x P x d
  Var<T> cls_tok = ops::tile0(ops::reshape(params.cls, {1, d}), b);  // B x 1 x d
  Var<T> tokens = ops::concat(cls_tok, x, 1);                   // B x (1+P) x d
  return ops::add_bcast0(tokens, params.pos);
}

}  // namespace fftat
