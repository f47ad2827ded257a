#include "fftat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fftat/rng.hpp"

namespace fftat {

namespace {

namespace fs = std::filesystem;

constexpr std::size_t kSide = 32;

// stream tags for derive_seed; distinct constants keep streams independent
constexpr std::uint64_t kTagSourceImage = 11;
constexpr std::uint64_t kTagTargetImage = 12;
constexpr std::uint64_t kTagSourceEpoch = 21;
constexpr std::uint64_t kTagTargetEpoch = 22;

const char* const kGlyphNames[8] = {"square", "circle", "triangle", "cross",
                                    "diamond", "ring",   "hbars",    "checker"};

// glyph membership test in centered coordinates, radius r
bool glyph_hit(std::size_t cls, double dx, double dy, double r) {
  const double ax = std::fabs(dx), ay = std::fabs(dy);
  switch (cls) {
    case 0:  // square
      return ax <= r && ay <= r;
    case 1:  // circle
      return dx * dx + dy * dy <= r * r;
    case 2:  // triangle, apex up
      return ay <= r && ax <= (dy + r) / 2.0;
    case 3:  // cross
      return (ax <= r / 3.0 || ay <= r / 3.0) && ax <= r && ay <= r;
    case 4:  // diamond
      return ax + ay <= r;
    case 5: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
    }
    case 6: {  // horizontal bars
      if (ax > r || ay > r) return false;
      const double bar = r / 1.5;
      return (int(std::floor((dy + r) / bar)) % 2) == 0;
    }
    case 7: {  // checkerboard
      if (ax > r || ay > r) return false;
      const double cell = 2.0 * r / 3.0;
      return ((int(std::floor((dx + r) / cell)) + int(std::floor((dy + r) / cell))) % 2) == 0;
    }
    default:
      throw Error(strcat("glyph class ", cls, " out of range"));
  }
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);  // wrap to [0,1)
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (int(i) % 6) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

Image render_glyph(std::size_t cls, Domain domain, Rng& rng) {
  // shared geometry jitter so both domains cover the same shape manifold
  const double cx = kSide / 2.0 + rng.uniform(-3.0, 3.0);
  const double cy = kSide / 2.0 + rng.uniform(-3.0, 3.0);
  const double r = rng.uniform(7.0, 11.0);

  Image img(kSide, kSide);

  if (domain == Domain::source) {
    // clean grayscale glyph on white
    const double fg = rng.uniform(0.05, 0.35);
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 0; x < kSide; ++x) {
        const bool hit = glyph_hit(cls, x + 0.5 - cx, y + 0.5 - cy, r);
        const float v = float(hit ? fg : 1.0);
        img.at(0, y, x) = img.at(1, y, x) = img.at(2, y, x) = v;
      }
    return img;
  }

  // target: saturated dark foreground color, tinted sinusoid background,
  // global dimming, Gaussian pixel noise; glyph stays darker than the
  // background (same polarity as source) so the shift is in color, texture
  // and brightness, not in figure/ground contrast
  double fg[3];
  hsv_to_rgb(rng.uniform(), rng.uniform(0.6, 1.0), rng.uniform(0.1, 0.35), fg);
  double tint[3] = {rng.uniform(0.75, 1.0), rng.uniform(0.75, 1.0), rng.uniform(0.75, 1.0)};
  const double fx = rng.uniform(0.08, 0.2), fy = rng.uniform(0.08, 0.2);
  const double phx = rng.uniform(0.0, 1.0), phy = rng.uniform(0.0, 1.0);
  const double dim = rng.uniform(0.7, 1.05);

  for (std::size_t y = 0; y < kSide; ++y)
    for (std::size_t x = 0; x < kSide; ++x) {
      const bool hit = glyph_hit(cls, x + 0.5 - cx, y + 0.5 - cy, r);
      const double wave = std::sin(2.0 * M_PI * (fx * double(x) + phx)) *
                          std::sin(2.0 * M_PI * (fy * double(y) + phy));
      for (std::size_t c = 0; c < 3; ++c) {
        double v = hit ? fg[c] : (0.75 + 0.15 * wave) * tint[c];
        v = dim * v + rng.normal(0.0, 0.1);
        img.at(c, y, x) = float(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
      }
    }
  return img;
}

}  // namespace

LabeledSet gen_synthetic(std::uint64_t seed, std::size_t n_per_class, std::size_t k,
                         Domain domain) {
  check(k >= 2 && k <= 8, "synthetic generator supports 2..8 classes, got ", k);
  check(n_per_class > 0, "n_per_class must be positive");
  LabeledSet set;
  set.classes = k;
  for (std::size_t c = 0; c < k; ++c) set.class_names.push_back(kGlyphNames[c]);
  const std::uint64_t tag = domain == Domain::source ? kTagSourceImage : kTagTargetImage;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < n_per_class; ++i) {
      // one rng per image keyed by global index, so any image is
      // reproducible in isolation
      Rng rng(derive_seed(seed, tag, c * n_per_class + i));
      set.images.push_back(render_glyph(c, domain, rng));
      set.labels.push_back(c);
    }
  return set;
}

LabeledSet load_folder(const std::string& root, std::size_t image_side) {
  check(fs::is_directory(root), "dataset folder '", root, "' does not exist");
  std::vector<std::string> class_names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_names.push_back(e.path().filename().string());
  std::sort(class_names.begin(), class_names.end());
  check(!class_names.empty(), "dataset folder '", root, "' has no class subfolders");

  LabeledSet set;
  set.classes = class_names.size();
  set.class_names = class_names;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / class_names[c])) {
      const std::string ext = e.path().extension().string();
      if (ext == ".ppm" || ext == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    check(!files.empty(), "class folder '", root, "/", class_names[c],
          "' has no .ppm or .png images");
    for (const auto& f : files) {
      set.images.push_back(resize_nearest(load_image(f), image_side));
      set.labels.push_back(c);
    }
  }
  return set;
}

void write_folder(const std::string& root, const LabeledSet& set) {
  check(set.size() > 0, "refusing to write an empty dataset");
  check(set.class_names.size() == set.classes, "dataset is missing class names");
  for (std::size_t c = 0; c < set.classes; ++c)
    fs::create_directories(fs::path(root) / set.class_names[c]);
  std::vector<std::size_t> counter(set.classes, 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t c = set.labels[i];
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04zu.ppm", counter[c]++);
    write_ppm((fs::path(root) / set.class_names[c] / name).string(), set.images[i]);
  }
}

std::vector<std::size_t> epoch_perm(std::uint64_t seed, std::uint64_t stream_tag,
                                    std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, stream_tag, epoch));
  rng.shuffle(perm.begin(), perm.end());
  return perm;
}

BatchStream::BatchStream(const LabeledSet& source, const UnlabeledSet& target,
                         std::size_t batch, std::uint64_t seed)
    : source_(source), target_(target), batch_(batch), seed_(seed) {
  check(batch > 0, "batch size must be positive");
  check(batch <= source.size() && batch <= target.size(), "batch size ", batch,
        " exceeds dataset size (source ", source.size(), ", target ", target.size(), ")");
}

DomainBatch BatchStream::batch_at(std::uint64_t step) const {
  DomainBatch out;
  out.source_images.reserve(batch_);
  out.source_labels.reserve(batch_);
  out.target_images.reserve(batch_);

  auto gather = [&](std::size_t n, std::uint64_t tag, auto&& emit) {
    // global positions step*B .. step*B+B-1 in the concatenated epoch stream
    std::uint64_t epoch = step * batch_ / n;
    std::vector<std::size_t> perm = epoch_perm(seed_, tag, epoch, n);
    for (std::size_t j = 0; j < batch_; ++j) {
      const std::uint64_t g = step * batch_ + j;
      if (g / n != epoch) {
        epoch = g / n;
        perm = epoch_perm(seed_, tag, epoch, n);
      }
      emit(perm[g % n]);
    }
  };

  gather(source_.size(), kTagSourceEpoch, [&](std::size_t i) {
    out.source_images.push_back(source_.images[i]);
    out.source_labels.push_back(source_.labels[i]);
  });
  gather(target_.size(), kTagTargetEpoch,
         [&](std::size_t i) { out.target_images.push_back(target_.images[i]); });
  return out;
}

}  // namespace fftat
