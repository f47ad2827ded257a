#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fftat/common.hpp"
#include "fftat/image_io.hpp"

namespace fftat {

struct LabeledSet {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::vector<std::string> class_names;  // index = label

  std::size_t size() const { return images.size(); }
};

// target-side training view: the type carries no labels, so the training
// path cannot read them even though the generator knows them
struct UnlabeledSet {
  std::vector<Image> images;
  std::size_t size() const { return images.size(); }
};

inline UnlabeledSet drop_labels(const LabeledSet& s) { return UnlabeledSet{s.images}; }

// labels used only by evaluate(); distinct from LabeledSet so a function
// signature makes the train/eval boundary visible
struct EvalSet {
  LabeledSet data;
};

struct DomainBatch {
  std::vector<Image> source_images;
  std::vector<std::size_t> source_labels;
  std::vector<Image> target_images;  // unlabeled by construction
};

enum class Domain { source, target };

// Synthetic glyph dataset: K glyph classes rendered at 32x32 with jittered
// position and size. Source images are clean dark-on-white grayscale; target
// images recolor the glyph, texture and tint the background, dim the scene,
// and add Gaussian pixel noise. Pure function of (seed, n_per_class, k).
LabeledSet gen_synthetic(std::uint64_t seed, std::size_t n_per_class, std::size_t k,
                         Domain domain);

// folder tree: root/<class_name>/*.ppm|png, labels from sorted class names
LabeledSet load_folder(const std::string& root, std::size_t image_side);

// inverse of load_folder for generated sets: writes root/<class>/img_NNNN.ppm
void write_folder(const std::string& root, const LabeledSet& set);

// Infinite deterministic batch stream. Source indices come from concatenated
// per-epoch permutations (each sample exactly once per epoch); the target
// stream cycles independently with its own permutations. batch_at is a pure
// function of (seed, step), which is what makes checkpoint resume exact.
class BatchStream {
 public:
  BatchStream(const LabeledSet& source, const UnlabeledSet& target, std::size_t batch,
              std::uint64_t seed);

  DomainBatch batch_at(std::uint64_t step) const;

  std::size_t batch_size() const { return batch_; }

 private:
  const LabeledSet& source_;
  const UnlabeledSet& target_;
  std::size_t batch_;
  std::uint64_t seed_;
};

// permutation of [0, n) for one epoch of one stream; exposed for tests
std::vector<std::size_t> epoch_perm(std::uint64_t seed, std::uint64_t stream_tag,
                                    std::uint64_t epoch, std::size_t n);

}  // namespace fftat
