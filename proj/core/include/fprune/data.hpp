#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fprune/tensor.hpp"

namespace fprune {

enum class Split : std::uint8_t { train, val, test };

// Images in [0,1] with integer class labels. Treated as immutable once built.
struct LabeledImageSet {
  Tensor images;  // [N,C,H,W]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  Shape image_shape() const;  // [C,H,W]

  // Throws DataError when labels and images disagree or a label is out of range.
  void validate() const;

  LabeledImageSet subset(std::span<const std::size_t> indices) const;
  Tensor gather_images(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

// Class c is an oriented grating (angle pi*c/K, random phase) plus a Gaussian
// blob placed on a ring at angle 2*pi*c/K, both jittered, plus pixel noise.
// Samples interleave classes: sample i has label i % num_classes.
LabeledImageSet generate_synthetic(std::size_t num_classes, std::size_t per_class,
                                   const Shape& image_shape, std::uint64_t seed,
                                   double noise = 0.15);

// IDX (MNIST-style) ubyte files: images magic 0x00000803, labels 0x00000801.
LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);

// One CIFAR-10 binary batch file (records of 1 label byte + 3072 pixel bytes).
LabeledImageSet load_cifar10_batch(const std::filesystem::path& path);

struct HoldoutSplit {
  LabeledImageSet train;
  LabeledImageSet val;
};

// Stratified, seeded hold-out split; per class round(n_c * val_fraction)
// samples (at least one, at most n_c - 1) go to validation.
HoldoutSplit holdout_split(const LabeledImageSet& train, double val_fraction, std::uint64_t seed);

}  // namespace fprune
