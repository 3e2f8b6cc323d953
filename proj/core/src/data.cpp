#include "fprune/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "fprune/errors.hpp"

namespace fprune {

Shape LabeledImageSet::image_shape() const {
  if (images.rank() != 4) return {};
  return {images.dim(1), images.dim(2), images.dim(3)};
}

void LabeledImageSet::validate() const {
  if (images.rank() != 4) throw DataError("images must be [N,C,H,W], got " + shape_string(images.shape()));
  if (images.dim(0) != labels.size()) {
    throw DataError(std::to_string(labels.size()) + " labels for " + std::to_string(images.dim(0)) +
                    " images");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DataError("label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

Tensor LabeledImageSet::gather_images(std::span<const std::size_t> indices) const {
  const Shape s = image_shape();
  const std::size_t per = shape_size(s);
  Tensor out({indices.size(), s[0], s[1], s[2]});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = images.data().subspan(indices[i] * per, per);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<long>(i * per));
  }
  return out;
}

std::vector<int> LabeledImageSet::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

LabeledImageSet LabeledImageSet::subset(std::span<const std::size_t> indices) const {
  LabeledImageSet out;
  out.images = gather_images(indices);
  out.labels = gather_labels(indices);
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

std::vector<std::size_t> LabeledImageSet::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

LabeledImageSet generate_synthetic(std::size_t num_classes, std::size_t per_class,
                                   const Shape& image_shape, std::uint64_t seed, double noise) {
  if (per_class < 1) throw DataError("per_class must be >= 1");
  if (num_classes < 1) throw DataError("num_classes must be >= 1");
  if (image_shape.size() != 3) throw DataError("image shape must be [C,H,W]");
  const std::size_t c = image_shape[0], h = image_shape[1], w = image_shape[2];
  const std::size_t n = num_classes * per_class;

  LabeledImageSet set;
  set.images = Tensor({n, c, h, w});
  set.labels.resize(n);
  set.num_classes = num_classes;

  Rng rng(derive_seed(seed, {0x73796e7468ULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double extent = static_cast<double>(std::min(h, w));
  const double radius = 0.3 * extent;
  const double sigma = 0.12 * extent;
  const double freq = 1.0 / std::max(3.0, 0.3 * extent);
  const double pi = std::numbers::pi;

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % num_classes;
    set.labels[i] = static_cast<int>(cls);
    const double k = static_cast<double>(cls) / static_cast<double>(num_classes);
    const double theta = pi * k + 0.05 * gauss(rng);
    const double phase = 2.0 * pi * unit(rng);
    const double cx = 0.5 * static_cast<double>(w - 1) + radius * std::cos(2.0 * pi * k) +
                      (unit(rng) - 0.5) * 2.0;
    const double cy = 0.5 * static_cast<double>(h - 1) + radius * std::sin(2.0 * pi * k) +
                      (unit(rng) - 0.5) * 2.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x), fy = static_cast<double>(y);
        const double grating =
            std::sin(2.0 * pi * freq * (fx * std::cos(theta) + fy * std::sin(theta)) + phase);
        const double d2 = (fx - cx) * (fx - cx) + (fy - cy) * (fy - cy);
        const double blob = std::exp(-d2 / (2.0 * sigma * sigma));
        const double base = 0.3 + 0.15 * grating + 0.5 * blob;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double tint = 1.0 - 0.1 * static_cast<double>(ch);
          set.images.at(i, ch, y, x) = std::clamp(tint * base + noise * gauss(rng), 0.0, 1.0);
        }
      }
    }
  }
  return set;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& p) {
  if (b.size() < off + 4) throw DataError("'" + p.string() + "' is truncated");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace

LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const auto img_magic = be32(img, 0, images_path);
  if (img_magic != 0x00000803) {
    throw DataError("'" + images_path.string() + "' is not an IDX image file (magic " +
                    std::to_string(img_magic) + ")");
  }
  const auto lab_magic = be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801) {
    throw DataError("'" + labels_path.string() + "' is not an IDX label file (magic " +
                    std::to_string(lab_magic) + ")");
  }
  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t nl = be32(lab, 4, labels_path);
  if (n != nl) {
    throw DataError("image file holds " + std::to_string(n) + " images but label file holds " +
                    std::to_string(nl) + " labels");
  }
  if (img.size() != 16 + n * rows * cols) throw DataError("'" + images_path.string() + "' has the wrong length");
  if (lab.size() != 8 + n) throw DataError("'" + labels_path.string() + "' has the wrong length");

  LabeledImageSet set;
  set.images = Tensor({n, 1, rows, cols});
  for (std::size_t i = 0; i < n * rows * cols; ++i) set.images[i] = img[16 + i] / 255.0;
  set.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    set.labels[i] = lab[8 + i];
    max_label = std::max(max_label, set.labels[i]);
  }
  set.num_classes = static_cast<std::size_t>(max_label) + 1;
  return set;
}

LabeledImageSet load_cifar10_batch(const std::filesystem::path& path) {
  constexpr std::size_t pixels = 3 * 32 * 32;
  constexpr std::size_t record = 1 + pixels;
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % record != 0) {
    throw DataError("'" + path.string() + "' is not a CIFAR-10 binary batch");
  }
  const std::size_t n = bytes.size() / record;
  LabeledImageSet set;
  set.images = Tensor({n, 3, 32, 32});
  set.labels.resize(n);
  set.num_classes = 10;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* r = bytes.data() + i * record;
    if (r[0] > 9) throw DataError("CIFAR-10 label " + std::to_string(r[0]) + " out of range");
    set.labels[i] = r[0];
    for (std::size_t j = 0; j < pixels; ++j) set.images[i * pixels + j] = r[1 + j] / 255.0;
  }
  return set;
}

HoldoutSplit holdout_split(const LabeledImageSet& train, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DataError("val_fraction must lie strictly between 0 and 1");
  }
  std::vector<std::vector<std::size_t>> by_class(train.num_classes);
  for (std::size_t i = 0; i < train.size(); ++i) by_class.at(static_cast<std::size_t>(train.labels[i])).push_back(i);

  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  std::vector<std::size_t> tr, va;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw DataError("class " + std::to_string(c) + " has fewer than 2 samples; cannot split");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto nv = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
    nv = std::clamp<std::size_t>(nv, 1, idx.size() - 1);
    va.insert(va.end(), idx.begin(), idx.begin() + static_cast<long>(nv));
    tr.insert(tr.end(), idx.begin() + static_cast<long>(nv), idx.end());
  }
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  HoldoutSplit out{train.subset(tr), train.subset(va)};
  out.train.split = Split::train;
  out.val.split = Split::val;
  return out;
}

}  // namespace fprune
