#include "fedpu/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "fedpu/error.hpp"
#include "fedpu/rng.hpp"

namespace fedpu {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 3072;
constexpr std::size_t kCifarRecord = kCifarPixels + 1;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Example Dataset::example(std::size_t row) const {
  Example ex;
  ex.features.assign(features.row(row).data(), features.row(row).data() + features.cols());
  ex.true_label = labels[row];
  return ex;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int label : labels) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw FormatError("feature rows and label count disagree");
  }
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw FormatError("label " + std::to_string(label) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
  if (features.size() > 0 && (features.minCoeff() < 0.0 || features.maxCoeff() > 1.0)) {
    throw FormatError("feature component outside [0,1]");
  }
}

Dataset Dataset::from_examples(std::span<const Example> examples, int num_classes, Split split) {
  Dataset ds;
  ds.num_classes = num_classes;
  ds.split = split;
  const std::size_t dim = examples.empty() ? 0 : examples.front().features.size();
  ds.features.resize(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(dim));
  ds.labels.reserve(examples.size());
  for (std::size_t r = 0; r < examples.size(); ++r) {
    if (examples[r].features.size() != dim) {
      throw FormatError("examples do not share one feature dimensionality");
    }
    for (std::size_t c = 0; c < dim; ++c) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          examples[r].features[c];
    }
    ds.labels.push_back(examples[r].true_label);
  }
  ds.validate();
  return ds;
}

ClassPriorVector::ClassPriorVector(std::vector<double> priors) : priors_(std::move(priors)) {
  if (priors_.empty()) throw ConfigError("class prior vector is empty");
  double sum = 0.0;
  for (double p : priors_) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("class priors must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("class priors must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

ClassPriorVector ClassPriorVector::uniform(int num_classes) {
  if (num_classes < 1) throw ConfigError("need at least one class");
  return ClassPriorVector(
      std::vector<double>(static_cast<std::size_t>(num_classes), 1.0 / num_classes));
}

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path, Split split) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (images.size() < 16 || read_be32(images, 0) != kIdxImageMagic) {
    throw FormatError(images_path.string() + ": bad IDX image magic");
  }
  if (labels.size() < 8 || read_be32(labels, 0) != kIdxLabelMagic) {
    throw FormatError(labels_path.string() + ": bad IDX label magic");
  }
  const std::size_t n_images = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t n_labels = read_be32(labels, 4);
  const std::size_t dim = rows * cols;

  if (images.size() != 16 + n_images * dim) {
    throw ConsistencyError(images_path.string() + ": header declares " +
                           std::to_string(n_images) + " images but payload is " +
                           std::to_string(images.size() - 16) + " bytes");
  }
  if (labels.size() != 8 + n_labels) {
    throw ConsistencyError(labels_path.string() + ": header declares " +
                           std::to_string(n_labels) + " labels but payload is " +
                           std::to_string(labels.size() - 8) + " bytes");
  }
  if (n_images != n_labels) {
    throw ConsistencyError("image count " + std::to_string(n_images) +
                           " does not match label count " + std::to_string(n_labels));
  }

  Dataset ds;
  ds.num_classes = 10;
  ds.split = split;
  ds.features.resize(static_cast<Eigen::Index>(n_images), static_cast<Eigen::Index>(dim));
  ds.labels.resize(n_images);
  const unsigned char* pixels = images.data() + 16;
  double* out = ds.features.data();
  for (std::size_t i = 0; i < n_images * dim; ++i) out[i] = pixels[i] / 255.0;
  for (std::size_t i = 0; i < n_labels; ++i) ds.labels[i] = labels[8 + i];
  ds.validate();
  return ds;
}

Dataset load_cifar10_bin(std::span<const std::filesystem::path> batch_paths, Split split) {
  std::vector<std::vector<unsigned char>> files;
  std::size_t total = 0;
  for (const auto& path : batch_paths) {
    files.push_back(read_file(path));
    if (files.back().size() % kCifarRecord != 0) {
      throw FormatError(path.string() + ": length " + std::to_string(files.back().size()) +
                        " is not a multiple of " + std::to_string(kCifarRecord));
    }
    total += files.back().size() / kCifarRecord;
  }

  Dataset ds;
  ds.num_classes = 10;
  ds.split = split;
  ds.features.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(kCifarPixels));
  ds.labels.reserve(total);
  Eigen::Index row = 0;
  for (const auto& bytes : files) {
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord, ++row) {
      ds.labels.push_back(bytes[off]);
      double* out = ds.features.row(row).data();
      for (std::size_t p = 0; p < kCifarPixels; ++p) out[p] = bytes[off + 1 + p] / 255.0;
    }
  }
  ds.validate();
  return ds;
}

Dataset synth_gaussian(int num_classes, std::size_t dim, std::size_t n_per_class,
                       double separation, std::uint64_t seed, Split split) {
  if (num_classes < 2) throw ConfigError("synth_gaussian needs at least 2 classes");
  if (dim < 1) throw ConfigError("synth_gaussian needs dim >= 1");
  if (!(separation >= 0.0)) throw ConfigError("synth_gaussian needs separation >= 0");

  const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.split = split;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.labels.reserve(n);

  Rng rng(seed);
  const double scale = separation + 2.0 * kSynthMargin;
  Eigen::Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t hot = static_cast<std::size_t>(c) % dim;
    for (std::size_t s = 0; s < n_per_class; ++s, ++row) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double center = d == hot ? separation : 0.0;
        const double raw = center + rng.normal();
        ds.features(row, static_cast<Eigen::Index>(d)) =
            std::clamp((raw + kSynthMargin) / scale, 0.0, 1.0);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace fedpu
