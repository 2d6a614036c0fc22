#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fedpu {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split { kTrain, kTest };

std::string to_string(Split split);

struct Example {
  std::vector<double> features;
  int true_label = 0;
};

// A labelled pool of fixed-dimension feature vectors in [0,1]. The true label
// of every row is kept here; partitioning decides who may see it.
struct Dataset {
  RowMatrix features;       // size() x dim()
  std::vector<int> labels;  // true class per row, in [0, num_classes)
  int num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  Example example(std::size_t row) const;
  std::vector<std::size_t> class_counts() const;

  // Checks shape agreement, feature range and label range. Throws FormatError.
  void validate() const;

  static Dataset from_examples(std::span<const Example> examples, int num_classes,
                               Split split = Split::kTrain);
};

// Class priors pi_i > 0 with sum 1 (within 1e-9).
class ClassPriorVector {
 public:
  explicit ClassPriorVector(std::vector<double> priors);
  static ClassPriorVector uniform(int num_classes);

  double operator[](std::size_t i) const { return priors_[i]; }
  std::size_t size() const { return priors_.size(); }
  std::span<const double> values() const { return priors_; }

 private:
  std::vector<double> priors_;
};

// IDX pair reader: images magic 0x00000803, labels magic 0x00000801, big-endian
// header. Pixels are scaled by 1/255; C = 10.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path,
                       Split split = Split::kTrain);

// CIFAR-10 binary batches: records of 1 label byte followed by 3072 pixel bytes.
Dataset load_cifar10_bin(std::span<const std::filesystem::path> batch_paths,
                         Split split = Split::kTrain);

// Class i ~ N(separation * e_(i mod dim), I), mapped to [0,1] by
// x -> (x + kSynthMargin) / (separation + 2 * kSynthMargin) and clipped.
inline constexpr double kSynthMargin = 4.0;
Dataset synth_gaussian(int num_classes, std::size_t dim, std::size_t n_per_class,
                       double separation, std::uint64_t seed,
                       Split split = Split::kTrain);

}  // namespace fedpu
