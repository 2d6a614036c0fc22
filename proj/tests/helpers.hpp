#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedpu/dataset.hpp"
#include "fedpu/rng.hpp"

namespace fedpu::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fedpu_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

// A labelled dataset where row r has class labels[r] and one random feature row.
inline Dataset labelled_dataset(const std::vector<int>& labels, int num_classes,
                                std::size_t dim = 3, std::uint64_t seed = 5) {
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = num_classes;
  ds.labels = labels;
  ds.features = RowMatrix(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) ds.features(r, c) = rng.uniform();
  }
  return ds;
}

inline std::vector<int> balanced_labels(int num_classes, std::size_t per_class) {
  std::vector<int> labels;
  for (std::size_t j = 0; j < per_class; ++j) {
    for (int c = 0; c < num_classes; ++c) labels.push_back(c);
  }
  return labels;
}

// Random softmax-valid probability rows.
inline RowMatrix random_probs(Rng& rng, Eigen::Index rows, Eigen::Index classes) {
  RowMatrix p(rows, classes);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      p(r, c) = 0.05 + rng.uniform();
      s += p(r, c);
    }
    p.row(r) /= s;
  }
  return p;
}

}  // namespace fedpu::testing
