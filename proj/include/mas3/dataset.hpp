#pragma once

#include <span>
#include <vector>

#include "mas3/tensor.hpp"

namespace mas3 {

// images: N x W x H x C, labels: N * W * H entries in [0, K) or 255 (ignore).
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t count() const { return images.rank() == 4 ? images.extent(0) : 0; }
  std::size_t width() const { return images.extent(1); }
  std::size_t height() const { return images.extent(2); }
  std::size_t channels() const { return images.extent(3); }
  std::size_t pixels_per_image() const { return width() * height(); }

  // Throws ValidationError on inconsistent shapes, non-finite pixels or
  // labels outside [0, K) other than the ignore value.
  void validate() const;
};

// Fraction of non-ignored pixels carrying each label.
std::vector<double> label_frequencies(std::span<const int> labels, std::size_t num_classes);

}  // namespace mas3
