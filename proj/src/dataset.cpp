#include "mas3/dataset.hpp"

#include "mas3/error.hpp"
#include "mas3/eval.hpp"

namespace mas3 {

void LabeledDataset::validate() const {
  if (images.rank() != 4) {
    throw ValidationError("dataset images must be N x W x H x C, got " +
                          shape_string(images.shape()));
  }
  if (labels.size() != count() * pixels_per_image()) {
    throw ValidationError("dataset has " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(count() * pixels_per_image()) +
                          " pixels");
  }
  if (num_classes == 0) throw ValidationError("dataset declares zero classes");
  if (!images.all_finite()) throw ValidationError("dataset has non-finite pixel values");
  for (int y : labels) {
    if (y == kIgnoreLabel) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
  }
}

std::vector<double> label_frequencies(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> freq(num_classes, 0.0);
  std::size_t total = 0;
  for (int y : labels) {
    if (y == kIgnoreLabel || y < 0 || static_cast<std::size_t>(y) >= num_classes) continue;
    freq[static_cast<std::size_t>(y)] += 1.0;
    ++total;
  }
  if (total == 0) throw InvalidInput("label_frequencies: no labeled pixels");
  for (auto& f : freq) f /= static_cast<double>(total);
  return freq;
}

}  // namespace mas3
