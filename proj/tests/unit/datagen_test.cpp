#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mas3/datagen.hpp"
#include "mas3/error.hpp"
#include "mas3/eval.hpp"

namespace mas3 {
namespace {

namespace fs = std::filesystem;

// Mean of every channel over pixels labeled k.
std::vector<std::array<double, 3>> class_means(const LabeledDataset& d) {
  std::vector<std::array<double, 3>> sum(d.num_classes, {0, 0, 0});
  std::vector<double> n(d.num_classes, 0.0);
  for (std::size_t p = 0; p < d.labels.size(); ++p) {
    const auto k = static_cast<std::size_t>(d.labels[p]);
    for (std::size_t c = 0; c < 3; ++c) sum[k][c] += d.images[p * 3 + c];
    n[k] += 1.0;
  }
  for (std::size_t k = 0; k < d.num_classes; ++k) {
    for (auto& v : sum[k]) v /= n[k];
  }
  return sum;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mas3_datagen_test_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Datagen, LabelsInRangeForEveryLayout) {
  for (Layout layout : {Layout::kBlobs, Layout::kStripes, Layout::kChecker}) {
    DomainSpec spec = DomainSpec::shift3(1);
    spec.layout = layout;
    const auto d = generate_domain(spec, spec.shift, 6, 11);
    ASSERT_EQ(d.labels.size(), 6u * 32 * 32);
    std::vector<int> seen(3, 0);
    for (int l : d.labels) {
      ASSERT_GE(l, 0);
      ASSERT_LT(l, 3);
      seen[static_cast<std::size_t>(l)] = 1;
    }
    EXPECT_EQ(seen, std::vector<int>({1, 1, 1})) << to_string(layout);
    EXPECT_TRUE(d.images.all_finite());
  }
}

TEST(Datagen, ZeroShiftGivesEqualClassMeans) {
  DomainSpec spec = DomainSpec::shift3(5);
  spec.shift = DomainShift{};
  const auto pair = generate_domain_pair(spec, 40, 40);
  const auto ms = class_means(pair.source);
  const auto mt = class_means(pair.target);
  for (std::size_t k = 0; k < 3; ++k) {
    // Per-class noise plus texture sigma ~0.08 over >= ~10^4 pixels.
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(ms[k][c], mt[k][c], 0.01);
  }
}

TEST(Datagen, BrightnessOffsetShiftsClassMeans) {
  DomainSpec spec = DomainSpec::shift3(6);
  spec.shift = DomainShift{0.0, 0.3, 1.0, 0.0};
  const auto pair = generate_domain_pair(spec, 40, 40);
  const auto ms = class_means(pair.source);
  const auto mt = class_means(pair.target);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(mt[k][c] - ms[k][c], 0.3, 0.01);
  }
}

TEST(Datagen, SameSeedIsIdentical) {
  const DomainSpec spec = DomainSpec::shift3();
  const auto a = generate_domain_pair(spec, 3, 3);
  const auto b = generate_domain_pair(spec, 3, 3);
  EXPECT_EQ(a.source.images, b.source.images);
  EXPECT_EQ(a.target.images, b.target.images);
  EXPECT_EQ(a.target.labels, b.target.labels);
}

TEST(Datagen, LabelsAreShiftInvariant) {
  const DomainSpec spec = DomainSpec::shift3();
  const auto a = generate_domain(spec, DomainShift{}, 4, 77);
  const auto b = generate_domain(spec, DomainShift{40.0, -0.1, 2.0, 3.0}, 4, 77);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, b.images);
}

TEST(Datagen, ImageDependsOnlyOnIndex) {
  const DomainSpec spec = DomainSpec::shift3();
  const auto a = generate_domain(spec, spec.shift, 2, 9);
  const auto b = generate_domain(spec, spec.shift, 5, 9);
  EXPECT_EQ(std::memcmp(a.images.raw(), b.images.raw(), a.images.size() * sizeof(double)), 0);
}

TEST(Datagen, CollidingColorsWarn) {
  DomainSpec spec = DomainSpec::shift3();
  spec.classes[1].color = spec.classes[0].color;
  const auto pair = generate_domain_pair(spec, 1, 1);
  EXPECT_FALSE(pair.warnings.empty());
  EXPECT_DOUBLE_EQ(pair.separability, 0.0);
  EXPECT_TRUE(generate_domain_pair(DomainSpec::shift3(), 1, 1).warnings.empty());
}

TEST(Datagen, InvalidSpecRejected) {
  DomainSpec spec = DomainSpec::shift3();
  spec.classes.pop_back();
  EXPECT_THROW(generate_domain(spec, {}, 1, 0), InvalidInput);
  EXPECT_THROW(generate_domain_pair(DomainSpec::shift3(), 0, 1), InvalidInput);
  EXPECT_THROW(layout_from_string("spiral"), InvalidInput);
}

TEST(DatasetIo, RoundTripIsBitExact) {
  const auto d = generate_domain(DomainSpec::shift3(), {}, 3, 4);
  const auto dir = scratch("roundtrip");
  save_dataset(dir, d, "target");
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.num_classes, d.num_classes);
  EXPECT_EQ(back.labels, d.labels);
  ASSERT_EQ(back.images.shape(), d.images.shape());
  EXPECT_EQ(std::memcmp(back.images.raw(), d.images.raw(), d.images.size() * sizeof(double)), 0);
  EXPECT_EQ(dataset_role(dir), "target");
  EXPECT_EQ(load_dataset_images(dir), d.images);
  fs::remove_all(dir);
}

TEST(DatasetIo, TruncatedImagesAreCorrupt) {
  const auto d = generate_domain(DomainSpec::shift3(), {}, 2, 4);
  const auto dir = scratch("truncated");
  save_dataset(dir, d, "source");
  const auto file = dir / "images.tnsr";
  fs::resize_file(file, fs::file_size(file) - 5);
  EXPECT_THROW(load_dataset(dir), CorruptFile);
  fs::remove_all(dir);
}

TEST(DatasetIo, ManifestClassCountMismatchIsValidationError) {
  const auto d = generate_domain(DomainSpec::shift3(), {}, 2, 4);
  const auto dir = scratch("kmismatch");
  save_dataset(dir, d, "source");
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"num_classes\": 3");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 16, "\"num_classes\": 2");
  std::ofstream(dir / "manifest.json") << text;
  EXPECT_THROW(load_dataset(dir), ValidationError);
  fs::remove_all(dir);
}

TEST(DatasetIo, MissingManifestIsCorrupt) {
  const auto dir = scratch("missing");
  fs::create_directories(dir);
  EXPECT_THROW(load_dataset(dir), CorruptFile);
  fs::remove_all(dir);
}

TEST(LabelFrequencies, IgnoresIgnoreLabel) {
  const std::vector<int> labels = {0, 1, 1, kIgnoreLabel, 2, 1};
  const auto f = label_frequencies(labels, 3);
  EXPECT_DOUBLE_EQ(f[0], 0.2);
  EXPECT_DOUBLE_EQ(f[1], 0.6);
  EXPECT_DOUBLE_EQ(f[2], 0.2);
}

}  // namespace
}  // namespace mas3
