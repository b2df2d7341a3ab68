#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "plgmi/data/dataset_registry.hpp"
#include "plgmi/error.hpp"

namespace plgmi::data {
namespace {

namespace fs = std::filesystem;

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Ten 28x28 images; image i has every pixel equal to 20 * i and label i.
fs::path write_tiny_mnist() {
  const auto root = fs::temp_directory_path() / "plgmi_tiny_mnist";
  fs::create_directories(root);
  std::ofstream img(root / "train-images-idx3-ubyte", std::ios::binary);
  write_be32(img, 0x0803);
  for (std::uint32_t d : {10u, 28u, 28u}) write_be32(img, d);
  for (int i = 0; i < 10; ++i) {
    std::string px(28 * 28, static_cast<char>(20 * i));
    img.write(px.data(), static_cast<std::streamsize>(px.size()));
  }
  std::ofstream lab(root / "train-labels-idx1-ubyte", std::ios::binary);
  write_be32(lab, 0x0801);
  write_be32(lab, 10);
  for (int i = 0; i < 10; ++i) lab.put(static_cast<char>(i));
  return root;
}

TEST(Registry, KnownNames) {
  EXPECT_TRUE(is_known_dataset("mnist"));
  EXPECT_TRUE(is_known_dataset("cifar10"));
  EXPECT_TRUE(is_known_dataset("solid-4x10"));
  EXPECT_FALSE(is_known_dataset("solid-4"));
  EXPECT_FALSE(is_known_dataset("imagenet"));
  EXPECT_THROW(load_raw("imagenet", "."), Error);
}

TEST(Registry, MissingFilesAreDataErrors) {
  try {
    load_raw("mnist", "/nonexistent/plgmi");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
}

TEST(Split, IdxLabelSplitIsDisjointAndRemapped) {
  const auto root = write_tiny_mnist();
  SplitSpec spec;
  spec.private_labels = {0, 1, 2, 3, 4};
  spec.public_labels = {5, 6, 7, 8, 9};
  auto s = load_split("mnist", root, spec, {1, 32, 32});
  EXPECT_EQ(s.private_set.size(), 5);
  EXPECT_EQ(s.public_set.size(), 5);
  EXPECT_FALSE(s.public_set.labels.has_value());
  EXPECT_EQ(s.num_classes, 5);
  EXPECT_EQ(s.class_labels, (std::vector<std::int64_t>{0, 1, 2, 3, 4}));
  std::set<std::int64_t> a, b;
  for (std::int64_t i = 0; i < 5; ++i) {
    a.insert(s.private_ids[i].item<std::int64_t>());
    b.insert(s.public_ids[i].item<std::int64_t>());
  }
  for (auto id : a) EXPECT_EQ(b.count(id), 0u);
  // Constant images survive the 28 -> 32 resize.
  for (std::int64_t i = 0; i < 5; ++i) {
    const auto id = s.private_ids[i].item<std::int64_t>();
    EXPECT_NEAR(s.private_set.values[i].mean().item<float>(), 20.0f * id / 255.0f, 1e-5f);
    EXPECT_EQ((*s.private_set.labels)[i].item<std::int64_t>(), id);
  }
  validate(s.private_set, s.num_classes);
  fs::remove_all(root);
}

TEST(Split, IndexFilesSelectRecords) {
  const auto root = write_tiny_mnist();
  {
    std::ofstream(root / "priv.txt") << "7\n3\n";
    std::ofstream(root / "pub.txt") << "0\n1\n2\n";
  }
  SplitSpec spec;
  spec.private_index_file = root / "priv.txt";
  spec.public_index_file = root / "pub.txt";
  auto s = load_split("mnist", root, spec, {1, 28, 28});
  EXPECT_EQ(s.class_labels, (std::vector<std::int64_t>{3, 7}));
  EXPECT_EQ(s.public_set.size(), 3);
  {
    std::ofstream(root / "pub.txt") << "3\n";
  }
  EXPECT_THROW(load_split("mnist", root, spec, {1, 28, 28}), Error);
  fs::remove_all(root);
}

TEST(Split, OverlapAndEmptySetsRejected) {
  auto raw = make_solid_dataset(4, 5, {1, 8, 8});
  SplitSpec spec;
  spec.private_labels = {0, 1};
  spec.public_labels = {1, 2};
  EXPECT_THROW(make_split(raw, spec, {1, 8, 8}), Error);
  spec.private_labels = {};
  spec.public_labels = {2};
  EXPECT_THROW(make_split(raw, spec, {1, 8, 8}), Error);
  spec.private_labels = {9};
  EXPECT_THROW(make_split(raw, spec, {1, 8, 8}), Error);
}

TEST(Split, CapsAreDeterministicSubsets) {
  auto raw = make_solid_dataset(4, 30, {1, 8, 8});
  SplitSpec spec;
  spec.private_labels = {0, 1};
  spec.public_labels = {2, 3};
  spec.max_private = 11;
  spec.seed = 3;
  auto a = make_split(raw, spec, {1, 8, 8}, "solid");
  auto b = make_split(raw, spec, {1, 8, 8}, "solid");
  EXPECT_EQ(a.private_set.size(), 11);
  EXPECT_TRUE(a.private_ids.equal(b.private_ids));
  EXPECT_EQ(a.dataset_hash, b.dataset_hash);
  spec.seed = 4;
  EXPECT_NE(make_split(raw, spec, {1, 8, 8}, "solid").dataset_hash, a.dataset_hash);
}

TEST(Preprocess, ConvertsRangesChannelsAndShape) {
  auto u8 = torch::full({2, 1, 10, 14}, 51, torch::kUInt8);
  auto a = preprocess(u8, {3, 16, 16});
  EXPECT_EQ(a.values.sizes(), (std::vector<std::int64_t>{2, 3, 16, 16}));
  EXPECT_NEAR(a.values.min().item<float>(), 0.2f, 1e-6f);
  EXPECT_NEAR(a.values.max().item<float>(), 0.2f, 1e-6f);

  auto rgb = torch::rand({3, 3, 8, 8});
  EXPECT_TRUE(preprocess(rgb, {3, 8, 8}).values.equal(rgb));
  auto gray = preprocess(rgb, {1, 8, 8}).values;
  EXPECT_TRUE(torch::allclose(gray[0][0][2][5], 0.299 * rgb[0][0][2][5] + 0.587 * rgb[0][1][2][5] +
                                                    0.114 * rgb[0][2][2][5]));

  EXPECT_THROW(preprocess(torch::full({1, 1, 4, 4}, 1.5f), {1, 4, 4}), Error);
  EXPECT_THROW(preprocess(torch::full({1, 1, 4, 4}, NAN), {1, 4, 4}), Error);
  EXPECT_THROW(preprocess(torch::rand({1, 2, 4, 4}), {3, 4, 4}), Error);
  EXPECT_THROW(preprocess(torch::rand({4, 4}), {1, 4, 4}), Error);
}

TEST(Validate, RejectsBadBatches) {
  EXPECT_THROW(validate({torch::rand({2, 4, 4}), std::nullopt}), Error);
  EXPECT_THROW(validate({torch::rand({2, 1, 4, 4}, torch::kFloat64), std::nullopt}), Error);
  EXPECT_THROW(validate({torch::rand({2, 1, 4, 4}), torch::tensor({0}, torch::kInt64)}), Error);
  EXPECT_THROW(validate({torch::rand({2, 1, 4, 4}), torch::tensor({0, 3}, torch::kInt64)}, 3), Error);
  validate({torch::rand({2, 1, 4, 4}), torch::tensor({0, 2}, torch::kInt64)}, 3);
}

TEST(Solid, LevelsFollowLabels) {
  auto raw = make_solid_dataset(4, 3, {1, 4, 4}, 0.0, 1);
  EXPECT_EQ(raw.images.size(0), 12);
  for (std::int64_t i = 0; i < 12; ++i) {
    const auto l = raw.labels[i].item<std::int64_t>();
    EXPECT_NEAR(raw.images[i].mean().item<float>(), (l + 0.5) / 4.0, 1e-6);
  }
  auto test_part = load_raw("solid-4x3", ".", "test");
  auto train_part = load_raw("solid-4x3", ".", "train");
  EXPECT_FALSE(test_part.images.equal(train_part.images));
}

}  // namespace
}  // namespace plgmi::data
