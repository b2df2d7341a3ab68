#include "plgmi/data/dataset_registry.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "plgmi/error.hpp"
#include "plgmi/util/hash.hpp"

namespace plgmi::data {
namespace {

namespace fs = std::filesystem;

std::uint32_t read_be32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

fs::path find_first(const std::vector<fs::path>& candidates) {
  for (const auto& c : candidates) {
    if (fs::exists(c)) return c;
  }
  std::string tried;
  for (const auto& c : candidates) tried += "\n  " + c.string();
  fail(ErrorKind::kData, "dataset file not found; tried:" + tried);
}

// IDX (LeCun) format: magic 0x0803 images / 0x0801 labels, big-endian dims.
torch::Tensor read_idx(const fs::path& path, int expected_dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open " + path.string());
  const std::uint32_t magic = read_be32(in);
  if ((magic >> 8) != 0x08 || static_cast<int>(magic & 0xff) != expected_dims) {
    fail(ErrorKind::kData, "bad IDX header in " + path.string());
  }
  std::vector<std::int64_t> dims;
  std::int64_t total = 1;
  for (int i = 0; i < expected_dims; ++i) {
    dims.push_back(read_be32(in));
    total *= dims.back();
  }
  auto out = torch::empty(dims, torch::kUInt8);
  in.read(reinterpret_cast<char*>(out.data_ptr<std::uint8_t>()), total);
  if (in.gcount() != total) fail(ErrorKind::kData, "truncated IDX file " + path.string());
  return out;
}

RawDataset load_mnist(const fs::path& root, std::string_view part) {
  const std::string prefix = part == "test" ? "t10k" : "train";
  if (part != "train" && part != "test") fail(ErrorKind::kInvalidArgument, "mnist part must be train or test");
  auto locate = [&](const std::string& kind, const std::string& dotted) {
    return find_first({root / "mnist" / (prefix + kind), root / (prefix + kind), root / "mnist" / (prefix + dotted),
                       root / (prefix + dotted)});
  };
  auto images = read_idx(locate("-images-idx3-ubyte", "-images.idx3-ubyte"), 3);
  auto labels = read_idx(locate("-labels-idx1-ubyte", "-labels.idx1-ubyte"), 1);
  if (images.size(0) != labels.size(0)) fail(ErrorKind::kData, "mnist image/label count mismatch");
  return {images.unsqueeze(1), labels.to(torch::kInt64), 10};
}

RawDataset load_cifar10(const fs::path& root, std::string_view part) {
  std::vector<fs::path> files;
  const fs::path dir = fs::exists(root / "cifar-10-batches-bin") ? root / "cifar-10-batches-bin" : root;
  if (part == "train") {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else if (part == "test") {
    files.push_back(dir / "test_batch.bin");
  } else {
    fail(ErrorKind::kInvalidArgument, "cifar10 part must be train or test");
  }
  constexpr std::int64_t kRecord = 1 + 3 * 32 * 32;
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> labels;
  for (const auto& f : files) {
    if (!fs::exists(f)) fail(ErrorKind::kData, "dataset file not found: " + f.string());
    const auto bytes = static_cast<std::int64_t>(fs::file_size(f));
    if (bytes % kRecord != 0) fail(ErrorKind::kData, "corrupt CIFAR-10 batch " + f.string());
    auto raw = torch::empty({bytes / kRecord, kRecord}, torch::kUInt8);
    std::ifstream in(f, std::ios::binary);
    in.read(reinterpret_cast<char*>(raw.data_ptr<std::uint8_t>()), bytes);
    labels.push_back(raw.select(1, 0).to(torch::kInt64));
    images.push_back(raw.slice(1, 1).reshape({-1, 3, 32, 32}).clone());
  }
  return {torch::cat(images), torch::cat(labels), 10};
}

// "solid-<labels>x<per_label>"
std::optional<std::pair<std::int64_t, std::int64_t>> parse_solid(std::string_view name) {
  constexpr std::string_view kPrefix = "solid-";
  if (!name.starts_with(kPrefix)) return std::nullopt;
  name.remove_prefix(kPrefix.size());
  const auto x = name.find('x');
  if (x == std::string_view::npos) return std::nullopt;
  std::int64_t labels = 0, per = 0;
  auto [p1, e1] = std::from_chars(name.data(), name.data() + x, labels);
  auto [p2, e2] = std::from_chars(name.data() + x + 1, name.data() + name.size(), per);
  if (e1 != std::errc{} || e2 != std::errc{} || p1 != name.data() + x || p2 != name.data() + name.size()) {
    return std::nullopt;
  }
  if (labels < 1 || per < 1) return std::nullopt;
  return std::make_pair(labels, per);
}

std::vector<std::int64_t> read_index_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open index file " + path.string());
  std::vector<std::int64_t> ids;
  std::int64_t v = 0;
  while (in >> v) ids.push_back(v);
  if (!in.eof()) fail(ErrorKind::kData, "malformed index file " + path.string());
  return ids;
}

std::vector<std::int64_t> cap_ids(std::vector<std::int64_t> ids, std::optional<std::int64_t> cap, std::uint64_t seed) {
  if (!cap || *cap >= static_cast<std::int64_t>(ids.size())) return ids;
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(std::max<std::int64_t>(*cap, 0)));
  std::sort(ids.begin(), ids.end());
  return ids;
}

torch::Tensor to_tensor(const std::vector<std::int64_t>& v) {
  return torch::tensor(v, torch::kInt64);
}

}  // namespace

bool is_known_dataset(std::string_view name) {
  return name == "mnist" || name == "cifar10" || parse_solid(name).has_value();
}

RawDataset load_raw(std::string_view name, const fs::path& data_root, std::string_view part) {
  if (name == "mnist") return load_mnist(data_root, part);
  if (name == "cifar10") return load_cifar10(data_root, part);
  if (auto solid = parse_solid(name)) {
    // The test part uses a disjoint jitter stream.
    return make_solid_dataset(solid->first, solid->second, {1, 8, 8}, 0.3, part == "test" ? 1 : 0);
  }
  fail(ErrorKind::kInvalidArgument, "unknown dataset '" + std::string(name) + "'");
}

ImageBatch preprocess(const torch::Tensor& raw, const ImageShape& target) {
  require(target.channels > 0 && target.height > 0 && target.width > 0, ErrorKind::kInvalidArgument,
          "target shape must be positive, got " + target.str());
  require(raw.defined() && raw.dim() == 4, ErrorKind::kData, "raw images must be N x C x H x W");
  torch::Tensor x;
  if (raw.scalar_type() == torch::kUInt8) {
    x = raw.to(torch::kFloat32).div_(255.0f);
  } else {
    x = raw.to(torch::kFloat32);
    require(x.numel() == 0 || (torch::isfinite(x).all().item<bool>() && x.min().item<float>() >= 0.0f &&
                               x.max().item<float>() <= 1.0f),
            ErrorKind::kData, "corrupt image: float pixels must be finite and in [0, 1]");
  }

  const auto h = x.size(2), w = x.size(3);
  const auto side = std::min(h, w);
  if (h != w) x = x.narrow(2, (h - side) / 2, side).narrow(3, (w - side) / 2, side);

  const auto c = x.size(1);
  if (c != target.channels) {
    if (c == 3 && target.channels == 1) {
      auto weights = torch::tensor({0.299f, 0.587f, 0.114f}).view({1, 3, 1, 1});
      x = (x * weights).sum(1, /*keepdim=*/true);
    } else if (c == 1) {
      x = x.expand({-1, target.channels, -1, -1});
    } else {
      fail(ErrorKind::kData, "cannot convert " + std::to_string(c) + " channels to " + std::to_string(target.channels));
    }
  }

  if (side != target.height || side != target.width) {
    namespace F = torch::nn::functional;
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{target.height, target.width})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  return {x.clamp(0.0, 1.0).contiguous(), std::nullopt};
}

DatasetSplit make_split(const RawDataset& raw, const SplitSpec& spec, const ImageShape& shape,
                        std::string_view dataset_name) {
  const auto n = raw.labels.size(0);
  auto labels = raw.labels.contiguous();
  const auto* lab = labels.data_ptr<std::int64_t>();

  std::vector<std::int64_t> priv_ids, pub_ids, class_labels;
  if (spec.private_index_file || spec.public_index_file) {
    require(spec.private_index_file && spec.public_index_file, ErrorKind::kInvalidArgument,
            "both private_index_file and public_index_file are required");
    priv_ids = read_index_file(*spec.private_index_file);
    pub_ids = read_index_file(*spec.public_index_file);
    std::sort(priv_ids.begin(), priv_ids.end());
    std::sort(pub_ids.begin(), pub_ids.end());
    priv_ids.erase(std::unique(priv_ids.begin(), priv_ids.end()), priv_ids.end());
    pub_ids.erase(std::unique(pub_ids.begin(), pub_ids.end()), pub_ids.end());
    for (auto id : priv_ids) require(id >= 0 && id < n, ErrorKind::kData, "private index out of range");
    for (auto id : pub_ids) require(id >= 0 && id < n, ErrorKind::kData, "public index out of range");
    std::vector<std::int64_t> both;
    std::set_intersection(priv_ids.begin(), priv_ids.end(), pub_ids.begin(), pub_ids.end(), std::back_inserter(both));
    require(both.empty(), ErrorKind::kInvalidArgument, "private and public index files overlap");
    std::set<std::int64_t> seen;
    for (auto id : priv_ids) seen.insert(lab[id]);
    class_labels.assign(seen.begin(), seen.end());
  } else {
    std::set<std::int64_t> priv(spec.private_labels.begin(), spec.private_labels.end());
    std::set<std::int64_t> pub(spec.public_labels.begin(), spec.public_labels.end());
    require(!priv.empty(), ErrorKind::kInvalidArgument, "private label set is empty");
    for (auto l : priv) {
      require(pub.count(l) == 0, ErrorKind::kInvalidArgument,
              "private and public label sets overlap on label " + std::to_string(l));
    }
    for (auto l : priv) require(l >= 0 && l < raw.num_labels, ErrorKind::kInvalidArgument, "private label out of range");
    for (auto l : pub) require(l >= 0 && l < raw.num_labels, ErrorKind::kInvalidArgument, "public label out of range");
    for (std::int64_t i = 0; i < n; ++i) {
      if (priv.count(lab[i])) priv_ids.push_back(i);
      else if (pub.count(lab[i])) pub_ids.push_back(i);
    }
    class_labels.assign(priv.begin(), priv.end());
  }

  priv_ids = cap_ids(std::move(priv_ids), spec.max_private, spec.seed);
  pub_ids = cap_ids(std::move(pub_ids), spec.max_public, spec.seed ^ 0x5bd1e995ULL);
  require(!priv_ids.empty(), ErrorKind::kData, "private split is empty");
  require(!pub_ids.empty(), ErrorKind::kData, "public split is empty");

  std::vector<std::int64_t> remap(static_cast<std::size_t>(std::max<std::int64_t>(raw.num_labels, 1)), -1);
  for (std::size_t k = 0; k < class_labels.size(); ++k) {
    if (class_labels[k] >= 0 && class_labels[k] < raw.num_labels) remap[class_labels[k]] = static_cast<std::int64_t>(k);
  }
  std::vector<std::int64_t> priv_classes;
  priv_classes.reserve(priv_ids.size());
  for (auto id : priv_ids) priv_classes.push_back(remap[lab[id]]);

  DatasetSplit split;
  split.private_ids = to_tensor(priv_ids);
  split.public_ids = to_tensor(pub_ids);
  split.private_set = preprocess(raw.images.index_select(0, split.private_ids), shape);
  split.private_set.labels = to_tensor(priv_classes);
  split.public_set = preprocess(raw.images.index_select(0, split.public_ids), shape);
  split.num_classes = static_cast<std::int64_t>(class_labels.size());
  split.image_shape = shape;
  split.class_labels = class_labels;

  util::Sha256 h;
  h.update(dataset_name).update(spec.part).update(shape.str());
  h.update(split.private_ids).update(split.public_ids).update(raw.images).update(raw.labels);
  split.dataset_hash = h.hex();
  return split;
}

DatasetSplit load_split(std::string_view name, const fs::path& data_root, const SplitSpec& spec,
                        const ImageShape& shape) {
  return make_split(load_raw(name, data_root, spec.part), spec, shape, name);
}

ImageBatch load_labeled(std::string_view name, const fs::path& data_root, std::string_view part,
                        const ImageShape& shape, std::optional<std::int64_t> max_records, std::uint64_t seed) {
  auto raw = load_raw(name, data_root, part);
  std::vector<std::int64_t> ids(static_cast<std::size_t>(raw.labels.size(0)));
  std::iota(ids.begin(), ids.end(), 0);
  ids = cap_ids(std::move(ids), max_records, seed);
  auto idx = to_tensor(ids);
  auto batch = preprocess(raw.images.index_select(0, idx), shape);
  batch.labels = raw.labels.index_select(0, idx);
  return batch;
}

RawDataset make_solid_dataset(std::int64_t labels, std::int64_t per_label, const ImageShape& shape, double jitter,
                              std::uint64_t seed) {
  require(labels >= 1 && per_label >= 1, ErrorKind::kInvalidArgument, "solid dataset needs labels, per_label >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-jitter, jitter);
  const auto n = labels * per_label;
  auto images = torch::empty({n, shape.channels, shape.height, shape.width}, torch::kFloat32);
  auto y = torch::empty({n}, torch::kInt64);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto l = i % labels;
    const double level = std::clamp((static_cast<double>(l) + 0.5 + u(rng)) / static_cast<double>(labels), 0.0, 1.0);
    images[i].fill_(level);
    y[i] = l;
  }
  return {images, y, labels};
}

RawDataset make_uniform_solid_dataset(std::int64_t count, std::int64_t bins, const ImageShape& shape,
                                      std::uint64_t seed) {
  require(count >= 1 && bins >= 1, ErrorKind::kInvalidArgument, "uniform solid dataset needs count, bins >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto images = torch::empty({count, shape.channels, shape.height, shape.width}, torch::kFloat32);
  auto y = torch::empty({count}, torch::kInt64);
  for (std::int64_t i = 0; i < count; ++i) {
    const double level = u(rng);
    images[i].fill_(level);
    y[i] = std::min<std::int64_t>(static_cast<std::int64_t>(level * static_cast<double>(bins)), bins - 1);
  }
  return {images, y, bins};
}

}  // namespace plgmi::data
