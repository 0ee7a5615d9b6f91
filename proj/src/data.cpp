#include "isd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "isd/binary_io.hpp"
#include "isd/errors.hpp"
#include "isd/rng.hpp"

namespace isd {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (int label : labels) ++counts.at(static_cast<std::size_t>(label));
  return counts;
}

void LabeledDataset::validate() const {
  if (samples.size() != labels.size() * dim) throw DataError("sample buffer does not match N x dim");
  if (image && image->height * image->width != dim) throw DataError("image dims do not match sample width");
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Tensor LabeledDataset::gather(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * dim);
  for (auto i : indices) {
    const auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor::from({indices.size(), dim}, std::move(out));
}

Tensor LabeledDataset::all_rows() const { return Tensor::from({size(), dim}, samples); }

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.image = image;
  out.split = split;
  out.samples.reserve(indices.size() * dim);
  for (auto i : indices) {
    const auto r = row(i);
    out.samples.insert(out.samples.end(), r.begin(), r.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

LabeledDataset gen_gaussian_mixture(const MixtureParams& params, std::uint64_t seed, Split split) {
  if (params.classes < 2) throw DataError("gaussian mixture needs at least 2 classes");
  if (params.dim < 2) throw DataError("gaussian mixture needs dimension >= 2");
  if (!(params.sep >= 0.0)) throw DataError("class separation must be non-negative");

  std::normal_distribution<double> gauss(0.0, 1.0);
  Rng mean_rng(derive_seed(seed, 0));
  std::vector<double> means(static_cast<std::size_t>(params.classes) * params.dim);
  for (int c = 0; c < params.classes; ++c) {
    double sq = 0.0;
    auto* mu = &means[static_cast<std::size_t>(c) * params.dim];
    for (std::size_t j = 0; j < params.dim; ++j) {
      mu[j] = gauss(mean_rng);
      sq += mu[j] * mu[j];
    }
    for (std::size_t j = 0; j < params.dim; ++j) mu[j] *= params.sep / std::sqrt(sq);
  }

  Rng sample_rng(derive_seed(seed, 1 + static_cast<std::uint64_t>(split)));
  LabeledDataset ds;
  ds.dim = params.dim;
  ds.num_classes = params.classes;
  ds.split = split;
  ds.samples.reserve(static_cast<std::size_t>(params.classes) * params.per_class * params.dim);
  for (int c = 0; c < params.classes; ++c) {
    const auto* mu = &means[static_cast<std::size_t>(c) * params.dim];
    for (std::size_t i = 0; i < params.per_class; ++i) {
      for (std::size_t j = 0; j < params.dim; ++j) ds.samples.push_back(mu[j] + gauss(sample_rng));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

namespace {

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
};

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.size() < 4) throw FormatError(what + ": file too short for an IDX header", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError(what + ": bad IDX magic", 0);
  if (bytes[2] != 0x08) throw FormatError(what + ": only unsigned-byte IDX payloads are supported", 2);
  const std::size_t ndim = bytes[3];
  if (ndim == 0) throw FormatError(what + ": IDX dimension count is zero", 3);
  if (bytes.size() < 4 + 4 * ndim) throw LengthError(what + ": truncated IDX dimension table");
  IdxHeader header;
  for (std::size_t i = 0; i < ndim; ++i) header.dims.push_back(read_be32(bytes, 4 + 4 * i));
  header.payload_offset = 4 + 4 * ndim;
  std::size_t expected = 1;
  for (auto d : header.dims) expected *= d;
  if (bytes.size() - header.payload_offset != expected) {
    throw LengthError(what + ": dimensions declare " + std::to_string(expected) + " payload bytes but file has " +
                      std::to_string(bytes.size() - header.payload_offset));
  }
  return header;
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto image_bytes = read_file(images);
  const auto label_bytes = read_file(labels);
  const auto ih = parse_idx_header(image_bytes, images.filename().string());
  const auto lh = parse_idx_header(label_bytes, labels.filename().string());
  if (lh.dims.size() != 1) throw FormatError("label file must be one-dimensional", 3);
  const std::size_t n = ih.dims[0];
  if (lh.dims[0] != n) {
    throw LengthError("image file holds " + std::to_string(n) + " items but label file holds " +
                      std::to_string(lh.dims[0]));
  }

  LabeledDataset ds;
  ds.dim = 1;
  for (std::size_t i = 1; i < ih.dims.size(); ++i) ds.dim *= ih.dims[i];
  if (ih.dims.size() == 3) ds.image = ImageDims{ih.dims[1], ih.dims[2]};
  ds.samples.reserve(n * ds.dim);
  for (std::size_t i = 0; i < n * ds.dim; ++i) ds.samples.push_back(image_bytes[ih.payload_offset + i] / 255.0);
  int top = -1;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(label_bytes[lh.payload_offset + i]);
    top = std::max(top, ds.labels.back());
  }
  ds.num_classes = top + 1;
  return ds;
}

std::vector<std::size_t> unbalanced_indices(const LabeledDataset& ds, std::span<const int> large_classes,
                                            std::size_t small_count, std::uint64_t seed) {
  std::vector<char> is_large(static_cast<std::size_t>(ds.num_classes), 0);
  for (int c : large_classes) {
    if (c < 0 || c >= ds.num_classes) throw DataError("unknown class id " + std::to_string(c));
    is_large[static_cast<std::size_t>(c)] = 1;
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) members[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& idx = members[c];
    if (is_large[c]) {
      keep.insert(keep.end(), idx.begin(), idx.end());
      continue;
    }
    if (small_count > idx.size()) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                      " samples, fewer than the requested " + std::to_string(small_count));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(small_count));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

LabeledDataset make_unbalanced(const LabeledDataset& ds, std::span<const int> large_classes, std::size_t small_count,
                               std::uint64_t seed) {
  const auto keep = unbalanced_indices(ds, large_classes, small_count, seed);
  return ds.subset(keep);
}

namespace {
constexpr std::string_view kDatasetMagic = "ISDDSET1";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  ByteWriter out;
  out.put_raw(kDatasetMagic);
  out.put<std::uint32_t>(kDatasetVersion);
  out.put<std::uint64_t>(ds.size());
  out.put<std::uint64_t>(ds.dim);
  out.put<std::int32_t>(ds.num_classes);
  out.put<std::uint32_t>(ds.image ? static_cast<std::uint32_t>(ds.image->height) : 0);
  out.put<std::uint32_t>(ds.image ? static_cast<std::uint32_t>(ds.image->width) : 0);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(ds.split));
  std::vector<std::int32_t> labels(ds.labels.begin(), ds.labels.end());
  out.put_array<std::int32_t>(labels);
  out.put_array<double>(ds.samples);
  write_file(path, out.bytes());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes);
  if (bytes.size() < kDatasetMagic.size() || in.get_raw(kDatasetMagic.size()) != kDatasetMagic) {
    throw FormatError(path.filename().string() + ": not a dataset container", 0);
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion) throw FormatError("unsupported dataset container version", kDatasetMagic.size());
  LabeledDataset ds;
  const auto n = in.get<std::uint64_t>();
  ds.dim = in.get<std::uint64_t>();
  ds.num_classes = in.get<std::int32_t>();
  const auto h = in.get<std::uint32_t>();
  const auto w = in.get<std::uint32_t>();
  if (h || w) ds.image = ImageDims{h, w};
  const auto split = in.get<std::uint8_t>();
  if (split > 1) throw FormatError("invalid split tag", in.offset() - 1);
  ds.split = static_cast<Split>(split);
  const auto labels = in.get_array<std::int32_t>(n);
  ds.labels.assign(labels.begin(), labels.end());
  ds.samples = in.get_array<double>(n * ds.dim);
  if (in.remaining() != 0) throw LengthError("trailing bytes after dataset payload");
  ds.validate();
  return ds;
}

}  // namespace isd
