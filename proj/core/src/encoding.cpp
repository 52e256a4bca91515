#include "ultrasnn/encoding.hpp"

#include <algorithm>
#include <string>

#include <zlib.h>

#include "ultrasnn/error.hpp"

namespace ultrasnn {

std::size_t Dataset::classes() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw ShapeError("dataset slice out of range");
  Dataset out;
  out.images = images.slice_rows(first, count);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.mean = mean;
  out.std = std;
  return out;
}

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      std::string msg = gzerror(f, &code);
      gzclose(f);
      throw IoError("read error in '" + path.string() + "': " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

std::uint32_t big_endian_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

IdxFile read_idx(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_all(path);
  if (bytes.size() < 4) throw IoError("'" + path.string() + "' is truncated (no header)");
  IdxFile idx;
  idx.magic = big_endian_u32(bytes.data());
  std::size_t rank = 0;
  if (idx.magic == kIdxImagesMagic) rank = 3;
  else if (idx.magic == kIdxLabelsMagic) rank = 1;
  else throw FormatError("'" + path.string() + "' has unknown IDX magic " + std::to_string(idx.magic));

  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw IoError("'" + path.string() + "' is truncated in the header");
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    idx.dims.push_back(big_endian_u32(bytes.data() + 4 + 4 * i));
    count *= idx.dims.back();
  }
  if (bytes.size() < header + count) {
    throw IoError("'" + path.string() + "' is truncated: expected " + std::to_string(count) +
                  " values, found " + std::to_string(bytes.size() - header));
  }
  idx.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                    bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
  return idx;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxFile img = read_idx(images);
  const IdxFile lab = read_idx(labels);
  if (img.magic != kIdxImagesMagic) throw FormatError("'" + images.string() + "' is not an image file");
  if (lab.magic != kIdxLabelsMagic) throw FormatError("'" + labels.string() + "' is not a label file");
  if (img.dims[0] != lab.dims[0]) {
    throw FormatError("image/label counts differ: " + std::to_string(img.dims[0]) + " vs " +
                      std::to_string(lab.dims[0]));
  }
  const std::size_t n = img.dims[0];
  const std::size_t width = std::size_t{img.dims[1]} * img.dims[2];
  Dataset data;
  data.images = Tensor({n, width});
  for (std::size_t i = 0; i < img.values.size(); ++i) data.images[i] = img.values[i] / 255.0;
  data.labels.assign(lab.values.begin(), lab.values.end());
  return data;
}

Dataset load_mnist(const std::filesystem::path& dir, Split split, std::size_t limit) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  auto locate = [&](const std::string& stem) {
    for (const std::string& name : {stem + ".gz", stem}) {
      if (std::filesystem::exists(dir / name)) return dir / name;
    }
    throw IoError("'" + stem + "' (or .gz) not found in '" + dir.string() + "'");
  };
  Dataset data = load_idx(locate(prefix + "-images-idx3-ubyte"), locate(prefix + "-labels-idx1-ubyte"));
  if (limit > 0 && limit < data.size()) data = data.slice(0, limit);
  return data;
}

Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                   double spread) {
  if (dim == 0) throw ConfigError("blobs need dim >= 1");
  Rng rng(seed, {static_cast<std::uint64_t>(Stream::Blobs)});
  Dataset data;
  data.mean = 0.0;
  data.std = 1.0;
  const std::size_t n = classes * per_class;
  data.images = Tensor({n, dim});
  data.labels.resize(n);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t axis = (c / 2) % dim;
    const double sign = c % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t row = c * per_class + k;
      data.labels[row] = static_cast<int>(c);
      for (std::size_t j = 0; j < dim; ++j) {
        data.images(row, j) = (j == axis ? sign : 0.0) + spread * rng.normal();
      }
    }
  }
  return data;
}

std::string_view to_string(InputMode mode) { return mode == InputMode::Rate ? "rate" : "analog"; }

InputMode parse_input_mode(std::string_view name) {
  if (name == "rate") return InputMode::Rate;
  if (name == "analog") return InputMode::Analog;
  throw ConfigError("unknown input mode '" + std::string(name) + "' (rate | analog)");
}

Tensor rate_encode(const Tensor& images, std::size_t timesteps, double gain, Rng& rng) {
  if (images.rank() != 2) throw ShapeError("rate_encode expects [batch, n] images");
  if (!(gain >= 0.0)) throw DomainError("rate-coding gain must be non-negative");
  for (double x : images.data()) {
    if (!(x >= 0.0) || gain * x > 1.0) {
      throw DomainError("spike probability gain * x = " + std::to_string(gain * x) + " outside [0, 1]");
    }
  }
  const std::size_t frame = images.size();
  Tensor out({timesteps, images.dim(0), images.dim(1)});
  for (std::size_t t = 0; t < timesteps; ++t) {
    for (std::size_t i = 0; i < frame; ++i) {
      out[t * frame + i] = rng.bernoulli(gain * images[i]) ? 1.0 : 0.0;
    }
  }
  return out;
}

Tensor analog_encode(const Tensor& images, std::size_t timesteps, double mean, double std) {
  if (images.rank() != 2) throw ShapeError("analog_encode expects [batch, n] images");
  if (!(std > 0.0)) throw DomainError("normalization std must be positive");
  const std::size_t frame = images.size();
  Tensor out({timesteps, images.dim(0), images.dim(1)});
  for (std::size_t t = 0; t < timesteps; ++t) {
    for (std::size_t i = 0; i < frame; ++i) out[t * frame + i] = (images[i] - mean) / std;
  }
  return out;
}

EncodedBatch encode_batch(const Dataset& data, std::span<const std::size_t> rows, std::size_t timesteps,
                          InputMode mode, double gain, Rng& rng) {
  const std::size_t width = data.width();
  Tensor picked({rows.size(), width});
  EncodedBatch batch;
  batch.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= data.size()) throw ShapeError("batch row index out of range");
    std::copy_n(data.images.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                picked.data().begin() + static_cast<std::ptrdiff_t>(r * width));
    batch.labels.push_back(data.labels[rows[r]]);
  }
  batch.spikes = mode == InputMode::Rate ? rate_encode(picked, timesteps, gain, rng)
                                         : analog_encode(picked, timesteps, data.mean, data.std);
  return batch;
}

}  // namespace ultrasnn
