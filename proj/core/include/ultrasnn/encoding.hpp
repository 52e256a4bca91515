#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "ultrasnn/random.hpp"
#include "ultrasnn/tensor.hpp"

namespace ultrasnn {

struct Dataset {
  Tensor images{Shape{0, 0}};  // [N, n]
  std::vector<int> labels;     // [N]
  // Normalization applied by the analog input mode only.
  double mean = 0.1307;
  double std = 0.3081;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t width() const { return images.dim(1); }
  /// 1 + largest label (0 when empty).
  std::size_t classes() const;
  /// Rows [first, first + count).
  Dataset slice(std::size_t first, std::size_t count) const;
};

/// Raw contents of an IDX file with unsigned-byte payload.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

inline constexpr std::uint32_t kIdxImagesMagic = 2051;
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;

/// Reads a big-endian IDX file, gzip-compressed or not.
/// Throws FormatError on an unknown magic, IoError on missing or truncated files.
IdxFile read_idx(const std::filesystem::path& path);

/// Pairs an image file (pixels scaled by 1/255) with its label file.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

enum class Split { Train, Test };

/// Loads `train-*` or `t10k-*` files from `dir` (".gz" optional), keeping the first `limit` rows
/// when limit > 0.
Dataset load_mnist(const std::filesystem::path& dir, Split split, std::size_t limit = 0);

/// Isotropic Gaussian blobs. Class c is centred on +-e_{(c/2) mod dim} (sign + for even c),
/// so two classes sit at (+1, 0, ...) and (-1, 0, ...). Samples are stored class by class.
Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                   double spread = 0.1);

enum class InputMode { Rate, Analog };

std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view name);

/// Bernoulli rate coding of images [B, n] into spikes [T, B, n]; each entry fires with
/// probability gain * x. Draw order is t, then row, then pixel.
Tensor rate_encode(const Tensor& images, std::size_t timesteps, double gain, Rng& rng);

/// Normalized pixels (x - mean) / std repeated over T steps: [T, B, n].
Tensor analog_encode(const Tensor& images, std::size_t timesteps, double mean, double std);

struct EncodedBatch {
  Tensor spikes;  // [T, B, n]
  std::vector<int> labels;
};

/// Gathers `rows` of the dataset and encodes them in the requested mode.
EncodedBatch encode_batch(const Dataset& data, std::span<const std::size_t> rows, std::size_t timesteps,
                          InputMode mode, double gain, Rng& rng);

}  // namespace ultrasnn
