#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "panoptic/metrics.hpp"
#include "panoptic/model.hpp"

namespace panoptic::io {

/// Structured file-format error; byte_offset points at the violation when
/// it is known (npos otherwise).
class IoError : public std::runtime_error {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit IoError(const std::string& message, std::size_t byte_offset = npos)
        : std::runtime_error(byte_offset == npos ? message : message + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const { return byte_offset_; }

  private:
    std::size_t byte_offset_;
};

/// PLY reader for `ascii` and `binary_little_endian` 1.0. Vertex properties
/// x,y,z are required; red,green,blue, sem, ins are picked up when present;
/// anything else is skipped. Big-endian files are rejected.
PointCloud read_ply(const std::filesystem::path& path);

/// Writes positions (32-bit floats) plus whichever of colors / sem / ins the
/// cloud carries. Reading the result back reproduces the cloud up to float
/// precision.
void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool binary = true);

/// Binary prediction container: 24-byte header ("PPRD", u32 version,
/// u64 n_points, u16 n_classes, u16 emb_dim, u32 flags) followed by the
/// flagged arrays as row-major little-endian 32-bit floats, in the order
/// probabilities, embeddings, offsets. Declared sizes must match the payload
/// byte count exactly.
PredictionSet read_predictions(const std::filesystem::path& path);
void write_predictions(const PredictionSet& preds, const std::filesystem::path& path);

inline constexpr std::uint32_t kPredictionVersion = 1;
inline constexpr std::uint32_t kPredFlagProbs = 1u << 0;
inline constexpr std::uint32_t kPredFlagEmbeddings = 1u << 1;
inline constexpr std::uint32_t kPredFlagOffsets = 1u << 2;

nlohmann::json report_to_json(const metrics::MetricsReport& report);
void write_report(const metrics::MetricsReport& report, const std::filesystem::path& path);

} // namespace panoptic::io
