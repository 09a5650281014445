#pragma once

#include "ovce/bitmask.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ovce {

/// Activation map of one neuron on one sample, row-major.
struct ActivationMap {
    std::size_t neuron_id = 0;
    std::size_t sample_id = 0;
    int width = 0;
    int height = 0;
    std::vector<float> values;

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Bilinear resize with align-corners semantics: the corner pixels of source
/// and target coincide. Output stays within [min, max] of the input.
ActivationMap bilinear_resize(const ActivationMap& a, int width, int height);

/// Half-open interval [lo, hi). Ranges are numbered from 1, lowest first; the
/// outermost bounds are -inf and +inf.
struct ActivationRange {
    int range_id = 1;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double v) const { return v >= lo && v < hi; }
};

nlohmann::json to_json(const ActivationRange& r);
ActivationRange range_from_json(const nlohmann::json& j);

struct ClusterConfig {
    int k = 5;
    std::uint64_t seed = 0x5eed;
    int max_iter = 100;
    double tol = 1e-6;
    std::size_t sample_cap = 2'000'000;
    /// Independent k-means++ restarts; the lowest-inertia run wins.
    int n_init = 10;
    /// Cluster only non-zero values.
    bool nonzero_only = false;
};

/// Sorted centroids of a 1-D k-means fit. Throws DegenerateValues when there
/// are fewer than k distinct values.
std::vector<double> kmeans_1d(std::span<const float> values, const ClusterConfig& cfg);

/// k ranges whose inner bounds are midpoints between adjacent centroids.
std::vector<ActivationRange> cluster_ranges(std::span<const float> values, const ClusterConfig& cfg);
std::vector<ActivationRange> ranges_from_centroids(const std::vector<double>& centroids);

/// Bit set iff the value lies in the range.
BinaryMask binarize_activations(const ActivationMap& a, const ActivationRange& r);

/// Binarized activations of one neuron for one range over all samples.
struct BinarizedActivations {
    std::size_t neuron_id = 0;
    ActivationRange range;
    MaskPlane mask;
    std::vector<std::uint32_t> sample_sizes;
    std::uint64_t total = 0;

    int range_id() const { return range.range_id; }
    /// Recomputes sizes from the mask.
    void refresh_sizes();
};

/// Dense activation tensor ordered (neuron, sample, row, col).
class ActivationTensor {
public:
    static constexpr std::uint32_t kVersion = 1;

    ActivationTensor() = default;
    ActivationTensor(std::size_t neurons, std::size_t samples, int width, int height);

    std::size_t neurons() const { return neurons_; }
    std::size_t samples() const { return samples_; }
    int width() const { return width_; }
    int height() const { return height_; }

    std::span<const float> map_values(std::size_t neuron, std::size_t sample) const;
    std::span<float> map_values(std::size_t neuron, std::size_t sample);
    ActivationMap map(std::size_t neuron, std::size_t sample) const;
    std::span<const float> values() const { return values_; }

    /// Per-sample ids (image paths or names) from the JSON sidecar.
    std::vector<std::string> sample_ids;

    friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;

private:
    std::size_t neurons_ = 0;
    std::size_t samples_ = 0;
    int width_ = 0;
    int height_ = 0;
    std::vector<float> values_;
};

/// OVCEACT1 file plus `<path>.json` sidecar with sample ids.
void write_activations(const std::filesystem::path& path, const ActivationTensor& t);
/// Throws CorruptArchive, VersionMismatch, IoError.
ActivationTensor read_activations(const std::filesystem::path& path);

/// Everything the search needs about one neuron at the working resolution.
struct NeuronActivations {
    std::size_t neuron_id = 0;
    std::vector<ActivationRange> ranges;
    std::vector<BinarizedActivations> binarized;  // one per range, same order
};

/// Resizes every map of `neuron` to (width, height), clusters the values into
/// cfg.k ranges and binarizes each range.
NeuronActivations binarize_neuron(const ActivationTensor& t, std::size_t neuron, int width, int height,
                                  const ClusterConfig& cfg);

} // namespace ovce
