#pragma once

#include "ovce/bitmask.hpp"
#include "ovce/concept_registry.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace ovce {

/// One segmentation output: the winning concept per pixel, row-major.
struct LabelMap {
    std::size_t sample_id = 0;
    SubsetId subset_id = 0;
    int width = 0;
    int height = 0;
    std::vector<ConceptId> data;

    ConceptId at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// One binary mask per concept of the label map's subset, in subset order.
/// Throws UnknownConceptId if a cell names a concept outside the subset.
std::vector<std::pair<ConceptId, BinaryMask>> binarize_labelmap(const LabelMap& lm,
                                                                 const ConceptRegistry& reg);

/// Per (concept, sample) geometry kept alongside the masks.
struct ConceptGeometry {
    std::uint32_t size = 0;
    OptRect bbox;
    OptRect inscribed;

    friend bool operator==(const ConceptGeometry&, const ConceptGeometry&) = default;
};

struct ConceptSampleStats {
    std::uint32_t size = 0;
    OptRect bbox;
    OptRect inscribed;
    /// range id -> |mask AND activation|
    std::map<int, std::uint32_t> ims;
};

ConceptGeometry compute_geometry(const MaskView& m);

/// Throws ShapeMismatch when an activation mask differs in shape.
ConceptSampleStats compute_stats(const MaskView& m, const std::vector<std::pair<int, MaskView>>& act);

/// Label maps for a set of subsets over the same samples at one resolution,
/// plus the derived per-concept mask planes and geometry once sealed.
class MaskArchive {
public:
    static constexpr std::uint32_t kVersion = 1;

    MaskArchive() = default;
    /// `manifest` names the subsets held and their concepts.
    MaskArchive(ConceptRegistry manifest, int width, int height, std::size_t samples);

    const ConceptRegistry& manifest() const { return manifest_; }
    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t samples() const { return samples_; }
    std::size_t pixels() const { return static_cast<std::size_t>(width_) * height_; }

    bool has_subset(SubsetId id) const { return labels_.count(id) != 0; }
    std::span<const ConceptId> labels(SubsetId subset, std::size_t sample) const;
    std::span<ConceptId> labels(SubsetId subset, std::size_t sample);
    void set_labelmap(const LabelMap& lm);
    LabelMap labelmap(SubsetId subset, std::size_t sample) const;

    /// Validates the partition and derives planes and geometry. Throws
    /// PartitionViolation.
    void seal();
    bool sealed() const { return sealed_; }

    bool has_plane(ConceptId id) const { return planes_.count(id) != 0; }
    /// Throws UnknownConceptId.
    const MaskPlane& plane(ConceptId id) const;
    const std::vector<ConceptGeometry>& geometry(ConceptId id) const;

    /// Label maps nearest-neighbour resampled; the result is sealed.
    MaskArchive resampled(int width, int height) const;
    /// Archive holding only `subset`; sealed.
    MaskArchive subset_archive(SubsetId subset) const;
    /// Union of subsets from archives with identical shape; sealed.
    static MaskArchive merge(const std::vector<const MaskArchive*>& parts);

    /// Hash over the manifest and the label data.
    std::string content_hash() const;

    friend bool operator==(const MaskArchive& a, const MaskArchive& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.samples_ == b.samples_ &&
               a.manifest_ == b.manifest_ && a.labels_ == b.labels_;
    }

private:
    void derive();

    ConceptRegistry manifest_;
    int width_ = 0;
    int height_ = 0;
    std::size_t samples_ = 0;
    std::map<SubsetId, std::vector<ConceptId>> labels_;
    bool sealed_ = false;
    std::map<ConceptId, MaskPlane> planes_;
    std::map<ConceptId, std::vector<ConceptGeometry>> geometry_;
};

/// OVCEMSK1 container. With `store_derived`, per-concept bitmasks are written
/// as a sidecar section and cross-checked on load; otherwise they are
/// recomputed.
void write_archive(const std::filesystem::path& path, const MaskArchive& archive, bool store_derived = false);
std::string encode_archive(const MaskArchive& archive, bool store_derived = false);

/// Throws VersionMismatch, CorruptArchive, PartitionViolation.
MaskArchive read_archive(const std::filesystem::path& path);
MaskArchive decode_archive(std::string_view bytes);

} // namespace ovce
