#include "ovce/mask_store.hpp"

#include "binary_io.hpp"
#include "ovce/error.hpp"
#include "ovce/hash.hpp"

#include <algorithm>
#include <set>

namespace ovce {

namespace {

constexpr char kMagic[8] = {'O', 'V', 'C', 'E', 'M', 'S', 'K', '1'};
constexpr std::uint32_t kFlagDerived = 1u;

std::uint32_t crc_of(std::string_view bytes) {
    return crc32({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

} // namespace

std::vector<std::pair<ConceptId, BinaryMask>> binarize_labelmap(const LabelMap& lm,
                                                                 const ConceptRegistry& reg) {
    const ConceptSubset& subset = reg.subset(lm.subset_id);
    std::vector<std::pair<ConceptId, BinaryMask>> out;
    std::map<ConceptId, std::size_t> slot;
    for (ConceptId id : subset.concept_ids) {
        slot[id] = out.size();
        out.emplace_back(id, BinaryMask(lm.width, lm.height));
    }
    for (int y = 0; y < lm.height; ++y)
        for (int x = 0; x < lm.width; ++x) {
            auto it = slot.find(lm.at(x, y));
            if (it == slot.end())
                throw UnknownConceptId("label map cell holds concept " + std::to_string(lm.at(x, y)) +
                                       " outside subset '" + subset.label + "'");
            out[it->second].second.set(x, y);
        }
    return out;
}

ConceptGeometry compute_geometry(const MaskView& m) {
    return {static_cast<std::uint32_t>(m.count()), bounding_box(m), largest_inscribed_rectangle(m)};
}

ConceptSampleStats compute_stats(const MaskView& m, const std::vector<std::pair<int, MaskView>>& act) {
    ConceptSampleStats st;
    const auto g = compute_geometry(m);
    st.size = g.size;
    st.bbox = g.bbox;
    st.inscribed = g.inscribed;
    for (const auto& [range, a] : act) {
        if (a.width != m.width || a.height != m.height)
            throw ShapeMismatch("activation mask for range " + std::to_string(range) + " has a different shape");
        st.ims[range] = static_cast<std::uint32_t>(kernels::serial::count_and(m.words, a.words));
    }
    return st;
}

MaskArchive::MaskArchive(ConceptRegistry manifest, int width, int height, std::size_t samples)
    : manifest_(std::move(manifest)), width_(width), height_(height), samples_(samples) {
    if (width < 1 || height < 1) throw ShapeMismatch("archive resolution must be positive");
    for (const auto& s : manifest_.subsets()) {
        // default every pixel to the subset's first concept
        labels_[s.id].assign(samples_ * pixels(), s.concept_ids.front());
    }
}

std::span<const ConceptId> MaskArchive::labels(SubsetId subset, std::size_t sample) const {
    auto it = labels_.find(subset);
    if (it == labels_.end()) throw UnknownConceptId("archive has no subset " + std::to_string(subset));
    return std::span<const ConceptId>(it->second).subspan(sample * pixels(), pixels());
}

std::span<ConceptId> MaskArchive::labels(SubsetId subset, std::size_t sample) {
    auto it = labels_.find(subset);
    if (it == labels_.end()) throw UnknownConceptId("archive has no subset " + std::to_string(subset));
    sealed_ = false;
    return std::span<ConceptId>(it->second).subspan(sample * pixels(), pixels());
}

void MaskArchive::set_labelmap(const LabelMap& lm) {
    if (lm.width != width_ || lm.height != height_)
        throw ShapeMismatch("label map shape differs from archive resolution");
    if (lm.sample_id >= samples_) throw ShapeMismatch("sample id out of range");
    auto dst = labels(lm.subset_id, lm.sample_id);
    std::copy(lm.data.begin(), lm.data.end(), dst.begin());
}

LabelMap MaskArchive::labelmap(SubsetId subset, std::size_t sample) const {
    auto src = labels(subset, sample);
    return {sample, subset, width_, height_, std::vector<ConceptId>(src.begin(), src.end())};
}

void MaskArchive::seal() {
    for (const auto& s : manifest_.subsets()) {
        const std::set<ConceptId> allowed(s.concept_ids.begin(), s.concept_ids.end());
        const auto& data = labels_.at(s.id);
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!allowed.count(data[i]))
                throw PartitionViolation("subset '" + s.label + "' sample " + std::to_string(i / pixels()) +
                                         " assigns a pixel to concept " + std::to_string(data[i]) +
                                         " outside the subset");
    }
    derive();
    sealed_ = true;
}

void MaskArchive::derive() {
    planes_.clear();
    geometry_.clear();
    std::vector<MaskPlane*> by_id(manifest_.next_id(), nullptr);
    for (const auto& c : manifest_.concepts())
        by_id[c.id] = &planes_.emplace(c.id, MaskPlane(samples_, width_, height_)).first->second;

    const auto n_samples = static_cast<std::ptrdiff_t>(samples_);
    const std::size_t px = pixels();
    for (const auto& s : manifest_.subsets()) {
        const auto& data = labels_.at(s.id);
#pragma omp parallel for num_threads(kernels::worker_count()) schedule(static)
        for (std::ptrdiff_t sample = 0; sample < n_samples; ++sample) {
            const ConceptId* row = data.data() + static_cast<std::size_t>(sample) * px;
            for (std::size_t i = 0; i < px; ++i) {
                auto words = by_id[row[i]]->sample_words(static_cast<std::size_t>(sample));
                words[i / kWordBits] |= Word{1} << (i % kWordBits);
            }
        }
    }

    std::vector<std::pair<ConceptId, std::size_t>> jobs;
    for (const auto& c : manifest_.concepts()) {
        geometry_[c.id].resize(samples_);
        for (std::size_t s = 0; s < samples_; ++s) jobs.emplace_back(c.id, s);
    }
    std::vector<std::vector<ConceptGeometry>*> geo_by_id(manifest_.next_id(), nullptr);
    for (auto& [id, g] : geometry_) geo_by_id[id] = &g;
    const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for num_threads(kernels::worker_count()) schedule(dynamic, 16)
    for (std::ptrdiff_t j = 0; j < n_jobs; ++j) {
        const auto [id, s] = jobs[j];
        (*geo_by_id[id])[s] = compute_geometry(by_id[id]->sample(s));
    }
}

const MaskPlane& MaskArchive::plane(ConceptId id) const {
    auto it = planes_.find(id);
    if (it == planes_.end()) throw UnknownConceptId("no mask for concept " + std::to_string(id));
    return it->second;
}

const std::vector<ConceptGeometry>& MaskArchive::geometry(ConceptId id) const {
    auto it = geometry_.find(id);
    if (it == geometry_.end()) throw UnknownConceptId("no geometry for concept " + std::to_string(id));
    return it->second;
}

MaskArchive MaskArchive::resampled(int width, int height) const {
    MaskArchive out(manifest_, width, height, samples_);
    if (width == width_ && height == height_) {
        out.labels_ = labels_;
    } else {
        std::vector<int> sx(width), sy(height);
        for (int x = 0; x < width; ++x) sx[x] = nearest_source_index(x, width, width_);
        for (int y = 0; y < height; ++y) sy[y] = nearest_source_index(y, height, height_);
        for (const auto& [subset, data] : labels_) {
            auto& dst = out.labels_[subset];
            for (std::size_t s = 0; s < samples_; ++s) {
                const ConceptId* src = data.data() + s * pixels();
                ConceptId* d = dst.data() + s * out.pixels();
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x)
                        d[static_cast<std::size_t>(y) * width + x] =
                            src[static_cast<std::size_t>(sy[y]) * width_ + sx[x]];
            }
        }
    }
    out.seal();
    return out;
}

MaskArchive MaskArchive::subset_archive(SubsetId subset) const {
    const ConceptSubset& s = manifest_.subset(subset);
    std::vector<Concept> concepts;
    for (ConceptId id : s.concept_ids) concepts.push_back(manifest_.concept_by_id(id));
    MaskArchive out(ConceptRegistry({s}, std::move(concepts)), width_, height_, samples_);
    out.labels_[subset] = labels_.at(subset);
    out.seal();
    return out;
}

MaskArchive MaskArchive::merge(const std::vector<const MaskArchive*>& parts) {
    if (parts.empty()) throw ShapeMismatch("nothing to merge");
    std::vector<ConceptSubset> subsets;
    std::vector<Concept> concepts;
    for (const MaskArchive* p : parts) {
        if (p->width_ != parts[0]->width_ || p->height_ != parts[0]->height_ ||
            p->samples_ != parts[0]->samples_)
            throw ShapeMismatch("merged archives must share resolution and sample count");
        subsets.insert(subsets.end(), p->manifest_.subsets().begin(), p->manifest_.subsets().end());
        concepts.insert(concepts.end(), p->manifest_.concepts().begin(), p->manifest_.concepts().end());
    }
    std::sort(subsets.begin(), subsets.end(),
              [](const ConceptSubset& a, const ConceptSubset& b) { return a.id < b.id; });
    MaskArchive out(ConceptRegistry(std::move(subsets), std::move(concepts)), parts[0]->width_,
                    parts[0]->height_, parts[0]->samples_);
    for (const MaskArchive* p : parts)
        for (const auto& [id, data] : p->labels_) out.labels_[id] = data;
    out.seal();
    return out;
}

std::string MaskArchive::content_hash() const { return ovce::content_hash(encode_archive(*this)); }

std::string encode_archive(const MaskArchive& archive, bool store_derived) {
    if (store_derived && !archive.sealed()) throw CorruptArchive("cannot store derived masks of an unsealed archive");
    detail::ByteWriter w;
    w.raw(kMagic, sizeof kMagic);
    const std::size_t header_start = w.size();
    w.u32(MaskArchive::kVersion);
    w.u32(static_cast<std::uint32_t>(archive.height()));
    w.u32(static_cast<std::uint32_t>(archive.width()));
    w.u32(static_cast<std::uint32_t>(archive.samples()));
    w.u32(store_derived ? kFlagDerived : 0u);
    w.str(archive.manifest().to_json().dump());
    w.u32(crc_of(std::string_view(w.bytes()).substr(header_start)));

    for (const auto& s : archive.manifest().subsets()) {
        for (std::size_t sample = 0; sample < archive.samples(); ++sample) {
            const std::size_t start = w.size();
            w.u32(static_cast<std::uint32_t>(s.id));
            w.u32(static_cast<std::uint32_t>(sample));
            auto lab = archive.labels(s.id, sample);
            w.raw(lab.data(), lab.size_bytes());
            w.u32(crc_of(std::string_view(w.bytes()).substr(start)));
        }
    }
    if (store_derived) {
        for (const auto& c : archive.manifest().concepts()) {
            const std::size_t start = w.size();
            w.u32(c.id);
            auto words = archive.plane(c.id).words();
            w.raw(words.data(), words.size_bytes());
            w.u32(crc_of(std::string_view(w.bytes()).substr(start)));
        }
    }
    return w.take();
}

void write_archive(const std::filesystem::path& path, const MaskArchive& archive, bool store_derived) {
    detail::write_file(path, encode_archive(archive, store_derived));
}

MaskArchive decode_archive(std::string_view bytes) {
    detail::ByteReader r(bytes);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kMagic)) throw CorruptArchive("bad magic, not an OVCEMSK1 archive");
    const std::size_t header_start = r.pos();
    const auto version = r.u32();
    if (version != MaskArchive::kVersion)
        throw VersionMismatch("archive version " + std::to_string(version) + ", expected " +
                              std::to_string(MaskArchive::kVersion));
    const auto height = r.u32();
    const auto width = r.u32();
    const auto samples = r.u32();
    const auto flags = r.u32();
    const std::string manifest_text = r.str();
    const std::size_t header_end = r.pos();
    if (r.u32() != crc_of(bytes.substr(header_start, header_end - header_start)))
        throw CorruptArchive("header checksum mismatch");
    if (flags & ~kFlagDerived) throw CorruptArchive("unknown header flags");

    ConceptRegistry manifest;
    try {
        manifest = ConceptRegistry::from_json(nlohmann::json::parse(manifest_text));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptArchive(std::string("manifest: ") + e.what());
    } catch (const ParseError& e) {
        throw CorruptArchive(std::string("manifest: ") + e.what());
    }
    if (width == 0 || height == 0 || width > 1u << 15 || height > 1u << 15)
        throw CorruptArchive("implausible resolution");
    if (static_cast<std::uint64_t>(samples) * width * height * sizeof(ConceptId) * manifest.subsets().size() >
        r.remaining())
        throw CorruptArchive("archive shorter than its header declares");

    MaskArchive archive(manifest, static_cast<int>(width), static_cast<int>(height), samples);
    const std::size_t px = archive.pixels();
    for (const auto& s : manifest.subsets()) {
        for (std::size_t sample = 0; sample < samples; ++sample) {
            const std::size_t start = r.pos();
            const auto sid = r.u32();
            const auto sidx = r.u32();
            if (sid != static_cast<std::uint32_t>(s.id) || sidx != sample)
                throw CorruptArchive("label map records out of order");
            auto dst = archive.labels(s.id, sample);
            r.raw(dst.data(), px * sizeof(ConceptId));
            const std::size_t end = r.pos();
            if (r.u32() != crc_of(bytes.substr(start, end - start)))
                throw CorruptArchive("checksum mismatch in label map of subset " + std::to_string(s.id) +
                                     " sample " + std::to_string(sample));
        }
    }

    std::map<ConceptId, MaskPlane> sidecar;
    if (flags & kFlagDerived) {
        for (const auto& c : manifest.concepts()) {
            const std::size_t start = r.pos();
            if (r.u32() != c.id) throw CorruptArchive("sidecar records out of order");
            MaskPlane p(samples, static_cast<int>(width), static_cast<int>(height));
            auto words = p.words();
            r.raw(words.data(), words.size_bytes());
            const std::size_t end = r.pos();
            if (r.u32() != crc_of(bytes.substr(start, end - start)))
                throw CorruptArchive("checksum mismatch in sidecar mask of concept " + std::to_string(c.id));
            sidecar.emplace(c.id, std::move(p));
        }
    }
    if (r.remaining() != 0) throw CorruptArchive("trailing bytes after archive");

    if (!sidecar.empty()) {
        const std::uint64_t full = px;
        for (const auto& s : manifest.subsets()) {
            for (std::size_t sample = 0; sample < samples; ++sample) {
                std::uint64_t total = 0;
                std::vector<Word> cover(sidecar.at(s.concept_ids.front()).stride(), 0);
                for (ConceptId id : s.concept_ids) {
                    auto w = sidecar.at(id).sample_words(sample);
                    total += kernels::serial::popcount(w);
                    kernels::serial::or_into(cover, w);
                }
                if (total != full || kernels::serial::popcount(cover) != full)
                    throw PartitionViolation("sidecar masks of subset '" + s.label + "' sample " +
                                             std::to_string(sample) + " do not partition the pixels");
            }
        }
    }

    archive.seal();
    for (const auto& [id, p] : sidecar)
        if (!(p == archive.plane(id)))
            throw CorruptArchive("sidecar mask of concept " + std::to_string(id) + " disagrees with label maps");
    return archive;
}

MaskArchive read_archive(const std::filesystem::path& path) { return decode_archive(detail::read_file(path)); }

} // namespace ovce
