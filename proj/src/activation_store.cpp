#include "ovce/activation_store.hpp"

#include "binary_io.hpp"
#include "ovce/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace ovce {

namespace {

constexpr char kMagic[8] = {'O', 'V', 'C', 'E', 'A', 'C', 'T', '1'};

// align-corners source coordinate for target index i
double source_coord(int i, int dst_len, int src_len) {
    if (dst_len <= 1 || src_len <= 1) return 0.0;
    return static_cast<double>(i) * (src_len - 1) / (dst_len - 1);
}

struct Fit {
    std::vector<double> centroids;
    long double inertia = 0;
};

// Lloyd iterations on sorted data; clusters are contiguous index ranges split
// at centroid midpoints, so each step is O(k log n) with prefix sums.
class SortedKMeans {
public:
    explicit SortedKMeans(std::vector<double> sorted) : v_(std::move(sorted)) {
        s1_.resize(v_.size() + 1, 0);
        s2_.resize(v_.size() + 1, 0);
        for (std::size_t i = 0; i < v_.size(); ++i) {
            s1_[i + 1] = s1_[i] + v_[i];
            s2_[i + 1] = s2_[i] + static_cast<long double>(v_[i]) * v_[i];
        }
    }

    std::size_t distinct() const {
        std::size_t n = v_.empty() ? 0 : 1;
        for (std::size_t i = 1; i < v_.size(); ++i) n += v_[i] != v_[i - 1];
        return n;
    }

    Fit run(int k, std::mt19937_64& rng, int max_iter, double tol) const {
        std::vector<double> c = seed_plus_plus(k, rng);
        const double spread = v_.back() - v_.front();
        for (int it = 0; it < max_iter; ++it) {
            std::sort(c.begin(), c.end());
            const auto cuts = splits(c);
            double shift = 0;
            for (int j = 0; j < k; ++j) {
                const std::size_t a = cuts[j], b = cuts[j + 1];
                if (b == a) continue;
                const double mean = static_cast<double>((s1_[b] - s1_[a]) / (b - a));
                shift = std::max(shift, std::abs(mean - c[j]));
                c[j] = mean;
            }
            if (shift <= tol * std::max(1.0, spread)) break;
        }
        std::sort(c.begin(), c.end());
        return {c, inertia(c)};
    }

private:
    std::vector<std::size_t> splits(const std::vector<double>& c) const {
        std::vector<std::size_t> cuts(c.size() + 1);
        cuts.front() = 0;
        cuts.back() = v_.size();
        for (std::size_t j = 1; j < c.size(); ++j) {
            const double mid = 0.5 * (c[j - 1] + c[j]);
            cuts[j] = static_cast<std::size_t>(std::lower_bound(v_.begin(), v_.end(), mid) - v_.begin());
            cuts[j] = std::max(cuts[j], cuts[j - 1]);
        }
        return cuts;
    }

    long double inertia(const std::vector<double>& c) const {
        const auto cuts = splits(c);
        long double total = 0;
        for (std::size_t j = 0; j < c.size(); ++j) {
            const std::size_t a = cuts[j], b = cuts[j + 1];
            const long double n = static_cast<long double>(b - a);
            total += (s2_[b] - s2_[a]) - 2.0L * c[j] * (s1_[b] - s1_[a]) + n * c[j] * c[j];
        }
        return total;
    }

    std::vector<double> seed_plus_plus(int k, std::mt19937_64& rng) const {
        std::vector<double> c;
        std::uniform_int_distribution<std::size_t> pick(0, v_.size() - 1);
        c.push_back(v_[pick(rng)]);
        std::vector<double> d2(v_.size());
        for (std::size_t i = 0; i < v_.size(); ++i) d2[i] = (v_[i] - c[0]) * (v_[i] - c[0]);
        while (static_cast<int>(c.size()) < k) {
            double total = 0;
            for (double d : d2) total += d;
            std::uniform_real_distribution<double> u(0.0, total);
            const double target = u(rng);
            double acc = 0;
            std::size_t chosen = v_.size() - 1;
            for (std::size_t i = 0; i < v_.size(); ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0) {
                    chosen = i;
                    break;
                }
            }
            // guard against landing on an existing centroid through rounding
            while (d2[chosen] == 0 && chosen > 0) --chosen;
            const double next = v_[chosen];
            c.push_back(next);
            for (std::size_t i = 0; i < v_.size(); ++i)
                d2[i] = std::min(d2[i], (v_[i] - next) * (v_[i] - next));
        }
        return c;
    }

    std::vector<double> v_;
    std::vector<long double> s1_;
    std::vector<long double> s2_;
};

} // namespace

ActivationMap bilinear_resize(const ActivationMap& a, int width, int height) {
    if (a.width < 1 || a.height < 1 || a.values.empty()) throw ShapeMismatch("cannot resize an empty activation map");
    if (width < 1 || height < 1) throw ShapeMismatch("resize target must be at least 1x1");
    if (width == a.width && height == a.height) return a;

    ActivationMap out{a.neuron_id, a.sample_id, width, height,
                      std::vector<float>(static_cast<std::size_t>(width) * height)};
    for (int y = 0; y < height; ++y) {
        const double fy = source_coord(y, height, a.height);
        const int y0 = std::min(static_cast<int>(fy), a.height - 1);
        const int y1 = std::min(y0 + 1, a.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = source_coord(x, width, a.width);
            const int x0 = std::min(static_cast<int>(fx), a.width - 1);
            const int x1 = std::min(x0 + 1, a.width - 1);
            const double wx = fx - x0;
            const double top = (1 - wx) * a.at(x0, y0) + wx * a.at(x1, y0);
            const double bottom = (1 - wx) * a.at(x0, y1) + wx * a.at(x1, y1);
            out.values[static_cast<std::size_t>(y) * width + x] = static_cast<float>((1 - wy) * top + wy * bottom);
        }
    }
    return out;
}

nlohmann::json to_json(const ActivationRange& r) {
    auto bound = [](double v) -> nlohmann::json {
        if (std::isinf(v)) return nullptr;
        return v;
    };
    return {{"range_id", r.range_id}, {"lo", bound(r.lo)}, {"hi", bound(r.hi)}};
}

ActivationRange range_from_json(const nlohmann::json& j) {
    ActivationRange r;
    r.range_id = j.at("range_id").get<int>();
    r.lo = j.at("lo").is_null() ? -std::numeric_limits<double>::infinity() : j.at("lo").get<double>();
    r.hi = j.at("hi").is_null() ? std::numeric_limits<double>::infinity() : j.at("hi").get<double>();
    return r;
}

std::vector<double> kmeans_1d(std::span<const float> values, const ClusterConfig& cfg) {
    if (cfg.k < 1) throw DegenerateValues("k must be at least 1");
    std::mt19937_64 rng(cfg.seed);

    std::vector<double> data;
    auto keep = [&](float v) { return !cfg.nonzero_only || v != 0.0f; };
    std::size_t eligible = 0;
    for (float v : values) {
        if (!std::isfinite(v)) throw DegenerateValues("activation values must be finite");
        eligible += keep(v);
    }
    if (eligible <= cfg.sample_cap) {
        data.reserve(eligible);
        for (float v : values)
            if (keep(v)) data.push_back(v);
    } else {
        std::vector<float> pool;
        pool.reserve(eligible);
        for (float v : values)
            if (keep(v)) pool.push_back(v);
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        data.reserve(cfg.sample_cap);
        for (std::size_t i = 0; i < cfg.sample_cap; ++i) data.push_back(pool[pick(rng)]);
    }
    std::sort(data.begin(), data.end());

    SortedKMeans km(std::move(data));
    const std::size_t distinct = km.distinct();
    if (distinct < static_cast<std::size_t>(cfg.k))
        throw DegenerateValues(std::to_string(distinct) + " distinct values, need at least " + std::to_string(cfg.k));

    Fit best;
    bool have = false;
    for (int r = 0; r < std::max(1, cfg.n_init); ++r) {
        Fit f = km.run(cfg.k, rng, cfg.max_iter, cfg.tol);
        if (!have || f.inertia < best.inertia) {
            best = std::move(f);
            have = true;
        }
    }
    return best.centroids;
}

std::vector<ActivationRange> ranges_from_centroids(const std::vector<double>& centroids) {
    std::vector<ActivationRange> out;
    for (std::size_t j = 0; j < centroids.size(); ++j) {
        ActivationRange r;
        r.range_id = static_cast<int>(j) + 1;
        if (j > 0) r.lo = 0.5 * (centroids[j - 1] + centroids[j]);
        if (j + 1 < centroids.size()) r.hi = 0.5 * (centroids[j] + centroids[j + 1]);
        out.push_back(r);
    }
    return out;
}

std::vector<ActivationRange> cluster_ranges(std::span<const float> values, const ClusterConfig& cfg) {
    return ranges_from_centroids(kmeans_1d(values, cfg));
}

BinaryMask binarize_activations(const ActivationMap& a, const ActivationRange& r) {
    BinaryMask m(a.width, a.height);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            if (r.contains(a.at(x, y))) m.set(x, y);
    return m;
}

void BinarizedActivations::refresh_sizes() {
    sample_sizes.assign(mask.samples(), 0);
    kernels::per_sample_popcount(mask.words(), mask.stride(), sample_sizes);
    total = 0;
    for (auto s : sample_sizes) total += s;
}

ActivationTensor::ActivationTensor(std::size_t neurons, std::size_t samples, int width, int height)
    : neurons_(neurons), samples_(samples), width_(width), height_(height),
      values_(neurons * samples * static_cast<std::size_t>(width) * height, 0.0f) {}

std::span<const float> ActivationTensor::map_values(std::size_t neuron, std::size_t sample) const {
    const std::size_t px = static_cast<std::size_t>(width_) * height_;
    return std::span<const float>(values_).subspan((neuron * samples_ + sample) * px, px);
}

std::span<float> ActivationTensor::map_values(std::size_t neuron, std::size_t sample) {
    const std::size_t px = static_cast<std::size_t>(width_) * height_;
    return std::span<float>(values_).subspan((neuron * samples_ + sample) * px, px);
}

ActivationMap ActivationTensor::map(std::size_t neuron, std::size_t sample) const {
    auto v = map_values(neuron, sample);
    return {neuron, sample, width_, height_, std::vector<float>(v.begin(), v.end())};
}

void write_activations(const std::filesystem::path& path, const ActivationTensor& t) {
    detail::ByteWriter w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(ActivationTensor::kVersion);
    w.u32(static_cast<std::uint32_t>(t.neurons()));
    w.u32(static_cast<std::uint32_t>(t.samples()));
    w.u32(static_cast<std::uint32_t>(t.height()));
    w.u32(static_cast<std::uint32_t>(t.width()));
    w.raw(t.values().data(), t.values().size_bytes());
    detail::write_file(path, w.bytes());

    nlohmann::json side;
    side["samples"] = nlohmann::json::array();
    for (std::size_t s = 0; s < t.samples(); ++s)
        side["samples"].push_back(
            {{"index", s}, {"id", s < t.sample_ids.size() ? t.sample_ids[s] : std::to_string(s)}});
    std::ofstream(path.string() + ".json") << side.dump(2) << '\n';
}

ActivationTensor read_activations(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    detail::ByteReader r(bytes);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kMagic)) throw CorruptArchive("bad magic, not an OVCEACT1 file");
    const auto version = r.u32();
    if (version != ActivationTensor::kVersion)
        throw VersionMismatch("activation file version " + std::to_string(version));
    const auto neurons = r.u32();
    const auto samples = r.u32();
    const auto height = r.u32();
    const auto width = r.u32();
    const std::uint64_t count = static_cast<std::uint64_t>(neurons) * samples * height * width;
    if (count * sizeof(float) != r.remaining())
        throw CorruptArchive("activation payload size does not match header");
    ActivationTensor t(neurons, samples, static_cast<int>(width), static_cast<int>(height));
    for (std::size_t n = 0; n < neurons; ++n)
        for (std::size_t s = 0; s < samples; ++s) {
            auto dst = t.map_values(n, s);
            r.raw(dst.data(), dst.size_bytes());
        }

    const std::filesystem::path side = path.string() + ".json";
    t.sample_ids.resize(samples);
    for (std::size_t s = 0; s < samples; ++s) t.sample_ids[s] = std::to_string(s);
    if (std::filesystem::exists(side)) {
        try {
            auto j = nlohmann::json::parse(detail::read_file(side));
            for (const auto& e : j.at("samples")) {
                const auto idx = e.at("index").get<std::size_t>();
                if (idx < samples) t.sample_ids[idx] = e.at("id").get<std::string>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw CorruptArchive(side.string() + ": " + e.what());
        }
    }
    return t;
}

NeuronActivations binarize_neuron(const ActivationTensor& t, std::size_t neuron, int width, int height,
                                  const ClusterConfig& cfg) {
    const std::size_t px = static_cast<std::size_t>(width) * height;
    std::vector<float> resized(t.samples() * px);
    for (std::size_t s = 0; s < t.samples(); ++s) {
        auto m = bilinear_resize(t.map(neuron, s), width, height);
        std::copy(m.values.begin(), m.values.end(), resized.begin() + static_cast<std::ptrdiff_t>(s * px));
    }

    NeuronActivations out;
    out.neuron_id = neuron;
    ClusterConfig c = cfg;
    c.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * (neuron + 1));
    out.ranges = cluster_ranges(resized, c);
    for (const auto& r : out.ranges) {
        BinarizedActivations b;
        b.neuron_id = neuron;
        b.range = r;
        b.mask = MaskPlane(t.samples(), width, height);
        for (std::size_t s = 0; s < t.samples(); ++s) {
            const float* v = resized.data() + s * px;
            auto words = b.mask.sample_words(s);
            for (std::size_t i = 0; i < px; ++i)
                if (r.contains(v[i])) words[i / kWordBits] |= Word{1} << (i % kWordBits);
        }
        b.refresh_sizes();
        out.binarized.push_back(std::move(b));
    }
    return out;
}

} // namespace ovce
