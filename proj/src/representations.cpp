#include "tspsens/representations.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tspsens/error.hpp"
#include "tspsens/io.hpp"
#include "tspsens/rng.hpp"

namespace tspsens {

ActivationCache::ActivationCache(std::string dataset_ref, std::string layer_name, std::size_t dim)
    : dataset_ref_(std::move(dataset_ref)), layer_name_(std::move(layer_name)), dim_(dim) {
    if (dim_ == 0) throw ValidationError("activation dimension must be positive");
}

void ActivationCache::add(std::string id, Matrix block) {
    if (index_.contains(id)) throw ValidationError("duplicate activation block for '" + id + "'");
    if (block.cols != dim_) {
        throw ValidationError("activation block for '" + id + "' has width " + std::to_string(block.cols) +
                              ", cache dimension is " + std::to_string(dim_));
    }
    for (double v : block.data) {
        if (!std::isfinite(v)) throw ValidationError("activation block for '" + id + "' contains non-finite values");
    }
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    blocks_.push_back(std::move(block));
}

const Matrix& ActivationCache::block(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw AlignmentError("activation cache has no block for instance '" + id + "'");
    return blocks_[it->second];
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view take(std::size_t count, const char* what) {
        if (bytes_.size() - pos_ < count) {
            throw FormatError(std::string("activation cache truncated while reading ") + what);
        }
        const auto out = bytes_.substr(pos_, count);
        pos_ += count;
        return out;
    }

    std::uint32_t u32(const char* what) {
        const auto b = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }

    double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_activation_cache(const ActivationCache& cache) {
    std::string out(kCacheMagic, sizeof(kCacheMagic));
    put_u32(out, kCacheVersion);
    put_u32(out, static_cast<std::uint32_t>(cache.instance_count()));
    put_u32(out, static_cast<std::uint32_t>(cache.dim()));
    put_u32(out, static_cast<std::uint32_t>(cache.layer_name().size()));
    out += cache.layer_name();
    for (const auto& id : cache.ids()) {
        const Matrix& m = cache.block(id);
        put_u32(out, static_cast<std::uint32_t>(id.size()));
        out += id;
        put_u32(out, static_cast<std::uint32_t>(m.rows));
        for (double v : m.data) put_f32(out, v);
    }
    return out;
}

ActivationCache decode_activation_cache(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(sizeof(kCacheMagic), "magic") != std::string_view(kCacheMagic, sizeof(kCacheMagic))) {
        throw FormatError("bad activation cache magic");
    }
    const auto version = r.u32("version");
    if (version != kCacheVersion) throw FormatError("unsupported activation cache version " + std::to_string(version));
    const auto count = r.u32("instance_count");
    const auto dim = r.u32("dim");
    const auto name_len = r.u32("layer_name_len");
    if (dim == 0) throw FormatError("activation cache declares d = 0");
    const std::string layer(r.take(name_len, "layer_name"));

    ActivationCache cache("", layer, dim);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto id_len = r.u32("id_len");
        std::string id(r.take(id_len, "instance id"));
        const auto n = r.u32("n");
        Matrix m(n, dim);
        for (double& v : m.data) {
            v = r.f32("embedding values");
            if (!std::isfinite(v)) throw FormatError("non-finite embedding value for instance '" + id + "'");
        }
        try {
            cache.add(std::move(id), std::move(m));
        } catch (const ValidationError& e) {
            throw FormatError(e.what());
        }
    }
    if (!r.done()) throw FormatError("trailing bytes after the last activation record");
    return cache;
}

std::filesystem::path cache_manifest_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".manifest";
    return p;
}

void write_activation_cache(const ActivationCache& cache, const std::filesystem::path& path) {
    const std::string bytes = encode_activation_cache(cache);
    io::write_file(path, bytes);
    std::ostringstream m;
    m << "dataset_ref=" << cache.dataset_ref() << '\n'
      << "layer_name=" << cache.layer_name() << '\n'
      << "d=" << cache.dim() << '\n'
      << "instance_count=" << cache.instance_count() << '\n'
      << "checksum=" << io::checksum_bytes(bytes) << '\n';
    io::write_file(cache_manifest_path(path), m.str());
}

ActivationCache read_activation_cache(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    ActivationCache cache = decode_activation_cache(bytes);
    const auto manifest = cache_manifest_path(path);
    if (std::filesystem::exists(manifest)) {
        for (const auto& line : io::read_lines(manifest)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const auto key = line.substr(0, eq);
            const auto value = line.substr(eq + 1);
            if (key == "dataset_ref") cache.set_dataset_ref(value);
            if (key == "checksum" && value != io::checksum_bytes(bytes)) {
                throw FormatError("activation cache " + path.string() + " does not match its manifest checksum");
            }
        }
    }
    return cache;
}

void validate_cache_alignment(const ActivationCache& cache, std::span<const Instance> dataset) {
    for (const auto& inst : dataset) {
        if (!cache.contains(inst.id())) {
            throw AlignmentError("activation cache has no block for instance '" + inst.id() + "'");
        }
        if (cache.block(inst.id()).rows != inst.size()) {
            throw AlignmentError("activation block for '" + inst.id() + "' has " +
                                 std::to_string(cache.block(inst.id()).rows) + " rows, instance has n=" +
                                 std::to_string(inst.size()));
        }
    }
}

ActivationCache synth_random_embeddings(std::span<const Instance> dataset, std::size_t dim, std::uint64_t seed) {
    ActivationCache cache("", kRandomControlLayer, dim);
    Rng rng(seed);
    for (const auto& inst : dataset) {
        Matrix m(inst.size(), dim);
        // Round through binary32 so the in-memory cache equals its file image.
        for (double& v : m.data) v = static_cast<double>(static_cast<float>(rng.normal()));
        cache.add(inst.id(), std::move(m));
    }
    return cache;
}

Matrix build_candidate_features(const Matrix& h, Task task, std::span<const int> base_tour) {
    if (task == Task::removal) return h;
    if (base_tour.size() != h.rows) {
        throw ValidationError("edge features need a tour over all " + std::to_string(h.rows) + " nodes");
    }
    const std::size_t d = h.cols;
    const std::size_t n = h.rows;
    Matrix f(n, 3 * d);
    for (std::size_t t = 0; t < n; ++t) {
        const auto u = static_cast<std::size_t>(base_tour[t]);
        const auto v = static_cast<std::size_t>(base_tour[(t + 1) % n]);
        if (u >= n || v >= n) throw ValidationError("tour index out of range for edge features");
        for (std::size_t k = 0; k < d; ++k) {
            f(t, k) = h(u, k);
            f(t, d + k) = h(v, k);
            f(t, 2 * d + k) = std::abs(h(u, k) - h(v, k));
        }
    }
    return f;
}

Matrix build_candidate_features(const ActivationCache& cache, const Instance& inst, Task task,
                                std::span<const int> base_tour) {
    const Matrix& h = cache.block(inst.id());
    if (h.rows != inst.size()) {
        throw AlignmentError("activation block for '" + inst.id() + "' has " + std::to_string(h.rows) +
                             " rows, instance has n=" + std::to_string(inst.size()));
    }
    return build_candidate_features(h, task, base_tour);
}

}  // namespace tspsens
